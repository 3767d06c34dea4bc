#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlvd/causal_graph.hpp"

namespace tlvd {

enum class Source { Arxiv, Wikipedia, Local };

std::string to_string(Source source);
Source parse_source(const std::string& name);

struct Document {
    Source source = Source::Local;
    std::string doc_id;
    std::string title;
    std::string snippet;
    std::optional<std::string> url;
    double retrieval_score = 0.0;
};

/// Retrieved support for one latent-incident edge under one proposed latent name.
struct EvidenceRecord {
    std::string record_id;
    std::string latent_id;
    std::string claim;  // proposed latent name the query was built from
    graph::Edge edge;
    std::string query;
    std::vector<Document> documents;     // at most top_k, best support first
    std::vector<double> document_support;  // parallel to documents
    bool searched = false;  // at least one source returned documents
    bool supports = false;
    double support_score = 0.0;
    bool judge_fallback = false;  // lexical heuristic used after a judge failure
};

struct LatentHypothesis {
    std::string latent_id;
    std::string proposed_name;
    std::string semantics;
    std::vector<std::string> evidence;  // EvidenceRecord ids
    double confidence = 0.0;
    bool fallback = false;  // coordinator failed; highest-confidence executor answer used
};

nlohmann::json to_json(const Document& d);
Document document_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EvidenceRecord& r);
EvidenceRecord evidence_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LatentHypothesis& h);
LatentHypothesis hypothesis_from_json(const nlohmann::json& j);

nlohmann::json to_json(const std::vector<EvidenceRecord>& records);
std::vector<EvidenceRecord> evidence_list_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<LatentHypothesis>& hypotheses);
std::vector<LatentHypothesis> hypothesis_list_from_json(const nlohmann::json& j);

/// Pretty-printed JSON with a trailing newline; the format used for every artifact.
std::string dump_artifact(const nlohmann::json& j);

}  // namespace tlvd
