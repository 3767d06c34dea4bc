#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlvd/causal_graph.hpp"
#include "tlvd/records.hpp"

namespace tlvd::metrics {

struct GroundTruth {
    std::map<std::string, std::vector<std::string>> accepted;  // latent id -> accepted names
    std::map<std::string, std::vector<double>> reference;      // optional reference embeddings

    /// Either {"L1": ["name", ...]} or {"L1": {"names": [...], "embedding": [...]}}.
    static GroundTruth from_json(const nlohmann::json& doc);
    static GroundTruth load(const std::string& path);
    /// Throws ConfigError for ids that are not latent variables of `graph`.
    void validate(const graph::CausalGraph& graph) const;
};

struct MatcherConfig {
    double threshold = 0.8;
    /// Embeds a proposed name for the similarity fallback; unused when empty.
    std::function<std::vector<double>(const std::string&)> embed;
};

struct LatentVerdict {
    std::string latent_id;
    std::string proposed_name;
    bool matched = false;
    std::string rule;  // "name", "embedding" or "none"
    double similarity = 0.0;
};

LatentVerdict match(const LatentHypothesis& h, const GroundTruth& truth, const MatcherConfig& matcher);

/// matched / total. UsageError on an empty set, ConfigError for a latent without ground truth.
double acc(const std::vector<LatentHypothesis>& hypotheses, const GroundTruth& truth, const MatcherConfig& matcher,
           std::vector<LatentVerdict>* verdicts = nullptr);

/// n / EG, 0 when EG = 0. InvariantError when n > EG.
double cacc(std::size_t n, std::size_t eg);
/// n / EA, 0 when EA = 0. InvariantError when n > EA.
double ecit(std::size_t n, std::size_t ea);

struct EdgeCounts {
    std::size_t n = 0;   // edges judged supported
    std::size_t eg = 0;  // edges whose search returned documents
    std::size_t ea = 0;  // edges incident to a latent
};

/// Counts each latent-incident edge once: searched or supported if any record for it is.
EdgeCounts count_edges(const std::vector<EvidenceRecord>& records, const graph::CausalGraph& graph);

struct MetricsReport {
    double acc = 0.0;
    double cacc = 0.0;
    double ecit = 0.0;
    std::size_t matched = 0;
    std::size_t total = 0;
    EdgeCounts counts;
    bool cacc_degenerate = false;  // EG = 0
    bool ecit_degenerate = false;  // EA = 0
    std::vector<LatentVerdict> per_latent;

    bool operator==(const MetricsReport&) const;
};

MetricsReport evaluate(const std::vector<LatentHypothesis>& hypotheses, const std::vector<EvidenceRecord>& records,
                       const graph::CausalGraph& graph, const GroundTruth& truth, const MatcherConfig& matcher);

nlohmann::json to_json(const MetricsReport& r);
MetricsReport report_from_json(const nlohmann::json& j);

}  // namespace tlvd::metrics
