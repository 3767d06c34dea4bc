#include "tlvd/records.hpp"

#include "tlvd/errors.hpp"

namespace tlvd {

using nlohmann::json;

std::string to_string(Source source) {
    switch (source) {
        case Source::Arxiv: return "arxiv";
        case Source::Wikipedia: return "wikipedia";
        case Source::Local: return "local";
    }
    return "local";
}

Source parse_source(const std::string& name) {
    if (name == "arxiv") return Source::Arxiv;
    if (name == "wikipedia") return Source::Wikipedia;
    if (name == "local") return Source::Local;
    throw ParseError("unknown evidence source '" + name + "'");
}

namespace {

json edge_json(const graph::Edge& e) { return {{"from", e.from}, {"to", e.to}, {"oriented", e.oriented}}; }

graph::Edge edge_from(const json& j) { return {j.at("from").get<std::string>(), j.at("to").get<std::string>(), j.at("oriented").get<bool>()}; }

template <typename F>
auto guarded(const char* what, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed ") + what + ": " + e.what());
    }
}

}  // namespace

json to_json(const Document& d) {
    json j = {{"source", to_string(d.source)},
              {"doc_id", d.doc_id},
              {"title", d.title},
              {"snippet", d.snippet},
              {"retrieval_score", d.retrieval_score}};
    j["url"] = d.url ? json(*d.url) : json(nullptr);
    return j;
}

Document document_from_json(const json& j) {
    return guarded("document", [&] {
        Document d;
        d.source = parse_source(j.at("source").get<std::string>());
        d.doc_id = j.at("doc_id").get<std::string>();
        d.title = j.at("title").get<std::string>();
        d.snippet = j.at("snippet").get<std::string>();
        if (j.contains("url") && !j.at("url").is_null()) d.url = j.at("url").get<std::string>();
        d.retrieval_score = j.at("retrieval_score").get<double>();
        return d;
    });
}

json to_json(const EvidenceRecord& r) {
    json docs = json::array();
    for (const auto& d : r.documents) docs.push_back(to_json(d));
    return {{"record_id", r.record_id}, {"latent_id", r.latent_id},   {"claim", r.claim},
            {"edge", edge_json(r.edge)}, {"query", r.query},           {"documents", docs},
            {"document_support", r.document_support},                  {"searched", r.searched},
            {"supports", r.supports},    {"support_score", r.support_score}, {"judge_fallback", r.judge_fallback}};
}

EvidenceRecord evidence_from_json(const json& j) {
    return guarded("evidence record", [&] {
        EvidenceRecord r;
        r.record_id = j.at("record_id").get<std::string>();
        r.latent_id = j.at("latent_id").get<std::string>();
        r.claim = j.at("claim").get<std::string>();
        r.edge = edge_from(j.at("edge"));
        r.query = j.at("query").get<std::string>();
        for (const auto& d : j.at("documents")) r.documents.push_back(document_from_json(d));
        r.document_support = j.at("document_support").get<std::vector<double>>();
        r.searched = j.at("searched").get<bool>();
        r.supports = j.at("supports").get<bool>();
        r.support_score = j.at("support_score").get<double>();
        r.judge_fallback = j.value("judge_fallback", false);
        if (r.document_support.size() != r.documents.size())
            throw ParseError("evidence record " + r.record_id + " has mismatched support scores");
        return r;
    });
}

json to_json(const LatentHypothesis& h) {
    return {{"latent_id", h.latent_id}, {"name", h.proposed_name}, {"semantics", h.semantics},
            {"evidence", h.evidence},   {"confidence", h.confidence}, {"fallback", h.fallback}};
}

LatentHypothesis hypothesis_from_json(const json& j) {
    return guarded("hypothesis", [&] {
        LatentHypothesis h;
        h.latent_id = j.at("latent_id").get<std::string>();
        h.proposed_name = j.at("name").get<std::string>();
        h.semantics = j.value("semantics", std::string());
        h.evidence = j.value("evidence", std::vector<std::string>{});
        h.confidence = j.value("confidence", 0.0);
        h.fallback = j.value("fallback", false);
        return h;
    });
}

json to_json(const std::vector<EvidenceRecord>& records) {
    json out = json::array();
    for (const auto& r : records) out.push_back(to_json(r));
    return out;
}

std::vector<EvidenceRecord> evidence_list_from_json(const json& j) {
    if (!j.is_array()) throw ParseError("evidence document must be a JSON array");
    std::vector<EvidenceRecord> out;
    for (const auto& r : j) out.push_back(evidence_from_json(r));
    return out;
}

json to_json(const std::vector<LatentHypothesis>& hypotheses) {
    json out = json::array();
    for (const auto& h : hypotheses) out.push_back(to_json(h));
    return out;
}

std::vector<LatentHypothesis> hypothesis_list_from_json(const json& j) {
    if (!j.is_array()) throw ParseError("hypotheses document must be a JSON array");
    std::vector<LatentHypothesis> out;
    for (const auto& h : j) out.push_back(hypothesis_from_json(h));
    return out;
}

std::string dump_artifact(const json& j) { return j.dump(2) + "\n"; }

}  // namespace tlvd
