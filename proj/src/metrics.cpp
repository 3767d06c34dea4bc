#include "tlvd/metrics.hpp"

#include <fstream>
#include <set>

#include "tlvd/errors.hpp"
#include "tlvd/numerics.hpp"
#include "tlvd/text.hpp"

namespace tlvd::metrics {

using nlohmann::json;

GroundTruth GroundTruth::from_json(const json& doc) {
    if (!doc.is_object()) throw ParseError("ground truth must be a JSON object");
    GroundTruth t;
    try {
        for (const auto& [id, v] : doc.items()) {
            if (v.is_array()) {
                t.accepted[id] = v.get<std::vector<std::string>>();
            } else {
                t.accepted[id] = v.at("names").get<std::vector<std::string>>();
                if (v.contains("embedding")) t.reference[id] = v.at("embedding").get<std::vector<double>>();
            }
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed ground truth: ") + e.what());
    }
    return t;
}

GroundTruth GroundTruth::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open ground truth " + path);
    try {
        return from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        throw ParseError("ground truth " + path + " is not valid JSON: " + e.what());
    }
}

void GroundTruth::validate(const graph::CausalGraph& graph) const {
    for (const auto& [id, names] : accepted)
        if (!graph.contains(id) || !graph.variable(id).is_latent())
            throw ConfigError("ground truth names '" + id + "', which is not a latent variable");
}

LatentVerdict match(const LatentHypothesis& h, const GroundTruth& truth, const MatcherConfig& matcher) {
    auto it = truth.accepted.find(h.latent_id);
    if (it == truth.accepted.end()) throw ConfigError("no ground truth for latent " + h.latent_id);
    LatentVerdict v{h.latent_id, h.proposed_name, false, "none", 0.0};
    const auto name = text::normalize_name(h.proposed_name);
    for (const auto& accepted : it->second)
        if (!name.empty() && text::normalize_name(accepted) == name) {
            v.matched = true;
            v.rule = "name";
            v.similarity = 1.0;
            return v;
        }
    auto ref = truth.reference.find(h.latent_id);
    if (matcher.embed && ref != truth.reference.end()) {
        const auto e = matcher.embed(h.proposed_name);
        if (e.size() == ref->second.size()) {
            v.similarity = num::cosine_similarity(e, ref->second);
            if (v.similarity >= matcher.threshold) {
                v.matched = true;
                v.rule = "embedding";
            }
        }
    }
    return v;
}

double acc(const std::vector<LatentHypothesis>& hypotheses, const GroundTruth& truth, const MatcherConfig& matcher,
           std::vector<LatentVerdict>* verdicts) {
    if (hypotheses.empty()) throw UsageError("ACC is undefined for an empty set of latent variables");
    std::size_t hits = 0;
    for (const auto& h : hypotheses) {
        auto v = match(h, truth, matcher);
        hits += v.matched;
        if (verdicts) verdicts->push_back(std::move(v));
    }
    return static_cast<double>(hits) / static_cast<double>(hypotheses.size());
}

double cacc(std::size_t n, std::size_t eg) {
    if (n > eg) throw InvariantError("supported edges (" + std::to_string(n) + ") exceed searched edges (" + std::to_string(eg) + ")");
    return eg == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(eg);
}

double ecit(std::size_t n, std::size_t ea) {
    if (n > ea) throw InvariantError("supported edges (" + std::to_string(n) + ") exceed latent-incident edges (" + std::to_string(ea) + ")");
    return ea == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(ea);
}

EdgeCounts count_edges(const std::vector<EvidenceRecord>& records, const graph::CausalGraph& graph) {
    const auto incident = graph::latent_incident_edges(graph);
    EdgeCounts c;
    c.ea = incident.size();
    for (const auto& e : incident) {
        bool searched = false, supported = false;
        for (const auto& r : records)
            if (r.edge == e) {
                searched = searched || r.searched;
                supported = supported || r.supports;
            }
        c.eg += searched;
        c.n += supported;
    }
    return c;
}

bool MetricsReport::operator==(const MetricsReport& o) const { return to_json(*this) == to_json(o); }

MetricsReport evaluate(const std::vector<LatentHypothesis>& hypotheses, const std::vector<EvidenceRecord>& records,
                       const graph::CausalGraph& graph, const GroundTruth& truth, const MatcherConfig& matcher) {
    MetricsReport r;
    r.acc = acc(hypotheses, truth, matcher, &r.per_latent);
    r.total = hypotheses.size();
    for (const auto& v : r.per_latent) r.matched += v.matched;
    r.counts = count_edges(records, graph);
    r.cacc = cacc(r.counts.n, r.counts.eg);
    r.ecit = ecit(r.counts.n, r.counts.ea);
    r.cacc_degenerate = r.counts.eg == 0;
    r.ecit_degenerate = r.counts.ea == 0;
    return r;
}

json to_json(const MetricsReport& r) {
    json per = json::array();
    for (const auto& v : r.per_latent)
        per.push_back({{"latent_id", v.latent_id}, {"name", v.proposed_name}, {"matched", v.matched}, {"rule", v.rule},
                       {"similarity", v.similarity}});
    return {{"acc", r.acc},
            {"cacc", r.cacc},
            {"ecit", r.ecit},
            {"counts",
             {{"matched", r.matched}, {"total", r.total}, {"n", r.counts.n}, {"EG", r.counts.eg}, {"EA", r.counts.ea}}},
            {"degenerate", {{"cacc", r.cacc_degenerate}, {"ecit", r.ecit_degenerate}}},
            {"per_latent", per}};
}

MetricsReport report_from_json(const json& j) {
    try {
        MetricsReport r;
        r.acc = j.at("acc").get<double>();
        r.cacc = j.at("cacc").get<double>();
        r.ecit = j.at("ecit").get<double>();
        const auto& c = j.at("counts");
        r.matched = c.at("matched").get<std::size_t>();
        r.total = c.at("total").get<std::size_t>();
        r.counts = {c.at("n").get<std::size_t>(), c.at("EG").get<std::size_t>(), c.at("EA").get<std::size_t>()};
        r.cacc_degenerate = j.at("degenerate").at("cacc").get<bool>();
        r.ecit_degenerate = j.at("degenerate").at("ecit").get<bool>();
        for (const auto& v : j.at("per_latent"))
            r.per_latent.push_back({v.at("latent_id").get<std::string>(), v.at("name").get<std::string>(),
                                    v.at("matched").get<bool>(), v.at("rule").get<std::string>(),
                                    v.at("similarity").get<double>()});
        return r;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed metrics report: ") + e.what());
    }
}

}  // namespace tlvd::metrics
