#include "tlvd/reward.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tlvd/errors.hpp"
#include "tlvd/numerics.hpp"

namespace tlvd::reward {

namespace {

double sim(const std::vector<double>& a, const std::vector<double>& b) { return num::cosine_similarity(a, b); }

void add_unit(std::vector<double>& acc, const std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) return;
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i] / norm;
}

}  // namespace

void RewardWeights::validate() const {
    double total = 0.0;
    for (double a : alpha) {
        if (!(a >= 0.0)) throw ConfigError("reward weights must be non-negative");
        total += a;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ConfigError("reward weights must sum to 1, got " + std::to_string(total));
}

double action_likelihood(const AnswerRecord& u, const AnswerRecord& coordinator, double r_max) {
    return std::min(r_max, sim(u.embedding, coordinator.embedding));
}

double uncertainty_reduction(const AnswerRecord& u, const AnswerRecord& coordinator) {
    return u.confidence * sim(u.embedding, coordinator.embedding);
}

double contribution_quality(const AnswerRecord& u, const std::vector<AnswerRecord>& others,
                            const AnswerRecord& coordinator) {
    if (others.empty()) return sim(u.embedding, coordinator.embedding);
    std::vector<double> consensus(u.embedding.size(), 0.0);
    for (const auto& o : others) {
        if (o.embedding.size() != u.embedding.size()) throw DimensionError("answer embeddings differ in length");
        add_unit(consensus, o.embedding);
    }
    for (auto& x : consensus) x /= static_cast<double>(others.size());
    std::vector<double> with_u = consensus;
    for (auto& x : with_u) x *= static_cast<double>(others.size());
    add_unit(with_u, u.embedding);
    for (auto& x : with_u) x /= static_cast<double>(others.size() + 1);
    return std::max(0.0, sim(with_u, coordinator.embedding) - sim(consensus, coordinator.embedding));
}

double collaborative_contribution(const AnswerRecord& u, const std::vector<AnswerRecord>& others,
                                  const AnswerRecord& coordinator, double r_max) {
    return std::min(r_max, contribution_quality(u, others, coordinator));
}

double evidence_reliability(std::size_t supported, std::size_t searched) {
    if (searched == 0) return 0.0;
    if (supported > searched) throw InvariantError("more supported edges than searched edges");
    return static_cast<double>(supported) / static_cast<double>(searched);
}

RewardBreakdown total_reward(double r_al, double r_ur, double r_cc, double r_er, const RewardWeights& weights) {
    weights.validate();
    const auto& a = weights.alpha;
    return {r_al, r_ur, r_cc, r_er, a[0] * r_al + a[1] * r_ur + a[2] * r_cc + a[3] * r_er};
}

std::vector<RewardBreakdown> score_answers(const std::vector<AnswerRecord>& answers, const AnswerRecord& coordinator,
                                           const std::vector<EvidenceCounts>& evidence, const RewardWeights& weights,
                                           double r_max) {
    if (evidence.size() != answers.size()) throw ConfigError("one evidence count per answer is required");
    std::vector<RewardBreakdown> out;
    for (std::size_t i = 0; i < answers.size(); ++i) {
        std::vector<AnswerRecord> others;
        for (std::size_t j = 0; j < answers.size(); ++j)
            if (j != i) others.push_back(answers[j]);
        out.push_back(total_reward(action_likelihood(answers[i], coordinator, r_max),
                                   uncertainty_reduction(answers[i], coordinator),
                                   collaborative_contribution(answers[i], others, coordinator, r_max),
                                   evidence_reliability(evidence[i].supported, evidence[i].searched), weights));
    }
    return out;
}

}  // namespace tlvd::reward
