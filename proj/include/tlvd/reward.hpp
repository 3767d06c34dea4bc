#pragma once

#include <array>
#include <string>
#include <vector>

namespace tlvd::reward {

struct AnswerRecord {
    std::string text;
    std::vector<double> embedding;
    double confidence = 0.0;  // in [0,1]
};

struct RewardWeights {
    std::array<double, 4> alpha{0.25, 0.25, 0.25, 0.25};

    /// Throws ConfigError unless every weight is non-negative and they sum to 1 within 1e-9.
    void validate() const;
};

struct RewardBreakdown {
    double action_likelihood = 0.0;
    double uncertainty_reduction = 0.0;
    double collaborative_contribution = 0.0;
    double evidence_reliability = 0.0;
    double total = 0.0;
};

/// min(R_max, sim(u, C))
double action_likelihood(const AnswerRecord& u, const AnswerRecord& coordinator, double r_max);

/// confidence(u) * sim(u, C)
double uncertainty_reduction(const AnswerRecord& u, const AnswerRecord& coordinator);

/// Marginal-consensus quality: how much adding u to the others' (unit-normalised) mean
/// moves it toward C, clipped below at 0; sim(u, C) when there are no others. Then min(R_max, .).
double contribution_quality(const AnswerRecord& u, const std::vector<AnswerRecord>& others,
                            const AnswerRecord& coordinator);
double collaborative_contribution(const AnswerRecord& u, const std::vector<AnswerRecord>& others,
                                  const AnswerRecord& coordinator, double r_max);

/// supported / searched edges, 0 when nothing was searched.
double evidence_reliability(std::size_t supported, std::size_t searched);

RewardBreakdown total_reward(double r_al, double r_ur, double r_cc, double r_er, const RewardWeights& weights);

struct EvidenceCounts {
    std::size_t supported = 0;
    std::size_t searched = 0;
};

/// All four components for every executor answer against the coordinator output.
std::vector<RewardBreakdown> score_answers(const std::vector<AnswerRecord>& answers, const AnswerRecord& coordinator,
                                           const std::vector<EvidenceCounts>& evidence, const RewardWeights& weights,
                                           double r_max);

}  // namespace tlvd::reward
