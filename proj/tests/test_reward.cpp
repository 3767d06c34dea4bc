#include <doctest.h>

#include <cmath>
#include <random>

#include "tlvd/errors.hpp"
#include "tlvd/reward.hpp"

using namespace tlvd;
using namespace tlvd::reward;

namespace {

AnswerRecord answer(std::vector<double> e, double confidence = 1.0) { return {"", std::move(e), confidence}; }

double cos_by_hand(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i], na += a[i] * a[i], nb += b[i] * b[i];
    return d / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("action likelihood") {
    auto c = answer({1, 2, 3});
    CHECK(action_likelihood(answer({1, 2, 3}), c, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(action_likelihood(answer({1, 0}), answer({0, 1}), 1.0) == 0.0);
    // sim = 0.9 clipped to 0.5
    auto u = answer({0.9, std::sqrt(1 - 0.81)});
    CHECK(action_likelihood(u, answer({1, 0}), 0.5) == 0.5);
}

TEST_CASE("uncertainty reduction") {
    CHECK(uncertainty_reduction(answer({1, 2}, 0.0), answer({1, 2})) == 0.0);
    CHECK(uncertainty_reduction(answer({1, 2}, 1.0), answer({1, 2})) == doctest::Approx(1.0));
    CHECK(uncertainty_reduction(answer({0.5, std::sqrt(0.75)}, 0.8), answer({1, 0})) == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("collaborative contribution") {
    auto c = answer({1, 0.5, -0.2});
    SUBCASE("no others falls back to similarity") {
        auto u = answer({0.3, 0.9, 0.1});
        CHECK(collaborative_contribution(u, {}, c, 1.0) == doctest::Approx(cos_by_hand(u.embedding, c.embedding)));
    }
    SUBCASE("agreeing with the consensus adds nothing") {
        std::vector<AnswerRecord> others = {answer({1, 0, 0}), answer({0, 2, 0})};
        // normalized mean of others is (0.5, 0.5, 0); u points the same way
        auto u = answer({3, 3, 0});
        CHECK(contribution_quality(u, others, c) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
        CHECK(collaborative_contribution(u, others, c, 1.0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
    }
    SUBCASE("three-agent leave-one-out by formula") {
        std::vector<AnswerRecord> all = {answer({1, 0, 0}), answer({0.2, 1, 0}), answer({0.9, 0.4, -0.1})};
        for (std::size_t i = 0; i < 3; ++i) {
            std::vector<AnswerRecord> others;
            std::vector<double> mean_others(3, 0.0), mean_all(3, 0.0);
            for (std::size_t j = 0; j < 3; ++j) {
                const auto& e = all[j].embedding;
                const double n = std::sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2]);
                for (std::size_t k = 0; k < 3; ++k) {
                    mean_all[k] += e[k] / n / 3.0;
                    if (j != i) mean_others[k] += e[k] / n / 2.0;
                }
                if (j != i) others.push_back(all[j]);
            }
            const double want = std::max(0.0, cos_by_hand(mean_all, c.embedding) - cos_by_hand(mean_others, c.embedding));
            CHECK(contribution_quality(all[i], others, c) == doctest::Approx(want).epsilon(1e-12));
        }
    }
    SUBCASE("zero cap") {
        CHECK(collaborative_contribution(answer({1, 0, 0}), {answer({0, 1, 0})}, c, 0.0) == 0.0);
    }
    SUBCASE("order of others does not matter") {
        std::vector<AnswerRecord> others = {answer({1, 0, 0}), answer({0.2, 1, 0}), answer({-0.4, 0.1, 2})};
        auto reversed = std::vector<AnswerRecord>(others.rbegin(), others.rend());
        auto u = answer({0.5, 0.5, 0.5});
        CHECK(contribution_quality(u, others, c) == doctest::Approx(contribution_quality(u, reversed, c)).epsilon(1e-14));
    }
}

TEST_CASE("evidence reliability") {
    CHECK(evidence_reliability(2, 4) == 0.5);
    CHECK(evidence_reliability(0, 0) == 0.0);
    CHECK(evidence_reliability(3, 3) == 1.0);
    CHECK_THROWS_AS(evidence_reliability(4, 3), InvariantError);
}

TEST_CASE("total reward") {
    RewardWeights vertex{{1, 0, 0, 0}};
    CHECK(total_reward(0.3, 0.9, 0.1, 0.7, vertex).total == 0.3);
    CHECK(total_reward(1, 0.5, 0.25, 0.25, RewardWeights{}).total == 0.5);
    RewardWeights skew{{0.1, 0.2, 0.3, 0.4}};
    CHECK(total_reward(0.6, 0.6, 0.6, 0.6, skew).total == doctest::Approx(0.6).epsilon(1e-15));
    CHECK_THROWS_AS(total_reward(0, 0, 0, 0, RewardWeights{{0.5, 0.5, 0.5, 0}}), ConfigError);
    CHECK_THROWS_AS(total_reward(0, 0, 0, 0, RewardWeights{{1.5, -0.5, 0, 0}}), ConfigError);

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0, 1);
    for (int t = 0; t < 30; ++t) {
        const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
        auto base = total_reward(a, b, c, d, skew).total;
        CHECK(total_reward(a + 0.1, b, c, d, skew).total >= base);
        CHECK(total_reward(a, b, c, d + 0.1, skew).total >= base);
    }
}

TEST_CASE("every component is invariant under embedding scaling") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0, 1);
    std::uniform_real_distribution<double> s(0.01, 50);
    for (int t = 0; t < 20; ++t) {
        std::vector<AnswerRecord> answers;
        for (int i = 0; i < 3; ++i) answers.push_back(answer({n(rng), n(rng), n(rng), n(rng)}, 0.7));
        auto coord = answer({n(rng), n(rng), n(rng), n(rng)});
        std::vector<EvidenceCounts> ev(3, {1, 2});
        auto base = score_answers(answers, coord, ev, RewardWeights{}, 1.0);
        const double k = s(rng);
        for (auto& a : answers)
            for (auto& v : a.embedding) v *= k;
        const double kc = s(rng);
        for (auto& v : coord.embedding) v *= kc;
        auto scaled = score_answers(answers, coord, ev, RewardWeights{}, 1.0);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(scaled[i].total == doctest::Approx(base[i].total).epsilon(1e-12));
            CHECK(scaled[i].action_likelihood <= 1.0);
            CHECK(scaled[i].collaborative_contribution <= 1.0);
        }
    }
}
