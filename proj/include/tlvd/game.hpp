#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tlvd::game {

/// Finite Bayesian game with independent type priors.
/// Payoffs are indexed [agent][joint type index][joint action index], both joint
/// indices being mixed-radix with agent 0 as the most significant digit.
struct SyntheticGame {
    std::vector<std::vector<double>> priors;  // [agent][type]
    std::vector<std::size_t> action_counts;   // [agent]
    std::vector<std::vector<std::vector<double>>> payoffs;
    std::size_t horizon = 1;

    [[nodiscard]] std::size_t agent_count() const { return priors.size(); }
    [[nodiscard]] std::size_t type_count(std::size_t agent) const { return priors[agent].size(); }
    [[nodiscard]] std::size_t joint_type_count() const;
    [[nodiscard]] std::size_t joint_action_count() const;
    [[nodiscard]] std::vector<std::size_t> decode_types(std::size_t joint) const;
    [[nodiscard]] std::size_t encode_types(const std::vector<std::size_t>& types) const;
    [[nodiscard]] std::vector<std::size_t> decode_actions(std::size_t joint) const;
    [[nodiscard]] std::size_t encode_actions(const std::vector<std::size_t>& actions) const;
    [[nodiscard]] double probability(const std::vector<std::size_t>& types) const;
    [[nodiscard]] double payoff(std::size_t agent, const std::vector<std::size_t>& types,
                                const std::vector<std::size_t>& actions) const;

    /// Throws ConfigError when priors do not sum to 1, tables are mis-sized, or |payoff| > r_max.
    void validate(double r_max = 1.0) const;

    /// Two agents, two types each with uniform prior, two actions, shared payoff
    /// 0.4[a1 = t1] + 0.4[a2 = t2] + 0.2[a1 = a2]. Its unique BNE is a_i = t_i with value 0.9.
    static SyntheticGame coordination();
};

/// Mixed strategy: [agent][type][action] probabilities.
using Profile = std::vector<std::vector<std::vector<double>>>;
/// Pure strategy: [agent][type] -> action.
using PureProfile = std::vector<std::vector<std::size_t>>;

Profile to_profile(const SyntheticGame& game, const PureProfile& pure);

/// Expected utility of `agent` under the prior and the (possibly mixed) profile.
double expected_utility(const SyntheticGame& game, const Profile& profile, std::size_t agent);

/// Largest expected-utility gain of any single agent switching to any pure type -> action map.
/// Non-negative; zero exactly at a Bayesian Nash equilibrium.
double exploitability(const SyntheticGame& game, const Profile& profile);

/// Every pure profile whose exploitability is within `tol` of zero, in enumeration order.
std::vector<PureProfile> pure_equilibria(const SyntheticGame& game, double tol = 1e-12);

/// Per-agent equilibrium values V*_i: the pure BNE with the highest total expected utility.
/// Throws InvariantError if the game has no pure equilibrium.
std::vector<double> equilibrium_values(const SyntheticGame& game);

/// Per-step record of the equilibrium value and the value of the current policy.
struct RegretRecord {
    std::size_t step = 0;
    std::vector<double> optimal;  // V*_i
    std::vector<double> current;  // V^{pi_t}_i
};

class RegretLedger {
public:
    void record(RegretRecord r);
    [[nodiscard]] const std::vector<RegretRecord>& records() const { return records_; }
    [[nodiscard]] std::size_t size() const { return records_.size(); }
    /// R_i(T) for the first T records.
    [[nodiscard]] double agent_regret(std::size_t agent, std::size_t T) const;
    /// R(T) = sum_i R_i(T).
    [[nodiscard]] double total_regret(std::size_t T) const;

private:
    std::vector<RegretRecord> records_;
    std::vector<double> cumulative_;  // R(t) after each record
};

struct RegretFit {
    double regret = 0.0;             // R(T)
    double c = 0.0;                  // least-squares fit of R(t) ~ c sqrt(t), t = 1..T
    double final_half_slope = 0.0;   // least-squares slope of R(t)/sqrt(t) over t in (T/2, T]
    bool sublinear = true;           // final_half_slope <= 0
};

/// Throws RangeError when T exceeds the ledger length or is zero.
RegretFit bayesian_regret(const RegretLedger& ledger, std::size_t T);

}  // namespace tlvd::game
