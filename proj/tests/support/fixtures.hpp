#pragma once

// Small randomized networks and transitions shared by unit and acceptance tests.

#include <random>
#include <vector>

#include "tlvd/belief.hpp"
#include "tlvd/mixing.hpp"

namespace tlvd::testing {

inline belief::BeliefConfig small_belief_config() {
    belief::BeliefConfig cfg;
    cfg.d_obs = 3;
    cfg.d_belief = 4;
    cfg.hidden = 5;
    cfg.d_entity = 4;
    cfg.grid = 3;
    return cfg;
}

inline mixing::MixingConfig small_mixing_config() { return {4, 2}; }

/// Perturbs every parameter away from its initial value so that zero biases and
/// identical target copies do not hide gradient bugs.
inline void jitter(const num::ParameterList& params, num::Rng& rng, double scale = 0.3) {
    std::uniform_real_distribution<double> u(-scale, scale);
    for (const auto& [name, p] : params)
        for (auto& v : p->value.data) v += u(rng);
}

inline belief::Observation random_observation(std::size_t d_obs, std::uint64_t round, num::Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    belief::Observation o;
    o.round_index = round;
    for (std::size_t i = 0; i < d_obs; ++i) o.features.push_back(u(rng));
    return o;
}

inline belief::PromptEmbedding random_action(num::Rng& rng) {
    std::uniform_real_distribution<double> u(0.05, 0.95);
    return {u(rng), u(rng)};
}

inline belief::Trajectory random_trajectory(std::size_t d_obs, std::size_t steps, num::Rng& rng) {
    belief::Trajectory t;
    for (std::size_t k = 0; k < steps; ++k) t.steps.push_back({random_observation(d_obs, k, rng), random_action(rng)});
    return t;
}

inline belief::AgentTransition random_transition(std::size_t d_obs, std::size_t steps, bool done, num::Rng& rng) {
    belief::AgentTransition tr;
    tr.trajectory = random_trajectory(d_obs, steps, rng);
    tr.observation = random_observation(d_obs, steps, rng);
    tr.action = random_action(rng);
    std::uniform_real_distribution<double> r(-1.0, 1.0);
    tr.reward = r(rng);
    tr.next_trajectory = tr.trajectory;
    tr.next_trajectory.steps.push_back({tr.observation, tr.action});
    tr.next_observation = random_observation(d_obs, steps + 1, rng);
    tr.done = done;
    return tr;
}

inline mixing::JointTransition random_joint(std::size_t agents, std::size_t d_obs, std::size_t steps, bool done,
                                            num::Rng& rng) {
    mixing::JointTransition j;
    double total = 0.0;
    for (std::size_t i = 0; i < agents; ++i) {
        j.agents.push_back(random_transition(d_obs, steps, done, rng));
        total += j.agents.back().reward;
    }
    j.reward_total = total / static_cast<double>(agents);
    j.done = done;
    return j;
}

}  // namespace tlvd::testing
