#pragma once

#include <cstdint>
#include <vector>

#include "tlvd/numerics.hpp"

namespace tlvd::belief {

using num::Binding;
using num::Parameter;
using num::ParameterList;
using num::Tape;
using num::Tensor;
using num::Var;

/// The continuous action [T, p]; both components lie in (0,1).
struct PromptEmbedding {
    double temperature = 0.5;
    double penalty = 0.5;

    auto operator<=>(const PromptEmbedding&) const = default;
};

struct Observation {
    std::vector<double> features;
    std::uint64_t round_index = 0;
};

struct TrajectoryStep {
    Observation observation;
    PromptEmbedding action;
};

/// Chronological (observation, action taken after it) pairs.
struct Trajectory {
    std::vector<TrajectoryStep> steps;
};

struct BeliefConfig {
    std::size_t d_obs = 5;
    std::size_t d_belief = 128;
    std::size_t hidden = 256;
    std::size_t d_entity = 256;
    std::size_t grid = 5;
    std::size_t encoder_heads = 1;
};

/// Parameters of one executor's belief network plus its target Q-head.
struct BeliefNetwork {
    // per-step encoder: [obs, previous action, round index] -> hidden (tanh)
    Parameter step_w, step_b;
    // pooled hidden -> belief state
    Parameter belief_w, belief_b;
    // prompt embedding heads
    Parameter temp_w, temp_b;
    Parameter penalty_w, penalty_b;
    // Q-head: [b, e] -> hidden (tanh) -> scalar
    Parameter q_hidden_w, q_hidden_b, q_out_w, q_out_b;
    // target copy of the Q-head
    Parameter tq_hidden_w, tq_hidden_b, tq_out_w, tq_out_b;

    BeliefConfig config;

    static BeliefNetwork create(const BeliefConfig& cfg, num::Rng& rng);

    /// Everything trained by gradient (excludes the target Q-head).
    ParameterList online_parameters();
    ParameterList q_head();
    ParameterList target_q_head();
    /// Online followed by target parameters; used for checkpoints.
    ParameterList all_parameters();
};

enum class QHead { Online, Target };

struct BeliefVars {
    Var belief;     // [1 x d_belief]
    Var embedding;  // [1 x 2] = [T, p]
    Var q;          // [1 x 1], Q-head on (belief, embedding)
};

/// Forward pass of the belief network. `mode` = Frozen builds the same graph with no
/// gradient path into the parameters.
BeliefVars belief_forward(Tape& tape, BeliefNetwork& net, const Trajectory& trajectory, const Observation& obs,
                          Binding mode = Binding::Trainable);

/// Belief state only (trajectory encoder).
Var encode_trajectory(Tape& tape, BeliefNetwork& net, const Trajectory& trajectory, const Observation& obs,
                      Binding mode = Binding::Trainable);

/// Q-values for each row of `actions` ([K x 2]) given one belief ([1 x d_belief]); returns [K x 1].
Var q_values(Tape& tape, BeliefNetwork& net, Var belief, Var actions, QHead head, Binding mode);

struct BeliefResult {
    Tensor belief;
    PromptEmbedding embedding;
    double q = 0.0;
};

BeliefResult belief_forward(BeliefNetwork& net, const Trajectory& trajectory, const Observation& obs);

/// G x G points over (0.05, 0.95)^2, temperature-major. G = 1 gives the single point (0.5, 0.5).
std::vector<PromptEmbedding> candidate_grid(std::size_t g);
Tensor to_tensor(const std::vector<PromptEmbedding>& actions);
Tensor to_tensor(const PromptEmbedding& e);

/// Index of the highest online Q among `candidates` (first index on ties).
std::size_t greedy_action(BeliefNetwork& net, const Trajectory& trajectory, const Observation& obs,
                          const std::vector<PromptEmbedding>& candidates);

/// One executor's experience sample.
struct AgentTransition {
    Trajectory trajectory;
    Observation observation;
    PromptEmbedding action;
    double reward = 0.0;
    Trajectory next_trajectory;
    Observation next_observation;
    bool done = false;
};

/// reward + gamma * max_c Q_target(next, c).
double td_target(double reward, BeliefNetwork& net, const Trajectory& next_trajectory,
                 const Observation& next_obs, double gamma, const std::vector<PromptEmbedding>& candidates);

/// Per-item TD targets; a terminal item's target is its reward.
std::vector<double> td_targets(BeliefNetwork& net, const std::vector<const AgentTransition*>& batch, double gamma,
                               const std::vector<PromptEmbedding>& candidates);

/// Mean squared error against precomputed (detached) targets.
Var td_loss(Tape& tape, BeliefNetwork& net, const std::vector<const AgentTransition*>& batch,
            const std::vector<double>& targets);

/// Mean squared TD error over the batch. Gradients reach only the online parameters.
Var td_loss(Tape& tape, BeliefNetwork& net, const std::vector<const AgentTransition*>& batch, double gamma,
            const std::vector<PromptEmbedding>& candidates);

/// Mean squared distance between the sigmoid heads' embedding and the greedy grid action,
/// so the heads track the value-based policy.
Var head_alignment_loss(Tape& tape, BeliefNetwork& net, const std::vector<const AgentTransition*>& batch,
                        const std::vector<PromptEmbedding>& candidates);

/// Attention over the agents' belief states followed by the output projection.
struct BeliefEncoder {
    num::MultiHeadParams attention;

    static BeliefEncoder create(std::size_t d_belief, std::size_t d_entity, std::size_t heads, num::Rng& rng);
    ParameterList parameters() { return num::prefixed("encoder.", attention.parameters()); }
};

/// beliefs: [N x d_belief] -> group belief [N x d_entity].
Var encode_group(Tape& tape, BeliefEncoder& encoder, Var beliefs, Binding mode = Binding::Trainable);
Tensor encode_group(BeliefEncoder& encoder, const std::vector<Tensor>& beliefs);

}  // namespace tlvd::belief
