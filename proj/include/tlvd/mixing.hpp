#pragma once

#include <vector>

#include "tlvd/belief.hpp"
#include "tlvd/numerics.hpp"

namespace tlvd::mixing {

using belief::PromptEmbedding;
using num::Binding;
using num::Parameter;
using num::ParameterList;
using num::Tape;
using num::Tensor;
using num::Var;

struct MixingConfig {
    std::size_t d_entity = 256;
    std::size_t heads = 2;
};

/// Composes per-agent prompt embeddings, group beliefs and local Q-values into Q_tot.
///
///   lifted_i = tanh(W_e e_i + b_e)
///   upsilon  = SelfAttention(lifted)
///   F_i      = tanh(W_f [upsilon_i, E_i] + b_f)
///   token_i  = [W_q Q_i + b_q, F_i]
///   Q_tot    = w_r . mean_i MultiHeadAttention(tokens)_i + b_r
struct MixingNetwork {
    Parameter embed_w, embed_b;
    num::MultiHeadParams embed_attention;
    Parameter fuse_w, fuse_b;
    Parameter qlift_w, qlift_b;
    num::MultiHeadParams mix_attention;
    Parameter readout_w, readout_b;

    static MixingNetwork create(const MixingConfig& cfg, num::Rng& rng);
    ParameterList parameters();
    [[nodiscard]] std::size_t entity_dim() const { return embed_w.value.rows(); }
};

struct MixingParams {
    MixingNetwork online;
    MixingNetwork target;
    MixingConfig config;

    static MixingParams create(const MixingConfig& cfg, num::Rng& rng);
    ParameterList online_parameters() { return num::prefixed("mix.", online.parameters()); }
    ParameterList target_parameters() { return num::prefixed("mix_target.", target.parameters()); }
};

struct MixVars {
    Var q_tot;    // [1 x 1]
    Var upsilon;  // [N x d']
    Var fused;    // [N x d']
};

/// embeddings [N x 2], group [N x d'], local_qs [N x 1].
MixVars mix_forward(Tape& tape, MixingNetwork& net, Var embeddings, Var group, Var local_qs,
                    Binding mode = Binding::Trainable);

struct MixingIntermediate {
    Tensor upsilon;
    Tensor fused;
};

struct MixResult {
    double q_tot = 0.0;
    MixingIntermediate intermediate;
};

MixResult mix_forward(MixingNetwork& net, const std::vector<PromptEmbedding>& embeddings, const Tensor& group,
                      const std::vector<double>& local_qs);

/// Everything the mixer needs about one joint step.
struct JointTransition {
    std::vector<belief::AgentTransition> agents;
    double reward_total = 0.0;  // mean of the agents' rewards
    bool done = false;
};

struct Agents {
    std::vector<belief::BeliefNetwork>* beliefs;
    belief::BeliefEncoder* encoder;
};

/// Next-state quantities, all evaluated without a gradient path.
struct NextState {
    Tensor group;                       // [N x d'] from the encoder on next beliefs
    std::vector<std::vector<double>> local_q;  // [agent][candidate] target-head Q
};

NextState evaluate_next_state(const JointTransition& item, Agents agents,
                              const std::vector<std::vector<PromptEmbedding>>& grids);

/// Max over joint candidate actions of target Q_tot, by one coordinate-greedy sweep in
/// agent order starting from each agent's greedy local choice.
double joint_target_max(MixingParams& params, const NextState& next,
                        const std::vector<std::vector<PromptEmbedding>>& grids);

/// Exhaustive product enumeration; exponential in N, intended as a reference for small N.
double joint_target_max_exhaustive(MixingParams& params, const NextState& next,
                                   const std::vector<std::vector<PromptEmbedding>>& grids);

double target_q_tot(MixingParams& params, const NextState& next,
                    const std::vector<std::vector<PromptEmbedding>>& grids, const std::vector<std::size_t>& choice);

struct MixingLossVars {
    Var loss;
    Var td_term;
    Var consistency;  // mean over batch of sum_i (Q_i - Q_tot)^2, before lambda
};

/// y = r_tot + gamma * joint_target_max(next) per item, r_tot alone on terminal items.
std::vector<double> mixing_targets(MixingParams& params, Agents agents,
                                   const std::vector<const JointTransition*>& batch, double gamma,
                                   const std::vector<std::vector<PromptEmbedding>>& grids);

/// Loss against precomputed (detached) targets.
MixingLossVars mixing_loss(Tape& tape, MixingParams& params, Agents agents,
                           const std::vector<const JointTransition*>& batch, const std::vector<double>& targets,
                           double lambda_m);

/// mean_batch (y - Q_tot)^2 + lambda_m * mean_batch sum_i (Q_i - Q_tot)^2 with
/// y = r_tot + gamma * joint_target_max(next) (no bootstrap on terminal items).
MixingLossVars mixing_loss(Tape& tape, MixingParams& params, Agents agents,
                           const std::vector<const JointTransition*>& batch, double gamma, double lambda_m,
                           const std::vector<std::vector<PromptEmbedding>>& grids);

/// Soft update of the mixer target and every belief network's target Q-head.
void update_targets(MixingParams& params, std::vector<belief::BeliefNetwork>& beliefs, double rate);

}  // namespace tlvd::mixing
