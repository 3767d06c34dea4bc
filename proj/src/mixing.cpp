#include "tlvd/mixing.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <string>

#include "tlvd/errors.hpp"

namespace tlvd::mixing {

using belief::QHead;
using num::bind;

namespace {

Tensor column(const std::vector<double>& values) {
    return Tensor({values.size(), 1}, values);
}

}  // namespace

MixingNetwork MixingNetwork::create(const MixingConfig& cfg, num::Rng& rng) {
    const std::size_t d = cfg.d_entity;
    if (d == 0) throw ConfigError("entity dimension must be positive");
    if (cfg.heads == 0 || d % cfg.heads != 0)
        throw ConfigError("entity dimension " + std::to_string(d) + " is not divisible by " +
                          std::to_string(cfg.heads) + " mixing heads");
    MixingNetwork n;
    n.embed_w = num::init_weight(d, 2, rng);
    n.embed_b = num::init_bias(d);
    n.embed_attention = num::MultiHeadParams::create(d, d, d, 1, rng);
    n.fuse_w = num::init_weight(d, 2 * d, rng);
    n.fuse_b = num::init_bias(d);
    n.qlift_w = num::init_weight(d, 1, rng);
    n.qlift_b = num::init_bias(d);
    n.mix_attention = num::MultiHeadParams::create(2 * d, d, d, cfg.heads, rng);
    n.readout_w = num::init_weight(1, d, rng);
    n.readout_b = num::init_bias(1);
    return n;
}

ParameterList MixingNetwork::parameters() {
    ParameterList out = {{"embed_w", &embed_w}, {"embed_b", &embed_b}};
    num::append(out, num::prefixed("embed_attn.", embed_attention.parameters()));
    num::append(out, {{"fuse_w", &fuse_w}, {"fuse_b", &fuse_b}, {"qlift_w", &qlift_w}, {"qlift_b", &qlift_b}});
    num::append(out, num::prefixed("mix_attn.", mix_attention.parameters()));
    num::append(out, {{"readout_w", &readout_w}, {"readout_b", &readout_b}});
    return out;
}

MixingParams MixingParams::create(const MixingConfig& cfg, num::Rng& rng) {
    MixingParams p;
    p.config = cfg;
    p.online = MixingNetwork::create(cfg, rng);
    p.target = p.online;
    return p;
}

MixVars mix_forward(Tape& tape, MixingNetwork& net, Var embeddings, Var group, Var local_qs, Binding mode) {
    const std::size_t n = tape.value(embeddings).rows();
    if (n == 0 || tape.value(group).rows() != n || tape.value(local_qs).rows() != n)
        throw ConfigError("mix_forward: " + std::to_string(n) + " embeddings, " +
                          std::to_string(tape.value(group).rows()) + " group rows, " +
                          std::to_string(tape.value(local_qs).rows()) + " local Q-values");
    if (tape.value(embeddings).cols() != 2 || tape.value(local_qs).cols() != 1)
        throw DimensionError("mix_forward: embeddings must be [N x 2] and local Q-values [N x 1]");
    if (tape.value(group).cols() != net.entity_dim())
        throw ConfigError("mix_forward: group belief width " + std::to_string(tape.value(group).cols()) +
                          " != entity dimension " + std::to_string(net.entity_dim()));

    Var lifted = num::tanh(num::affine(embeddings, bind(tape, net.embed_w, mode), bind(tape, net.embed_b, mode)));
    Var upsilon = num::multi_head_attention(tape, lifted, net.embed_attention, mode);
    Var fused = num::tanh(num::affine(num::concat_cols(upsilon, group), bind(tape, net.fuse_w, mode),
                                      bind(tape, net.fuse_b, mode)));
    Var qlift = num::affine(local_qs, bind(tape, net.qlift_w, mode), bind(tape, net.qlift_b, mode));
    Var tokens = num::concat_cols(qlift, fused);
    Var mixed = num::multi_head_attention(tape, tokens, net.mix_attention, mode);
    Var q_tot = num::affine(num::mean_rows(mixed), bind(tape, net.readout_w, mode), bind(tape, net.readout_b, mode));
    return {q_tot, upsilon, fused};
}

MixResult mix_forward(MixingNetwork& net, const std::vector<PromptEmbedding>& embeddings, const Tensor& group,
                      const std::vector<double>& local_qs) {
    if (embeddings.size() != local_qs.size())
        throw ConfigError("mix_forward: " + std::to_string(embeddings.size()) + " embeddings but " +
                          std::to_string(local_qs.size()) + " local Q-values");
    Tape tape;
    auto out = mix_forward(tape, net, tape.constant(belief::to_tensor(embeddings)), tape.constant(group),
                           tape.constant(column(local_qs)), Binding::Frozen);
    return {tape.value(out.q_tot).item(), {tape.value(out.upsilon), tape.value(out.fused)}};
}

NextState evaluate_next_state(const JointTransition& item, Agents agents,
                              const std::vector<std::vector<PromptEmbedding>>& grids) {
    auto& nets = *agents.beliefs;
    if (item.agents.size() != nets.size() || grids.size() != nets.size())
        throw ConfigError("joint transition, belief networks and grids disagree on agent count");
    Tape tape;
    std::vector<Var> beliefs;
    NextState next;
    for (std::size_t i = 0; i < nets.size(); ++i) {
        if (grids[i].empty()) throw ConfigError("empty candidate grid for agent " + std::to_string(i));
        const auto& a = item.agents[i];
        Var b = belief::encode_trajectory(tape, nets[i], a.next_trajectory, a.next_observation, Binding::Frozen);
        beliefs.push_back(b);
        Var q = belief::q_values(tape, nets[i], b, tape.constant(belief::to_tensor(grids[i])), QHead::Target,
                                 Binding::Frozen);
        next.local_q.push_back(tape.value(q).data);
    }
    next.group = tape.value(belief::encode_group(tape, *agents.encoder, num::concat_rows(beliefs), Binding::Frozen));
    return next;
}

double target_q_tot(MixingParams& params, const NextState& next,
                    const std::vector<std::vector<PromptEmbedding>>& grids, const std::vector<std::size_t>& choice) {
    std::vector<PromptEmbedding> actions;
    std::vector<double> qs;
    for (std::size_t i = 0; i < choice.size(); ++i) {
        actions.push_back(grids[i][choice[i]]);
        qs.push_back(next.local_q[i][choice[i]]);
    }
    return mix_forward(params.target, actions, next.group, qs).q_tot;
}

double joint_target_max(MixingParams& params, const NextState& next,
                        const std::vector<std::vector<PromptEmbedding>>& grids) {
    const std::size_t n = grids.size();
    std::vector<std::size_t> choice(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& q = next.local_q[i];
        choice[i] = static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
    }
    double best = target_q_tot(params, next, grids, choice);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best_k = choice[i];
        for (std::size_t k = 0; k < grids[i].size(); ++k) {
            if (k == choice[i]) continue;
            auto trial = choice;
            trial[i] = k;
            const double v = target_q_tot(params, next, grids, trial);
            if (v > best) {
                best = v;
                best_k = k;
            }
        }
        choice[i] = best_k;
    }
    return best;
}

double joint_target_max_exhaustive(MixingParams& params, const NextState& next,
                                   const std::vector<std::vector<PromptEmbedding>>& grids) {
    const std::size_t n = grids.size();
    std::vector<std::size_t> choice(n, 0);
    double best = -std::numeric_limits<double>::infinity();
    std::function<void(std::size_t)> walk = [&](std::size_t i) {
        if (i == n) {
            best = std::max(best, target_q_tot(params, next, grids, choice));
            return;
        }
        for (std::size_t k = 0; k < grids[i].size(); ++k) {
            choice[i] = k;
            walk(i + 1);
        }
    };
    walk(0);
    return best;
}

std::vector<double> mixing_targets(MixingParams& params, Agents agents,
                                   const std::vector<const JointTransition*>& batch, double gamma,
                                   const std::vector<std::vector<PromptEmbedding>>& grids) {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0,1)");
    std::vector<double> out;
    out.reserve(batch.size());
    for (const auto* item : batch) {
        double y = item->reward_total;
        if (!item->done && gamma > 0.0)
            y += gamma * joint_target_max(params, evaluate_next_state(*item, agents, grids), grids);
        out.push_back(y);
    }
    return out;
}

MixingLossVars mixing_loss(Tape& tape, MixingParams& params, Agents agents,
                           const std::vector<const JointTransition*>& batch, const std::vector<double>& targets,
                           double lambda_m) {
    if (batch.empty()) throw UsageError("mixing_loss needs a nonempty batch");
    if (targets.size() != batch.size()) throw UsageError("mixing_loss needs one target per transition");
    if (lambda_m < 0.0) throw ConfigError("lambda_m must be non-negative");
    auto& nets = *agents.beliefs;
    std::vector<Var> td_errors;
    std::vector<Var> spreads;
    for (std::size_t n = 0; n < batch.size(); ++n) {
        const auto* item = batch[n];
        if (item->agents.size() != nets.size()) throw ConfigError("joint transition agent count mismatch");
        std::vector<Var> beliefs, local_qs;
        std::vector<PromptEmbedding> actions;
        for (std::size_t i = 0; i < nets.size(); ++i) {
            const auto& a = item->agents[i];
            Var b = belief::encode_trajectory(tape, nets[i], a.trajectory, a.observation, Binding::Trainable);
            beliefs.push_back(b);
            local_qs.push_back(belief::q_values(tape, nets[i], b, tape.constant(belief::to_tensor(a.action)),
                                                QHead::Online, Binding::Trainable));
            actions.push_back(a.action);
        }
        Var group = belief::encode_group(tape, *agents.encoder, num::concat_rows(beliefs), Binding::Trainable);
        Var qs = num::concat_rows(local_qs);
        auto out = mix_forward(tape, params.online, tape.constant(belief::to_tensor(actions)), group, qs);
        td_errors.push_back(num::sub(tape.constant(Tensor::scalar(targets[n])), out.q_tot));
        Var broadcast = num::concat_rows(std::vector<Var>(nets.size(), out.q_tot));
        spreads.push_back(num::sum(num::square(num::sub(qs, broadcast))));
    }
    Var td_term = num::mean(num::square(num::concat_rows(td_errors)));
    Var consistency = num::mean(num::concat_rows(spreads));
    Var loss = num::add(td_term, num::scale(consistency, lambda_m));
    return {loss, td_term, consistency};
}

MixingLossVars mixing_loss(Tape& tape, MixingParams& params, Agents agents,
                           const std::vector<const JointTransition*>& batch, double gamma, double lambda_m,
                           const std::vector<std::vector<PromptEmbedding>>& grids) {
    if (batch.empty()) throw UsageError("mixing_loss needs a nonempty batch");
    if (lambda_m < 0.0) throw ConfigError("lambda_m must be non-negative");
    return mixing_loss(tape, params, agents, batch, mixing_targets(params, agents, batch, gamma, grids), lambda_m);
}

void update_targets(MixingParams& params, std::vector<belief::BeliefNetwork>& beliefs, double rate) {
    num::soft_update(params.target_parameters(), params.online_parameters(), rate);
    for (auto& b : beliefs) num::soft_update(b.target_q_head(), b.q_head(), rate);
}

}  // namespace tlvd::mixing
