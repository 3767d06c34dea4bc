#include "tlvd/belief.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "tlvd/errors.hpp"

namespace tlvd::belief {

using num::bind;

namespace {

Tensor step_inputs(const BeliefConfig& cfg, const Trajectory& trajectory, const Observation& obs) {
    const std::size_t width = cfg.d_obs + 3;
    const std::size_t rows = trajectory.steps.size() + 1;
    Tensor x({rows, width}, 0.0);
    PromptEmbedding previous{0.0, 0.0};
    auto fill = [&](std::size_t r, const Observation& o) {
        if (o.features.size() != cfg.d_obs)
            throw ConfigError("observation has " + std::to_string(o.features.size()) + " features, expected " +
                              std::to_string(cfg.d_obs));
        for (std::size_t j = 0; j < cfg.d_obs; ++j) x.at(r, j) = o.features[j];
        x.at(r, cfg.d_obs) = previous.temperature;
        x.at(r, cfg.d_obs + 1) = previous.penalty;
        x.at(r, cfg.d_obs + 2) = static_cast<double>(o.round_index);
    };
    for (std::size_t k = 0; k < trajectory.steps.size(); ++k) {
        const auto& step = trajectory.steps[k];
        if (k > 0 && step.observation.round_index <= trajectory.steps[k - 1].observation.round_index)
            throw UsageError("trajectory round indices must be strictly increasing");
        fill(k, step.observation);
        previous = step.action;
    }
    fill(rows - 1, obs);
    return x;
}

Var affine_bound(Tape& tape, Var x, Parameter& w, Parameter& b, Binding mode) {
    return num::affine(x, bind(tape, w, mode), bind(tape, b, mode));
}

Var repeat_row(Var row, std::size_t times) {
    if (times == 1) return row;
    return num::concat_rows(std::vector<Var>(times, row));
}

}  // namespace

BeliefNetwork BeliefNetwork::create(const BeliefConfig& cfg, num::Rng& rng) {
    if (cfg.d_obs == 0 || cfg.d_belief == 0 || cfg.hidden == 0 || cfg.d_entity == 0 || cfg.grid == 0)
        throw ConfigError("belief dimensions must be positive");
    BeliefNetwork n;
    n.config = cfg;
    n.step_w = num::init_weight(cfg.hidden, cfg.d_obs + 3, rng);
    n.step_b = num::init_bias(cfg.hidden);
    n.belief_w = num::init_weight(cfg.d_belief, cfg.hidden, rng);
    n.belief_b = num::init_bias(cfg.d_belief);
    n.temp_w = num::init_weight(1, cfg.d_belief, rng);
    n.temp_b = num::init_bias(1);
    n.penalty_w = num::init_weight(1, cfg.d_belief, rng);
    n.penalty_b = num::init_bias(1);
    n.q_hidden_w = num::init_weight(cfg.hidden, cfg.d_belief + 2, rng);
    n.q_hidden_b = num::init_bias(cfg.hidden);
    n.q_out_w = num::init_weight(1, cfg.hidden, rng);
    n.q_out_b = num::init_bias(1);
    n.tq_hidden_w = n.q_hidden_w;
    n.tq_hidden_b = n.q_hidden_b;
    n.tq_out_w = n.q_out_w;
    n.tq_out_b = n.q_out_b;
    return n;
}

ParameterList BeliefNetwork::q_head() {
    return {{"q_hidden_w", &q_hidden_w}, {"q_hidden_b", &q_hidden_b}, {"q_out_w", &q_out_w}, {"q_out_b", &q_out_b}};
}

ParameterList BeliefNetwork::target_q_head() {
    return {{"target_q_hidden_w", &tq_hidden_w}, {"target_q_hidden_b", &tq_hidden_b},
            {"target_q_out_w", &tq_out_w}, {"target_q_out_b", &tq_out_b}};
}

ParameterList BeliefNetwork::online_parameters() {
    ParameterList out = {{"step_w", &step_w},       {"step_b", &step_b},       {"belief_w", &belief_w},
                         {"belief_b", &belief_b},   {"temp_w", &temp_w},       {"temp_b", &temp_b},
                         {"penalty_w", &penalty_w}, {"penalty_b", &penalty_b}};
    num::append(out, q_head());
    return out;
}

ParameterList BeliefNetwork::all_parameters() {
    auto out = online_parameters();
    num::append(out, target_q_head());
    return out;
}

Var encode_trajectory(Tape& tape, BeliefNetwork& net, const Trajectory& trajectory, const Observation& obs,
                      Binding mode) {
    Var x = tape.constant(step_inputs(net.config, trajectory, obs));
    Var hidden = num::tanh(affine_bound(tape, x, net.step_w, net.step_b, mode));
    return affine_bound(tape, num::mean_rows(hidden), net.belief_w, net.belief_b, mode);
}

Var q_values(Tape& tape, BeliefNetwork& net, Var belief, Var actions, QHead head, Binding mode) {
    const std::size_t k = tape.value(actions).rows();
    if (tape.value(actions).cols() != 2) throw DimensionError("actions must be [K x 2]");
    Var input = num::concat_cols(repeat_row(belief, k), actions);
    const bool online = head == QHead::Online;
    Var hidden = num::tanh(affine_bound(tape, input, online ? net.q_hidden_w : net.tq_hidden_w,
                                        online ? net.q_hidden_b : net.tq_hidden_b, mode));
    return affine_bound(tape, hidden, online ? net.q_out_w : net.tq_out_w, online ? net.q_out_b : net.tq_out_b,
                        mode);
}

BeliefVars belief_forward(Tape& tape, BeliefNetwork& net, const Trajectory& trajectory, const Observation& obs,
                          Binding mode) {
    Var b = encode_trajectory(tape, net, trajectory, obs, mode);
    Var t = num::sigmoid(affine_bound(tape, b, net.temp_w, net.temp_b, mode));
    Var p = num::sigmoid(affine_bound(tape, b, net.penalty_w, net.penalty_b, mode));
    Var e = num::concat_cols(t, p);
    Var q = q_values(tape, net, b, e, QHead::Online, mode);
    return {b, e, q};
}

BeliefResult belief_forward(BeliefNetwork& net, const Trajectory& trajectory, const Observation& obs) {
    Tape tape;
    auto out = belief_forward(tape, net, trajectory, obs, Binding::Frozen);
    const Tensor& e = tape.value(out.embedding);
    return {tape.value(out.belief), {e.data[0], e.data[1]}, tape.value(out.q).item()};
}

std::vector<PromptEmbedding> candidate_grid(std::size_t g) {
    if (g == 0) throw ConfigError("candidate grid size must be positive");
    std::vector<double> axis;
    if (g == 1) {
        axis = {0.5};
    } else {
        for (std::size_t i = 0; i < g; ++i) axis.push_back(0.05 + 0.9 * static_cast<double>(i) / static_cast<double>(g - 1));
    }
    std::vector<PromptEmbedding> out;
    for (double t : axis)
        for (double p : axis) out.push_back({t, p});
    return out;
}

Tensor to_tensor(const std::vector<PromptEmbedding>& actions) {
    if (actions.empty()) throw ConfigError("empty action list");
    Tensor t({actions.size(), 2});
    for (std::size_t i = 0; i < actions.size(); ++i) {
        t.at(i, 0) = actions[i].temperature;
        t.at(i, 1) = actions[i].penalty;
    }
    return t;
}

Tensor to_tensor(const PromptEmbedding& e) { return Tensor::row({e.temperature, e.penalty}); }

std::size_t greedy_action(BeliefNetwork& net, const Trajectory& trajectory, const Observation& obs,
                          const std::vector<PromptEmbedding>& candidates) {
    Tape tape;
    Var b = encode_trajectory(tape, net, trajectory, obs, Binding::Frozen);
    Var q = q_values(tape, net, b, tape.constant(to_tensor(candidates)), QHead::Online, Binding::Frozen);
    const Tensor& qs = tape.value(q);
    std::size_t best = 0;
    for (std::size_t i = 1; i < qs.size(); ++i)
        if (qs.data[i] > qs.data[best]) best = i;
    return best;
}

double td_target(double reward, BeliefNetwork& net, const Trajectory& next_trajectory, const Observation& next_obs,
                 double gamma, const std::vector<PromptEmbedding>& candidates) {
    if (candidates.empty()) throw ConfigError("td_target needs at least one candidate action");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0,1)");
    if (gamma == 0.0) return reward;
    Tape tape;
    Var b = encode_trajectory(tape, net, next_trajectory, next_obs, Binding::Frozen);
    Var q = q_values(tape, net, b, tape.constant(to_tensor(candidates)), QHead::Target, Binding::Frozen);
    double best = -std::numeric_limits<double>::infinity();
    for (double v : tape.value(q).data) best = std::max(best, v);
    return reward + gamma * best;
}

std::vector<double> td_targets(BeliefNetwork& net, const std::vector<const AgentTransition*>& batch, double gamma,
                               const std::vector<PromptEmbedding>& candidates) {
    std::vector<double> out;
    out.reserve(batch.size());
    for (const auto* item : batch)
        out.push_back(item->done ? item->reward
                                 : td_target(item->reward, net, item->next_trajectory, item->next_observation, gamma,
                                             candidates));
    return out;
}

Var td_loss(Tape& tape, BeliefNetwork& net, const std::vector<const AgentTransition*>& batch,
            const std::vector<double>& targets) {
    if (batch.empty()) throw UsageError("td_loss needs a nonempty batch");
    if (targets.size() != batch.size()) throw UsageError("td_loss needs one target per transition");
    std::vector<Var> errors;
    errors.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto* item = batch[i];
        Var b = encode_trajectory(tape, net, item->trajectory, item->observation, Binding::Trainable);
        Var q = q_values(tape, net, b, tape.constant(to_tensor(item->action)), QHead::Online, Binding::Trainable);
        errors.push_back(num::sub(tape.constant(Tensor::scalar(targets[i])), q));
    }
    return num::mean(num::square(num::concat_rows(errors)));
}

Var td_loss(Tape& tape, BeliefNetwork& net, const std::vector<const AgentTransition*>& batch, double gamma,
            const std::vector<PromptEmbedding>& candidates) {
    if (batch.empty()) throw UsageError("td_loss needs a nonempty batch");
    return td_loss(tape, net, batch, td_targets(net, batch, gamma, candidates));
}

Var head_alignment_loss(Tape& tape, BeliefNetwork& net, const std::vector<const AgentTransition*>& batch,
                        const std::vector<PromptEmbedding>& candidates) {
    if (batch.empty()) throw UsageError("head_alignment_loss needs a nonempty batch");
    std::vector<Var> diffs;
    for (const auto* item : batch) {
        const auto best = greedy_action(net, item->trajectory, item->observation, candidates);
        auto out = belief_forward(tape, net, item->trajectory, item->observation, Binding::Trainable);
        diffs.push_back(num::sub(out.embedding, tape.constant(to_tensor(candidates[best]))));
    }
    return num::scale(num::sum(num::square(num::concat_rows(diffs))), 1.0 / static_cast<double>(batch.size()));
}

BeliefEncoder BeliefEncoder::create(std::size_t d_belief, std::size_t d_entity, std::size_t heads, num::Rng& rng) {
    return {num::MultiHeadParams::create(d_belief, d_entity, d_entity, heads, rng)};
}

Var encode_group(Tape& tape, BeliefEncoder& encoder, Var beliefs, Binding mode) {
    if (tape.value(beliefs).cols() != encoder.attention.wq.value.cols())
        throw ConfigError("belief width " + std::to_string(tape.value(beliefs).cols()) + " does not match encoder input " +
                          std::to_string(encoder.attention.wq.value.cols()));
    return num::multi_head_attention(tape, beliefs, encoder.attention, mode);
}

Tensor encode_group(BeliefEncoder& encoder, const std::vector<Tensor>& beliefs) {
    if (beliefs.empty()) throw ConfigError("encode_group needs at least one belief");
    Tape tape;
    std::vector<Var> rows;
    for (const auto& b : beliefs) {
        if (b.size() != beliefs.front().size()) throw ConfigError("beliefs have mixed dimensions");
        rows.push_back(tape.constant(Tensor::row(b.data)));
    }
    Var out = encode_group(tape, encoder, num::concat_rows(rows), Binding::Frozen);
    return tape.value(out);
}

}  // namespace tlvd::belief
