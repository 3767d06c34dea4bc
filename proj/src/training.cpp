#include "tlvd/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include <spdlog/spdlog.h>

#include "tlvd/checkpoint.hpp"
#include "tlvd/errors.hpp"

namespace tlvd::training {

using num::Binding;
using num::ParameterList;
using num::Tape;

namespace {

num::Rng stream(std::uint64_t seed, std::uint64_t k) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(k)};
    return num::Rng(seq);
}

bool finite_parameters(const ParameterList& params) {
    return std::all_of(params.begin(), params.end(), [](const auto& p) { return num::all_finite(p.param->value); });
}

double optimize(Tape& tape, num::Var loss, const ParameterList& zero, const ParameterList& step, double lr) {
    const double value = tape.value(loss).item();
    if (!std::isfinite(value)) return value;
    num::zero_grad(zero);
    tape.backward(loss);
    num::adam_step(step, lr);
    return value;
}

}  // namespace

void TrainingConfig::validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0,1)");
    if (lambda_m < 0.0) throw ConfigError("lambda_m must be non-negative");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(r_max >= 0.0)) throw ConfigError("R_max must be non-negative");
    if (!(soft_update_rate >= 0.0 && soft_update_rate <= 1.0)) throw ConfigError("soft_update_rate must lie in [0,1]");
    if (d_entity == 0 || d_belief == 0 || hidden == 0 || grid == 0 || batch_size == 0 || buffer_capacity == 0 ||
        encoder_heads == 0 || mixing_heads == 0)
        throw ConfigError("training dimensions, grid, batch size and buffer capacity must be positive");
    if (d_entity % mixing_heads != 0 || d_entity % encoder_heads != 0)
        throw ConfigError("d_entity must be divisible by the attention head counts");
    if (early_stop_threshold < 0.0 || early_stop_window == 0) throw ConfigError("invalid early-stop settings");
    if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0))
        throw ConfigError("exploration rates must lie in [0,1]");
}

double TrainingConfig::epsilon(std::size_t episode) const {
    const std::size_t half = episodes / 2;
    if (half == 0) return epsilon_end;
    const double f = std::min(1.0, static_cast<double>(episode) / static_cast<double>(half));
    return epsilon_start + (epsilon_end - epsilon_start) * f;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(JointTransition item) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(std::move(item));
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, num::Rng& rng) const {
    std::vector<std::size_t> idx(items_.size());
    std::iota(idx.begin(), idx.end(), 0);
    n = std::min(n, idx.size());
    // partial Fisher-Yates
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n);
    return idx;
}

std::vector<const JointTransition*> ReplayBuffer::sample(std::size_t n, num::Rng& rng) const {
    std::vector<const JointTransition*> out;
    for (auto i : sample_indices(n, rng)) out.push_back(&items_[i]);
    return out;
}

Learner Learner::create(const TrainingConfig& cfg, std::size_t agents, std::size_t d_obs, num::Rng& rng) {
    if (agents == 0) throw ConfigError("at least one agent is required");
    belief::BeliefConfig bc;
    bc.d_obs = d_obs;
    bc.d_belief = cfg.d_belief;
    bc.hidden = cfg.hidden;
    bc.d_entity = cfg.d_entity;
    bc.grid = cfg.grid;
    bc.encoder_heads = cfg.encoder_heads;
    Learner l;
    for (std::size_t i = 0; i < agents; ++i) {
        l.beliefs.push_back(belief::BeliefNetwork::create(bc, rng));
        l.grids.push_back(belief::candidate_grid(cfg.grid));
    }
    l.encoder = belief::BeliefEncoder::create(cfg.d_belief, cfg.d_entity, cfg.encoder_heads, rng);
    l.mixer = mixing::MixingParams::create({cfg.d_entity, cfg.mixing_heads}, rng);
    return l;
}

ParameterList Learner::all_parameters() {
    ParameterList out;
    for (std::size_t i = 0; i < beliefs.size(); ++i)
        num::append(out, num::prefixed("agent" + std::to_string(i) + ".", beliefs[i].all_parameters()));
    num::append(out, encoder.parameters());
    num::append(out, mixer.online_parameters());
    num::append(out, mixer.target_parameters());
    return out;
}

PromptEmbedding Learner::greedy(std::size_t agent, const Trajectory& trajectory, const Observation& obs) {
    const auto& grid = grids.at(agent);
    return grid[belief::greedy_action(beliefs.at(agent), trajectory, obs, grid)];
}

ActionSelector epsilon_greedy(Learner& learner, double epsilon, num::Rng& rng) {
    return [&learner, epsilon, &rng](std::size_t agent, const Trajectory& trajectory, const Observation& obs) {
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        if (coin(rng) < epsilon) {
            const auto& grid = learner.grids.at(agent);
            std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
            return grid[pick(rng)];
        }
        return learner.greedy(agent, trajectory, obs);
    };
}

std::vector<JointTransition> run_episode(Environment& env, const ActionSelector& policy, num::Rng& rng) {
    const std::size_t n = env.agent_count();
    auto observations = env.reset(rng);
    if (observations.size() != n) throw InvariantError("environment returned the wrong number of observations");
    std::vector<Trajectory> trajectories(n);
    std::vector<JointTransition> out;
    for (bool done = false; !done;) {
        std::vector<PromptEmbedding> actions;
        for (std::size_t i = 0; i < n; ++i) actions.push_back(policy(i, trajectories[i], observations[i]));
        auto outcome = env.step(actions);
        if (outcome.rewards.size() != n || outcome.observations.size() != n)
            throw InvariantError("environment step returned mismatched agent counts");
        JointTransition joint;
        joint.done = outcome.done;
        for (std::size_t i = 0; i < n; ++i) {
            belief::AgentTransition t;
            t.trajectory = trajectories[i];
            t.observation = observations[i];
            t.action = actions[i];
            t.reward = outcome.rewards[i];
            trajectories[i].steps.push_back({observations[i], actions[i]});
            t.next_trajectory = trajectories[i];
            t.next_observation = outcome.observations[i];
            t.done = outcome.done;
            joint.reward_total += outcome.rewards[i] / static_cast<double>(n);
            joint.agents.push_back(std::move(t));
        }
        out.push_back(std::move(joint));
        observations = std::move(outcome.observations);
        done = outcome.done;
    }
    return out;
}

TrainResult train(const TrainingConfig& config, Environment& env, const Evaluator& evaluator) {
    config.validate();
    num::Rng init = stream(config.seed, 0);
    num::Rng env_rng = stream(config.seed, 1);
    num::Rng explore_rng = stream(config.seed, 2);
    num::Rng replay_rng = stream(config.seed, 3);

    TrainResult result{Learner::create(config, env.agent_count(), env.observation_dim(), init), {}, {}, false};
    Learner& L = result.learner;
    ReplayBuffer buffer(config.buffer_capacity);
    const std::size_t n = L.beliefs.size();

    ParameterList joint;  // everything the mixing loss trains
    num::append(joint, L.mixer.online_parameters());
    num::append(joint, L.encoder.parameters());
    for (auto& b : L.beliefs) num::append(joint, b.online_parameters());

    auto diverge = [&](const std::string& what, std::size_t episode) {
        if (!config.diagnostic_checkpoint.empty()) {
            std::ofstream out(config.diagnostic_checkpoint);
            num::write_checkpoint(out, "learner", config.seed, L.all_parameters());
        }
        throw DivergenceError(what + " is not finite at episode " + std::to_string(episode) +
                              (config.diagnostic_checkpoint.empty() ? std::string()
                                                                    : "; parameters saved to " + config.diagnostic_checkpoint));
    };

    std::vector<double> rewards;
    for (std::size_t ep = 0; ep < config.episodes; ++ep) {
        EpisodeLog log;
        log.episode = ep + 1;
        log.epsilon = config.epsilon(ep);
        auto transitions = run_episode(env, epsilon_greedy(L, log.epsilon, explore_rng), env_rng);
        for (const auto& t : transitions) log.reward += t.reward_total / static_cast<double>(transitions.size());
        for (auto& t : transitions) buffer.push(std::move(t));

        const auto batch = buffer.sample(config.batch_size, replay_rng);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<const belief::AgentTransition*> slice;
            for (const auto* j : batch) slice.push_back(&j->agents[i]);
            auto online = L.beliefs[i].online_parameters();
            Tape tape;
            const double v = optimize(tape, belief::td_loss(tape, L.beliefs[i], slice, config.gamma, L.grids[i]), online,
                                      online, config.learning_rate);
            if (!std::isfinite(v)) diverge("TD loss of agent " + std::to_string(i), ep + 1);
            log.td_loss += v / static_cast<double>(n);
        }
        {
            Tape tape;
            auto loss = mixing::mixing_loss(tape, L.mixer, L.agents(), batch, config.gamma, config.lambda_m, L.grids);
            log.mixing_loss = optimize(tape, loss.loss, joint, joint, config.learning_rate);
            if (!std::isfinite(log.mixing_loss)) diverge("mixing loss", ep + 1);
        }
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<const belief::AgentTransition*> slice;
            for (const auto* j : batch) slice.push_back(&j->agents[i]);
            auto& b = L.beliefs[i];
            ParameterList heads = {{"temp_w", &b.temp_w}, {"temp_b", &b.temp_b}, {"penalty_w", &b.penalty_w},
                                   {"penalty_b", &b.penalty_b}};
            Tape tape;
            const double v = optimize(tape, belief::head_alignment_loss(tape, b, slice, L.grids[i]),
                                      b.online_parameters(), heads, config.learning_rate);
            if (!std::isfinite(v)) diverge("head alignment loss", ep + 1);
        }
        mixing::update_targets(L.mixer, L.beliefs, config.soft_update_rate);
        if (!finite_parameters(L.all_parameters())) diverge("a parameter", ep + 1);

        if (evaluator) {
            auto ev = evaluator(L);
            log.exploitability = ev.exploitability;
            if (ev.optimal_values && ev.policy_values) {
                result.ledger.record({ep + 1, *ev.optimal_values, *ev.policy_values});
                log.regret = result.ledger.total_regret(result.ledger.size());
            }
        }
        spdlog::debug("episode {} eps={:.3f} reward={:.4f} td={:.5f} mix={:.5f}", log.episode, log.epsilon, log.reward,
                      log.td_loss, log.mixing_loss);
        result.log.push_back(log);

        rewards.push_back(log.reward);
        const std::size_t w = config.early_stop_window;
        if (config.early_stop_threshold > 0.0 && ep >= config.episodes / 2 && rewards.size() > w) {
            const auto end = rewards.end();
            const double now = std::accumulate(end - static_cast<std::ptrdiff_t>(w), end, 0.0) / static_cast<double>(w);
            const double before =
                std::accumulate(end - static_cast<std::ptrdiff_t>(w) - 1, end - 1, 0.0) / static_cast<double>(w);
            if (std::abs(now - before) < config.early_stop_threshold) {
                result.stopped_early = ep + 1 < config.episodes;
                break;
            }
        }
    }
    return result;
}

void write_metrics_csv(std::ostream& out, const std::vector<EpisodeLog>& log) {
    out << "episode,epsilon,reward,td_loss,mixing_loss,exploitability,regret\n";
    auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
    for (const auto& e : log)
        out << e.episode << ',' << std::to_string(e.epsilon) << ',' << std::to_string(e.reward) << ','
            << std::to_string(e.td_loss) << ',' << std::to_string(e.mixing_loss) << ',' << opt(e.exploitability) << ','
            << opt(e.regret) << '\n';
}

SyntheticEnvironment::SyntheticEnvironment(game::SyntheticGame game) : game_(std::move(game)) {
    game_.validate();
    obs_dim_ = 0;
    for (std::size_t i = 0; i < game_.agent_count(); ++i) obs_dim_ = std::max(obs_dim_, game_.type_count(i));
}

Observation SyntheticEnvironment::observe(std::size_t, std::size_t type, std::uint64_t round) const {
    Observation o;
    o.features.assign(obs_dim_, 0.0);
    o.features.at(type) = 1.0;
    o.round_index = round;
    return o;
}

std::vector<Observation> SyntheticEnvironment::reset(num::Rng& rng) {
    types_.clear();
    round_ = 0;
    std::vector<Observation> out;
    for (std::size_t i = 0; i < game_.agent_count(); ++i) {
        std::discrete_distribution<std::size_t> prior(game_.priors[i].begin(), game_.priors[i].end());
        types_.push_back(prior(rng));
        out.push_back(observe(i, types_.back(), 0));
    }
    return out;
}

StepOutcome SyntheticEnvironment::step(const std::vector<PromptEmbedding>& actions) {
    if (types_.empty()) throw UsageError("step called before reset");
    if (actions.size() != game_.agent_count()) throw ConfigError("one action per agent is required");
    std::vector<std::size_t> discrete;
    for (std::size_t i = 0; i < actions.size(); ++i) discrete.push_back(discretize(actions[i], game_.action_counts[i]));
    StepOutcome out;
    ++round_;
    for (std::size_t i = 0; i < actions.size(); ++i) {
        out.rewards.push_back(game_.payoff(i, types_, discrete));
        out.observations.push_back(observe(i, types_[i], round_));
    }
    out.done = round_ >= game_.horizon;
    return out;
}

std::size_t discretize(const PromptEmbedding& e, std::size_t action_count) {
    const double scaled = std::floor(e.temperature * static_cast<double>(action_count));
    return std::min(action_count - 1, static_cast<std::size_t>(std::max(0.0, scaled)));
}

game::PureProfile greedy_profile(Learner& learner, const SyntheticEnvironment& env) {
    const auto& g = env.game();
    game::PureProfile out(g.agent_count());
    for (std::size_t i = 0; i < g.agent_count(); ++i)
        for (std::size_t t = 0; t < g.type_count(i); ++t)
            out[i].push_back(discretize(learner.greedy(i, {}, env.observe(i, t, 0)), g.action_counts[i]));
    return out;
}

Evaluator synthetic_evaluator(const SyntheticEnvironment& env) {
    const auto optimal = game::equilibrium_values(env.game());
    return [&env, optimal](Learner& learner) {
        const auto& g = env.game();
        const auto profile = game::to_profile(g, greedy_profile(learner, env));
        Evaluation ev;
        ev.exploitability = game::exploitability(g, profile);
        ev.optimal_values = optimal;
        std::vector<double> current;
        for (std::size_t i = 0; i < g.agent_count(); ++i) current.push_back(game::expected_utility(g, profile, i));
        ev.policy_values = current;
        return ev;
    };
}

}  // namespace tlvd::training
