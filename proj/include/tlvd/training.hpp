#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tlvd/belief.hpp"
#include "tlvd/game.hpp"
#include "tlvd/mixing.hpp"
#include "tlvd/numerics.hpp"

namespace tlvd::training {

using belief::Observation;
using belief::PromptEmbedding;
using belief::Trajectory;
using mixing::JointTransition;

struct TrainingConfig {
    std::size_t episodes = 100;
    double learning_rate = 0.001;
    double gamma = 0.99;
    std::size_t d_entity = 256;
    std::size_t d_belief = 128;
    std::size_t hidden = 256;
    double lambda_m = 0.1;
    double r_max = 1.0;
    double soft_update_rate = 0.05;
    std::size_t batch_size = 32;
    std::size_t buffer_capacity = 32;
    std::size_t grid = 5;
    std::size_t encoder_heads = 1;
    std::size_t mixing_heads = 2;
    std::uint64_t seed = 0;
    double early_stop_threshold = 1e-3;  // 0 disables early stopping
    std::size_t early_stop_window = 10;
    double epsilon_start = 0.5;
    double epsilon_end = 0.05;
    std::string diagnostic_checkpoint;  // written when training diverges, if set

    /// Throws ConfigError on any out-of-range field.
    void validate() const;
    [[nodiscard]] double epsilon(std::size_t episode) const;
};

/// Bounded FIFO of joint transitions.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 32);

    void push(JointTransition item);
    [[nodiscard]] std::size_t size() const { return items_.size(); }
    [[nodiscard]] std::size_t capacity() const { return capacity_; }
    [[nodiscard]] const std::deque<JointTransition>& items() const { return items_; }

    /// min(n, size) distinct indices drawn uniformly with `rng`, in draw order.
    std::vector<std::size_t> sample_indices(std::size_t n, num::Rng& rng) const;
    std::vector<const JointTransition*> sample(std::size_t n, num::Rng& rng) const;

private:
    std::size_t capacity_;
    std::deque<JointTransition> items_;
};

struct StepOutcome {
    std::vector<double> rewards;            // per agent
    std::vector<Observation> observations;  // next observation per agent
    bool done = false;
};

/// DEC-POMDP environment contract: each agent receives its own observation and reward.
class Environment {
public:
    virtual ~Environment() = default;
    [[nodiscard]] virtual std::size_t agent_count() const = 0;
    [[nodiscard]] virtual std::size_t observation_dim() const = 0;
    virtual std::vector<Observation> reset(num::Rng& rng) = 0;
    virtual StepOutcome step(const std::vector<PromptEmbedding>& actions) = 0;
};

/// Everything that is learned: per-agent belief networks, the group encoder and the mixer.
struct Learner {
    std::vector<belief::BeliefNetwork> beliefs;
    belief::BeliefEncoder encoder;
    mixing::MixingParams mixer;
    std::vector<std::vector<PromptEmbedding>> grids;

    static Learner create(const TrainingConfig& cfg, std::size_t agents, std::size_t d_obs, num::Rng& rng);
    mixing::Agents agents() { return {&beliefs, &encoder}; }
    /// Online and target parameters of every component, with stable prefixed names.
    num::ParameterList all_parameters();

    /// Greedy grid action of one agent.
    PromptEmbedding greedy(std::size_t agent, const Trajectory& trajectory, const Observation& obs);
};

/// Chooses an action for `agent` given its local history.
using ActionSelector = std::function<PromptEmbedding(std::size_t agent, const Trajectory&, const Observation&)>;

ActionSelector epsilon_greedy(Learner& learner, double epsilon, num::Rng& rng);

/// Rolls one episode out; transitions are in chronological order. Exceptions from the
/// environment propagate and the partial episode is discarded.
std::vector<JointTransition> run_episode(Environment& env, const ActionSelector& policy, num::Rng& rng);

struct Evaluation {
    std::optional<double> exploitability;
    std::optional<std::vector<double>> optimal_values;  // V*_i
    std::optional<std::vector<double>> policy_values;   // V^{pi_t}_i
};
/// Optional per-episode probe of the greedy policy.
using Evaluator = std::function<Evaluation(Learner&)>;

struct EpisodeLog {
    std::size_t episode = 0;
    double epsilon = 0.0;
    double reward = 0.0;  // mean total reward per step
    double td_loss = 0.0;  // mean over agents
    double mixing_loss = 0.0;
    std::optional<double> exploitability;
    std::optional<double> regret;
};

struct TrainResult {
    Learner learner;
    game::RegretLedger ledger;
    std::vector<EpisodeLog> log;
    bool stopped_early = false;
};

TrainResult train(const TrainingConfig& config, Environment& env, const Evaluator& evaluator = {});

/// CSV: episode,epsilon,reward,td_loss,mixing_loss,exploitability,regret (empty when unavailable).
void write_metrics_csv(std::ostream& out, const std::vector<EpisodeLog>& log);

/// One-shot synthetic Bayesian game as an environment. Types are drawn from the priors at
/// reset and fixed for the episode; the observation is the one-hot private type.
class SyntheticEnvironment : public Environment {
public:
    explicit SyntheticEnvironment(game::SyntheticGame game);

    [[nodiscard]] std::size_t agent_count() const override { return game_.agent_count(); }
    [[nodiscard]] std::size_t observation_dim() const override { return obs_dim_; }
    std::vector<Observation> reset(num::Rng& rng) override;
    StepOutcome step(const std::vector<PromptEmbedding>& actions) override;

    [[nodiscard]] const game::SyntheticGame& game() const { return game_; }
    [[nodiscard]] const std::vector<std::size_t>& types() const { return types_; }
    [[nodiscard]] Observation observe(std::size_t agent, std::size_t type, std::uint64_t round) const;

private:
    game::SyntheticGame game_;
    std::size_t obs_dim_;
    std::vector<std::size_t> types_;
    std::uint64_t round_ = 0;
};

/// min(|A|-1, floor(T * |A|)).
std::size_t discretize(const PromptEmbedding& e, std::size_t action_count);

/// The learner's greedy pure profile in a synthetic game.
game::PureProfile greedy_profile(Learner& learner, const SyntheticEnvironment& env);

/// Exploitability plus V*_i and V^{pi}_i of the greedy profile.
Evaluator synthetic_evaluator(const SyntheticEnvironment& env);

}  // namespace tlvd::training
