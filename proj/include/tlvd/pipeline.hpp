#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tlvd/agents.hpp"
#include "tlvd/causal_graph.hpp"
#include "tlvd/config.hpp"
#include "tlvd/evidence.hpp"
#include "tlvd/metrics.hpp"
#include "tlvd/records.hpp"
#include "tlvd/training.hpp"

namespace tlvd::pipeline {

/// Executor observation: previous T, previous p, similarity of the last answer to the
/// coordinator output, mean pairwise similarity of the answers, last evidence reliability.
constexpr std::size_t kObservationDim = 5;

struct Backends {
    std::vector<std::unique_ptr<agents::ExecutorBackend>> executors;  // sorted by identity
    std::unique_ptr<agents::ExecutorBackend> coordinator;
    std::unique_ptr<agents::ExecutorBackend> judge;

    static Backends create(const config::RunConfig& config);
    [[nodiscard]] std::vector<agents::ExecutorBackend*> executor_ptrs() const;
};

/// Verification memoised by (latent, normalised claim); fixtures make it deterministic.
class VerificationCache {
public:
    explicit VerificationCache(evidence::Verifier& verifier) : verifier_(verifier) {}
    const evidence::Verification& get(const LatentHypothesis& h, const graph::CausalGraph& graph);

private:
    evidence::Verifier& verifier_;
    std::map<std::pair<std::string, std::string>, evidence::Verification> cache_;
};

struct RoundContext {
    const graph::CausalGraph* graph = nullptr;
    std::vector<agents::ExecutorBackend*> executors;
    agents::ExecutorBackend* coordinator = nullptr;
    VerificationCache* verification = nullptr;
    std::string domain;
    agents::DecodingRange range;
    std::chrono::milliseconds timeout{30000};
    reward::RewardWeights weights;
    double r_max = 1.0;
};

struct RoundResult {
    std::string query;
    std::vector<agents::ExecutorAnswer> answers;
    std::vector<EvidenceRecord> candidates;  // verification of every distinct executor answer
    agents::Aggregation aggregation;
    evidence::Verification final_evidence;  // verification of the aggregated hypothesis
    std::vector<double> rewards;              // per executor; 0 for failed executors
    std::vector<reward::RewardBreakdown> breakdowns;
    std::vector<training::Observation> observations;
};

/// One inference round for one latent: query, fan-out, candidate verification, aggregation,
/// verification of the result, rewards and next observations.
RoundResult play_round(const RoundContext& ctx, const graph::LatentQuery& latent,
                       const std::optional<std::string>& digest, const std::vector<belief::PromptEmbedding>& actions,
                       std::uint64_t round);

training::Observation initial_observation();

/// Episodes pick a latent uniformly and run `rounds` rounds with evidence feedback.
class PipelineEnvironment : public training::Environment {
public:
    PipelineEnvironment(RoundContext ctx, std::vector<graph::LatentQuery> latents, std::size_t rounds);

    [[nodiscard]] std::size_t agent_count() const override { return ctx_.executors.size(); }
    [[nodiscard]] std::size_t observation_dim() const override { return kObservationDim; }
    std::vector<training::Observation> reset(num::Rng& rng) override;
    training::StepOutcome step(const std::vector<belief::PromptEmbedding>& actions) override;

private:
    RoundContext ctx_;
    std::vector<graph::LatentQuery> latents_;
    std::size_t rounds_;
    std::size_t current_ = 0;
    std::uint64_t round_ = 0;
    std::optional<std::string> digest_;
    bool started_ = false;
};

/// Everything a stage needs, built once from a validated config.
class Session {
public:
    explicit Session(config::RunConfig config);

    [[nodiscard]] const config::RunConfig& config() const { return config_; }
    [[nodiscard]] const graph::CausalGraph& graph() const;
    [[nodiscard]] std::vector<graph::LatentQuery> latents() const;
    RoundContext context();
    evidence::Verifier& verifier() { return *verifier_; }

    /// Fresh learner shaped for this session's agents.
    training::Learner make_learner() const;

private:
    config::RunConfig config_;
    std::optional<graph::CausalGraph> graph_;
    Backends backends_;
    evidence::SteadyClock clock_;
    std::unique_ptr<evidence::SourceSet> sources_;
    std::unique_ptr<evidence::Verifier> verifier_;
    std::unique_ptr<VerificationCache> cache_;
};

training::TrainResult train_stage(Session& session);

struct Inference {
    std::vector<LatentHypothesis> hypotheses;
    std::vector<RoundResult> final_rounds;
};

/// Greedy policy of the learner, `rounds` rounds per latent in id order.
Inference infer_stage(Session& session, training::Learner& learner);
std::vector<EvidenceRecord> verify_stage(Session& session, const std::vector<LatentHypothesis>& hypotheses);
metrics::MetricsReport eval_stage(Session& session, const std::vector<LatentHypothesis>& hypotheses,
                                  const std::vector<EvidenceRecord>& records);

void save_learner(const std::string& path, training::Learner& learner, std::uint64_t seed);
void load_learner(const std::string& path, training::Learner& learner);

}  // namespace tlvd::pipeline
