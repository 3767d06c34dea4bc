#include "tlvd/pipeline.hpp"

#include <fstream>
#include <random>
#include <set>

#include <spdlog/spdlog.h>

#include "tlvd/checkpoint.hpp"
#include "tlvd/errors.hpp"
#include "tlvd/numerics.hpp"
#include "tlvd/text.hpp"

namespace tlvd::pipeline {

Backends Backends::create(const config::RunConfig& config) {
    Backends b;
    const auto& bc = config.backends;
    if (bc.kind == "mock") {
        const auto seed = config.require_seed();
        for (const auto& name : bc.executors)
            b.executors.push_back(std::make_unique<agents::MockBackend>(
                agents::MockBackend::load(name, bc.executor_tables.at(name), seed, bc.range)));
        b.coordinator = std::make_unique<agents::MockBackend>(
            agents::MockBackend::load("coordinator", bc.coordinator_table, seed, bc.range));
        if (!bc.judge_table.empty())
            b.judge = std::make_unique<agents::MockBackend>(agents::MockBackend::load("judge", bc.judge_table, seed, bc.range));
    } else {
        auto http = [&](const std::string& identity) {
            agents::HttpBackendConfig hc;
            hc.identity = identity;
            hc.endpoint = bc.endpoint;
            hc.path = bc.path;
            hc.model = bc.model;
            hc.api_key = bc.api_key;
            hc.timeout = bc.timeout;
            hc.embedding_seed = config.seed.value_or(0);
            return std::make_unique<agents::HttpBackend>(hc);
        };
        for (const auto& name : bc.executors) b.executors.push_back(http(name));
        b.coordinator = http("coordinator");
    }
    return b;
}

std::vector<agents::ExecutorBackend*> Backends::executor_ptrs() const {
    std::vector<agents::ExecutorBackend*> out;
    for (const auto& e : executors) out.push_back(e.get());
    return out;
}

const evidence::Verification& VerificationCache::get(const LatentHypothesis& h, const graph::CausalGraph& graph) {
    const std::pair<std::string, std::string> key{h.latent_id, text::normalize_name(h.proposed_name) + "\n" + h.proposed_name};
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, verifier_.verify(h, graph)).first;
    return it->second;
}

training::Observation initial_observation() { return {std::vector<double>(kObservationDim, 0.0), 0}; }

RoundResult play_round(const RoundContext& ctx, const graph::LatentQuery& latent,
                       const std::optional<std::string>& digest, const std::vector<belief::PromptEmbedding>& actions,
                       std::uint64_t round) {
    RoundResult out;
    out.query = agents::build_query(latent.latent, latent.blanket, *ctx.graph, ctx.domain, digest);
    out.answers = agents::fan_out(out.query, ctx.executors, actions, ctx.timeout, ctx.range);

    std::set<std::string> seen;
    std::vector<reward::AnswerRecord> ok;
    std::vector<reward::EvidenceCounts> counts;
    for (const auto& a : out.answers) {
        if (!a.record) continue;
        LatentHypothesis h;
        h.latent_id = latent.latent.id;
        h.proposed_name = agents::parse_answer(a.record->text).first;
        const auto& v = ctx.verification->get(h, *ctx.graph);
        for (const auto& r : v.records)
            if (seen.insert(r.record_id).second) out.candidates.push_back(r);
        ok.push_back(*a.record);
        counts.push_back({v.supported, v.searched});
    }
    out.aggregation = agents::aggregate(latent.latent.id, out.answers, out.candidates, *ctx.coordinator);
    out.final_evidence = ctx.verification->get(out.aggregation.hypothesis, *ctx.graph);

    const auto scored = reward::score_answers(ok, out.aggregation.coordinator, counts, ctx.weights, ctx.r_max);
    double pairwise = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < ok.size(); ++i)
        for (std::size_t j = i + 1; j < ok.size(); ++j, ++pairs)
            pairwise += num::cosine_similarity(ok[i].embedding, ok[j].embedding);
    if (pairs > 0) pairwise /= static_cast<double>(pairs);

    std::size_t k = 0;
    for (const auto& a : out.answers) {
        training::Observation o;
        o.round_index = round + 1;
        double sim = 0.0, er = 0.0, total = 0.0;
        if (a.record) {
            sim = num::cosine_similarity(a.record->embedding, out.aggregation.coordinator.embedding);
            er = scored[k].evidence_reliability;
            total = scored[k].total;
            out.breakdowns.push_back(scored[k]);
            ++k;
        } else {
            out.breakdowns.push_back({});
        }
        o.features = {a.action.temperature, a.action.penalty, sim, pairwise, er};
        out.observations.push_back(std::move(o));
        out.rewards.push_back(total);
    }
    return out;
}

PipelineEnvironment::PipelineEnvironment(RoundContext ctx, std::vector<graph::LatentQuery> latents, std::size_t rounds)
    : ctx_(std::move(ctx)), latents_(std::move(latents)), rounds_(rounds) {
    if (latents_.empty()) throw ConfigError("the graph has no latent variables to train on");
    if (ctx_.executors.empty()) throw ConfigError("the pipeline needs at least one executor");
    if (rounds_ == 0) throw ConfigError("episode horizon must be positive");
}

std::vector<training::Observation> PipelineEnvironment::reset(num::Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, latents_.size() - 1);
    current_ = pick(rng);
    round_ = 0;
    digest_.reset();
    started_ = true;
    return std::vector<training::Observation>(agent_count(), initial_observation());
}

training::StepOutcome PipelineEnvironment::step(const std::vector<belief::PromptEmbedding>& actions) {
    if (!started_) throw UsageError("step called before reset");
    auto result = play_round(ctx_, latents_[current_], digest_, actions, round_);
    ++round_;
    digest_ = evidence::digest(result.final_evidence.records);
    return {std::move(result.rewards), std::move(result.observations), round_ >= rounds_};
}

Session::Session(config::RunConfig config) : config_(std::move(config)) {
    if (config_.mode != config::Mode::Pipeline) return;
    graph_ = graph::load_graph(config_.graph_path);
    backends_ = Backends::create(config_);
    sources_ = std::make_unique<evidence::SourceSet>(config_.sources, clock_);
    verifier_ = std::make_unique<evidence::Verifier>(config_.sources, sources_->searchers(), backends_.judge.get());
    cache_ = std::make_unique<VerificationCache>(*verifier_);
}

const graph::CausalGraph& Session::graph() const {
    if (!graph_) throw ConfigError("this command needs a graph (pipeline mode)");
    return *graph_;
}

std::vector<graph::LatentQuery> Session::latents() const { return graph::latent_queries(graph(), config_.blanket_policy); }

RoundContext Session::context() {
    RoundContext ctx;
    ctx.graph = &graph();
    ctx.executors = backends_.executor_ptrs();
    ctx.coordinator = backends_.coordinator.get();
    ctx.verification = cache_.get();
    ctx.domain = config_.domain;
    ctx.range = config_.backends.range;
    ctx.timeout = config_.backends.timeout;
    ctx.weights = config_.weights;
    ctx.r_max = config_.training.r_max;
    return ctx;
}

training::Learner Session::make_learner() const {
    num::Rng rng(config_.require_seed());
    if (config_.mode == config::Mode::Synthetic) {
        training::SyntheticEnvironment env(game::SyntheticGame::coordination());
        return training::Learner::create(config_.training, env.agent_count(), env.observation_dim(), rng);
    }
    return training::Learner::create(config_.training, backends_.executors.size(), kObservationDim, rng);
}

training::TrainResult train_stage(Session& session) {
    auto cfg = session.config().training;
    cfg.seed = session.config().require_seed();
    if (session.config().mode == config::Mode::Synthetic) {
        auto g = game::SyntheticGame::coordination();
        g.horizon = session.config().rounds;
        training::SyntheticEnvironment env(g);
        return training::train(cfg, env, training::synthetic_evaluator(env));
    }
    PipelineEnvironment env(session.context(), session.latents(), session.config().rounds);
    return training::train(cfg, env);
}

Inference infer_stage(Session& session, training::Learner& learner) {
    const auto ctx = session.context();
    if (learner.beliefs.size() != ctx.executors.size())
        throw ConfigError("learner has " + std::to_string(learner.beliefs.size()) + " agents but the config has " +
                          std::to_string(ctx.executors.size()) + " executors");
    Inference out;
    for (const auto& latent : session.latents()) {
        const std::size_t n = ctx.executors.size();
        std::vector<belief::Trajectory> trajectories(n);
        std::vector<training::Observation> obs(n, initial_observation());
        std::optional<std::string> digest;
        std::optional<RoundResult> last;
        for (std::uint64_t r = 0; r < session.config().rounds; ++r) {
            std::vector<belief::PromptEmbedding> actions;
            for (std::size_t i = 0; i < n; ++i) actions.push_back(learner.greedy(i, trajectories[i], obs[i]));
            auto result = play_round(ctx, latent, digest, actions, r);
            for (std::size_t i = 0; i < n; ++i) trajectories[i].steps.push_back({obs[i], actions[i]});
            obs = result.observations;
            digest = evidence::digest(result.final_evidence.records);
            last = std::move(result);
        }
        spdlog::info("latent {} -> '{}'", latent.latent.id, last->aggregation.hypothesis.proposed_name);
        out.hypotheses.push_back(last->aggregation.hypothesis);
        out.final_rounds.push_back(std::move(*last));
    }
    return out;
}

std::vector<EvidenceRecord> verify_stage(Session& session, const std::vector<LatentHypothesis>& hypotheses) {
    std::vector<EvidenceRecord> out;
    auto ctx = session.context();
    for (const auto& h : hypotheses) {
        const auto& v = ctx.verification->get(h, session.graph());
        if (v.unavailable) spdlog::warn("verification unavailable for {}", h.latent_id);
        out.insert(out.end(), v.records.begin(), v.records.end());
    }
    return out;
}

metrics::MetricsReport eval_stage(Session& session, const std::vector<LatentHypothesis>& hypotheses,
                                  const std::vector<EvidenceRecord>& records) {
    if (session.config().truth_path.empty()) throw ConfigError("[metrics] truth is required for evaluation");
    const auto truth = metrics::GroundTruth::load(session.config().truth_path);
    truth.validate(session.graph());
    metrics::MatcherConfig matcher;
    matcher.threshold = session.config().match_threshold;
    auto* coordinator = session.context().coordinator;
    matcher.embed = [coordinator](const std::string& name) { return coordinator->embed(name); };
    return metrics::evaluate(hypotheses, records, session.graph(), truth, matcher);
}

void save_learner(const std::string& path, training::Learner& learner, std::uint64_t seed) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write checkpoint " + path);
    num::write_checkpoint(out, "learner", seed, learner.all_parameters());
}

void load_learner(const std::string& path, training::Learner& learner) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open checkpoint " + path);
    num::load_into(num::read_checkpoint(in), learner.all_parameters());
}

}  // namespace tlvd::pipeline
