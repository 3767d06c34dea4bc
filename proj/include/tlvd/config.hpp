#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "tlvd/agents.hpp"
#include "tlvd/causal_graph.hpp"
#include "tlvd/evidence.hpp"
#include "tlvd/reward.hpp"
#include "tlvd/training.hpp"

namespace tlvd::config {

enum class Mode { Pipeline, Synthetic };

struct BackendsConfig {
    std::string kind = "mock";                         // mock | http
    std::map<std::string, std::string> executor_tables;  // identity -> mock table path (mock)
    std::vector<std::string> executors;                  // identities, sorted
    std::string coordinator_table;
    std::string judge_table;  // optional
    std::string endpoint;
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key;  // read from the environment variable named by api_key_env
    std::chrono::milliseconds timeout{30000};
    agents::DecodingRange range;
};

struct RunConfig {
    std::string base_dir;
    std::string graph_path;
    std::string domain;
    std::optional<std::uint64_t> seed;
    std::string output_dir = "out";
    Mode mode = Mode::Pipeline;
    graph::BlanketPolicy blanket_policy = graph::BlanketPolicy::Strict;
    training::TrainingConfig training;
    std::size_t rounds = 1;  // inference rounds per latent, and the pipeline episode horizon
    reward::RewardWeights weights;
    evidence::SourceConfig sources;
    BackendsConfig backends;
    std::string truth_path;
    double match_threshold = 0.8;

    /// Sections [run] [training] [reward] [sources] [backends] [executors] [metrics].
    /// Relative paths resolve against `base_dir`. Unknown keys are rejected.
    static RunConfig parse(const std::string& text, const std::string& base_dir);
    /// Parses without validating so that command-line overrides can be applied first.
    static RunConfig load(const std::string& path);

    /// Path checks and cross-field rules. Throws ConfigError.
    void validate() const;
    [[nodiscard]] std::uint64_t require_seed() const;
};

}  // namespace tlvd::config
