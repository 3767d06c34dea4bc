#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlvd/belief.hpp"
#include "tlvd/causal_graph.hpp"
#include "tlvd/records.hpp"
#include "tlvd/reward.hpp"

namespace tlvd::agents {

using belief::PromptEmbedding;
using reward::AnswerRecord;

/// Affine ranges the unit prompt embedding is mapped onto.
struct DecodingRange {
    double temperature_lo = 0.0;
    double temperature_hi = 2.0;
    double penalty_hi = 2.0;

    void validate() const;
};

struct DecodingParams {
    double temperature = 0.0;
    double repetition_penalty = 1.0;
};

DecodingParams decode_params(const PromptEmbedding& e, const DecodingRange& range = {});
/// Inverse of decode_params, back onto the unit square.
PromptEmbedding encode_params(const DecodingParams& p, const DecodingRange& range = {});

/// Text-generation backend. Implementations must tolerate concurrent generate calls.
class ExecutorBackend {
public:
    virtual ~ExecutorBackend() = default;
    [[nodiscard]] virtual const std::string& identity() const = 0;
    /// Throws BackendError (or a subclass) instead of returning a partial record.
    virtual AnswerRecord generate(const std::string& query, const DecodingParams& params) = 0;
    virtual std::vector<double> embed(const std::string& text) = 0;
};

constexpr std::size_t kMockEmbeddingDim = 64;

struct MockEntry {
    std::string query_hash;
    std::optional<int> temperature_bucket;  // nullopt matches any bucket
    std::optional<int> penalty_bucket;
    std::string text;
    double confidence = 1.0;
    int delay_ms = 0;
    bool fail = false;  // scripted backend error
};

/// Deterministic table-driven backend. Lookup prefers an exact bucket match over wildcards.
class MockBackend : public ExecutorBackend {
public:
    MockBackend(std::string identity, std::vector<MockEntry> table, std::uint64_t seed, DecodingRange range = {});
    /// {"entries": [{"query" | "query_hash", "t_bucket"?, "p_bucket"?, "text", "confidence"?, "delay_ms"?, "fail"?}]}
    static MockBackend from_json(std::string identity, const nlohmann::json& doc, std::uint64_t seed,
                                 DecodingRange range = {});
    static MockBackend load(std::string identity, const std::string& path, std::uint64_t seed, DecodingRange range = {});

    static std::string query_hash(const std::string& query);
    /// floor(u / 0.25) clamped to 0..3, u being a unit-square coordinate.
    static int bucket(double unit);

    [[nodiscard]] const std::string& identity() const override { return identity_; }
    AnswerRecord generate(const std::string& query, const DecodingParams& params) override;
    std::vector<double> embed(const std::string& text) override;

private:
    std::string identity_;
    std::vector<MockEntry> table_;
    std::uint64_t seed_;
    DecodingRange range_;
};

struct HttpBackendConfig {
    std::string identity;
    std::string endpoint;  // scheme://host[:port]
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key;
    std::chrono::milliseconds timeout{30000};
    std::uint64_t embedding_seed = 0;
};

/// Chat-completion client. Confidence is exp(mean token log-probability) when the
/// response carries log-probabilities, 0.5 otherwise. Embeddings are local feature hashes.
class HttpBackend : public ExecutorBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    [[nodiscard]] const std::string& identity() const override { return config_.identity; }
    AnswerRecord generate(const std::string& query, const DecodingParams& params) override;
    std::vector<double> embed(const std::string& text) override;

    static nlohmann::json request_body(const std::string& model, const std::string& query, const DecodingParams& params);
    static AnswerRecord parse_response(const std::string& body);

private:
    HttpBackendConfig config_;
};

/// Structural prompt for one latent: role of every blanket member, then the optional
/// evidence digest from the previous round.
std::string build_query(const graph::Variable& latent, const graph::MarkovBlanket& blanket,
                        const graph::CausalGraph& graph, const std::string& domain,
                        const std::optional<std::string>& evidence_digest = std::nullopt);

struct ExecutorAnswer {
    std::string executor;
    std::optional<AnswerRecord> record;  // empty on failure
    std::string failure;
    PromptEmbedding action;
};

/// Calls every executor concurrently. Results are sorted by executor identity; failures and
/// timeouts become markers. FixtureError propagates. Throws BackendError when all fail.
std::vector<ExecutorAnswer> fan_out(const std::string& query, const std::vector<ExecutorBackend*>& executors,
                                    const std::vector<PromptEmbedding>& actions, std::chrono::milliseconds timeout,
                                    const DecodingRange& range = {});

/// First non-empty line is the name, the remaining lines the semantics.
std::pair<std::string, std::string> parse_answer(const std::string& text);

std::string coordinator_prompt(const std::string& latent_id, const std::vector<ExecutorAnswer>& answers,
                               const std::vector<EvidenceRecord>& evidence);

struct Aggregation {
    AnswerRecord coordinator;
    LatentHypothesis hypothesis;
};

/// Coordinator output and the hypothesis it implies. Cited evidence is every input record for
/// this latent whose claim matches the final name and that retrieved documents.
Aggregation aggregate(const std::string& latent_id, const std::vector<ExecutorAnswer>& answers,
                      const std::vector<EvidenceRecord>& evidence, ExecutorBackend& coordinator);

}  // namespace tlvd::agents
