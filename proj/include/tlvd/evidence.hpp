#pragma once

#include <chrono>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "tlvd/agents.hpp"
#include "tlvd/causal_graph.hpp"
#include "tlvd/records.hpp"

namespace tlvd::evidence {

struct SourceSettings {
    bool enabled = true;
    std::string endpoint;
    double rate_limit = 1.0;  // requests per second
};

struct SourceConfig {
    SourceSettings arxiv{true, "http://export.arxiv.org/api/query", 0.33};
    SourceSettings wikipedia{true, "https://en.wikipedia.org/w/rest.php/v1/search/page", 5.0};
    SourceSettings local{true, "", 100.0};
    std::size_t top_k = 5;
    double support_threshold = 0.5;
    std::size_t snippet_window = 40;  // tokens
    bool offline = true;
    std::string fixture_dir;
    std::string corpus_dir;
    std::string record_dir;  // when set in live mode, responses are recorded here

    /// Throws ConfigError when top_k is 0 or an enabled source has a non-positive rate.
    void validate() const;
    [[nodiscard]] const SourceSettings& settings(Source s) const;
    SourceSettings& settings(Source s);
};

class Clock {
public:
    virtual ~Clock() = default;
    virtual double now() = 0;  // seconds
    virtual void sleep_until(double t) = 0;
};

class SteadyClock : public Clock {
public:
    double now() override;
    void sleep_until(double t) override;
};

/// Time only moves through sleep_until and advance.
class VirtualClock : public Clock {
public:
    double now() override { return t_; }
    void sleep_until(double t) override { t_ = std::max(t_, t); }
    void advance(double dt) { t_ += dt; }

private:
    double t_ = 0.0;
};

/// Sliding-window limiter: at most max(1, floor(rate)) requests in any window of
/// max(1, floor(rate) / rate) seconds, so no one-second window exceeds the rate.
class RateLimiter {
public:
    RateLimiter(double per_second, Clock& clock);
    /// Blocks (through the clock) until a request is allowed, then records it.
    double acquire();
    [[nodiscard]] std::size_t capacity() const { return capacity_; }
    [[nodiscard]] double window() const { return window_; }

private:
    std::size_t capacity_;
    double window_;
    Clock& clock_;
    std::mutex mutex_;
    std::deque<double> stamps_;
};

/// Raw GET transport so that live and recorded payloads share the parsers.
class Transport {
public:
    virtual ~Transport() = default;
    /// Throws RetrievalError on network failure or non-2xx status.
    virtual std::string get(const std::string& url) = 0;
};

class HttpTransport : public Transport {
public:
    explicit HttpTransport(std::chrono::milliseconds timeout = std::chrono::milliseconds(15000));
    std::string get(const std::string& url) override;

private:
    std::chrono::milliseconds timeout_;
};

/// Replays recorded responses. A fixture is a pair NAME.request (the URL) and NAME.payload
/// (the raw bytes) anywhere below the fixture directory.
class FixtureTransport : public Transport {
public:
    explicit FixtureTransport(const std::string& dir);
    std::string get(const std::string& url) override;
    [[nodiscard]] std::size_t size() const { return payloads_.size(); }

private:
    std::map<std::string, std::string> payloads_;
};

/// Forwards to another transport and writes each response as a fixture pair.
class RecordingTransport : public Transport {
public:
    RecordingTransport(Transport& inner, std::string dir);
    std::string get(const std::string& url) override;

private:
    Transport& inner_;
    std::string dir_;
    std::mutex mutex_;
};

class Searcher {
public:
    virtual ~Searcher() = default;
    [[nodiscard]] virtual Source source() const = 0;
    /// At most k documents, best first. RetrievalError on transport failure, ParseError on
    /// a malformed payload.
    virtual std::vector<Document> search(const std::string& query, std::size_t k) = 0;
};

/// Up to k documents ranked by position: score 1/(1 + rank).
std::vector<Document> parse_arxiv_atom(const std::string& payload, std::size_t k);
std::vector<Document> parse_wikipedia_search(const std::string& payload, std::size_t k);
std::string arxiv_url(const std::string& endpoint, const std::string& query, std::size_t k);
std::string wikipedia_url(const std::string& endpoint, const std::string& query, std::size_t k);

class ArxivSearcher : public Searcher {
public:
    ArxivSearcher(Transport& transport, std::string endpoint, RateLimiter* limiter = nullptr);
    [[nodiscard]] Source source() const override { return Source::Arxiv; }
    std::vector<Document> search(const std::string& query, std::size_t k) override;

private:
    Transport& transport_;
    std::string endpoint_;
    RateLimiter* limiter_;
};

class WikipediaSearcher : public Searcher {
public:
    WikipediaSearcher(Transport& transport, std::string endpoint, RateLimiter* limiter = nullptr);
    [[nodiscard]] Source source() const override { return Source::Wikipedia; }
    std::vector<Document> search(const std::string& query, std::size_t k) override;

private:
    Transport& transport_;
    std::string endpoint_;
    RateLimiter* limiter_;
};

struct LocalDocument {
    std::string doc_id;
    std::string title;
    std::string text;
    Source origin = Source::Local;  // a cached copy of an arXiv or Wikipedia item keeps its origin
};

/// Token-overlap retrieval over a directory of {doc_id, title, text[, origin]} JSON files.
/// Score is the fraction of distinct query content tokens present in title and text.
class LocalSearcher : public Searcher {
public:
    explicit LocalSearcher(std::vector<LocalDocument> docs);
    static LocalSearcher load(const std::string& dir);
    [[nodiscard]] Source source() const override { return Source::Local; }
    std::vector<Document> search(const std::string& query, std::size_t k) override;
    [[nodiscard]] const std::vector<LocalDocument>& documents() const { return docs_; }

private:
    std::vector<LocalDocument> docs_;
};

/// Checks that the source is enabled, then searches and sorts by retrieval score.
std::vector<Document> search(Searcher& searcher, const std::string& query, const SourceConfig& config);

struct EdgeQuery {
    graph::Edge edge;
    std::string subject;  // cause side, latent replaced by the proposed name
    std::string object;
    std::string query;
};

/// One "does A cause B" query per latent-incident edge of the hypothesis's latent, in edge order.
std::vector<EdgeQuery> edge_queries(const LatentHypothesis& hypothesis, const graph::CausalGraph& graph);

struct Judgement {
    bool supports = false;
    double score = 0.0;
    std::vector<double> per_document;
    bool fallback = false;
};

/// Fraction of the endpoint content tokens found together inside one window of the snippet.
double lexical_support(const std::string& subject, const std::string& object, const std::string& snippet,
                       std::size_t window);

/// Max per-document support. With a judge backend the reply to judge_prompt is parsed as a
/// number in [0,1]; any failure falls back to the lexical score and sets `fallback`.
Judgement judge_support(const EdgeQuery& edge, const std::vector<Document>& documents, const SourceConfig& config,
                        agents::ExecutorBackend* judge = nullptr);
std::string judge_prompt(const EdgeQuery& edge, const Document& document);

struct Verification {
    std::vector<EvidenceRecord> records;
    std::size_t supported = 0;  // n
    std::size_t searched = 0;   // EG
    bool unavailable = false;   // every search failed
};

/// Holds the searchers of the enabled sources and runs edge verification.
class Verifier {
public:
    Verifier(SourceConfig config, std::vector<Searcher*> searchers, agents::ExecutorBackend* judge = nullptr);

    [[nodiscard]] const SourceConfig& config() const { return config_; }
    /// Searches every enabled source concurrently for each edge, merges documents keyed by
    /// (source, doc_id), judges them, keeps the top_k by support.
    Verification verify(const LatentHypothesis& hypothesis, const graph::CausalGraph& graph);

private:
    SourceConfig config_;
    std::vector<Searcher*> searchers_;
    agents::ExecutorBackend* judge_;
};

/// Bounded feedback text: one line per record with the verdict and the top document title.
std::string digest(const std::vector<EvidenceRecord>& records, std::size_t max_lines = 8);

/// Owns transports, limiters and searchers built from a SourceConfig.
class SourceSet {
public:
    SourceSet(const SourceConfig& config, Clock& clock);
    [[nodiscard]] std::vector<Searcher*> searchers() const;

private:
    std::unique_ptr<Transport> base_;
    std::unique_ptr<Transport> recorder_;
    std::vector<std::unique_ptr<RateLimiter>> limiters_;
    std::vector<std::unique_ptr<Searcher>> searchers_;
};

}  // namespace tlvd::evidence
