#include "tlvd/agents.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "tlvd/errors.hpp"
#include "tlvd/text.hpp"

namespace tlvd::agents {

using nlohmann::json;

void DecodingRange::validate() const {
    if (!(temperature_lo >= 0.0 && temperature_hi > temperature_lo))
        throw ConfigError("temperature range must satisfy 0 <= lo < hi");
    if (!(penalty_hi > 1.0)) throw ConfigError("repetition penalty upper bound must exceed 1");
}

DecodingParams decode_params(const PromptEmbedding& e, const DecodingRange& range) {
    return {range.temperature_lo + e.temperature * (range.temperature_hi - range.temperature_lo),
            1.0 + e.penalty * (range.penalty_hi - 1.0)};
}

PromptEmbedding encode_params(const DecodingParams& p, const DecodingRange& range) {
    return {(p.temperature - range.temperature_lo) / (range.temperature_hi - range.temperature_lo),
            (p.repetition_penalty - 1.0) / (range.penalty_hi - 1.0)};
}

MockBackend::MockBackend(std::string identity, std::vector<MockEntry> table, std::uint64_t seed, DecodingRange range)
    : identity_(std::move(identity)), table_(std::move(table)), seed_(seed), range_(range) {
    range_.validate();
}

MockBackend MockBackend::from_json(std::string identity, const json& doc, std::uint64_t seed, DecodingRange range) {
    std::vector<MockEntry> table;
    try {
        for (const auto& e : doc.at("entries")) {
            MockEntry m;
            if (e.contains("query_hash"))
                m.query_hash = e.at("query_hash").get<std::string>();
            else
                m.query_hash = query_hash(e.at("query").get<std::string>());
            auto bucket_of = [&](const char* key) -> std::optional<int> {
                if (!e.contains(key) || e.at(key) == "*") return std::nullopt;
                return e.at(key).get<int>();
            };
            m.temperature_bucket = bucket_of("t_bucket");
            m.penalty_bucket = bucket_of("p_bucket");
            m.text = e.value("text", std::string());
            m.confidence = e.value("confidence", 1.0);
            m.delay_ms = e.value("delay_ms", 0);
            m.fail = e.value("fail", false);
            table.push_back(std::move(m));
        }
    } catch (const json::exception& ex) {
        throw ParseError("malformed mock table for '" + identity + "': " + ex.what());
    }
    return MockBackend(std::move(identity), std::move(table), seed, range);
}

MockBackend MockBackend::load(std::string identity, const std::string& path, std::uint64_t seed, DecodingRange range) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open mock table " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& ex) {
        throw ParseError("mock table " + path + " is not valid JSON: " + ex.what());
    }
    return from_json(std::move(identity), doc, seed, range);
}

std::string MockBackend::query_hash(const std::string& query) { return text::hex64(text::fnv1a64(query)); }

int MockBackend::bucket(double unit) { return std::clamp(static_cast<int>(std::floor(unit / 0.25)), 0, 3); }

AnswerRecord MockBackend::generate(const std::string& query, const DecodingParams& params) {
    const auto key = query_hash(query);
    const auto unit = encode_params(params, range_);
    const int tb = bucket(unit.temperature);
    const int pb = bucket(unit.penalty);
    const MockEntry* best = nullptr;
    int best_rank = -1;
    for (const auto& e : table_) {
        if (e.query_hash != key) continue;
        if (e.temperature_bucket && *e.temperature_bucket != tb) continue;
        if (e.penalty_bucket && *e.penalty_bucket != pb) continue;
        const int rank = (e.temperature_bucket ? 2 : 0) + (e.penalty_bucket ? 1 : 0);
        if (rank > best_rank) best = &e, best_rank = rank;
    }
    if (!best)
        throw FixtureError("mock backend '" + identity_ + "' has no entry for query " + key + " (buckets " +
                           std::to_string(tb) + "," + std::to_string(pb) + ")");
    // copies only: a timed-out caller may have released this backend before the delay ends
    const MockEntry entry = *best;
    const std::string who = identity_;
    const std::uint64_t seed = seed_;
    if (entry.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(entry.delay_ms));
    if (entry.fail) throw BackendError("mock backend '" + who + "' scripted failure");
    return {entry.text, text::hash_embedding(entry.text, kMockEmbeddingDim, seed), entry.confidence};
}

std::vector<double> MockBackend::embed(const std::string& text) {
    return text::hash_embedding(text, kMockEmbeddingDim, seed_);
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw ConfigError("HTTP backend '" + config_.identity + "' has no endpoint");
}

json HttpBackend::request_body(const std::string& model, const std::string& query, const DecodingParams& params) {
    return {{"model", model},
            {"messages", json::array({{{"role", "user"}, {"content", query}}})},
            {"temperature", params.temperature},
            {"repetition_penalty", params.repetition_penalty},
            {"logprobs", true}};
}

AnswerRecord HttpBackend::parse_response(const std::string& body) {
    json doc;
    try {
        doc = json::parse(body);
    } catch (const json::exception& ex) {
        throw BackendError("backend response is not JSON: " + body.substr(0, 120));
    }
    try {
        const auto& choice = doc.at("choices").at(0);
        AnswerRecord r;
        r.text = choice.at("message").at("content").get<std::string>();
        r.confidence = 0.5;
        if (choice.contains("logprobs") && choice.at("logprobs").is_object() &&
            choice.at("logprobs").contains("content") && choice.at("logprobs").at("content").is_array()) {
            const auto& tokens = choice.at("logprobs").at("content");
            double sum = 0.0;
            for (const auto& t : tokens) sum += t.at("logprob").get<double>();
            if (!tokens.empty()) r.confidence = std::clamp(std::exp(sum / static_cast<double>(tokens.size())), 0.0, 1.0);
        }
        return r;
    } catch (const json::exception& ex) {
        throw BackendError(std::string("unexpected backend response shape: ") + ex.what());
    }
}

AnswerRecord HttpBackend::generate(const std::string& query, const DecodingParams& params) {
    const HttpBackendConfig config = config_;
    httplib::Client client(config.endpoint);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!config.api_key.empty()) headers.emplace("Authorization", "Bearer " + config.api_key);
    auto res = client.Post(config.path, headers, request_body(config.model, query, params).dump(), "application/json");
    if (!res) throw BackendError("backend '" + config.identity + "' request failed: " + httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
        throw BackendError("backend '" + config.identity + "' returned HTTP " + std::to_string(res->status));
    auto record = parse_response(res->body);
    record.embedding = text::hash_embedding(record.text, kMockEmbeddingDim, config.embedding_seed);
    return record;
}

std::vector<double> HttpBackend::embed(const std::string& text) {
    return text::hash_embedding(text, kMockEmbeddingDim, config_.embedding_seed);
}

namespace {

std::string arrow(const graph::CausalGraph& g, const std::string& from, const std::string& to) {
    for (const auto& e : g.edges())
        if (e.touches(from) && e.touches(to)) {
            if (!e.oriented) return g.variable(from).label() + " -- " + g.variable(to).label();
            return g.variable(e.from).label() + " -> " + g.variable(e.to).label();
        }
    return g.variable(from).label() + " ? " + g.variable(to).label();
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (const auto& p : parts) {
        if (!out.empty()) out += sep;
        out += p;
    }
    return out;
}

}  // namespace

std::string build_query(const graph::Variable& latent, const graph::MarkovBlanket& blanket,
                        const graph::CausalGraph& graph, const std::string& domain,
                        const std::optional<std::string>& evidence_digest) {
    std::ostringstream q;
    q << "Latent variable: " << latent.id << "\n";
    q << "Domain: " << (domain.empty() ? "general" : domain) << "\n";
    auto section = [&](const char* title, const std::set<std::string>& ids, auto render) {
        std::vector<std::string> lines;
        for (const auto& id : ids) lines.push_back(render(id));
        q << title << ": " << (lines.empty() ? "none" : join(lines, "; ")) << "\n";
    };
    section("Parents", blanket.parents, [&](const std::string& id) { return arrow(graph, id, latent.id); });
    section("Children", blanket.children, [&](const std::string& id) { return arrow(graph, latent.id, id); });
    section("Spouses", blanket.spouses, [&](const std::string& id) {
        std::vector<std::string> via;
        for (const auto& c : blanket.children)
            if (c != id && (graph.parents(c).count(id) || graph.undirected_neighbors(c).count(id)))
                via.push_back(arrow(graph, id, c));
        return graph.variable(id).label() + (via.empty() ? "" : " (" + join(via, ", ") + ")");
    });
    if (blanket.members.empty()) q << "The latent variable has no observed neighbors.\n";
    q << "Propose a named variable and one-sentence semantics for it.\n";
    if (evidence_digest && !evidence_digest->empty()) q << "Evidence from the previous round:\n" << *evidence_digest;
    return q.str();
}

std::vector<ExecutorAnswer> fan_out(const std::string& query, const std::vector<ExecutorBackend*>& executors,
                                    const std::vector<PromptEmbedding>& actions, std::chrono::milliseconds timeout,
                                    const DecodingRange& range) {
    if (executors.size() != actions.size())
        throw UsageError("fan_out needs one action per executor (" + std::to_string(executors.size()) + " executors, " +
                         std::to_string(actions.size()) + " actions)");
    struct Slot {
        std::promise<AnswerRecord> promise;
        std::future<AnswerRecord> future;
    };
    std::vector<std::shared_ptr<Slot>> slots;
    for (std::size_t i = 0; i < executors.size(); ++i) {
        auto slot = std::make_shared<Slot>();
        slot->future = slot->promise.get_future();
        slots.push_back(slot);
        const auto params = decode_params(actions[i], range);
        // detached so that a hung backend cannot hold the join past the deadline
        std::thread([slot, backend = executors[i], query, params] {
            try {
                slot->promise.set_value(backend->generate(query, params));
            } catch (...) {
                slot->promise.set_exception(std::current_exception());
            }
        }).detach();
    }
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::vector<ExecutorAnswer> out;
    std::exception_ptr fixture_error;
    // every slot is drained before a fixture error propagates, so no call is left inside a backend
    for (std::size_t i = 0; i < executors.size(); ++i) {
        ExecutorAnswer a;
        a.executor = executors[i]->identity();
        a.action = actions[i];
        if (slots[i]->future.wait_until(deadline) != std::future_status::ready) {
            a.failure = "timeout";
        } else {
            try {
                a.record = slots[i]->future.get();
            } catch (const FixtureError&) {
                if (!fixture_error) fixture_error = std::current_exception();
                a.failure = "fixture";
            } catch (const std::exception& ex) {
                a.failure = ex.what();
            }
        }
        if (!a.record && !fixture_error) spdlog::warn("executor '{}' failed: {}", a.executor, a.failure);
        out.push_back(std::move(a));
    }
    if (fixture_error) std::rethrow_exception(fixture_error);
    std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.executor < y.executor; });
    if (std::none_of(out.begin(), out.end(), [](const auto& a) { return a.record.has_value(); })) {
        std::string why;
        for (const auto& a : out) why += (why.empty() ? "" : "; ") + a.executor + ": " + a.failure;
        throw BackendError("every executor failed (" + why + ")");
    }
    return out;
}

std::pair<std::string, std::string> parse_answer(const std::string& body) {
    std::istringstream in(body);
    std::string line, name;
    std::vector<std::string> rest;
    while (std::getline(in, line)) {
        auto t = text::trim(line);
        if (t.empty()) continue;
        if (name.empty())
            name = t;
        else
            rest.push_back(t);
    }
    return {name, join(rest, " ")};
}

std::string coordinator_prompt(const std::string& latent_id, const std::vector<ExecutorAnswer>& answers,
                               const std::vector<EvidenceRecord>& evidence) {
    std::ostringstream q;
    q << "Aggregate the executor answers for latent variable " << latent_id << " into one named variable.\n";
    q << "Reply with the name on the first line and one-sentence semantics on the second.\n";
    q << "Answers:\n";
    for (const auto& a : answers) {
        if (!a.record) continue;
        const auto [name, semantics] = parse_answer(a.record->text);
        char conf[32];
        std::snprintf(conf, sizeof conf, "%.3f", a.record->confidence);
        q << "[" << a.executor << "] confidence " << conf << ": " << name << " | " << semantics << "\n";
    }
    q << "Evidence:\n";
    for (const auto& r : evidence) {
        if (r.latent_id != latent_id) continue;
        char score[32];
        std::snprintf(score, sizeof score, "%.3f", r.support_score);
        q << "[" << r.record_id << "] " << r.claim << " | " << r.edge.from << (r.edge.oriented ? " -> " : " -- ")
          << r.edge.to << " | " << (r.supports ? "supported" : "unsupported") << " " << score << "\n";
    }
    return q.str();
}

Aggregation aggregate(const std::string& latent_id, const std::vector<ExecutorAnswer>& answers,
                      const std::vector<EvidenceRecord>& evidence, ExecutorBackend& coordinator) {
    const ExecutorAnswer* best = nullptr;
    for (const auto& a : answers)
        if (a.record && (!best || a.record->confidence > best->record->confidence)) best = &a;
    if (!best) throw UsageError("aggregate needs at least one successful executor answer");

    Aggregation out;
    out.hypothesis.latent_id = latent_id;
    try {
        out.coordinator = coordinator.generate(coordinator_prompt(latent_id, answers, evidence), {0.0, 1.0});
    } catch (const FixtureError&) {
        throw;
    } catch (const BackendError& ex) {
        spdlog::warn("coordinator failed for {}: {}; using executor '{}'", latent_id, ex.what(), best->executor);
        out.coordinator = *best->record;
        out.hypothesis.fallback = true;
    }
    const auto [name, semantics] = parse_answer(out.coordinator.text);
    out.hypothesis.proposed_name = name;
    out.hypothesis.semantics = semantics;
    out.hypothesis.confidence = out.coordinator.confidence;
    const auto key = text::normalize_name(name);
    for (const auto& r : evidence)
        if (r.latent_id == latent_id && !r.documents.empty() && text::normalize_name(r.claim) == key)
            out.hypothesis.evidence.push_back(r.record_id);
    return out;
}

}  // namespace tlvd::agents
