#include <doctest.h>

#include <algorithm>
#include <random>

#include "support/http_server.hpp"
#include "tlvd/agents.hpp"
#include "tlvd/errors.hpp"
#include "tlvd/text.hpp"

using namespace tlvd;
using namespace tlvd::agents;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

graph::CausalGraph smoking_graph() {
    return graph::parse_graph(R"({
      "variables": [
        {"id": "L", "kind": "latent"},
        {"id": "smoking", "kind": "observed", "name": "Smoking"},
        {"id": "cancer", "kind": "observed", "name": "LungCancer"},
        {"id": "radon", "kind": "observed", "name": "Radon"},
        {"id": "iso", "kind": "latent"}
      ],
      "edges": [
        {"from": "smoking", "to": "L"},
        {"from": "L", "to": "cancer"},
        {"from": "radon", "to": "cancer"}
      ]
    })");
}

MockBackend table_backend(const std::string& identity, json entries, std::uint64_t seed = 1) {
    return MockBackend::from_json(identity, json{{"entries", std::move(entries)}}, seed);
}

ExecutorAnswer ok_answer(const std::string& executor, const std::string& text, double confidence) {
    ExecutorAnswer a;
    a.executor = executor;
    a.record = AnswerRecord{text, {1.0, 0.0}, confidence};
    return a;
}

}  // namespace

TEST_CASE("decode params maps the unit square affinely") {
    auto p = decode_params({0.5, 0.5});
    CHECK(p.temperature == 1.0);
    CHECK(p.repetition_penalty == 1.5);
    CHECK(decode_params({0.0, 0.0}).temperature == 0.0);
    CHECK(decode_params({1e-12, 0.0}).temperature == doctest::Approx(0.0));
    DecodingRange r{0.2, 1.2, 2.0};
    CHECK(decode_params({0.5, 0.0}, r).temperature == doctest::Approx(0.7).epsilon(1e-15));
    CHECK_THROWS_AS(DecodingRange({1.0, 1.0, 2.0}).validate(), ConfigError);
    CHECK_THROWS_AS(DecodingRange({0.0, 1.0, 1.0}).validate(), ConfigError);
}

TEST_CASE("decode params is a monotone bijection") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const DecodingRange r{0.1, 1.7, 3.0};
    for (int i = 0; i < 200; ++i) {
        const PromptEmbedding a{u(rng), u(rng)}, b{u(rng), u(rng)};
        const auto pa = decode_params(a, r), pb = decode_params(b, r);
        CHECK((a.temperature < b.temperature) == (pa.temperature < pb.temperature));
        CHECK((a.penalty < b.penalty) == (pa.repetition_penalty < pb.repetition_penalty));
        CHECK(pa.temperature > r.temperature_lo);
        CHECK(pa.temperature < r.temperature_hi);
        CHECK(pa.repetition_penalty > 1.0);
        CHECK(pa.repetition_penalty < r.penalty_hi);
        const auto back = encode_params(pa, r);
        CHECK(back.temperature == doctest::Approx(a.temperature).epsilon(1e-12));
        CHECK(back.penalty == doctest::Approx(a.penalty).epsilon(1e-12));
    }
}

TEST_CASE("mock backend returns scripted records") {
    auto m = table_backend("m", json::array({{{"query", "q"}, {"text", "Smoking\nTobacco use."}, {"confidence", 0.7}}}), 9);
    const auto rec = m.generate("q", decode_params({0.3, 0.3}));
    CHECK(rec.text == "Smoking\nTobacco use.");
    CHECK(rec.confidence == 0.7);
    CHECK(rec.embedding.size() == kMockEmbeddingDim);
    CHECK(rec.embedding == m.embed("Smoking\nTobacco use."));
    CHECK(m.generate("q", decode_params({0.9, 0.9})).embedding == rec.embedding);
    CHECK_THROWS_AS((void)m.generate("other", decode_params({0.3, 0.3})), FixtureError);
    CHECK(MockBackend::query_hash("q") == text::hex64(text::fnv1a64("q")));
}

TEST_CASE("mock backend temperature buckets") {
    CHECK(MockBackend::bucket(0.49) == 1);
    CHECK(MockBackend::bucket(0.51) == 2);
    CHECK(MockBackend::bucket(0.0) == 0);
    CHECK(MockBackend::bucket(1.0) == 3);
    CHECK(MockBackend::bucket(0.26) == MockBackend::bucket(0.49));
    auto m = table_backend("m", json::array({
                                    {{"query", "q"}, {"text", "any"}},
                                    {{"query", "q"}, {"t_bucket", 1}, {"text", "one"}},
                                    {{"query", "q"}, {"t_bucket", 2}, {"text", "two"}},
                                    {{"query", "q"}, {"t_bucket", 2}, {"p_bucket", 0}, {"text", "two-zero"}},
                                }));
    CHECK(m.generate("q", decode_params({0.49, 0.5})).text == "one");
    CHECK(m.generate("q", decode_params({0.51, 0.5})).text == "two");
    CHECK(m.generate("q", decode_params({0.51, 0.1})).text == "two-zero");
    CHECK(m.generate("q", decode_params({0.1, 0.5})).text == "any");
}

TEST_CASE("mock table errors") {
    CHECK_THROWS_AS((void)MockBackend::from_json("m", json{{"rows", json::array()}}, 1), ParseError);
    CHECK_THROWS_AS((void)MockBackend::load("m", "/nonexistent/table.json", 1), ConfigError);
    auto failing = table_backend("m", json::array({{{"query", "q"}, {"fail", true}}}));
    CHECK_THROWS_AS((void)failing.generate("q", {}), BackendError);
}

TEST_CASE("build query names the blanket with directions") {
    const auto g = smoking_graph();
    const auto blanket = graph::markov_blanket(g, "L");
    const auto q = build_query(g.variable("L"), blanket, g, "oncology");
    CHECK(q.find("Latent variable: L\n") != std::string::npos);
    CHECK(q.find("Domain: oncology") != std::string::npos);
    CHECK(q.find("Parents: Smoking -> L") != std::string::npos);
    CHECK(q.find("Children: L -> LungCancer") != std::string::npos);
    CHECK(q.find("Spouses: Radon (Radon -> LungCancer)") != std::string::npos);
    CHECK(q == build_query(g.variable("L"), blanket, g, "oncology"));
    CHECK(q.find("Evidence from the previous round") == std::string::npos);

    const auto with_digest = build_query(g.variable("L"), blanket, g, "oncology", std::string("- line\n"));
    CHECK(with_digest.rfind("Evidence from the previous round:\n- line\n") != std::string::npos);
    CHECK(with_digest.substr(0, q.size()) == q);

    const auto empty = build_query(g.variable("iso"), graph::markov_blanket(g, "iso"), g, "");
    CHECK(empty.find("no observed neighbors") != std::string::npos);
    CHECK(empty.find("Domain: general") != std::string::npos);
}

TEST_CASE("fan out orders by identity") {
    auto b = table_backend("beta", json::array({{{"query", "q"}, {"text", "B"}, {"delay_ms", 1}}}));
    auto a = table_backend("alpha", json::array({{{"query", "q"}, {"text", "A"}, {"delay_ms", 30}}}));
    const auto out = fan_out("q", {&b, &a}, {{0.1, 0.2}, {0.3, 0.4}}, 5000ms);
    REQUIRE(out.size() == 2);
    CHECK(out[0].executor == "alpha");
    CHECK(out[0].record->text == "A");
    CHECK(out[0].action.temperature == 0.3);
    CHECK(out[1].executor == "beta");
    CHECK(out[1].action.temperature == 0.1);
    CHECK_THROWS_AS((void)fan_out("q", {&a, &b}, {{0.1, 0.2}}, 5000ms), UsageError);
}

TEST_CASE("fan out marks timeouts and failures") {
    auto a = table_backend("a", json::array({{{"query", "q"}, {"text", "A"}}}));
    auto b = table_backend("b", json::array({{{"query", "q"}, {"text", "B"}, {"delay_ms", 2000}}}));
    auto c = table_backend("c", json::array({{{"query", "q"}, {"text", "C"}}}));
    const auto out = fan_out("q", {&a, &b, &c}, std::vector<PromptEmbedding>(3, {0.5, 0.5}), 200ms);
    REQUIRE(out.size() == 3);
    CHECK(out[0].record);
    CHECK(!out[1].record);
    CHECK(out[1].failure == "timeout");
    CHECK(out[2].record);

    auto bad = table_backend("d", json::array({{{"query", "q"}, {"fail", true}}}));
    const auto mixed = fan_out("q", {&a, &bad}, std::vector<PromptEmbedding>(2, {0.5, 0.5}), 5000ms);
    CHECK(!mixed[1].record);
    CHECK(mixed[1].failure.find("scripted failure") != std::string::npos);
    CHECK_THROWS_AS((void)fan_out("q", {&bad}, {{0.5, 0.5}}, 5000ms), BackendError);
    CHECK_THROWS_AS((void)fan_out("unknown", {&a}, {{0.5, 0.5}}, 5000ms), FixtureError);
}

TEST_CASE("fan out is deterministic for identical executors") {
    auto a = table_backend("a", json::array({{{"query", "q"}, {"text", "same"}}}), 4);
    auto b = table_backend("b", json::array({{{"query", "q"}, {"text", "same"}}}), 4);
    const auto out = fan_out("q", {&a, &b}, std::vector<PromptEmbedding>(2, {0.5, 0.5}), 5000ms);
    CHECK(out[0].record->text == out[1].record->text);
    CHECK(out[0].record->embedding == out[1].record->embedding);
}

TEST_CASE("parse answer") {
    auto [name, semantics] = parse_answer("\n  Smoking  \nTobacco use\n that harms.\n");
    CHECK(name == "Smoking");
    CHECK(semantics == "Tobacco use that harms.");
    CHECK(parse_answer("").first.empty());
}

TEST_CASE("aggregate echoes a single answer") {
    const std::vector<ExecutorAnswer> answers{ok_answer("a", "Smoking\nTobacco use.", 0.6)};
    const auto prompt = coordinator_prompt("L", answers, {});
    auto coord = table_backend("coordinator", json::array({{{"query", prompt}, {"text", "Smoking\nTobacco use."}}}));
    const auto agg = aggregate("L", answers, {}, coord);
    CHECK(agg.hypothesis.proposed_name == "Smoking");
    CHECK(agg.hypothesis.semantics == "Tobacco use.");
    CHECK(agg.hypothesis.evidence.empty());
    CHECK(!agg.hypothesis.fallback);
    CHECK(agg.coordinator.embedding == coord.embed("Smoking\nTobacco use."));
}

TEST_CASE("aggregate follows the supported answer") {
    // The digest lists one supported and one unsupported claim; the scripted coordinator picks
    // the supported one, and only records with documents for that claim are cited.
    const std::vector<ExecutorAnswer> answers{ok_answer("a", "Smoking\nTobacco use.", 0.4),
                                              ok_answer("b", "Diet\nFood intake.", 0.9)};
    EvidenceRecord yes, no, other, empty;
    yes.record_id = "ev-yes";
    yes.latent_id = "L";
    yes.claim = "smoking";
    yes.edge = {"L", "cancer", true};
    yes.documents.push_back({Source::Local, "d1", "t", "s", std::nullopt, 1.0});
    yes.searched = yes.supports = true;
    yes.support_score = 1.0;
    no = yes;
    no.record_id = "ev-no";
    no.claim = "Diet";
    no.supports = false;
    no.support_score = 0.2;
    other = yes;
    other.record_id = "ev-other";
    other.latent_id = "M";
    empty = yes;
    empty.record_id = "ev-empty";
    empty.documents.clear();
    const std::vector<EvidenceRecord> evidence{yes, no, other, empty};

    const auto prompt = coordinator_prompt("L", answers, evidence);
    CHECK(prompt.find("[a] confidence 0.400: Smoking | Tobacco use.\n") != std::string::npos);
    CHECK(prompt.find("[ev-yes] smoking | L -> cancer | supported 1.000\n") != std::string::npos);
    CHECK(prompt.find("[ev-no] Diet | L -> cancer | unsupported 0.200\n") != std::string::npos);
    CHECK(prompt.find("ev-other") == std::string::npos);

    auto coord = table_backend("coordinator", json::array({{{"query", prompt}, {"text", "Smoking\nTobacco use."}}}));
    const auto agg = aggregate("L", answers, evidence, coord);
    CHECK(agg.hypothesis.proposed_name == "Smoking");
    CHECK(agg.hypothesis.evidence == std::vector<std::string>{"ev-yes"});
}

TEST_CASE("aggregate falls back to the most confident executor") {
    std::vector<ExecutorAnswer> answers{ok_answer("a", "Smoking\nTobacco use.", 0.4), ok_answer("b", "Diet\nFood.", 0.9)};
    ExecutorAnswer failed;
    failed.executor = "c";
    failed.failure = "timeout";
    answers.push_back(failed);
    const auto prompt = coordinator_prompt("L", answers, {});
    auto coord = table_backend("coordinator", json::array({{{"query", prompt}, {"fail", true}}}));
    const auto agg = aggregate("L", answers, {}, coord);
    CHECK(agg.hypothesis.fallback);
    CHECK(agg.hypothesis.proposed_name == "Diet");
    CHECK(agg.coordinator.confidence == 0.9);

    auto unscripted = table_backend("coordinator", json::array());
    CHECK_THROWS_AS((void)aggregate("L", answers, {}, unscripted), FixtureError);
    CHECK_THROWS_AS((void)aggregate("L", {failed}, {}, coord), UsageError);
}

TEST_CASE("aggregate never cites unknown ids") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<EvidenceRecord> evidence;
        for (int i = 0; i < 6; ++i) {
            EvidenceRecord r;
            r.record_id = "ev-" + std::to_string(trial) + "-" + std::to_string(i);
            r.latent_id = rng() % 2 ? "L" : "M";
            r.claim = rng() % 2 ? "Smoking" : "Diet";
            if (rng() % 2) r.documents.push_back({Source::Local, "d", "t", "s", std::nullopt, 1.0});
            evidence.push_back(r);
        }
        const std::vector<ExecutorAnswer> answers{ok_answer("a", "Smoking\nx", 0.5)};
        auto coord = table_backend("c", json::array({{{"query", coordinator_prompt("L", answers, evidence)}, {"text", "Smoking"}}}));
        const auto agg = aggregate("L", answers, evidence, coord);
        for (const auto& id : agg.hypothesis.evidence) {
            auto it = std::find_if(evidence.begin(), evidence.end(), [&](const EvidenceRecord& r) { return r.record_id == id; });
            REQUIRE(it != evidence.end());
            CHECK(it->latent_id == "L");
            CHECK(!it->documents.empty());
        }
    }
}

TEST_CASE("http backend request and response") {
    const auto body = HttpBackend::request_body("m1", "hello", {0.7, 1.3});
    CHECK(body.at("model") == "m1");
    CHECK(body.at("temperature") == 0.7);
    CHECK(body.at("repetition_penalty") == 1.3);
    CHECK(body.at("messages").at(0).at("content") == "hello");

    const auto with_lp = HttpBackend::parse_response(R"({"choices":[{"message":{"content":"Smoking"},
        "logprobs":{"content":[{"token":"Smo","logprob":-0.2},{"token":"king","logprob":-0.4}]}}]})");
    CHECK(with_lp.text == "Smoking");
    CHECK(with_lp.confidence == doctest::Approx(std::exp(-0.3)).epsilon(1e-14));
    CHECK(HttpBackend::parse_response(R"({"choices":[{"message":{"content":"x"}}]})").confidence == 0.5);
    CHECK_THROWS_AS((void)HttpBackend::parse_response("not json"), BackendError);
    CHECK_THROWS_AS((void)HttpBackend::parse_response(R"({"choices":[]})"), BackendError);
}

TEST_CASE("http backend against a loopback server") {
    testing::LocalServer srv;
    std::string seen_auth;
    json seen_body;
    srv.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = json::parse(req.body);
        res.set_content(R"({"choices":[{"message":{"content":"Radon\nGas exposure."}}]})", "application/json");
    });
    srv.server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    srv.start();

    HttpBackendConfig cfg;
    cfg.identity = "remote";
    cfg.endpoint = srv.base();
    cfg.model = "m";
    cfg.api_key = "secret";
    cfg.timeout = 5000ms;
    HttpBackend backend(cfg);
    const auto rec = backend.generate("q", {1.0, 1.5});
    CHECK(rec.text == "Radon\nGas exposure.");
    CHECK(rec.embedding == backend.embed("Radon\nGas exposure."));
    CHECK(seen_auth == "Bearer secret");
    CHECK(seen_body.at("temperature") == 1.0);

    cfg.path = "/broken";
    HttpBackend broken(cfg);
    CHECK_THROWS_AS((void)broken.generate("q", {}), BackendError);
    cfg.endpoint = "http://127.0.0.1:1";
    HttpBackend unreachable(cfg);
    CHECK_THROWS_AS((void)unreachable.generate("q", {}), BackendError);
}
