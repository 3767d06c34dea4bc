#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "support/http_server.hpp"
#include "support/stub_search.hpp"
#include "tlvd/agents.hpp"
#include "tlvd/errors.hpp"
#include "tlvd/evidence.hpp"
#include "tlvd/reward.hpp"

using namespace tlvd;
using namespace tlvd::evidence;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = TLVD_TEST_FIXTURES;
const std::string kQuery = "does Smoking cause Lung cancer";

graph::CausalGraph four_edge_graph() {
    return graph::parse_graph(R"({
      "variables": [
        {"id": "L", "kind": "latent"},
        {"id": "genes", "kind": "observed", "name": "Genotype"},
        {"id": "cancer", "kind": "observed", "name": "Lung cancer"},
        {"id": "tar", "kind": "observed", "name": "Tar deposits"},
        {"id": "cough", "kind": "observed", "name": "Chronic cough"},
        {"id": "age", "kind": "observed", "name": "Age"}
      ],
      "edges": [
        {"from": "genes", "to": "L"},
        {"from": "L", "to": "cancer"},
        {"from": "L", "to": "tar"},
        {"from": "L", "to": "cough"},
        {"from": "age", "to": "cough"}
      ]
    })");
}

LatentHypothesis smoking() { return {"L", "Smoking", "Tobacco use.", {}, 0.9, false}; }

// Two of four edges have a snippet naming both endpoints.
void plant_four_edges(testing::StubSearcher& s) {
    s.add("does Genotype cause Smoking", "g1", "heritability studies in twins");
    s.add("does Smoking cause Lung cancer", "c1", "smoking is the leading cause of lung cancer");
    s.add("does Smoking cause Tar deposits", "t1", "smoking leaves tar deposits in airways");
    s.add("does Smoking cause Chronic cough", "k1", "a persistent chronic condition");
}

SourceConfig local_only() {
    SourceConfig c;
    c.arxiv.enabled = false;
    c.wikipedia.enabled = false;
    return c;
}

}  // namespace

TEST_CASE("arXiv Atom fixture parses verbatim and truncates at five") {
    FixtureTransport t(kFixtures + "/retrieval");
    CHECK(t.size() == 2);
    SourceConfig c;
    ArxivSearcher s(t, c.arxiv.endpoint);
    const auto docs = search(s, kQuery, c);
    REQUIRE(docs.size() == 5);
    const std::vector<std::string> titles{"Smoking and Lung Cancer Risk: A Causal Analysis",
                                          "Tobacco Exposure & Tumour Growth in Cohort Data",
                                          "Mendelian Randomisation for Lifestyle Exposures",
                                          "Air Quality Indices in Urban Areas", "Screening Programmes and Early Detection"};
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(docs[i].title == titles[i]);
        CHECK(docs[i].source == Source::Arxiv);
        CHECK(docs[i].retrieval_score == 1.0 / static_cast<double>(i + 1));
    }
    CHECK(docs[0].doc_id == "http://arxiv.org/abs/2401.00001v1");
    CHECK(docs[0].snippet ==
          "We estimate the causal effect of smoking on lung cancer incidence using instrumental variables.");
    CHECK(docs[1].url == "http://arxiv.org/abs/2401.00002v2");
    CHECK(parse_arxiv_atom(t.get(arxiv_url(c.arxiv.endpoint, kQuery, 5)), 10).size() == 7);
}

TEST_CASE("Wikipedia fixture parses titles verbatim") {
    FixtureTransport t(kFixtures + "/retrieval");
    SourceConfig c;
    WikipediaSearcher s(t, c.wikipedia.endpoint);
    const auto docs = search(s, kQuery, c);
    REQUIRE(docs.size() == 3);
    CHECK(docs[0].title == "Smoking");
    CHECK(docs[1].title == "Lung cancer");
    CHECK(docs[2].title == "Health effects of tobacco");
    CHECK(docs[1].doc_id == "18525");
    CHECK(docs[1].snippet == "Lung cancer is mainly caused by tobacco smoking.");
    CHECK(docs[1].url == "https://en.wikipedia.org/wiki/Lung_cancer");
    CHECK(parse_wikipedia_search(R"({"pages":[]})", 5).empty());
}

TEST_CASE("search errors") {
    FixtureTransport t(kFixtures + "/retrieval");
    SourceConfig c;
    ArxivSearcher s(t, c.arxiv.endpoint);
    CHECK_THROWS_AS((void)search(s, "unrecorded query", c), RetrievalError);
    c.arxiv.enabled = false;
    CHECK_THROWS_AS((void)search(s, kQuery, c), ConfigError);
    try {
        (void)parse_arxiv_atom("<feed><entry><title>broken", 5);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("<feed><entry>") != std::string::npos);
    }
    CHECK_THROWS_AS((void)parse_wikipedia_search("{\"pages\": 3}", 5), ParseError);
    CHECK_THROWS_AS((void)parse_wikipedia_search("[", 5), ParseError);
    CHECK_THROWS_AS(FixtureTransport("/nonexistent/fixtures"), ConfigError);
    CHECK(FixtureTransport("").size() == 0);
}

TEST_CASE("recorded responses replay through the fixture transport") {
    const auto dir = fs::temp_directory_path() / "tlvd_record_test";
    fs::remove_all(dir);
    FixtureTransport source(kFixtures + "/retrieval");
    RecordingTransport rec(source, dir.string());
    const auto url = wikipedia_url(SourceConfig{}.wikipedia.endpoint, kQuery, 5);
    const auto body = rec.get(url);
    FixtureTransport replay(dir.string());
    CHECK(replay.get(url) == body);
    fs::remove_all(dir);
}

TEST_CASE("http transport against a loopback server") {
    testing::LocalServer srv;
    srv.server.Get("/ok", [](const httplib::Request& req, httplib::Response& res) {
        res.set_content("q=" + req.get_param_value("q"), "text/plain");
    });
    srv.server.Get("/missing", [](const httplib::Request&, httplib::Response& res) { res.status = 404; });
    srv.start();
    HttpTransport t(std::chrono::milliseconds(5000));
    CHECK(t.get(srv.base() + "/ok?q=lung%20cancer") == "q=lung cancer");
    CHECK_THROWS_AS((void)t.get(srv.base() + "/missing"), RetrievalError);
    CHECK_THROWS_AS((void)t.get("http://127.0.0.1:1/none"), RetrievalError);
}

TEST_CASE("local corpus ranks by token overlap") {
    LocalSearcher s({{"b", "Smoking", "lung cancer in smokers", Source::Local},
                     {"a", "Diet", "fibre and cancer", Source::Local},
                     {"c", "Weather", "rain", Source::Local}});
    const auto docs = s.search(kQuery, 5);
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].doc_id == "b");
    CHECK(docs[0].retrieval_score == 1.0);
    CHECK(docs[1].retrieval_score == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(LocalSearcher({{"a", "", "", Source::Local}, {"a", "", "", Source::Local}}), ConfigError);
    const auto loaded = LocalSearcher::load(kFixtures + "/corpus");
    CHECK(loaded.documents().size() == 2);
    CHECK(loaded.documents()[0].origin == Source::Arxiv);
}

TEST_CASE("rate limiter budget under a virtual clock") {
    for (double rate : {0.33, 1.0, 2.5, 5.0}) {
        VirtualClock clock;
        RateLimiter lim(rate, clock);
        std::mt19937_64 rng(static_cast<std::uint64_t>(rate * 100));
        std::uniform_real_distribution<double> gap(0.0, 0.4);
        std::vector<double> stamps;
        for (int i = 0; i < 60; ++i) {
            if (rng() % 3 == 0) clock.advance(gap(rng));
            stamps.push_back(lim.acquire());
        }
        const std::size_t budget = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(rate)));
        for (std::size_t i = 0; i < stamps.size(); ++i) {
            std::size_t in_window = 0;
            for (double s : stamps) in_window += (s >= stamps[i] && s < stamps[i] + 1.0);
            CHECK(in_window <= budget);
        }
        if (rate < 1.0)
            for (std::size_t i = 1; i < stamps.size(); ++i) CHECK(stamps[i] - stamps[i - 1] >= 1.0 / rate - 1e-9);
    }
}

TEST_CASE("edge queries") {
    const auto g = four_edge_graph();
    const auto qs = edge_queries(smoking(), g);
    REQUIRE(qs.size() == 4);
    CHECK(qs[0].query == "does Smoking cause Lung cancer");
    CHECK(qs[1].query == "does Smoking cause Chronic cough");
    CHECK(qs[3].query == "does Genotype cause Smoking");
    for (std::size_t i = 0; i < qs.size(); ++i) CHECK(qs[i].query == edge_queries(smoking(), g)[i].query);
    const auto lone = graph::parse_graph(R"({"variables":[{"id":"L","kind":"latent"}]})");
    CHECK(edge_queries(smoking(), lone).empty());
    LatentHypothesis wrong = smoking();
    wrong.latent_id = "cancer";
    CHECK_THROWS_AS((void)edge_queries(wrong, g), UsageError);
}

TEST_CASE("lexical support") {
    CHECK(lexical_support("Smoking", "Lung cancer", "smoking causes lung cancer", 40) == 1.0);
    CHECK(lexical_support("Smoking", "Lung cancer", "lung function", 40) == doctest::Approx(1.0 / 3.0));
    // window of 3 content tokens: "smoking" and "cancer" never share one
    CHECK(lexical_support("Smoking", "Cancer", "smoking alpha beta gamma cancer", 3) == 0.5);
    CHECK(lexical_support("Smoking", "Cancer", "smoking alpha beta gamma cancer", 5) == 1.0);
    CHECK(lexical_support("", "", "anything", 40) == 0.0);
}

TEST_CASE("judge support takes the max over documents") {
    SourceConfig c;
    EdgeQuery q{{"L", "cancer", true}, "Smoking", "Lung cancer", kQuery};
    const auto none = judge_support(q, {}, c);
    CHECK(!none.supports);
    CHECK(none.score == 0.0);
    // token fractions by hand: 0, 1/3, 1, 1/3, 0
    std::vector<Document> docs;
    for (const char* s : {"weather report", "lung capacity", "smoking and lung cancer", "cancer registry", "diet"})
        docs.push_back({Source::Local, s, s, s, std::nullopt, 1.0});
    const auto j = judge_support(q, docs, c);
    CHECK(j.per_document == std::vector<double>{0.0, 1.0 / 3.0, 1.0, 1.0 / 3.0, 0.0});
    CHECK(j.score == 1.0);
    CHECK(j.supports);
    CHECK(!j.fallback);
    docs.erase(docs.begin() + 2);
    CHECK(!judge_support(q, docs, c).supports);
}

TEST_CASE("judge backend scores and fallback") {
    SourceConfig c;
    EdgeQuery q{{"L", "cancer", true}, "Smoking", "Lung cancer", kQuery};
    std::vector<Document> docs{{Source::Local, "a", "A", "unrelated", std::nullopt, 1.0},
                               {Source::Local, "b", "B", "smoking lung cancer", std::nullopt, 0.5}};
    json entries = json::array({{{"query", judge_prompt(q, docs[0])}, {"text", "0.7"}},
                                {{"query", judge_prompt(q, docs[1])}, {"text", " 0.2 "}}});
    auto judge = agents::MockBackend::from_json("judge", json{{"entries", entries}}, 1);
    const auto j = judge_support(q, docs, c, &judge);
    CHECK(j.per_document == std::vector<double>{0.7, 0.2});
    CHECK(j.score == 0.7);
    CHECK(j.supports);

    entries[0]["text"] = "yes";
    auto garbled = agents::MockBackend::from_json("judge", json{{"entries", entries}}, 1);
    const auto f = judge_support(q, docs, c, &garbled);
    CHECK(f.fallback);
    CHECK(f.score == 1.0);

    auto empty = agents::MockBackend::from_json("judge", json{{"entries", json::array()}}, 1);
    CHECK_THROWS_AS((void)judge_support(q, docs, c, &empty), FixtureError);
}

TEST_CASE("verify counts supported and searched edges") {
    const auto g = four_edge_graph();
    testing::StubSearcher local(Source::Local);
    plant_four_edges(local);
    Verifier v(local_only(), {&local});
    const auto r = v.verify(smoking(), g);
    CHECK(r.records.size() == 4);
    CHECK(r.supported == 2);
    CHECK(r.searched == 4);
    CHECK(!r.unavailable);
    for (const auto& rec : r.records) {
        CHECK(rec.supports == (rec.support_score >= 0.5));
        CHECK(rec.documents.size() <= 5);
        CHECK(rec.latent_id == "L");
        CHECK(rec.claim == "Smoking");
    }
    CHECK(v.verify(smoking(), g).records[2].record_id == r.records[2].record_id);

    local.failing.insert("does Smoking cause Chronic cough");
    const auto partial = v.verify(smoking(), g);
    CHECK(partial.searched == 3);
    CHECK(partial.supported == 2);
    CHECK(!partial.records[1].searched);

    for (const auto& q : edge_queries(smoking(), g)) local.failing.insert(q.query);
    const auto down = v.verify(smoking(), g);
    CHECK(down.unavailable);
    CHECK(down.searched == 0);
    CHECK(down.supported == 0);
}

TEST_CASE("duplicates across sources are merged") {
    const auto g = four_edge_graph();
    testing::StubSearcher arxiv(Source::Arxiv), local(Source::Local);
    arxiv.add(kQuery, "2401.1", "smoking and lung cancer");
    arxiv.add(kQuery, "2401.2", "lung cancer screening");
    local.add(kQuery, "notes", "clinic notes");
    // a cached copy of the arXiv item keeps its origin, so it shares the (source, doc_id) key
    local.results[kQuery].push_back({Source::Arxiv, "2401.1", "2401.1", "smoking and lung cancer", std::nullopt, 1.0});
    SourceConfig c;
    c.wikipedia.enabled = false;
    c.top_k = 10;
    Verifier v(c, {&arxiv, &local});
    const auto r = v.verify(smoking(), g);
    const auto& rec = r.records[0];
    REQUIRE(rec.edge.to == "cancer");
    CHECK(rec.documents.size() == 3);
    std::size_t copies = 0;
    for (const auto& d : rec.documents) copies += d.doc_id == "2401.1";
    CHECK(copies == 1);
}

TEST_CASE("offline fixtures end to end with a cached duplicate") {
    const auto g = graph::parse_graph(R"({"variables":[{"id":"L","kind":"latent"},
        {"id":"cancer","kind":"observed","name":"Lung cancer"}],"edges":[{"from":"L","to":"cancer"}]})");
    SourceConfig c;
    c.fixture_dir = kFixtures + "/retrieval";
    c.corpus_dir = kFixtures + "/corpus";
    VirtualClock clock;
    SourceSet sources(c, clock);
    Verifier v(c, sources.searchers());
    const auto r = v.verify(smoking(), g);
    REQUIRE(r.records.size() == 1);
    const auto& rec = r.records[0];
    CHECK(rec.supports);
    CHECK(rec.documents.size() == 5);
    std::size_t copies = 0;
    for (const auto& d : rec.documents) copies += d.doc_id == "http://arxiv.org/abs/2401.00001v1";
    CHECK(copies == 1);
    CHECK(rec.documents[0].snippet ==
          "We estimate the causal effect of smoking on lung cancer incidence using instrumental variables.");
    const auto again = v.verify(smoking(), g);
    CHECK(dump_artifact(to_json(again.records)) == dump_artifact(to_json(r.records)));
}

TEST_CASE("disabling sources never increases support") {
    const auto g = four_edge_graph();
    std::mt19937_64 rng(21);
    const std::vector<std::string> snippets{"smoking", "lung cancer", "smoking lung cancer", "tar deposits smoking",
                                            "genotype", "chronic cough", "noise", "smoking chronic cough"};
    for (int trial = 0; trial < 10; ++trial) {
        testing::StubSearcher a(Source::Arxiv), w(Source::Wikipedia), l(Source::Local);
        for (const auto& q : edge_queries(smoking(), g))
            for (auto* s : {&a, &w, &l})
                for (int d = 0; d < 3; ++d)
                    if (rng() % 2) s->add(q.query, "d" + std::to_string(d), snippets[rng() % snippets.size()]);
        std::map<int, std::size_t> n_by_mask;
        for (int mask = 0; mask < 8; ++mask) {
            SourceConfig c;
            c.arxiv.enabled = mask & 1;
            c.wikipedia.enabled = mask & 2;
            c.local.enabled = mask & 4;
            const auto r = Verifier(c, {&a, &w, &l}).verify(smoking(), g);
            CHECK(r.supported <= r.searched);
            CHECK(r.searched <= graph::latent_incident_edges(g).size());
            n_by_mask[mask] = r.supported;
        }
        for (int mask = 0; mask < 8; ++mask)
            for (int sub = 0; sub < 8; ++sub)
                if ((sub & mask) == sub) CHECK(n_by_mask[sub] <= n_by_mask[mask]);
        CHECK(n_by_mask[0] == 0);
    }
}

TEST_CASE("no sources gives zero evidence reliability") {
    const auto g = four_edge_graph();
    testing::StubSearcher local(Source::Local);
    plant_four_edges(local);
    SourceConfig c = local_only();
    c.local.enabled = false;
    const auto r = Verifier(c, {&local}).verify(smoking(), g);
    CHECK(r.searched == 0);
    CHECK(reward::evidence_reliability(r.supported, r.searched) == 0.0);
}

TEST_CASE("digest lines") {
    const auto g = four_edge_graph();
    testing::StubSearcher local(Source::Local);
    plant_four_edges(local);
    local.failing.insert("does Smoking cause Chronic cough");
    const auto r = Verifier(local_only(), {&local}).verify(smoking(), g);
    const auto d = digest(r.records);
    CHECK(d ==
          "- does Smoking cause Lung cancer: supported (1.000); top: c1\n"
          "- does Smoking cause Chronic cough: no evidence (0.000)\n"
          "- does Smoking cause Tar deposits: supported (1.000); top: t1\n"
          "- does Genotype cause Smoking: unsupported (0.000); top: g1\n");
    CHECK(digest(r.records, 1) == "- does Smoking cause Lung cancer: supported (1.000); top: c1\n");
}

TEST_CASE("source config validation") {
    SourceConfig c;
    c.top_k = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = SourceConfig{};
    c.arxiv.rate_limit = 0.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.arxiv.enabled = false;
    CHECK_NOTHROW(c.validate());
}
