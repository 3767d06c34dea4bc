#include <doctest.h>

#include <random>

#include "tlvd/causal_graph.hpp"
#include "tlvd/errors.hpp"

using namespace tlvd;
using namespace tlvd::graph;

namespace {

Variable observed(const std::string& id) { return {id, "name " + id, VariableKind::Observed, std::nullopt}; }
Variable latent(const std::string& id) { return {id, "", VariableKind::Latent, std::nullopt}; }

// Blanket straight from the definition, scanning the raw edge list.
std::set<std::string> brute_blanket(const std::vector<std::string>& ids, const std::vector<Edge>& edges,
                                    const std::string& t) {
    auto has = [&](const std::string& a, const std::string& b) {
        for (const auto& e : edges)
            if (e.oriented && e.from == a && e.to == b) return true;
        return false;
    };
    std::set<std::string> out;
    for (const auto& v : ids) {
        if (v == t) continue;
        if (has(v, t) || has(t, v)) out.insert(v);
        for (const auto& c : ids)
            if (has(t, c) && has(v, c)) out.insert(v);
    }
    return out;
}

struct RandomDag {
    std::vector<Variable> vars;
    std::vector<std::string> ids;
    std::vector<Edge> edges;
};

RandomDag random_dag(std::size_t n, double p, std::mt19937_64& rng) {
    RandomDag g;
    std::bernoulli_distribution edge(p), lat(0.3);
    for (std::size_t i = 0; i < n; ++i) {
        const std::string id = "V" + std::to_string(i);
        g.ids.push_back(id);
        g.vars.push_back(lat(rng) ? latent(id) : observed(id));
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            if (edge(rng)) g.edges.push_back({g.ids[order[a]], g.ids[order[b]], true});
    return g;
}

}  // namespace

TEST_CASE("parse_graph") {
    SUBCASE("minimal graph") {
        auto g = parse_graph(R"({"variables":[{"id":"A","name":"a","kind":"observed"},
                                             {"id":"B","name":"b","kind":"observed"}],
                                "edges":[{"from":"A","to":"B","oriented":true}]})");
        CHECK(g.edges().size() == 1);
        CHECK(g.parents("B") == std::set<std::string>{"A"});
    }
    SUBCASE("unknown endpoint is named") {
        try {
            parse_graph(R"({"variables":[{"id":"A","name":"a","kind":"observed"}],
                            "edges":[{"from":"A","to":"Z","oriented":true}]})");
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("'Z'") != std::string::npos);
        }
    }
    SUBCASE("cycle") {
        CHECK_THROWS_AS(parse_graph(R"({"variables":[{"id":"A","name":"a","kind":"observed"},
                                                      {"id":"B","name":"b","kind":"observed"}],
                                         "edges":[{"from":"A","to":"B"},{"from":"B","to":"A"}]})"),
                        CycleError);
    }
    SUBCASE("schema violations") {
        CHECK_THROWS_AS(parse_graph("[1,2]"), ParseError);
        CHECK_THROWS_AS(parse_graph("{not json"), ParseError);
        CHECK_THROWS_AS(parse_graph(R"({"variables":[{"id":"A","kind":"observed"}]})"), ParseError);
        CHECK_THROWS_AS(parse_graph(R"({"variables":[{"id":"A","name":"a","kind":"hidden"}]})"), ParseError);
        CHECK_THROWS_AS(parse_graph(R"({"variables":[{"id":"A","name":"a","kind":"observed"},
                                                      {"id":"A","name":"b","kind":"observed"}]})"),
                        ParseError);
        CHECK_THROWS_AS(parse_graph(R"({"variables":[{"id":"A","name":"a","kind":"observed"}],
                                         "edges":[{"from":"A","to":"A"}]})"),
                        ParseError);
        CHECK_THROWS_AS(parse_graph(R"({"variables":[{"id":"A","name":"a","kind":"observed"},
                                                      {"id":"B","name":"b","kind":"observed"}],
                                         "edges":[{"from":"A","to":"B"},{"from":"B","to":"A","oriented":false}]})"),
                        ParseError);
    }
    SUBCASE("latents may be unnamed and fall back to their id") {
        auto g = parse_graph(R"({"variables":[{"id":"L1","kind":"latent"}]})");
        CHECK(g.variable("L1").label() == "L1");
    }
}

TEST_CASE("canonical serialization round trip") {
    auto text = R"({"edges":[{"from":"L1","to":"B"},{"from":"A","to":"L1"},{"from":"C","to":"B","oriented":false}],
                    "variables":[{"id":"C","name":"c","kind":"observed"},{"id":"B","name":"b","kind":"observed"},
                                 {"id":"A","name":"a","kind":"observed","description":"first"},
                                 {"id":"L1","kind":"latent"}]})";
    auto once = serialize(parse_graph(text));
    auto twice = serialize(parse_graph(once));
    CHECK(once == twice);
    auto g = parse_graph(once);
    CHECK(g.edges().front() == Edge{"A", "L1", true});
    CHECK(g.variable("A").description == std::optional<std::string>("first"));
}

TEST_CASE("markov blanket examples") {
    SUBCASE("chain") {
        CausalGraph g({observed("A"), latent("L"), observed("B")}, {{"A", "L", true}, {"L", "B", true}});
        CHECK(markov_blanket(g, "L").members == std::set<std::string>{"A", "B"});
    }
    SUBCASE("collider adds the spouse") {
        CausalGraph g({observed("A"), latent("L"), observed("B"), observed("C")},
                      {{"A", "L", true}, {"L", "B", true}, {"C", "B", true}});
        auto mb = markov_blanket(g, "L");
        CHECK(mb.members == std::set<std::string>{"A", "B", "C"});
        CHECK(mb.spouses == std::set<std::string>{"C"});
    }
    SUBCASE("isolated node") {
        CausalGraph g({latent("L"), observed("A")}, {});
        CHECK(markov_blanket(g, "L").members.empty());
    }
    SUBCASE("unknown target") {
        CausalGraph g({latent("L")}, {});
        CHECK_THROWS_AS(markov_blanket(g, "X"), RangeError);
    }
    SUBCASE("unoriented edges") {
        CausalGraph at_target({latent("L"), observed("A"), observed("B")}, {{"L", "A", false}, {"B", "L", true}});
        CHECK_THROWS_AS(markov_blanket(at_target, "L"), AmbiguityError);
        CHECK(markov_blanket(at_target, "L", BlanketPolicy::Superset).members == std::set<std::string>{"A", "B"});

        CausalGraph at_child({latent("L"), observed("A"), observed("B")}, {{"L", "A", true}, {"A", "B", false}});
        CHECK_THROWS_AS(markov_blanket(at_child, "L"), AmbiguityError);
        CHECK(markov_blanket(at_child, "L", BlanketPolicy::Superset).members == std::set<std::string>{"A", "B"});

        CausalGraph elsewhere({latent("L"), observed("A"), observed("B"), observed("C")},
                              {{"L", "A", true}, {"B", "C", false}});
        CHECK(markov_blanket(elsewhere, "L").members == std::set<std::string>{"A"});
    }
}

TEST_CASE("markov blanket equals the definitional brute force on random DAGs") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 40; ++trial) {
        auto d = random_dag(9, 0.3, rng);
        CausalGraph g(d.vars, d.edges);
        for (const auto& t : d.ids) {
            auto mb = markov_blanket(g, t);
            CHECK(mb.members == brute_blanket(d.ids, d.edges, t));
            CHECK_FALSE(mb.members.contains(t));
            // parent/child membership is symmetric
            for (const auto& m : mb.parents) CHECK(markov_blanket(g, m).members.contains(t));
            for (const auto& m : mb.children) CHECK(markov_blanket(g, m).members.contains(t));
        }
    }
}

TEST_CASE("spouse membership is not symmetric through the blanket") {
    // A -> C <- B, C -> D: A is in blanket(B) via C, but D's blanket omits A.
    CausalGraph g({observed("A"), observed("B"), observed("C"), observed("D")},
                  {{"A", "C", true}, {"B", "C", true}, {"C", "D", true}});
    CHECK(markov_blanket(g, "B").members.contains("A"));
    CHECK(markov_blanket(g, "D").members == std::set<std::string>{"C"});
    CHECK_FALSE(markov_blanket(g, "A").members.contains("D"));
}

TEST_CASE("blanket is invariant under relabeling of non-neighbors") {
    std::vector<Edge> edges = {{"A", "L", true}, {"L", "B", true}, {"C", "B", true}, {"X", "Y", true}, {"Y", "A", true}};
    CausalGraph g({observed("A"), latent("L"), observed("B"), observed("C"), observed("X"), observed("Y")}, edges);
    std::vector<Edge> renamed = {{"A", "L", true}, {"L", "B", true}, {"C", "B", true}, {"Q1", "Q2", true}, {"Q2", "A", true}};
    CausalGraph h({observed("A"), latent("L"), observed("B"), observed("C"), observed("Q1"), observed("Q2")}, renamed);
    CHECK(markov_blanket(g, "L").members == markov_blanket(h, "L").members);
}

TEST_CASE("latent queries") {
    CHECK(latent_queries(CausalGraph({observed("A")}, {})).empty());

    CausalGraph g({latent("L2"), latent("L1"), observed("A"), observed("B"), observed("C")},
                  {{"L1", "A", true}, {"L2", "A", true}, {"L2", "B", true}, {"C", "B", true}});
    auto qs = latent_queries(g);
    REQUIRE(qs.size() == 2);
    CHECK(qs[0].latent.id == "L1");
    CHECK(qs[1].latent.id == "L2");
    // L2 is a spouse of L1 through A
    CHECK(qs[0].blanket.members == std::set<std::string>{"A", "L2"});
}

TEST_CASE("latent incident edges") {
    CHECK(latent_incident_edges(CausalGraph({observed("A"), observed("B")}, {{"A", "B", true}})).empty());
    CausalGraph g({observed("A"), latent("L"), observed("B")}, {{"A", "L", true}, {"L", "B", true}, {"A", "B", true}});
    CHECK(latent_incident_edges(g).size() == 2);

    std::mt19937_64 rng(22);
    auto d = random_dag(22, 0.15, rng);
    CausalGraph big(d.vars, d.edges);
    std::size_t expected = 0;
    for (const auto& e : d.edges) {
        bool lat = false;
        for (const auto& v : d.vars)
            if ((v.id == e.from || v.id == e.to) && v.kind == VariableKind::Latent) lat = true;
        expected += lat ? 1 : 0;
    }
    CHECK(latent_incident_edges(big).size() == expected);
}
