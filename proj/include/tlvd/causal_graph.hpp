#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace tlvd::graph {

enum class VariableKind { Observed, Latent };

struct Variable {
    std::string id;
    std::string display_name;
    VariableKind kind = VariableKind::Observed;
    std::optional<std::string> description;

    [[nodiscard]] bool is_latent() const { return kind == VariableKind::Latent; }
    /// display_name, or the id for latents that have not been named yet.
    [[nodiscard]] const std::string& label() const { return display_name.empty() ? id : display_name; }
};

/// A directed edge has from -> to. An unoriented edge stores its endpoints in
/// lexicographic order.
struct Edge {
    std::string from;
    std::string to;
    bool oriented = true;

    [[nodiscard]] bool touches(std::string_view id) const { return from == id || to == id; }
    [[nodiscard]] const std::string& other(std::string_view id) const { return from == id ? to : from; }
    auto operator<=>(const Edge&) const = default;
};

enum class BlanketPolicy { Strict, Superset };

struct MarkovBlanket {
    std::string target;
    std::set<std::string> members;
    std::set<std::string> parents;
    std::set<std::string> children;
    std::set<std::string> spouses;
};

class CausalGraph {
public:
    /// Validates every invariant: unique ids, named observed variables, known endpoints,
    /// no self-loops, no duplicate edges, no directed cycle.
    CausalGraph(std::vector<Variable> variables, std::vector<Edge> edges);

    [[nodiscard]] const std::map<std::string, Variable>& variables() const { return variables_; }
    [[nodiscard]] const std::vector<Edge>& edges() const { return edges_; }
    [[nodiscard]] const Variable& variable(std::string_view id) const;
    [[nodiscard]] bool contains(std::string_view id) const;

    [[nodiscard]] std::set<std::string> parents(std::string_view id) const;
    [[nodiscard]] std::set<std::string> children(std::string_view id) const;
    [[nodiscard]] std::set<std::string> undirected_neighbors(std::string_view id) const;
    [[nodiscard]] std::vector<Edge> incident_edges(std::string_view id) const;

private:
    std::map<std::string, Variable> variables_;
    std::vector<Edge> edges_;
};

CausalGraph parse_graph(std::string_view document);
CausalGraph parse_graph_json(const nlohmann::json& document);
CausalGraph load_graph(const std::string& path);

/// Canonical form: keys sorted, variables by id, edges lexicographically.
nlohmann::json to_json(const CausalGraph& graph);
std::string serialize(const CausalGraph& graph);

/// parents ∪ children ∪ parents(children), minus the target.
MarkovBlanket markov_blanket(const CausalGraph& graph, std::string_view target,
                             BlanketPolicy policy = BlanketPolicy::Strict);

struct LatentQuery {
    Variable latent;
    MarkovBlanket blanket;
};

/// One entry per latent variable, sorted by id.
std::vector<LatentQuery> latent_queries(const CausalGraph& graph, BlanketPolicy policy = BlanketPolicy::Strict);

/// Every edge with at least one latent endpoint. Its size is EA.
std::vector<Edge> latent_incident_edges(const CausalGraph& graph);

std::string to_string(VariableKind kind);

}  // namespace tlvd::graph
