#include "tlvd/causal_graph.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "tlvd/errors.hpp"

namespace tlvd::graph {

using nlohmann::json;

namespace {

std::string edge_label(const Edge& e) { return e.from + (e.oriented ? "->" : "--") + e.to; }

const json& require_field(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object()) throw ParseError(where + " must be an object");
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(where + " is missing field '" + key + "'");
    return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
    const json& v = require_field(obj, key, where);
    if (!v.is_string()) throw ParseError(where + " field '" + key + "' must be a string");
    return v.get<std::string>();
}

// Kahn's algorithm over directed edges; reports one node on a cycle.
void check_acyclic(const std::map<std::string, Variable>& vars, const std::vector<Edge>& edges) {
    std::map<std::string, int> indegree;
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& [id, _] : vars) indegree[id] = 0;
    for (const auto& e : edges) {
        if (!e.oriented) continue;
        out[e.from].push_back(e.to);
        indegree[e.to] += 1;
    }
    std::vector<std::string> ready;
    for (const auto& [id, d] : indegree)
        if (d == 0) ready.push_back(id);
    std::size_t visited = 0;
    while (!ready.empty()) {
        auto id = ready.back();
        ready.pop_back();
        ++visited;
        for (const auto& next : out[id])
            if (--indegree[next] == 0) ready.push_back(next);
    }
    if (visited != vars.size()) {
        std::vector<std::string> on_cycle;
        for (const auto& [id, d] : indegree)
            if (d > 0) on_cycle.push_back(id);
        std::string names;
        for (const auto& id : on_cycle) names += (names.empty() ? "" : ", ") + id;
        throw CycleError("directed cycle through {" + names + "}");
    }
}

}  // namespace

std::string to_string(VariableKind kind) { return kind == VariableKind::Latent ? "latent" : "observed"; }

CausalGraph::CausalGraph(std::vector<Variable> variables, std::vector<Edge> edges) {
    for (auto& v : variables) {
        if (v.id.empty()) throw ParseError("variable with empty id");
        if (!v.is_latent() && v.display_name.empty())
            throw ParseError("observed variable '" + v.id + "' needs a nonempty name");
        const auto id = v.id;
        if (!variables_.emplace(id, std::move(v)).second) throw ParseError("duplicate variable id '" + id + "'");
    }
    std::set<std::pair<std::string, std::string>> directed, undirected;
    for (auto& e : edges) {
        for (const auto* end : {&e.from, &e.to})
            if (!variables_.contains(*end))
                throw ParseError("edge " + edge_label(e) + " references unknown variable '" + *end + "'");
        if (e.from == e.to) throw ParseError("self-loop on '" + e.from + "'");
        if (!e.oriented && e.to < e.from) std::swap(e.from, e.to);
        // A->B with B->A is left for the cycle check; anything else on one pair is a duplicate.
        auto key = std::minmax(e.from, e.to);
        const bool dup = e.oriented ? directed.contains({e.from, e.to}) || undirected.contains(key)
                                    : undirected.contains(key) || directed.contains({e.from, e.to}) ||
                                          directed.contains({e.to, e.from});
        if (dup) throw ParseError("duplicate edge between '" + key.first + "' and '" + key.second + "'");
        if (e.oriented) directed.emplace(e.from, e.to);
        else undirected.emplace(key.first, key.second);
    }
    std::sort(edges.begin(), edges.end());
    edges_ = std::move(edges);
    check_acyclic(variables_, edges_);
}

const Variable& CausalGraph::variable(std::string_view id) const {
    auto it = variables_.find(std::string(id));
    if (it == variables_.end()) throw RangeError("unknown variable '" + std::string(id) + "'");
    return it->second;
}

bool CausalGraph::contains(std::string_view id) const { return variables_.contains(std::string(id)); }

std::set<std::string> CausalGraph::parents(std::string_view id) const {
    std::set<std::string> out;
    for (const auto& e : edges_)
        if (e.oriented && e.to == id) out.insert(e.from);
    return out;
}

std::set<std::string> CausalGraph::children(std::string_view id) const {
    std::set<std::string> out;
    for (const auto& e : edges_)
        if (e.oriented && e.from == id) out.insert(e.to);
    return out;
}

std::set<std::string> CausalGraph::undirected_neighbors(std::string_view id) const {
    std::set<std::string> out;
    for (const auto& e : edges_)
        if (!e.oriented && e.touches(id)) out.insert(e.other(id));
    return out;
}

std::vector<Edge> CausalGraph::incident_edges(std::string_view id) const {
    std::vector<Edge> out;
    for (const auto& e : edges_)
        if (e.touches(id)) out.push_back(e);
    return out;
}

CausalGraph parse_graph_json(const json& doc) {
    if (!doc.is_object()) throw ParseError("graph document must be a JSON object");
    const json& vars = require_field(doc, "variables", "graph");
    if (!vars.is_array()) throw ParseError("graph field 'variables' must be an array");
    std::vector<Variable> variables;
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const std::string where = "variables[" + std::to_string(i) + "]";
        Variable v;
        v.id = require_string(vars[i], "id", where);
        const auto kind = require_string(vars[i], "kind", where);
        if (kind == "latent") v.kind = VariableKind::Latent;
        else if (kind == "observed") v.kind = VariableKind::Observed;
        else throw ParseError(where + " ('" + v.id + "') has unknown kind '" + kind + "'");
        if (auto it = vars[i].find("name"); it != vars[i].end() && !it->is_null()) {
            if (!it->is_string()) throw ParseError(where + " field 'name' must be a string");
            v.display_name = it->get<std::string>();
        }
        if (auto it = vars[i].find("description"); it != vars[i].end() && it->is_string())
            v.description = it->get<std::string>();
        variables.push_back(std::move(v));
    }
    std::vector<Edge> edges;
    if (auto it = doc.find("edges"); it != doc.end()) {
        if (!it->is_array()) throw ParseError("graph field 'edges' must be an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const std::string where = "edges[" + std::to_string(i) + "]";
            const json& e = (*it)[i];
            Edge edge;
            edge.from = require_string(e, "from", where);
            edge.to = require_string(e, "to", where);
            if (auto o = e.find("oriented"); o != e.end()) {
                if (!o->is_boolean()) throw ParseError(where + " field 'oriented' must be a boolean");
                edge.oriented = o->get<bool>();
            }
            edges.push_back(std::move(edge));
        }
    }
    return CausalGraph(std::move(variables), std::move(edges));
}

CausalGraph parse_graph(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("graph is not valid JSON: ") + e.what());
    }
    return parse_graph_json(doc);
}

CausalGraph load_graph(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open graph file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_graph(ss.str());
}

json to_json(const CausalGraph& graph) {
    json vars = json::array();
    for (const auto& [id, v] : graph.variables()) {
        json item = {{"id", v.id}, {"kind", to_string(v.kind)}, {"name", v.display_name}};
        if (v.description) item["description"] = *v.description;
        vars.push_back(std::move(item));
    }
    json edges = json::array();
    for (const auto& e : graph.edges()) edges.push_back({{"from", e.from}, {"oriented", e.oriented}, {"to", e.to}});
    return {{"edges", edges}, {"variables", vars}};
}

std::string serialize(const CausalGraph& graph) { return to_json(graph).dump(2) + "\n"; }

MarkovBlanket markov_blanket(const CausalGraph& graph, std::string_view target, BlanketPolicy policy) {
    if (!graph.contains(target)) throw RangeError("unknown variable '" + std::string(target) + "'");
    MarkovBlanket mb;
    mb.target = std::string(target);
    mb.parents = graph.parents(target);
    mb.children = graph.children(target);

    const auto ambiguous = graph.undirected_neighbors(target);
    if (!ambiguous.empty() && policy == BlanketPolicy::Strict)
        throw AmbiguityError("unoriented edge between '" + mb.target + "' and '" + *ambiguous.begin() +
                             "' prevents Markov blanket extraction (strict policy)");

    // Under the superset policy an unoriented neighbour may be a parent or a child.
    std::set<std::string> possible_children = mb.children;
    for (const auto& n : ambiguous) {
        mb.parents.insert(n);
        mb.children.insert(n);
        possible_children.insert(n);
    }
    for (const auto& child : possible_children) {
        const auto child_ambiguous = graph.undirected_neighbors(child);
        if (mb.children.contains(child) && !ambiguous.contains(child) && !child_ambiguous.empty() &&
            policy == BlanketPolicy::Strict)
            throw AmbiguityError("unoriented edge between '" + child + "' and '" + *child_ambiguous.begin() +
                                 "' (child of '" + mb.target + "') prevents Markov blanket extraction");
        for (const auto& p : graph.parents(child))
            if (p != mb.target) mb.spouses.insert(p);
        for (const auto& p : child_ambiguous)
            if (p != mb.target) mb.spouses.insert(p);
    }
    for (const auto* part : {&mb.parents, &mb.children, &mb.spouses}) mb.members.insert(part->begin(), part->end());
    mb.members.erase(mb.target);
    return mb;
}

std::vector<LatentQuery> latent_queries(const CausalGraph& graph, BlanketPolicy policy) {
    std::vector<LatentQuery> out;
    for (const auto& [id, v] : graph.variables())
        if (v.is_latent()) out.push_back({v, markov_blanket(graph, id, policy)});
    return out;
}

std::vector<Edge> latent_incident_edges(const CausalGraph& graph) {
    std::vector<Edge> out;
    for (const auto& e : graph.edges())
        if (graph.variable(e.from).is_latent() || graph.variable(e.to).is_latent()) out.push_back(e);
    return out;
}

}  // namespace tlvd::graph
