#include "tlvd/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tlvd/errors.hpp"
#include "tlvd/text.hpp"

namespace tlvd::config {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>> kKeys = {
    {"run", {"graph", "domain", "seed", "output", "mode", "blanket_policy"}},
    {"training",
     {"episodes", "learning_rate", "gamma", "d_entity", "d_belief", "hidden", "lambda_m", "r_max", "soft_update_rate",
      "batch_size", "buffer_capacity", "grid", "encoder_heads", "mixing_heads", "early_stop_threshold",
      "early_stop_window", "epsilon_start", "epsilon_end", "rounds", "diagnostic_checkpoint"}},
    {"reward", {"alpha_al", "alpha_ur", "alpha_cc", "alpha_er", "r_max"}},
    {"sources",
     {"offline", "top_k", "support_threshold", "snippet_window", "fixtures", "corpus", "record", "arxiv",
      "arxiv_endpoint", "arxiv_rate", "wikipedia", "wikipedia_endpoint", "wikipedia_rate", "local", "local_rate"}},
    {"backends",
     {"kind", "coordinator", "judge", "endpoint", "path", "model", "api_key_env", "timeout_ms", "temperature_lo",
      "temperature_hi", "penalty_hi", "executors"}},
    {"executors", {}},
    {"metrics", {"truth", "threshold"}},
};

std::string unquote(std::string v) {
    v = text::trim(v);
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\'')))
        v = v.substr(1, v.size() - 2);
    return v;
}

// Strips trailing "# ..." comments outside quotes; the ini reader only handles whole-line comments.
std::string strip_comments(const std::string& text) {
    std::istringstream in(text);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        char quote = 0;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char c = line[i];
            if (quote) {
                if (c == quote) quote = 0;
            } else if (c == '"' || c == '\'') {
                quote = c;
            } else if (c == '#' && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
                line.resize(i);
                break;
            }
        }
        out << line << "\n";
    }
    return out.str();
}

class Reader {
public:
    Reader(const pt::ptree& tree, std::string base) : tree_(tree), base_(std::move(base)) {}

    std::optional<std::string> raw(const std::string& section, const std::string& key) const {
        auto s = tree_.get_child_optional(pt::ptree::path_type(section, '\0'));
        if (!s) return std::nullopt;
        auto v = s->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
        if (!v) return std::nullopt;
        return unquote(*v);
    }

    template <typename T>
    void get(const std::string& section, const std::string& key, T& out) const {
        auto v = raw(section, key);
        if (!v) return;
        std::istringstream in(*v);
        T parsed{};
        if constexpr (std::is_same_v<T, bool>) {
            if (*v == "true" || *v == "1" || *v == "yes")
                parsed = true;
            else if (*v == "false" || *v == "0" || *v == "no")
                parsed = false;
            else
                fail(section, key, *v);
        } else if constexpr (std::is_same_v<T, std::string>) {
            parsed = *v;
        } else {
            if (!(in >> parsed) || !(in >> std::ws).eof()) fail(section, key, *v);
            if constexpr (std::is_unsigned_v<T>)
                if (v->find('-') != std::string::npos) fail(section, key, *v);
        }
        out = parsed;
    }

    void path(const std::string& section, const std::string& key, std::string& out) const {
        auto v = raw(section, key);
        if (!v || v->empty()) return;
        out = resolve(*v);
    }

    std::string resolve(const std::string& p) const { return fs::path(p).is_absolute() ? p : (fs::path(base_) / p).lexically_normal().string(); }

private:
    [[noreturn]] static void fail(const std::string& section, const std::string& key, const std::string& v) {
        throw ConfigError("[" + section + "] " + key + ": cannot parse '" + v + "'");
    }
    const pt::ptree& tree_;
    std::string base_;
};

}  // namespace

RunConfig RunConfig::parse(const std::string& text, const std::string& base_dir) {
    pt::ptree tree;
    try {
        std::istringstream in(strip_comments(text));
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config syntax error: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
        auto allowed = kKeys.find(section);
        if (allowed == kKeys.end()) {
            if (body.empty()) throw ConfigError("config key '" + section + "' must be inside a section");
            throw ConfigError("unknown config section [" + section + "]");
        }
        if (section == "executors") continue;
        for (const auto& [key, value] : body)
            if (!allowed->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
    }

    RunConfig c;
    c.base_dir = base_dir;
    Reader r(tree, base_dir);
    r.path("run", "graph", c.graph_path);
    r.get("run", "domain", c.domain);
    if (auto s = r.raw("run", "seed")) {
        std::uint64_t seed = 0;
        r.get("run", "seed", seed);
        c.seed = seed;
    }
    std::string output = c.output_dir;
    r.get("run", "output", output);
    c.output_dir = r.resolve(output);
    std::string mode = "pipeline";
    r.get("run", "mode", mode);
    if (mode == "pipeline")
        c.mode = Mode::Pipeline;
    else if (mode == "synthetic")
        c.mode = Mode::Synthetic;
    else
        throw ConfigError("[run] mode must be pipeline or synthetic, not '" + mode + "'");
    std::string policy = "strict";
    r.get("run", "blanket_policy", policy);
    if (policy == "strict")
        c.blanket_policy = graph::BlanketPolicy::Strict;
    else if (policy == "superset")
        c.blanket_policy = graph::BlanketPolicy::Superset;
    else
        throw ConfigError("[run] blanket_policy must be strict or superset");

    auto& t = c.training;
    r.get("training", "episodes", t.episodes);
    r.get("training", "learning_rate", t.learning_rate);
    r.get("training", "gamma", t.gamma);
    r.get("training", "d_entity", t.d_entity);
    r.get("training", "d_belief", t.d_belief);
    r.get("training", "hidden", t.hidden);
    r.get("training", "lambda_m", t.lambda_m);
    r.get("training", "r_max", t.r_max);
    r.get("training", "soft_update_rate", t.soft_update_rate);
    r.get("training", "batch_size", t.batch_size);
    r.get("training", "buffer_capacity", t.buffer_capacity);
    r.get("training", "grid", t.grid);
    r.get("training", "encoder_heads", t.encoder_heads);
    r.get("training", "mixing_heads", t.mixing_heads);
    r.get("training", "early_stop_threshold", t.early_stop_threshold);
    r.get("training", "early_stop_window", t.early_stop_window);
    r.get("training", "epsilon_start", t.epsilon_start);
    r.get("training", "epsilon_end", t.epsilon_end);
    r.get("training", "rounds", c.rounds);
    r.path("training", "diagnostic_checkpoint", t.diagnostic_checkpoint);

    r.get("reward", "alpha_al", c.weights.alpha[0]);
    r.get("reward", "alpha_ur", c.weights.alpha[1]);
    r.get("reward", "alpha_cc", c.weights.alpha[2]);
    r.get("reward", "alpha_er", c.weights.alpha[3]);
    r.get("reward", "r_max", t.r_max);

    auto& s = c.sources;
    r.get("sources", "offline", s.offline);
    r.get("sources", "top_k", s.top_k);
    r.get("sources", "support_threshold", s.support_threshold);
    r.get("sources", "snippet_window", s.snippet_window);
    r.path("sources", "fixtures", s.fixture_dir);
    r.path("sources", "corpus", s.corpus_dir);
    r.path("sources", "record", s.record_dir);
    r.get("sources", "arxiv", s.arxiv.enabled);
    r.get("sources", "arxiv_endpoint", s.arxiv.endpoint);
    r.get("sources", "arxiv_rate", s.arxiv.rate_limit);
    r.get("sources", "wikipedia", s.wikipedia.enabled);
    r.get("sources", "wikipedia_endpoint", s.wikipedia.endpoint);
    r.get("sources", "wikipedia_rate", s.wikipedia.rate_limit);
    r.get("sources", "local", s.local.enabled);
    r.get("sources", "local_rate", s.local.rate_limit);

    auto& b = c.backends;
    r.get("backends", "kind", b.kind);
    r.path("backends", "coordinator", b.coordinator_table);
    r.path("backends", "judge", b.judge_table);
    r.get("backends", "endpoint", b.endpoint);
    r.get("backends", "path", b.path);
    r.get("backends", "model", b.model);
    std::int64_t timeout = b.timeout.count();
    r.get("backends", "timeout_ms", timeout);
    b.timeout = std::chrono::milliseconds(timeout);
    r.get("backends", "temperature_lo", b.range.temperature_lo);
    r.get("backends", "temperature_hi", b.range.temperature_hi);
    r.get("backends", "penalty_hi", b.range.penalty_hi);
    if (auto env = r.raw("backends", "api_key_env"); env && !env->empty())
        if (const char* key = std::getenv(env->c_str())) b.api_key = key;
    if (auto ex = tree.get_child_optional("executors"))
        for (const auto& [name, value] : *ex) b.executor_tables[name] = r.resolve(unquote(value.data()));
    if (auto names = r.raw("backends", "executors")) {
        std::istringstream in(*names);
        std::string name;
        while (std::getline(in, name, ',')) {
            name = text::trim(name);
            if (!name.empty()) b.executors.push_back(name);
        }
    }
    if (b.executors.empty())
        for (const auto& [name, table] : b.executor_tables) b.executors.push_back(name);
    std::sort(b.executors.begin(), b.executors.end());

    r.path("metrics", "truth", c.truth_path);
    r.get("metrics", "threshold", c.match_threshold);
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    auto base = fs::absolute(path).parent_path().string();
    return parse(ss.str(), base);
}

void RunConfig::validate() const {
    training.validate();
    weights.validate();
    sources.validate();
    backends.range.validate();
    if (rounds == 0) throw ConfigError("[training] rounds must be positive");
    if (!(match_threshold >= -1.0 && match_threshold <= 1.0)) throw ConfigError("[metrics] threshold must lie in [-1,1]");
    auto must_exist = [](const std::string& p, const std::string& what) {
        if (!p.empty() && !fs::exists(p)) throw ConfigError(what + " " + p + " does not exist");
    };
    if (mode == Mode::Pipeline) {
        if (graph_path.empty()) throw ConfigError("[run] graph is required");
        must_exist(graph_path, "graph file");
        if (backends.executors.empty()) throw ConfigError("at least one executor is required");
        if (backends.kind == "mock") {
            for (const auto& name : backends.executors) {
                auto it = backends.executor_tables.find(name);
                if (it == backends.executor_tables.end()) throw ConfigError("executor '" + name + "' has no mock table");
                must_exist(it->second, "mock table");
            }
            if (backends.coordinator_table.empty()) throw ConfigError("[backends] coordinator table is required");
            must_exist(backends.coordinator_table, "coordinator table");
            must_exist(backends.judge_table, "judge table");
            if (!seed) throw ConfigError("a seed is required with mock backends");
        } else if (backends.kind == "http") {
            if (backends.endpoint.empty()) throw ConfigError("[backends] endpoint is required for http backends");
        } else {
            throw ConfigError("[backends] kind must be mock or http, not '" + backends.kind + "'");
        }
    }
    must_exist(sources.fixture_dir, "fixture directory");
    must_exist(sources.corpus_dir, "corpus directory");
    must_exist(truth_path, "ground truth");
}

std::uint64_t RunConfig::require_seed() const {
    if (!seed) throw ConfigError("a seed is required (set [run] seed or pass --seed)");
    return *seed;
}

}  // namespace tlvd::config
