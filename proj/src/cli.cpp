#include "tlvd/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "tlvd/errors.hpp"
#include "tlvd/pipeline.hpp"

namespace tlvd::cli {
namespace {

namespace fs = std::filesystem;

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool offline = false;
    std::string out;
    std::string checkpoint;
    std::string hypotheses;
    std::string evidence;
    std::string log_level = "warn";
};

std::string error_kind(const std::exception& e) {
    if (dynamic_cast<const DivergenceError*>(&e)) return "divergence";
    if (dynamic_cast<const InvariantError*>(&e)) return "invariant";
    if (dynamic_cast<const FixtureError*>(&e)) return "fixture";
    if (dynamic_cast<const BackendError*>(&e)) return "backend";
    if (dynamic_cast<const RetrievalError*>(&e)) return "retrieval";
    if (dynamic_cast<const CycleError*>(&e)) return "cycle";
    if (dynamic_cast<const ParseError*>(&e)) return "parse";
    if (dynamic_cast<const AmbiguityError*>(&e)) return "ambiguity";
    if (dynamic_cast<const ConfigError*>(&e)) return "config";
    if (dynamic_cast<const UsageError*>(&e)) return "usage";
    if (dynamic_cast<const RangeError*>(&e)) return "range";
    if (dynamic_cast<const DimensionError*>(&e)) return "dimension";
    return "internal";
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const std::string& path) {
    try {
        return nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

class Runner {
public:
    Runner(Options opts, std::ostream& out) : opts_(std::move(opts)), out_(out) {
        if (opts_.config.empty()) throw UsageError("--config is required");
        config_ = config::RunConfig::load(opts_.config);
        if (opts_.seed) config_.seed = opts_.seed;
        if (opts_.offline) config_.sources.offline = true;
        if (!opts_.out.empty()) config_.output_dir = opts_.out;
        config_.validate();
    }

    void discover() {
        require_pipeline("discover");
        pipeline::Session session(config_);
        auto trained = train(session);
        auto inference = pipeline::infer_stage(session, trained.learner);
        write_hypotheses(inference.hypotheses);
        auto records = pipeline::verify_stage(session, inference.hypotheses);
        write("evidence.json", dump_artifact(to_json(records)));
        if (!config_.truth_path.empty()) evaluate(session, inference.hypotheses, records);
    }

    void train_only() {
        pipeline::Session session(config_);
        train(session);
    }

    void infer() {
        require_pipeline("infer");
        pipeline::Session session(config_);
        auto learner = session.make_learner();
        pipeline::load_learner(path_or(opts_.checkpoint, "learner.ckpt"), learner);
        write_hypotheses(pipeline::infer_stage(session, learner).hypotheses);
    }

    void verify() {
        require_pipeline("verify");
        pipeline::Session session(config_);
        const auto hypotheses = hypothesis_list_from_json(read_json(path_or(opts_.hypotheses, "hypotheses.json")));
        write("evidence.json", dump_artifact(to_json(pipeline::verify_stage(session, hypotheses))));
    }

    void eval() {
        require_pipeline("eval");
        pipeline::Session session(config_);
        const auto hypotheses = hypothesis_list_from_json(read_json(path_or(opts_.hypotheses, "hypotheses.json")));
        const auto records = evidence_list_from_json(read_json(path_or(opts_.evidence, "evidence.json")));
        evaluate(session, hypotheses, records);
    }

private:
    void require_pipeline(const std::string& command) const {
        if (config_.mode != config::Mode::Pipeline)
            throw ConfigError("synthetic mode supports only the train command, not " + command);
    }

    std::string path_or(const std::string& given, const std::string& name) const {
        return given.empty() ? (fs::path(config_.output_dir) / name).string() : given;
    }

    void write(const std::string& name, const std::string& content) {
        fs::create_directories(config_.output_dir);
        const auto path = (fs::path(config_.output_dir) / name).string();
        std::ofstream f(path, std::ios::binary);
        if (!f) throw ConfigError("cannot write " + path);
        f << content;
        out_ << path << "\n";
    }

    training::TrainResult train(pipeline::Session& session) {
        auto result = pipeline::train_stage(session);
        fs::create_directories(config_.output_dir);
        const auto ckpt = (fs::path(config_.output_dir) / "learner.ckpt").string();
        pipeline::save_learner(ckpt, result.learner, config_.require_seed());
        out_ << ckpt << "\n";
        std::ostringstream csv;
        training::write_metrics_csv(csv, result.log);
        write("training.csv", csv.str());
        if (result.ledger.size() > 0) {
            std::ostringstream r;
            r << "t,regret,regret_over_sqrt_t\n";
            for (std::size_t t = 1; t <= result.ledger.size(); ++t) {
                const double v = result.ledger.total_regret(t);
                r << fmt::format("{},{:.17g},{:.17g}\n", t, v, v / std::sqrt(static_cast<double>(t)));
            }
            write("regret.csv", r.str());
        }
        if (result.stopped_early) spdlog::info("training stopped early after {} episodes", result.log.size());
        return result;
    }

    void write_hypotheses(const std::vector<LatentHypothesis>& hypotheses) {
        write("hypotheses.json", dump_artifact(to_json(hypotheses)));
    }

    void evaluate(pipeline::Session& session, const std::vector<LatentHypothesis>& hypotheses,
                  const std::vector<EvidenceRecord>& records) {
        const auto report = pipeline::eval_stage(session, hypotheses, records);
        write("metrics.json", dump_artifact(metrics::to_json(report)));
    }

    Options opts_;
    std::ostream& out_;
    config::RunConfig config_;
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "Run configuration (ini)")->required();
    cmd->add_option("--seed", o.seed, "Override [run] seed");
    cmd->add_flag("--offline", o.offline, "Serve retrieval from fixtures only");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--log-level", o.log_level, "trace|debug|info|warn|error|off");
}

void configure_logging(const std::string& level) {
    static auto logger = [] {
        auto l = spdlog::stderr_logger_st("tlvd-cli");
        spdlog::set_default_logger(l);
        return l;
    }();
    const auto parsed = spdlog::level::from_str(level);
    if (parsed == spdlog::level::off && level != "off") throw UsageError("unknown log level " + level);
    logger->set_level(parsed);
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const InvariantError*>(&e)) return kInvariant;
    if (dynamic_cast<const RetrievalError*>(&e)) return kRetrieval;
    if (dynamic_cast<const BackendError*>(&e)) return kBackend;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const AmbiguityError*>(&e))
        return kConfig;
    return kUsage;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Latent variable discovery with trained executor agents"};
    app.require_subcommand(1);
    Options opts;
    auto* discover = app.add_subcommand("discover", "Train, infer, verify and evaluate");
    auto* train = app.add_subcommand("train", "Train the executor policies");
    auto* infer = app.add_subcommand("infer", "Name every latent with a trained checkpoint");
    auto* verify = app.add_subcommand("verify", "Retrieve evidence for hypotheses");
    auto* eval = app.add_subcommand("eval", "Score hypotheses and evidence against ground truth");
    for (auto* cmd : {discover, train, infer, verify, eval}) add_common(cmd, opts);
    infer->add_option("--checkpoint", opts.checkpoint, "Learner checkpoint (default <out>/learner.ckpt)");
    verify->add_option("--hypotheses", opts.hypotheses, "Hypotheses (default <out>/hypotheses.json)");
    eval->add_option("--hypotheses", opts.hypotheses, "Hypotheses (default <out>/hypotheses.json)");
    eval->add_option("--evidence", opts.evidence, "Evidence records (default <out>/evidence.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << nlohmann::json{{"error", "usage"}, {"exit_code", kUsage}, {"message", e.what()}}.dump() << "\n";
        return kUsage;
    }

    try {
        configure_logging(opts.log_level);
        Runner runner(opts, out);
        if (*discover) runner.discover();
        else if (*train) runner.train_only();
        else if (*infer) runner.infer();
        else if (*verify) runner.verify();
        else runner.eval();
        return kOk;
    } catch (const std::exception& e) {
        const int code = exit_code_for(e);
        err << nlohmann::json{{"error", error_kind(e)}, {"exit_code", code}, {"message", e.what()}}.dump() << "\n";
        return code;
    }
}

}  // namespace tlvd::cli
