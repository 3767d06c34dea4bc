#include "tlvd/checkpoint.hpp"

#include <cstdlib>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "tlvd/errors.hpp"

namespace tlvd::num {

namespace {

constexpr const char* kMagic = "tlvd-checkpoint";
constexpr int kVersion = 1;

std::string expect_word(std::istream& in, const char* what) {
    std::string word;
    if (!(in >> word)) throw ParseError(std::string("checkpoint truncated while reading ") + what);
    return word;
}

void expect_key(std::istream& in, const std::string& key) {
    const auto word = expect_word(in, key.c_str());
    if (word != key) throw ParseError("checkpoint: expected '" + key + "', found '" + word + "'");
}

double parse_double(const std::string& token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') throw ParseError("checkpoint: bad number '" + token + "'");
    return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::string& module, std::uint64_t seed,
                      const ParameterList& params) {
    if (module.find_first_of(" \t\n") != std::string::npos)
        throw UsageError("checkpoint module name must not contain whitespace");
    out << kMagic << ' ' << kVersion << '\n';
    out << "module " << module << '\n';
    out << "seed " << seed << '\n';
    out << "count " << params.size() << '\n';
    std::ostringstream values;
    values << std::hexfloat;
    for (const auto& np : params) {
        const Tensor& t = np.param->value;
        out << "param " << np.name << ' ' << t.shape.size();
        for (auto d : t.shape) out << ' ' << d;
        out << '\n';
        values.str("");
        for (std::size_t i = 0; i < t.size(); ++i) values << (i ? " " : "") << t.data[i];
        out << values.str() << '\n';
    }
    if (!out) throw Error("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
    if (expect_word(in, "magic") != kMagic) throw ParseError("not a tlvd checkpoint");
    if (expect_word(in, "version") != std::to_string(kVersion))
        throw ParseError("unsupported checkpoint version");
    Checkpoint ckpt;
    expect_key(in, "module");
    ckpt.module = expect_word(in, "module name");
    expect_key(in, "seed");
    ckpt.seed = std::stoull(expect_word(in, "seed"));
    expect_key(in, "count");
    const auto count = std::stoull(expect_word(in, "count"));
    for (std::size_t k = 0; k < count; ++k) {
        expect_key(in, "param");
        CheckpointEntry entry;
        entry.name = expect_word(in, "param name");
        const auto rank = std::stoull(expect_word(in, "rank"));
        std::vector<std::size_t> shape;
        for (std::size_t r = 0; r < rank; ++r) shape.push_back(std::stoull(expect_word(in, "shape")));
        Tensor t(shape);
        for (auto& v : t.data) v = parse_double(expect_word(in, "values"));
        entry.value = std::move(t);
        ckpt.entries.push_back(std::move(entry));
    }
    return ckpt;
}

void load_into(const Checkpoint& ckpt, const ParameterList& params) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& e : ckpt.entries) by_name[e.name] = &e.value;
    if (by_name.size() != params.size())
        throw ConfigError("checkpoint holds " + std::to_string(by_name.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
    for (const auto& np : params) {
        auto it = by_name.find(np.name);
        if (it == by_name.end()) throw ConfigError("checkpoint is missing parameter " + np.name);
        if (it->second->shape != np.param->value.shape)
            throw ConfigError("checkpoint parameter " + np.name + " has shape " + shape_string(it->second->shape) +
                              ", model expects " + shape_string(np.param->value.shape));
        np.param->value = *it->second;
    }
}

}  // namespace tlvd::num
