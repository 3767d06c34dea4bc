#include "tlvd/game.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "tlvd/errors.hpp"

namespace tlvd::game {

namespace {

std::vector<std::size_t> decode(std::size_t joint, const std::vector<std::size_t>& radix) {
    std::vector<std::size_t> out(radix.size());
    for (std::size_t i = radix.size(); i-- > 0;) {
        out[i] = joint % radix[i];
        joint /= radix[i];
    }
    return out;
}

std::size_t encode(const std::vector<std::size_t>& digits, const std::vector<std::size_t>& radix) {
    std::size_t joint = 0;
    for (std::size_t i = 0; i < radix.size(); ++i) {
        if (digits[i] >= radix[i]) throw RangeError("index out of range in joint encoding");
        joint = joint * radix[i] + digits[i];
    }
    return joint;
}

std::vector<std::size_t> type_radix(const SyntheticGame& g) {
    std::vector<std::size_t> r;
    for (const auto& p : g.priors) r.push_back(p.size());
    return r;
}

double product(const std::vector<std::size_t>& v) {
    double p = 1.0;
    for (auto x : v) p *= static_cast<double>(x);
    return p;
}

// Expected utility of `agent` when it plays `deviation` (pure) and others follow `profile`.
double deviation_utility(const SyntheticGame& game, const Profile& profile, std::size_t agent,
                         const std::vector<std::size_t>& deviation) {
    Profile p = profile;
    for (std::size_t t = 0; t < deviation.size(); ++t) {
        p[agent][t].assign(game.action_counts[agent], 0.0);
        p[agent][t][deviation[t]] = 1.0;
    }
    return expected_utility(game, p, agent);
}

}  // namespace

std::size_t SyntheticGame::joint_type_count() const { return static_cast<std::size_t>(product(type_radix(*this))); }
std::size_t SyntheticGame::joint_action_count() const { return static_cast<std::size_t>(product(action_counts)); }
std::vector<std::size_t> SyntheticGame::decode_types(std::size_t joint) const { return decode(joint, type_radix(*this)); }
std::size_t SyntheticGame::encode_types(const std::vector<std::size_t>& t) const { return encode(t, type_radix(*this)); }
std::vector<std::size_t> SyntheticGame::decode_actions(std::size_t joint) const { return decode(joint, action_counts); }
std::size_t SyntheticGame::encode_actions(const std::vector<std::size_t>& a) const { return encode(a, action_counts); }

double SyntheticGame::probability(const std::vector<std::size_t>& types) const {
    double p = 1.0;
    for (std::size_t i = 0; i < types.size(); ++i) p *= priors[i][types[i]];
    return p;
}

double SyntheticGame::payoff(std::size_t agent, const std::vector<std::size_t>& types,
                             const std::vector<std::size_t>& actions) const {
    return payoffs[agent][encode_types(types)][encode_actions(actions)];
}

void SyntheticGame::validate(double r_max) const {
    if (priors.empty()) throw ConfigError("game needs at least one agent");
    if (action_counts.size() != priors.size() || payoffs.size() != priors.size())
        throw ConfigError("game tables disagree on the number of agents");
    if (horizon == 0) throw ConfigError("game horizon must be positive");
    for (std::size_t i = 0; i < priors.size(); ++i) {
        if (priors[i].empty() || action_counts[i] == 0) throw ConfigError("every agent needs types and actions");
        double s = 0.0;
        for (double p : priors[i]) {
            if (p < 0.0) throw ConfigError("negative prior probability");
            s += p;
        }
        if (std::abs(s - 1.0) > 1e-9) throw ConfigError("prior of agent " + std::to_string(i) + " does not sum to 1");
    }
    for (const auto& table : payoffs) {
        if (table.size() != joint_type_count()) throw ConfigError("payoff table has the wrong number of type rows");
        for (const auto& row : table) {
            if (row.size() != joint_action_count()) throw ConfigError("payoff table has the wrong number of actions");
            for (double u : row)
                if (!(std::abs(u) <= r_max)) throw ConfigError("payoff exceeds R_max");
        }
    }
}

SyntheticGame SyntheticGame::coordination() {
    SyntheticGame g;
    g.priors = {{0.5, 0.5}, {0.5, 0.5}};
    g.action_counts = {2, 2};
    std::vector<std::vector<double>> table(4, std::vector<double>(4));
    for (std::size_t jt = 0; jt < 4; ++jt)
        for (std::size_t ja = 0; ja < 4; ++ja) {
            const auto t = g.decode_types(jt);
            const auto a = g.decode_actions(ja);
            table[jt][ja] = 0.4 * (a[0] == t[0]) + 0.4 * (a[1] == t[1]) + 0.2 * (a[0] == a[1]);
        }
    g.payoffs = {table, table};
    return g;
}

Profile to_profile(const SyntheticGame& game, const PureProfile& pure) {
    Profile p(game.agent_count());
    for (std::size_t i = 0; i < game.agent_count(); ++i)
        for (std::size_t t = 0; t < game.type_count(i); ++t) {
            std::vector<double> dist(game.action_counts[i], 0.0);
            dist.at(pure.at(i).at(t)) = 1.0;
            p[i].push_back(dist);
        }
    return p;
}

double expected_utility(const SyntheticGame& game, const Profile& profile, std::size_t agent) {
    double total = 0.0;
    for (std::size_t jt = 0; jt < game.joint_type_count(); ++jt) {
        const auto types = game.decode_types(jt);
        const double pt = game.probability(types);
        if (pt == 0.0) continue;
        for (std::size_t ja = 0; ja < game.joint_action_count(); ++ja) {
            const auto actions = game.decode_actions(ja);
            double pa = 1.0;
            for (std::size_t i = 0; i < actions.size(); ++i) pa *= profile[i][types[i]][actions[i]];
            if (pa != 0.0) total += pt * pa * game.payoffs[agent][jt][ja];
        }
    }
    return total;
}

double exploitability(const SyntheticGame& game, const Profile& profile) {
    double worst = 0.0;
    for (std::size_t i = 0; i < game.agent_count(); ++i) {
        const double base = expected_utility(game, profile, i);
        std::vector<std::size_t> dev(game.type_count(i), 0);
        std::function<void(std::size_t)> walk = [&](std::size_t t) {
            if (t == dev.size()) {
                worst = std::max(worst, deviation_utility(game, profile, i, dev) - base);
                return;
            }
            for (std::size_t a = 0; a < game.action_counts[i]; ++a) {
                dev[t] = a;
                walk(t + 1);
            }
        };
        walk(0);
    }
    return worst;
}

std::vector<PureProfile> pure_equilibria(const SyntheticGame& game, double tol) {
    std::vector<PureProfile> out;
    PureProfile current(game.agent_count());
    for (std::size_t i = 0; i < game.agent_count(); ++i) current[i].assign(game.type_count(i), 0);
    std::function<void(std::size_t, std::size_t)> walk = [&](std::size_t i, std::size_t t) {
        if (i == game.agent_count()) {
            if (exploitability(game, to_profile(game, current)) <= tol) out.push_back(current);
            return;
        }
        if (t == game.type_count(i)) return walk(i + 1, 0);
        for (std::size_t a = 0; a < game.action_counts[i]; ++a) {
            current[i][t] = a;
            walk(i, t + 1);
        }
    };
    walk(0, 0);
    return out;
}

std::vector<double> equilibrium_values(const SyntheticGame& game) {
    const auto equilibria = pure_equilibria(game);
    if (equilibria.empty()) throw InvariantError("game has no pure Bayesian Nash equilibrium");
    std::vector<double> best;
    double best_total = -1e300;
    for (const auto& e : equilibria) {
        const auto p = to_profile(game, e);
        std::vector<double> v;
        double total = 0.0;
        for (std::size_t i = 0; i < game.agent_count(); ++i) {
            v.push_back(expected_utility(game, p, i));
            total += v.back();
        }
        if (total > best_total) {
            best_total = total;
            best = v;
        }
    }
    return best;
}

void RegretLedger::record(RegretRecord r) {
    if (r.optimal.size() != r.current.size()) throw InvariantError("regret record has mismatched agent counts");
    if (!records_.empty() && r.optimal.size() != records_.front().optimal.size())
        throw InvariantError("regret record agent count changed");
    double gap = 0.0;
    for (std::size_t i = 0; i < r.optimal.size(); ++i) gap += r.optimal[i] - r.current[i];
    cumulative_.push_back((cumulative_.empty() ? 0.0 : cumulative_.back()) + gap);
    records_.push_back(std::move(r));
}

double RegretLedger::agent_regret(std::size_t agent, std::size_t T) const {
    if (T > records_.size()) throw RangeError("regret horizon exceeds ledger length");
    double s = 0.0;
    for (std::size_t t = 0; t < T; ++t) s += records_[t].optimal.at(agent) - records_[t].current.at(agent);
    return s;
}

double RegretLedger::total_regret(std::size_t T) const {
    if (T > records_.size()) throw RangeError("regret horizon exceeds ledger length");
    return T == 0 ? 0.0 : cumulative_[T - 1];
}

RegretFit bayesian_regret(const RegretLedger& ledger, std::size_t T) {
    if (T == 0 || T > ledger.size())
        throw RangeError("regret horizon " + std::to_string(T) + " outside ledger of " + std::to_string(ledger.size()));
    RegretFit fit;
    fit.regret = ledger.total_regret(T);
    double num = 0.0, den = 0.0;
    for (std::size_t t = 1; t <= T; ++t) {
        num += ledger.total_regret(t) * std::sqrt(static_cast<double>(t));
        den += static_cast<double>(t);
    }
    fit.c = num / den;

    std::vector<double> xs, ys;
    for (std::size_t t = T / 2 + 1; t <= T; ++t) {
        xs.push_back(static_cast<double>(t));
        ys.push_back(ledger.total_regret(t) / std::sqrt(static_cast<double>(t)));
    }
    if (xs.size() >= 2) {
        double mx = 0.0, my = 0.0;
        for (std::size_t k = 0; k < xs.size(); ++k) mx += xs[k], my += ys[k];
        mx /= static_cast<double>(xs.size());
        my /= static_cast<double>(xs.size());
        double sxy = 0.0, sxx = 0.0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            sxy += (xs[k] - mx) * (ys[k] - my);
            sxx += (xs[k] - mx) * (xs[k] - mx);
        }
        fit.final_half_slope = sxy / sxx;
    }
    fit.sublinear = fit.final_half_slope <= 0.0;
    return fit;
}

}  // namespace tlvd::game
