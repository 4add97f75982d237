#include "hdawf/tpe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace hdawf {

void SearchSpace::validate() const {
    if (grid.empty()) throw TuneError("search space '" + name + "' has an empty grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!std::isfinite(grid[i])) throw TuneError("search space '" + name + "' has a non-finite value");
        if (i > 0 && !(grid[i] > grid[i - 1])) {
            throw TuneError("search space '" + name + "' grid is not strictly increasing");
        }
    }
}

std::size_t SearchSpace::index_of(double v) const {
    const auto it = std::lower_bound(grid.begin(), grid.end(), v);
    if (it == grid.end() || *it != v) {
        throw TuneError("value " + format_real(v) + " is not on the grid of '" + name + "'");
    }
    return static_cast<std::size_t>(it - grid.begin());
}

void TpeConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw TuneError("tpe.gamma must lie in (0, 1)");
    if (n_candidates < 1) throw TuneError("tpe.n_candidates must be >= 1");
    if (proxy_epochs < 1) throw TuneError("tpe.proxy_epochs must be >= 1");
}

std::size_t TpeConfig::budget_for(const SearchSpace& s) const {
    if (budget_per_param > 0) return budget_per_param;
    return std::min<std::size_t>(s.grid.size() * 3, 30);
}

std::string to_string(TuneMode m) { return m == TuneMode::sequential ? "sequential" : "independent"; }

TuneMode parse_tune_mode(const std::string& s) {
    if (s == "sequential") return TuneMode::sequential;
    if (s == "independent") return TuneMode::independent;
    throw ConfigError("tpe.mode: expected sequential or independent, got '" + s + "'");
}

KeyValues TpeConfig::to_kv() const {
    KeyValues kv;
    kv["tpe.gamma"] = format_real(gamma);
    kv["tpe.n_startup"] = std::to_string(n_startup);
    kv["tpe.n_candidates"] = std::to_string(n_candidates);
    kv["tpe.budget_per_param"] = std::to_string(budget_per_param);
    kv["tpe.mode"] = to_string(mode);
    kv["tpe.proxy_epochs"] = std::to_string(proxy_epochs);
    return kv;
}

void TpeConfig::apply_kv(const KeyValues& kv) {
    for (const auto& [key, value] : kv) {
        if (key.rfind("tpe.", 0) != 0) continue;
        if (key == "tpe.gamma") gamma = parse_real(key, value);
        else if (key == "tpe.n_startup") n_startup = parse_count(key, value);
        else if (key == "tpe.n_candidates") n_candidates = parse_count(key, value);
        else if (key == "tpe.budget_per_param") budget_per_param = parse_count(key, value);
        else if (key == "tpe.mode") mode = parse_tune_mode(value);
        else if (key == "tpe.proxy_epochs") proxy_epochs = parse_count(key, value);
        else throw ConfigError("unknown tuning key '" + key + "'");
    }
}

std::string param_name(AugOp op) {
    switch (op) {
    case AugOp::rotation: return "r_max";
    case AugOp::masking: return "m_len";
    case AugOp::mixing: return "alpha";
    }
    return "";
}

AugOp op_for_param(const std::string& name) {
    for (AugOp op : kAllOps) {
        if (param_name(op) == name) return op;
    }
    throw TuneError("unknown augmentation parameter '" + name + "'");
}

SearchSpace default_space(AugOp op, std::size_t trace_len) {
    SearchSpace s;
    s.name = param_name(op);
    switch (op) {
    case AugOp::rotation:
        s.grid = {1, 6, 11, 16, 20};
        break;
    case AugOp::masking: {
        std::set<double> vals;
        std::vector<double> base;
        for (int v = 1; v <= 181; v += 20) base.push_back(v);
        base.push_back(180);
        for (double v : base) {
            const double scaled = std::round(v * static_cast<double>(trace_len) / kDefaultTraceLen);
            vals.insert(std::max(1.0, scaled));
        }
        s.grid.assign(vals.begin(), vals.end());
        break;
    }
    case AugOp::mixing:
        for (int i = 1; i <= 10; ++i) s.grid.push_back(i / 10.0);
        break;
    }
    return s;
}

std::map<std::string, SearchSpace> default_spaces(std::size_t trace_len) {
    std::map<std::string, SearchSpace> out;
    for (AugOp op : kAllOps) out[param_name(op)] = default_space(op, trace_len);
    return out;
}

AugConfig to_aug_config(const AugParamSet& p, const AugConfig& base) {
    AugConfig cfg = base;
    for (AugOp op : kAllOps) cfg.set_enabled(op, false);
    for (const auto& [name, value] : p) {
        const AugOp op = op_for_param(name);
        cfg.set_enabled(op, true);
        switch (op) {
        case AugOp::rotation: cfg.r_max = static_cast<std::size_t>(std::llround(value)); break;
        case AugOp::masking: cfg.m_len = static_cast<std::size_t>(std::llround(value)); break;
        case AugOp::mixing: cfg.alpha = value; break;
        }
    }
    return cfg;
}

std::vector<double> parzen_density(const std::vector<std::size_t>& obs, std::size_t grid_size) {
    std::vector<double> d(grid_size, 1.0 / static_cast<double>(grid_size));
    for (std::size_t i : obs) {
        double mass = 1.0;
        if (i > 0) mass += 0.5;
        if (i + 1 < grid_size) mass += 0.5;
        d[i] += 1.0 / mass;
        if (i > 0) d[i - 1] += 0.5 / mass;
        if (i + 1 < grid_size) d[i + 1] += 0.5 / mass;
    }
    const double total = static_cast<double>(obs.size()) + 1.0;
    for (double& v : d) v /= total;
    return d;
}

namespace {

std::size_t draw_categorical(const std::vector<double>& p, Rng& rng) {
    const double total = std::accumulate(p.begin(), p.end(), 0.0);
    const double u = uniform_real(rng) * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) return i;
    }
    return p.size() - 1;
}

}  // namespace

double tpe_suggest(const std::vector<TpeTrial>& history, const SearchSpace& space, const TpeConfig& cfg,
                   Rng& rng) {
    space.validate();
    cfg.validate();
    const std::size_t G = space.grid.size();
    if (history.size() < std::max<std::size_t>(cfg.n_startup, 1)) {
        return space.grid[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(G) - 1))];
    }

    std::vector<std::size_t> rank(history.size());
    std::iota(rank.begin(), rank.end(), 0);
    std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        return history[a].objective > history[b].objective;
    });
    const auto n_good = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(cfg.gamma * static_cast<double>(history.size()))));

    std::vector<std::size_t> good, bad;
    for (std::size_t r = 0; r < rank.size(); ++r) {
        const std::size_t idx = space.index_of(history[rank[r]].value);
        (r < n_good ? good : bad).push_back(idx);
    }
    const auto l = parzen_density(good, G);
    const auto g = parzen_density(bad, G);

    std::size_t best = draw_categorical(l, rng);
    double best_ratio = l[best] / g[best];
    for (std::size_t c = 1; c < cfg.n_candidates; ++c) {
        const std::size_t i = draw_categorical(l, rng);
        const double ratio = l[i] / g[i];
        if (ratio > best_ratio) {
            best = i;
            best_ratio = ratio;
        }
    }
    return space.grid[best];
}

std::string trials_csv(const std::vector<TrialRecord>& log) {
    std::string out = "stage,param,value,objective,seed,trial_index\n";
    for (const auto& t : log) {
        out += std::to_string(t.stage) + "," + t.param + "," + format_real(t.value) + "," +
               format_real(t.objective) + "," + std::to_string(t.seed) + "," + std::to_string(t.trial_index) +
               "\n";
    }
    return out;
}

double tune_parameter(const SearchSpace& space, const AugParamSet& base, const ObjectiveFn& objective,
                      std::size_t budget, const TpeConfig& cfg, std::uint64_t seed, std::size_t stage,
                      std::vector<TrialRecord>& log) {
    space.validate();
    cfg.validate();
    if (budget < 1) throw TuneError("tuning budget must be >= 1");
    Rng rng = make_rng(derive_seed(seed, Stream::tune, stage));
    // Every trial of a study trains under the same randomness, so scores
    // differ only through the parameter value.
    const std::uint64_t eval_seed = derive_seed(seed, Stream::tune, 0, 1);

    std::vector<TpeTrial> history;
    std::map<double, double> seen;
    std::size_t best = 0;
    for (std::size_t t = 0; t < budget; ++t) {
        const double v = tpe_suggest(history, space, cfg, rng);
        double score;
        if (auto it = seen.find(v); it != seen.end()) {
            score = it->second;
        } else {
            AugParamSet p = base;
            p[space.name] = v;
            try {
                score = objective(p, eval_seed);
            } catch (const std::exception& e) {
                throw TuneAborted("objective failed at stage " + std::to_string(stage) + " trial " +
                                      std::to_string(t) + " (" + space.name + "=" + format_real(v) +
                                      "): " + e.what(),
                                  log);
            }
            if (!std::isfinite(score)) {
                throw TuneAborted("objective returned a non-finite score for " + space.name + "=" +
                                      format_real(v),
                                  log);
            }
            seen[v] = score;
        }
        history.push_back({v, score});
        log.push_back({stage, space.name, v, score, eval_seed, t});
        if (score > history[best].objective) best = t;
    }
    return history[best].value;
}

namespace {

const SearchSpace& space_for(const std::map<std::string, SearchSpace>& spaces, const std::string& name) {
    const auto it = spaces.find(name);
    if (it == spaces.end()) throw TuneError("no search space for '" + name + "'");
    return it->second;
}

}  // namespace

TuneResult optimize_sequential(const std::vector<std::string>& order,
                               const std::map<std::string, SearchSpace>& spaces,
                               const ObjectiveFn& objective, const TpeConfig& cfg, std::uint64_t seed) {
    std::set<std::string> unique(order.begin(), order.end());
    if (unique.size() != order.size()) throw TuneError("tuning order repeats a parameter");
    for (const auto& name : order) space_for(spaces, name).validate();

    TuneResult res;
    std::size_t stage = 0;
    for (const auto& name : order) {
        ++stage;
        const auto& space = space_for(spaces, name);
        const double v = tune_parameter(space, res.params, objective, cfg.budget_for(space), cfg, seed, stage,
                                        res.log);
        res.params[name] = v;
    }
    return res;
}

TuneResult optimize_independent(const std::map<std::string, SearchSpace>& spaces,
                                const ObjectiveFn& objective, const TpeConfig& cfg, std::uint64_t seed) {
    for (const auto& [name, space] : spaces) space.validate();
    TuneResult res;
    std::size_t stage = 0;
    for (const auto& [name, space] : spaces) {
        ++stage;
        res.params[name] = tune_parameter(space, {}, objective, cfg.budget_for(space), cfg, seed, stage, res.log);
    }
    return res;
}

std::vector<std::string> random_order(const std::map<std::string, SearchSpace>& spaces, std::uint64_t seed) {
    std::vector<std::string> names;
    for (const auto& [name, space] : spaces) names.push_back(name);
    Rng rng = make_rng(derive_seed(seed, Stream::order));
    for (std::size_t i = names.size(); i > 1; --i) {
        std::swap(names[i - 1], names[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i - 1)))]);
    }
    return names;
}

}  // namespace hdawf
