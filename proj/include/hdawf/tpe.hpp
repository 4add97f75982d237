#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdawf/augment.hpp"
#include "hdawf/config.hpp"
#include "hdawf/rng.hpp"

namespace hdawf {

class TuneError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SearchSpace {
    std::string name;
    std::vector<double> grid;  // strictly increasing

    void validate() const;
    // Position of v in the grid; throws TuneError if v is not a grid value.
    std::size_t index_of(double v) const;
};

struct TpeTrial {
    double value = 0.0;
    double objective = 0.0;
};

// Chosen value per parameter name. A parameter that is absent means its
// operator is disabled.
using AugParamSet = std::map<std::string, double>;

// Scores a parameter set (higher is better). Must be deterministic in
// (params, seed).
using ObjectiveFn = std::function<double(const AugParamSet&, std::uint64_t seed)>;

enum class TuneMode { sequential, independent };

struct TpeConfig {
    double gamma = 0.25;
    std::size_t n_startup = 5;
    std::size_t n_candidates = 24;
    std::size_t budget_per_param = 0;  // 0: grid size * 3, at most 30
    TuneMode mode = TuneMode::sequential;
    std::size_t proxy_epochs = 30;

    void validate() const;
    std::size_t budget_for(const SearchSpace& s) const;

    // Keys tpe.gamma, tpe.n_startup, tpe.n_candidates, tpe.budget_per_param,
    // tpe.mode, tpe.proxy_epochs.
    KeyValues to_kv() const;
    void apply_kv(const KeyValues& kv);
};

std::string to_string(TuneMode m);
TuneMode parse_tune_mode(const std::string& s);

// Parameter tuned for each operator: r_max, m_len, alpha.
std::string param_name(AugOp op);
AugOp op_for_param(const std::string& name);

// Default grids. The masking grid is defined at trace length 5000 and
// scaled proportionally to trace_len (rounded, duplicates dropped, at least 1).
SearchSpace default_space(AugOp op, std::size_t trace_len = kDefaultTraceLen);
std::map<std::string, SearchSpace> default_spaces(std::size_t trace_len = kDefaultTraceLen);

// Operators present in p are enabled with their chosen value, all others
// disabled; unrelated fields come from base.
AugConfig to_aug_config(const AugParamSet& p, const AugConfig& base = AugConfig{});

// Parzen density over the grid: uniform prior of total weight 1 plus, per
// observation, a triangular kernel (1 at its grid point, 1/2 at each
// neighbour) normalised to unit mass. The result sums to 1.
std::vector<double> parzen_density(const std::vector<std::size_t>& obs, std::size_t grid_size);

// Next value to evaluate. Uniform over the grid until n_startup trials exist;
// afterwards the best ceil(gamma * n) trials form the good set, n_candidates
// draws come from its density l and the first draw maximising l/g wins.
double tpe_suggest(const std::vector<TpeTrial>& history, const SearchSpace& space,
                   const TpeConfig& cfg, Rng& rng);

struct TrialRecord {
    std::size_t stage = 0;  // 1-based
    std::string param;
    double value = 0.0;
    double objective = 0.0;
    std::uint64_t seed = 0;
    std::size_t trial_index = 0;  // 0-based within the stage
};

// CSV with header stage,param,value,objective,seed,trial_index.
std::string trials_csv(const std::vector<TrialRecord>& log);

// Raised when the objective fails; carries every trial completed before it.
class TuneAborted : public std::runtime_error {
public:
    TuneAborted(const std::string& what, std::vector<TrialRecord> partial)
        : std::runtime_error(what), log(std::move(partial)) {}
    std::vector<TrialRecord> log;
};

struct TuneResult {
    AugParamSet params;
    std::vector<TrialRecord> log;
};

// Tunes one parameter on top of the fixed set `base`: budget rounds of
// suggest then evaluate. Returns the best trial's value (earliest on ties).
// Trials are appended to log.
double tune_parameter(const SearchSpace& space, const AugParamSet& base, const ObjectiveFn& objective,
                      std::size_t budget, const TpeConfig& cfg, std::uint64_t seed, std::size_t stage,
                      std::vector<TrialRecord>& log);

// Tunes parameters one at a time in the given order, each with all earlier
// choices fixed and active and all later operators disabled.
TuneResult optimize_sequential(const std::vector<std::string>& order,
                               const std::map<std::string, SearchSpace>& spaces,
                               const ObjectiveFn& objective, const TpeConfig& cfg, std::uint64_t seed);

// Tunes each parameter with only its own operator enabled. Stages follow the
// map's key order.
TuneResult optimize_independent(const std::map<std::string, SearchSpace>& spaces,
                                const ObjectiveFn& objective, const TpeConfig& cfg, std::uint64_t seed);

// Random permutation of the spaces' names, drawn from Stream::order.
std::vector<std::string> random_order(const std::map<std::string, SearchSpace>& spaces, std::uint64_t seed);

}  // namespace hdawf
