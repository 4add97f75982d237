#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hdawf/augment.hpp"
#include "hdawf/config.hpp"
#include "hdawf/eval.hpp"
#include "hdawf/model.hpp"
#include "hdawf/tpe.hpp"
#include "hdawf/train.hpp"
#include "hdawf/trace.hpp"

namespace hdawf {

// Everything one experiment needs, as read from a manifest of
// `section.key = value` lines. Sections: data, split, aug, model, train,
// tpe, experiment.
struct ExperimentConfig {
    std::string name = "experiment";
    // Either a single dataset split per seed, or fixed train/val/test files.
    std::filesystem::path data;
    std::filesystem::path train_data, val_data, test_data;
    std::size_t trace_len = kDefaultTraceLen;

    SplitSpec split;
    AugConfig aug;
    bool tune = false;
    TpeConfig tpe;
    KeyValues model;  // model.* overrides on top of the standard architecture
    TrainConfig train;
    bool open_world = false;
    std::vector<std::uint64_t> seeds{0};

    // Throws ConfigError naming the key on anything unknown or malformed.
    // Relative paths are resolved against base_dir.
    static ExperimentConfig from_kv(const KeyValues& kv, const std::filesystem::path& base_dir = {});
    static ExperimentConfig load(const std::filesystem::path& manifest);
    // Canonical form: every setting with its effective value.
    KeyValues to_kv() const;
    std::string hash() const;  // FNV-1a of the canonical form, hex

    // Throws ConfigError if a referenced path does not exist.
    void check_paths() const;
    bool presplit() const { return !train_data.empty(); }

    ModelConfig model_config(std::size_t num_classes) const;
};

// True for every key a manifest may contain.
bool is_known_key(const std::string& key);

using Logger = std::function<void(const std::string&)>;

struct DataSplits {
    Dataset train, val, test;
};

// Loads the data for one seed: either splits `data` with the seed's split
// stream or reads the three fixed files.
DataSplits load_splits(const ExperimentConfig& cfg, std::uint64_t seed);
DataSplits split_for_seed(const ExperimentConfig& cfg, const Dataset& all, std::uint64_t seed);

// Validation accuracy after a proxy-length training run with the given
// augmentation parameters.
ObjectiveFn proxy_objective(const ExperimentConfig& cfg, const Dataset& train, const Dataset& val);

// Runs the configured tuning mode on one seed's data.
TuneResult tune_augmentation(const ExperimentConfig& cfg, const Dataset& train, const Dataset& val,
                             std::uint64_t seed);

struct SeedRun {
    std::uint64_t seed = 0;
    std::map<std::string, double> metrics;
    std::size_t best_epoch = 0;
    AugParamSet tuned;  // empty unless tuning ran
};

struct MetricStats {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for one run
    std::size_t n = 0;
};

struct RunReport {
    std::string name;
    KeyValues config;
    std::string config_hash;
    std::string dataset;  // provenance
    bool open_world = false;
    std::vector<SeedRun> runs;
    std::map<std::string, MetricStats> aggregate;

    void recompute();
    std::string to_json() const;
    static RunReport from_json(const std::string& text);
    // Percentages at one decimal, mean +- std per metric.
    std::string to_table() const;
};

MetricStats summarize(const std::vector<double>& values);

// Trains (and evaluates) one seed. Closed world records test accuracy;
// open world sweeps thresholds on validation and scores test precision and
// recall at the precision- and recall-tuned points.
struct SeedOutcome {
    SeedRun run;
    ModelParams model;
    std::vector<EpochStats> history;
};

SeedOutcome run_seed(const ExperimentConfig& cfg, const DataSplits& data, std::uint64_t seed,
                     const Logger& log = {});

// Metrics of an already trained model on one seed's data.
std::map<std::string, double> evaluate(const ModelParams& params, const DataSplits& data, bool open_world);

// Description of the configured data files: names, sizes and content hashes.
std::string data_provenance(const ExperimentConfig& cfg);
std::string data_provenance(const Dataset& d);

// Report holding a single run, configured as if cfg listed only its seed.
RunReport seed_report(const ExperimentConfig& cfg, const std::string& provenance, const SeedRun& run);

RunReport run_experiment(const ExperimentConfig& cfg, const Logger& log = {});
// Same, on an in-memory dataset that is split per seed.
RunReport run_experiment(const ExperimentConfig& cfg, const Dataset& all, const Logger& log = {});

// Folds several reports (e.g. one per seed directory) into one, in order.
RunReport merge_reports(const std::vector<RunReport>& parts);

}  // namespace hdawf
