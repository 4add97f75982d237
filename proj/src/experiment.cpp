#include "hdawf/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include <json.hpp>

#include "hdawf/rng.hpp"

namespace hdawf {

using json = nlohmann::json;

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "data.path", "data.train", "data.val", "data.test", "data.trace_len",
        "split.shots", "split.val", "split.test", "split.bg_train", "split.bg_val", "split.bg_test",
        "aug.r_max", "aug.m_len", "aug.alpha", "aug.order",
        "aug.enable.rotation", "aug.enable.masking", "aug.enable.mixing",
        "model.channels", "model.kernels", "model.dilations", "model.strides", "model.pools",
        "model.causal", "model.fc",
        "train.epochs", "train.batch_size", "train.lr", "train.optimizer", "train.momentum",
        "train.select",
        "tpe.gamma", "tpe.n_startup", "tpe.n_candidates", "tpe.budget_per_param", "tpe.mode",
        "tpe.proxy_epochs",
        "experiment.name", "experiment.seeds", "experiment.open_world", "experiment.tune",
    };
    return keys;
}

KeyValues section(const KeyValues& kv, const std::string& prefix) {
    KeyValues out;
    for (const auto& [k, v] : kv) {
        if (k.rfind(prefix, 0) == 0) out[k] = v;
    }
    return out;
}

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
    std::string s;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(seeds[i]);
    }
    return s;
}

std::string hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::string data_provenance(const Dataset& d) {
    return std::filesystem::path(d.source).filename().string() + " (" + std::to_string(d.size()) + " records, " + std::to_string(d.num_classes) +
           " classes, length " + std::to_string(d.trace_len) + ", fnv1a " + hex(fnv1a(format_dataset(d))) + ")";
}

std::string data_provenance(const ExperimentConfig& cfg) {
    cfg.check_paths();
    if (!cfg.presplit()) return data_provenance(load_dataset(cfg.data, cfg.trace_len));
    return data_provenance(load_dataset(cfg.train_data, cfg.trace_len)) + "; " +
           data_provenance(load_dataset(cfg.val_data, cfg.trace_len)) + "; " +
           data_provenance(load_dataset(cfg.test_data, cfg.trace_len));
}

bool is_known_key(const std::string& key) { return known_keys().count(key) > 0; }

ExperimentConfig ExperimentConfig::from_kv(const KeyValues& kv, const std::filesystem::path& base_dir) {
    for (const auto& [k, v] : kv) {
        if (!is_known_key(k)) throw ConfigError("unknown manifest key '" + k + "'");
    }
    ExperimentConfig c;
    auto path = [&](const std::string& key) -> std::filesystem::path {
        auto it = kv.find(key);
        if (it == kv.end() || it->second.empty()) return {};
        std::filesystem::path p(it->second);
        return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    };
    c.data = path("data.path");
    c.train_data = path("data.train");
    c.val_data = path("data.val");
    c.test_data = path("data.test");
    const bool any_fixed = !c.train_data.empty() || !c.val_data.empty() || !c.test_data.empty();
    if (any_fixed && (c.train_data.empty() || c.val_data.empty() || c.test_data.empty())) {
        throw ConfigError("data.train, data.val and data.test must be given together");
    }
    if (any_fixed && !c.data.empty()) throw ConfigError("data.path conflicts with data.train/val/test");

    for (const auto& [k, v] : kv) {
        if (k == "data.trace_len") c.trace_len = parse_count(k, v);
        else if (k == "split.shots") c.split.shots_per_class = static_cast<int>(parse_count(k, v));
        else if (k == "split.val") c.split.val_per_class = static_cast<int>(parse_count(k, v));
        else if (k == "split.test") c.split.test_per_class = static_cast<int>(parse_count(k, v));
        else if (k == "split.bg_train") c.split.bg_train = static_cast<int>(parse_count(k, v));
        else if (k == "split.bg_val") c.split.bg_val = static_cast<int>(parse_count(k, v));
        else if (k == "split.bg_test") c.split.bg_test = static_cast<int>(parse_count(k, v));
        else if (k == "experiment.name") c.name = v;
        else if (k == "experiment.open_world") c.open_world = parse_bool(k, v);
        else if (k == "experiment.tune") c.tune = parse_bool(k, v);
        else if (k == "experiment.seeds") {
            c.seeds.clear();
            for (const auto& s : split_list(v)) c.seeds.push_back(static_cast<std::uint64_t>(parse_count(k, s)));
            if (c.seeds.empty()) throw ConfigError("experiment.seeds: need at least one seed");
        }
    }
    try {
        c.aug.apply_kv(section(kv, "aug."));
    } catch (const AugError& e) {
        throw ConfigError(e.what());
    }
    c.train.apply_kv(section(kv, "train."));
    c.tpe.apply_kv(section(kv, "tpe."));
    c.model = section(kv, "model.");
    c.train.validate();
    c.tpe.validate();
    if (c.trace_len < 1) throw ConfigError("data.trace_len must be >= 1");
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& manifest) {
    return from_kv(load_key_values(manifest), manifest.parent_path());
}

KeyValues ExperimentConfig::to_kv() const {
    KeyValues kv;
    auto put_path = [&](const char* key, const std::filesystem::path& p) {
        if (!p.empty()) kv[key] = p.filename().string();
    };
    put_path("data.path", data);
    put_path("data.train", train_data);
    put_path("data.val", val_data);
    put_path("data.test", test_data);
    kv["data.trace_len"] = std::to_string(trace_len);
    kv["split.shots"] = std::to_string(split.shots_per_class);
    kv["split.val"] = std::to_string(split.val_per_class);
    kv["split.test"] = std::to_string(split.test_per_class);
    kv["split.bg_train"] = std::to_string(split.bg_train);
    kv["split.bg_val"] = std::to_string(split.bg_val);
    kv["split.bg_test"] = std::to_string(split.bg_test);
    for (const auto& [k, v] : aug.to_kv()) kv[k] = v;
    for (const auto& [k, v] : model) kv[k] = v;
    for (const auto& [k, v] : train.to_kv()) kv[k] = v;
    for (const auto& [k, v] : tpe.to_kv()) kv[k] = v;
    kv["experiment.name"] = name;
    kv["experiment.seeds"] = join_seeds(seeds);
    kv["experiment.open_world"] = open_world ? "true" : "false";
    kv["experiment.tune"] = tune ? "true" : "false";
    return kv;
}

std::string ExperimentConfig::hash() const { return hex(fnv1a(format_key_values(to_kv()))); }

void ExperimentConfig::check_paths() const {
    auto need = [](const std::filesystem::path& p, const char* key) {
        if (!p.empty() && !std::filesystem::exists(p)) {
            throw ConfigError(std::string(key) + ": no such file '" + p.string() + "'");
        }
    };
    if (data.empty() && !presplit()) throw ConfigError("manifest names no data (data.path or data.train/val/test)");
    need(data, "data.path");
    need(train_data, "data.train");
    need(val_data, "data.val");
    need(test_data, "data.test");
}

ModelConfig ExperimentConfig::model_config(std::size_t num_classes) const {
    const std::size_t out = num_classes + (open_world ? 1 : 0);
    KeyValues kv = ModelConfig::standard(trace_len, out).to_kv();
    // A per-block list that no longer matches a changed block count falls
    // back to the per-block defaults.
    const auto ch = model.find("model.channels");
    if (ch != model.end() && split_list(ch->second).size() != ModelConfig::standard(trace_len, out).blocks.size()) {
        for (const char* k : {"model.kernels", "model.dilations", "model.strides", "model.pools", "model.causal"}) {
            kv.erase(k);
        }
    }
    for (const auto& [k, v] : model) kv[k] = v;
    ModelConfig m = ModelConfig::from_kv(kv);
    m.validate();
    return m;
}

DataSplits split_for_seed(const ExperimentConfig& cfg, const Dataset& all, std::uint64_t seed) {
    SplitSpec spec = cfg.split;
    spec.seed = seed;
    Splits s = make_splits(all, spec);
    return {std::move(s.train), std::move(s.val), std::move(s.test)};
}

DataSplits load_splits(const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.check_paths();
    if (!cfg.presplit()) return split_for_seed(cfg, load_dataset(cfg.data, cfg.trace_len), seed);
    DataSplits d{load_dataset(cfg.train_data, cfg.trace_len), load_dataset(cfg.val_data, cfg.trace_len),
                 load_dataset(cfg.test_data, cfg.trace_len)};
    const int k = std::max({d.train.num_classes, d.val.num_classes, d.test.num_classes});
    d.train.num_classes = d.val.num_classes = d.test.num_classes = k;
    return d;
}

namespace {

TrainConfig train_config(const ExperimentConfig& cfg, std::uint64_t seed) {
    TrainConfig t = cfg.train;
    t.seed = seed;
    t.open_world = cfg.open_world;
    return t;
}

std::map<std::string, SearchSpace> tuned_spaces(const ExperimentConfig& cfg) {
    std::map<std::string, SearchSpace> spaces;
    for (AugOp op : kAllOps) {
        if (cfg.aug.enabled(op)) spaces[param_name(op)] = default_space(op, cfg.trace_len);
    }
    if (spaces.empty()) throw ConfigError("experiment.tune is set but every augmentation operator is disabled");
    return spaces;
}

}  // namespace

ObjectiveFn proxy_objective(const ExperimentConfig& cfg, const Dataset& train_set, const Dataset& val_set) {
    return [cfg, &train_set, &val_set](const AugParamSet& p, std::uint64_t seed) {
        TrainConfig t = train_config(cfg, seed);
        t.epochs = cfg.tpe.proxy_epochs;
        const AugConfig aug = to_aug_config(p, cfg.aug);
        const auto res = train(cfg.model_config(static_cast<std::size_t>(train_set.num_classes)), t, train_set,
                               val_set, &aug);
        return res.history[res.best_epoch - 1].val_acc;
    };
}

TuneResult tune_augmentation(const ExperimentConfig& cfg, const Dataset& train_set, const Dataset& val_set,
                             std::uint64_t seed) {
    const auto spaces = tuned_spaces(cfg);
    const auto objective = proxy_objective(cfg, train_set, val_set);
    if (cfg.tpe.mode == TuneMode::independent) return optimize_independent(spaces, objective, cfg.tpe, seed);
    return optimize_sequential(random_order(spaces, seed), spaces, objective, cfg.tpe, seed);
}

std::map<std::string, double> evaluate(const ModelParams& params, const DataSplits& data, bool open_world) {
    std::map<std::string, double> m;
    if (!open_world) {
        m["accuracy"] = closed_accuracy(params, data.test);
        return m;
    }
    const auto sweep = sweep_operating_points(params, data.val, default_thresholds());
    const auto preds = predict(params, data.test);
    const auto labels = labels_of(data.test);
    auto score = [&](const std::string& prefix, const OperatingPoint& p) {
        const auto c = confusion(preds, labels, data.test.num_classes, p.threshold);
        m[prefix + ".threshold"] = p.threshold;
        m[prefix + ".precision"] = c.precision();
        m[prefix + ".recall"] = c.recall();
    };
    score("precision_tuned", sweep.best_precision);
    score("recall_tuned", sweep.best_recall);
    return m;
}

SeedOutcome run_seed(const ExperimentConfig& cfg, const DataSplits& data, std::uint64_t seed, const Logger& log) {
    SeedOutcome out;
    out.run.seed = seed;
    AugConfig aug = cfg.aug;
    if (cfg.tune) {
        if (log) log("seed " + std::to_string(seed) + ": tuning augmentation");
        auto tuned = tune_augmentation(cfg, data.train, data.val, seed);
        aug = to_aug_config(tuned.params, cfg.aug);
        out.run.tuned = tuned.params;
    }
    if (log) log("seed " + std::to_string(seed) + ": training");
    const auto res = train(cfg.model_config(static_cast<std::size_t>(data.train.num_classes)),
                           train_config(cfg, seed), data.train, data.val, &aug);
    out.model = res.best;
    out.history = res.history;
    out.run.best_epoch = res.best_epoch;
    out.run.metrics = evaluate(res.best, data, cfg.open_world);
    out.run.metrics["val_accuracy"] = res.history[res.best_epoch - 1].val_acc;
    return out;
}

MetricStats summarize(const std::vector<double>& values) {
    MetricStats s;
    s.n = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
    }
    return s;
}

void RunReport::recompute() {
    aggregate.clear();
    std::map<std::string, std::vector<double>> cols;
    for (const auto& r : runs) {
        for (const auto& [k, v] : r.metrics) cols[k].push_back(v);
    }
    for (const auto& [k, vals] : cols) aggregate[k] = summarize(vals);
}

std::string RunReport::to_json() const {
    json j;
    j["name"] = name;
    j["config"] = config;
    j["config_hash"] = config_hash;
    j["dataset"] = dataset;
    j["open_world"] = open_world;
    if (open_world) j["true_positive"] = "correct monitored class required";
    j["runs"] = json::array();
    for (const auto& r : runs) {
        json jr;
        jr["seed"] = r.seed;
        jr["metrics"] = r.metrics;
        jr["best_epoch"] = r.best_epoch;
        jr["tuned"] = r.tuned;
        j["runs"].push_back(jr);
    }
    json agg = json::object();
    for (const auto& [k, s] : aggregate) agg[k] = {{"mean", s.mean}, {"std", s.std}, {"n", s.n}};
    j["aggregate"] = agg;
    return j.dump(2) + "\n";
}

RunReport RunReport::from_json(const std::string& text) {
    RunReport r;
    try {
        const json j = json::parse(text);
        r.name = j.at("name").get<std::string>();
        r.config = j.at("config").get<KeyValues>();
        r.config_hash = j.at("config_hash").get<std::string>();
        r.dataset = j.at("dataset").get<std::string>();
        r.open_world = j.at("open_world").get<bool>();
        for (const auto& jr : j.at("runs")) {
            SeedRun s;
            s.seed = jr.at("seed").get<std::uint64_t>();
            s.metrics = jr.at("metrics").get<std::map<std::string, double>>();
            s.best_epoch = jr.at("best_epoch").get<std::size_t>();
            s.tuned = jr.at("tuned").get<AugParamSet>();
            r.runs.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed report: ") + e.what());
    }
    r.recompute();
    return r;
}

std::string RunReport::to_table() const {
    auto fmt = [](const std::string& metric, double v) {
        char buf[32];
        if (metric.size() >= 9 && metric.compare(metric.size() - 9, 9, "threshold") == 0) {
            std::snprintf(buf, sizeof buf, "%.2f", v);
        } else {
            std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
        }
        return std::string(buf);
    };
    std::string out = name + "  config " + config_hash + "  " + std::to_string(runs.size()) + " seed(s)\n";
    out += "data: " + dataset + "\n";
    if (open_world) out += "open world; a true positive needs the correct monitored class\n";
    out += "\n";
    std::size_t w = 6;
    for (const auto& [k, s] : aggregate) w = std::max(w, k.size());
    auto pad = [](std::string s, std::size_t n) {
        s.resize(std::max(n, s.size()), ' ');
        return s;
    };
    out += pad("metric", w) + "  " + pad("mean +- std", 14);
    for (const auto& r : runs) out += "  " + pad("s" + std::to_string(r.seed), 6);
    out += "\n";
    for (const auto& [k, s] : aggregate) {
        out += pad(k, w) + "  " + pad(fmt(k, s.mean) + " +- " + fmt(k, s.std), 14);
        for (const auto& r : runs) {
            auto it = r.metrics.find(k);
            out += "  " + pad(it == r.metrics.end() ? "-" : fmt(k, it->second), 6);
        }
        out += "\n";
    }
    return out;
}

namespace {

RunReport make_report(const ExperimentConfig& cfg, const std::string& dataset) {
    RunReport r;
    r.name = cfg.name;
    r.config = cfg.to_kv();
    r.config_hash = cfg.hash();
    r.dataset = dataset;
    r.open_world = cfg.open_world;
    return r;
}

}  // namespace

RunReport seed_report(const ExperimentConfig& cfg, const std::string& provenance, const SeedRun& run) {
    ExperimentConfig one = cfg;
    one.seeds = {run.seed};
    RunReport r = make_report(one, provenance);
    r.runs.push_back(run);
    r.recompute();
    return r;
}

RunReport run_experiment(const ExperimentConfig& cfg, const Dataset& all, const Logger& log) {
    RunReport report = make_report(cfg, data_provenance(all));
    for (std::uint64_t seed : cfg.seeds) {
        const auto data = split_for_seed(cfg, all, seed);
        report.runs.push_back(run_seed(cfg, data, seed, log).run);
    }
    report.recompute();
    return report;
}

RunReport run_experiment(const ExperimentConfig& cfg, const Logger& log) {
    cfg.check_paths();
    if (!cfg.presplit()) return run_experiment(cfg, load_dataset(cfg.data, cfg.trace_len), log);
    const auto first = load_splits(cfg, cfg.seeds.front());
    RunReport report = make_report(cfg, data_provenance(cfg));
    for (std::uint64_t seed : cfg.seeds) report.runs.push_back(run_seed(cfg, first, seed, log).run);
    report.recompute();
    return report;
}

RunReport merge_reports(const std::vector<RunReport>& parts) {
    if (parts.empty()) throw ConfigError("no reports to merge");
    auto without_seeds = [](KeyValues kv) {
        kv.erase("experiment.seeds");
        return kv;
    };
    RunReport out = parts.front();
    out.runs.clear();
    std::vector<std::uint64_t> seeds;
    for (const auto& p : parts) {
        if (without_seeds(p.config) != without_seeds(out.config)) {
            throw ConfigError("cannot merge reports of different configurations (" + p.config_hash + " vs " +
                              out.config_hash + ")");
        }
        if (p.dataset != out.dataset) {
            throw ConfigError("cannot merge reports over different datasets");
        }
        for (const auto& r : p.runs) {
            out.runs.push_back(r);
            seeds.push_back(r.seed);
        }
    }
    out.config["experiment.seeds"] = join_seeds(seeds);
    out.config_hash = hex(fnv1a(format_key_values(out.config)));
    out.recompute();
    return out;
}

}  // namespace hdawf
