#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "hdawf/augment.hpp"
#include "hdawf/config.hpp"
#include "hdawf/eval.hpp"
#include "hdawf/experiment.hpp"
#include "hdawf/model.hpp"
#include "hdawf/tpe.hpp"
#include "hdawf/train.hpp"
#include "hdawf/trace.hpp"

namespace fs = std::filesystem;
using namespace hdawf;

namespace {

struct Globals {
    std::string manifest;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool verbose = false;
};

Globals g;

void say(const std::string& s) {
    if (g.verbose) std::cerr << s << "\n";
}

void write_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + p.string() + "'");
    f << text;
    if (!f) throw std::runtime_error("write failed for '" + p.string() + "'");
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read '" + p.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path out_dir() {
    if (g.out.empty()) throw ConfigError("--out is required");
    fs::create_directories(g.out);
    return g.out;
}

// Manifest keys, then flag overrides. Relative manifest paths resolve
// against the manifest's directory; flag paths against the working directory.
struct Settings {
    KeyValues kv;
    fs::path base;

    void set(const std::string& key, const std::string& value) { kv[key] = value; }
    void set_path(const std::string& key, const std::string& value) {
        kv[key] = fs::absolute(value).string();
    }
    ExperimentConfig config() const { return ExperimentConfig::from_kv(kv, base); }
};

Settings settings() {
    Settings s;
    if (!g.manifest.empty()) {
        s.kv = load_key_values(g.manifest);
        s.base = fs::path(g.manifest).parent_path();
    }
    if (g.seed) s.set("experiment.seeds", std::to_string(*g.seed));
    return s;
}

std::uint64_t single_seed(const ExperimentConfig& cfg) {
    if (cfg.seeds.size() != 1) throw ConfigError("this command takes one seed; use --seed");
    return cfg.seeds.front();
}

// -- synth ------------------------------------------------------------------

struct SynthArgs {
    SynthSpec spec;
};

void cmd_synth(const SynthArgs& a) {
    SynthSpec spec = a.spec;
    if (g.seed) spec.seed = *g.seed;
    if (g.out.empty()) throw ConfigError("--out is required");
    const Dataset d = synth_dataset(spec);
    save_dataset(d, g.out);
    say("wrote " + std::to_string(d.size()) + " traces to " + g.out);
}

// -- split ------------------------------------------------------------------

struct SplitArgs {
    std::string data;
    std::optional<std::size_t> len;
    std::optional<int> shots, val, test, bg_train, bg_val, bg_test;
};

void apply_split_flags(Settings& s, const SplitArgs& a) {
    if (!a.data.empty()) s.set_path("data.path", a.data);
    if (a.len) s.set("data.trace_len", std::to_string(*a.len));
    if (a.shots) s.set("split.shots", std::to_string(*a.shots));
    if (a.val) s.set("split.val", std::to_string(*a.val));
    if (a.test) s.set("split.test", std::to_string(*a.test));
    if (a.bg_train) s.set("split.bg_train", std::to_string(*a.bg_train));
    if (a.bg_val) s.set("split.bg_val", std::to_string(*a.bg_val));
    if (a.bg_test) s.set("split.bg_test", std::to_string(*a.bg_test));
}

void cmd_split(const SplitArgs& a) {
    Settings s = settings();
    apply_split_flags(s, a);
    const auto cfg = s.config();
    if (cfg.presplit()) throw ConfigError("split needs data.path, not data.train/val/test");
    const auto seed = single_seed(cfg);
    const auto dir = out_dir();
    const auto d = load_splits(cfg, seed);
    save_dataset(d.train, dir / "train.txt");
    save_dataset(d.val, dir / "val.txt");
    save_dataset(d.test, dir / "test.txt");
    say("train " + std::to_string(d.train.size()) + ", val " + std::to_string(d.val.size()) + ", test " +
        std::to_string(d.test.size()));
}

// -- augment ----------------------------------------------------------------

struct AugmentArgs {
    std::string data;
    std::optional<std::size_t> len;
    std::optional<std::size_t> r_max, m_len;
    std::optional<double> alpha;
    std::string ops;
    std::size_t copies = 1;
    std::string tuned;
};

void apply_aug_flags(Settings& s, std::optional<std::size_t> r_max, std::optional<std::size_t> m_len,
                     std::optional<double> alpha, const std::string& ops, const std::string& tuned) {
    if (!tuned.empty()) {
        for (const auto& [k, v] : load_key_values(tuned)) s.set(k, v);
    }
    if (r_max) s.set("aug.r_max", std::to_string(*r_max));
    if (m_len) s.set("aug.m_len", std::to_string(*m_len));
    if (alpha) s.set("aug.alpha", format_real(*alpha));
    if (!ops.empty()) {
        std::set<AugOp> on;
        if (ops != "none") {
            for (const auto& name : split_list(ops)) on.insert(parse_aug_op(name));
        }
        for (AugOp op : kAllOps) s.set("aug.enable." + to_string(op), on.count(op) ? "true" : "false");
    }
}

// One line per augmented sample: comma-separated soft label, a tab, then
// the real-valued sequence.
void cmd_augment(const AugmentArgs& a) {
    Settings s = settings();
    if (!a.data.empty()) s.set_path("data.path", a.data);
    if (a.len) s.set("data.trace_len", std::to_string(*a.len));
    apply_aug_flags(s, a.r_max, a.m_len, a.alpha, a.ops, a.tuned);
    const auto cfg = s.config();
    cfg.check_paths();
    if (cfg.data.empty()) throw ConfigError("augment needs data.path or --data");
    const auto seed = single_seed(cfg);
    cfg.aug.validate(cfg.trace_len);
    const Dataset d = load_dataset(cfg.data, cfg.trace_len);

    std::vector<Sample> all;
    for (const auto& r : d.records) {
        all.push_back({to_signal(r.trace), target_for(r.label, d.num_classes, d.has_background())});
    }
    std::string out;
    const std::size_t bs = cfg.train.batch_size;
    for (std::size_t copy = 0; copy < a.copies; ++copy) {
        for (std::size_t s0 = 0, b = 0; s0 < all.size(); s0 += bs, ++b) {
            std::vector<Sample> batch(all.begin() + static_cast<std::ptrdiff_t>(s0),
                                      all.begin() + static_cast<std::ptrdiff_t>(std::min(all.size(), s0 + bs)));
            for (const auto& smp : hda_batch(batch, cfg.aug, derive_seed(seed, Stream::augment, copy, b))) {
                for (std::size_t i = 0; i < smp.y.size(); ++i) out += (i ? "," : "") + format_real(smp.y[i]);
                out += "\t";
                for (std::size_t i = 0; i < smp.x.size(); ++i) out += (i ? " " : "") + format_real(smp.x[i]);
                out += "\n";
            }
        }
    }
    if (g.out.empty()) throw ConfigError("--out is required");
    write_file(g.out, out);
}

// -- tune -------------------------------------------------------------------

struct TuneArgs {
    SplitArgs split;
    std::string mode;
    std::optional<std::size_t> budget, proxy_epochs;
};

void cmd_tune(const TuneArgs& a) {
    Settings s = settings();
    apply_split_flags(s, a.split);
    if (!a.mode.empty()) s.set("tpe.mode", a.mode);
    if (a.budget) s.set("tpe.budget_per_param", std::to_string(*a.budget));
    if (a.proxy_epochs) s.set("tpe.proxy_epochs", std::to_string(*a.proxy_epochs));
    const auto cfg = s.config();
    cfg.check_paths();
    const auto seed = single_seed(cfg);
    const auto dir = out_dir();
    const auto d = load_splits(cfg, seed);
    say("tuning (" + to_string(cfg.tpe.mode) + ") on " + std::to_string(d.train.size()) + " training traces");
    TuneResult res;
    try {
        res = tune_augmentation(cfg, d.train, d.val, seed);
    } catch (const TuneAborted& e) {
        write_file(dir / "trials.csv", trials_csv(e.log));
        throw;
    }
    write_file(dir / "trials.csv", trials_csv(res.log));
    const AugConfig chosen = to_aug_config(res.params, cfg.aug);
    write_file(dir / "tuned.conf", format_key_values(chosen.to_kv()));
    for (const auto& [k, v] : res.params) say(k + " = " + format_real(v));
}

// -- train ------------------------------------------------------------------

struct TrainArgs {
    SplitArgs split;
    std::vector<std::uint64_t> seeds;
    std::optional<std::size_t> epochs;
    std::string tuned;
    std::string ops;
    bool open_world = false;
};

Settings train_settings(const TrainArgs& a) {
    Settings s = settings();
    apply_split_flags(s, a.split);
    if (!a.seeds.empty()) {
        std::string v;
        for (std::size_t i = 0; i < a.seeds.size(); ++i) v += (i ? "," : "") + std::to_string(a.seeds[i]);
        s.set("experiment.seeds", v);
    }
    if (a.epochs) s.set("train.epochs", std::to_string(*a.epochs));
    if (a.open_world) s.set("experiment.open_world", "true");
    apply_aug_flags(s, std::nullopt, std::nullopt, std::nullopt, a.ops, a.tuned);
    return s;
}

fs::path seed_dir(const fs::path& dir, std::uint64_t seed) { return dir / ("seed-" + std::to_string(seed)); }

void cmd_train(const TrainArgs& a) {
    const auto cfg = train_settings(a).config();
    cfg.check_paths();
    const auto dir = out_dir();
    const std::string prov = data_provenance(cfg);
    for (std::uint64_t seed : cfg.seeds) {
        const auto d = load_splits(cfg, seed);
        const auto outcome = run_seed(cfg, d, seed, say);
        const auto sd = cfg.seeds.size() == 1 ? dir : seed_dir(dir, seed);
        fs::create_directories(sd);
        save_checkpoint(outcome.model, sd / "model.ckpt");
        write_file(sd / "history.csv", history_csv(outcome.history));
        write_file(sd / "report.json", seed_report(cfg, prov, outcome.run).to_json());
        say("seed " + std::to_string(seed) + ": best epoch " + std::to_string(outcome.run.best_epoch) +
            ", val accuracy " + format_real(outcome.run.metrics.at("val_accuracy")));
    }
}

// -- eval -------------------------------------------------------------------

struct EvalArgs {
    SplitArgs split;
    std::string checkpoint;
    bool open_world = false;
};

void cmd_eval(const EvalArgs& a) {
    Settings s = settings();
    apply_split_flags(s, a.split);
    if (a.open_world) s.set("experiment.open_world", "true");
    const auto cfg = s.config();
    cfg.check_paths();
    const auto seed = single_seed(cfg);
    const auto dir = out_dir();
    const ModelParams params = load_checkpoint(a.checkpoint);
    const auto d = load_splits(cfg, seed);
    const std::size_t want = static_cast<std::size_t>(d.test.num_classes) + (cfg.open_world ? 1 : 0);
    if (params.config.num_classes != want) {
        throw ModelError("checkpoint '" + a.checkpoint + "' has " + std::to_string(params.config.num_classes) +
                         " outputs but the data needs " + std::to_string(want) + " (" +
                         std::to_string(d.test.num_classes) + " classes" + (cfg.open_world ? " + background)" : ")"));
    }
    if (params.config.input_len != d.test.trace_len) {
        throw ModelError("checkpoint input length " + std::to_string(params.config.input_len) +
                         " != data.trace_len " + std::to_string(d.test.trace_len));
    }
    SeedRun run;
    run.seed = seed;
    run.metrics = evaluate(params, d, cfg.open_world);
    const RunReport r = seed_report(cfg, data_provenance(cfg), run);
    write_file(dir / "report.json", r.to_json());
    write_file(dir / "report.txt", r.to_table());
    std::cout << r.to_table();
}

// -- report -----------------------------------------------------------------

struct ReportArgs {
    std::vector<std::string> runs;
    TrainArgs train;
};

void cmd_report(const ReportArgs& a) {
    RunReport r;
    if (!a.runs.empty()) {
        std::vector<RunReport> parts;
        for (const auto& p : a.runs) {
            fs::path f = fs::is_directory(p) ? fs::path(p) / "report.json" : fs::path(p);
            parts.push_back(RunReport::from_json(read_file(f)));
        }
        r = merge_reports(parts);
    } else {
        const auto cfg = train_settings(a.train).config();
        r = run_experiment(cfg, say);
    }
    const auto dir = out_dir();
    write_file(dir / "report.json", r.to_json());
    write_file(dir / "report.txt", r.to_table());
    std::cout << r.to_table();
}

void add_split_flags(CLI::App* c, SplitArgs& a) {
    c->add_option("--data", a.data, "Trace file to split per seed");
    c->add_option("--len", a.len, "Trace length (pad or truncate)");
    c->add_option("--shots", a.shots, "Training traces per class");
    c->add_option("--val", a.val, "Validation traces per class");
    c->add_option("--test", a.test, "Test traces per class");
    c->add_option("--bg-train", a.bg_train, "Background traces for training");
    c->add_option("--bg-val", a.bg_val, "Background traces for validation");
    c->add_option("--bg-test", a.bg_test, "Background traces for testing");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Few-shot website fingerprinting with harmonious data augmentation"};
    app.require_subcommand(1);
    app.add_option("--manifest", g.manifest, "Experiment manifest (section.key = value lines)")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Root seed; every random stream derives from it");
    app.add_option("--out", g.out, "Output file or directory");
    app.add_flag("-v,--verbose", g.verbose, "Progress on stderr");

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Generate a synthetic trace dataset");
    c_synth->add_option("--classes", synth.spec.num_classes, "Monitored classes");
    c_synth->add_option("--per-class", synth.spec.samples_per_class, "Traces per class");
    c_synth->add_option("--len", synth.spec.trace_len, "Trace length");
    c_synth->add_option("--noise", synth.spec.noise_rate, "Per-cell sign flip probability");
    c_synth->add_option("--background", synth.spec.background, "Unmonitored traces");
    c_synth->add_option("--distinct", synth.spec.distinct, "Fraction of class-specific runs");

    SplitArgs split;
    auto* c_split = app.add_subcommand("split", "Write train/val/test splits for one seed");
    add_split_flags(c_split, split);

    AugmentArgs aug;
    auto* c_aug = app.add_subcommand("augment", "Write augmented copies of a dataset (preview)");
    c_aug->add_option("--data", aug.data, "Trace file");
    c_aug->add_option("--len", aug.len, "Trace length");
    c_aug->add_option("--r-max", aug.r_max, "Largest rotation");
    c_aug->add_option("--m-len", aug.m_len, "Mask length");
    c_aug->add_option("--alpha", aug.alpha, "Beta parameter for mixing");
    c_aug->add_option("--ops", aug.ops, "Enabled operators, e.g. rotation,masking or none");
    c_aug->add_option("--copies", aug.copies, "Passes over the dataset");
    c_aug->add_option("--tuned", aug.tuned, "Tuned parameter file from `tune`")->check(CLI::ExistingFile);

    TuneArgs tune;
    auto* c_tune = app.add_subcommand("tune", "Tune augmentation parameters with TPE");
    add_split_flags(c_tune, tune.split);
    c_tune->add_option("--mode", tune.mode, "sequential or independent")
        ->check(CLI::IsMember({"sequential", "independent"}));
    c_tune->add_option("--budget", tune.budget, "Trials per parameter");
    c_tune->add_option("--proxy-epochs", tune.proxy_epochs, "Epochs per trial");

    TrainArgs train_args;
    auto* c_train = app.add_subcommand("train", "Train a model per seed");
    add_split_flags(c_train, train_args.split);
    c_train->add_option("--seeds", train_args.seeds, "Several seeds, one run directory each")->delimiter(',');
    c_train->add_option("--epochs", train_args.epochs, "Training epochs");
    c_train->add_option("--tuned", train_args.tuned, "Tuned parameter file from `tune`")->check(CLI::ExistingFile);
    c_train->add_option("--ops", train_args.ops, "Enabled operators, e.g. rotation,mixing or none");
    c_train->add_flag("--open-world", train_args.open_world, "Train with a background class");

    EvalArgs eval;
    auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on one seed's test split");
    add_split_flags(c_eval, eval.split);
    c_eval->add_option("--checkpoint", eval.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    c_eval->add_flag("--open-world", eval.open_world, "Threshold sweep and precision/recall");

    ReportArgs report;
    auto* c_report = app.add_subcommand("report", "Run a whole experiment, or merge per-seed reports");
    c_report->add_option("--runs", report.runs, "Run directories or report.json files to merge");
    add_split_flags(c_report, report.train.split);
    c_report->add_option("--seeds", report.train.seeds, "Seeds to run")->delimiter(',');
    c_report->add_option("--epochs", report.train.epochs, "Training epochs");
    c_report->add_option("--tuned", report.train.tuned, "Tuned parameter file")->check(CLI::ExistingFile);
    c_report->add_option("--ops", report.train.ops, "Enabled operators");
    c_report->add_flag("--open-world", report.train.open_world, "Open-world evaluation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (c_synth->parsed()) cmd_synth(synth);
        else if (c_split->parsed()) cmd_split(split);
        else if (c_aug->parsed()) cmd_augment(aug);
        else if (c_tune->parsed()) cmd_tune(tune);
        else if (c_train->parsed()) cmd_train(train_args);
        else if (c_eval->parsed()) cmd_eval(eval);
        else if (c_report->parsed()) cmd_report(report);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
