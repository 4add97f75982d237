#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "hdawf/eval.hpp"
#include "hdawf/experiment.hpp"
#include "hdawf/model.hpp"
#include "hdawf/tpe.hpp"
#include "hdawf/train.hpp"
#include "oracles.hpp"

namespace fixture {

// Default block layout with channel widths scaled down to w, 2w, 2w, 4w.
inline hdawf::ModelConfig narrow_model(std::size_t len, std::size_t classes, std::size_t w) {
    auto m = hdawf::ModelConfig::standard(len, classes);
    m.blocks[0].out_channels = w;
    m.blocks[1].out_channels = 2 * w;
    m.blocks[2].out_channels = 2 * w;
    m.blocks[3].out_channels = 4 * w;
    m.fc = {4 * w};
    return m;
}

struct GradCheck {
    double worst = 0.0;  // largest relative error seen
    std::size_t probed = 0;
};

// Analytic gradients against central differences (eps 1e-4) on a net with a
// plain conv block (max-pooled), a dilated causal conv block, average
// pooling and two dense layers; 13 random coordinates per tensor.
inline GradCheck gradient_check(std::uint64_t seed) {
    using namespace hdawf;
    Rng rng = make_rng(seed);
    ModelConfig c;
    c.input_len = 32;
    c.num_classes = 3;
    c.blocks = {{4, 3, 1, 1, Pool::max2, false}, {5, 3, 2, 1, Pool::none, true}};
    c.fc = {6};
    auto params = init_params(c, seed);
    // Nonzero biases so no unit sits exactly on a ReLU kink by construction.
    for (auto& t : params.tensors) {
        for (auto& v : t.data) v += 0.05 * (2 * uniform_real(rng) - 1);
    }
    std::vector<Signal> batch;
    std::vector<SoftLabel> targets;
    for (int i = 0; i < 3; ++i) {
        Signal x(32);
        for (auto& v : x) v = 2 * uniform_real(rng) - 1;
        batch.push_back(x);
        const double lam = uniform_real(rng);
        SoftLabel y(3, 0.0);
        y[static_cast<std::size_t>(uniform_int(rng, 0, 2))] += lam;
        y[static_cast<std::size_t>(uniform_int(rng, 0, 2))] += 1 - lam;
        targets.push_back(y);
    }
    const auto lg = backward(params, batch, targets, Exec::serial);
    auto loss = [&] { return cross_entropy(forward(params, batch, Exec::serial).probs, targets); };
    GradCheck out;
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        for (int probe = 0; probe < 13; ++probe) {
            const auto e = static_cast<std::size_t>(
                uniform_int(rng, 0, static_cast<std::int64_t>(params.tensors[t].size()) - 1));
            const double num = oracle::central_difference(loss, &params.tensors[t].data[e], 1e-4);
            const double ana = lg.grads[t].data[e];
            const double scale = std::max({std::abs(num), std::abs(ana), 1e-7});
            out.worst = std::max(out.worst, std::abs(num - ana) / scale);
            ++out.probed;
        }
    }
    return out;
}

// Small memorisation task shared by the unit tests and the acceptance run.
struct OverfitTask {
    hdawf::Dataset data;
    hdawf::ModelConfig model;
    hdawf::TrainConfig train;
};

inline OverfitTask overfit_task(std::uint64_t seed) {
    hdawf::SynthSpec ss;
    ss.num_classes = 5;
    ss.samples_per_class = 20;
    ss.trace_len = 200;
    ss.noise_rate = 0.01;
    ss.seed = seed;
    OverfitTask t;
    t.data = hdawf::synth_dataset(ss);
    t.model = narrow_model(ss.trace_len, 5, 8);
    t.train.epochs = 50;
    t.train.batch_size = 100;  // full batch
    t.train.lr = 3e-3;
    t.train.seed = seed;
    t.train.select = hdawf::Selection::last_epoch;
    return t;
}

inline hdawf::SearchSpace int_grid(const std::string& name, int lo, int hi) {
    hdawf::SearchSpace s;
    s.name = name;
    for (int v = lo; v <= hi; ++v) s.grid.push_back(v);
    return s;
}

// Best value found for -(v - 7)^2 on {1..10} with budget 30.
inline double quadratic_best(std::uint64_t seed) {
    const auto space = int_grid("x", 1, 10);
    std::vector<hdawf::TrialRecord> log;
    auto f = [](const hdawf::AugParamSet& p, std::uint64_t) { return -std::pow(p.at("x") - 7.0, 2); };
    return hdawf::tune_parameter(space, {}, f, 30, hdawf::TpeConfig{}, seed, 1, log);
}

// Two parameters that only pay off together: alone each prefers a
// different value, jointly the score is highest when they agree.
inline double interacting(const hdawf::AugParamSet& p, std::uint64_t) {
    const bool has_a = p.count("a") > 0, has_b = p.count("b") > 0;
    if (has_a && has_b) return 1.0 - 0.1 * std::abs(p.at("a") - p.at("b"));
    if (has_a) return 0.5 - 0.01 * std::abs(p.at("a") - 3.0);
    if (has_b) return 0.5 - 0.01 * std::abs(p.at("b") - 8.0);
    return 0.0;
}

inline std::map<std::string, hdawf::SearchSpace> interacting_spaces() {
    return {{"a", int_grid("a", 1, 10)}, {"b", int_grid("b", 1, 10)}};
}

// Six traces over K = 3: three monitored traces classified correctly, one
// monitored trace given another monitored class, one background trace
// taken for a monitored class, one background trace recognised.
struct SixTraces {
    std::vector<hdawf::Prediction> preds;
    std::vector<int> labels;
};

inline SixTraces six_traces() {
    using hdawf::kBackground;
    return {{{0, 0.9}, {1, 0.8}, {2, 0.7}, {1, 0.9}, {2, 0.6}, {3, 0.9}},
            {0, 1, 2, 0, kBackground, kBackground}};
}

// True when recall never rises along the default threshold sweep of a
// freshly initialised open-world model on synthetic data.
inline bool recall_monotone_on_random_model(std::uint64_t seed) {
    hdawf::SynthSpec ss;
    ss.num_classes = 4;
    ss.samples_per_class = 15;
    ss.trace_len = 128;
    ss.background = 40;
    ss.seed = seed;
    const auto d = hdawf::synth_dataset(ss);
    const auto params = hdawf::init_params(narrow_model(128, 5, 4), seed);
    const auto sweep = hdawf::sweep_operating_points(params, d, hdawf::default_thresholds());
    for (std::size_t i = 1; i < sweep.curve.size(); ++i) {
        if (sweep.curve[i].recall > sweep.curve[i - 1].recall) return false;
    }
    return sweep.curve.size() == 101;
}

// Few-shot benchmark for the augmentation benefit: 20 classes, L = 1000,
// 5 shots, seeds 1..5. with_hda turns on all three operators at their tuned defaults
// (rotation 20, mask 0.036 * L, alpha 0.1) against no augmentation.
inline hdawf::Dataset hda_dataset() {
    hdawf::SynthSpec ss;
    ss.num_classes = 20;
    ss.samples_per_class = 100;
    ss.trace_len = 1000;
    ss.noise_rate = 0.3;
    ss.seed = 7;
    return hdawf::synth_dataset(ss);
}

inline hdawf::ExperimentConfig hda_config(bool with_hda) {
    auto cfg = hdawf::ExperimentConfig::from_kv({
        {"experiment.name", with_hda ? "hda" : "no-aug"},
        {"experiment.seeds", "1,2,3,4,5"},
        {"data.trace_len", "1000"},
        {"split.shots", "5"},
        {"split.val", "10"},
        {"split.test", "70"},
        {"model.channels", "8,16,16,32"},
        {"model.fc", "32"},
        {"train.epochs", "300"},
        {"train.batch_size", "8"},
        {"train.lr", "0.003"},
        {"aug.r_max", "20"},
        {"aug.m_len", "36"},
        {"aug.alpha", "0.1"},
    });
    for (hdawf::AugOp op : hdawf::kAllOps) cfg.aug.set_enabled(op, with_hda);
    return cfg;
}

}  // namespace fixture
