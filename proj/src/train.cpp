#include "hdawf/train.hpp"

#include <cmath>
#include <cstdio>

#include "hdawf/rng.hpp"

namespace hdawf {

void TrainConfig::validate() const {
    if (epochs < 1) throw ModelError("train.epochs must be >= 1");
    if (batch_size < 1) throw ModelError("train.batch_size must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ModelError("train.lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ModelError("train.momentum must lie in [0, 1)");
}

KeyValues TrainConfig::to_kv() const {
    KeyValues kv;
    kv["train.epochs"] = std::to_string(epochs);
    kv["train.batch_size"] = std::to_string(batch_size);
    kv["train.lr"] = format_real(lr);
    kv["train.optimizer"] = optimizer == OptimizerKind::adam ? "adam" : "sgd-momentum";
    kv["train.momentum"] = format_real(momentum);
    kv["train.select"] = select == Selection::val_accuracy ? "val_accuracy" : "last_epoch";
    return kv;
}

void TrainConfig::apply_kv(const KeyValues& kv) {
    for (const auto& [key, value] : kv) {
        if (key.rfind("train.", 0) != 0) continue;
        if (key == "train.epochs") {
            epochs = parse_count(key, value);
        } else if (key == "train.batch_size") {
            batch_size = parse_count(key, value);
        } else if (key == "train.lr") {
            lr = parse_real(key, value);
        } else if (key == "train.momentum") {
            momentum = parse_real(key, value);
        } else if (key == "train.optimizer") {
            if (value == "adam") optimizer = OptimizerKind::adam;
            else if (value == "sgd-momentum" || value == "sgd") optimizer = OptimizerKind::sgd_momentum;
            else throw ConfigError(key + ": expected adam or sgd-momentum, got '" + value + "'");
        } else if (key == "train.select") {
            if (value == "val_accuracy") select = Selection::val_accuracy;
            else if (value == "last_epoch") select = Selection::last_epoch;
            else throw ConfigError(key + ": expected val_accuracy or last_epoch, got '" + value + "'");
        } else {
            throw ConfigError("unknown training key '" + key + "'");
        }
    }
}

std::string history_csv(const std::vector<EpochStats>& history) {
    std::string out = "epoch,train_loss,val_acc\n";
    for (const auto& h : history) {
        out += std::to_string(h.epoch) + "," + format_real(h.train_loss) + "," +
               format_real(h.val_acc) + "\n";
    }
    return out;
}

void Optimizer::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }
    ++t_;
    if (cfg_.optimizer == OptimizerKind::adam) {
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& w = params[i].data;
            const auto& g = grads[i].data;
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t e = 0; e < w.size(); ++e) {
                m[e] = cfg_.beta1 * m[e] + (1.0 - cfg_.beta1) * g[e];
                v[e] = cfg_.beta2 * v[e] + (1.0 - cfg_.beta2) * g[e] * g[e];
                w[e] -= cfg_.lr * (m[e] / c1) / (std::sqrt(v[e] / c2) + cfg_.adam_eps);
            }
        }
    } else {
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& w = params[i].data;
            const auto& g = grads[i].data;
            auto& m = m_[i];
            for (std::size_t e = 0; e < w.size(); ++e) {
                m[e] = cfg_.momentum * m[e] + g[e];
                w[e] -= cfg_.lr * m[e];
            }
        }
    }
}

double accuracy(const ModelParams& params, const Dataset& d, bool open_world, Exec exec) {
    if (d.empty()) throw DatasetError("accuracy of an empty dataset");
    const auto preds = predict(params, d, exec);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int label = d.records[i].label;
        if (label == kBackground && !open_world) {
            throw DatasetError("background record in closed-world evaluation");
        }
        if (preds[i].cls == class_index(label, d.num_classes)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& train_set,
                  const Dataset& val_set, const AugConfig* aug) {
    cfg.validate();
    model_cfg.validate();
    if (train_set.empty()) throw DatasetError("empty training set");
    if (val_set.empty()) throw DatasetError("empty validation set");
    const std::size_t out_dim = static_cast<std::size_t>(train_set.num_classes) + (cfg.open_world ? 1 : 0);
    if (model_cfg.num_classes != out_dim) {
        throw ModelError("model has " + std::to_string(model_cfg.num_classes) +
                         " outputs, training data needs " + std::to_string(out_dim));
    }
    if (model_cfg.input_len != train_set.trace_len) {
        throw ModelError("model input length " + std::to_string(model_cfg.input_len) +
                         " != trace length " + std::to_string(train_set.trace_len));
    }
    if (aug) aug->validate(train_set.trace_len);

    std::vector<Sample> samples;
    samples.reserve(train_set.size());
    for (const auto& r : train_set.records) {
        samples.push_back({to_signal(r.trace), target_for(r.label, train_set.num_classes, cfg.open_world)});
    }

    TrainResult result;
    ModelParams params = init_params(model_cfg, cfg.seed);
    Optimizer opt(cfg);
    double best_score = -1.0;

    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle = make_rng(derive_seed(cfg.seed, Stream::shuffle, epoch));
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(
                                        uniform_int(shuffle, 0, static_cast<std::int64_t>(i - 1)))]);
        }

        double loss_sum = 0.0;
        std::size_t seen = 0;
        std::size_t batch_no = 0;
        for (std::size_t s = 0; s < order.size(); s += cfg.batch_size, ++batch_no) {
            const std::size_t e = std::min(order.size(), s + cfg.batch_size);
            std::vector<Sample> batch;
            batch.reserve(e - s);
            for (std::size_t i = s; i < e; ++i) batch.push_back(samples[order[i]]);
            if (aug && aug->any_enabled()) {
                batch = hda_batch(batch, *aug, derive_seed(cfg.seed, Stream::augment, epoch, batch_no));
            }
            std::vector<Signal> xs;
            std::vector<SoftLabel> ys;
            xs.reserve(batch.size());
            ys.reserve(batch.size());
            for (auto& b : batch) {
                xs.push_back(std::move(b.x));
                ys.push_back(std::move(b.y));
            }
            LossAndGrad lg;
            try {
                lg = backward(params, xs, ys, cfg.exec);
            } catch (const ModelError& err) {
                throw TrainingDiverged(std::string("epoch ") + std::to_string(epoch) + ": " + err.what(),
                                       result.history);
            }
            if (!std::isfinite(lg.loss)) {
                throw TrainingDiverged("loss became non-finite at epoch " + std::to_string(epoch),
                                       result.history);
            }
            loss_sum += lg.loss * static_cast<double>(xs.size());
            seen += xs.size();
            opt.step(params.tensors, lg.grads);
        }

        EpochStats st;
        st.epoch = epoch;
        st.train_loss = loss_sum / static_cast<double>(seen);
        st.val_acc = accuracy(params, val_set, cfg.open_world, cfg.exec);
        result.history.push_back(st);

        const bool take = cfg.select == Selection::last_epoch || st.val_acc > best_score;
        if (take) {
            best_score = st.val_acc;
            result.best = params;
            result.best_epoch = epoch;
        }
    }
    return result;
}

}  // namespace hdawf
