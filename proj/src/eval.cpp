#include "hdawf/eval.hpp"

#include <stdexcept>

namespace hdawf {

double ConfusionSummary::precision() const {
    return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double ConfusionSummary::recall() const {
    return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

std::vector<int> labels_of(const Dataset& d) {
    std::vector<int> out;
    out.reserve(d.size());
    for (const auto& r : d.records) out.push_back(r.label);
    return out;
}

namespace {

void check_sizes(const std::vector<Prediction>& preds, const std::vector<int>& labels) {
    if (preds.size() != labels.size()) {
        throw std::invalid_argument("prediction count " + std::to_string(preds.size()) + " != label count " +
                                    std::to_string(labels.size()));
    }
    if (preds.empty()) throw DatasetError("evaluation on an empty set");
}

}  // namespace

double closed_accuracy(const std::vector<Prediction>& preds, const std::vector<int>& labels) {
    check_sizes(preds, labels);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] < 0) throw DatasetError("background record in closed-world evaluation");
        if (preds[i].cls == static_cast<std::size_t>(labels[i])) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double closed_accuracy(const ModelParams& params, const Dataset& test, Exec exec) {
    return closed_accuracy(predict(params, test, exec), labels_of(test));
}

ConfusionSummary confusion(const std::vector<Prediction>& preds, const std::vector<int>& labels,
                           int num_classes, double threshold) {
    check_sizes(preds, labels);
    ConfusionSummary c;
    const auto K = static_cast<std::size_t>(num_classes);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool monitored_pred = preds[i].cls < K && preds[i].confidence >= threshold;
        const int label = labels[i];
        if (label == kBackground) {
            if (monitored_pred) ++c.fp;
            else ++c.tn;
        } else if (!monitored_pred) {
            ++c.fn;
        } else if (preds[i].cls == static_cast<std::size_t>(label)) {
            ++c.tp;
        } else {
            ++c.fp;
        }
    }
    return c;
}

ConfusionSummary open_world_eval(const ModelParams& params, const Dataset& test, double threshold, Exec exec) {
    return confusion(predict(params, test, exec), labels_of(test), test.num_classes, threshold);
}

std::vector<double> default_thresholds() {
    std::vector<double> g;
    for (int i = 0; i <= 100; ++i) g.push_back(i / 100.0);
    return g;
}

Sweep sweep_operating_points(const std::vector<Prediction>& preds, const std::vector<int>& labels,
                             int num_classes, const std::vector<double>& grid) {
    if (grid.empty()) throw std::invalid_argument("empty threshold grid");
    Sweep s;
    for (double t : grid) {
        const auto c = confusion(preds, labels, num_classes, t);
        s.curve.push_back({t, c.precision(), c.recall()});
    }
    s.best_precision = s.curve.front();
    s.best_recall = s.curve.front();
    for (const auto& p : s.curve) {
        const auto& bp = s.best_precision;
        if (p.precision > bp.precision || (p.precision == bp.precision && p.recall > bp.recall)) {
            s.best_precision = p;
        }
        const auto& br = s.best_recall;
        if (p.recall > br.recall || (p.recall == br.recall && p.precision > br.precision)) {
            s.best_recall = p;
        }
    }
    return s;
}

Sweep sweep_operating_points(const ModelParams& params, const Dataset& val, const std::vector<double>& grid,
                             Exec exec) {
    return sweep_operating_points(predict(params, val, exec), labels_of(val), val.num_classes, grid);
}

}  // namespace hdawf
