#pragma once

#include <cstddef>
#include <vector>

#include "hdawf/model.hpp"
#include "hdawf/trace.hpp"

namespace hdawf {

// Positive means "predicted some monitored class". A true positive also
// needs the right class; a monitored trace given the wrong monitored class
// counts as a false positive.
struct ConfusionSummary {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    double precision() const;  // 0 when nothing is predicted monitored
    double recall() const;     // 0 when there are no monitored traces
    bool operator==(const ConfusionSummary&) const = default;
};

// Fraction of predictions equal to the label. Labels must be monitored.
double closed_accuracy(const std::vector<Prediction>& preds, const std::vector<int>& labels);
double closed_accuracy(const ModelParams& params, const Dataset& test, Exec exec = Exec::parallel);

// A trace is predicted monitored iff its argmax is a monitored class
// (index < num_classes) and the confidence reaches threshold.
ConfusionSummary confusion(const std::vector<Prediction>& preds, const std::vector<int>& labels,
                           int num_classes, double threshold);
ConfusionSummary open_world_eval(const ModelParams& params, const Dataset& test, double threshold,
                                 Exec exec = Exec::parallel);

struct OperatingPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct Sweep {
    OperatingPoint best_precision;  // ties toward higher recall, then lower threshold
    OperatingPoint best_recall;     // ties toward higher precision, then lower threshold
    std::vector<OperatingPoint> curve;
};

// 0.00, 0.01, ..., 1.00.
std::vector<double> default_thresholds();

Sweep sweep_operating_points(const std::vector<Prediction>& preds, const std::vector<int>& labels,
                             int num_classes, const std::vector<double>& grid);
Sweep sweep_operating_points(const ModelParams& params, const Dataset& val, const std::vector<double>& grid,
                             Exec exec = Exec::parallel);

std::vector<int> labels_of(const Dataset& d);

}  // namespace hdawf
