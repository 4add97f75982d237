#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdawf/augment.hpp"
#include "hdawf/config.hpp"
#include "hdawf/model.hpp"
#include "hdawf/trace.hpp"

namespace hdawf {

enum class OptimizerKind { adam, sgd_momentum };
enum class Selection { val_accuracy, last_epoch };

struct TrainConfig {
    std::size_t epochs = 150;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    double momentum = 0.9;  // sgd only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    Selection select = Selection::val_accuracy;
    // Model output includes a background class at index K.
    bool open_world = false;
    Exec exec = Exec::parallel;

    void validate() const;
    // Keys train.epochs, train.batch_size, train.lr, train.optimizer,
    // train.momentum, train.select.
    KeyValues to_kv() const;
    void apply_kv(const KeyValues& kv);
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_acc = 0.0;
};

// CSV with header epoch,train_loss,val_acc.
std::string history_csv(const std::vector<EpochStats>& history);

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, std::vector<EpochStats> h)
        : std::runtime_error(what), history(std::move(h)) {}
    std::vector<EpochStats> history;
};

struct TrainResult {
    ModelParams best;
    std::size_t best_epoch = 0;
    std::vector<EpochStats> history;
};

// Adam or SGD with momentum over a flat list of tensors.
class Optimizer {
public:
    explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}
    void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);

private:
    TrainConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

// Fraction of records whose argmax equals the record's class index
// (background maps to K when open_world).
double accuracy(const ModelParams& params, const Dataset& d, bool open_world,
                Exec exec = Exec::parallel);

// Vicinal-risk training loop: each epoch shuffles the training set, augments
// every minibatch online with fresh randomness (when aug is non-null), takes
// one optimizer step per batch and scores the validation set. Returns the
// parameters of the best-scoring epoch (earliest on ties).
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& cfg, const Dataset& train_set,
                  const Dataset& val_set, const AugConfig* aug);

}  // namespace hdawf
