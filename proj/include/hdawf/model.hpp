#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "hdawf/config.hpp"
#include "hdawf/trace.hpp"

namespace hdawf {

class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Pool { none, max2 };

struct ConvBlock {
    std::size_t out_channels = 32;
    std::size_t kernel = 3;
    std::size_t dilation = 1;
    std::size_t stride = 1;
    Pool pool = Pool::none;
    // Causal blocks pad on the left only; others use centered padding.
    bool causal = true;

    bool operator==(const ConvBlock&) const = default;
};

struct ModelConfig {
    std::size_t input_len = kDefaultTraceLen;
    std::size_t num_classes = 2;  // output width, background included
    std::vector<ConvBlock> blocks;
    std::vector<std::size_t> fc;  // hidden widths between pooling and the output layer

    // Four dilated causal blocks (32, 64, 64, 128 channels; dilation 1, 2, 4, 8;
    // max-pool after the first two), global average pooling, FC 128, output.
    static ModelConfig standard(std::size_t input_len, std::size_t num_classes);

    void validate() const;
    // Sequence length entering block i (i == blocks.size() gives the pooled length).
    std::size_t length_before(std::size_t block) const;

    // Keys model.input_len, model.num_classes, model.channels, model.kernels,
    // model.dilations, model.strides, model.pools, model.causal, model.fc.
    KeyValues to_kv() const;
    static ModelConfig from_kv(const KeyValues& kv);

    bool operator==(const ModelConfig&) const = default;
};

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s);
    std::size_t size() const { return data.size(); }
    bool operator==(const Tensor&) const = default;
};

// Per-layer weights: for each conv block (weight [out][in][kernel], bias
// [out]), then for each dense layer (weight [out][in], bias [out]).
struct ModelParams {
    ModelConfig config;
    std::vector<Tensor> tensors;
    std::uint64_t init_seed = 0;

    std::size_t parameter_count() const;
    bool operator==(const ModelParams&) const = default;
};

// Layer name for tensor index i, e.g. "conv2.weight" or "fc1.bias".
std::string tensor_name(const ModelConfig& cfg, std::size_t i);

// Fan-in scaled uniform weights, zero biases.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

using Gradients = std::vector<Tensor>;

enum class Exec {
    serial,    // reference path
    parallel,  // OpenMP across batch samples
};

struct ForwardResult {
    std::vector<SoftLabel> probs;
    std::vector<std::vector<double>> features;  // globally average-pooled activations
};

ForwardResult forward(const ModelParams& params, const std::vector<Signal>& batch,
                      Exec exec = Exec::parallel);

inline constexpr double kLogFloor = 1e-12;

// Mean over the batch of -sum_j target_j * log(max(prob_j, 1e-12)).
double cross_entropy(const std::vector<SoftLabel>& probs, const std::vector<SoftLabel>& targets);

struct LossAndGrad {
    double loss = 0.0;
    Gradients grads;
};

// Gradient of cross_entropy(forward(batch), targets) with respect to every
// tensor. Per-sample gradients are summed in sample order on both paths, so
// serial and parallel results are bitwise identical. Throws ModelError naming
// the layer if any gradient is non-finite.
LossAndGrad backward(const ModelParams& params, const std::vector<Signal>& batch,
                     const std::vector<SoftLabel>& targets, Exec exec = Exec::parallel);

struct Prediction {
    std::size_t cls = 0;     // argmax, ties toward the lower index
    double confidence = 0.0;  // probability of cls
};

Prediction argmax(const SoftLabel& probs);

std::vector<Prediction> predict(const ModelParams& params, const std::vector<Signal>& traces,
                                Exec exec = Exec::parallel, std::size_t chunk = 64);
std::vector<Prediction> predict(const ModelParams& params, const Dataset& d,
                                Exec exec = Exec::parallel);

// Binary checkpoint: "TFWF", u32 version, u64-length-prefixed UTF-8 config
// text, u64 tensor count, then per tensor a u64 rank, u64 dims and
// little-endian f64 data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const ModelParams& params);
ModelParams deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace hdawf
