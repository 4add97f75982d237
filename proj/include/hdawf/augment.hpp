#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hdawf/rng.hpp"
#include "hdawf/trace.hpp"

namespace hdawf {

enum class AugOp { rotation, masking, mixing };

inline constexpr std::array<AugOp, 3> kAllOps = {AugOp::rotation, AugOp::masking, AugOp::mixing};

std::string to_string(AugOp op);
AugOp parse_aug_op(const std::string& name);

class AugError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class RotationDir { forward, backward };

struct RotationParams {
    std::size_t steps = 1;
    RotationDir dir = RotationDir::forward;
};

struct MaskParams {
    std::size_t start = 0;
    std::size_t length = 0;
};

struct MixParams {
    double lambda = 1.0;
};

// Circular shift. Forward by s moves element i to (i + s) mod L, so the
// last s cells wrap to the front; backward is the inverse.
template <typename T>
std::vector<T> rotate(std::span<const T> x, RotationParams p) {
    const std::size_t n = x.size();
    std::vector<T> out(n);
    if (n == 0) return out;
    const std::size_t s = p.steps % n;
    const std::size_t shift = p.dir == RotationDir::forward ? s : (n - s) % n;
    for (std::size_t i = 0; i < n; ++i) out[(i + shift) % n] = x[i];
    return out;
}

template <typename T>
std::vector<T> rotate(const std::vector<T>& x, RotationParams p) {
    return rotate(std::span<const T>(x), p);
}

inline Trace rotate(const Trace& x, RotationParams p) {
    Trace t;
    t.cells = rotate(std::span<const Cell>(x.cells), p);
    return t;
}

// Zeroes exactly p.length cells starting at p.start.
template <typename T>
std::vector<T> mask(std::span<const T> x, MaskParams p) {
    if (p.start + p.length > x.size()) throw AugError("mask window exceeds trace length");
    std::vector<T> out(x.begin(), x.end());
    for (std::size_t i = p.start; i < p.start + p.length; ++i) out[i] = T{0};
    return out;
}

template <typename T>
std::vector<T> mask(const std::vector<T>& x, MaskParams p) {
    return mask(std::span<const T>(x), p);
}

inline Trace mask(const Trace& x, MaskParams p) {
    Trace t;
    t.cells = mask(std::span<const Cell>(x.cells), p);
    return t;
}

struct Mixed {
    Signal x;
    SoftLabel y;
};

// Convex combination lambda * (xi, yi) + (1 - lambda) * (xj, yj), evaluated
// as xj + lambda * (xi - xj) so endpoints and self-mixes are exact.
Mixed mix(std::span<const double> xi, std::span<const double> yi, std::span<const double> xj,
          std::span<const double> yj, MixParams p);

RotationParams sample_rotation(std::size_t r_max, Rng& rng);
MaskParams sample_mask(std::size_t m_len, std::size_t trace_len, Rng& rng);
MixParams sample_lambda(double alpha, Rng& rng);

// Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 uses the u^(1/shape) boost.
double sample_gamma(double shape, Rng& rng);
double sample_beta(double a, double b, Rng& rng);

struct AugConfig {
    std::size_t r_max = 20;
    std::size_t m_len = 180;
    double alpha = 0.1;
    std::vector<AugOp> order{AugOp::rotation, AugOp::masking, AugOp::mixing};
    bool enable_rotation = true;
    bool enable_masking = true;
    bool enable_mixing = true;

    bool enabled(AugOp op) const;
    void set_enabled(AugOp op, bool on);
    bool any_enabled() const { return enable_rotation || enable_masking || enable_mixing; }

    // Throws AugError unless order is a permutation of the three operators
    // and each enabled operator's parameter fits: r_max <= L, m_len < L,
    // alpha > 0.
    void validate(std::size_t trace_len) const;

    static AugConfig none();

    // Keys aug.r_max, aug.m_len, aug.alpha, aug.order, aug.enable.<op>.
    std::map<std::string, std::string> to_kv() const;
    // Applies any aug.* keys present in kv over the defaults in *this.
    void apply_kv(const std::map<std::string, std::string>& kv);
};

struct Sample {
    Signal x;
    SoftLabel y;
};

// One online augmentation pass over a minibatch. Operators run stage by
// stage in cfg.order; sample i draws from its own stream
// derive_seed(stream_seed, i), so the result does not depend on how the
// batch is scheduled. Mixing pairs each sample with a uniformly drawn
// partner from the batch as it stood before the mixing stage.
std::vector<Sample> hda_batch(const std::vector<Sample>& batch, const AugConfig& cfg,
                              std::uint64_t stream_seed);

}  // namespace hdawf
