#include "hdawf/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hdawf/config.hpp"

namespace hdawf {

std::string to_string(AugOp op) {
    switch (op) {
        case AugOp::rotation: return "rotation";
        case AugOp::masking: return "masking";
        case AugOp::mixing: return "mixing";
    }
    return "?";
}

AugOp parse_aug_op(const std::string& name) {
    if (name == "rotation") return AugOp::rotation;
    if (name == "masking") return AugOp::masking;
    if (name == "mixing") return AugOp::mixing;
    throw AugError("unknown augmentation operator '" + name + "'");
}

Mixed mix(std::span<const double> xi, std::span<const double> yi, std::span<const double> xj,
          std::span<const double> yj, MixParams p) {
    if (xi.size() != xj.size()) throw AugError("mix: trace lengths differ");
    if (yi.size() != yj.size()) throw AugError("mix: label dimensions differ");
    if (!(p.lambda >= 0.0 && p.lambda <= 1.0)) throw AugError("mix: lambda outside [0, 1]");
    Mixed m;
    m.x.resize(xi.size());
    m.y.resize(yi.size());
    for (std::size_t k = 0; k < xi.size(); ++k) m.x[k] = xj[k] + p.lambda * (xi[k] - xj[k]);
    for (std::size_t k = 0; k < yi.size(); ++k) m.y[k] = yj[k] + p.lambda * (yi[k] - yj[k]);
    return m;
}

RotationParams sample_rotation(std::size_t r_max, Rng& rng) {
    if (r_max < 1) throw AugError("rotation bound must be >= 1");
    RotationParams p;
    p.steps = static_cast<std::size_t>(uniform_int(rng, 1, static_cast<std::int64_t>(r_max)));
    p.dir = uniform_int(rng, 0, 1) == 0 ? RotationDir::forward : RotationDir::backward;
    return p;
}

MaskParams sample_mask(std::size_t m_len, std::size_t trace_len, Rng& rng) {
    if (m_len > trace_len) throw AugError("mask length exceeds trace length");
    MaskParams p;
    p.length = m_len;
    p.start = static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<std::int64_t>(trace_len - m_len)));
    return p;
}

namespace {

double standard_normal(Rng& rng) {
    // Box-Muller, one value per call.
    const double u1 = 1.0 - uniform_real(rng);
    const double u2 = uniform_real(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// log of a Gamma(shape, 1) draw; stays finite for small shapes where the
// draw itself underflows.
double log_gamma_draw(double shape, Rng& rng) {
    if (shape < 1.0) {
        const double u = 1.0 - uniform_real(rng);
        return log_gamma_draw(shape + 1.0, rng) + std::log(u) / shape;
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double z, v;
        do {
            z = standard_normal(rng);
            v = 1.0 + c * z;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = 1.0 - uniform_real(rng);
        if (std::log(u) < 0.5 * z * z + d - d * v + d * std::log(v)) return std::log(d * v);
    }
}

}  // namespace

double sample_gamma(double shape, Rng& rng) {
    if (!(shape > 0.0)) throw AugError("gamma shape must be positive");
    return std::exp(log_gamma_draw(shape, rng));
}

double sample_beta(double a, double b, Rng& rng) {
    if (!(a > 0.0 && b > 0.0)) throw AugError("beta parameters must be positive");
    const double lx = log_gamma_draw(a, rng);
    const double ly = log_gamma_draw(b, rng);
    // x / (x + y) = 1 / (1 + exp(ly - lx))
    const double t = ly - lx;
    if (t > 0) {
        const double e = std::exp(-t);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(t));
}

MixParams sample_lambda(double alpha, Rng& rng) {
    if (!(alpha > 0.0)) throw AugError("alpha must be positive");
    return {std::clamp(sample_beta(alpha, alpha, rng), 0.0, 1.0)};
}

bool AugConfig::enabled(AugOp op) const {
    switch (op) {
        case AugOp::rotation: return enable_rotation;
        case AugOp::masking: return enable_masking;
        case AugOp::mixing: return enable_mixing;
    }
    return false;
}

void AugConfig::set_enabled(AugOp op, bool on) {
    switch (op) {
        case AugOp::rotation: enable_rotation = on; break;
        case AugOp::masking: enable_masking = on; break;
        case AugOp::mixing: enable_mixing = on; break;
    }
}

void AugConfig::validate(std::size_t trace_len) const {
    if (enable_rotation && r_max > trace_len) throw AugError("aug.r_max exceeds trace length");
    if (enable_masking && m_len >= trace_len) throw AugError("aug.m_len must be smaller than trace length");
    if (enable_mixing && (!(alpha > 0.0) || !std::isfinite(alpha))) throw AugError("aug.alpha must be positive");
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != std::vector<AugOp>{AugOp::rotation, AugOp::masking, AugOp::mixing}) {
        throw AugError("aug.order must be a permutation of rotation,masking,mixing");
    }
}

AugConfig AugConfig::none() {
    AugConfig c;
    c.enable_rotation = c.enable_masking = c.enable_mixing = false;
    return c;
}

std::map<std::string, std::string> AugConfig::to_kv() const {
    std::map<std::string, std::string> kv;
    kv["aug.r_max"] = std::to_string(r_max);
    kv["aug.m_len"] = std::to_string(m_len);
    kv["aug.alpha"] = format_real(alpha);
    std::string ord;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i) ord += ',';
        ord += to_string(order[i]);
    }
    kv["aug.order"] = ord;
    for (AugOp op : kAllOps) kv["aug.enable." + to_string(op)] = enabled(op) ? "true" : "false";
    return kv;
}

void AugConfig::apply_kv(const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) {
        if (key.rfind("aug.", 0) != 0) continue;
        if (key == "aug.r_max") {
            r_max = parse_count(key, value);
        } else if (key == "aug.m_len") {
            m_len = parse_count(key, value);
        } else if (key == "aug.alpha") {
            alpha = parse_real(key, value);
        } else if (key == "aug.order") {
            order.clear();
            for (const auto& name : split_list(value)) order.push_back(parse_aug_op(name));
        } else if (key.rfind("aug.enable.", 0) == 0) {
            set_enabled(parse_aug_op(key.substr(11)), parse_bool(key, value));
        } else {
            throw AugError("unknown augmentation key '" + key + "'");
        }
    }
}

std::vector<Sample> hda_batch(const std::vector<Sample>& batch, const AugConfig& cfg,
                              std::uint64_t stream_seed) {
    std::vector<Sample> cur = batch;
    if (batch.empty() || !cfg.any_enabled()) return cur;

    std::vector<Rng> rngs;
    rngs.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) rngs.push_back(make_rng(derive_seed(stream_seed, i)));

    for (AugOp op : cfg.order) {
        if (!cfg.enabled(op)) continue;
        switch (op) {
            case AugOp::rotation:
                if (cfg.r_max == 0) break;
                for (std::size_t i = 0; i < cur.size(); ++i) {
                    cur[i].x = rotate(cur[i].x, sample_rotation(cfg.r_max, rngs[i]));
                }
                break;
            case AugOp::masking:
                if (cfg.m_len == 0) break;
                for (std::size_t i = 0; i < cur.size(); ++i) {
                    cur[i].x = mask(cur[i].x, sample_mask(cfg.m_len, cur[i].x.size(), rngs[i]));
                }
                break;
            case AugOp::mixing: {
                const std::vector<Sample> before = cur;
                const auto last = static_cast<std::int64_t>(before.size()) - 1;
                for (std::size_t i = 0; i < cur.size(); ++i) {
                    const auto j = static_cast<std::size_t>(uniform_int(rngs[i], 0, last));
                    const MixParams p = sample_lambda(cfg.alpha, rngs[i]);
                    Mixed m = mix(before[i].x, before[i].y, before[j].x, before[j].y, p);
                    cur[i].x = std::move(m.x);
                    cur[i].y = std::move(m.y);
                }
                break;
            }
        }
    }
    return cur;
}

}  // namespace hdawf
