#include "hdawf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

namespace hdawf::kernels {

ConvGeom make_conv_geom(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                        std::size_t dilation, std::size_t stride, bool causal, std::size_t in_len) {
    if (kernel == 0 || dilation == 0 || stride == 0) throw std::invalid_argument("conv: zero size");
    if (in_len == 0) throw std::invalid_argument("conv: empty input");
    ConvGeom g;
    g.in_channels = in_channels;
    g.out_channels = out_channels;
    g.kernel = kernel;
    g.dilation = dilation;
    g.stride = stride;
    const std::size_t pad_total = (kernel - 1) * dilation;
    g.pad_left = causal ? pad_total : pad_total / 2;
    g.in_len = in_len;
    g.out_len = (in_len - 1) / stride + 1;
    return g;
}

namespace {

// Output positions t whose tap index t*stride + off falls inside [0, in_len).
struct TapRange {
    std::size_t lo, hi;
};

TapRange tap_range(const ConvGeom& g, std::ptrdiff_t off) {
    const auto s = static_cast<std::ptrdiff_t>(g.stride);
    const auto n = static_cast<std::ptrdiff_t>(g.in_len);
    std::ptrdiff_t lo = off < 0 ? (-off + s - 1) / s : 0;
    std::ptrdiff_t hi = n - 1 - off < 0 ? 0 : (n - 1 - off) / s + 1;
    const auto T = static_cast<std::ptrdiff_t>(g.out_len);
    lo = std::min(lo, T);
    hi = std::clamp(hi, lo, T);
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

namespace {

// Output positions where every tap is inside the input.
TapRange interior(const ConvGeom& g) {
    const auto first = static_cast<std::ptrdiff_t>(0) - static_cast<std::ptrdiff_t>(g.pad_left);
    const auto last = static_cast<std::ptrdiff_t>((g.kernel - 1) * g.dilation) -
                      static_cast<std::ptrdiff_t>(g.pad_left);
    const TapRange a = tap_range(g, first);
    const TapRange b = tap_range(g, last);
    const std::size_t lo = std::max(a.lo, b.lo);
    const std::size_t hi = std::max(lo, std::min(a.hi, b.hi));
    return {lo, hi};
}

// Two-wide vectors (SSE2 and NEON both have them) for the dot products.
using V2 = double __attribute__((vector_size(16)));

V2 load2(const double* p) {
    V2 v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

struct Lanes {
    V2 lo, hi;
    void add(std::size_t l, double v) {
        if (l < 2) lo[l] += v;
        else hi[l - 2] += v;
    }
    double sum() const { return (lo[0] + lo[1]) + (hi[0] + hi[1]); }
};

std::ptrdiff_t tap_offset(const ConvGeom& g, std::size_t k) {
    return static_cast<std::ptrdiff_t>(k * g.dilation) - static_cast<std::ptrdiff_t>(g.pad_left);
}

}  // namespace

// The stride-1, kernel-3 case covers every default layer. It runs over the
// interior (all taps inside the input) with taps fused and four output
// channels per pass; edges and other geometries take the checked path.

void conv1d_forward(const ConvGeom& g, std::span<const double> in, std::span<const double> w,
                    std::span<const double> b, std::span<double> out) {
    const std::size_t T = g.out_len;
    const std::size_t C = g.in_channels;
    const std::size_t K = g.kernel;
    const TapRange mid = interior(g);
    const auto n = static_cast<std::ptrdiff_t>(g.in_len);
    const bool fast = g.stride == 1 && K == 3;

    for (std::size_t o = 0; o < g.out_channels; ++o) {
        double* y = out.data() + o * T;
        std::fill(y, y + T, b[o]);
        for (std::size_t c = 0; c < C; ++c) {
            const double* x = in.data() + c * g.in_len;
            const double* wk = w.data() + (o * C + c) * K;
            auto checked = [&](std::size_t t) {
                double s = 0.0;
                for (std::size_t k = 0; k < K; ++k) {
                    const auto idx = static_cast<std::ptrdiff_t>(t * g.stride) + tap_offset(g, k);
                    if (idx >= 0 && idx < n) s += wk[k] * x[idx];
                }
                y[t] += s;
            };
            for (std::size_t t = 0; t < mid.lo; ++t) checked(t);
            for (std::size_t t = mid.hi; t < T; ++t) checked(t);
            if (!fast) {
                for (std::size_t t = mid.lo; t < mid.hi; ++t) checked(t);
            }
        }
    }
    if (!fast || mid.hi <= mid.lo) return;

    const std::ptrdiff_t off0 = tap_offset(g, 0), off1 = tap_offset(g, 1), off2 = tap_offset(g, 2);
    // Interior in tiles small enough that four output rows stay in L1.
    constexpr std::size_t tile = 128;
    std::size_t o = 0;
    for (; o + 4 <= g.out_channels; o += 4) {
        for (std::size_t t0 = mid.lo; t0 < mid.hi; t0 += tile) {
            const std::size_t len = std::min(tile, mid.hi - t0);
            double y0[tile], y1[tile], y2[tile], y3[tile];
            std::copy_n(out.data() + (o + 0) * T + t0, len, y0);
            std::copy_n(out.data() + (o + 1) * T + t0, len, y1);
            std::copy_n(out.data() + (o + 2) * T + t0, len, y2);
            std::copy_n(out.data() + (o + 3) * T + t0, len, y3);
            for (std::size_t c = 0; c < C; ++c) {
                const double* x = in.data() + c * g.in_len + t0;
                const double* __restrict xa = x + off0;
                const double* __restrict xb = x + off1;
                const double* __restrict xc = x + off2;
                const double* w0 = w.data() + ((o + 0) * C + c) * 3;
                const double* w1 = w.data() + ((o + 1) * C + c) * 3;
                const double* w2 = w.data() + ((o + 2) * C + c) * 3;
                const double* w3 = w.data() + ((o + 3) * C + c) * 3;
                const double w00 = w0[0], w01 = w0[1], w02 = w0[2];
                const double w10 = w1[0], w11 = w1[1], w12 = w1[2];
                const double w20 = w2[0], w21 = w2[1], w22 = w2[2];
                const double w30 = w3[0], w31 = w3[1], w32 = w3[2];
                for (std::size_t j = 0; j < len; ++j) {
                    const double a = xa[j], bb = xb[j], cc = xc[j];
                    y0[j] += w00 * a + w01 * bb + w02 * cc;
                    y1[j] += w10 * a + w11 * bb + w12 * cc;
                    y2[j] += w20 * a + w21 * bb + w22 * cc;
                    y3[j] += w30 * a + w31 * bb + w32 * cc;
                }
            }
            std::copy_n(y0, len, out.data() + (o + 0) * T + t0);
            std::copy_n(y1, len, out.data() + (o + 1) * T + t0);
            std::copy_n(y2, len, out.data() + (o + 2) * T + t0);
            std::copy_n(y3, len, out.data() + (o + 3) * T + t0);
        }
    }
    for (; o < g.out_channels; ++o) {
        double* __restrict y = out.data() + o * T;
        for (std::size_t c = 0; c < C; ++c) {
            const double* __restrict x = in.data() + c * g.in_len;
            const double* wk = w.data() + (o * C + c) * 3;
            const double wa = wk[0], wb = wk[1], wc = wk[2];
            const double* __restrict xa = x + off0;
            const double* __restrict xb = x + off1;
            const double* __restrict xc = x + off2;
            for (std::size_t t = mid.lo; t < mid.hi; ++t) y[t] += wa * xa[t] + wb * xb[t] + wc * xc[t];
        }
    }
}

void conv1d_backward(const ConvGeom& g, std::span<const double> in, std::span<const double> w,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_w, std::span<double> grad_b) {
    const std::size_t T = g.out_len;
    const std::size_t C = g.in_channels;
    const std::size_t K = g.kernel;
    const TapRange mid = interior(g);
    const auto n = static_cast<std::ptrdiff_t>(g.in_len);
    const bool fast = g.stride == 1 && K == 3;
    const bool want_in = !grad_in.empty();

    for (std::size_t o = 0; o < g.out_channels; ++o) {
        const double* gy = grad_out.data() + o * T;
        double bsum = 0.0;
        for (std::size_t t = 0; t < T; ++t) bsum += gy[t];
        grad_b[o] += bsum;
    }

    // Weight gradient: acc[k] = sum_t gy[t] * x[t*stride + off_k].
    std::vector<double> acc(K);
    for (std::size_t o = 0; o < g.out_channels; ++o) {
        const double* gy = grad_out.data() + o * T;
        for (std::size_t c = 0; c < C; ++c) {
            const double* x = in.data() + c * g.in_len;
            std::fill(acc.begin(), acc.end(), 0.0);
            auto checked = [&](std::size_t t) {
                for (std::size_t k = 0; k < K; ++k) {
                    const auto idx = static_cast<std::ptrdiff_t>(t * g.stride) + tap_offset(g, k);
                    if (idx >= 0 && idx < n) acc[k] += gy[t] * x[idx];
                }
            };
            for (std::size_t t = 0; t < mid.lo; ++t) checked(t);
            if (fast) {
                const double* __restrict xa = x + tap_offset(g, 0);
                const double* __restrict xb = x + tap_offset(g, 1);
                const double* __restrict xc = x + tap_offset(g, 2);
                // Four partial sums per tap in a fixed order; one serial
                // chain per tap would be bound by add latency.
                Lanes a0{}, a1{}, a2{};
                std::size_t t = mid.lo;
                for (; t + 4 <= mid.hi; t += 4) {
                    const V2 glo = load2(gy + t), ghi = load2(gy + t + 2);
                    a0.lo += glo * load2(xa + t);
                    a0.hi += ghi * load2(xa + t + 2);
                    a1.lo += glo * load2(xb + t);
                    a1.hi += ghi * load2(xb + t + 2);
                    a2.lo += glo * load2(xc + t);
                    a2.hi += ghi * load2(xc + t + 2);
                }
                for (std::size_t l = 0; t < mid.hi; ++t, ++l) {
                    a0.add(l, gy[t] * xa[t]);
                    a1.add(l, gy[t] * xb[t]);
                    a2.add(l, gy[t] * xc[t]);
                }
                acc[0] += a0.sum();
                acc[1] += a1.sum();
                acc[2] += a2.sum();
            } else {
                for (std::size_t t = mid.lo; t < mid.hi; ++t) checked(t);
            }
            for (std::size_t t = mid.hi; t < T; ++t) checked(t);
            double* gw = grad_w.data() + (o * C + c) * K;
            for (std::size_t k = 0; k < K; ++k) gw[k] += acc[k];
        }
    }

    if (!want_in) return;
    std::fill(grad_in.begin(), grad_in.end(), 0.0);
    if (!fast) {
        for (std::size_t o = 0; o < g.out_channels; ++o) {
            const double* gy = grad_out.data() + o * T;
            for (std::size_t c = 0; c < C; ++c) {
                double* gx = grad_in.data() + c * g.in_len;
                const double* wk = w.data() + (o * C + c) * K;
                for (std::size_t t = 0; t < T; ++t) {
                    for (std::size_t k = 0; k < K; ++k) {
                        const auto idx = static_cast<std::ptrdiff_t>(t * g.stride) + tap_offset(g, k);
                        if (idx >= 0 && idx < n) gx[idx] += wk[k] * gy[t];
                    }
                }
            }
        }
        return;
    }

    // Input gradient, gathered per input position s:
    // gx[s] += sum_k w_k * gy[s - off_k] over the k with 0 <= s - off_k < T.
    const std::ptrdiff_t off0 = tap_offset(g, 0), off1 = tap_offset(g, 1), off2 = tap_offset(g, 2);
    const auto Ti = static_cast<std::ptrdiff_t>(T);
    const std::ptrdiff_t s_lo = std::clamp<std::ptrdiff_t>(off2, 0, n);
    const std::ptrdiff_t s_hi = std::clamp<std::ptrdiff_t>(Ti + off0, s_lo, n);
    for (std::size_t c = 0; c < C; ++c) {
        double* __restrict gx = grad_in.data() + c * g.in_len;
        for (std::size_t o = 0; o < g.out_channels; ++o) {
            const double* gy = grad_out.data() + o * T;
            const double* wk = w.data() + (o * C + c) * 3;
            auto checked = [&](std::ptrdiff_t s) {
                double v = 0.0;
                const std::ptrdiff_t offs[3] = {off0, off1, off2};
                for (int k = 0; k < 3; ++k) {
                    const std::ptrdiff_t t = s - offs[k];
                    if (t >= 0 && t < Ti) v += wk[k] * gy[t];
                }
                gx[s] += v;
            };
            for (std::ptrdiff_t s = 0; s < s_lo; ++s) checked(s);
            for (std::ptrdiff_t s = s_hi; s < n; ++s) checked(s);
        }
        std::size_t o = 0;
        for (; o + 4 <= g.out_channels; o += 4) {
            const double* __restrict g0 = grad_out.data() + o * T;
            const double* __restrict g1 = g0 + T;
            const double* __restrict g2 = g1 + T;
            const double* __restrict g3 = g2 + T;
            const double* w0 = w.data() + ((o + 0) * C + c) * 3;
            const double* w1 = w.data() + ((o + 1) * C + c) * 3;
            const double* w2 = w.data() + ((o + 2) * C + c) * 3;
            const double* w3 = w.data() + ((o + 3) * C + c) * 3;
            const double w00 = w0[0], w01 = w0[1], w02 = w0[2];
            const double w10 = w1[0], w11 = w1[1], w12 = w1[2];
            const double w20 = w2[0], w21 = w2[1], w22 = w2[2];
            const double w30 = w3[0], w31 = w3[1], w32 = w3[2];
            for (std::ptrdiff_t s = s_lo; s < s_hi; ++s) {
                const std::ptrdiff_t ta = s - off0, tb = s - off1, tc = s - off2;
                gx[s] += w00 * g0[ta] + w01 * g0[tb] + w02 * g0[tc] +
                         w10 * g1[ta] + w11 * g1[tb] + w12 * g1[tc] +
                         w20 * g2[ta] + w21 * g2[tb] + w22 * g2[tc] +
                         w30 * g3[ta] + w31 * g3[tb] + w32 * g3[tc];
            }
        }
        for (; o < g.out_channels; ++o) {
            const double* __restrict gy = grad_out.data() + o * T;
            const double* wk = w.data() + (o * C + c) * 3;
            const double wa = wk[0], wb = wk[1], wc = wk[2];
            for (std::ptrdiff_t s = s_lo; s < s_hi; ++s) {
                gx[s] += wa * gy[s - off0] + wb * gy[s - off1] + wc * gy[s - off2];
            }
        }
    }
}

void relu_inplace(std::span<double> x) {
    for (double& v : x) v = v > 0.0 ? v : 0.0;
}

void relu_backward(std::span<const double> activation, std::span<double> grad) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!(activation[i] > 0.0)) grad[i] = 0.0;
    }
}

void maxpool2_forward(std::size_t channels, std::size_t in_len, std::span<const double> in,
                      std::span<double> out, std::span<std::size_t> argmax) {
    const std::size_t out_len = in_len / 2;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t t = 0; t < out_len; ++t) {
            const std::size_t a = c * in_len + 2 * t;
            const std::size_t pick = in[a + 1] > in[a] ? a + 1 : a;
            out[c * out_len + t] = in[pick];
            argmax[c * out_len + t] = pick;
        }
    }
}

void maxpool2_backward(std::size_t channels, std::size_t in_len, std::span<const double> grad_out,
                       std::span<const std::size_t> argmax, std::span<double> grad_in) {
    std::fill(grad_in.begin(), grad_in.begin() + static_cast<std::ptrdiff_t>(channels * in_len), 0.0);
    const std::size_t n = channels * (in_len / 2);
    for (std::size_t i = 0; i < n; ++i) grad_in[argmax[i]] += grad_out[i];
}

void global_avg_pool_forward(std::size_t channels, std::size_t len, std::span<const double> in,
                             std::span<double> out) {
    for (std::size_t c = 0; c < channels; ++c) {
        double s = 0.0;
        for (std::size_t t = 0; t < len; ++t) s += in[c * len + t];
        out[c] = s / static_cast<double>(len);
    }
}

void global_avg_pool_backward(std::size_t channels, std::size_t len,
                              std::span<const double> grad_out, std::span<double> grad_in) {
    const double inv = 1.0 / static_cast<double>(len);
    for (std::size_t c = 0; c < channels; ++c) {
        const double g = grad_out[c] * inv;
        std::fill(grad_in.begin() + static_cast<std::ptrdiff_t>(c * len),
                  grad_in.begin() + static_cast<std::ptrdiff_t>((c + 1) * len), g);
    }
}

void dense_forward(std::size_t in_dim, std::size_t out_dim, std::span<const double> x,
                   std::span<const double> w, std::span<const double> b, std::span<double> y) {
    for (std::size_t o = 0; o < out_dim; ++o) {
        const double* row = w.data() + o * in_dim;
        double s = b[o];
        for (std::size_t i = 0; i < in_dim; ++i) s += row[i] * x[i];
        y[o] = s;
    }
}

void dense_backward(std::size_t in_dim, std::size_t out_dim, std::span<const double> x,
                    std::span<const double> w, std::span<const double> grad_y,
                    std::span<double> grad_x, std::span<double> grad_w, std::span<double> grad_b) {
    if (!grad_x.empty()) std::fill(grad_x.begin(), grad_x.begin() + static_cast<std::ptrdiff_t>(in_dim), 0.0);
    for (std::size_t o = 0; o < out_dim; ++o) {
        const double gy = grad_y[o];
        grad_b[o] += gy;
        const double* row = w.data() + o * in_dim;
        double* grow = grad_w.data() + o * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) grow[i] += gy * x[i];
        if (!grad_x.empty()) {
            for (std::size_t i = 0; i < in_dim; ++i) grad_x[i] += gy * row[i];
        }
    }
}

void softmax(std::span<const double> logits, std::span<double> probs) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - m);
        s += probs[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i) probs[i] /= s;
}

}  // namespace hdawf::kernels
