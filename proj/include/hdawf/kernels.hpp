#pragma once

#include <cstddef>
#include <span>

// Single-sample layer kernels over channel-major [C][T] buffers. Batch-level
// parallelism lives in model.cpp; these are called once per sample.
namespace hdawf::kernels {

struct ConvGeom {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel = 3;
    std::size_t dilation = 1;
    std::size_t stride = 1;
    std::size_t pad_left = 0;
    std::size_t in_len = 0;
    std::size_t out_len = 0;

    std::size_t weight_count() const { return out_channels * in_channels * kernel; }
};

// Causal padding puts all (kernel-1)*dilation zeros on the left; otherwise
// they are split as evenly as possible ("same" padding).
ConvGeom make_conv_geom(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                        std::size_t dilation, std::size_t stride, bool causal, std::size_t in_len);

// out[o][t] = b[o] + sum_{c,k} w[o][c][k] * in[c][t*stride + k*dilation - pad_left]
void conv1d_forward(const ConvGeom& g, std::span<const double> in, std::span<const double> w,
                    std::span<const double> b, std::span<double> out);

// Accumulates into grad_w and grad_b; writes grad_in when non-empty.
void conv1d_backward(const ConvGeom& g, std::span<const double> in, std::span<const double> w,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_w, std::span<double> grad_b);

void relu_inplace(std::span<double> x);
// grad *= (activation > 0)
void relu_backward(std::span<const double> activation, std::span<double> grad);

// Non-overlapping max pool of width 2; ties keep the first position.
void maxpool2_forward(std::size_t channels, std::size_t in_len, std::span<const double> in,
                      std::span<double> out, std::span<std::size_t> argmax);
void maxpool2_backward(std::size_t channels, std::size_t in_len, std::span<const double> grad_out,
                       std::span<const std::size_t> argmax, std::span<double> grad_in);

void global_avg_pool_forward(std::size_t channels, std::size_t len, std::span<const double> in,
                             std::span<double> out);
void global_avg_pool_backward(std::size_t channels, std::size_t len,
                              std::span<const double> grad_out, std::span<double> grad_in);

// y[o] = b[o] + sum_i w[o][i] x[i]
void dense_forward(std::size_t in_dim, std::size_t out_dim, std::span<const double> x,
                   std::span<const double> w, std::span<const double> b, std::span<double> y);
void dense_backward(std::size_t in_dim, std::size_t out_dim, std::span<const double> x,
                    std::span<const double> w, std::span<const double> grad_y,
                    std::span<double> grad_x, std::span<double> grad_w, std::span<double> grad_b);

// Numerically stable softmax.
void softmax(std::span<const double> logits, std::span<double> probs);

}  // namespace hdawf::kernels
