#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dprune/rng.hpp"
#include "dprune/tensor.hpp"

namespace dprune {

enum class Mode { train, eval };

// 5x5 valid cross-correlation, stride 1, no padding. Gradient buffers live
// next to the weights and accumulate until zero_grad.
struct Conv2dParams {
    static constexpr std::size_t kernel = 5;

    Tensor weights;  // [out_channels, in_channels, 5, 5]
    Tensor bias;     // [out_channels]
    Tensor grad_weights;
    Tensor grad_bias;

    Conv2dParams(std::size_t out_channels, std::size_t in_channels);

    std::size_t out_channels() const { return weights.shape()[0]; }
    std::size_t in_channels() const { return weights.shape()[1]; }
};

// x: [B, C_in, H, W] -> [B, C_out, H-4, W-4]
Tensor conv2d_forward(const Tensor& x, const Conv2dParams& p);
// returns grad_x and accumulates p.grad_weights / p.grad_bias
Tensor conv2d_backward(const Tensor& x, Conv2dParams& p, const Tensor& grad_out);

// 2x2 disjoint-window max pooling. argmax holds the within-window flat index
// (0..3) of the first maximal element in row-major order, one per output.
struct PoolResult {
    Tensor out;  // [B, C, H/2, W/2]
    Shape in_shape;
    std::vector<std::uint8_t> argmax;
};

PoolResult maxpool2x2_forward(const Tensor& x);
Tensor maxpool2x2_backward(const Tensor& grad_out, const PoolResult& cache);

Tensor relu_forward(const Tensor& x);
// derivative at exactly 0 is taken as 0
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

// Inverted dropout: train-time mask elements are 0 with probability `rate`,
// else 1/(1-rate); eval mode is the identity. The sampled mask is kept for
// the matching backward call.
struct DropoutState {
    double rate = 0.25;
    Mode mode = Mode::eval;
    Tensor mask;
};

Tensor dropout_forward(const Tensor& x, DropoutState& state, Rng& rng);
Tensor dropout_backward(const Tensor& grad_out, const DropoutState& state);

struct LinearParams {
    Tensor weights;  // [out_features, in_features]
    Tensor bias;     // [out_features]
    Tensor grad_weights;
    Tensor grad_bias;

    LinearParams(std::size_t out_features, std::size_t in_features);

    std::size_t out_features() const { return weights.shape()[0]; }
    std::size_t in_features() const { return weights.shape()[1]; }
};

// x: [B, in] -> y = x W^T + b : [B, out]
Tensor linear_forward(const Tensor& x, const LinearParams& p);
Tensor linear_backward(const Tensor& x, LinearParams& p, const Tensor& grad_out);

// Row-wise log softmax with max subtraction: y_i = x_i - max - log sum exp.
Tensor log_softmax_forward(const Tensor& x);
// backward takes the forward *output* y
Tensor log_softmax_backward(const Tensor& y, const Tensor& grad_out);

struct LossResult {
    double value;
    Tensor grad;  // d loss / d log_probs
};

// mean negative log likelihood over the batch
LossResult nll_loss(const Tensor& log_probs, std::span<const std::uint8_t> targets);

}  // namespace dprune
