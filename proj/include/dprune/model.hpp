#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dprune/layers.hpp"

namespace dprune {

constexpr std::size_t kImageSide = 28;
constexpr std::size_t kClasses = 10;
constexpr std::size_t kConv1Filters = 20;
constexpr std::size_t kConv2Filters = 40;
constexpr std::size_t kFlatFeatures = 640;  // 40 channels * 4 * 4 after two conv/pool blocks
constexpr double kDropoutRate = 0.25;

struct NetworkConfig {
    std::size_t fc_hidden = 400;  // must satisfy 10 < H < 640
    std::uint64_t seed = 1;
};

// conv(1->20,5x5) -> pool -> conv(20->40,5x5) -> pool -> dropout(0.25)
// -> fc(640->H) -> relu -> fc(H->10) -> log softmax
struct Network {
    Conv2dParams conv1;
    Conv2dParams conv2;
    DropoutState dropout;
    LinearParams fc1;
    LinearParams fc2;

    explicit Network(std::size_t fc_hidden);

    std::size_t hidden() const { return fc1.out_features(); }
};

// Uniform +-1/sqrt(fan_in) weights, zero biases, fully determined by the
// seed. Sampling order is fixed: conv1.w, conv2.w, fc1.w, fc2.w.
Network init_network(const NetworkConfig& config);

std::size_t parameter_count(const Network& net);

// Every intermediate needed by backward. fc1_out is the pre-ReLU hidden
// activation, kept as a first-class field because pruning measures it.
struct ForwardCache {
    Mode mode = Mode::eval;
    Tensor input;
    Tensor conv1_out;
    Tensor relu1_out;
    PoolResult pool1;
    Tensor conv2_out;
    Tensor relu2_out;
    PoolResult pool2;
    Tensor flat;
    DropoutState dropout;
    Tensor dropped;
    Tensor fc1_out;
    Tensor relu_fc1;
    Tensor fc2_out;
    Tensor log_probs;
};

ForwardCache forward(const Network& net, const Tensor& x, Mode mode, Rng& rng);
// eval-mode forward; never draws randomness
ForwardCache forward_eval(const Network& net, const Tensor& x);

// Accumulates gradients for all five parameter blocks. The cache must come
// from a train-mode forward.
void backward(Network& net, const ForwardCache& cache, const Tensor& loss_grad);

// Little-endian binary model file, magic "DPRN1".
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

// Parameter blocks in serialization/update order: conv1.w, conv1.b,
// conv2.w, conv2.b, fc1.w, fc1.b, fc2.w, fc2.b.
struct ParamBlock {
    const char* name;
    Tensor* value;
    Tensor* grad;
};

std::vector<ParamBlock> param_blocks(Network& net);

}  // namespace dprune
