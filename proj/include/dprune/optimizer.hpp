#pragma once

#include "dprune/model.hpp"

namespace dprune {

// SGD with momentum: v <- momentum * v + g, p <- p - lr * v.
// Velocity buffers follow param_blocks order and start at zero.
struct SgdState {
    double lr = 0.01;
    double momentum = 0.05;
    std::vector<Tensor> velocity;

    SgdState(Network& net, double lr = 0.01, double momentum = 0.05);
};

// zeroes every gradient buffer; parameters and velocities untouched
void zero_grad(Network& net);

// applies one update from the accumulated gradients; gradients are only read
void sgd_step(Network& net, SgdState& state);

}  // namespace dprune
