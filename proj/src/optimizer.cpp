#include "dprune/optimizer.hpp"

namespace dprune {

SgdState::SgdState(Network& net, double lr_, double momentum_) : lr(lr_), momentum(momentum_) {
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0,1)");
    for (const auto& block : param_blocks(net)) velocity.emplace_back(block.value->shape());
}

void zero_grad(Network& net) {
    for (const auto& block : param_blocks(net)) block.grad->fill(0.0);
}

void sgd_step(Network& net, SgdState& state) {
    const auto blocks = param_blocks(net);
    if (state.velocity.size() != blocks.size())
        throw StateError("optimizer state does not match network");
    for (std::size_t k = 0; k < blocks.size(); ++k) {
        Tensor& v = state.velocity[k];
        if (v.shape() != blocks[k].value->shape())
            throw StateError("velocity shape does not match parameter block");
        double* pv = v.data();
        double* pp = blocks[k].value->data();
        const double* pg = blocks[k].grad->data();
        for (std::size_t i = 0; i < v.size(); ++i) {
            pv[i] = state.momentum * pv[i] + pg[i];
            pp[i] -= state.lr * pv[i];
        }
    }
}

}  // namespace dprune
