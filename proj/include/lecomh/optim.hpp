#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "lecomh/mlp.hpp"

namespace lecomh {

// Shared optimizer settings: SGD with momentum plus decoupled-from-nothing
// classic weight decay folded into the velocity, cosine-annealed step size.
struct OptConfig {
    double learning_rate = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t epochs = 200;
    std::size_t batch_size = 128;

    void validate() const;
};

// Per-network velocity buffers, same shapes as the network parameters.
struct SgdState {
    std::vector<Matrix> weight_velocity;
    std::vector<std::vector<double>> bias_velocity;
};

SgdState make_sgd_state(const Mlp& net);

// v <- momentum*v + grad (+ weight_decay*w for weights), w <- w - lr*v.
// Biases see no weight decay. Throws numeric_error on non-finite gradients.
void sgd_step(Mlp& net, const MlpGrads& grads, SgdState& state, const OptConfig& opt, double lr);

// initial * 0.5 * (1 + cos(pi * epoch / total_epochs)); epoch counts from 0.
double cosine_lr(std::size_t epoch, std::size_t total_epochs, double initial);

}  // namespace lecomh
