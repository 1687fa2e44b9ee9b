#include "lecomh/optim.hpp"

#include <cmath>
#include <string>

#include "lecomh/errors.hpp"

namespace lecomh {

void OptConfig::validate() const {
    if (!(learning_rate > 0.0)) throw config_error("learning rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw config_error("momentum must lie in [0, 1)");
    if (weight_decay < 0.0) throw config_error("weight decay must be non-negative");
    if (epochs == 0) throw config_error("epoch count must be positive");
    if (batch_size == 0) throw config_error("batch size must be positive");
}

SgdState make_sgd_state(const Mlp& net) {
    SgdState state;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        state.weight_velocity.emplace_back(net.weights[l].rows, net.weights[l].cols);
        state.bias_velocity.emplace_back(net.biases[l].size(), 0.0);
    }
    return state;
}

void sgd_step(Mlp& net, const MlpGrads& grads, SgdState& state, const OptConfig& opt, double lr) {
    if (grads.weights.size() != net.weights.size() ||
        state.weight_velocity.size() != net.weights.size()) {
        throw shape_error("sgd_step: gradient or state does not match network depth");
    }
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        if (!all_finite(grads.weights[l]) || !all_finite(grads.biases[l])) {
            throw numeric_error("non-finite gradient in layer " + std::to_string(l));
        }
        Matrix& w = net.weights[l];
        Matrix& vw = state.weight_velocity[l];
        const Matrix& gw = grads.weights[l];
        if (gw.rows != w.rows || gw.cols != w.cols) {
            throw shape_error("sgd_step: weight gradient shape mismatch in layer " +
                              std::to_string(l));
        }
        for (std::size_t i = 0; i < w.values.size(); ++i) {
            double g = gw.values[i] + opt.weight_decay * w.values[i];
            vw.values[i] = opt.momentum * vw.values[i] + g;
            w.values[i] -= lr * vw.values[i];
        }
        std::vector<double>& b = net.biases[l];
        std::vector<double>& vb = state.bias_velocity[l];
        const std::vector<double>& gb = grads.biases[l];
        if (gb.size() != b.size()) {
            throw shape_error("sgd_step: bias gradient shape mismatch in layer " +
                              std::to_string(l));
        }
        for (std::size_t i = 0; i < b.size(); ++i) {
            vb[i] = opt.momentum * vb[i] + gb[i];
            b[i] -= lr * vb[i];
        }
    }
}

double cosine_lr(std::size_t epoch, std::size_t total_epochs, double initial) {
    if (total_epochs == 0) throw contract_error("cosine_lr: total_epochs must be positive");
    if (epoch >= total_epochs) throw contract_error("cosine_lr: epoch index past the schedule");
    double phase = M_PI * static_cast<double>(epoch) / static_cast<double>(total_epochs);
    return initial * 0.5 * (1.0 + std::cos(phase));
}

}  // namespace lecomh
