#include "lecomh/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace lecomh {

MlpGrads finite_diff_grad(const std::function<double(const Mlp&)>& loss_fn, Mlp net, double step) {
    MlpGrads grads = make_zero_grads(net);
    std::size_t n = parameter_count(net);
    for (std::size_t i = 0; i < n; ++i) {
        double original = get_parameter(net, i);
        set_parameter(net, i, original + step);
        double up = loss_fn(net);
        set_parameter(net, i, original - step);
        double down = loss_fn(net);
        set_parameter(net, i, original);
        double g = (up - down) / (2.0 * step);
        // Reuse the flat ordering: write through the grads' own layout.
        std::size_t remaining = i;
        for (std::size_t l = 0; l < grads.weights.size(); ++l) {
            std::size_t nw = grads.weights[l].values.size();
            if (remaining < nw) {
                grads.weights[l].values[remaining] = g;
                remaining = static_cast<std::size_t>(-1);
                break;
            }
            remaining -= nw;
            std::size_t nb = grads.biases[l].size();
            if (remaining < nb) {
                grads.biases[l][remaining] = g;
                remaining = static_cast<std::size_t>(-1);
                break;
            }
            remaining -= nb;
        }
    }
    return grads;
}

double max_relative_gradient_error(const Mlp& shape, const MlpGrads& analytic,
                                   const MlpGrads& numeric, double floor) {
    double worst = 0.0;
    std::size_t n = parameter_count(shape);
    for (std::size_t i = 0; i < n; ++i) {
        double a = get_gradient(analytic, i);
        double b = get_gradient(numeric, i);
        if (std::abs(a) < floor && std::abs(b) < floor) continue;
        double rel = std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace lecomh
