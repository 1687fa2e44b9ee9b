#pragma once

#include <functional>

#include "lecomh/mlp.hpp"

namespace lecomh {

// Central-difference gradient of an arbitrary scalar loss over the network's
// parameters. loss_fn must be a pure function of the current weights.
MlpGrads finite_diff_grad(const std::function<double(const Mlp&)>& loss_fn, Mlp net,
                          double step = 1e-5);

// Largest elementwise relative error |a-b| / max(|a|, |b|, floor); pairs with
// both magnitudes under the floor are treated as matching.
double max_relative_gradient_error(const Mlp& shape, const MlpGrads& analytic,
                                   const MlpGrads& numeric, double floor = 1e-8);

}  // namespace lecomh
