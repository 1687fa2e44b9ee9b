#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lecomh/matrix.hpp"
#include "lecomh/rng.hpp"

namespace lecomh {

// Feedforward network: ReLU on hidden layers, raw logits on the last layer.
// weights[l] has shape layer_sizes[l] x layer_sizes[l+1]; forward computes
// batch * W + b layer by layer.
struct Mlp {
    std::vector<std::size_t> layer_sizes;
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;

    std::size_t num_layers() const { return weights.size(); }
    std::size_t input_dim() const { return layer_sizes.empty() ? 0 : layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.empty() ? 0 : layer_sizes.back(); }
};

// Gradients (or any per-parameter quantity) with the same shapes as an Mlp.
struct MlpGrads {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
};

// Weights drawn uniform in +-sqrt(6/(fan_in+fan_out)), biases zero.
Mlp make_mlp(const std::vector<std::size_t>& layer_sizes, Rng& rng);
Mlp make_zero_mlp(const std::vector<std::size_t>& layer_sizes);

MlpGrads make_zero_grads(const Mlp& net);

// Post-activation values recorded by forward for use by backward.
// activations[0] is the input batch, activations[l+1] the output of layer l.
struct ForwardTrace {
    std::vector<Matrix> activations;
    bool valid = false;
};

Matrix forward(const Mlp& net, const Matrix& batch);
Matrix forward(const Mlp& net, const Matrix& batch, ForwardTrace& trace);

// Gradient of a scalar loss with respect to every weight and bias, given the
// loss gradient at the logits. Requires the trace of a prior forward pass.
// The overload with input_grad also reports the gradient at the input batch.
MlpGrads backward(const Mlp& net, const ForwardTrace& trace, const Matrix& logit_grad);
MlpGrads backward(const Mlp& net, const ForwardTrace& trace, const Matrix& logit_grad,
                  Matrix& input_grad);

// Row-stochastic softmax; each row shifted by its max before exponentiation.
Matrix softmax(const Matrix& logits);
std::vector<double> softmax_row(const std::vector<double>& logits);

// Mean over the batch of -log p(target), probabilities clamped at 1e-12.
double cross_entropy(const Matrix& probs, const Matrix& onehot_targets);
double cross_entropy(const Matrix& probs, const std::vector<int>& targets);

// First maximal entry, so ties resolve to the lowest index.
std::size_t argmax_row(const double* row, std::size_t n);

// Flat parameter access (weights first, then biases, layer by layer).
// Used by the finite-difference oracle.
std::size_t parameter_count(const Mlp& net);
double get_parameter(const Mlp& net, std::size_t index);
void set_parameter(Mlp& net, std::size_t index, double value);
double get_gradient(const MlpGrads& grads, std::size_t index);

// Textual weights format: header "mlp v1 <layer sizes>", then one line per
// parameter tensor with row-major decimals at 17 significant digits.
// save/load round-trip bit-exactly.
void save_mlp(const Mlp& net, std::ostream& out);
void save_mlp(const Mlp& net, const std::string& path);
Mlp load_mlp(std::istream& in);
Mlp load_mlp(const std::string& path);

// 17-significant-digit decimal formatting shared by all text emitters.
std::string format_double(double v);
double parse_double(const std::string& text, const std::string& context);

}  // namespace lecomh
