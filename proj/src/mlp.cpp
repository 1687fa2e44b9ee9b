#include "lecomh/mlp.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "lecomh/errors.hpp"

namespace lecomh {

namespace {

void check_sizes(const std::vector<std::size_t>& layer_sizes) {
    if (layer_sizes.size() < 2) {
        throw config_error("network needs at least an input and an output layer, got " +
                           std::to_string(layer_sizes.size()) + " sizes");
    }
    for (std::size_t s : layer_sizes) {
        if (s == 0) throw config_error("network layer size must be positive");
    }
}

}  // namespace

Mlp make_mlp(const std::vector<std::size_t>& layer_sizes, Rng& rng) {
    check_sizes(layer_sizes);
    Mlp net;
    net.layer_sizes = layer_sizes;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        std::size_t fan_in = layer_sizes[l];
        std::size_t fan_out = layer_sizes[l + 1];
        double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Matrix w(fan_in, fan_out);
        for (double& v : w.values) v = rng.uniform(-limit, limit);
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(fan_out, 0.0);
    }
    return net;
}

Mlp make_zero_mlp(const std::vector<std::size_t>& layer_sizes) {
    check_sizes(layer_sizes);
    Mlp net;
    net.layer_sizes = layer_sizes;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        net.weights.emplace_back(layer_sizes[l], layer_sizes[l + 1]);
        net.biases.emplace_back(layer_sizes[l + 1], 0.0);
    }
    return net;
}

MlpGrads make_zero_grads(const Mlp& net) {
    MlpGrads g;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        g.weights.emplace_back(net.weights[l].rows, net.weights[l].cols);
        g.biases.emplace_back(net.biases[l].size(), 0.0);
    }
    return g;
}

namespace {

Matrix layer_affine(const Matrix& input, const Matrix& w, const std::vector<double>& b) {
    Matrix out = matmul(input, w);
    for (std::size_t r = 0; r < out.rows; ++r) {
        double* row = out.row(r);
        for (std::size_t c = 0; c < out.cols; ++c) row[c] += b[c];
    }
    return out;
}

void relu_inplace(Matrix& m) {
    for (double& v : m.values) v = v > 0.0 ? v : 0.0;
}

}  // namespace

Matrix forward(const Mlp& net, const Matrix& batch) {
    ForwardTrace scratch;
    return forward(net, batch, scratch);
}

Matrix forward(const Mlp& net, const Matrix& batch, ForwardTrace& trace) {
    if (net.num_layers() == 0) throw state_error("forward on an empty network");
    if (batch.cols != net.input_dim()) {
        throw shape_error("forward: batch has " + std::to_string(batch.cols) +
                          " features, network expects " + std::to_string(net.input_dim()));
    }
    trace.activations.clear();
    trace.activations.reserve(net.num_layers() + 1);
    trace.activations.push_back(batch);
    Matrix current = batch;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        current = layer_affine(current, net.weights[l], net.biases[l]);
        if (l + 1 < net.num_layers()) relu_inplace(current);
        trace.activations.push_back(current);
    }
    trace.valid = true;
    return current;
}

namespace {

MlpGrads backward_impl(const Mlp& net, const ForwardTrace& trace, const Matrix& logit_grad,
                       Matrix* input_grad) {
    if (!trace.valid) throw state_error("backward called without a recorded forward pass");
    if (trace.activations.size() != net.num_layers() + 1) {
        throw state_error("backward: trace does not match network depth");
    }
    const Matrix& logits = trace.activations.back();
    if (logit_grad.rows != logits.rows || logit_grad.cols != logits.cols) {
        throw shape_error("backward: logit gradient is " + std::to_string(logit_grad.rows) + "x" +
                          std::to_string(logit_grad.cols) + ", expected " +
                          std::to_string(logits.rows) + "x" + std::to_string(logits.cols));
    }
    MlpGrads grads = make_zero_grads(net);
    Matrix delta = logit_grad;
    for (std::size_t l = net.num_layers(); l-- > 0;) {
        const Matrix& input_act = trace.activations[l];
        grads.weights[l] = matmul_at_b(input_act, delta);
        std::vector<double>& gb = grads.biases[l];
        for (std::size_t r = 0; r < delta.rows; ++r) {
            const double* row = delta.row(r);
            for (std::size_t c = 0; c < delta.cols; ++c) gb[c] += row[c];
        }
        if (l > 0) {
            Matrix prev = matmul_a_bt(delta, net.weights[l]);
            // Hidden activations are post-ReLU: gradient passes only where the
            // unit was active.
            const Matrix& act = trace.activations[l];
            for (std::size_t i = 0; i < prev.values.size(); ++i) {
                if (act.values[i] <= 0.0) prev.values[i] = 0.0;
            }
            delta = std::move(prev);
        } else if (input_grad) {
            *input_grad = matmul_a_bt(delta, net.weights[0]);
        }
    }
    return grads;
}

}  // namespace

MlpGrads backward(const Mlp& net, const ForwardTrace& trace, const Matrix& logit_grad) {
    return backward_impl(net, trace, logit_grad, nullptr);
}

MlpGrads backward(const Mlp& net, const ForwardTrace& trace, const Matrix& logit_grad,
                  Matrix& input_grad) {
    return backward_impl(net, trace, logit_grad, &input_grad);
}

Matrix softmax(const Matrix& logits) {
    Matrix out(logits.rows, logits.cols);
    for (std::size_t r = 0; r < logits.rows; ++r) {
        const double* in = logits.row(r);
        double* dst = out.row(r);
        double mx = in[0];
        for (std::size_t c = 1; c < logits.cols; ++c) mx = std::max(mx, in[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.cols; ++c) {
            dst[c] = std::exp(in[c] - mx);
            sum += dst[c];
        }
        for (std::size_t c = 0; c < logits.cols; ++c) dst[c] /= sum;
    }
    return out;
}

std::vector<double> softmax_row(const std::vector<double>& logits) {
    Matrix m(1, logits.size());
    m.values = logits;
    Matrix s = softmax(m);
    return s.values;
}

double cross_entropy(const Matrix& probs, const Matrix& onehot_targets) {
    if (probs.rows != onehot_targets.rows || probs.cols != onehot_targets.cols) {
        throw shape_error("cross_entropy: probability and target shapes differ");
    }
    if (probs.rows == 0) throw shape_error("cross_entropy on an empty batch");
    double total = 0.0;
    for (std::size_t r = 0; r < probs.rows; ++r) {
        const double* p = probs.row(r);
        const double* t = onehot_targets.row(r);
        for (std::size_t c = 0; c < probs.cols; ++c) {
            if (t[c] != 0.0) total -= t[c] * std::log(std::max(p[c], 1e-12));
        }
    }
    return total / static_cast<double>(probs.rows);
}

double cross_entropy(const Matrix& probs, const std::vector<int>& targets) {
    if (probs.rows != targets.size()) {
        throw shape_error("cross_entropy: " + std::to_string(probs.rows) + " rows vs " +
                          std::to_string(targets.size()) + " targets");
    }
    if (probs.rows == 0) throw shape_error("cross_entropy on an empty batch");
    double total = 0.0;
    for (std::size_t r = 0; r < probs.rows; ++r) {
        int t = targets[r];
        if (t < 0 || static_cast<std::size_t>(t) >= probs.cols) {
            throw shape_error("cross_entropy: target " + std::to_string(t) + " out of range");
        }
        total -= std::log(std::max(probs.row(r)[t], 1e-12));
    }
    return total / static_cast<double>(probs.rows);
}

std::size_t argmax_row(const double* row, std::size_t n) {
    if (n == 0) throw shape_error("argmax over an empty row");
    std::size_t best = 0;
    for (std::size_t c = 1; c < n; ++c) {
        if (row[c] > row[best]) best = c;
    }
    return best;
}

std::size_t parameter_count(const Mlp& net) {
    std::size_t n = 0;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        n += net.weights[l].values.size() + net.biases[l].size();
    }
    return n;
}

namespace {

// Maps a flat index to (layer, weight-or-bias, offset); shared by the
// parameter accessors so they cannot disagree about the ordering.
struct ParamRef {
    std::size_t layer;
    bool is_bias;
    std::size_t offset;
};

ParamRef locate_parameter(const std::vector<Matrix>& weights,
                          const std::vector<std::vector<double>>& biases, std::size_t index) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        std::size_t nw = weights[l].values.size();
        if (index < nw) return {l, false, index};
        index -= nw;
        std::size_t nb = biases[l].size();
        if (index < nb) return {l, true, index};
        index -= nb;
    }
    throw shape_error("parameter index out of range");
}

}  // namespace

double get_parameter(const Mlp& net, std::size_t index) {
    ParamRef r = locate_parameter(net.weights, net.biases, index);
    return r.is_bias ? net.biases[r.layer][r.offset] : net.weights[r.layer].values[r.offset];
}

void set_parameter(Mlp& net, std::size_t index, double value) {
    ParamRef r = locate_parameter(net.weights, net.biases, index);
    if (r.is_bias) {
        net.biases[r.layer][r.offset] = value;
    } else {
        net.weights[r.layer].values[r.offset] = value;
    }
}

double get_gradient(const MlpGrads& grads, std::size_t index) {
    ParamRef r = locate_parameter(grads.weights, grads.biases, index);
    return r.is_bias ? grads.biases[r.layer][r.offset] : grads.weights[r.layer].values[r.offset];
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    if (res.ec != std::errc()) throw numeric_error("failed to format a double");
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& text, const std::string& context) {
    const char* first = text.data();
    const char* last = first + text.size();
    double value = 0.0;
    auto res = std::from_chars(first, last, value);
    if (res.ec != std::errc() || res.ptr != last) {
        throw parse_error(context + ": not a number: '" + text + "'");
    }
    return value;
}

namespace {

void write_tensor_line(std::ostream& out, const double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        if (i) out << ' ';
        out << format_double(data[i]);
    }
    out << '\n';
}

std::vector<double> read_tensor_line(std::istream& in, std::size_t expected,
                                     const std::string& what) {
    std::string line;
    if (!std::getline(in, line)) throw parse_error("weights file ended before " + what);
    std::istringstream fields(line);
    std::vector<double> values;
    values.reserve(expected);
    std::string tok;
    while (fields >> tok) values.push_back(parse_double(tok, what));
    if (values.size() != expected) {
        throw parse_error(what + ": expected " + std::to_string(expected) + " values, got " +
                          std::to_string(values.size()));
    }
    return values;
}

}  // namespace

void save_mlp(const Mlp& net, std::ostream& out) {
    out << "mlp v1";
    for (std::size_t s : net.layer_sizes) out << ' ' << s;
    out << '\n';
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        write_tensor_line(out, net.weights[l].values.data(), net.weights[l].values.size());
        write_tensor_line(out, net.biases[l].data(), net.biases[l].size());
    }
    if (!out) throw io_error("failed while writing network weights");
}

void save_mlp(const Mlp& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    save_mlp(net, out);
}

Mlp load_mlp(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw parse_error("weights file is empty");
    std::istringstream fields(header);
    std::string tag, version;
    fields >> tag >> version;
    if (tag != "mlp" || version != "v1") {
        throw parse_error("weights file header must start with 'mlp v1', got '" + header + "'");
    }
    std::vector<std::size_t> sizes;
    long long s = 0;
    while (fields >> s) {
        if (s <= 0) throw parse_error("weights header: layer sizes must be positive");
        sizes.push_back(static_cast<std::size_t>(s));
    }
    check_sizes(sizes);
    Mlp net = make_zero_mlp(sizes);
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        std::string which = "layer " + std::to_string(l);
        net.weights[l].values =
            read_tensor_line(in, net.weights[l].rows * net.weights[l].cols, which + " weights");
        net.biases[l] = read_tensor_line(in, net.biases[l].size(), which + " biases");
    }
    return net;
}

Mlp load_mlp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "' for reading");
    return load_mlp(in);
}

}  // namespace lecomh
