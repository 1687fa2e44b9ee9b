#include "lecomh/lecomh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "lecomh/errors.hpp"

namespace lecomh {

void LecomhConfig::validate() const {
    if (lambda < 0.0 || !std::isfinite(lambda)) {
        throw config_error("cost weight lambda must be a non-negative finite number");
    }
    if (!(temperature > 0.0)) throw config_error("temperature must be positive");
    opt.validate();
    if (selection_hidden.empty() || collab_hidden.empty()) {
        throw config_error("selection and collaboration nets need at least one hidden layer");
    }
    for (std::size_t h : selection_hidden) {
        if (h == 0) throw config_error("hidden layer sizes must be positive");
    }
    for (std::size_t h : collab_hidden) {
        if (h == 0) throw config_error("hidden layer sizes must be positive");
    }
}

SelectionNet make_selection_net(std::size_t feature_dim, std::size_t n_annotators,
                                const std::vector<std::size_t>& hidden, Rng& rng) {
    std::vector<std::size_t> sizes;
    sizes.push_back(feature_dim);
    for (std::size_t h : hidden) sizes.push_back(h);
    sizes.push_back(n_annotators + 1);
    return SelectionNet{make_mlp(sizes, rng)};
}

CollabNet make_collab_net(std::size_t n_annotators, std::size_t n_classes,
                          const std::vector<std::size_t>& hidden, Rng& rng) {
    std::vector<std::size_t> sizes;
    sizes.push_back((n_annotators + 1) * n_classes);
    for (std::size_t h : hidden) sizes.push_back(h);
    sizes.push_back(n_classes);
    return CollabNet{make_mlp(sizes, rng)};
}

SelectionSample gumbel_softmax(const std::vector<double>& logits, double temperature, Rng& rng) {
    if (!(temperature > 0.0)) throw config_error("temperature must be positive");
    if (logits.empty()) throw shape_error("gumbel_softmax: empty logit vector");
    if (!all_finite(logits)) throw numeric_error("gumbel_softmax: non-finite logits");
    std::vector<double> noised(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) {
        noised[j] = (logits[j] + rng.gumbel()) / temperature;
    }
    SelectionSample sample;
    sample.soft = softmax_row(noised);
    sample.chosen_index = argmax_row(sample.soft.data(), sample.soft.size());
    return sample;
}

SelectionSample gumbel_softmax(const std::vector<double>& logits, double temperature,
                               std::uint64_t seed) {
    Rng rng(seed);
    return gumbel_softmax(logits, temperature, rng);
}

SelectionSample argmax_selection(const std::vector<double>& logits) {
    if (logits.empty()) throw shape_error("argmax_selection: empty logit vector");
    SelectionSample sample;
    sample.chosen_index = argmax_row(logits.data(), logits.size());
    sample.soft.assign(logits.size(), 0.0);
    sample.soft[sample.chosen_index] = 1.0;
    return sample;
}

std::vector<double> onehot(int label, std::size_t n_classes) {
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
        throw contract_error("onehot: label " + std::to_string(label) + " out of range");
    }
    std::vector<double> v(n_classes, 0.0);
    v[static_cast<std::size_t>(label)] = 1.0;
    return v;
}

std::vector<double> assemble_input(const std::vector<double>& ai_probs,
                                   const std::vector<std::vector<double>>& annotations_onehot,
                                   const SelectionSample& z) {
    std::size_t n_classes = ai_probs.size();
    std::size_t m = annotations_onehot.size();
    if (z.soft.size() != m + 1) {
        throw shape_error("assemble_input: selection has " + std::to_string(z.soft.size()) +
                          " entries for " + std::to_string(m) + " annotations");
    }
    std::vector<double> input((m + 1) * n_classes, 0.0);
    std::copy(ai_probs.begin(), ai_probs.end(), input.begin());
    // gate_j = probability that at least j annotations are requested
    double gate = 0.0;
    for (std::size_t j = m; j >= 1; --j) {
        gate += z.soft[j];
        const std::vector<double>& ann = annotations_onehot[j - 1];
        if (ann.size() != n_classes) {
            throw shape_error("assemble_input: annotation " + std::to_string(j - 1) +
                              " has the wrong width");
        }
        for (std::size_t c = 0; c < n_classes; ++c) input[j * n_classes + c] = gate * ann[c];
    }
    return input;
}

std::vector<int> permute_annotations(const MultiRaterExample& example, Rng& rng) {
    if (example.annotations.empty()) {
        throw state_error("permute_annotations: example has no annotations");
    }
    std::vector<int> out = example.annotations;
    rng.shuffle(out);
    return out;
}

std::vector<int> permute_annotations(const MultiRaterExample& example, std::uint64_t seed) {
    Rng rng(seed);
    return permute_annotations(example, rng);
}

double cost(const std::vector<double>& selection_probs) {
    if (selection_probs.empty()) throw shape_error("cost: empty probability vector");
    double sum = 0.0;
    for (double p : selection_probs) sum += p;
    if (std::abs(sum - 1.0) > 1e-6) {
        throw contract_error("cost: selection probabilities sum to " + format_double(sum) +
                             ", expected 1");
    }
    double total = 0.0;
    for (std::size_t j = 1; j < selection_probs.size(); ++j) {
        total += selection_probs[j] * static_cast<double>(j);
    }
    return total;
}

Matrix draw_gumbel_noise(std::size_t batch, std::size_t n_options, Rng& rng) {
    Matrix noise(batch, n_options);
    for (double& v : noise.values) v = rng.gumbel();
    return noise;
}

namespace {

void check_batch(const LecomhBatch& batch, const SelectionNet& selection,
                 const CollabNet& collaboration, const Classifier& classifier) {
    std::size_t b = batch.features.rows;
    if (b == 0) throw shape_error("empty training batch");
    if (batch.annotations.size() != b || batch.labels.size() != b) {
        throw shape_error("batch annotation/label rows do not match the feature rows");
    }
    std::size_t n_classes = classifier.meta.n_classes;
    std::size_t m = selection.net.output_dim() - 1;
    if (collaboration.net.input_dim() != (m + 1) * n_classes) {
        throw shape_error("collaboration net input width does not match M and the class count");
    }
    if (collaboration.net.output_dim() != n_classes) {
        throw shape_error("collaboration net must emit one logit per class");
    }
    if (batch.features.cols != classifier.meta.feature_dim ||
        selection.net.input_dim() != classifier.meta.feature_dim) {
        throw shape_error("feature width disagrees between batch, selection net, and classifier");
    }
    for (std::size_t i = 0; i < b; ++i) {
        if (batch.annotations[i].size() != m) {
            throw shape_error("batch row " + std::to_string(i) + " has " +
                              std::to_string(batch.annotations[i].size()) +
                              " annotations, selection net expects " + std::to_string(m));
        }
        if (batch.labels[i] < 0 || static_cast<std::size_t>(batch.labels[i]) >= n_classes) {
            throw contract_error("batch row " + std::to_string(i) + " has an invalid label");
        }
    }
    if (!all_finite(batch.features)) throw numeric_error("non-finite features in the batch");
}

}  // namespace

LossBreakdown lecomh_loss_with_noise(const LecomhBatch& batch, const SelectionNet& selection,
                                     const CollabNet& collaboration, const Classifier& classifier,
                                     const LecomhConfig& config, const Matrix& gumbel_noise) {
    config.validate();
    check_batch(batch, selection, collaboration, classifier);
    std::size_t b = batch.features.rows;
    std::size_t n_classes = classifier.meta.n_classes;
    std::size_t n_options = selection.net.output_dim();  // M + 1
    std::size_t m = n_options - 1;
    if (gumbel_noise.rows != b || gumbel_noise.cols != n_options) {
        throw shape_error("gumbel noise must be batch x (M+1)");
    }
    if (!all_finite(gumbel_noise)) throw numeric_error("non-finite gumbel noise");
    double inv_b = 1.0 / static_cast<double>(b);

    // Forward: selection logits, their noiseless and noised softmaxes.
    // Each stage's logits are checked explicitly: ReLU maps NaN to zero, so a
    // poisoned upstream stage could otherwise launder into a finite loss.
    ForwardTrace sel_trace;
    Matrix sel_logits = forward(selection.net, batch.features, sel_trace);
    if (!all_finite(sel_logits)) throw numeric_error("non-finite selection logits");
    Matrix sel_soft = softmax(sel_logits);  // cost uses this
    Matrix noised(b, n_options);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j < n_options; ++j) {
            noised(i, j) = (sel_logits(i, j) + gumbel_noise(i, j)) / config.temperature;
        }
    }
    Matrix z = softmax(noised);

    // Forward: AI distribution (through a trace only if it will be trained).
    ForwardTrace clf_trace;
    Matrix ai_logits = config.freeze_classifier
                           ? forward(classifier.net, batch.features)
                           : forward(classifier.net, batch.features, clf_trace);
    if (!all_finite(ai_logits)) throw numeric_error("non-finite classifier logits");
    Matrix ai_probs = softmax(ai_logits);

    // Assemble the gated evidence rows.
    Matrix fused_in(b, (m + 1) * n_classes);
    for (std::size_t i = 0; i < b; ++i) {
        double* row = fused_in.row(i);
        const double* ai = ai_probs.row(i);
        std::copy(ai, ai + n_classes, row);
        double gate = 0.0;
        for (std::size_t j = m; j >= 1; --j) {
            gate += z(i, j);
            row[j * n_classes + static_cast<std::size_t>(batch.annotations[i][j - 1])] = gate;
        }
    }

    ForwardTrace collab_trace;
    Matrix fused_logits = forward(collaboration.net, fused_in, collab_trace);
    if (!all_finite(fused_logits)) throw numeric_error("non-finite collaboration logits");
    Matrix fused_probs = softmax(fused_logits);

    LossBreakdown out;
    std::vector<char> clamped(b, 0);
    double ce_sum = 0.0;
    double cost_sum = 0.0;
    std::size_t ai_alone = 0;
    for (std::size_t i = 0; i < b; ++i) {
        double p = fused_probs.row(i)[static_cast<std::size_t>(batch.labels[i])];
        if (p < 1e-12) clamped[i] = 1;
        ce_sum -= std::log(std::max(p, 1e-12));
        const double* s = sel_soft.row(i);
        double ci = 0.0;
        for (std::size_t j = 1; j < n_options; ++j) ci += s[j] * static_cast<double>(j);
        cost_sum += ci;
        if (argmax_row(z.row(i), n_options) == 0) ++ai_alone;
    }
    out.ce = ce_sum / static_cast<double>(b);
    out.cost = cost_sum / static_cast<double>(b);
    out.coverage = static_cast<double>(ai_alone) / static_cast<double>(b);
    out.total = out.ce + config.lambda * out.cost;
    if (!std::isfinite(out.total)) {
        throw numeric_error("training loss is not finite");
    }

    // Backward through the fused cross-entropy.
    Matrix fused_grad(b, n_classes);
    for (std::size_t i = 0; i < b; ++i) {
        if (clamped[i]) continue;  // the clamp flattens the loss there
        const double* q = fused_probs.row(i);
        double* g = fused_grad.row(i);
        for (std::size_t c = 0; c < n_classes; ++c) g[c] = q[c] * inv_b;
        g[static_cast<std::size_t>(batch.labels[i])] -= inv_b;
    }
    Matrix fused_in_grad;
    out.collab_grads = backward(collaboration.net, collab_trace, fused_grad, fused_in_grad);

    // Split the input gradient: slot 0 feeds the AI path, slots 1..M feed the
    // gates and hence the noised selection softmax.
    Matrix sel_logit_grad(b, n_options);
    for (std::size_t i = 0; i < b; ++i) {
        const double* gin = fused_in_grad.row(i);
        // d loss / d gate_j is the input-gradient entry at the annotation's
        // one-hot position; gate_j = sum_{k >= j} z_k gives dz_k = sum_{j <= k}.
        double running = 0.0;  // sum of gate grads for j = 1..k
        std::vector<double> dz(n_options, 0.0);
        for (std::size_t k = 1; k < n_options; ++k) {
            running += gin[k * n_classes + static_cast<std::size_t>(batch.annotations[i][k - 1])];
            dz[k] = running;
        }
        // softmax Jacobian at z, scaled by 1/temperature
        const double* zrow = z.row(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < n_options; ++j) dot += zrow[j] * dz[j];
        double* grad = sel_logit_grad.row(i);
        for (std::size_t j = 0; j < n_options; ++j) {
            grad[j] = zrow[j] * (dz[j] - dot) / config.temperature;
        }
        // cost path through the noiseless softmax
        if (config.lambda != 0.0) {
            const double* s = sel_soft.row(i);
            double ci = 0.0;
            for (std::size_t j = 1; j < n_options; ++j) ci += s[j] * static_cast<double>(j);
            for (std::size_t j = 0; j < n_options; ++j) {
                grad[j] += config.lambda * inv_b * s[j] * (static_cast<double>(j) - ci);
            }
        }
    }
    out.selection_grads = backward(selection.net, sel_trace, sel_logit_grad);

    if (!config.freeze_classifier) {
        Matrix ai_logit_grad(b, n_classes);
        for (std::size_t i = 0; i < b; ++i) {
            const double* gin = fused_in_grad.row(i);
            const double* p = ai_probs.row(i);
            double dot = 0.0;
            for (std::size_t c = 0; c < n_classes; ++c) dot += p[c] * gin[c];
            double* g = ai_logit_grad.row(i);
            for (std::size_t c = 0; c < n_classes; ++c) g[c] = p[c] * (gin[c] - dot);
        }
        out.classifier_grads = backward(classifier.net, clf_trace, ai_logit_grad);
    }
    return out;
}

LossBreakdown lecomh_loss(const LecomhBatch& batch, const SelectionNet& selection,
                          const CollabNet& collaboration, const Classifier& classifier,
                          const LecomhConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    LecomhBatch ordered = batch;
    for (std::vector<int>& ann : ordered.annotations) rng.shuffle(ann);
    Matrix noise = draw_gumbel_noise(batch.features.rows, selection.net.output_dim(), rng);
    return lecomh_loss_with_noise(ordered, selection, collaboration, classifier, config, noise);
}

TrainResult train_lecomh(const ConsensusDataset& consensus, const Classifier& classifier,
                         const LecomhConfig& config, std::uint64_t seed) {
    config.validate();
    if (consensus.records.empty()) {
        throw config_error("training needs a non-empty consensus dataset");
    }
    consensus.validate();
    classifier.validate();
    std::size_t n = consensus.size();
    std::size_t m = consensus.meta.n_annotators;
    if (m == 0) throw state_error("training needs at least one annotator");
    std::size_t n_classes = consensus.meta.n_classes;
    if (n_classes != classifier.meta.n_classes ||
        consensus.meta.feature_dim != classifier.meta.feature_dim) {
        throw shape_error("consensus dataset and classifier disagree on shapes");
    }

    Rng rng(seed);
    TrainResult result;
    result.selection =
        make_selection_net(consensus.meta.feature_dim, m, config.selection_hidden, rng);
    result.collaboration = make_collab_net(m, n_classes, config.collab_hidden, rng);
    result.classifier = classifier;

    SgdState sel_state = make_sgd_state(result.selection.net);
    SgdState collab_state = make_sgd_state(result.collaboration.net);
    SgdState clf_state = make_sgd_state(result.classifier.net);

    Matrix all_features(n, consensus.meta.feature_dim);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const ConsensusExample& rec = consensus.records[i];
        std::copy(rec.example.features.begin(), rec.example.features.end(), all_features.row(i));
        labels[i] = rec.record.label;
    }

    for (std::size_t epoch = 0; epoch < config.opt.epochs; ++epoch) {
        double lr = cosine_lr(epoch, config.opt.epochs, config.opt.learning_rate);
        std::vector<std::size_t> order = rng.permutation(n);
        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;

        for (std::size_t start = 0; start < n; start += config.opt.batch_size) {
            std::size_t stop = std::min(n, start + config.opt.batch_size);
            std::size_t b = stop - start;
            LecomhBatch batch;
            batch.features = Matrix(b, consensus.meta.feature_dim);
            batch.annotations.resize(b);
            batch.labels.resize(b);
            for (std::size_t k = 0; k < b; ++k) {
                std::size_t row = order[start + k];
                const double* src = all_features.row(row);
                std::copy(src, src + all_features.cols, batch.features.row(k));
                batch.annotations[k] =
                    permute_annotations(consensus.records[row].example, rng);
                batch.labels[k] = labels[row];
            }
            Matrix noise = draw_gumbel_noise(b, m + 1, rng);
            try {
                LossBreakdown loss = lecomh_loss_with_noise(
                    batch, result.selection, result.collaboration, result.classifier, config,
                    noise);
                double w = static_cast<double>(b) / static_cast<double>(n);
                stats.loss += loss.total * w;
                stats.ce += loss.ce * w;
                stats.cost += loss.cost * w;
                stats.coverage += loss.coverage * w;
                sgd_step(result.selection.net, loss.selection_grads, sel_state, config.opt, lr);
                sgd_step(result.collaboration.net, loss.collab_grads, collab_state, config.opt,
                         lr);
                if (loss.classifier_grads) {
                    sgd_step(result.classifier.net, *loss.classifier_grads, clf_state,
                             config.opt, lr);
                }
            } catch (const numeric_error& e) {
                throw numeric_error("training diverged at epoch " + std::to_string(epoch) +
                                    ": " + e.what());
            }
        }
        result.log.push_back(stats);
    }
    return result;
}

void save_training_log(const std::vector<EpochStats>& log, std::ostream& out) {
    out << "epoch,loss,ce,cost,coverage,lr\n";
    for (const EpochStats& row : log) {
        out << row.epoch << ',' << format_double(row.loss) << ',' << format_double(row.ce) << ','
            << format_double(row.cost) << ',' << format_double(row.coverage) << ','
            << format_double(row.lr) << "\n";
    }
    if (!out) throw io_error("failed while writing the training log");
}

void save_training_log(const std::vector<EpochStats>& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    save_training_log(log, out);
}

Prediction final_prediction(const Classifier& classifier, const SelectionNet& selection,
                            const CollabNet& collaboration, const MultiRaterExample& example,
                            double temperature, Rng& rng, bool hard) {
    std::size_t n_classes = classifier.meta.n_classes;
    std::size_t m = selection.net.output_dim() - 1;
    if (example.annotations.size() != m) {
        throw shape_error("example has " + std::to_string(example.annotations.size()) +
                          " annotations, selection net expects " + std::to_string(m));
    }
    Matrix features(1, example.features.size());
    features.values = example.features;

    Matrix ai_logits = forward(classifier.net, features);
    std::vector<double> ai_probs =
        softmax_row(std::vector<double>(ai_logits.values.begin(), ai_logits.values.end()));

    Matrix sel_logits_m = forward(selection.net, features);
    std::vector<double> sel_logits(sel_logits_m.values.begin(), sel_logits_m.values.end());

    std::vector<int> ordered = permute_annotations(example, rng);
    SelectionSample sample = hard ? argmax_selection(sel_logits)
                                  : gumbel_softmax(sel_logits, temperature, rng);

    // The draw decides K; the fused input is the hard case split at K.
    SelectionSample hard_k;
    hard_k.chosen_index = sample.chosen_index;
    hard_k.soft.assign(m + 1, 0.0);
    hard_k.soft[sample.chosen_index] = 1.0;

    std::vector<std::vector<double>> onehots;
    onehots.reserve(m);
    for (int a : ordered) onehots.push_back(onehot(a, n_classes));
    std::vector<double> fused_in = assemble_input(ai_probs, onehots, hard_k);

    Matrix fused(1, fused_in.size());
    fused.values = fused_in;
    Matrix fused_logits = forward(collaboration.net, fused);
    Prediction pred;
    pred.probs =
        softmax_row(std::vector<double>(fused_logits.values.begin(), fused_logits.values.end()));
    pred.selection = sample;
    return pred;
}

Prediction final_prediction(const Classifier& classifier, const SelectionNet& selection,
                            const CollabNet& collaboration, const MultiRaterExample& example,
                            double temperature, std::uint64_t seed, bool hard) {
    Rng rng(seed);
    return final_prediction(classifier, selection, collaboration, example, temperature, rng,
                            hard);
}

}  // namespace lecomh
