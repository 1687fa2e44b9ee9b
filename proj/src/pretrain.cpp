#include "lecomh/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lecomh/errors.hpp"

namespace lecomh {

void PretrainConfig::validate() const {
    opt.validate();
    if (!(small_loss_keep_ratio > 0.0) || small_loss_keep_ratio > 1.0) {
        throw config_error("small-loss keep ratio must lie in (0, 1]");
    }
    if (warmup_epochs > opt.epochs) {
        throw config_error("warmup cannot exceed the epoch count");
    }
    if (hidden_sizes.empty()) throw config_error("classifier needs at least one hidden layer");
    for (std::size_t h : hidden_sizes) {
        if (h == 0) throw config_error("hidden layer sizes must be positive");
    }
    if (!(holdout_fraction > 0.0) || holdout_fraction >= 1.0) {
        throw config_error("holdout fraction must lie in (0, 1)");
    }
}

namespace {

Matrix gather_rows(const Matrix& source, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), source.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double* src = source.row(rows[i]);
        std::copy(src, src + source.cols, out.row(i));
    }
    return out;
}

double holdout_accuracy(const Mlp& net, const Matrix& features, const std::vector<int>& labels) {
    Matrix logits = forward(net, features);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        if (static_cast<int>(argmax_row(logits.row(i), logits.cols)) == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows);
}

}  // namespace

Classifier pretrain_classifier(const Dataset& dataset, const PretrainConfig& config,
                               std::uint64_t seed) {
    config.validate();
    dataset.validate();
    if (dataset.meta.n_annotators == 0) {
        throw state_error("pretraining needs at least one annotator");
    }
    std::size_t n = dataset.size();
    if (n < 2) throw state_error("pretraining needs at least two examples");

    Rng rng(seed);

    // Holdout split for snapshot selection; its labels are drawn once so every
    // epoch's snapshot is judged against the same yardstick.
    std::vector<std::size_t> perm = rng.permutation(n);
    std::size_t n_holdout = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(config.holdout_fraction * static_cast<double>(n))));
    if (n_holdout >= n) n_holdout = n - 1;
    std::vector<std::size_t> holdout_rows(perm.begin(), perm.begin() + n_holdout);
    std::vector<std::size_t> train_rows(perm.begin() + n_holdout, perm.end());

    Matrix all_features = features_matrix(dataset);
    Matrix holdout_features = gather_rows(all_features, holdout_rows);
    std::vector<int> holdout_labels;
    holdout_labels.reserve(n_holdout);
    for (std::size_t row : holdout_rows) {
        holdout_labels.push_back(sample_noisy_label(dataset.examples[row], rng));
    }

    std::vector<std::size_t> sizes;
    sizes.push_back(dataset.meta.feature_dim);
    for (std::size_t h : config.hidden_sizes) sizes.push_back(h);
    sizes.push_back(dataset.meta.n_classes);
    Mlp net = make_mlp(sizes, rng);
    SgdState state = make_sgd_state(net);

    Mlp best_net = net;
    double best_acc = -1.0;

    std::size_t n_train = train_rows.size();
    std::vector<int> epoch_labels(n_train);
    for (std::size_t epoch = 0; epoch < config.opt.epochs; ++epoch) {
        double lr = cosine_lr(epoch, config.opt.epochs, config.opt.learning_rate);
        // fresh label draw per epoch spreads annotator bias
        for (std::size_t i = 0; i < n_train; ++i) {
            epoch_labels[i] = sample_noisy_label(dataset.examples[train_rows[i]], rng);
        }
        std::vector<std::size_t> order = rng.permutation(n_train);
        bool select = epoch >= config.warmup_epochs && config.small_loss_keep_ratio < 1.0;

        for (std::size_t start = 0; start < n_train; start += config.opt.batch_size) {
            std::size_t stop = std::min(n_train, start + config.opt.batch_size);
            std::vector<std::size_t> batch_rows;
            std::vector<int> batch_labels;
            batch_rows.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                batch_rows.push_back(train_rows[order[k]]);
                batch_labels.push_back(epoch_labels[order[k]]);
            }
            Matrix batch = gather_rows(all_features, batch_rows);
            ForwardTrace trace;
            Matrix probs = softmax(forward(net, batch, trace));

            std::size_t b = batch_rows.size();
            std::vector<double> losses(b);
            for (std::size_t i = 0; i < b; ++i) {
                losses[i] = -std::log(
                    std::max(probs.row(i)[static_cast<std::size_t>(batch_labels[i])], 1e-12));
            }
            double batch_loss = std::accumulate(losses.begin(), losses.end(), 0.0) /
                                static_cast<double>(b);
            if (!std::isfinite(batch_loss)) {
                throw numeric_error("pretraining diverged at epoch " + std::to_string(epoch));
            }

            std::vector<char> kept(b, 1);
            std::size_t n_kept = b;
            if (select) {
                n_kept = std::max<std::size_t>(
                    1, static_cast<std::size_t>(
                           std::lround(config.small_loss_keep_ratio * static_cast<double>(b))));
                if (n_kept < b) {
                    std::vector<std::size_t> by_loss(b);
                    std::iota(by_loss.begin(), by_loss.end(), 0);
                    std::stable_sort(by_loss.begin(), by_loss.end(),
                                     [&](std::size_t x, std::size_t y) {
                                         return losses[x] < losses[y];
                                     });
                    std::fill(kept.begin(), kept.end(), 0);
                    for (std::size_t i = 0; i < n_kept; ++i) kept[by_loss[i]] = 1;
                }
            }

            Matrix logit_grad(b, probs.cols);
            double inv = 1.0 / static_cast<double>(n_kept);
            for (std::size_t i = 0; i < b; ++i) {
                if (!kept[i]) continue;
                const double* p = probs.row(i);
                double* g = logit_grad.row(i);
                for (std::size_t c = 0; c < probs.cols; ++c) g[c] = p[c] * inv;
                g[static_cast<std::size_t>(batch_labels[i])] -= inv;
            }
            try {
                MlpGrads grads = backward(net, trace, logit_grad);
                sgd_step(net, grads, state, config.opt, lr);
            } catch (const numeric_error& e) {
                throw numeric_error("pretraining diverged at epoch " + std::to_string(epoch) +
                                    ": " + e.what());
            }
        }

        double acc = holdout_accuracy(net, holdout_features, holdout_labels);
        if (acc > best_acc) {
            best_acc = acc;
            best_net = net;
        }
    }

    Classifier clf;
    clf.net = std::move(best_net);
    clf.meta = dataset.meta;
    clf.meta.seed = seed;
    clf.validate();
    return clf;
}

}  // namespace lecomh
