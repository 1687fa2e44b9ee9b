#pragma once

#include <cstdint>
#include <vector>

#include "lecomh/classifier.hpp"
#include "lecomh/data.hpp"
#include "lecomh/optim.hpp"

namespace lecomh {

// Noisy-label training setup for the AI classifier. Labels are drawn
// uniformly from each example's annotations, redrawn every epoch; after the
// warmup epochs each batch keeps only its lowest-loss fraction (robustness to
// label noise via the small-loss heuristic). keep_ratio 1 disables selection.
struct PretrainConfig {
    OptConfig opt{0.05, 0.9, 5e-4, 60, 128};
    double small_loss_keep_ratio = 1.0;   // in (0, 1]
    std::size_t warmup_epochs = 0;        // <= opt.epochs; equal means never select
    std::vector<std::size_t> hidden_sizes{64};
    double holdout_fraction = 0.1;        // snapshot-selection split, noisy labels

    void validate() const;
};

// Trains on sampled noisy labels and returns the epoch snapshot that scored
// best on a held-out split (judged against its own sampled labels, since no
// clean labels exist at this stage). Deterministic per (dataset, config, seed).
Classifier pretrain_classifier(const Dataset& dataset, const PretrainConfig& config,
                               std::uint64_t seed);

}  // namespace lecomh
