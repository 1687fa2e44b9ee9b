#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lecomh/classifier.hpp"
#include "lecomh/consensus.hpp"
#include "lecomh/optim.hpp"

namespace lecomh {

// Decides how much human help to request: d features -> M+1 logits, where
// index j means "AI prediction plus the first j sampled annotations".
struct SelectionNet {
    Mlp net;
};

// Fuses the gated evidence into a final class distribution:
// (M+1)*C inputs -> C logits; slot 0 carries the AI distribution, slot j the
// gated one-hot of the j-th sampled annotation.
struct CollabNet {
    Mlp net;
};

struct LecomhConfig {
    double lambda = 0.0;       // weight of the annotation-cost term
    double temperature = 5.0;  // Gumbel-softmax temperature
    OptConfig opt{0.05, 0.9, 5e-4, 200, 128};
    bool freeze_classifier = true;  // when false, the AI model is fine-tuned too
    bool hard_eval = false;         // deterministic argmax selection in reports
    std::vector<std::size_t> selection_hidden{64};
    std::vector<std::size_t> collab_hidden{512, 512};

    void validate() const;
};

// One draw of the relaxed categorical selection.
struct SelectionSample {
    std::vector<double> soft;      // on the simplex, sums to 1
    std::size_t chosen_index = 0;  // argmax of soft: the number of annotations used
};

SelectionNet make_selection_net(std::size_t feature_dim, std::size_t n_annotators,
                                const std::vector<std::size_t>& hidden, Rng& rng);
CollabNet make_collab_net(std::size_t n_annotators, std::size_t n_classes,
                          const std::vector<std::size_t>& hidden, Rng& rng);

// z = softmax((logits + G)/tau) with independent standard Gumbel draws G.
SelectionSample gumbel_softmax(const std::vector<double>& logits, double temperature, Rng& rng);
SelectionSample gumbel_softmax(const std::vector<double>& logits, double temperature,
                               std::uint64_t seed);

// Hard selection: one-hot at the argmax of the logits (lowest index on ties).
SelectionSample argmax_selection(const std::vector<double>& logits);

std::vector<double> onehot(int label, std::size_t n_classes);

// Gated evidence vector of length (M+1)*C. Slot 0 is the AI distribution;
// slot j carries gate_j * annotation_j with gate_j = sum of z over indices
// >= j (the relaxed probability that at least j annotations are requested).
// At exactly one-hot z this reproduces the hard case split: slots 1..K
// filled, the rest zero.
std::vector<double> assemble_input(const std::vector<double>& ai_probs,
                                   const std::vector<std::vector<double>>& annotations_onehot,
                                   const SelectionSample& z);

// The example's annotations in a fresh uniform random order.
std::vector<int> permute_annotations(const MultiRaterExample& example, Rng& rng);
std::vector<int> permute_annotations(const MultiRaterExample& example, std::uint64_t seed);

// Expected number of annotations requested: sum_j probs[j] * j over selection
// indices (index 0 = AI alone = free). Input must lie on the simplex.
double cost(const std::vector<double>& selection_probs);

// --- Training loss ------------------------------------------------------

// A mini-batch in presentation order: features, per-example annotations
// (already permuted for this pass), and consensus labels.
struct LecomhBatch {
    Matrix features;                             // B x d
    std::vector<std::vector<int>> annotations;   // B rows of M labels
    std::vector<int> labels;                     // consensus labels, length B
};

struct LossBreakdown {
    double total = 0.0;
    double ce = 0.0;        // mean cross-entropy of the fused prediction
    double cost = 0.0;      // mean expected annotation count (noiseless probs)
    double coverage = 0.0;  // fraction of sampled selections that chose AI-alone
    MlpGrads selection_grads;
    MlpGrads collab_grads;
    std::optional<MlpGrads> classifier_grads;  // present when the AI is not frozen
};

// Pure, differentiable core with the Gumbel noise supplied explicitly
// (one row of M+1 draws per example); this is what gradient checks probe.
LossBreakdown lecomh_loss_with_noise(const LecomhBatch& batch, const SelectionNet& selection,
                                     const CollabNet& collaboration, const Classifier& classifier,
                                     const LecomhConfig& config, const Matrix& gumbel_noise);

// Convenience wrapper drawing the noise (and a fresh annotation order per
// example) from the seed.
LossBreakdown lecomh_loss(const LecomhBatch& batch, const SelectionNet& selection,
                          const CollabNet& collaboration, const Classifier& classifier,
                          const LecomhConfig& config, std::uint64_t seed);

Matrix draw_gumbel_noise(std::size_t batch, std::size_t n_options, Rng& rng);

// --- Training loop ------------------------------------------------------

struct EpochStats {
    std::size_t epoch = 0;
    double loss = 0.0;
    double ce = 0.0;
    double cost = 0.0;
    double coverage = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    SelectionNet selection;
    CollabNet collaboration;
    Classifier classifier;  // fine-tuned copy when not frozen, else the input
    std::vector<EpochStats> log;
};

// Mini-batch SGD with cosine annealing over the consensus dataset;
// annotation order is re-permuted per example per epoch. Deterministic per
// (dataset, classifier, config, seed).
TrainResult train_lecomh(const ConsensusDataset& consensus, const Classifier& classifier,
                         const LecomhConfig& config, std::uint64_t seed);

// "epoch,loss,ce,cost,coverage,lr" rows, one per epoch.
void save_training_log(const std::vector<EpochStats>& log, std::ostream& out);
void save_training_log(const std::vector<EpochStats>& log, const std::string& path);

// --- Inference ----------------------------------------------------------

struct Prediction {
    std::vector<double> probs;  // fused class distribution
    SelectionSample selection;  // the draw that decided K
};

// Runs the full pipeline on one example: sample (or argmax, when hard) the
// selection, then fuse the AI distribution with the first K annotations in a
// fresh random order. The collaboration input uses the hard one-hot of K, so
// the fused input is exactly the case split the selection decided.
Prediction final_prediction(const Classifier& classifier, const SelectionNet& selection,
                            const CollabNet& collaboration, const MultiRaterExample& example,
                            double temperature, Rng& rng, bool hard);
Prediction final_prediction(const Classifier& classifier, const SelectionNet& selection,
                            const CollabNet& collaboration, const MultiRaterExample& example,
                            double temperature, std::uint64_t seed, bool hard);

}  // namespace lecomh
