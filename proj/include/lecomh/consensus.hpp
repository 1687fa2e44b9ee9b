#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lecomh/classifier.hpp"
#include "lecomh/data.hpp"

namespace lecomh {

// A consensus label and its quality (confidence) score.
struct ConsensusRecord {
    int label = 0;
    double quality = 0.0;
};

struct ConsensusExample {
    MultiRaterExample example;
    ConsensusRecord record;
    std::size_t source_index = 0;  // position in the originating dataset
};

// Only examples whose quality clears the threshold are retained.
struct ConsensusDataset {
    DatasetMeta meta;
    double quality_threshold = 0.5;
    std::vector<ConsensusExample> records;

    std::size_t size() const { return records.size(); }
    void validate() const;  // every record strictly above the threshold
};

struct ConsensusWeights {
    std::vector<double> annotator_weights;
    double classifier_weight = 0.0;
};

struct ConsensusResult {
    ConsensusDataset dataset;
    std::vector<ConsensusRecord> per_example;  // one per source example, unfiltered
    ConsensusWeights weights;
    double retention = 0.0;  // retained fraction
};

// Most frequent label. Ties break toward the highest tiebreak probability
// among the tied labels, then the lowest class index.
int majority_vote(const std::vector<int>& annotations, std::size_t n_classes);
int majority_vote(const std::vector<int>& annotations, std::size_t n_classes,
                  const std::vector<double>& tiebreak_probs);

// Linear weighted ensemble of the classifier distribution and the one-hot
// annotations, normalized to a probability vector; label = argmax, quality =
// the winning score. Argmax ties break toward the label the classifier rates
// highest, then the lowest index.
ConsensusRecord weighted_consensus(const std::vector<double>& classifier_probs,
                                   const std::vector<int>& annotations,
                                   const std::vector<double>& annotator_weights,
                                   double classifier_weight);

// Chance-corrected agreement with the per-example majority vote:
// max(0, (agreement - 1/C) / (1 - 1/C)), for each annotator and for the
// classifier's argmax prediction.
ConsensusWeights estimate_weights(const Dataset& dataset, const Matrix& classifier_probs);

// Full pipeline over a dataset: estimate weights, score every example, retain
// those with quality above the threshold.
ConsensusResult build_consensus(const Dataset& dataset, const Matrix& classifier_probs,
                                double quality_threshold = 0.5);
ConsensusResult build_consensus_dataset(const Dataset& dataset, const Classifier& classifier,
                                        double quality_threshold = 0.5);

// Fraction of retained records whose consensus label matches the ground truth
// carried by their source examples.
double consensus_accuracy(const ConsensusDataset& consensus);

// Export/import: "index,consensus_label,alpha,retained", one row per source
// example. Loading re-checks the retained records against the threshold.
void save_consensus_csv(const ConsensusResult& result, std::ostream& out);
void save_consensus_csv(const ConsensusResult& result, const std::string& path);

struct ConsensusCsvRow {
    std::size_t index = 0;
    int consensus_label = 0;
    double alpha = 0.0;
    bool retained = false;
};

std::vector<ConsensusCsvRow> load_consensus_csv(std::istream& in, double quality_threshold = 0.5);
std::vector<ConsensusCsvRow> load_consensus_csv(const std::string& path,
                                                double quality_threshold = 0.5);

// Rebuilds the filtered training set from the dataset it was derived from and
// the exported rows (one per source example). Inverts save_consensus_csv.
ConsensusDataset consensus_from_rows(const Dataset& source,
                                     const std::vector<ConsensusCsvRow>& rows,
                                     double quality_threshold = 0.5);

}  // namespace lecomh
