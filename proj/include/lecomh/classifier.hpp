#pragma once

#include <cstdint>
#include <string>

#include "lecomh/data.hpp"
#include "lecomh/mlp.hpp"

namespace lecomh {

// The AI model: a feedforward net over feature vectors producing class logits.
struct Classifier {
    Mlp net;
    DatasetMeta meta;

    void validate() const;  // net output must equal n_classes, input the feature dim
};

// N x d matrix of the dataset's feature rows.
Matrix features_matrix(const Dataset& dataset);

// Softmax-normalized predictions, N x n_classes.
Matrix classifier_probs(const Classifier& classifier, const Dataset& dataset);

// Argmax accuracy against ground truth; ties resolve to the lowest index.
double evaluate_classifier(const Classifier& classifier, const Dataset& dataset);

// Persists the network in the textual weights format plus a ".meta" sidecar
// line: "classifier v1 classes=<C> dim=<d> seed=<s> config=<hex hash>".
void save_classifier(const Classifier& classifier, const std::string& path,
                     std::uint64_t config_hash = 0);
Classifier load_classifier(const std::string& path);

}  // namespace lecomh
