#include "lecomh/classifier.hpp"

#include <fstream>
#include <sstream>

#include "lecomh/errors.hpp"

namespace lecomh {

void Classifier::validate() const {
    meta.validate();
    if (net.output_dim() != meta.n_classes) {
        throw contract_error("classifier emits " + std::to_string(net.output_dim()) +
                             " logits for " + std::to_string(meta.n_classes) + " classes");
    }
    if (net.input_dim() != meta.feature_dim) {
        throw contract_error("classifier expects " + std::to_string(net.input_dim()) +
                             " features, dataset has " + std::to_string(meta.feature_dim));
    }
}

Matrix features_matrix(const Dataset& dataset) {
    Matrix m(dataset.size(), dataset.meta.feature_dim);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const std::vector<double>& f = dataset.examples[i].features;
        std::copy(f.begin(), f.end(), m.row(i));
    }
    return m;
}

Matrix classifier_probs(const Classifier& classifier, const Dataset& dataset) {
    classifier.validate();
    if (dataset.meta.feature_dim != classifier.meta.feature_dim) {
        throw shape_error("dataset feature dimension does not match the classifier");
    }
    return softmax(forward(classifier.net, features_matrix(dataset)));
}

double evaluate_classifier(const Classifier& classifier, const Dataset& dataset) {
    if (!dataset.has_ground_truth()) {
        throw state_error("evaluate_classifier: dataset lacks ground truth");
    }
    if (dataset.size() == 0) throw state_error("evaluate_classifier: empty dataset");
    Matrix logits = forward(classifier.net, features_matrix(dataset));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        if (static_cast<int>(argmax_row(logits.row(i), logits.cols)) ==
            *dataset.examples[i].ground_truth) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

void save_classifier(const Classifier& classifier, const std::string& path,
                     std::uint64_t config_hash) {
    classifier.validate();
    save_mlp(classifier.net, path);
    std::ofstream meta(path + ".meta", std::ios::binary);
    if (!meta) throw io_error("cannot open '" + path + ".meta' for writing");
    meta << "classifier v1 classes=" << classifier.meta.n_classes
         << " dim=" << classifier.meta.feature_dim << " seed=" << classifier.meta.seed
         << " config=" << std::hex << config_hash << "\n";
    if (!meta) throw io_error("failed while writing classifier metadata");
}

Classifier load_classifier(const std::string& path) {
    Classifier clf;
    clf.net = load_mlp(path);
    std::ifstream meta(path + ".meta", std::ios::binary);
    if (!meta) throw io_error("cannot open '" + path + ".meta' for reading");
    std::string line;
    if (!std::getline(meta, line)) throw parse_error("classifier metadata file is empty");
    if (line.rfind("classifier v1 ", 0) != 0) {
        throw parse_error("classifier metadata header must start with 'classifier v1'");
    }
    auto kv = [&line](const std::string& key) -> std::uint64_t {
        std::string needle = " " + key + "=";
        std::size_t pos = line.find(needle);
        if (pos == std::string::npos) {
            throw parse_error("classifier metadata lacks '" + key + "='");
        }
        std::size_t start = pos + needle.size();
        std::size_t end = line.find(' ', start);
        std::string text = line.substr(start, end == std::string::npos ? end : end - start);
        try {
            std::size_t consumed = 0;
            unsigned long long v = std::stoull(text, &consumed, key == "config" ? 16 : 10);
            if (consumed != text.size()) throw std::invalid_argument(text);
            return v;
        } catch (const std::exception&) {
            throw parse_error("classifier metadata: bad value for '" + key + "'");
        }
    };
    clf.meta.n_classes = kv("classes");
    clf.meta.feature_dim = kv("dim");
    clf.meta.seed = kv("seed");
    clf.validate();
    return clf;
}

}  // namespace lecomh
