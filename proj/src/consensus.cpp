#include "lecomh/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lecomh/errors.hpp"

namespace lecomh {

void ConsensusDataset::validate() const {
    for (std::size_t i = 0; i < records.size(); ++i) {
        const ConsensusExample& rec = records[i];
        if (!(rec.record.quality > quality_threshold)) {
            throw contract_error("consensus record " + std::to_string(i) + " has quality " +
                                 format_double(rec.record.quality) +
                                 ", not above the threshold " + format_double(quality_threshold));
        }
        if (rec.record.label < 0 ||
            static_cast<std::size_t>(rec.record.label) >= meta.n_classes) {
            throw contract_error("consensus record " + std::to_string(i) +
                                 " has an out-of-range label");
        }
    }
}

namespace {

std::vector<double> vote_counts(const std::vector<int>& annotations, std::size_t n_classes) {
    if (annotations.empty()) throw state_error("majority vote over zero annotations");
    std::vector<double> counts(n_classes, 0.0);
    for (int a : annotations) {
        if (a < 0 || static_cast<std::size_t>(a) >= n_classes) {
            throw contract_error("annotation " + std::to_string(a) + " out of range");
        }
        counts[static_cast<std::size_t>(a)] += 1.0;
    }
    return counts;
}

// Shared argmax-with-tiebreak: the winner among maximal scores is the one the
// tiebreak vector rates highest; remaining ties go to the lowest index.
int argmax_tiebreak(const std::vector<double>& scores, const std::vector<double>* tiebreak) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.size(); ++c) {
        if (scores[c] > scores[best]) {
            best = c;
        } else if (scores[c] == scores[best] && tiebreak &&
                   (*tiebreak)[c] > (*tiebreak)[best]) {
            best = c;
        }
    }
    return static_cast<int>(best);
}

}  // namespace

int majority_vote(const std::vector<int>& annotations, std::size_t n_classes) {
    std::vector<double> counts = vote_counts(annotations, n_classes);
    return argmax_tiebreak(counts, nullptr);
}

int majority_vote(const std::vector<int>& annotations, std::size_t n_classes,
                  const std::vector<double>& tiebreak_probs) {
    if (tiebreak_probs.size() != n_classes) {
        throw shape_error("majority_vote: tiebreak vector length does not match class count");
    }
    std::vector<double> counts = vote_counts(annotations, n_classes);
    return argmax_tiebreak(counts, &tiebreak_probs);
}

ConsensusRecord weighted_consensus(const std::vector<double>& classifier_probs,
                                   const std::vector<int>& annotations,
                                   const std::vector<double>& annotator_weights,
                                   double classifier_weight) {
    std::size_t n_classes = classifier_probs.size();
    if (n_classes == 0) throw shape_error("weighted_consensus: empty probability vector");
    if (annotations.size() != annotator_weights.size()) {
        throw shape_error("weighted_consensus: " + std::to_string(annotations.size()) +
                          " annotations vs " + std::to_string(annotator_weights.size()) +
                          " weights");
    }
    if (classifier_weight < 0.0) {
        throw config_error("weighted_consensus: classifier weight must be non-negative");
    }
    double total = classifier_weight;
    for (double w : annotator_weights) {
        if (w < 0.0) throw config_error("weighted_consensus: weights must be non-negative");
        total += w;
    }
    if (total == 0.0) throw config_error("weighted_consensus: all weights are zero");

    std::vector<double> score(n_classes, 0.0);
    for (std::size_t c = 0; c < n_classes; ++c) {
        score[c] = classifier_weight * classifier_probs[c];
    }
    for (std::size_t j = 0; j < annotations.size(); ++j) {
        int a = annotations[j];
        if (a < 0 || static_cast<std::size_t>(a) >= n_classes) {
            throw contract_error("weighted_consensus: annotation out of range");
        }
        score[static_cast<std::size_t>(a)] += annotator_weights[j];
    }
    double sum = 0.0;
    for (double s : score) sum += s;
    for (double& s : score) s /= sum;

    ConsensusRecord rec;
    rec.label = argmax_tiebreak(score, &classifier_probs);
    rec.quality = score[static_cast<std::size_t>(rec.label)];
    return rec;
}

ConsensusWeights estimate_weights(const Dataset& dataset, const Matrix& classifier_probs) {
    if (dataset.size() == 0) throw state_error("estimate_weights: empty dataset");
    if (classifier_probs.rows != dataset.size() ||
        classifier_probs.cols != dataset.meta.n_classes) {
        throw shape_error("estimate_weights: probability matrix shape does not match dataset");
    }
    if (dataset.meta.n_annotators == 0) {
        throw state_error("estimate_weights: dataset has no annotations");
    }
    std::size_t n = dataset.size();
    std::size_t m = dataset.meta.n_annotators;
    double n_classes = static_cast<double>(dataset.meta.n_classes);

    std::vector<int> votes(n);
    for (std::size_t i = 0; i < n; ++i) {
        votes[i] = majority_vote(dataset.examples[i].annotations, dataset.meta.n_classes);
    }
    auto chance_corrected = [n_classes](double agreement) {
        double chance = 1.0 / n_classes;
        return std::max(0.0, (agreement - chance) / (1.0 - chance));
    };

    ConsensusWeights out;
    out.annotator_weights.resize(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        double agree = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (dataset.examples[i].annotations[j] == votes[i]) agree += 1.0;
        }
        out.annotator_weights[j] = chance_corrected(agree / static_cast<double>(n));
    }
    double clf_agree = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        int pred = static_cast<int>(argmax_row(classifier_probs.row(i), classifier_probs.cols));
        if (pred == votes[i]) clf_agree += 1.0;
    }
    out.classifier_weight = chance_corrected(clf_agree / static_cast<double>(n));
    return out;
}

ConsensusResult build_consensus(const Dataset& dataset, const Matrix& classifier_probs,
                                double quality_threshold) {
    if (quality_threshold < 0.0 || quality_threshold >= 1.0) {
        throw config_error("consensus quality threshold must lie in [0, 1)");
    }
    ConsensusResult result;
    result.weights = estimate_weights(dataset, classifier_probs);
    result.dataset.meta = dataset.meta;
    result.dataset.quality_threshold = quality_threshold;
    result.per_example.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const MultiRaterExample& ex = dataset.examples[i];
        std::vector<double> probs(classifier_probs.row(i),
                                  classifier_probs.row(i) + classifier_probs.cols);
        ConsensusRecord rec = weighted_consensus(probs, ex.annotations,
                                                 result.weights.annotator_weights,
                                                 result.weights.classifier_weight);
        result.per_example.push_back(rec);
        if (rec.quality > quality_threshold) {
            result.dataset.records.push_back({ex, rec, i});
        }
    }
    result.retention =
        static_cast<double>(result.dataset.size()) / static_cast<double>(dataset.size());
    if (result.dataset.records.empty()) {
        throw config_error(
            "consensus filtering retained no examples; lower the quality threshold (currently " +
            format_double(quality_threshold) + ") or use stronger annotators");
    }
    result.dataset.validate();
    return result;
}

ConsensusResult build_consensus_dataset(const Dataset& dataset, const Classifier& classifier,
                                        double quality_threshold) {
    return build_consensus(dataset, classifier_probs(classifier, dataset), quality_threshold);
}

double consensus_accuracy(const ConsensusDataset& consensus) {
    if (consensus.size() == 0) throw state_error("consensus_accuracy: no retained records");
    std::size_t hits = 0;
    for (const ConsensusExample& rec : consensus.records) {
        if (!rec.example.ground_truth) {
            throw state_error("consensus_accuracy: retained example lacks ground truth");
        }
        if (rec.record.label == *rec.example.ground_truth) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(consensus.size());
}

void save_consensus_csv(const ConsensusResult& result, std::ostream& out) {
    out << "index,consensus_label,alpha,retained\n";
    std::size_t next_retained = 0;
    for (std::size_t i = 0; i < result.per_example.size(); ++i) {
        bool retained = next_retained < result.dataset.records.size() &&
                        result.dataset.records[next_retained].source_index == i;
        if (retained) ++next_retained;
        const ConsensusRecord& rec = result.per_example[i];
        out << i << ',' << rec.label << ',' << format_double(rec.quality) << ','
            << (retained ? 1 : 0) << "\n";
    }
    if (!out) throw io_error("failed while writing consensus CSV");
}

void save_consensus_csv(const ConsensusResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    save_consensus_csv(result, out);
}

std::vector<ConsensusCsvRow> load_consensus_csv(std::istream& in, double quality_threshold) {
    std::string line;
    if (!std::getline(in, line)) throw parse_error("line 1: consensus file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "index,consensus_label,alpha,retained") {
        throw parse_error("line 1: unexpected consensus CSV header");
    }
    std::vector<ConsensusCsvRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string ix, lbl, alpha, ret;
        if (!std::getline(fields, ix, ',') || !std::getline(fields, lbl, ',') ||
            !std::getline(fields, alpha, ',') || !std::getline(fields, ret)) {
            throw parse_error("line " + std::to_string(line_no) + ": expected 4 fields");
        }
        ConsensusCsvRow row;
        std::string where = "line " + std::to_string(line_no);
        try {
            row.index = std::stoull(ix);
            row.consensus_label = std::stoi(lbl);
        } catch (const std::exception&) {
            throw parse_error(where + ": bad integer field");
        }
        row.alpha = parse_double(alpha, where);
        if (ret == "1") {
            row.retained = true;
        } else if (ret == "0") {
            row.retained = false;
        } else {
            throw parse_error(where + ": retained flag must be 0 or 1");
        }
        if (row.retained && !(row.alpha > quality_threshold)) {
            throw parse_error(where + ": retained record has quality " + alpha +
                              ", not above the threshold");
        }
        rows.push_back(row);
    }
    return rows;
}

std::vector<ConsensusCsvRow> load_consensus_csv(const std::string& path,
                                                double quality_threshold) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "' for reading");
    return load_consensus_csv(in, quality_threshold);
}

ConsensusDataset consensus_from_rows(const Dataset& source,
                                     const std::vector<ConsensusCsvRow>& rows,
                                     double quality_threshold) {
    source.validate();
    if (rows.size() != source.size()) {
        throw config_error("consensus rows cover " + std::to_string(rows.size()) +
                           " examples but the dataset has " + std::to_string(source.size()));
    }
    ConsensusDataset consensus;
    consensus.meta = source.meta;
    consensus.quality_threshold = quality_threshold;
    for (const ConsensusCsvRow& row : rows) {
        if (row.index >= source.size()) {
            throw config_error("consensus row index " + std::to_string(row.index) +
                               " is out of range for a dataset of " +
                               std::to_string(source.size()));
        }
        if (row.consensus_label < 0 ||
            static_cast<std::size_t>(row.consensus_label) >= source.meta.n_classes) {
            throw config_error("consensus label " + std::to_string(row.consensus_label) +
                               " is out of range for " +
                               std::to_string(source.meta.n_classes) + " classes");
        }
        if (!row.retained) continue;
        ConsensusExample rec;
        rec.example = source.examples[row.index];
        rec.record = ConsensusRecord{row.consensus_label, row.alpha};
        rec.source_index = row.index;
        consensus.records.push_back(rec);
    }
    consensus.validate();
    return consensus;
}

}  // namespace lecomh
