#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "lecomh/lecomh.hpp"

namespace lecomh {

// One evaluated test example: which label came out, how many annotators the
// selection requested for it, and whether the label matched the target.
struct PredictionRecord {
    std::size_t index = 0;
    int predicted = 0;
    std::size_t chosen_k = 0;  // annotators queried; 0 means AI alone
    bool correct = false;
};

struct EvalSummary {
    double coverage = 0.0;   // fraction of examples with chosen_k == 0
    double mean_cost = 0.0;  // mean chosen_k
    double accuracy = 0.0;
    std::size_t n = 0;
};

struct EvalResult {
    std::vector<PredictionRecord> records;
    EvalSummary summary;
};

// Target label per example: ground truth when the dataset carries it,
// otherwise the majority vote of the full annotator pool.
// Throws state_error when neither is available.
std::vector<int> evaluation_targets(const Dataset& test);

// Runs the trained system over the test set. Per example, subset_size pool
// members are drawn uniformly without replacement and handed to the
// single-example predictor; every example derives its own stream from the
// seed, so results are identical regardless of evaluation order.
EvalResult evaluate_system(const Classifier& classifier, const SelectionNet& selection,
                           const CollabNet& collaboration, const Dataset& test,
                           std::size_t subset_size, double temperature, bool hard,
                           std::uint64_t seed);

// One aggregated operating point of the cost/accuracy trade-off.
struct CoveragePoint {
    double lambda = 0.0;
    double coverage = 0.0;
    double mean_cost = 0.0;
    double accuracy = 0.0;
    double accuracy_std = 0.0;  // standard error of the mean accuracy
    std::size_t trials = 0;
};

// Trains and evaluates the full system once per (lambda, trial) and reports
// per-lambda aggregates, sorted by lambda. Trial t reuses the same derived
// train/eval seed pair across every lambda, so points are paired.
std::vector<CoveragePoint> sweep_lambda(const ConsensusDataset& consensus,
                                        const Classifier& classifier, const Dataset& test,
                                        const LecomhConfig& base,
                                        const std::vector<double>& lambdas, std::size_t trials,
                                        std::uint64_t seed);

// Deferral baseline: rank examples by 1 - max classifier probability and send
// the most uncertain (1 - q) fraction to the full-pool majority vote. One
// point per requested coverage q; cost counts the whole pool per deferral.
std::vector<CoveragePoint> baseline_confidence_deferral(
    const Classifier& classifier, const Dataset& test,
    const std::vector<double>& coverage_targets);

struct BaselineRow {
    std::string name;  // "ai", "human", or "majority"
    double coverage = 0.0;
    double cost = 0.0;
    double accuracy = 0.0;
};

// Three reference rows: the classifier alone (cost 0), one uniformly random
// annotator per example (cost 1), and the full-pool majority vote (cost =
// pool size).
std::vector<BaselineRow> baselines_simple(const Dataset& test, const Classifier& classifier,
                                          std::uint64_t seed);

// Curve CSV: "lambda,coverage,mean_cost,accuracy,accuracy_std,trials", rows
// sorted by coverage. Values round-trip at 17 significant digits.
void emit_curve(const std::vector<CoveragePoint>& points, std::ostream& out);
void emit_curve(const std::vector<CoveragePoint>& points, const std::string& path);
std::vector<CoveragePoint> load_curve(std::istream& in);
std::vector<CoveragePoint> load_curve(const std::string& path);

// Baseline CSV: "name,coverage,cost,accuracy".
void emit_baselines(const std::vector<BaselineRow>& rows, std::ostream& out);
void emit_baselines(const std::vector<BaselineRow>& rows, const std::string& path);
std::vector<BaselineRow> load_baselines(std::istream& in);
std::vector<BaselineRow> load_baselines(const std::string& path);

// Per-example prediction CSV: "index,predicted,chosen_k,correct" with
// correct as 0/1, one row per record in input order.
void emit_predictions(const std::vector<PredictionRecord>& records, std::ostream& out);
void emit_predictions(const std::vector<PredictionRecord>& records, const std::string& path);
std::vector<PredictionRecord> load_predictions(std::istream& in);
std::vector<PredictionRecord> load_predictions(const std::string& path);

// Spearman rank correlation with tie-averaged ranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace lecomh
