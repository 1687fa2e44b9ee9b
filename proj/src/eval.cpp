#include "lecomh/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lecomh/errors.hpp"

namespace lecomh {

std::vector<int> evaluation_targets(const Dataset& test) {
    std::vector<int> targets(test.size());
    if (test.has_ground_truth()) {
        for (std::size_t i = 0; i < test.size(); ++i) {
            targets[i] = *test.examples[i].ground_truth;
        }
        return targets;
    }
    if (test.meta.n_annotators == 0) {
        throw state_error("test set has neither ground truth nor an annotator pool");
    }
    for (std::size_t i = 0; i < test.size(); ++i) {
        targets[i] = majority_vote(test.examples[i].annotations, test.meta.n_classes);
    }
    return targets;
}

namespace {

// Uniform ordered subset of {0..pool-1}: the first `count` steps of a
// Fisher-Yates pass, so both membership and order are uniformly random.
std::vector<std::size_t> draw_subset(std::size_t pool, std::size_t count, Rng& rng) {
    std::vector<std::size_t> idx(pool);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng.below(pool - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    return idx;
}

double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation / sqrt(n); zero for a single observation.
double standard_error(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1)) /
           std::sqrt(static_cast<double>(v.size()));
}

}  // namespace

EvalResult evaluate_system(const Classifier& classifier, const SelectionNet& selection,
                           const CollabNet& collaboration, const Dataset& test,
                           std::size_t subset_size, double temperature, bool hard,
                           std::uint64_t seed) {
    test.validate();
    if (test.size() == 0) throw config_error("evaluation needs a non-empty test set");
    if (subset_size == 0) throw config_error("subset_size must be positive");
    if (subset_size + 1 != selection.net.output_dim()) {
        throw shape_error("subset_size " + std::to_string(subset_size) +
                          " does not match the selection net, which scores " +
                          std::to_string(selection.net.output_dim()) + " options");
    }
    if (test.meta.n_annotators < subset_size) {
        throw config_error("annotator pool of " + std::to_string(test.meta.n_annotators) +
                           " is smaller than the requested subset of " +
                           std::to_string(subset_size));
    }
    std::vector<int> targets = evaluation_targets(test);

    EvalResult out;
    out.records.resize(test.size());
    std::size_t correct = 0;
    std::size_t ai_alone = 0;
    std::size_t cost_sum = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        Rng rng(mix_seed(seed, i));
        const MultiRaterExample& source = test.examples[i];
        MultiRaterExample drawn;
        drawn.features = source.features;
        drawn.ground_truth = source.ground_truth;
        for (std::size_t j : draw_subset(test.meta.n_annotators, subset_size, rng)) {
            drawn.annotations.push_back(source.annotations[j]);
        }
        Prediction pred = final_prediction(classifier, selection, collaboration, drawn,
                                           temperature, rng, hard);
        PredictionRecord& rec = out.records[i];
        rec.index = i;
        rec.predicted = static_cast<int>(argmax_row(pred.probs.data(), pred.probs.size()));
        rec.chosen_k = pred.selection.chosen_index;
        rec.correct = rec.predicted == targets[i];
        if (rec.correct) ++correct;
        if (rec.chosen_k == 0) ++ai_alone;
        cost_sum += rec.chosen_k;
    }
    out.summary.n = test.size();
    double n = static_cast<double>(test.size());
    out.summary.coverage = static_cast<double>(ai_alone) / n;
    out.summary.mean_cost = static_cast<double>(cost_sum) / n;
    out.summary.accuracy = static_cast<double>(correct) / n;
    return out;
}

std::vector<CoveragePoint> sweep_lambda(const ConsensusDataset& consensus,
                                        const Classifier& classifier, const Dataset& test,
                                        const LecomhConfig& base,
                                        const std::vector<double>& lambdas, std::size_t trials,
                                        std::uint64_t seed) {
    if (lambdas.empty()) throw config_error("a sweep needs at least one lambda value");
    if (trials == 0) throw config_error("a sweep needs at least one trial");
    base.validate();
    std::vector<double> sorted = lambdas;
    std::sort(sorted.begin(), sorted.end());

    std::vector<CoveragePoint> points;
    for (double lambda : sorted) {
        LecomhConfig config = base;
        config.lambda = lambda;
        std::vector<double> coverages, costs, accuracies;
        for (std::size_t t = 0; t < trials; ++t) {
            // The same per-trial seed pair serves every lambda: paired runs.
            std::uint64_t train_seed = mix_seed(seed, 2 * t);
            std::uint64_t eval_seed = mix_seed(seed, 2 * t + 1);
            TrainResult trained = train_lecomh(consensus, classifier, config, train_seed);
            EvalResult eval = evaluate_system(trained.classifier, trained.selection,
                                              trained.collaboration, test,
                                              consensus.meta.n_annotators, config.temperature,
                                              config.hard_eval, eval_seed);
            coverages.push_back(eval.summary.coverage);
            costs.push_back(eval.summary.mean_cost);
            accuracies.push_back(eval.summary.accuracy);
        }
        CoveragePoint point;
        point.lambda = lambda;
        point.coverage = mean(coverages);
        point.mean_cost = mean(costs);
        point.accuracy = mean(accuracies);
        point.accuracy_std = standard_error(accuracies);
        point.trials = trials;
        points.push_back(point);
    }
    return points;
}

std::vector<CoveragePoint> baseline_confidence_deferral(
    const Classifier& classifier, const Dataset& test,
    const std::vector<double>& coverage_targets) {
    test.validate();
    classifier.validate();
    if (test.size() == 0) throw config_error("deferral baseline needs a non-empty test set");
    if (coverage_targets.empty()) throw config_error("deferral baseline needs coverage targets");
    if (test.meta.n_annotators == 0) {
        throw state_error("deferral baseline needs an annotator pool to defer to");
    }
    for (double q : coverage_targets) {
        if (!(q >= 0.0 && q <= 1.0)) {
            throw config_error("coverage target " + format_double(q) + " outside [0, 1]");
        }
    }
    std::vector<int> targets = evaluation_targets(test);
    std::size_t n = test.size();

    Matrix probs = classifier_probs(classifier, test);
    std::vector<int> ai_label(n);
    std::vector<int> pool_label(n);
    std::vector<double> rejection(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = probs.row(i);
        std::size_t top = argmax_row(row, probs.cols);
        ai_label[i] = static_cast<int>(top);
        rejection[i] = 1.0 - row[top];
        pool_label[i] = majority_vote(test.examples[i].annotations, test.meta.n_classes);
    }
    // Most uncertain first; index breaks ties so the order is reproducible.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return rejection[a] > rejection[b];
    });

    std::vector<CoveragePoint> points;
    for (double q : coverage_targets) {
        std::size_t deferred =
            static_cast<std::size_t>(std::lround((1.0 - q) * static_cast<double>(n)));
        deferred = std::min(deferred, n);
        std::vector<char> defer(n, 0);
        for (std::size_t k = 0; k < deferred; ++k) defer[order[k]] = 1;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < n; ++i) {
            int answer = defer[i] ? pool_label[i] : ai_label[i];
            if (answer == targets[i]) ++correct;
        }
        CoveragePoint point;
        point.coverage = static_cast<double>(n - deferred) / static_cast<double>(n);
        point.mean_cost = static_cast<double>(deferred * test.meta.n_annotators) /
                          static_cast<double>(n);
        point.accuracy = static_cast<double>(correct) / static_cast<double>(n);
        point.trials = 1;
        points.push_back(point);
    }
    return points;
}

std::vector<BaselineRow> baselines_simple(const Dataset& test, const Classifier& classifier,
                                          std::uint64_t seed) {
    test.validate();
    classifier.validate();
    if (test.size() == 0) throw config_error("baselines need a non-empty test set");
    if (test.meta.n_annotators == 0) {
        throw state_error("baselines need an annotator pool");
    }
    std::vector<int> targets = evaluation_targets(test);
    std::size_t n = test.size();

    Matrix probs = classifier_probs(classifier, test);
    std::size_t ai_correct = 0, human_correct = 0, majority_correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        int ai = static_cast<int>(argmax_row(probs.row(i), probs.cols));
        if (ai == targets[i]) ++ai_correct;
        Rng rng(mix_seed(seed, i));
        const std::vector<int>& pool = test.examples[i].annotations;
        int human = pool[static_cast<std::size_t>(rng.below(pool.size()))];
        if (human == targets[i]) ++human_correct;
        if (majority_vote(pool, test.meta.n_classes) == targets[i]) ++majority_correct;
    }
    double dn = static_cast<double>(n);
    return {
        {"ai", 1.0, 0.0, static_cast<double>(ai_correct) / dn},
        {"human", 0.0, 1.0, static_cast<double>(human_correct) / dn},
        {"majority", 0.0, static_cast<double>(test.meta.n_annotators),
         static_cast<double>(majority_correct) / dn},
    };
}

void emit_curve(const std::vector<CoveragePoint>& points, std::ostream& out) {
    if (points.empty()) throw config_error("cannot emit an empty curve");
    std::vector<CoveragePoint> sorted = points;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const CoveragePoint& a, const CoveragePoint& b) {
                         return a.coverage < b.coverage;
                     });
    out << "lambda,coverage,mean_cost,accuracy,accuracy_std,trials\n";
    for (const CoveragePoint& p : sorted) {
        out << format_double(p.lambda) << ',' << format_double(p.coverage) << ','
            << format_double(p.mean_cost) << ',' << format_double(p.accuracy) << ','
            << format_double(p.accuracy_std) << ',' << p.trials << "\n";
    }
    if (!out) throw io_error("failed while writing the curve");
}

void emit_curve(const std::vector<CoveragePoint>& points, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    try {
        emit_curve(points, out);
    } catch (const io_error&) {
        throw io_error("failed while writing '" + path + "'");
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

std::string read_line(std::istream& in) {
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

}  // namespace

std::vector<CoveragePoint> load_curve(std::istream& in) {
    std::string header = read_line(in);
    if (header != "lambda,coverage,mean_cost,accuracy,accuracy_std,trials") {
        throw parse_error("unexpected curve header: '" + header + "'");
    }
    std::vector<CoveragePoint> points;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != 6) {
            throw parse_error("curve line " + std::to_string(line_no) + ": expected 6 fields");
        }
        std::string where = "curve line " + std::to_string(line_no);
        CoveragePoint p;
        p.lambda = parse_double(fields[0], where);
        p.coverage = parse_double(fields[1], where);
        p.mean_cost = parse_double(fields[2], where);
        p.accuracy = parse_double(fields[3], where);
        p.accuracy_std = parse_double(fields[4], where);
        double trials = parse_double(fields[5], where);
        if (trials < 0 || trials != std::floor(trials)) {
            throw parse_error(where + ": trials must be a non-negative integer");
        }
        p.trials = static_cast<std::size_t>(trials);
        points.push_back(p);
    }
    return points;
}

std::vector<CoveragePoint> load_curve(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "' for reading");
    return load_curve(in);
}

void emit_baselines(const std::vector<BaselineRow>& rows, std::ostream& out) {
    if (rows.empty()) throw config_error("cannot emit an empty baseline table");
    out << "name,coverage,cost,accuracy\n";
    for (const BaselineRow& row : rows) {
        if (row.name.find(',') != std::string::npos || row.name.empty()) {
            throw contract_error("baseline name '" + row.name + "' is not a CSV token");
        }
        out << row.name << ',' << format_double(row.coverage) << ',' << format_double(row.cost)
            << ',' << format_double(row.accuracy) << "\n";
    }
    if (!out) throw io_error("failed while writing the baseline table");
}

void emit_baselines(const std::vector<BaselineRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    try {
        emit_baselines(rows, out);
    } catch (const io_error&) {
        throw io_error("failed while writing '" + path + "'");
    }
}

std::vector<BaselineRow> load_baselines(std::istream& in) {
    std::string header = read_line(in);
    if (header != "name,coverage,cost,accuracy") {
        throw parse_error("unexpected baseline header: '" + header + "'");
    }
    std::vector<BaselineRow> rows;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != 4) {
            throw parse_error("baseline line " + std::to_string(line_no) +
                              ": expected 4 fields");
        }
        std::string where = "baseline line " + std::to_string(line_no);
        BaselineRow row;
        row.name = fields[0];
        row.coverage = parse_double(fields[1], where);
        row.cost = parse_double(fields[2], where);
        row.accuracy = parse_double(fields[3], where);
        rows.push_back(row);
    }
    return rows;
}

std::vector<BaselineRow> load_baselines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "' for reading");
    return load_baselines(in);
}

void emit_predictions(const std::vector<PredictionRecord>& records, std::ostream& out) {
    out << "index,predicted,chosen_k,correct\n";
    for (const PredictionRecord& r : records) {
        out << r.index << ',' << r.predicted << ',' << r.chosen_k << ','
            << (r.correct ? 1 : 0) << "\n";
    }
    if (!out) throw io_error("failed while writing the prediction table");
}

void emit_predictions(const std::vector<PredictionRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    try {
        emit_predictions(records, out);
    } catch (const io_error&) {
        throw io_error("failed while writing '" + path + "'");
    }
}

std::vector<PredictionRecord> load_predictions(std::istream& in) {
    std::string header = read_line(in);
    if (header != "index,predicted,chosen_k,correct") {
        throw parse_error("unexpected prediction header: '" + header + "'");
    }
    std::vector<PredictionRecord> records;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != 4) {
            throw parse_error("prediction line " + std::to_string(line_no) +
                              ": expected 4 fields");
        }
        std::string where = "prediction line " + std::to_string(line_no);
        auto integer = [&](const std::string& text) {
            double v = parse_double(text, where);
            if (v < 0 || v != std::floor(v)) {
                throw parse_error(where + ": expected a non-negative integer, got '" + text +
                                  "'");
            }
            return v;
        };
        PredictionRecord r;
        r.index = static_cast<std::size_t>(integer(fields[0]));
        r.predicted = static_cast<int>(integer(fields[1]));
        r.chosen_k = static_cast<std::size_t>(integer(fields[2]));
        double correct = integer(fields[3]);
        if (correct != 0.0 && correct != 1.0) {
            throw parse_error(where + ": correct must be 0 or 1");
        }
        r.correct = correct == 1.0;
        records.push_back(r);
    }
    return records;
}

std::vector<PredictionRecord> load_predictions(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "' for reading");
    return load_predictions(in);
}

namespace {

// Ranks with ties averaged, 1-based.
std::vector<double> tie_averaged_ranks(const std::vector<double>& v) {
    std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        double shared = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw shape_error("spearman needs vectors of equal length");
    if (x.size() < 2) throw config_error("spearman needs at least two observations");
    std::vector<double> rx = tie_averaged_ranks(x);
    std::vector<double> ry = tie_averaged_ranks(y);
    double mx = mean(rx), my = mean(ry);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = rx[i] - mx;
        double dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw numeric_error("spearman is undefined when one input is constant");
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace lecomh
