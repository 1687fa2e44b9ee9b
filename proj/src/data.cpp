#include "lecomh/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "lecomh/errors.hpp"
#include "lecomh/mlp.hpp"

namespace lecomh {

void DatasetMeta::validate() const {
    if (n_classes < 2) throw config_error("dataset needs at least two classes");
    if (feature_dim == 0) throw config_error("dataset feature dimension must be positive");
    // n_annotators may be zero before annotation.
}

void Dataset::validate() const {
    meta.validate();
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const MultiRaterExample& ex = examples[i];
        if (ex.features.size() != meta.feature_dim) {
            throw contract_error("example " + std::to_string(i) + " has " +
                                 std::to_string(ex.features.size()) + " features, expected " +
                                 std::to_string(meta.feature_dim));
        }
        if (!all_finite(ex.features)) {
            throw contract_error("example " + std::to_string(i) + " has non-finite features");
        }
        if (ex.annotations.size() != meta.n_annotators) {
            throw contract_error("example " + std::to_string(i) + " has " +
                                 std::to_string(ex.annotations.size()) +
                                 " annotations, expected " + std::to_string(meta.n_annotators));
        }
        for (int a : ex.annotations) {
            if (a < 0 || static_cast<std::size_t>(a) >= meta.n_classes) {
                throw contract_error("example " + std::to_string(i) +
                                     " has an out-of-range annotation " + std::to_string(a));
            }
        }
        if (ex.ground_truth &&
            (*ex.ground_truth < 0 ||
             static_cast<std::size_t>(*ex.ground_truth) >= meta.n_classes)) {
            throw contract_error("example " + std::to_string(i) +
                                 " has an out-of-range ground truth");
        }
    }
}

bool Dataset::has_ground_truth() const {
    return std::all_of(examples.begin(), examples.end(),
                       [](const MultiRaterExample& ex) { return ex.ground_truth.has_value(); });
}

void AnnotatorSpec::validate(std::size_t n_classes) const {
    if (kind == AnnotatorKind::confusion_matrix) {
        if (!confusion) throw config_error("confusion-matrix annotator lacks its matrix");
        if (idn_rate) throw config_error("confusion-matrix annotator must not set an IDN rate");
        if (confusion->rows != n_classes || confusion->cols != n_classes) {
            throw config_error("confusion matrix must be " + std::to_string(n_classes) + "x" +
                               std::to_string(n_classes));
        }
        for (std::size_t r = 0; r < confusion->rows; ++r) {
            double sum = 0.0;
            for (std::size_t c = 0; c < confusion->cols; ++c) {
                double v = (*confusion)(r, c);
                if (v < 0.0) throw config_error("confusion matrix has a negative entry");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-9) {
                throw config_error("confusion matrix row " + std::to_string(r) +
                                   " sums to " + format_double(sum) + ", expected 1");
            }
        }
    } else {
        if (confusion) throw config_error("instance-dependent annotator must not set a matrix");
        if (!idn_rate) throw config_error("instance-dependent annotator lacks its rate");
        if (*idn_rate < 0.0 || *idn_rate >= 1.0) {
            throw config_error("IDN rate must lie in [0, 1)");
        }
    }
}

AnnotatorSpec confusion_annotator(Matrix confusion) {
    AnnotatorSpec spec;
    spec.kind = AnnotatorKind::confusion_matrix;
    spec.confusion = std::move(confusion);
    return spec;
}

AnnotatorSpec idn_annotator(double rate, std::uint64_t projection_seed) {
    AnnotatorSpec spec;
    spec.kind = AnnotatorKind::instance_dependent;
    spec.idn_rate = rate;
    spec.idn_projection_seed = projection_seed;
    return spec;
}

Matrix diagonal_confusion(std::size_t n_classes, double diagonal) {
    if (n_classes < 2) throw config_error("confusion matrix needs at least two classes");
    if (diagonal < 0.0 || diagonal > 1.0) {
        throw config_error("confusion diagonal must lie in [0, 1]");
    }
    double off = (1.0 - diagonal) / static_cast<double>(n_classes - 1);
    Matrix m(n_classes, n_classes, off);
    for (std::size_t i = 0; i < n_classes; ++i) m(i, i) = diagonal;
    return m;
}

Matrix uniform_confusion(std::size_t n_classes) {
    if (n_classes < 2) throw config_error("confusion matrix needs at least two classes");
    return Matrix(n_classes, n_classes, 1.0 / static_cast<double>(n_classes));
}

namespace {

std::vector<double> random_unit_vector(std::size_t dim, Rng& rng) {
    std::vector<double> v(dim);
    double norm = 0.0;
    // A fresh draw on a zero vector is astronomically unlikely but cheap to
    // guard against.
    do {
        norm = 0.0;
        for (double& x : v) {
            x = rng.normal();
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

Dataset sample_blob_split(std::size_t n, const Matrix& centroids, DatasetMeta meta, Rng& rng) {
    Dataset out;
    out.meta = meta;
    out.examples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        MultiRaterExample ex;
        std::size_t cls = i % meta.n_classes;  // balanced within one example
        ex.features.resize(meta.feature_dim);
        for (std::size_t d = 0; d < meta.feature_dim; ++d) {
            ex.features[d] = centroids(cls, d) + rng.normal();
        }
        ex.ground_truth = static_cast<int>(cls);
        out.examples.push_back(std::move(ex));
    }
    return out;
}

}  // namespace

BlobData gen_blobs(std::size_t n_classes, std::size_t dim, std::size_t n_train,
                   std::size_t n_test, double class_separation, std::uint64_t seed) {
    if (n_classes < 2) throw config_error("gen_blobs: need at least two classes");
    if (dim < 2) throw config_error("gen_blobs: need feature dimension of at least two");
    if (!(class_separation > 0.0)) {
        throw config_error("gen_blobs: class separation must be positive");
    }
    Rng rng(seed);
    BlobData out;
    out.centroids = Matrix(n_classes, dim);
    for (std::size_t k = 0; k < n_classes; ++k) {
        std::vector<double> dir = random_unit_vector(dim, rng);
        for (std::size_t d = 0; d < dim; ++d) out.centroids(k, d) = class_separation * dir[d];
    }
    DatasetMeta meta;
    meta.n_classes = n_classes;
    meta.feature_dim = dim;
    meta.seed = seed;
    out.train = sample_blob_split(n_train, out.centroids, meta, rng);
    out.test = sample_blob_split(n_test, out.centroids, meta, rng);
    return out;
}

namespace {

int sample_from_row(const Matrix& confusion, int truth, Rng& rng) {
    double u = rng.uniform();
    double acc = 0.0;
    const double* row = confusion.row(static_cast<std::size_t>(truth));
    for (std::size_t c = 0; c < confusion.cols; ++c) {
        acc += row[c];
        if (u < acc) return static_cast<int>(c);
    }
    return static_cast<int>(confusion.cols - 1);  // guard against rounding in the row sum
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<int> annotate_one(const Dataset& dataset, const AnnotatorSpec& spec, Rng& rng) {
    std::size_t n = dataset.size();
    std::vector<int> labels(n);
    std::size_t n_classes = dataset.meta.n_classes;
    if (spec.kind == AnnotatorKind::confusion_matrix) {
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = sample_from_row(*spec.confusion, *dataset.examples[i].ground_truth, rng);
        }
        return labels;
    }
    // Instance-dependent noise: flip probability 2*rate*sigmoid(w.x),
    // rescaled so the dataset-mean flip rate equals the configured rate.
    Rng proj_rng(spec.idn_projection_seed);
    std::vector<double> w = random_unit_vector(dataset.meta.feature_dim, proj_rng);
    std::vector<double> raw(n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        raw[i] = 2.0 * sigmoid(dot(w, dataset.examples[i].features));
        mean += raw[i];
    }
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        double p = std::min(1.0, *spec.idn_rate * raw[i] / mean);
        int truth = *dataset.examples[i].ground_truth;
        if (rng.uniform() < p) {
            std::size_t k = rng.below(n_classes - 1);
            labels[i] = static_cast<int>(k) + (static_cast<int>(k) >= truth ? 1 : 0);
        } else {
            labels[i] = truth;
        }
    }
    return labels;
}

}  // namespace

Dataset annotate(const Dataset& dataset, const std::vector<AnnotatorSpec>& specs,
                 std::uint64_t seed) {
    if (specs.empty()) throw config_error("annotate: need at least one annotator");
    if (!dataset.has_ground_truth()) {
        throw state_error("annotate: dataset lacks ground truth");
    }
    for (const AnnotatorSpec& spec : specs) spec.validate(dataset.meta.n_classes);
    Dataset out = dataset;
    out.meta.n_annotators = specs.size();
    for (MultiRaterExample& ex : out.examples) {
        ex.annotations.assign(specs.size(), 0);
    }
    for (std::size_t j = 0; j < specs.size(); ++j) {
        Rng rng(mix_seed(seed, j));
        std::vector<int> labels = annotate_one(dataset, specs[j], rng);
        for (std::size_t i = 0; i < out.size(); ++i) out.examples[i].annotations[j] = labels[i];
    }
    return out;
}

std::vector<double> annotator_accuracy(const Dataset& dataset) {
    if (!dataset.has_ground_truth()) {
        throw state_error("annotator_accuracy: dataset lacks ground truth");
    }
    if (dataset.size() == 0) throw state_error("annotator_accuracy: empty dataset");
    std::vector<double> acc(dataset.meta.n_annotators, 0.0);
    for (const MultiRaterExample& ex : dataset.examples) {
        for (std::size_t j = 0; j < acc.size(); ++j) {
            if (ex.annotations[j] == *ex.ground_truth) acc[j] += 1.0;
        }
    }
    for (double& a : acc) a /= static_cast<double>(dataset.size());
    return acc;
}

int sample_noisy_label(const MultiRaterExample& example, Rng& rng) {
    if (example.annotations.empty()) {
        throw state_error("sample_noisy_label: example has no annotations");
    }
    return example.annotations[rng.below(example.annotations.size())];
}

int sample_noisy_label(const MultiRaterExample& example, std::uint64_t seed) {
    Rng rng(seed);
    return sample_noisy_label(example, rng);
}

namespace {

std::string column_header(const DatasetMeta& meta) {
    std::string h;
    for (std::size_t d = 0; d < meta.feature_dim; ++d) {
        h += "f" + std::to_string(d) + ",";
    }
    for (std::size_t j = 0; j < meta.n_annotators; ++j) {
        h += "a" + std::to_string(j) + ",";
    }
    h += "gt";
    return h;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

int parse_class_index(const std::string& text, std::size_t n_classes, const std::string& where) {
    std::size_t consumed = 0;
    long v = 0;
    try {
        v = std::stol(text, &consumed);
    } catch (const std::exception&) {
        throw parse_error(where + ": not an integer: '" + text + "'");
    }
    if (consumed != text.size()) throw parse_error(where + ": not an integer: '" + text + "'");
    if (v < 0 || static_cast<std::size_t>(v) >= n_classes) {
        throw parse_error(where + ": class index " + std::to_string(v) + " out of range [0, " +
                          std::to_string(n_classes) + ")");
    }
    return static_cast<int>(v);
}

}  // namespace

void save_csv(const Dataset& dataset, std::ostream& out) {
    dataset.validate();
    out << "# mrdata v1 classes=" << dataset.meta.n_classes
        << " annotators=" << dataset.meta.n_annotators << " dim=" << dataset.meta.feature_dim
        << "\n";
    out << column_header(dataset.meta) << "\n";
    for (const MultiRaterExample& ex : dataset.examples) {
        for (double f : ex.features) out << format_double(f) << ',';
        for (int a : ex.annotations) out << a << ',';
        if (ex.ground_truth) out << *ex.ground_truth;
        out << "\n";
    }
    if (!out) throw io_error("failed while writing dataset CSV");
}

void save_csv(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // binary: keep LF endings everywhere
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    save_csv(dataset, out);
}

Dataset load_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw parse_error("line 1: dataset file is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    Dataset out;
    {
        auto kv = [&line](const std::string& key) -> long long {
            std::string needle = key + "=";
            std::size_t pos = line.find(needle);
            if (pos == std::string::npos) {
                throw parse_error("line 1: header lacks '" + key + "='");
            }
            std::size_t start = pos + needle.size();
            std::size_t end = line.find(' ', start);
            std::string text = line.substr(start, end == std::string::npos ? end : end - start);
            try {
                std::size_t consumed = 0;
                long long v = std::stoll(text, &consumed);
                if (consumed != text.size()) throw std::invalid_argument(text);
                return v;
            } catch (const std::exception&) {
                throw parse_error("line 1: bad value for '" + key + "': '" + text + "'");
            }
        };
        if (line.rfind("# mrdata v1 ", 0) != 0) {
            throw parse_error("line 1: expected header '# mrdata v1 ...', got '" + line + "'");
        }
        long long c = kv("classes"), m = kv("annotators"), d = kv("dim");
        if (c < 2 || m < 0 || d < 1) throw parse_error("line 1: header values out of range");
        out.meta.n_classes = static_cast<std::size_t>(c);
        out.meta.n_annotators = static_cast<std::size_t>(m);
        out.meta.feature_dim = static_cast<std::size_t>(d);
    }
    if (!std::getline(in, line)) throw parse_error("line 2: missing column header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != column_header(out.meta)) {
        throw parse_error("line 2: column header does not match the declared shape");
    }
    std::size_t expected_fields = out.meta.feature_dim + out.meta.n_annotators + 1;
    std::size_t line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;  // tolerate a trailing newline
        std::vector<std::string> fields = split_fields(line);
        std::string where = "line " + std::to_string(line_no);
        if (fields.size() != expected_fields) {
            throw parse_error(where + ": expected " + std::to_string(expected_fields) +
                              " fields, got " + std::to_string(fields.size()));
        }
        MultiRaterExample ex;
        ex.features.reserve(out.meta.feature_dim);
        for (std::size_t d = 0; d < out.meta.feature_dim; ++d) {
            double v = parse_double(fields[d], where);
            if (!std::isfinite(v)) throw parse_error(where + ": non-finite feature");
            ex.features.push_back(v);
        }
        for (std::size_t j = 0; j < out.meta.n_annotators; ++j) {
            ex.annotations.push_back(
                parse_class_index(fields[out.meta.feature_dim + j], out.meta.n_classes, where));
        }
        const std::string& gt = fields.back();
        if (!gt.empty()) {
            ex.ground_truth = parse_class_index(gt, out.meta.n_classes, where);
        }
        out.examples.push_back(std::move(ex));
    }
    return out;
}

Dataset load_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "' for reading");
    return load_csv(in);
}

}  // namespace lecomh
