#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lecomh/matrix.hpp"
#include "lecomh/rng.hpp"

namespace lecomh {

// One observation: features, M annotator labels, and (when known) the truth.
struct MultiRaterExample {
    std::vector<double> features;
    std::vector<int> annotations;
    std::optional<int> ground_truth;
};

struct DatasetMeta {
    std::size_t n_classes = 0;
    std::size_t n_annotators = 0;  // zero until annotate() runs
    std::size_t feature_dim = 0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Dataset {
    DatasetMeta meta;
    std::vector<MultiRaterExample> examples;

    std::size_t size() const { return examples.size(); }
    void validate() const;  // meta consistent with every record
    bool has_ground_truth() const;
};

enum class AnnotatorKind { confusion_matrix, instance_dependent };

// A simulated rater: either a fixed label-transition matrix applied to the
// true class, or instance-dependent noise whose flip probability follows a
// fixed random projection of the features.
struct AnnotatorSpec {
    AnnotatorKind kind = AnnotatorKind::confusion_matrix;
    std::optional<Matrix> confusion;             // confusion_matrix only
    std::optional<double> idn_rate;              // instance_dependent only
    std::uint64_t idn_projection_seed = 0;       // instance_dependent only

    void validate(std::size_t n_classes) const;
};

AnnotatorSpec confusion_annotator(Matrix confusion);
AnnotatorSpec idn_annotator(double rate, std::uint64_t projection_seed);

// Row-stochastic helpers: diagonal p with the remainder spread uniformly off
// the diagonal, and the fully uninformative uniform matrix.
Matrix diagonal_confusion(std::size_t n_classes, double diagonal);
Matrix uniform_confusion(std::size_t n_classes);

// Synthetic classification data: one isotropic unit-variance Gaussian blob
// per class, centroids at class_separation times random unit directions.
struct BlobData {
    Dataset train;
    Dataset test;
    Matrix centroids;  // n_classes x dim, exposes the generative model
};

BlobData gen_blobs(std::size_t n_classes, std::size_t dim, std::size_t n_train,
                   std::size_t n_test, double class_separation, std::uint64_t seed);

// Simulate every annotator over the whole dataset. Deterministic per
// (dataset, specs, seed); annotator j consumes its own derived stream.
Dataset annotate(const Dataset& dataset, const std::vector<AnnotatorSpec>& specs,
                 std::uint64_t seed);

// Fraction of annotations matching ground truth, per annotator.
std::vector<double> annotator_accuracy(const Dataset& dataset);

// Uniform draw among the example's annotations.
int sample_noisy_label(const MultiRaterExample& example, Rng& rng);
int sample_noisy_label(const MultiRaterExample& example, std::uint64_t seed);

// CSV round trip. Header: "# mrdata v1 classes=<C> annotators=<M> dim=<d>",
// then "f0,...,f<d-1>,a0,...,a<M-1>,gt"; gt may be empty per row.
void save_csv(const Dataset& dataset, std::ostream& out);
void save_csv(const Dataset& dataset, const std::string& path);
Dataset load_csv(std::istream& in);
Dataset load_csv(const std::string& path);

}  // namespace lecomh
