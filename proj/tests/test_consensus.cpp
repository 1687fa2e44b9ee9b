#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "lecomh/consensus.hpp"
#include "lecomh/errors.hpp"
#include "lecomh/rng.hpp"

using namespace lecomh;

namespace {

std::vector<double> random_simplex(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    double sum = 0.0;
    for (double& x : v) {
        x = -std::log(1.0 - rng.uniform());
        sum += x;
    }
    for (double& x : v) x /= sum;
    return v;
}

Dataset dataset_from_annotations(const std::vector<std::vector<int>>& annotations,
                                 std::size_t n_classes) {
    Dataset d;
    d.meta.n_classes = n_classes;
    d.meta.feature_dim = 2;
    d.meta.n_annotators = annotations.empty() ? 0 : annotations.front().size();
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        MultiRaterExample ex;
        ex.features = {static_cast<double>(i), 1.0};
        ex.annotations = annotations[i];
        ex.ground_truth = annotations[i].front();
        d.examples.push_back(ex);
    }
    return d;
}

Matrix uniform_probs(std::size_t rows, std::size_t n_classes) {
    return Matrix(rows, n_classes, 1.0 / static_cast<double>(n_classes));
}

}  // namespace

TEST_CASE("majority_vote: strict majority and both tie rules") {
    CHECK(majority_vote({1, 1, 2}, 3) == 1);
    CHECK(majority_vote({2, 0}, 3) == 0);  // no tiebreak: lowest index
    CHECK(majority_vote({2, 0}, 3, {0.1, 0.2, 0.7}) == 2);
    CHECK(majority_vote({2, 0}, 3, {0.5, 0.2, 0.3}) == 0);
    // tiebreak probability of a non-tied label must not matter
    CHECK(majority_vote({1, 1, 2}, 3, {0.9, 0.05, 0.05}) == 1);
    CHECK_THROWS_AS(majority_vote({}, 3), state_error);
    CHECK_THROWS_AS(majority_vote({5}, 3), contract_error);
    CHECK_THROWS_AS(majority_vote({0}, 3, {0.5, 0.5}), shape_error);
}

TEST_CASE("weighted_consensus: unanimous, degenerate, and arithmetic cases") {
    // unanimous annotators with a fully agreeing (one-hot) classifier
    ConsensusRecord unanimous =
        weighted_consensus({0.0, 1.0, 0.0}, {1, 1, 1}, {0.5, 1.0, 0.25}, 2.0);
    CHECK(unanimous.label == 1);
    CHECK(unanimous.quality == doctest::Approx(1.0).epsilon(1e-12));

    // classifier weight zero, equal annotator weights: majority vote with
    // plurality-fraction quality
    ConsensusRecord degen = weighted_consensus({0.2, 0.3, 0.5}, {2, 2, 0}, {1.0, 1.0, 1.0}, 0.0);
    CHECK(degen.label == 2);
    CHECK(degen.quality == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    // hand-computed blend: s = (2*[0.6,0.4] + [0,2]) / 4 = [0.3, 0.7]
    ConsensusRecord blend = weighted_consensus({0.6, 0.4}, {1, 1}, {1.0, 1.0}, 2.0);
    CHECK(blend.label == 1);
    CHECK(blend.quality == doctest::Approx(0.7).epsilon(1e-12));

    CHECK_THROWS_AS(weighted_consensus({0.5, 0.5}, {0}, {0.0}, 0.0), config_error);
    CHECK_THROWS_AS(weighted_consensus({0.5, 0.5}, {0}, {-1.0}, 1.0), config_error);
    CHECK_THROWS_AS(weighted_consensus({0.5, 0.5}, {0, 1}, {1.0}, 1.0), shape_error);
}

TEST_CASE("weighted_consensus: label invariant to positive weight rescaling") {
    Rng rng(19);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n_classes = 2 + rng.below(3);
        std::size_t m = 1 + rng.below(4);
        std::vector<double> probs = random_simplex(n_classes, rng);
        std::vector<int> ann;
        std::vector<double> weights;
        for (std::size_t j = 0; j < m; ++j) {
            ann.push_back(static_cast<int>(rng.below(n_classes)));
            weights.push_back(rng.uniform(0.1, 2.0));
        }
        double cw = rng.uniform(0.0, 2.0);
        ConsensusRecord a = weighted_consensus(probs, ann, weights, cw);
        double scale = rng.uniform(0.5, 10.0);
        std::vector<double> scaled = weights;
        for (double& w : scaled) w *= scale;
        ConsensusRecord b = weighted_consensus(probs, ann, scaled, cw * scale);
        CHECK(a.label == b.label);
        CHECK(a.quality == doctest::Approx(b.quality).epsilon(1e-9));
        // quality is the normalized winning score: in (1/C, 1] for these
        // continuous draws, 1/C only at exact uniformity (measure zero)
        CHECK(a.quality > 1.0 / static_cast<double>(n_classes));
        CHECK(a.quality <= 1.0 + 1e-12);
    }
}

TEST_CASE("weighted_consensus quality can sit exactly at the uniform floor") {
    // fully symmetric input: score is uniform, quality = 1/C, label = argmax
    // of the tiebreak (the classifier's preference)
    ConsensusRecord rec = weighted_consensus({0.5, 0.5}, {0, 1}, {1.0, 1.0}, 0.0);
    CHECK(rec.quality == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(rec.label == 0);
    ConsensusRecord rec2 = weighted_consensus({0.4, 0.6}, {0, 1}, {1.0, 1.0}, 0.0);
    CHECK(rec2.label == 1);  // tie broken toward the classifier's preference
}

TEST_CASE("weighted_consensus with zero classifier weight matches majority_vote exhaustively") {
    Rng rng(23);
    for (std::size_t n_classes = 2; n_classes <= 4; ++n_classes) {
        for (std::size_t m = 1; m <= 3; ++m) {
            std::size_t combos = 1;
            for (std::size_t j = 0; j < m; ++j) combos *= n_classes;
            for (std::size_t code = 0; code < combos; ++code) {
                std::vector<int> ann;
                std::size_t rest = code;
                for (std::size_t j = 0; j < m; ++j) {
                    ann.push_back(static_cast<int>(rest % n_classes));
                    rest /= n_classes;
                }
                std::vector<double> weights(m, 1.0);
                for (int probe = 0; probe < 3; ++probe) {
                    std::vector<double> probs = random_simplex(n_classes, rng);
                    ConsensusRecord rec = weighted_consensus(probs, ann, weights, 0.0);
                    CHECK(rec.label == majority_vote(ann, n_classes, probs));
                }
            }
        }
    }
}

TEST_CASE("estimate_weights: perfect, chance, and hand-computed agreement") {
    // Two constant annotators pin the majority vote; the third is probed.
    std::vector<std::vector<int>> ann;
    for (int i = 0; i < 10; ++i) {
        int third = i < 8 ? 0 : 1;  // agrees with the vote 80% of the time
        ann.push_back({0, 0, third});
    }
    Dataset d = dataset_from_annotations(ann, 4);
    Matrix probs = uniform_probs(d.size(), 4);
    ConsensusWeights w = estimate_weights(d, probs);
    CHECK(w.annotator_weights[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.annotator_weights[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.annotator_weights[2] == doctest::Approx((0.8 - 0.25) / 0.75).epsilon(1e-12));
    // uniform classifier probabilities argmax to class 0 = the vote every time
    CHECK(w.classifier_weight == doctest::Approx(1.0).epsilon(1e-12));

    // chance-level agreement clamps to zero
    std::vector<std::vector<int>> chance;
    for (int i = 0; i < 8; ++i) {
        chance.push_back({0, 0, i % 4});  // 2/8 agreement = 1/4 = chance at C=4
    }
    Dataset dc = dataset_from_annotations(chance, 4);
    ConsensusWeights wc = estimate_weights(dc, uniform_probs(dc.size(), 4));
    CHECK(wc.annotator_weights[2] == doctest::Approx(0.0).epsilon(1e-12));

    // worse-than-chance agreement also clamps to zero
    std::vector<std::vector<int>> adversarial;
    for (int i = 0; i < 8; ++i) adversarial.push_back({0, 0, 1});
    Dataset da = dataset_from_annotations(adversarial, 4);
    ConsensusWeights wa = estimate_weights(da, uniform_probs(da.size(), 4));
    CHECK(wa.annotator_weights[2] == 0.0);
}

TEST_CASE("build_consensus: perfect agreement retains everything verbatim") {
    std::vector<std::vector<int>> ann;
    for (int i = 0; i < 12; ++i) ann.push_back({i % 3, i % 3, i % 3});
    Dataset d = dataset_from_annotations(ann, 3);
    // one-hot classifier matching the annotations
    Matrix probs(d.size(), 3);
    for (std::size_t i = 0; i < d.size(); ++i) probs(i, i % 3) = 1.0;
    ConsensusResult result = build_consensus(d, probs);
    CHECK(result.retention == 1.0);
    CHECK(result.dataset.size() == 12);
    for (std::size_t i = 0; i < result.dataset.size(); ++i) {
        CHECK(result.dataset.records[i].record.label == static_cast<int>(i % 3));
        CHECK(result.dataset.records[i].record.quality == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(consensus_accuracy(result.dataset) == 1.0);
}

TEST_CASE("build_consensus: a constant adversary is weighted out") {
    // two agreeing annotators vs one that always disagrees
    Rng rng(31);
    std::vector<std::vector<int>> ann;
    for (int i = 0; i < 40; ++i) {
        int truth = i % 3;
        int lie = (truth + 1 + static_cast<int>(rng.below(2))) % 3;
        ann.push_back({truth, truth, lie});
    }
    Dataset d = dataset_from_annotations(ann, 3);
    ConsensusResult result = build_consensus(d, uniform_probs(d.size(), 3));
    CHECK(result.weights.annotator_weights[2] == 0.0);
    CHECK(result.retention == 1.0);
    for (const ConsensusExample& rec : result.dataset.records) {
        CHECK(rec.record.label == rec.example.annotations[0]);
    }
}

TEST_CASE("build_consensus: fully symmetric input retains nothing and says so") {
    std::vector<std::vector<int>> ann;
    for (int i = 0; i < 6; ++i) ann.push_back(i % 2 == 0 ? std::vector<int>{0, 1}
                                                         : std::vector<int>{1, 0});
    Dataset d = dataset_from_annotations(ann, 2);
    try {
        build_consensus(d, uniform_probs(d.size(), 2));
        FAIL("expected a config error");
    } catch (const config_error& e) {
        CHECK(std::string(e.what()).find("threshold") != std::string::npos);
    }
}

TEST_CASE("build_consensus honours a nonzero threshold argument") {
    std::vector<std::vector<int>> ann;
    for (int i = 0; i < 9; ++i) ann.push_back({i % 3, i % 3, (i * 7) % 3});
    Dataset d = dataset_from_annotations(ann, 3);
    ConsensusResult strict = build_consensus(d, uniform_probs(d.size(), 3), 0.5);
    ConsensusResult loose = build_consensus(d, uniform_probs(d.size(), 3), 0.0);
    CHECK(loose.dataset.size() >= strict.dataset.size());
    CHECK(loose.dataset.size() == 9);
    CHECK_THROWS_AS(build_consensus(d, uniform_probs(d.size(), 3), 1.0), config_error);
}

TEST_CASE("consensus_accuracy endpoints") {
    ConsensusDataset ds;
    ds.meta.n_classes = 2;
    ds.meta.feature_dim = 1;
    MultiRaterExample ex;
    ex.features = {0.0};
    ex.ground_truth = 1;
    ds.records.push_back({ex, {1, 0.9}, 0});
    ds.records.push_back({ex, {1, 0.8}, 1});
    CHECK(consensus_accuracy(ds) == 1.0);
    ds.records[0].record.label = 0;
    ds.records[1].record.label = 0;
    CHECK(consensus_accuracy(ds) == 0.0);
    ConsensusDataset empty;
    CHECK_THROWS_AS(consensus_accuracy(empty), state_error);
}

TEST_CASE("consensus dataset validation enforces the quality bound") {
    ConsensusDataset ds;
    ds.meta.n_classes = 2;
    ds.meta.feature_dim = 1;
    MultiRaterExample ex;
    ex.features = {0.0};
    ds.records.push_back({ex, {1, 0.6}, 0});
    CHECK_NOTHROW(ds.validate());
    ds.records.push_back({ex, {0, 0.5}, 1});
    CHECK_THROWS_AS(ds.validate(), contract_error);
}

TEST_CASE("consensus CSV: round trip and retained-flag validation") {
    std::vector<std::vector<int>> ann;
    for (int i = 0; i < 10; ++i) ann.push_back({i % 3, i % 3, (i * 5 + 1) % 3});
    Dataset d = dataset_from_annotations(ann, 3);
    ConsensusResult result = build_consensus(d, uniform_probs(d.size(), 3));
    std::ostringstream out;
    save_consensus_csv(result, out);
    std::istringstream in(out.str());
    std::vector<ConsensusCsvRow> rows = load_consensus_csv(in);
    REQUIRE(rows.size() == 10);
    std::size_t retained = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].index == i);
        CHECK(rows[i].consensus_label == result.per_example[i].label);
        CHECK(rows[i].alpha == result.per_example[i].quality);  // bit-exact decimals
        if (rows[i].retained) ++retained;
    }
    CHECK(retained == result.dataset.size());

    std::istringstream bad("index,consensus_label,alpha,retained\n0,1,0.4,1\n");
    CHECK_THROWS_AS(load_consensus_csv(bad), parse_error);
    std::istringstream bad_header("idx,label\n");
    CHECK_THROWS_AS(load_consensus_csv(bad_header), parse_error);
    std::istringstream bad_flag("index,consensus_label,alpha,retained\n0,1,0.9,2\n");
    CHECK_THROWS_AS(load_consensus_csv(bad_flag), parse_error);
}

TEST_CASE("consensus_from_rows rebuilds the filtered dataset exactly") {
    // six unanimous rows (retained) and six rotating three-way splits whose
    // quality lands at exactly 1/3 (dropped)
    std::vector<std::vector<int>> ann;
    for (int i = 0; i < 6; ++i) ann.push_back({i % 3, i % 3, i % 3});
    for (int i = 0; i < 6; ++i) ann.push_back({i % 3, (i + 1) % 3, (i + 2) % 3});
    Dataset d = dataset_from_annotations(ann, 3);
    ConsensusResult result = build_consensus(d, uniform_probs(d.size(), 3));
    REQUIRE(result.dataset.size() > 0);
    REQUIRE(result.dataset.size() < d.size());

    std::ostringstream out;
    save_consensus_csv(result, out);
    std::istringstream in(out.str());
    ConsensusDataset rebuilt = consensus_from_rows(d, load_consensus_csv(in));

    REQUIRE(rebuilt.size() == result.dataset.size());
    CHECK(rebuilt.meta.n_classes == result.dataset.meta.n_classes);
    CHECK(rebuilt.quality_threshold == result.dataset.quality_threshold);
    for (std::size_t i = 0; i < rebuilt.size(); ++i) {
        const ConsensusExample& a = rebuilt.records[i];
        const ConsensusExample& b = result.dataset.records[i];
        CHECK(a.source_index == b.source_index);
        CHECK(a.record.label == b.record.label);
        CHECK(a.record.quality == b.record.quality);
        CHECK(a.example.annotations == b.example.annotations);
    }

    // row count must match the dataset the rows were cut from
    std::istringstream again(out.str());
    std::vector<ConsensusCsvRow> rows = load_consensus_csv(again);
    rows.pop_back();
    CHECK_THROWS_AS(consensus_from_rows(d, rows), config_error);
    // labels outside the class range are rejected
    std::istringstream once_more(out.str());
    rows = load_consensus_csv(once_more);
    rows[0].consensus_label = 3;
    CHECK_THROWS_AS(consensus_from_rows(d, rows), config_error);
}

TEST_CASE("benchmark blobs: consensus tracks or beats plain majority voting") {
    // annotators at roughly 80/90/70% accuracy on well-separated 4-class blobs
    BlobData blobs = gen_blobs(4, 16, 4000, 10, 3.0, 42);
    Dataset annotated = annotate(blobs.train,
                                 {confusion_annotator(diagonal_confusion(4, 0.8)),
                                  confusion_annotator(diagonal_confusion(4, 0.9)),
                                  confusion_annotator(diagonal_confusion(4, 0.7))},
                                 7);
    // a deliberately mediocre classifier stand-in: noisy one-hot of the truth
    Rng rng(5);
    Matrix probs(annotated.size(), 4);
    for (std::size_t i = 0; i < annotated.size(); ++i) {
        int truth = *annotated.examples[i].ground_truth;
        int pred = rng.uniform() < 0.85 ? truth : static_cast<int>(rng.below(4));
        for (std::size_t c = 0; c < 4; ++c) probs(i, c) = pred == static_cast<int>(c) ? 0.9 : 0.1 / 3.0;
    }
    ConsensusResult result = build_consensus(annotated, probs);

    std::size_t mv_hits = 0;
    for (const auto& ex : annotated.examples) {
        if (majority_vote(ex.annotations, 4) == *ex.ground_truth) ++mv_hits;
    }
    double mv_acc = static_cast<double>(mv_hits) / static_cast<double>(annotated.size());
    double cons_acc = consensus_accuracy(result.dataset);
    INFO("consensus=", cons_acc, " majority=", mv_acc, " retention=", result.retention);
    CHECK(cons_acc >= mv_acc - 0.01);
    CHECK(result.retention > 0.5);
}
