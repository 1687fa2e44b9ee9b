#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <sstream>

#include "doctest.h"
#include "lecomh/errors.hpp"
#include "lecomh/pretrain.hpp"

using namespace lecomh;

namespace {

std::string weights_text(const Classifier& clf) {
    std::ostringstream out;
    save_mlp(clf.net, out);
    return out.str();
}

Dataset noisy_blob_train(double diagonal, std::uint64_t seed, std::size_t n = 2000,
                         double separation = 3.0) {
    BlobData blobs = gen_blobs(4, 8, n, 10, separation, seed);
    return annotate(blobs.train, {confusion_annotator(diagonal_confusion(4, diagonal))},
                    mix_seed(seed, 1));
}

PretrainConfig small_config() {
    PretrainConfig cfg;
    cfg.opt.epochs = 25;
    cfg.opt.batch_size = 64;
    cfg.hidden_sizes = {32};
    return cfg;
}

}  // namespace

TEST_CASE("config validation rejects out-of-range settings") {
    PretrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    PretrainConfig bad = cfg;
    bad.small_loss_keep_ratio = 0.0;
    CHECK_THROWS_AS(bad.validate(), config_error);
    bad = cfg;
    bad.small_loss_keep_ratio = 1.5;
    CHECK_THROWS_AS(bad.validate(), config_error);
    bad = cfg;
    bad.warmup_epochs = bad.opt.epochs + 1;
    CHECK_THROWS_AS(bad.validate(), config_error);
    bad = cfg;
    bad.warmup_epochs = bad.opt.epochs;  // selection never activates: allowed
    CHECK_NOTHROW(bad.validate());
    bad = cfg;
    bad.hidden_sizes = {};
    CHECK_THROWS_AS(bad.validate(), config_error);
    bad = cfg;
    bad.holdout_fraction = 0.0;
    CHECK_THROWS_AS(bad.validate(), config_error);
}

TEST_CASE("clean labels on separable blobs train to near-perfect accuracy") {
    BlobData blobs = gen_blobs(4, 8, 2000, 1000, 10.0, 3);
    Dataset annotated =
        annotate(blobs.train, {confusion_annotator(diagonal_confusion(4, 1.0))}, 11);
    Classifier clf = pretrain_classifier(annotated, small_config(), 5);
    CHECK(evaluate_classifier(clf, blobs.test) > 0.99);
}

TEST_CASE("training is deterministic: identical weight files per seed") {
    Dataset train = noisy_blob_train(0.8, 21, 600);
    PretrainConfig cfg = small_config();
    cfg.opt.epochs = 8;
    Classifier a = pretrain_classifier(train, cfg, 77);
    Classifier b = pretrain_classifier(train, cfg, 77);
    CHECK(weights_text(a) == weights_text(b));
    Classifier c = pretrain_classifier(train, cfg, 78);
    CHECK(weights_text(a) != weights_text(c));
}

TEST_CASE("keep_ratio 1.0 and warmup=epochs both disable selection identically") {
    Dataset train = noisy_blob_train(0.75, 33, 600);
    PretrainConfig plain = small_config();
    plain.opt.epochs = 8;
    plain.small_loss_keep_ratio = 1.0;
    plain.warmup_epochs = 0;

    PretrainConfig warm = plain;
    warm.warmup_epochs = plain.opt.epochs;

    PretrainConfig never_active = plain;
    never_active.small_loss_keep_ratio = 0.7;
    never_active.warmup_epochs = plain.opt.epochs;  // ratio present, never reached

    std::string w_plain = weights_text(pretrain_classifier(train, plain, 9));
    CHECK(w_plain == weights_text(pretrain_classifier(train, warm, 9)));
    CHECK(w_plain == weights_text(pretrain_classifier(train, never_active, 9)));
}

TEST_CASE("small-loss selection does not hurt under 30% symmetric noise") {
    BlobData blobs = gen_blobs(4, 8, 3000, 1500, 2.5, 13);
    Dataset annotated =
        annotate(blobs.train, {confusion_annotator(diagonal_confusion(4, 0.7))}, 29);
    PretrainConfig plain = small_config();
    plain.opt.epochs = 30;
    PretrainConfig selective = plain;
    selective.small_loss_keep_ratio = 0.7;
    selective.warmup_epochs = 5;
    double acc_plain = evaluate_classifier(pretrain_classifier(annotated, plain, 4), blobs.test);
    double acc_selective =
        evaluate_classifier(pretrain_classifier(annotated, selective, 4), blobs.test);
    INFO("plain=", acc_plain, " selective=", acc_selective);
    CHECK(acc_selective >= acc_plain);
}

TEST_CASE("divergence is reported with the epoch index") {
    Dataset train = noisy_blob_train(0.9, 41, 200);
    PretrainConfig cfg = small_config();
    cfg.opt.epochs = 5;
    cfg.opt.learning_rate = 1e18;
    try {
        pretrain_classifier(train, cfg, 1);
        FAIL("expected a numeric error");
    } catch (const numeric_error& e) {
        CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
}

TEST_CASE("pretraining requires annotations") {
    BlobData blobs = gen_blobs(3, 4, 50, 10, 2.0, 55);
    CHECK_THROWS_AS(pretrain_classifier(blobs.train, small_config(), 1), state_error);
}

TEST_CASE("evaluate_classifier: oracle, untrained-net, and error cases") {
    // oracle lookup: features are the one-hot truth, identity net reads it off
    Dataset d;
    d.meta.n_classes = 3;
    d.meta.feature_dim = 3;
    for (int i = 0; i < 9; ++i) {
        MultiRaterExample ex;
        ex.features = {0.0, 0.0, 0.0};
        ex.features[static_cast<std::size_t>(i % 3)] = 1.0;
        ex.ground_truth = i % 3;
        d.examples.push_back(ex);
    }
    Classifier oracle;
    oracle.net = make_zero_mlp({3, 3});
    for (std::size_t i = 0; i < 3; ++i) oracle.net.weights[0](i, i) = 1.0;
    oracle.meta = d.meta;
    CHECK(evaluate_classifier(oracle, d) == 1.0);

    // zero-weight net: every row ties, argmax resolves to class 0, so
    // accuracy equals the class-0 frequency (exactly 1/4 on balanced data)
    BlobData blobs = gen_blobs(4, 6, 10, 2000, 2.0, 66);
    Classifier zero;
    zero.net = make_zero_mlp({6, 4});
    zero.meta = blobs.test.meta;
    double acc = evaluate_classifier(zero, blobs.test);
    CHECK(acc == doctest::Approx(0.25).epsilon(1e-12));

    Dataset no_gt = d;
    no_gt.examples[0].ground_truth.reset();
    CHECK_THROWS_AS(evaluate_classifier(oracle, no_gt), state_error);
}

TEST_CASE("classifier save/load round trip with the sidecar") {
    Dataset train = noisy_blob_train(0.85, 70, 300);
    PretrainConfig cfg = small_config();
    cfg.opt.epochs = 4;
    Classifier clf = pretrain_classifier(train, cfg, 12);
    std::string path = "pretrain_roundtrip_tmp.weights";
    save_classifier(clf, path, 0xabcdef12);
    Classifier back = load_classifier(path);
    CHECK(weights_text(back) == weights_text(clf));
    CHECK(back.meta.n_classes == clf.meta.n_classes);
    CHECK(back.meta.feature_dim == clf.meta.feature_dim);
    CHECK(back.meta.seed == clf.meta.seed);
    std::remove(path.c_str());
    std::remove((path + ".meta").c_str());
    CHECK_THROWS_AS(load_classifier("no_such_file.weights"), io_error);
}
