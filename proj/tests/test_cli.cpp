#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "lecomh/config.hpp"
#include "lecomh/consensus.hpp"
#include "lecomh/data.hpp"
#include "lecomh/errors.hpp"
#include "lecomh/eval.hpp"
#include "lecomh/runner.hpp"

using namespace lecomh;
namespace fs = std::filesystem;

namespace {

std::string scratch_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / "lecomh_cli_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(bool(out));
    out << text;
}

template <typename Fn>
std::string thrown_message(Fn&& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

// Small but complete experiment: 3 classes, 200/120 examples, 10 epochs,
// width-32 networks everywhere.
RunConfig smoke_config(const std::string& out) {
    RunConfig c;
    c.seed = 11;
    c.out = out;
    c.data_classes = 3;
    c.data_dim = 6;
    c.data_train = 200;
    c.data_test = 120;
    c.data_separation = 2.5;
    c.data_annotators = {"diag:0.85", "diag:0.9", "diag:0.75"};
    c.pretrain.opt.epochs = 10;
    c.pretrain.hidden_sizes = {32};
    c.lecomh.opt.epochs = 10;
    c.lecomh.selection_hidden = {32};
    c.lecomh.collab_hidden = {32};
    c.sweep_lambdas = {0.0, 1.0};
    c.sweep_trials = 1;
    return c;
}

// Every artifact a full pipeline writes, except the manifest itself.
const std::vector<std::string>& run_artifacts() {
    static const std::vector<std::string> names = {
        "config.txt",        "train.csv",
        "test.csv",          "classifier.weights",
        "classifier.weights.meta", "consensus.csv",
        "selection.weights", "collab.weights",
        "classifier_tuned.weights", "classifier_tuned.weights.meta",
        "training_log.csv",  "predictions.csv",
        "curve.csv",         "baselines.csv",
        "deferral.csv"};
    return names;
}

int spawn_cli(const std::string& args) {
    std::string cmd = std::string(CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config text: parsing quirks and the pinned canonical form") {
    std::string text =
        "# experiment configuration\r\n"
        "\n"
        "seed = 7   # inline comment\n"
        "  out =   runs-x\t\n"
        "data.classes = 3\n"
        "data.dim = 6\n"
        "data.train = 200\n"
        "data.test = 120\n"
        "data.separation = 2.5\n"
        "data.annotators = diag:0.85 diag:0.9 diag:0.75\n"
        "pretrain.epochs = 10\n"
        "pretrain.hidden = 32\n"
        "lecomh.epochs = 10\n"
        "lecomh.selection_hidden = 32\n"
        "lecomh.collab_hidden = 32\n"
        "sweep.lambdas = 0 1\n";
    RunConfig c = parse_config_text(text);
    CHECK(c.seed == 7);
    CHECK(c.out == "runs-x");
    CHECK(c.data_annotators.size() == 3);
    CHECK(c.pretrain.hidden_sizes == std::vector<std::size_t>{32});
    CHECK(c.sweep_lambdas == std::vector<double>{0.0, 1.0});
    CHECK_NOTHROW(c.validate());

    // unset keys serialize with their defaults; floats at 17 significant digits
    std::string canonical =
        "seed = 7\n"
        "out = runs-x\n"
        "data.classes = 3\n"
        "data.dim = 6\n"
        "data.train = 200\n"
        "data.test = 120\n"
        "data.separation = 2.5\n"
        "data.annotators = diag:0.85 diag:0.9 diag:0.75\n"
        "pretrain.epochs = 10\n"
        "pretrain.batch = 128\n"
        "pretrain.lr = 0.050000000000000003\n"
        "pretrain.momentum = 0.90000000000000002\n"
        "pretrain.weight_decay = 0.00050000000000000001\n"
        "pretrain.hidden = 32\n"
        "pretrain.keep_ratio = 1\n"
        "pretrain.warmup = 0\n"
        "pretrain.holdout = 0.10000000000000001\n"
        "consensus.threshold = 0.5\n"
        "lecomh.lambda = 0\n"
        "lecomh.temperature = 5\n"
        "lecomh.epochs = 10\n"
        "lecomh.batch = 128\n"
        "lecomh.lr = 0.050000000000000003\n"
        "lecomh.momentum = 0.90000000000000002\n"
        "lecomh.weight_decay = 0.00050000000000000001\n"
        "lecomh.freeze_classifier = true\n"
        "lecomh.hard_eval = false\n"
        "lecomh.selection_hidden = 32\n"
        "lecomh.collab_hidden = 32\n"
        "eval.subset = 0\n"
        "sweep.lambdas = 0 1\n"
        "sweep.trials = 1\n";
    CHECK(serialize_config(c) == canonical);

    // round trip: parse(serialize(c)) reproduces the canonical text
    RunConfig again = parse_config_text(serialize_config(c));
    CHECK(serialize_config(again) == canonical);
    CHECK(config_hash(again) == config_hash(c));
}

TEST_CASE("config defaults round-trip and carry the documented values") {
    RunConfig d;
    CHECK(d.seed == 42);
    CHECK(d.data_classes == 4);
    CHECK(d.data_dim == 16);
    CHECK(d.data_train == 6000);
    CHECK(d.data_test == 2000);
    CHECK(d.data_annotators ==
          std::vector<std::string>{"diag:0.8", "diag:0.9", "diag:0.7"});
    CHECK(d.lecomh.temperature == 5.0);
    CHECK(d.lecomh.collab_hidden == std::vector<std::size_t>{512, 512});
    CHECK(d.sweep_lambdas == std::vector<double>{0.0, 0.05, 0.2, 0.5, 1.0, 5.0});
    CHECK(d.subset_size() == 3);
    CHECK_NOTHROW(d.validate());
    RunConfig reparsed = parse_config_text(serialize_config(d));
    CHECK(serialize_config(reparsed) == serialize_config(d));
}

TEST_CASE("config parsing rejects malformed input by name") {
    CHECK_THROWS_AS(parse_config_text("no.such.key = 3\n"), parse_error);
    CHECK(thrown_message([] { parse_config_text("no.such.key = 3\n"); })
              .find("no.such.key") != std::string::npos);
    CHECK_THROWS_AS(parse_config_text("seed = 1\nseed = 2\n"), parse_error);
    CHECK(thrown_message([] { parse_config_text("seed = 1\nseed = 2\n"); })
              .find("duplicate") != std::string::npos);
    CHECK_THROWS_AS(parse_config_text("just some words\n"), parse_error);
    CHECK_THROWS_AS(parse_config_text("seed = abc\n"), parse_error);
    CHECK_THROWS_AS(parse_config_text("seed = -3\n"), parse_error);
    CHECK_THROWS_AS(parse_config_text("data.separation = fast\n"), parse_error);
    CHECK_THROWS_AS(parse_config_text("lecomh.freeze_classifier = maybe\n"), parse_error);
    CHECK_THROWS_AS(parse_config_text("pretrain.hidden = \n"), parse_error);
    CHECK_THROWS_AS(parse_config_text("pretrain.hidden = 64 nope\n"), parse_error);
    // line numbers point at the offender
    CHECK(thrown_message([] { parse_config_text("seed = 1\n\nseed = 2\n"); })
              .find("line 3") != std::string::npos);
}

TEST_CASE("config validation names the offending key") {
    auto withf = [](auto setter) {
        RunConfig c;
        setter(c);
        return thrown_message([&] { c.validate(); });
    };
    CHECK(withf([](RunConfig& c) { c.data_classes = 1; }).find("data.classes") !=
          std::string::npos);
    CHECK(withf([](RunConfig& c) { c.data_train = 0; }).find("data.train") !=
          std::string::npos);
    CHECK(withf([](RunConfig& c) { c.data_separation = -2.0; }).find("data.separation") !=
          std::string::npos);
    CHECK(withf([](RunConfig& c) { c.data_annotators.clear(); }).find("data.annotators") !=
          std::string::npos);
    // an out-of-range noise rate is named after its key, not just its token
    CHECK(withf([](RunConfig& c) { c.data_annotators = {"diag:1.5"}; })
              .find("data.annotators") != std::string::npos);
    CHECK(withf([](RunConfig& c) { c.data_annotators = {"oracle"}; })
              .find("data.annotators") != std::string::npos);
    CHECK(withf([](RunConfig& c) { c.data_annotators = {"diag:zz"}; })
              .find("data.annotators") != std::string::npos);
    CHECK(withf([](RunConfig& c) { c.consensus_threshold = 1.0; })
              .find("consensus.threshold") != std::string::npos);
    CHECK(withf([](RunConfig& c) { c.lecomh.lambda = -1.0; }).find("lecomh") !=
          std::string::npos);
    CHECK(withf([](RunConfig& c) { c.pretrain.holdout_fraction = 2.0; }).find("pretrain") !=
          std::string::npos);
    CHECK(withf([](RunConfig& c) { c.eval_subset = 2; }).find("eval.subset") !=
          std::string::npos);
    CHECK(withf([](RunConfig& c) { c.sweep_lambdas = {0.5, -0.1}; }).find("sweep.lambdas") !=
          std::string::npos);
    CHECK(withf([](RunConfig& c) { c.sweep_trials = 0; }).find("sweep.trials") !=
          std::string::npos);
    RunConfig ok;
    ok.eval_subset = 3;  // explicit full pool is accepted
    CHECK_NOTHROW(ok.validate());
}

TEST_CASE("annotator specs: tokens materialize deterministically from the run seed") {
    RunConfig c;
    c.data_annotators = {"diag:0.85", "uniform", "idn:0.3", "idn:0.3"};
    std::vector<AnnotatorSpec> specs = c.annotator_specs();
    REQUIRE(specs.size() == 4);
    CHECK(specs[0].kind == AnnotatorKind::confusion_matrix);
    REQUIRE(specs[0].confusion.has_value());
    CHECK((*specs[0].confusion)(0, 0) == 0.85);
    CHECK(specs[1].kind == AnnotatorKind::confusion_matrix);
    CHECK((*specs[1].confusion)(0, 0) == doctest::Approx(0.25));
    CHECK(specs[2].kind == AnnotatorKind::instance_dependent);
    CHECK(specs[2].idn_rate == 0.3);
    // identical tokens at different positions draw distinct projection streams
    CHECK(specs[2].idn_projection_seed != specs[3].idn_projection_seed);
    CHECK(specs[2].idn_projection_seed == mix_seed(c.seed, 302));

    std::vector<AnnotatorSpec> again = c.annotator_specs();
    CHECK(again[2].idn_projection_seed == specs[2].idn_projection_seed);
    RunConfig other = c;
    other.seed = 43;
    CHECK(other.annotator_specs()[2].idn_projection_seed != specs[2].idn_projection_seed);
}

TEST_CASE("config hash: canonicalization, pinned fnv vectors, hex form") {
    CHECK(fnv1a64("") == 14695981039346656037ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(hash_hex(0) == "0000000000000000");
    CHECK(hash_hex(fnv1a64("")) == "cbf29ce484222325");

    RunConfig c;
    CHECK(config_hash(c) == fnv1a64(serialize_config(c)));
    // key order in the input never matters: the hash covers the canonical form
    RunConfig a = parse_config_text("seed = 9\ndata.dim = 5\n");
    RunConfig b = parse_config_text("data.dim = 5\nseed = 9\n");
    CHECK(config_hash(a) == config_hash(b));
    RunConfig d = parse_config_text("seed = 10\ndata.dim = 5\n");
    CHECK(config_hash(d) != config_hash(a));
}

TEST_CASE("path, timestamp, digest, and overwrite-guard helpers") {
    CHECK(join_path("a", "b.csv") == "a/b.csv");
    CHECK(join_path("a/", "b.csv") == "a/b.csv");
    CHECK(join_path("", "b.csv") == "b.csv");

    std::string t1 = utc_timestamp();
    std::string t2 = utc_timestamp();
    REQUIRE(t1.size() == 23);  // yyyymmddThhmmss.uuuuuuZ
    CHECK(t1[8] == 'T');
    CHECK(t1[15] == '.');
    CHECK(t1.back() == 'Z');
    CHECK(t2 >= t1);

    std::string dir = scratch_dir("helpers");
    std::string path = join_path(dir, "blob.txt");
    write_file(path, "digest me");
    CHECK(file_digest(path) == "fnv1a64:" + hash_hex(fnv1a64("digest me")));
    CHECK_THROWS_AS(file_digest(join_path(dir, "absent.txt")), io_error);

    CHECK_NOTHROW(require_writable(join_path(dir, "absent.txt"), false));
    CHECK_THROWS_AS(require_writable(path, false), io_error);
    CHECK_NOTHROW(require_writable(path, true));
}

TEST_CASE("data stage: loadable output, byte-identical reruns, overwrite guard") {
    std::string dir = scratch_dir("data_stage");
    RunConfig c = smoke_config(dir);
    run_data_stage(c, dir, false);

    Dataset train = load_csv(join_path(dir, "train.csv"));
    Dataset test = load_csv(join_path(dir, "test.csv"));
    CHECK(train.size() == 200);
    CHECK(test.size() == 120);
    CHECK(train.meta.n_classes == 3);
    CHECK(train.meta.n_annotators == 3);
    CHECK(train.has_ground_truth());

    std::string first = read_file(join_path(dir, "train.csv"));
    CHECK_THROWS_AS(run_data_stage(c, dir, false), io_error);
    run_data_stage(c, dir, true);
    CHECK(read_file(join_path(dir, "train.csv")) == first);
}

TEST_CASE("pipeline: smoke run under 30 s, curve present, reruns byte-identical") {
    std::string root = scratch_dir("pipeline");
    RunConfig c = smoke_config(join_path(root, "runs"));

    auto begin = std::chrono::steady_clock::now();
    std::string dir1 = run_pipeline(c, "");
    std::chrono::duration<double> took = std::chrono::steady_clock::now() - begin;
    CHECK(took.count() < 30.0);

    for (const std::string& name : run_artifacts()) {
        CHECK_MESSAGE(fs::exists(join_path(dir1, name)), name);
    }
    std::vector<CoveragePoint> curve = load_curve(join_path(dir1, "curve.csv"));
    CHECK(curve.size() >= 1);
    CHECK(load_predictions(join_path(dir1, "predictions.csv")).size() == 120);
    CHECK(read_file(join_path(dir1, "config.txt")) == serialize_config(c));

    std::string dir2 = run_pipeline(c, "");
    CHECK(dir2 != dir1);
    for (const std::string& name : run_artifacts()) {
        CHECK_MESSAGE(read_file(join_path(dir1, name)) == read_file(join_path(dir2, name)),
                      name);
    }

    // manifests: digests equal across runs, match disk, and the config entry
    // digests to the config hash itself
    nlohmann::json m1 = nlohmann::json::parse(read_file(join_path(dir1, "manifest.json")));
    nlohmann::json m2 = nlohmann::json::parse(read_file(join_path(dir2, "manifest.json")));
    CHECK(m1["files"] == m2["files"]);
    CHECK(m1["config_hash"] == m2["config_hash"]);
    CHECK(m1["files"]["config.txt"] == m1["config_hash"]);
    CHECK(m1["started"].get<std::string>() <= m1["finished"].get<std::string>());
    for (const auto& [name, digest] : m1["files"].items()) {
        CHECK(file_digest(join_path(dir1, name)) == digest.get<std::string>());
    }
    CHECK(m1["files"].size() == run_artifacts().size());
}

TEST_CASE("pipeline: stage resume reuses earlier artifacts in the latest run") {
    std::string root = scratch_dir("resume");
    RunConfig c = smoke_config(join_path(root, "runs"));

    std::string dir1 = run_pipeline(c, "");
    std::string dir2 = run_pipeline(c, "");
    REQUIRE(dir2 > dir1);  // timestamps order the runs

    nlohmann::json before = nlohmann::json::parse(read_file(join_path(dir2, "manifest.json")));
    std::string curve_before = read_file(join_path(dir2, "curve.csv"));
    std::string train_before = read_file(join_path(dir2, "train.csv"));

    // touch the resumed stage's output so the rewrite is observable
    write_file(join_path(dir2, "consensus.csv"), "scribbled\n");
    std::string resumed = run_pipeline(c, "consensus");
    CHECK(resumed == dir2);  // newest matching run, not a fresh directory

    CHECK(read_file(join_path(dir2, "train.csv")) == train_before);  // untouched
    CHECK(read_file(join_path(dir2, "curve.csv")) == curve_before);  // rebuilt, same bytes
    std::vector<ConsensusCsvRow> rows =
        load_consensus_csv(join_path(dir2, "consensus.csv"), c.consensus_threshold);
    CHECK(rows.size() == 200);  // consensus.csv restored from real inputs

    nlohmann::json after = nlohmann::json::parse(read_file(join_path(dir2, "manifest.json")));
    CHECK(after["started"] == before["started"]);  // original start time survives
    CHECK(after["files"] == before["files"]);

    CHECK_THROWS_AS(run_pipeline(c, "no-such-stage"), config_error);
    RunConfig fresh = c;
    fresh.out = join_path(root, "empty");
    CHECK_THROWS_AS(run_pipeline(fresh, "consensus"), config_error);
    CHECK(thrown_message([&] { run_pipeline(fresh, "consensus"); })
              .find("no run directory") != std::string::npos);
}

TEST_CASE("report: lower-coverage tie rule, per-method rows, missing-file warnings") {
    std::string root = scratch_dir("report");
    std::string full = join_path(root, "full");
    std::string bare = join_path(root, "bare");
    fs::create_directories(full);
    fs::create_directories(bare);

    write_file(join_path(full, "curve.csv"),
               "lambda,coverage,mean_cost,accuracy,accuracy_std,trials\n"
               "0,0.4,1,0.7,0,1\n"
               "1,0.6,0.5,0.9,0,1\n");
    write_file(join_path(full, "deferral.csv"),
               "lambda,coverage,mean_cost,accuracy,accuracy_std,trials\n"
               "0,0,3,0.95,0,1\n"
               "0,0.5,1.5,0.93,0,1\n"
               "0,1,0,0.8,0,1\n");
    write_file(join_path(full, "baselines.csv"),
               "name,coverage,cost,accuracy\n"
               "ai,1,0,0.8\n"
               "human,0,1,0.75\n"
               "majority,0,3,0.85\n");
    write_file(join_path(bare, "baselines.csv"),
               "name,coverage,cost,accuracy\n"
               "ai,1,0,0.82\n");

    std::ostringstream out;
    std::ostringstream err;
    write_report({full, bare}, out, err);

    std::vector<std::string> lines;
    std::istringstream stream(out.str());
    for (std::string line; std::getline(stream, line);) lines.push_back(line);
    REQUIRE(lines.size() == 2 + 5 + 1);
    CHECK(lines[0].front() == '#');  // reference annotation, not a data row
    CHECK(lines[0].find("0.9877") != std::string::npos);
    CHECK(lines[1] == "run,method,accuracy_at_half_coverage,best_accuracy");
    // coverages 0.4 and 0.6 sit at equal distance from 0.5: the lower one wins
    CHECK(lines[2] == "full,lecomh,0.69999999999999996,0.90000000000000002");
    CHECK(lines[3] == "full,deferral,0.93000000000000005,0.94999999999999996");
    CHECK(lines[4] == "full,ai,0.80000000000000004,0.80000000000000004");
    CHECK(lines[5] == "full,human,0.75,0.75");
    CHECK(lines[6] == "full,majority,0.84999999999999998,0.84999999999999998");
    CHECK(lines[7] == "bare,ai,0.81999999999999995,0.81999999999999995");

    std::string warnings = err.str();
    CHECK(warnings.find("warning") != std::string::npos);
    CHECK(warnings.find("lecomh") != std::string::npos);
    CHECK(warnings.find("deferral") != std::string::npos);
}

TEST_CASE("command-line driver: exit codes and artifact flow") {
    std::string root = scratch_dir("cli_process");
    RunConfig c = smoke_config(join_path(root, "out"));
    std::string cfg = join_path(root, "smoke.cfg");
    write_file(cfg, serialize_config(c));

    CHECK(spawn_cli("--help") == 0);
    CHECK(spawn_cli("definitely-not-a-subcommand") == 2);
    CHECK(spawn_cli("gen-data --config " + join_path(root, "absent.cfg")) == 4);

    std::string badcfg = join_path(root, "bad.cfg");
    write_file(badcfg, "no.such.key = 1\n");
    CHECK(spawn_cli("gen-data --config " + badcfg) == 2);
    write_file(badcfg, "data.annotators = diag:1.5\n");
    CHECK(spawn_cli("gen-data --config " + badcfg) == 2);

    CHECK(spawn_cli("gen-data --config " + cfg) == 0);
    CHECK(fs::exists(join_path(c.out, "train.csv")));
    CHECK(spawn_cli("gen-data --config " + cfg) == 4);  // refusal without --force
    std::string before = read_file(join_path(c.out, "train.csv"));
    CHECK(spawn_cli("gen-data --config " + cfg + " --force") == 0);
    CHECK(read_file(join_path(c.out, "train.csv")) == before);  // same seed, same bytes

    CHECK(spawn_cli("pretrain --config " + cfg) == 0);
    CHECK(spawn_cli("consensus --config " + cfg) == 0);

    // a training run pushed to overflow exits with the numeric-error code
    RunConfig diverge = c;
    diverge.lecomh.opt.learning_rate = 1e300;
    std::string divcfg = join_path(root, "diverge.cfg");
    write_file(divcfg, serialize_config(diverge));
    CHECK(spawn_cli("train --config " + divcfg) == 3);

    CHECK(spawn_cli("train --config " + cfg) == 0);
    CHECK(spawn_cli("eval --config " + cfg) == 0);
    CHECK(fs::exists(join_path(c.out, "predictions.csv")));

    // the full pipeline through the binary, twice: fresh run dirs, resumable
    RunConfig piped = c;
    piped.out = join_path(root, "runs");
    std::string pipecfg = join_path(root, "pipeline.cfg");
    write_file(pipecfg, serialize_config(piped));
    CHECK(spawn_cli("pipeline --config " + pipecfg) == 0);
    std::string dir = find_latest_run_dir(piped);
    CHECK(fs::exists(join_path(dir, "curve.csv")));
    CHECK(fs::exists(join_path(dir, "manifest.json")));
    CHECK(spawn_cli("pipeline --config " + pipecfg + " --stage baselines") == 0);
    CHECK(find_latest_run_dir(piped) == dir);

    // --seed must override the file config and land in the run name's hash
    RunConfig reseeded = piped;
    reseeded.seed = 99;
    CHECK(spawn_cli("pipeline --config " + pipecfg + " --seed 99") == 0);
    CHECK(find_latest_run_dir(reseeded) != dir);

    CHECK(spawn_cli("gen-data --config " + pipecfg + " --stage data") == 2);
}
