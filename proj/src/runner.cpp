#include "lecomh/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lecomh/classifier.hpp"
#include "lecomh/consensus.hpp"
#include "lecomh/data.hpp"
#include "lecomh/errors.hpp"
#include "lecomh/eval.hpp"
#include "lecomh/lecomh.hpp"
#include "lecomh/pretrain.hpp"

namespace lecomh {

namespace fs = std::filesystem;

// Derived seed streams, one constant per consumer so stages never share or
// reorder draws: blob generation uses the seed itself; annotation uses 101
// (train) and 202 (test); instance-dependent annotator j projects from
// 300 + j (see RunConfig::annotator_specs). Stages: pretrain 1, sweep 2,
// baselines 3, train 4, eval 5.
namespace stream {
constexpr std::uint64_t pretrain = 1;
constexpr std::uint64_t sweep = 2;
constexpr std::uint64_t baselines = 3;
constexpr std::uint64_t train = 4;
constexpr std::uint64_t eval = 5;
constexpr std::uint64_t annotate_train = 101;
constexpr std::uint64_t annotate_test = 202;
}  // namespace stream

std::string join_path(const std::string& dir, const std::string& name) {
    if (dir.empty()) return name;
    if (dir.back() == '/') return dir + name;
    return dir + "/" + name;
}

std::string utc_timestamp() {
    using namespace std::chrono;
    auto now = system_clock::now();
    auto micros = duration_cast<microseconds>(now.time_since_epoch()) % 1000000;
    std::time_t secs = system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[40];
    std::size_t len = std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%S", &tm);
    std::snprintf(buf + len, sizeof buf - len, ".%06dZ", static_cast<int>(micros.count()));
    return buf;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "' for digesting");
    std::ostringstream bytes;
    bytes << in.rdbuf();
    if (in.bad()) throw io_error("failed while reading '" + path + "'");
    return "fnv1a64:" + hash_hex(fnv1a64(bytes.str()));
}

void require_writable(const std::string& path, bool overwrite) {
    if (!overwrite && fs::exists(path)) {
        throw io_error("refusing to overwrite existing '" + path + "'; pass --force");
    }
}

namespace {

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw io_error("failed while writing '" + path + "'");
}

Dataset load_stage_dataset(const std::string& dir, const char* name) {
    return load_csv(join_path(dir, name));
}

std::string hash8(const RunConfig& config) {
    return hash_hex(config_hash(config)).substr(0, 8);
}

}  // namespace

void run_data_stage(const RunConfig& config, const std::string& dir, bool overwrite) {
    config.validate();
    std::string train_path = join_path(dir, artifact::train_csv);
    std::string test_path = join_path(dir, artifact::test_csv);
    require_writable(train_path, overwrite);
    require_writable(test_path, overwrite);

    BlobData blobs = gen_blobs(config.data_classes, config.data_dim, config.data_train,
                               config.data_test, config.data_separation, config.seed);
    std::vector<AnnotatorSpec> specs = config.annotator_specs();
    Dataset train = annotate(blobs.train, specs, mix_seed(config.seed, stream::annotate_train));
    Dataset test = annotate(blobs.test, specs, mix_seed(config.seed, stream::annotate_test));
    save_csv(train, train_path);
    save_csv(test, test_path);
}

void run_pretrain_stage(const RunConfig& config, const std::string& dir, bool overwrite) {
    config.validate();
    std::string clf_path = join_path(dir, artifact::classifier_weights);
    require_writable(clf_path, overwrite);
    require_writable(clf_path + ".meta", overwrite);

    Dataset train = load_stage_dataset(dir, artifact::train_csv);
    Classifier classifier =
        pretrain_classifier(train, config.pretrain, mix_seed(config.seed, stream::pretrain));
    save_classifier(classifier, clf_path, config_hash(config));
}

void run_consensus_stage(const RunConfig& config, const std::string& dir, bool overwrite) {
    config.validate();
    std::string consensus_path = join_path(dir, artifact::consensus_csv);
    require_writable(consensus_path, overwrite);

    Dataset train = load_stage_dataset(dir, artifact::train_csv);
    Classifier classifier = load_classifier(join_path(dir, artifact::classifier_weights));
    ConsensusResult result =
        build_consensus_dataset(train, classifier, config.consensus_threshold);
    save_consensus_csv(result, consensus_path);
}

void run_train_stage(const RunConfig& config, const std::string& dir, bool overwrite) {
    config.validate();
    std::string selection_path = join_path(dir, artifact::selection_weights);
    std::string collab_path = join_path(dir, artifact::collab_weights);
    std::string tuned_path = join_path(dir, artifact::classifier_tuned);
    std::string log_path = join_path(dir, artifact::training_log_csv);
    require_writable(selection_path, overwrite);
    require_writable(collab_path, overwrite);
    require_writable(tuned_path, overwrite);
    require_writable(tuned_path + ".meta", overwrite);
    require_writable(log_path, overwrite);

    Dataset train = load_stage_dataset(dir, artifact::train_csv);
    Classifier classifier = load_classifier(join_path(dir, artifact::classifier_weights));
    std::vector<ConsensusCsvRow> rows = load_consensus_csv(
        join_path(dir, artifact::consensus_csv), config.consensus_threshold);
    ConsensusDataset consensus = consensus_from_rows(train, rows, config.consensus_threshold);

    TrainResult result =
        train_lecomh(consensus, classifier, config.lecomh, mix_seed(config.seed, stream::train));
    save_mlp(result.selection.net, selection_path);
    save_mlp(result.collaboration.net, collab_path);
    save_classifier(result.classifier, tuned_path, config_hash(config));
    save_training_log(result.log, log_path);
}

void run_eval_stage(const RunConfig& config, const std::string& dir, bool overwrite) {
    config.validate();
    std::string predictions_path = join_path(dir, artifact::predictions_csv);
    require_writable(predictions_path, overwrite);

    Dataset test = load_stage_dataset(dir, artifact::test_csv);
    Classifier classifier = load_classifier(join_path(dir, artifact::classifier_tuned));
    SelectionNet selection{load_mlp(join_path(dir, artifact::selection_weights))};
    CollabNet collaboration{load_mlp(join_path(dir, artifact::collab_weights))};
    EvalResult result = evaluate_system(classifier, selection, collaboration, test,
                                        config.subset_size(), config.lecomh.temperature,
                                        config.lecomh.hard_eval,
                                        mix_seed(config.seed, stream::eval));
    emit_predictions(result.records, predictions_path);
}

void run_sweep_stage(const RunConfig& config, const std::string& dir, bool overwrite) {
    config.validate();
    std::string curve_path = join_path(dir, artifact::curve_csv);
    require_writable(curve_path, overwrite);

    Dataset train = load_stage_dataset(dir, artifact::train_csv);
    Dataset test = load_stage_dataset(dir, artifact::test_csv);
    Classifier classifier = load_classifier(join_path(dir, artifact::classifier_weights));
    std::vector<ConsensusCsvRow> rows = load_consensus_csv(
        join_path(dir, artifact::consensus_csv), config.consensus_threshold);
    ConsensusDataset consensus = consensus_from_rows(train, rows, config.consensus_threshold);

    std::vector<CoveragePoint> points =
        sweep_lambda(consensus, classifier, test, config.lecomh, config.sweep_lambdas,
                     config.sweep_trials, mix_seed(config.seed, stream::sweep));
    emit_curve(points, curve_path);
}

void run_baselines_stage(const RunConfig& config, const std::string& dir, bool overwrite) {
    config.validate();
    std::string baselines_path = join_path(dir, artifact::baselines_csv);
    std::string deferral_path = join_path(dir, artifact::deferral_csv);
    require_writable(baselines_path, overwrite);
    require_writable(deferral_path, overwrite);

    Dataset test = load_stage_dataset(dir, artifact::test_csv);
    Classifier classifier = load_classifier(join_path(dir, artifact::classifier_weights));
    emit_baselines(baselines_simple(test, classifier, mix_seed(config.seed, stream::baselines)),
                   baselines_path);
    std::vector<double> grid;
    for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
    emit_curve(baseline_confidence_deferral(classifier, test, grid), deferral_path);
}

const std::vector<std::string>& pipeline_stage_names() {
    static const std::vector<std::string> names = {"data", "pretrain", "consensus", "train",
                                                   "eval",  "sweep",   "baselines"};
    return names;
}

std::string create_run_dir(const RunConfig& config) {
    std::error_code ec;
    fs::create_directories(config.out, ec);
    if (ec) {
        throw io_error("cannot create output directory '" + config.out + "': " + ec.message());
    }
    std::string suffix = "-" + hash8(config);
    for (int attempt = 0; attempt < 10000; ++attempt) {
        std::string dir = join_path(config.out, utc_timestamp() + suffix);
        if (fs::create_directory(dir, ec)) return dir;
        if (ec) throw io_error("cannot create run directory '" + dir + "': " + ec.message());
        // the name exists already: the microsecond clock will move past it
    }
    throw io_error("could not find a fresh run directory name under '" + config.out + "'");
}

std::string find_latest_run_dir(const RunConfig& config) {
    std::string suffix = "-" + hash8(config);
    std::string best;
    std::error_code ec;
    fs::directory_iterator it(config.out, ec);
    if (!ec) {
        for (const fs::directory_entry& entry : it) {
            if (!entry.is_directory()) continue;
            std::string name = entry.path().filename().string();
            if (name.size() > suffix.size() && name.ends_with(suffix) && name > best) {
                best = name;
            }
        }
    }
    if (best.empty()) {
        throw config_error("no run directory matching this configuration under '" + config.out +
                           "'; run the full pipeline first");
    }
    return join_path(config.out, best);
}

namespace {

std::string stored_start_time(const std::string& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) return {};
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, /*allow_exceptions=*/false);
    if (doc.is_object() && doc.contains("started") && doc["started"].is_string()) {
        return doc["started"].get<std::string>();
    }
    return {};
}

using StageFn = void (*)(const RunConfig&, const std::string&, bool);

StageFn stage_function(const std::string& name) {
    if (name == "data") return run_data_stage;
    if (name == "pretrain") return run_pretrain_stage;
    if (name == "consensus") return run_consensus_stage;
    if (name == "train") return run_train_stage;
    if (name == "eval") return run_eval_stage;
    if (name == "sweep") return run_sweep_stage;
    if (name == "baselines") return run_baselines_stage;
    return nullptr;
}

[[noreturn]] void rethrow_with_stage(const std::string& stage) {
    std::string prefix = "stage " + stage + ": ";
    try {
        throw;
    } catch (const parse_error& e) {
        throw parse_error(prefix + e.what());
    } catch (const config_error& e) {
        throw config_error(prefix + e.what());
    } catch (const numeric_error& e) {
        throw numeric_error(prefix + e.what());
    } catch (const io_error& e) {
        throw io_error(prefix + e.what());
    } catch (const std::logic_error& e) {
        throw std::logic_error(prefix + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error(prefix + e.what());
    }
}

}  // namespace

std::string run_pipeline(const RunConfig& config, const std::string& resume_from,
                         std::ostream* progress) {
    config.validate();
    const std::vector<std::string>& stages = pipeline_stage_names();

    std::size_t first = 0;
    std::string dir;
    bool overwrite = false;
    std::string started = utc_timestamp();

    if (resume_from.empty()) {
        dir = create_run_dir(config);
        write_text_file(join_path(dir, artifact::config_txt), serialize_config(config));
    } else {
        auto at = std::find(stages.begin(), stages.end(), resume_from);
        if (at == stages.end()) {
            std::string known;
            for (const std::string& s : stages) known += (known.empty() ? "" : ", ") + s;
            throw config_error("unknown stage '" + resume_from + "'; expected one of: " + known);
        }
        first = static_cast<std::size_t>(at - stages.begin());
        dir = find_latest_run_dir(config);
        std::string stored = serialize_config(parse_config_file(join_path(dir, artifact::config_txt)));
        if (stored != serialize_config(config)) {
            throw config_error("run directory '" + dir +
                               "' holds a different configuration; not resuming into it");
        }
        overwrite = true;
        std::string prior = stored_start_time(join_path(dir, artifact::manifest_json));
        if (!prior.empty()) started = prior;
    }

    if (progress) *progress << "run directory: " << dir << "\n";
    for (std::size_t i = first; i < stages.size(); ++i) {
        auto begin = std::chrono::steady_clock::now();
        try {
            stage_function(stages[i])(config, dir, overwrite);
        } catch (...) {
            rethrow_with_stage(stages[i]);
        }
        if (progress) {
            std::chrono::duration<double> took = std::chrono::steady_clock::now() - begin;
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.2f", took.count());
            *progress << "stage " << stages[i] << ": ok (" << buf << " s)\n";
        }
    }

    write_manifest(config, dir, started, utc_timestamp());
    if (progress) *progress << "manifest written\n";
    return dir;
}

void write_manifest(const RunConfig& config, const std::string& dir,
                    const std::string& started, const std::string& finished) {
    static const char* inventory[] = {
        artifact::config_txt,     artifact::train_csv,
        artifact::test_csv,       artifact::classifier_weights,
        "classifier.weights.meta", artifact::consensus_csv,
        artifact::selection_weights, artifact::collab_weights,
        artifact::classifier_tuned, "classifier_tuned.weights.meta",
        artifact::training_log_csv, artifact::predictions_csv,
        artifact::curve_csv,      artifact::baselines_csv,
        artifact::deferral_csv,
    };
    nlohmann::json files = nlohmann::json::object();
    for (const char* name : inventory) {
        std::string path = join_path(dir, name);
        if (fs::exists(path)) files[name] = file_digest(path);
    }
    nlohmann::json doc;
    doc["artifact_version"] = 1;
    doc["config_hash"] = "fnv1a64:" + hash_hex(config_hash(config));
    doc["formats"] = {{"baselines_csv", 1}, {"classifier_meta", 1}, {"config", 1},
                      {"consensus_csv", 1}, {"curve_csv", 1},       {"mrdata_csv", 1},
                      {"predictions_csv", 1}, {"training_log_csv", 1}, {"weights", 1}};
    doc["started"] = started;
    doc["finished"] = finished;
    doc["files"] = files;
    write_text_file(join_path(dir, artifact::manifest_json), doc.dump(2) + "\n");
}

namespace {

struct MethodCurve {
    std::string method;
    std::vector<std::pair<double, double>> points;  // (coverage, accuracy)
};

// Nearest to coverage 0.5; exact distance ties resolve to the lower coverage.
double accuracy_at_half_coverage(const std::vector<std::pair<double, double>>& points) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        double d = std::fabs(points[i].first - 0.5);
        double bd = std::fabs(points[best].first - 0.5);
        if (d < bd || (d == bd && points[i].first < points[best].first)) best = i;
    }
    return points[best].second;
}

double best_accuracy(const std::vector<std::pair<double, double>>& points) {
    double best = points.front().second;
    for (const auto& p : points) best = std::max(best, p.second);
    return best;
}

std::string run_label(const std::string& dir) {
    std::string trimmed = dir;
    while (trimmed.size() > 1 && trimmed.back() == '/') trimmed.pop_back();
    std::size_t slash = trimmed.find_last_of('/');
    return slash == std::string::npos ? trimmed : trimmed.substr(slash + 1);
}

}  // namespace

void write_report(const std::vector<std::string>& run_dirs, std::ostream& out,
                  std::ostream& err) {
    out << "# reference: full-scale image-benchmark systems reach 0.9877 accuracy at 0.50 "
           "coverage on CIFAR-10H; orientation only, not a product of these runs\n";
    out << "run,method,accuracy_at_half_coverage,best_accuracy\n";
    for (const std::string& dir : run_dirs) {
        std::vector<MethodCurve> curves;
        auto add_curve_file = [&](const char* name, const std::string& method) {
            std::string path = join_path(dir, name);
            try {
                MethodCurve curve;
                curve.method = method;
                for (const CoveragePoint& p : load_curve(path)) {
                    curve.points.emplace_back(p.coverage, p.accuracy);
                }
                if (curve.points.empty()) {
                    err << "warning: " << path << ": no points; skipping " << method << "\n";
                    return;
                }
                curves.push_back(std::move(curve));
            } catch (const std::exception& e) {
                err << "warning: skipping " << method << ": " << e.what() << "\n";
            }
        };
        add_curve_file(artifact::curve_csv, "lecomh");
        add_curve_file(artifact::deferral_csv, "deferral");
        std::string baselines_path = join_path(dir, artifact::baselines_csv);
        try {
            for (const BaselineRow& row : load_baselines(baselines_path)) {
                curves.push_back({row.name, {{row.coverage, row.accuracy}}});
            }
        } catch (const std::exception& e) {
            err << "warning: skipping baselines: " << e.what() << "\n";
        }
        std::string label = run_label(dir);
        for (const MethodCurve& curve : curves) {
            out << label << ',' << curve.method << ','
                << format_double(accuracy_at_half_coverage(curve.points)) << ','
                << format_double(best_accuracy(curve.points)) << "\n";
        }
    }
    if (!out) throw io_error("failed while writing the report");
}

}  // namespace lecomh
