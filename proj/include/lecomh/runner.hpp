#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lecomh/config.hpp"

namespace lecomh {

// Canonical artifact names inside an output directory. Stages communicate
// exclusively through these files, so any stage can be rerun from disk.
namespace artifact {
inline constexpr const char* config_txt = "config.txt";
inline constexpr const char* train_csv = "train.csv";
inline constexpr const char* test_csv = "test.csv";
inline constexpr const char* classifier_weights = "classifier.weights";
inline constexpr const char* consensus_csv = "consensus.csv";
inline constexpr const char* selection_weights = "selection.weights";
inline constexpr const char* collab_weights = "collab.weights";
inline constexpr const char* classifier_tuned = "classifier_tuned.weights";
inline constexpr const char* training_log_csv = "training_log.csv";
inline constexpr const char* predictions_csv = "predictions.csv";
inline constexpr const char* curve_csv = "curve.csv";
inline constexpr const char* baselines_csv = "baselines.csv";
inline constexpr const char* deferral_csv = "deferral.csv";
inline constexpr const char* manifest_json = "manifest.json";
}  // namespace artifact

// "<dir>/<name>" with exactly one separator.
std::string join_path(const std::string& dir, const std::string& name);

// UTC wall clock at microsecond resolution, e.g. "20260821T153000.123456Z".
// Lexicographic order equals chronological order.
std::string utc_timestamp();

// "fnv1a64:<16 hex>" over the file's bytes; io_error when unreadable.
std::string file_digest(const std::string& path);

// Throws io_error when the path exists and overwriting was not requested.
void require_writable(const std::string& path, bool overwrite);

// --- Stages ---------------------------------------------------------------
// Each stage reads its inputs from `dir` and writes its outputs there.
// data:      train.csv, test.csv
// pretrain:  classifier.weights (+ .meta)          needs train.csv
// consensus: consensus.csv                          needs train.csv, classifier
// train:     selection/collab/classifier_tuned weights, training_log.csv
// eval:      predictions.csv                        needs test.csv, train outputs
// sweep:     curve.csv                              needs train/test/classifier/consensus
// baselines: baselines.csv, deferral.csv            needs test.csv, classifier

void run_data_stage(const RunConfig& config, const std::string& dir, bool overwrite);
void run_pretrain_stage(const RunConfig& config, const std::string& dir, bool overwrite);
void run_consensus_stage(const RunConfig& config, const std::string& dir, bool overwrite);
void run_train_stage(const RunConfig& config, const std::string& dir, bool overwrite);
void run_eval_stage(const RunConfig& config, const std::string& dir, bool overwrite);
void run_sweep_stage(const RunConfig& config, const std::string& dir, bool overwrite);
void run_baselines_stage(const RunConfig& config, const std::string& dir, bool overwrite);

// Stage names in pipeline order: data, pretrain, consensus, train, eval,
// sweep, baselines.
const std::vector<std::string>& pipeline_stage_names();

// --- Run directories -------------------------------------------------------

// Creates "<out>/<timestamp>-<hash8>" where hash8 is the first 8 hex digits
// of the config hash. Never reuses an existing directory.
std::string create_run_dir(const RunConfig& config);

// Latest (by name, hence by timestamp) run directory under <out> whose name
// ends in "-<hash8>" for this config; config_error when none exists.
std::string find_latest_run_dir(const RunConfig& config);

// Runs every stage in order into a fresh run directory, then writes the
// manifest. A non-empty `resume_from` instead reruns that stage and all later
// ones inside the latest run directory matching the config; earlier artifacts
// are reused as-is. Any stage failure propagates with the stage name prefixed
// and leaves completed artifacts in place. Progress lines go to `progress`
// when given. Returns the run directory.
std::string run_pipeline(const RunConfig& config, const std::string& resume_from,
                         std::ostream* progress = nullptr);

// manifest.json: config hash, format versions, start/end timestamps, and a
// content digest for every known artifact present in the directory. The
// manifest is the only file that embeds time, so metric files digest
// identically across reruns of the same config.
void write_manifest(const RunConfig& config, const std::string& dir,
                    const std::string& started, const std::string& finished);

// --- Report -----------------------------------------------------------------

// One row per (run, method): "run,method,accuracy_at_half_coverage,best_accuracy".
// Methods come from curve.csv (lecomh), deferral.csv (deferral), and
// baselines.csv (ai, human, majority). The half-coverage column picks the
// point nearest coverage 0.5, ties resolved toward the lower coverage.
// Missing or unreadable files are reported on `err` and skipped.
void write_report(const std::vector<std::string>& run_dirs, std::ostream& out,
                  std::ostream& err);

}  // namespace lecomh
