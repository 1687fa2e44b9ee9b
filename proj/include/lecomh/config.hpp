#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "lecomh/data.hpp"
#include "lecomh/lecomh.hpp"
#include "lecomh/pretrain.hpp"

namespace lecomh {

// Whole-experiment settings, parsed from a flat "key = value" file with
// dotted section prefixes. Every key is schema-checked; unknown or duplicate
// keys are rejected by name.
struct RunConfig {
    std::uint64_t seed = 42;
    std::string out = "runs";

    std::size_t data_classes = 4;
    std::size_t data_dim = 16;
    std::size_t data_train = 6000;
    std::size_t data_test = 2000;
    double data_separation = 2.5;
    // Annotator tokens: "diag:<p>", "uniform", or "idn:<rate>".
    std::vector<std::string> data_annotators{"diag:0.8", "diag:0.9", "diag:0.7"};

    PretrainConfig pretrain;
    double consensus_threshold = 0.5;
    LecomhConfig lecomh;

    std::size_t eval_subset = 0;  // 0 = one slot per configured annotator
    std::vector<double> sweep_lambdas{0.0, 0.05, 0.2, 0.5, 1.0, 5.0};
    std::size_t sweep_trials = 1;

    // Token list materialized into annotator models; instance-dependent
    // entries derive their projection streams from the run seed and their
    // position, so the same config always builds the same raters.
    std::vector<AnnotatorSpec> annotator_specs() const;

    std::size_t subset_size() const {
        return eval_subset == 0 ? data_annotators.size() : eval_subset;
    }

    void validate() const;  // throws config_error naming the offending key
};

// Parsing accepts blank lines and '#' comments; values keep their meaning
// through serialize -> parse (canonical round trip).
RunConfig parse_config(std::istream& in);
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Canonical text: every key once, schema order, 17-significant-digit floats.
std::string serialize_config(const RunConfig& config);

// FNV-1a over the canonical serialization; hex prefix names run directories.
std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t config_hash(const RunConfig& config);
std::string hash_hex(std::uint64_t hash);  // 16 lowercase hex digits

}  // namespace lecomh
