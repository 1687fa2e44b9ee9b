#include "lecomh/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "lecomh/errors.hpp"

namespace lecomh {

namespace {

std::vector<std::string> split_tokens(const std::string& value) {
    std::istringstream in(value);
    std::vector<std::string> tokens;
    std::string token;
    while (in >> token) tokens.push_back(token);
    return tokens;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

std::size_t parse_count(const std::string& text, const std::string& key) {
    std::size_t value = 0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) {
        throw parse_error(key + ": '" + text + "' is not a non-negative integer");
    }
    return value;
}

std::uint64_t parse_seed(const std::string& text, const std::string& key) {
    std::uint64_t value = 0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) {
        throw parse_error(key + ": '" + text + "' is not a non-negative integer");
    }
    return value;
}

bool parse_bool(const std::string& text, const std::string& key) {
    if (text == "true") return true;
    if (text == "false") return false;
    throw parse_error(key + ": expected 'true' or 'false', got '" + text + "'");
}

std::vector<std::size_t> parse_sizes(const std::string& text, const std::string& key) {
    std::vector<std::size_t> sizes;
    for (const std::string& token : split_tokens(text)) {
        sizes.push_back(parse_count(token, key));
    }
    if (sizes.empty()) throw parse_error(key + ": expected at least one value");
    return sizes;
}

std::vector<double> parse_doubles(const std::string& text, const std::string& key) {
    std::vector<double> values;
    for (const std::string& token : split_tokens(text)) {
        values.push_back(parse_double(token, key));
    }
    if (values.empty()) throw parse_error(key + ": expected at least one value");
    return values;
}

std::string join_sizes(const std::vector<std::size_t>& sizes) {
    std::string out;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(sizes[i]);
    }
    return out;
}

std::string join_doubles(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ' ';
        out += format_double(values[i]);
    }
    return out;
}

void apply_key(RunConfig& c, const std::string& key, const std::string& value) {
    if (key == "seed") {
        c.seed = parse_seed(value, key);
    } else if (key == "out") {
        if (value.empty()) throw parse_error("out: expected a directory path");
        c.out = value;
    } else if (key == "data.classes") {
        c.data_classes = parse_count(value, key);
    } else if (key == "data.dim") {
        c.data_dim = parse_count(value, key);
    } else if (key == "data.train") {
        c.data_train = parse_count(value, key);
    } else if (key == "data.test") {
        c.data_test = parse_count(value, key);
    } else if (key == "data.separation") {
        c.data_separation = parse_double(value, key);
    } else if (key == "data.annotators") {
        c.data_annotators = split_tokens(value);
    } else if (key == "pretrain.epochs") {
        c.pretrain.opt.epochs = parse_count(value, key);
    } else if (key == "pretrain.batch") {
        c.pretrain.opt.batch_size = parse_count(value, key);
    } else if (key == "pretrain.lr") {
        c.pretrain.opt.learning_rate = parse_double(value, key);
    } else if (key == "pretrain.momentum") {
        c.pretrain.opt.momentum = parse_double(value, key);
    } else if (key == "pretrain.weight_decay") {
        c.pretrain.opt.weight_decay = parse_double(value, key);
    } else if (key == "pretrain.hidden") {
        c.pretrain.hidden_sizes = parse_sizes(value, key);
    } else if (key == "pretrain.keep_ratio") {
        c.pretrain.small_loss_keep_ratio = parse_double(value, key);
    } else if (key == "pretrain.warmup") {
        c.pretrain.warmup_epochs = parse_count(value, key);
    } else if (key == "pretrain.holdout") {
        c.pretrain.holdout_fraction = parse_double(value, key);
    } else if (key == "consensus.threshold") {
        c.consensus_threshold = parse_double(value, key);
    } else if (key == "lecomh.lambda") {
        c.lecomh.lambda = parse_double(value, key);
    } else if (key == "lecomh.temperature") {
        c.lecomh.temperature = parse_double(value, key);
    } else if (key == "lecomh.epochs") {
        c.lecomh.opt.epochs = parse_count(value, key);
    } else if (key == "lecomh.batch") {
        c.lecomh.opt.batch_size = parse_count(value, key);
    } else if (key == "lecomh.lr") {
        c.lecomh.opt.learning_rate = parse_double(value, key);
    } else if (key == "lecomh.momentum") {
        c.lecomh.opt.momentum = parse_double(value, key);
    } else if (key == "lecomh.weight_decay") {
        c.lecomh.opt.weight_decay = parse_double(value, key);
    } else if (key == "lecomh.freeze_classifier") {
        c.lecomh.freeze_classifier = parse_bool(value, key);
    } else if (key == "lecomh.hard_eval") {
        c.lecomh.hard_eval = parse_bool(value, key);
    } else if (key == "lecomh.selection_hidden") {
        c.lecomh.selection_hidden = parse_sizes(value, key);
    } else if (key == "lecomh.collab_hidden") {
        c.lecomh.collab_hidden = parse_sizes(value, key);
    } else if (key == "eval.subset") {
        c.eval_subset = parse_count(value, key);
    } else if (key == "sweep.lambdas") {
        c.sweep_lambdas = parse_doubles(value, key);
    } else if (key == "sweep.trials") {
        c.sweep_trials = parse_count(value, key);
    } else {
        throw parse_error("unknown configuration key '" + key + "'");
    }
}

}  // namespace

std::vector<AnnotatorSpec> RunConfig::annotator_specs() const {
    std::vector<AnnotatorSpec> specs;
    for (std::size_t j = 0; j < data_annotators.size(); ++j) {
        const std::string& token = data_annotators[j];
        try {
            if (token == "uniform") {
                specs.push_back(confusion_annotator(uniform_confusion(data_classes)));
            } else if (token.rfind("diag:", 0) == 0) {
                double p = parse_double(token.substr(5), "token '" + token + "'");
                specs.push_back(confusion_annotator(diagonal_confusion(data_classes, p)));
            } else if (token.rfind("idn:", 0) == 0) {
                double rate = parse_double(token.substr(4), "token '" + token + "'");
                specs.push_back(idn_annotator(rate, mix_seed(seed, 300 + j)));
            } else {
                throw config_error("unrecognized annotator token '" + token + "'");
            }
            specs.back().validate(data_classes);
        } catch (const config_error& e) {
            throw config_error("data.annotators: " + std::string(e.what()));
        }
    }
    return specs;
}

void RunConfig::validate() const {
    if (data_classes < 2) throw config_error("data.classes: need at least 2 classes");
    if (data_dim == 0) throw config_error("data.dim: need at least one feature");
    if (data_train == 0) throw config_error("data.train: need at least one example");
    if (data_test == 0) throw config_error("data.test: need at least one example");
    if (!(data_separation > 0.0) || !std::isfinite(data_separation)) {
        throw config_error("data.separation: must be a positive finite number");
    }
    if (data_annotators.empty()) {
        throw config_error("data.annotators: need at least one annotator");
    }
    annotator_specs();  // validates every token, naming the key
    try {
        pretrain.validate();
    } catch (const config_error& e) {
        throw config_error("pretrain: " + std::string(e.what()));
    }
    if (!(consensus_threshold >= 0.0 && consensus_threshold < 1.0)) {
        throw config_error("consensus.threshold: must lie in [0, 1)");
    }
    try {
        lecomh.validate();
    } catch (const config_error& e) {
        throw config_error("lecomh: " + std::string(e.what()));
    }
    if (subset_size() != data_annotators.size()) {
        throw config_error("eval.subset: the trained selection head covers the full pool of " +
                           std::to_string(data_annotators.size()) +
                           " annotators; use that size or 0 for the default");
    }
    if (sweep_lambdas.empty()) {
        throw config_error("sweep.lambdas: need at least one value");
    }
    for (double lambda : sweep_lambdas) {
        if (lambda < 0.0 || !std::isfinite(lambda)) {
            throw config_error("sweep.lambdas: values must be non-negative and finite");
        }
    }
    if (sweep_trials == 0) throw config_error("sweep.trials: need at least one trial");
}

RunConfig parse_config(std::istream& in) {
    RunConfig config;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::size_t begin = line.find_first_not_of(" \t");
        if (begin == std::string::npos) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw parse_error("config line " + std::to_string(line_no) +
                              ": expected 'key = value'");
        }
        std::size_t key_end = line.find_last_not_of(" \t", eq - 1);
        if (key_end == std::string::npos || key_end < begin) {
            throw parse_error("config line " + std::to_string(line_no) + ": missing key");
        }
        std::string key = line.substr(begin, key_end - begin + 1);
        std::size_t val_begin = line.find_first_not_of(" \t", eq + 1);
        std::string value =
            val_begin == std::string::npos ? std::string() : line.substr(val_begin);
        std::size_t val_end = value.find_last_not_of(" \t");
        value = val_end == std::string::npos ? std::string() : value.substr(0, val_end + 1);
        if (!seen.insert(key).second) {
            throw parse_error("config line " + std::to_string(line_no) + ": duplicate key '" +
                              key + "'");
        }
        try {
            apply_key(config, key, value);
        } catch (const parse_error&) {
            throw;
        } catch (const config_error& e) {
            throw parse_error("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return config;
}

RunConfig parse_config_text(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open config '" + path + "' for reading");
    return parse_config(in);
}

std::string serialize_config(const RunConfig& c) {
    std::ostringstream out;
    out << "seed = " << c.seed << "\n";
    out << "out = " << c.out << "\n";
    out << "data.classes = " << c.data_classes << "\n";
    out << "data.dim = " << c.data_dim << "\n";
    out << "data.train = " << c.data_train << "\n";
    out << "data.test = " << c.data_test << "\n";
    out << "data.separation = " << format_double(c.data_separation) << "\n";
    out << "data.annotators = " << join_tokens(c.data_annotators) << "\n";
    out << "pretrain.epochs = " << c.pretrain.opt.epochs << "\n";
    out << "pretrain.batch = " << c.pretrain.opt.batch_size << "\n";
    out << "pretrain.lr = " << format_double(c.pretrain.opt.learning_rate) << "\n";
    out << "pretrain.momentum = " << format_double(c.pretrain.opt.momentum) << "\n";
    out << "pretrain.weight_decay = " << format_double(c.pretrain.opt.weight_decay) << "\n";
    out << "pretrain.hidden = " << join_sizes(c.pretrain.hidden_sizes) << "\n";
    out << "pretrain.keep_ratio = " << format_double(c.pretrain.small_loss_keep_ratio) << "\n";
    out << "pretrain.warmup = " << c.pretrain.warmup_epochs << "\n";
    out << "pretrain.holdout = " << format_double(c.pretrain.holdout_fraction) << "\n";
    out << "consensus.threshold = " << format_double(c.consensus_threshold) << "\n";
    out << "lecomh.lambda = " << format_double(c.lecomh.lambda) << "\n";
    out << "lecomh.temperature = " << format_double(c.lecomh.temperature) << "\n";
    out << "lecomh.epochs = " << c.lecomh.opt.epochs << "\n";
    out << "lecomh.batch = " << c.lecomh.opt.batch_size << "\n";
    out << "lecomh.lr = " << format_double(c.lecomh.opt.learning_rate) << "\n";
    out << "lecomh.momentum = " << format_double(c.lecomh.opt.momentum) << "\n";
    out << "lecomh.weight_decay = " << format_double(c.lecomh.opt.weight_decay) << "\n";
    out << "lecomh.freeze_classifier = " << (c.lecomh.freeze_classifier ? "true" : "false")
        << "\n";
    out << "lecomh.hard_eval = " << (c.lecomh.hard_eval ? "true" : "false") << "\n";
    out << "lecomh.selection_hidden = " << join_sizes(c.lecomh.selection_hidden) << "\n";
    out << "lecomh.collab_hidden = " << join_sizes(c.lecomh.collab_hidden) << "\n";
    out << "eval.subset = " << c.eval_subset << "\n";
    out << "sweep.lambdas = " << join_doubles(c.sweep_lambdas) << "\n";
    out << "sweep.trials = " << c.sweep_trials << "\n";
    return out.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t hash = 14695981039346656037ULL;
    for (unsigned char byte : bytes) {
        hash ^= byte;
        hash *= 1099511628211ULL;
    }
    return hash;
}

std::uint64_t config_hash(const RunConfig& config) {
    return fnv1a64(serialize_config(config));
}

std::string hash_hex(std::uint64_t hash) {
    static const char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[hash & 0xF];
        hash >>= 4;
    }
    return out;
}

}  // namespace lecomh
