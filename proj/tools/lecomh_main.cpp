#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lecomh/config.hpp"
#include "lecomh/errors.hpp"
#include "lecomh/runner.hpp"

namespace {

lecomh::RunConfig effective_config(const std::string& config_path, bool seed_given,
                                   std::uint64_t seed, bool out_given, const std::string& out) {
    lecomh::RunConfig config;
    if (!config_path.empty()) config = lecomh::parse_config_file(config_path);
    if (seed_given) config.seed = seed;
    if (out_given) config.out = out;
    return config;
}

void ensure_out_dir(const std::string& out) {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) {
        throw lecomh::io_error("cannot create output directory '" + out + "': " + ec.message());
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"human-AI collaboration experiment driver"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    std::string out_dir;
    bool force = false;
    std::string stage;
    app.add_option("--config", config_path, "configuration file (key = value lines)");
    CLI::Option* seed_opt = app.add_option("--seed", seed, "override the configured seed");
    CLI::Option* out_opt = app.add_option("--out", out_dir, "override the output directory");
    app.add_flag("--force", force, "overwrite existing artifacts");
    app.add_option("--stage", stage,
                   "pipeline only: rerun from this stage inside the latest matching run");

    CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic multi-rater dataset");
    CLI::App* pre = app.add_subcommand("pretrain", "train the AI classifier on the noisy labels");
    CLI::App* cons = app.add_subcommand("consensus", "build the filtered consensus label set");
    CLI::App* train =
        app.add_subcommand("train", "train the selection and collaboration networks");
    CLI::App* eval = app.add_subcommand("eval", "run the trained system over the test set");
    CLI::App* sweep = app.add_subcommand("sweep", "train and evaluate across the lambda grid");
    CLI::App* pipeline =
        app.add_subcommand("pipeline", "run every stage into a fresh run directory");
    CLI::App* report =
        app.add_subcommand("report", "summarize run directories into a comparison CSV");
    std::vector<std::string> report_dirs;
    report->add_option("dirs", report_dirs, "run directories to summarize")->required();
    for (CLI::App* sub : {gen, pre, cons, train, eval, sweep, pipeline, report}) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (!stage.empty() && !pipeline->parsed()) {
            throw lecomh::config_error("--stage applies only to the pipeline subcommand");
        }
        if (report->parsed()) {
            lecomh::write_report(report_dirs, std::cout, std::cerr);
            return 0;
        }

        lecomh::RunConfig config = effective_config(config_path, seed_opt->count() > 0, seed,
                                                    out_opt->count() > 0, out_dir);
        if (pipeline->parsed()) {
            std::string dir = lecomh::run_pipeline(config, stage, &std::cout);
            std::cout << dir << "\n";
            return 0;
        }

        config.validate();
        ensure_out_dir(config.out);
        if (gen->parsed()) {
            lecomh::run_data_stage(config, config.out, force);
        } else if (pre->parsed()) {
            lecomh::run_pretrain_stage(config, config.out, force);
        } else if (cons->parsed()) {
            lecomh::run_consensus_stage(config, config.out, force);
        } else if (train->parsed()) {
            lecomh::run_train_stage(config, config.out, force);
        } else if (eval->parsed()) {
            lecomh::run_eval_stage(config, config.out, force);
        } else if (sweep->parsed()) {
            lecomh::run_sweep_stage(config, config.out, force);
        }
        return 0;
    } catch (const lecomh::numeric_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const lecomh::io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const lecomh::config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
