#pragma once

#include "run/config.hpp"

#include <string>

namespace jd::run {

// Command implementations behind the CLI and the C API. All write their
// artifacts under config.out_dir and throw on failure:
// std::invalid_argument for configuration problems (exit code 1),
// std::runtime_error for numerical failures (exit code 2).
void run_train(const ExperimentConfig& config);
void run_benchmark(const ExperimentConfig& config);
void run_evaluate(const ExperimentConfig& config, bool self_check = false);
void run_plot_data(const ExperimentConfig& config);
void run_table(const std::string& table_config_json, const std::string& out_dir);

// benchmark solution as a JSON document (also written by run_benchmark)
std::string benchmark_to_json(const ExperimentConfig& config);

// dispatch by name: train | benchmark | evaluate | plot-data | table
void run_command(const std::string& command, const std::string& config_json,
                 long long seed_override, const std::string& out_override);

}  // namespace jd::run
