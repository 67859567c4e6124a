// jumpctl: configuration-driven runner for the jumpdiff solver library.
// Subcommands: train | benchmark | evaluate | plot-data | table.
// Exit codes: 0 success, 1 configuration error, 2 numerical failure.
#include <jumpdiff.h>

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace {

std::string read_file(const std::string& path, bool& ok) {
    std::ifstream is(path);
    if (!is) {
        ok = false;
        return {};
    }
    std::ostringstream os;
    os << is.rdbuf();
    ok = true;
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"jumpctl - actor-critic solver for jump-diffusion control"};
    app.require_subcommand(1);

    std::string config_path;
    long long seed = -1;
    std::string out_dir;
    bool self_check = false;

    auto add_common = [&](CLI::App* cmd, bool with_seed = true) {
        cmd->add_option("--config", config_path, "path to the JSON config")->required();
        if (with_seed) cmd->add_option("--seed", seed, "override the config seed");
        cmd->add_option("--out", out_dir, "override the output directory");
    };

    auto* train = app.add_subcommand("train", "run the online actor-critic training loop");
    add_common(train);
    auto* benchmark = app.add_subcommand("benchmark", "solve the ground-truth benchmark");
    add_common(benchmark);
    auto* evaluate = app.add_subcommand("evaluate", "evaluate trained artifacts against the benchmark");
    add_common(evaluate);
    evaluate->add_flag("--self-check", self_check,
                       "compare the benchmark against itself (all metrics must vanish)");
    auto* plot = app.add_subcommand("plot-data", "emit learned-vs-benchmark CSV series");
    add_common(plot);
    auto* table = app.add_subcommand("table", "aggregate completed runs into a CSV table");
    add_common(table, false);

    CLI11_PARSE(app, argc, argv);

    bool ok = false;
    const std::string config = read_file(config_path, ok);
    if (!ok) {
        std::cerr << "jumpctl: cannot read config file: " << config_path << "\n";
        return 1;
    }

    const char* command = nullptr;
    if (train->parsed()) command = "train";
    else if (benchmark->parsed()) command = "benchmark";
    else if (evaluate->parsed()) command = self_check ? "evaluate-self-check" : "evaluate";
    else if (plot->parsed()) command = "plot-data";
    else command = "table";

    const jd_status status = jd_run(command, config.c_str(), seed, out_dir.c_str());
    if (status != JD_OK) {
        std::cerr << "jumpctl: " << jd_last_error() << "\n";
        return static_cast<int>(status);
    }
    return 0;
}
