#pragma once

#include "learner/learner.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace jd::run {

// One flat document per run. Every field has a problem-specific default;
// unknown keys are rejected and constraint violations name the offending
// path. The only CLI overrides are --seed and --out.
struct ExperimentConfig {
    std::string problem;  // lq-homogeneous | lq-convergent | lq-periodic |
                          // merton-standard | merton-entropy | game
    std::size_t dim = 1;  // state dimension d (LQ) or agent count n (game)
    std::uint64_t seed = 2025;
    std::vector<std::uint64_t> seeds;  // optional multi-seed list for tables
    std::string out_dir = ".";

    learner::TrainConfig train;

    // model parameters; the subset that applies depends on the problem
    struct Lq {
        double B = 0.5, Sigma = 0.3, R = 5.0, Q = 0.5;
        double lambda_min = 0.2, lambda_max = 0.3;
        double alpha_min = 0.3, alpha_max = 0.2;
        // convergent profiles (v0, v_inf, kappa)
        double b0 = 0.6, b_inf = 0.5, kappa_b = 1.0;
        double sigma0 = 0.3, sigma_inf = 0.2, kappa_sigma = 1.0;
        double alpha0 = 0.3, alpha_inf = 0.2, kappa_alpha = 1.0;
        // periodic profiles (v_bar, v_amp, period, phase)
        double b_bar = 0.12, b_amp = 0.06;
        double sigma_bar = 0.2, sigma_amp = 0.1;
        double alpha_bar = 0.2, alpha_amp = 0.1;
        double period = 10.0, phase = 0.0;
        double lambda_const = 0.2;
        double ode_dt = 1e-3;
        double t_infinity_factor = 3.0;  // T_inf = factor * T
    } lq;

    struct Merton {
        double mu = 0.05, r = 0.03, sigma = 0.4, lambda = 0.2, alpha = 0.3, p = 0.5;
        double u_min = 0.0, u_max = 1.0;
        // entropy-benchmark grids
        double x_min = 0.2, x_max = 3.0;
        std::size_t n_x = 500, n_u = 400;
    } merton;

    struct Game {
        double b1 = 0.05, b_rest = 0.02;
        double eta1 = 0.08, eta_rest = 0.05;
        double sigma1 = 0.5, sigma_rest = 0.4;
        double alpha = 0.2, xi = 0.2;
        double lambda = 0.2, lambda0 = 0.25;
        double varpi = 0.2;
        double varrho1 = 1.5, varrho_rest = 2.0;
    } game;

    struct Network {
        std::size_t hidden_width = 0;  // 0: observation dim + 10
        std::size_t depth = 3;
        double init_std = 0.15;
        std::size_t flow_bins = 6;
        double flow_tail_bound = 2.5;
        std::size_t flow_hidden = 32;
        std::size_t flow_depth = 2;
        int warmup_updates = 30;
    } network;

    struct Eval {
        std::size_t paths = 8;          // evaluation trajectories (common noise)
        std::uint64_t seed = 90210;
        int every = 0;                  // 0: final evaluation only
        std::size_t mc_mean_samples = 256;
        double t_eval = 0.0;            // 0: training horizon K dt
    } eval;

    int checkpoint_every = 0;  // iterations; 0 = final only

    double horizon() const { return static_cast<double>(train.steps) * train.delta_t; }
    double eval_horizon() const { return eval.t_eval > 0.0 ? eval.t_eval : horizon(); }
};

// Parse a JSON document; fills problem defaults first, then applies the
// document on top. Throws std::invalid_argument naming the offending path.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig default_config(const std::string& problem);

std::string serialize_config(const ExperimentConfig& config);

// 64-bit FNV-1a of the canonical serialized config, hex-encoded; identifies
// the resolved run configuration.
std::string config_hash(const ExperimentConfig& config);

}  // namespace jd::run
