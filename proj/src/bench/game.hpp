#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace jd::bench {

// n-agent portfolio game: agent i's wealth follows
//   dX^i = u_i (b_i dt + eta_i dW^i + sigma_i dW^0 + alpha_i dM^i + xi_i dM^0)
// with CARA relative-performance reward
//   f_i(x, y) = -exp(-( (1 - varpi_i/n) x - varpi_i y ) / varrho_i),
// y the average wealth of the others.
struct GameParams {
    std::size_t n = 2;
    std::vector<double> b, eta, sigma, alpha, xi, lambda;  // one entry per agent
    double lambda0 = 0.25;
    std::vector<double> varpi, varrho;
    double beta = 1.0;

    void validate() const;
};

struct GameBenchmark {
    GameParams params;
    std::vector<double> u_star;
    std::vector<double> chi, rho;
    std::vector<double> C;             // aggregate constants, independent of u_i
    std::vector<double> lambda_star;   // growth constant entering the value scale
    std::vector<double> psi_at_optimum;
    int iterations = 0;

    // V^i(x, y) = -exp(-chi_i x + rho_i y) / (beta - lambda_star_i)
    double value(std::size_t agent, double x, double y) const;
    double psi_prime(std::size_t agent, double u) const;
    double psi(std::size_t agent, double u) const;
};

struct GameSolveOptions {
    double damping = 0.5;
    double tolerance = 1e-12;
    int max_iterations = 200;
};

GameBenchmark solve_game(const GameParams& params, const GameSolveOptions& opts = {});

}  // namespace jd::bench
