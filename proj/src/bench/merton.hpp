#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace jd::bench {

struct MertonParams {
    double mu = 0.05;
    double r = 0.03;
    double sigma = 0.4;
    double lambda = 0.2;
    double alpha = 0.3;
    double p = 0.5;   // CRRA exponent, 0 < p < 1
    double beta = 1.0;
};

// Stationary solution of the jump-diffusion Merton problem: u_star is the
// root of the first-order condition, h_star the value coefficient in
// V(x) = (h_star / p) x^p.
struct MertonBenchmark {
    MertonParams params;
    double u_star = 0.0;
    double h_star = 0.0;

    double value(double x) const;
    double foc_residual() const;
};

MertonBenchmark solve_merton_standard(const MertonParams& params);

// Grid solution of the entropy-regularized stationary HJB
//   V(x) = (gamma/beta) log Int_A exp(H(x,u,V',V'')/gamma) du
// with central finite differences in x, trapezoid quadrature in u (log-sum-
// exp), and the jump term V(x(1+alpha u)) by linear interpolation. The
// outer loop is a damped fixed point in the Gibbs weights; each pass solves
// the implied linear PIDE implicitly, which keeps the advection/diffusion
// stiffness out of the iteration.
struct MertonEntropyBenchmark {
    MertonParams params;
    double gamma = 0.05;
    std::vector<double> x_grid;
    std::vector<double> u_grid;
    Eigen::VectorXd value;       // V on x_grid
    Eigen::MatrixXd gibbs;       // density pi*(u | x), n_x rows by n_u cols
    double fixed_point_residual = 0.0;
    int iterations = 0;
    std::size_t extrapolated_points = 0;  // jump targets beyond the grid

    double value_at(double x) const;          // linear interpolation
    Eigen::VectorXd density_at(double x) const;  // interpolated Gibbs slice
    double gibbs_mean(double x) const;
    double gibbs_mode(double x) const;
    // trapezoid mass of a slice; 1 up to quadrature error
    double slice_mass(std::size_t ix) const;
};

struct MertonEntropyOptions {
    double x_min = 0.2, x_max = 3.0;
    std::size_t n_x = 500;
    double u_min = 0.0, u_max = 1.0;
    std::size_t n_u = 400;
    double damping = 0.5;
    double tolerance = 1e-6;
    int max_iterations = 400;
};

MertonEntropyBenchmark solve_merton_entropy_grid(const MertonParams& params, double gamma,
                                                 const MertonEntropyOptions& opts = {});

}  // namespace jd::bench
