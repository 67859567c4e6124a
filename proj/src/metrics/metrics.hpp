#pragma once

#include "sde/model.hpp"

#include <string>
#include <vector>

namespace jd::metrics {

using sde::MatrixXd;
using sde::VectorXd;

// Time-averaged relative mean-square errors of state, value, and control
// (RMSE for deterministic controls, time-averaged KL for stochastic ones),
// evaluated along trajectories driven by common random numbers.
struct MetricReport {
    double e_x = 0.0;
    double e_v = 0.0;
    double e_u = 0.0;
    double t_eval = 0.0;
    double eps_x = 1e-8, eps_v = 1e-8, eps_u = 1e-8;
    std::vector<double> per_agent_e_x, per_agent_e_v, per_agent_e_u;

    std::string to_json() const;
    static std::string csv_header();
    std::string csv_row() const;
};

// paths are (K+1) x d matrices on a shared grid with spacing dt
double rmse_state(const MatrixXd& learned, const MatrixXd& benchmark, double dt, double eps_x);

// value samples along the paths, one per grid point
double rmse_value(const VectorXd& learned, const VectorXd& benchmark, double dt, double eps_v);

// gamma = 0 branch: relative MSE of the feedback controls along the paths
double control_error_l2(const MatrixXd& learned_u, const MatrixXd& benchmark_u, double dt,
                        double eps_u);

// KL(N(mu1, var1) || N(mu2, var2)) for diagonal Gaussians
double kl_gaussian_diag(const VectorXd& mu1, const VectorXd& var1, const VectorXd& mu2,
                        const VectorXd& var2);

// KL between two densities tabulated on a shared u grid (trapezoid weights);
// both must integrate to 1 within norm_tol or the comparison is rejected.
double kl_grid(const VectorXd& benchmark_density, const VectorXd& learned_density,
               const VectorXd& u_grid, double norm_tol = 1e-3);

// time average of per-grid-point KL values (trapezoid in time)
double time_average(const VectorXd& series, double dt);

// discretized total mass of the discounted occupation measure on the grid
// (trapezoid weights over the K+1 points); converges to 1/beta
double occupation_mass(double beta, const sde::TimeGrid& grid);

}  // namespace jd::metrics
