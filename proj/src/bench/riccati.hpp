#pragma once

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace jd::bench {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Linear-quadratic problem data: dX = B(t)u dt + Sigma(t) dW + jump channels
// alpha_i(t) e_i dM^i at rates lambda_i(t), reward -(u'Ru + x'Qx), discount
// beta, entropy weight gamma. The *_inf members give the limiting values used
// as the approximate boundary condition in the convergent case.
struct LqModel {
    std::size_t d = 1, m = 1;
    std::function<MatrixXd(double)> B, Sigma, R, Q;
    std::function<VectorXd(double)> alpha, lambda;
    double beta = 1.0;
    double gamma = 0.0;
    MatrixXd B_inf, Sigma_inf, R_inf, Q_inf;
    VectorXd alpha_inf, lambda_inf;
    double period = 0.0;  // > 0 for periodic coefficients
};

// Entropy correction of the scalar Riccati balance:
// (gamma/2) (m log(pi gamma) - log det R); zero when gamma == 0.
double entropy_rate_constant(double gamma, std::size_t m, const MatrixXd& R);

struct StationaryPair {
    MatrixXd H;
    double g = 0.0;
};

// Stationary pair of the homogeneous problem: H solves
// 0 = beta H + Q - H B R^-1 B' H with the stabilizing branch (closed-loop
// drift B R^-1 B' H Hurwitz), and beta g = Tr(Sigma Sigma' H)
// + Tr(Lambda diag(alpha) H diag(alpha)) + c_gamma.
StationaryPair solve_are(const MatrixXd& B, const MatrixXd& Sigma, const VectorXd& alpha,
                         const VectorXd& lambda, const MatrixXd& R, const MatrixXd& Q, double beta,
                         double gamma);

struct RiccatiSolution {
    double dt = 0.0;
    double t0 = 0.0;
    std::vector<MatrixXd> H;  // H[k] at t0 + k dt
    std::vector<double> g;
    double period = 0.0;           // > 0: solution extends periodically
    MatrixXd H_stationary;         // limiting pair when applicable
    double g_stationary = 0.0;
    bool has_stationary = false;

    MatrixXd H_at(double t) const;
    double g_at(double t) const;
};

// Backward integration of H' = beta H + Q(t) - H B(t) R(t)^-1 B(t)' H and the
// scalar g-equation from the stationary pair at t_infinity down to 0; values
// are returned on [0, horizon]. Classic RK4 at ode_dt.
RiccatiSolution integrate_riccati_backward(const LqModel& model, double horizon,
                                           double t_infinity, double ode_dt);

// Periodic solution on [0, P] via shooting on the period map (backward
// integration is the stable direction, so a damped fixed point on H(P)
// converges); g from the explicit discounted integral over one period.
RiccatiSolution solve_periodic_riccati(const LqModel& model, double ode_dt,
                                       double damping = 0.5, int max_iterations = 200,
                                       double tolerance = 1e-10);

// Residual of the H-equation at interior grid points by central differences.
double riccati_residual(const RiccatiSolution& sol, const LqModel& model);

// Ground-truth LQ policy/value: mean R^-1 B' H x, covariance (gamma/2) R^-1,
// value x' H x + g.
struct LqBenchmark {
    LqModel model;
    RiccatiSolution riccati;

    VectorXd policy_mean(double t, const VectorXd& x) const;
    MatrixXd policy_covariance(double t) const;
    double value(double t, const VectorXd& x) const;
};

}  // namespace jd::bench
