#include "bench/riccati.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace jd::bench {

namespace {

MatrixXd sym(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

MatrixXd riccati_rhs(const MatrixXd& H, const MatrixXd& B, const MatrixXd& R, const MatrixXd& Q,
                     double beta) {
    const MatrixXd S = B * R.inverse() * B.transpose();
    return beta * H + Q - H * S * H;
}

double g_rhs(double g, const MatrixXd& H, const MatrixXd& Sigma, const VectorXd& alpha,
             const VectorXd& lambda, double beta, double c_gamma) {
    const MatrixXd DA = alpha.asDiagonal();
    const MatrixXd LA = lambda.asDiagonal();
    return beta * g - (Sigma * Sigma.transpose() * H).trace() - (LA * DA * H * DA).trace() -
           c_gamma;
}

// Newton polish for the algebraic equation beta H + Q - H S H = 0. The
// correction D solves beta D - D S H - H S D = -res (Kronecker form).
MatrixXd newton_polish_are(MatrixXd H, const MatrixXd& S, const MatrixXd& Q, double beta) {
    const Eigen::Index d = H.rows();
    for (int it = 0; it < 50; ++it) {
        const MatrixXd res = beta * H + Q - H * S * H;
        if (res.cwiseAbs().maxCoeff() < 1e-13) break;
        const MatrixXd SH = S * H;
        const MatrixXd HS = H * S;
        MatrixXd A = MatrixXd::Zero(d * d, d * d);
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j) {
                const Eigen::Index row = i * d + j;
                A(row, row) += beta;
                // -(D S H)_{ij} = -sum_k D_ik (SH)_kj ; -(H S D)_{ij} = -sum_k (HS)_ik D_kj
                for (Eigen::Index k = 0; k < d; ++k) {
                    A(row, i * d + k) -= SH(k, j);
                    A(row, k * d + j) -= HS(i, k);
                }
            }
        VectorXd rhs(d * d);
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j) rhs(i * d + j) = -res(i, j);
        const VectorXd delta = A.partialPivLu().solve(rhs);
        MatrixXd D(d, d);
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j) D(i, j) = delta(i * d + j);
        H = sym(H + D);
    }
    return H;
}

}  // namespace

double entropy_rate_constant(double gamma, std::size_t m, const MatrixXd& R) {
    if (gamma == 0.0) return 0.0;
    const double logdet = std::log(R.determinant());
    return 0.5 * gamma *
           (static_cast<double>(m) * std::log(3.14159265358979323846 * gamma) - logdet);
}

StationaryPair solve_are(const MatrixXd& B, const MatrixXd& Sigma, const VectorXd& alpha,
                         const VectorXd& lambda, const MatrixXd& R, const MatrixXd& Q, double beta,
                         double gamma) {
    if (!(beta > 0.0)) throw std::invalid_argument("solve_are: beta must be positive");
    const Eigen::Index d = B.rows();
    const MatrixXd S = B * R.inverse() * B.transpose();

    // Invariant-subspace method on the Hamiltonian-type matrix; the branch
    // with eigenvalues of positive real part yields the H whose closed loop
    // S H is Hurwitz.
    MatrixXd M(2 * d, 2 * d);
    M.topLeftCorner(d, d) = 0.5 * beta * MatrixXd::Identity(d, d);
    M.topRightCorner(d, d) = -S;
    M.bottomLeftCorner(d, d) = -Q;
    M.bottomRightCorner(d, d) = -0.5 * beta * MatrixXd::Identity(d, d);

    Eigen::EigenSolver<MatrixXd> es(M);
    if (es.info() != Eigen::Success) throw std::runtime_error("solve_are: eigensolver failed");
    Eigen::MatrixXcd basis(2 * d, d);
    Eigen::Index col = 0;
    for (Eigen::Index i = 0; i < 2 * d && col < d; ++i) {
        if (es.eigenvalues()[i].real() > 0.0) basis.col(col++) = es.eigenvectors().col(i);
    }
    if (col != d) throw std::runtime_error("solve_are: no stabilizing solution found");
    const Eigen::MatrixXcd V1 = basis.topRows(d);
    const Eigen::MatrixXcd V2 = basis.bottomRows(d);
    const Eigen::MatrixXcd Hc = V2 * V1.partialPivLu().solve(Eigen::MatrixXcd::Identity(d, d));
    MatrixXd H = sym(Hc.real());
    H = newton_polish_are(H, S, Q, beta);

    // strict negativity when Q is definite; H = 0 (marginal loop) is the
    // stabilizing branch for Q = 0
    const Eigen::VectorXcd closed_loop = Eigen::EigenSolver<MatrixXd>(S * H).eigenvalues();
    for (Eigen::Index i = 0; i < d; ++i)
        if (closed_loop[i].real() > 1e-10)
            throw std::runtime_error("solve_are: selected branch is not stabilizing");

    StationaryPair out;
    out.H = H;
    const double c_gamma = entropy_rate_constant(gamma, static_cast<std::size_t>(R.rows()), R);
    const MatrixXd DA = alpha.asDiagonal();
    const MatrixXd LA = lambda.asDiagonal();
    out.g = ((Sigma * Sigma.transpose() * H).trace() + (LA * DA * H * DA).trace() + c_gamma) / beta;
    return out;
}

MatrixXd RiccatiSolution::H_at(double t) const {
    if (H.empty()) throw std::logic_error("riccati solution: empty");
    double tt = t - t0;
    if (period > 0.0) tt = tt - period * std::floor(tt / period);
    const double pos = tt / dt;
    const auto n = static_cast<std::ptrdiff_t>(H.size()) - 1;
    auto k = static_cast<std::ptrdiff_t>(std::floor(pos));
    if (k < 0) k = 0;
    if (k >= n) return H.back();
    const double w = pos - static_cast<double>(k);
    return (1.0 - w) * H[k] + w * H[k + 1];
}

double RiccatiSolution::g_at(double t) const {
    if (g.empty()) throw std::logic_error("riccati solution: empty");
    double tt = t - t0;
    if (period > 0.0) tt = tt - period * std::floor(tt / period);
    const double pos = tt / dt;
    const auto n = static_cast<std::ptrdiff_t>(g.size()) - 1;
    auto k = static_cast<std::ptrdiff_t>(std::floor(pos));
    if (k < 0) k = 0;
    if (k >= n) return g.back();
    const double w = pos - static_cast<double>(k);
    return (1.0 - w) * g[k] + w * g[k + 1];
}

namespace {

// One RK4 step of the joint (H, g) system in the direction `sign`.
void rk4_step(const LqModel& model, double t, double sign, double h, MatrixXd& H, double& g) {
    auto f = [&](double s, const MatrixXd& Hs, double gs, MatrixXd& dH, double& dg) {
        const MatrixXd R = model.R(s);
        const double c_gamma = entropy_rate_constant(model.gamma, model.m, R);
        dH = sign * riccati_rhs(Hs, model.B(s), R, model.Q(s), model.beta);
        dg = sign * g_rhs(gs, Hs, model.Sigma(s), model.alpha(s), model.lambda(s), model.beta,
                          c_gamma);
    };
    MatrixXd k1, k2, k3, k4;
    double l1, l2, l3, l4;
    f(t, H, g, k1, l1);
    f(t + sign * 0.5 * h, H + 0.5 * h * k1, g + 0.5 * h * l1, k2, l2);
    f(t + sign * 0.5 * h, H + 0.5 * h * k2, g + 0.5 * h * l2, k3, l3);
    f(t + sign * h, H + h * k3, g + h * l3, k4, l4);
    H = sym(H + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    g += (h / 6.0) * (l1 + 2.0 * l2 + 2.0 * l3 + l4);
}

}  // namespace

RiccatiSolution integrate_riccati_backward(const LqModel& model, double horizon,
                                           double t_infinity, double ode_dt) {
    if (t_infinity < horizon) throw std::invalid_argument("riccati: t_infinity < horizon");
    const auto pair = solve_are(model.B_inf, model.Sigma_inf, model.alpha_inf, model.lambda_inf,
                                model.R_inf, model.Q_inf, model.beta, model.gamma);
    const auto n_total = static_cast<std::size_t>(std::llround(t_infinity / ode_dt));
    const auto n_keep = static_cast<std::size_t>(std::llround(horizon / ode_dt));

    std::vector<MatrixXd> H_all(n_total + 1);
    std::vector<double> g_all(n_total + 1);
    MatrixXd H = pair.H;
    double g = pair.g;
    H_all[n_total] = H;
    g_all[n_total] = g;
    for (std::size_t k = n_total; k-- > 0;) {
        const double t = static_cast<double>(k + 1) * ode_dt;
        rk4_step(model, t, -1.0, ode_dt, H, g);
        if (!H.allFinite() || !std::isfinite(g))
            throw std::runtime_error("riccati: backward integration blew up at t=" +
                                     std::to_string(t));
        H_all[k] = H;
        g_all[k] = g;
    }

    RiccatiSolution sol;
    sol.dt = ode_dt;
    sol.H.assign(H_all.begin(), H_all.begin() + static_cast<std::ptrdiff_t>(n_keep) + 1);
    sol.g.assign(g_all.begin(), g_all.begin() + static_cast<std::ptrdiff_t>(n_keep) + 1);
    sol.H_stationary = pair.H;
    sol.g_stationary = pair.g;
    sol.has_stationary = true;
    return sol;
}

RiccatiSolution solve_periodic_riccati(const LqModel& model, double ode_dt, double damping,
                                       int max_iterations, double tolerance) {
    if (!(model.period > 0.0)) throw std::invalid_argument("periodic riccati: period required");
    const double P = model.period;
    const auto n = static_cast<std::size_t>(std::llround(P / ode_dt));

    // start from the ARE solution at time-averaged coefficients
    MatrixXd H_end = solve_are(model.B_inf, model.Sigma_inf, model.alpha_inf, model.lambda_inf,
                               model.R_inf, model.Q_inf, model.beta, model.gamma)
                         .H;

    std::vector<MatrixXd> H_path(n + 1);
    auto integrate_back = [&](const MatrixXd& HP) {
        MatrixXd H = HP;
        double g = 0.0;
        H_path[n] = H;
        for (std::size_t k = n; k-- > 0;) {
            const double t = static_cast<double>(k + 1) * ode_dt;
            rk4_step(model, t, -1.0, ode_dt, H, g);
            H_path[k] = H;
        }
        return H_path[0];
    };

    double gap = 0.0;
    bool converged = false;
    double omega = damping;
    double prev_gap = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iterations; ++it) {
        const MatrixXd H0 = integrate_back(H_end);
        gap = (H0 - H_end).cwiseAbs().maxCoeff();
        if (gap < tolerance) {
            converged = true;
            break;
        }
        if (gap > prev_gap) omega *= 0.5;  // oscillation guard
        if (omega < 1e-4)
            throw std::runtime_error("periodic riccati: shooting stalled (damping exhausted)");
        prev_gap = gap;
        H_end = sym(H_end + omega * (H0 - H_end));
    }
    if (!converged)
        throw std::runtime_error("periodic riccati: shooting did not converge, gap=" +
                                 std::to_string(gap));

    // g from the discounted integral over one period (trapezoid on the grid)
    std::vector<double> psi(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        const double t = static_cast<double>(k) * ode_dt;
        const MatrixXd Sigma = model.Sigma(t);
        const MatrixXd DA = model.alpha(t).asDiagonal();
        const MatrixXd LA = model.lambda(t).asDiagonal();
        psi[k] = (Sigma * Sigma.transpose() * H_path[k]).trace() +
                 (LA * DA * H_path[k] * DA).trace() +
                 entropy_rate_constant(model.gamma, model.m, model.R(t));
    }
    const double beta = model.beta;
    const double norm = 1.0 / (1.0 - std::exp(-beta * P));
    std::vector<double> g_path(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= n; ++j) {
            // psi extended periodically; trapezoid weights on [0, P]
            const std::size_t idx = (k + j) % n;
            const double w = (j == 0 || j == n) ? 0.5 : 1.0;
            acc += w * std::exp(-beta * static_cast<double>(j) * ode_dt) * psi[idx];
        }
        g_path[k] = norm * acc * ode_dt;
    }

    RiccatiSolution sol;
    sol.dt = ode_dt;
    sol.H = std::move(H_path);
    sol.g = std::move(g_path);
    sol.period = P;
    return sol;
}

double riccati_residual(const RiccatiSolution& sol, const LqModel& model) {
    double worst = 0.0;
    for (std::size_t k = 1; k + 1 < sol.H.size(); ++k) {
        const double t = sol.t0 + static_cast<double>(k) * sol.dt;
        const MatrixXd dH = (sol.H[k + 1] - sol.H[k - 1]) / (2.0 * sol.dt);
        const MatrixXd rhs = riccati_rhs(sol.H[k], model.B(t), model.R(t), model.Q(t), model.beta);
        worst = std::max(worst, (dH - rhs).cwiseAbs().maxCoeff());
    }
    return worst;
}

VectorXd LqBenchmark::policy_mean(double t, const VectorXd& x) const {
    const MatrixXd R = model.R(t);
    const MatrixXd B = model.B(t);
    return R.inverse() * B.transpose() * riccati.H_at(t) * x;
}

MatrixXd LqBenchmark::policy_covariance(double t) const {
    return 0.5 * model.gamma * model.R(t).inverse();
}

double LqBenchmark::value(double t, const VectorXd& x) const {
    return x.dot(riccati.H_at(t) * x) + riccati.g_at(t);
}

}  // namespace jd::bench
