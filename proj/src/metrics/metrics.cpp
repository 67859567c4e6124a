#include "metrics/metrics.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace jd::metrics {

namespace {

double trapezoid(const VectorXd& f, double dt) {
    if (f.size() < 2) return 0.0;
    double acc = 0.5 * (f[0] + f[f.size() - 1]);
    for (Eigen::Index i = 1; i + 1 < f.size(); ++i) acc += f[i];
    return acc * dt;
}

}  // namespace

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["E_X"] = e_x;
    j["E_V"] = e_v;
    j["E_u"] = e_u;
    j["T_eval"] = t_eval;
    j["eps_X"] = eps_x;
    j["eps_V"] = eps_v;
    j["eps_u"] = eps_u;
    if (!per_agent_e_x.empty()) j["per_agent_E_X"] = per_agent_e_x;
    if (!per_agent_e_v.empty()) j["per_agent_E_V"] = per_agent_e_v;
    if (!per_agent_e_u.empty()) j["per_agent_E_u"] = per_agent_e_u;
    return j.dump(2);
}

std::string MetricReport::csv_header() { return "E_X,E_V,E_u,T_eval,eps_X,eps_V,eps_u"; }

std::string MetricReport::csv_row() const {
    std::ostringstream os;
    os << e_x << "," << e_v << "," << e_u << "," << t_eval << "," << eps_x << "," << eps_v << ","
       << eps_u;
    return os.str();
}

double rmse_state(const MatrixXd& learned, const MatrixXd& benchmark, double dt, double eps_x) {
    if (learned.rows() != benchmark.rows() || learned.cols() != benchmark.cols())
        throw std::invalid_argument("rmse_state: paths must share the grid");
    VectorXd num(learned.rows()), den(learned.rows());
    for (Eigen::Index k = 0; k < learned.rows(); ++k) {
        num[k] = (learned.row(k) - benchmark.row(k)).squaredNorm();
        den[k] = benchmark.row(k).squaredNorm();
    }
    return trapezoid(num, dt) / (trapezoid(den, dt) + eps_x);
}

double rmse_value(const VectorXd& learned, const VectorXd& benchmark, double dt, double eps_v) {
    if (learned.size() != benchmark.size())
        throw std::invalid_argument("rmse_value: series must share the grid");
    VectorXd num(learned.size()), den(learned.size());
    for (Eigen::Index k = 0; k < learned.size(); ++k) {
        const double d = learned[k] - benchmark[k];
        num[k] = d * d;
        den[k] = benchmark[k] * benchmark[k];
    }
    return trapezoid(num, dt) / (trapezoid(den, dt) + eps_v);
}

double control_error_l2(const MatrixXd& learned_u, const MatrixXd& benchmark_u, double dt,
                        double eps_u) {
    if (learned_u.rows() != benchmark_u.rows() || learned_u.cols() != benchmark_u.cols())
        throw std::invalid_argument("control_error: controls must share the grid");
    VectorXd num(learned_u.rows()), den(learned_u.rows());
    for (Eigen::Index k = 0; k < learned_u.rows(); ++k) {
        num[k] = (learned_u.row(k) - benchmark_u.row(k)).squaredNorm();
        den[k] = benchmark_u.row(k).squaredNorm();
    }
    return trapezoid(num, dt) / (trapezoid(den, dt) + eps_u);
}

double kl_gaussian_diag(const VectorXd& mu1, const VectorXd& var1, const VectorXd& mu2,
                        const VectorXd& var2) {
    if (mu1.size() != mu2.size() || var1.size() != var2.size() || mu1.size() != var1.size())
        throw std::invalid_argument("kl_gaussian: dimension mismatch");
    double kl = 0.0;
    for (Eigen::Index i = 0; i < mu1.size(); ++i) {
        if (!(var1[i] > 0.0) || !(var2[i] > 0.0))
            throw std::invalid_argument("kl_gaussian: variances must be positive");
        const double dm = mu1[i] - mu2[i];
        kl += 0.5 * (std::log(var2[i] / var1[i]) + (var1[i] + dm * dm) / var2[i] - 1.0);
    }
    return kl;
}

double kl_grid(const VectorXd& benchmark_density, const VectorXd& learned_density,
               const VectorXd& u_grid, double norm_tol) {
    const Eigen::Index n = u_grid.size();
    if (benchmark_density.size() != n || learned_density.size() != n)
        throw std::invalid_argument("kl_grid: densities must live on the u grid");
    const double du = u_grid[1] - u_grid[0];
    auto mass = [&](const VectorXd& p) {
        double acc = 0.5 * (p[0] + p[n - 1]);
        for (Eigen::Index j = 1; j + 1 < n; ++j) acc += p[j];
        return acc * du;
    };
    const double mb = mass(benchmark_density);
    const double ml = mass(learned_density);
    if (std::abs(mb - 1.0) > norm_tol || std::abs(ml - 1.0) > norm_tol)
        throw std::runtime_error("kl_grid: unnormalized density on the KL grid (masses " +
                                 std::to_string(mb) + ", " + std::to_string(ml) + ")");
    double kl = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double p = benchmark_density[j];
        if (p <= 0.0) continue;
        const double q = std::max(learned_density[j], 1e-300);
        const double w = (j == 0 || j + 1 == n) ? 0.5 : 1.0;
        kl += w * p * std::log(p / q) * du;
    }
    return kl;
}

double time_average(const VectorXd& series, double dt) {
    if (series.size() < 2) return series.size() == 1 ? series[0] : 0.0;
    const double horizon = dt * static_cast<double>(series.size() - 1);
    return trapezoid(series, dt) / horizon;
}

double occupation_mass(double beta, const sde::TimeGrid& grid) {
    if (!(beta > 0.0)) throw std::invalid_argument("occupation_mass: beta must be positive");
    if (grid.steps == 0) return 0.0;
    VectorXd f(grid.steps + 1);
    for (std::size_t k = 0; k <= grid.steps; ++k) f[static_cast<Eigen::Index>(k)] =
        std::exp(-beta * grid.t(k));
    return trapezoid(f, grid.delta_t);
}

}  // namespace jd::metrics
