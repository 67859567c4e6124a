#include "bench/merton.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace jd::bench {

namespace {

double foc(const MertonParams& q, double u) {
    double jump = 0.0;
    if (q.lambda != 0.0 && q.alpha != 0.0)
        jump = q.lambda * q.alpha * (std::pow(1.0 + q.alpha * u, q.p - 1.0) - 1.0);
    return (q.mu - q.r) + (q.p - 1.0) * q.sigma * q.sigma * u + jump;
}

double foc_derivative(const MertonParams& q, double u) {
    double jump = 0.0;
    if (q.lambda != 0.0 && q.alpha != 0.0)
        jump = q.lambda * q.alpha * q.alpha * (q.p - 1.0) * std::pow(1.0 + q.alpha * u, q.p - 2.0);
    return (q.p - 1.0) * q.sigma * q.sigma + jump;
}

}  // namespace

double MertonBenchmark::value(double x) const {
    return h_star / params.p * std::pow(x, params.p);
}

double MertonBenchmark::foc_residual() const { return foc(params, u_star); }

MertonBenchmark solve_merton_standard(const MertonParams& q) {
    if (!(q.p > 0.0 && q.p < 1.0)) throw std::invalid_argument("merton: need 0 < p < 1");
    if (!(q.sigma > 0.0)) throw std::invalid_argument("merton: need sigma > 0");

    // foc is strictly decreasing on the admissible bracket, so bisection
    // always lands on the unique root; Newton polishes it.
    double lo = q.alpha > 0.0 ? -1.0 / q.alpha + 1e-9 : -1e6;
    double hi = 1.0;
    while (foc(q, hi) > 0.0 && hi < 1e9) hi *= 2.0;
    if (foc(q, lo) < 0.0 || foc(q, hi) > 0.0)
        throw std::runtime_error("merton: no sign change in the bracket");
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (foc(q, mid) > 0.0 ? lo : hi) = mid;
    }
    double u = 0.5 * (lo + hi);
    for (int i = 0; i < 50; ++i) {
        const double f = foc(q, u);
        if (std::abs(f) < 1e-15) break;
        u -= f / foc_derivative(q, u);
    }
    if (!(1.0 + q.alpha * u > 0.0)) throw std::runtime_error("merton: 1 + alpha u* <= 0");

    const double growth = q.p * (q.r + (q.mu - q.r) * u) +
                          0.5 * q.p * (q.p - 1.0) * q.sigma * q.sigma * u * u +
                          q.lambda * (std::pow(1.0 + q.alpha * u, q.p) - 1.0 - q.p * q.alpha * u);
    if (!(q.beta > growth))
        throw std::runtime_error("merton: beta <= growth rate, value coefficient not positive");

    MertonBenchmark out;
    out.params = q;
    out.u_star = u;
    out.h_star = 1.0 / (q.beta - growth);
    return out;
}

namespace {

// second-order first/second difference matrices on a uniform grid,
// one-sided at both ends so the PIDE holds at every node
void difference_rows(std::size_t n, double h, std::size_t i, std::vector<std::size_t>& cols1,
                     std::vector<double>& w1, std::vector<std::size_t>& cols2,
                     std::vector<double>& w2) {
    cols1.clear();
    w1.clear();
    cols2.clear();
    w2.clear();
    if (i == 0) {
        cols1 = {0, 1, 2};
        w1 = {-1.5 / h, 2.0 / h, -0.5 / h};
        cols2 = {0, 1, 2, 3};
        w2 = {2.0 / (h * h), -5.0 / (h * h), 4.0 / (h * h), -1.0 / (h * h)};
    } else if (i + 1 == n) {
        cols1 = {n - 3, n - 2, n - 1};
        w1 = {0.5 / h, -2.0 / h, 1.5 / h};
        cols2 = {n - 4, n - 3, n - 2, n - 1};
        w2 = {-1.0 / (h * h), 4.0 / (h * h), -5.0 / (h * h), 2.0 / (h * h)};
    } else {
        cols1 = {i - 1, i + 1};
        w1 = {-0.5 / h, 0.5 / h};
        cols2 = {i - 1, i, i + 1};
        w2 = {1.0 / (h * h), -2.0 / (h * h), 1.0 / (h * h)};
    }
}

}  // namespace

double MertonEntropyBenchmark::value_at(double x) const {
    const double h = x_grid[1] - x_grid[0];
    const double pos = (x - x_grid.front()) / h;
    const auto n = static_cast<std::ptrdiff_t>(x_grid.size());
    auto k = static_cast<std::ptrdiff_t>(std::floor(pos));
    if (k < 0) k = 0;
    if (k >= n - 1) k = n - 2;
    const double w = pos - static_cast<double>(k);
    return (1.0 - w) * value[k] + w * value[k + 1];
}

Eigen::VectorXd MertonEntropyBenchmark::density_at(double x) const {
    const double h = x_grid[1] - x_grid[0];
    const double pos = (x - x_grid.front()) / h;
    const auto n = static_cast<std::ptrdiff_t>(x_grid.size());
    auto k = static_cast<std::ptrdiff_t>(std::floor(pos));
    if (k < 0) k = 0;
    if (k >= n - 1) k = n - 2;
    const double w = pos - static_cast<double>(k);
    return (1.0 - w) * gibbs.row(k).transpose() + w * gibbs.row(k + 1).transpose();
}

double MertonEntropyBenchmark::slice_mass(std::size_t ix) const {
    const double du = u_grid[1] - u_grid[0];
    double acc = 0.0;
    for (std::size_t j = 0; j < u_grid.size(); ++j) {
        const double w = (j == 0 || j + 1 == u_grid.size()) ? 0.5 : 1.0;
        acc += w * gibbs(ix, j);
    }
    return acc * du;
}

double MertonEntropyBenchmark::gibbs_mean(double x) const {
    const Eigen::VectorXd dens = density_at(x);
    double acc = 0.0, mass = 0.0;
    for (std::size_t j = 0; j < u_grid.size(); ++j) {
        const double w = (j == 0 || j + 1 == u_grid.size()) ? 0.5 : 1.0;
        acc += w * dens[j] * u_grid[j];
        mass += w * dens[j];
    }
    return acc / mass;
}

double MertonEntropyBenchmark::gibbs_mode(double x) const {
    const Eigen::VectorXd dens = density_at(x);
    Eigen::Index best = 0;
    dens.maxCoeff(&best);
    return u_grid[static_cast<std::size_t>(best)];
}

MertonEntropyBenchmark solve_merton_entropy_grid(const MertonParams& q, double gamma,
                                                 const MertonEntropyOptions& opts) {
    if (!(gamma > 0.0)) throw std::invalid_argument("merton entropy: gamma must be positive");
    const std::size_t nx = opts.n_x, nu = opts.n_u;
    const double hx = (opts.x_max - opts.x_min) / static_cast<double>(nx - 1);
    const double du = (opts.u_max - opts.u_min) / static_cast<double>(nu - 1);

    MertonEntropyBenchmark out;
    out.params = q;
    out.gamma = gamma;
    out.x_grid.resize(nx);
    out.u_grid.resize(nu);
    for (std::size_t i = 0; i < nx; ++i) out.x_grid[i] = opts.x_min + hx * static_cast<double>(i);
    for (std::size_t j = 0; j < nu; ++j) out.u_grid[j] = opts.u_min + du * static_cast<double>(j);

    std::vector<double> quad_w(nu, 1.0);
    quad_w.front() = quad_w.back() = 0.5;
    for (auto& w : quad_w) w *= du;

    // warm start from the unregularized solution
    Eigen::VectorXd V(nx);
    {
        const auto std_bench = solve_merton_standard(q);
        for (std::size_t i = 0; i < nx; ++i) V[i] = std_bench.value(out.x_grid[i]);
    }

    // jump interpolation stencils: x_i (1 + alpha u_j) -> two grid columns
    // (linear extrapolation from the boundary cell when outside)
    Eigen::MatrixXd jump_col0(nx, nu), jump_w0(nx, nu), jump_w1(nx, nu);
    out.extrapolated_points = 0;
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < nu; ++j) {
            const double y = out.x_grid[i] * (1.0 + q.alpha * out.u_grid[j]);
            double pos = (y - opts.x_min) / hx;
            if (pos < 0.0 || pos > static_cast<double>(nx - 1)) ++out.extrapolated_points;
            auto k = static_cast<std::ptrdiff_t>(std::floor(pos));
            if (k < 0) k = 0;
            if (k > static_cast<std::ptrdiff_t>(nx - 2)) k = static_cast<std::ptrdiff_t>(nx - 2);
            const double w = pos - static_cast<double>(k);
            jump_col0(i, j) = static_cast<double>(k);
            jump_w0(i, j) = 1.0 - w;
            jump_w1(i, j) = w;
        }

    std::vector<std::size_t> c1, c2;
    std::vector<double> w1, w2;

    auto hamiltonian = [&](const Eigen::VectorXd& Vc, Eigen::MatrixXd& H) {
        Eigen::VectorXd V1(nx), V2(nx);
        for (std::size_t i = 0; i < nx; ++i) {
            difference_rows(nx, hx, i, c1, w1, c2, w2);
            double d1 = 0.0, d2 = 0.0;
            for (std::size_t a = 0; a < c1.size(); ++a) d1 += w1[a] * Vc[c1[a]];
            for (std::size_t a = 0; a < c2.size(); ++a) d2 += w2[a] * Vc[c2[a]];
            V1[i] = d1;
            V2[i] = d2;
        }
        for (std::size_t i = 0; i < nx; ++i) {
            const double x = out.x_grid[i];
            const double f = std::pow(x, q.p) / q.p;
            for (std::size_t j = 0; j < nu; ++j) {
                const double u = out.u_grid[j];
                const auto k0 = static_cast<Eigen::Index>(jump_col0(i, j));
                const double Vy = jump_w0(i, j) * Vc[k0] + jump_w1(i, j) * Vc[k0 + 1];
                const double drift = (q.r + u * (q.mu - q.r)) * x;
                const double diff = 0.5 * q.sigma * q.sigma * u * u * x * x;
                const double jump = q.lambda * (Vy - Vc[i] - q.alpha * u * x * V1[i]);
                H(i, j) = drift * V1[i] + diff * V2[i] + jump + f;
            }
        }
    };

    auto rhs_of = [&](const Eigen::MatrixXd& H, Eigen::VectorXd& rhs) {
        for (std::size_t i = 0; i < nx; ++i) {
            double m = -1e300;
            for (std::size_t j = 0; j < nu; ++j) m = std::max(m, H(i, j) / gamma);
            double acc = 0.0;
            for (std::size_t j = 0; j < nu; ++j) acc += quad_w[j] * std::exp(H(i, j) / gamma - m);
            rhs[i] = gamma / q.beta * (m + std::log(acc));
        }
    };

    Eigen::MatrixXd H(nx, nu), Pi(nx, nu);
    Eigen::VectorXd rhs(nx), F(nx);
    Eigen::MatrixXd A(nx, nx);
    double residual = 1e300;
    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        hamiltonian(V, H);
        rhs_of(H, rhs);
        residual = (V - rhs).cwiseAbs().maxCoeff();
        if (residual < opts.tolerance) break;

        // Gibbs weights (discrete distribution over the u grid)
        for (std::size_t i = 0; i < nx; ++i) {
            double m = -1e300;
            for (std::size_t j = 0; j < nu; ++j) m = std::max(m, H(i, j) / gamma);
            double z = 0.0;
            for (std::size_t j = 0; j < nu; ++j) {
                Pi(i, j) = quad_w[j] * std::exp(H(i, j) / gamma - m);
                z += Pi(i, j);
            }
            for (std::size_t j = 0; j < nu; ++j) Pi(i, j) /= z;
        }

        // implicit linear PIDE under the frozen Gibbs policy:
        // beta V = E_pi[L^u V + f] - gamma E_pi[log density]
        A.setZero();
        for (std::size_t i = 0; i < nx; ++i) {
            const double x = out.x_grid[i];
            double eu = 0.0, eu2 = 0.0;
            for (std::size_t j = 0; j < nu; ++j) {
                eu += Pi(i, j) * out.u_grid[j];
                eu2 += Pi(i, j) * out.u_grid[j] * out.u_grid[j];
            }
            difference_rows(nx, hx, i, c1, w1, c2, w2);
            const double adv = (q.r + eu * (q.mu - q.r)) * x - q.lambda * q.alpha * eu * x;
            for (std::size_t a = 0; a < c1.size(); ++a) A(i, c1[a]) += adv * w1[a];
            const double diff = 0.5 * q.sigma * q.sigma * eu2 * x * x;
            for (std::size_t a = 0; a < c2.size(); ++a) A(i, c2[a]) += diff * w2[a];
            A(i, i) -= q.lambda;
            for (std::size_t j = 0; j < nu; ++j) {
                const auto k0 = static_cast<Eigen::Index>(jump_col0(i, j));
                A(i, k0) += q.lambda * Pi(i, j) * jump_w0(i, j);
                A(i, k0 + 1) += q.lambda * Pi(i, j) * jump_w1(i, j);
            }
            double ent = 0.0;
            for (std::size_t j = 0; j < nu; ++j) {
                const double dens = Pi(i, j) / quad_w[j];
                if (Pi(i, j) > 0.0) ent += Pi(i, j) * std::log(dens);
            }
            F[i] = std::pow(x, q.p) / q.p - gamma * ent;
        }
        const Eigen::VectorXd V_new =
            (q.beta * Eigen::MatrixXd::Identity(nx, nx) - A).partialPivLu().solve(F);
        V = (1.0 - opts.damping) * V + opts.damping * V_new;
        if (!V.allFinite()) throw std::runtime_error("merton entropy: fixed point diverged");
    }
    if (residual >= opts.tolerance)
        throw std::runtime_error("merton entropy: fixed point failed to contract, residual=" +
                                 std::to_string(residual));

    out.value = V;
    out.iterations = it;
    out.fixed_point_residual = residual;

    // final Gibbs density (per-u density, normalized by the quadrature)
    hamiltonian(V, H);
    out.gibbs.resize(nx, nu);
    for (std::size_t i = 0; i < nx; ++i) {
        double m = -1e300;
        for (std::size_t j = 0; j < nu; ++j) m = std::max(m, H(i, j) / gamma);
        double z = 0.0;
        for (std::size_t j = 0; j < nu; ++j) z += quad_w[j] * std::exp(H(i, j) / gamma - m);
        for (std::size_t j = 0; j < nu; ++j) out.gibbs(i, j) = std::exp(H(i, j) / gamma - m) / z;
    }
    return out;
}

}  // namespace jd::bench
