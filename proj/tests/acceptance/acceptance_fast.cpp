// Acceptance criteria 1-6: gradient integrity, SDE correctness, flow
// integrity, benchmark solver residuals, first-order advantage consistency,
// and the martingale correction. One [PASS]/[FAIL] line per criterion;
// nonzero exit if any criterion fails.
#include "bench/game.hpp"
#include "bench/merton.hpp"
#include "bench/riccati.hpp"
#include "learner/learner.hpp"
#include "metrics/metrics.hpp"
#include "policy/policy.hpp"
#include "run/problems.hpp"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

using namespace jd;
using sde::MatrixXd;
using sde::VectorXd;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({1e-10, std::abs(a), std::abs(b)});
}

// max relative error between backward gradients and central finite
// differences of a mean-square loss, over >= 100 coordinates
double gradcheck(nn::ResidualMlp& net, Rng& rng, int* checked_out) {
    auto x = nn::make_tensor(5, net.input_dim());
    for (std::size_t i = 0; i < x->size(); ++i) x->data()[i] = rng.normal();
    for (auto& p : net.parameters())
        for (std::size_t i = 0; i < p->size(); ++i) p->data()[i] += 0.2 * rng.normal();

    auto loss_value = [&]() {
        nn::Tape t;
        return nn::mean_all(&t, nn::square(&t, net.forward(&t, x)))->scalar();
    };
    nn::Tape tape;
    auto loss = nn::mean_all(&tape, nn::square(&tape, net.forward(&tape, x)));
    tape.backward(loss);

    double worst = 0.0;
    int checked = 0;
    for (auto& p : net.parameters()) {
        const std::size_t stride = std::max<std::size_t>(1, p->size() / 16);
        for (std::size_t j = 0; j < p->size(); j += stride) {
            const double h = 1e-5;
            double* w = p->data();
            const double saved = w[j];
            w[j] = saved + h;
            const double up = loss_value();
            w[j] = saved - h;
            const double dn = loss_value();
            w[j] = saved;
            const double fd = (up - dn) / (2.0 * h);
            const double ad = p->grad()[j];
            if (std::abs(fd) < 1e-12 && std::abs(ad) < 1e-12) continue;
            worst = std::max(worst, relative_error(fd, ad));
            ++checked;
        }
    }
    *checked_out = checked;
    return worst;
}

void criterion_1_gradients() {
    Rng rng(2025);
    double worst = 0.0;
    int total = 0;
    // every architecture the experiments instantiate
    std::vector<nn::ResidualMlp> nets;
    nets.emplace_back(2, 11, 3, 1, rng);    // critic, d=1
    nets.emplace_back(6, 15, 3, 1, rng);    // critic, d=5
    nets.emplace_back(3, 12, 3, 1, rng);    // game critic (t, x, y)
    nets.emplace_back(2, 11, 3, 2, rng);    // policy base, learnable std
    nets.emplace_back(6, 15, 3, 5, rng);    // policy base, d=5 mean head
    nets.emplace_back(2, 32, 2, 17, rng);   // spline conditioner
    for (auto& net : nets) {
        int checked = 0;
        worst = std::max(worst, gradcheck(net, rng, &checked));
        total += checked;
    }
    report(1, "gradient integrity", worst < 1e-4 && total >= 100,
           "max rel err " + std::to_string(worst) + " over " + std::to_string(total) +
               " coordinates");
}

void criterion_2_sde() {
    // compensated single-step increments, lambda 0.2, alpha 0.3, dt 0.01
    const double lambda = 0.2, alpha = 0.3, dt = 0.01;
    Rng rng(7);
    const int n = 1000000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dx = alpha * (rng.poisson(lambda * dt) - lambda * dt);
        sum += dx;
        sumsq += dx * dx;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double se = std::sqrt(var / n);
    const bool jump_ok = std::abs(mean) < 3.0 * se;

    const double m1 = metrics::occupation_mass(1.0, sde::TimeGrid(5000, 0.01));
    const double m2 = metrics::occupation_mass(2.0, sde::TimeGrid(5000, 0.01));
    const bool mass_ok = std::abs(m1 - 1.0) < 0.01 && std::abs(m2 - 0.5) / 0.5 < 0.01;
    report(2, "SDE correctness", jump_ok && mass_ok,
           "jump mean " + std::to_string(mean) + " (3se " + std::to_string(3.0 * se) +
               "), masses " + std::to_string(m1) + ", " + std::to_string(m2));
}

void criterion_3_flow() {
    Rng rng(11);
    policy::SplineFlow flow(1, 1, 6, 2.5, 32, 2, rng);
    for (auto& p : flow.parameters())
        for (std::size_t i = 0; i < p->size(); ++i) p->data()[i] += 0.4 * rng.normal();

    const std::size_t n = 10000;
    MatrixXd states(n, 1);
    auto z = nn::make_tensor(n, 1);
    Rng zr(3);
    for (std::size_t i = 0; i < n; ++i) {
        states(static_cast<Eigen::Index>(i), 0) = 0.5 + 0.001 * static_cast<double>(i % 97);
        if (i < 200) z->at(i, 0) = -3.0 + 6.0 * static_cast<double>(i) / 199.0;
        else z->at(i, 0) = 3.0 * zr.normal();
    }
    auto fwd = flow.forward(nullptr, z, 0.2, states);
    auto inv = flow.inverse(nullptr, fwd.value, 0.2, states);
    double worst_rt = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        worst_rt = std::max(worst_rt, std::abs(inv.value->at(i, 0) - z->at(i, 0)));

    // analytic log-det vs numerical derivative
    double worst_ld = 0.0;
    for (int i = 0; i < 400; ++i) {
        const double zv = 2.45 * (2.0 * zr.uniform() - 1.0);
        const double h = 1e-6;
        MatrixXd s3 = MatrixXd::Constant(3, 1, 0.4 + 0.4 * zr.uniform());
        auto zz = nn::make_tensor(3, 1, {zv, zv + h, zv - h});
        auto res = flow.forward(nullptr, zz, 0.3, s3);
        const double num = (res.value->at(1, 0) - res.value->at(2, 0)) / (2.0 * h);
        if (num <= 0.0) continue;
        worst_ld = std::max(worst_ld, std::abs(res.log_det->at(0, 0) - std::log(num)) /
                                          std::max(1.0, std::abs(std::log(num))));
    }

    // 1-d density normalization through base + flow + squash
    policy::PolicyConfig pc;
    pc.state_dim = 1;
    pc.control_dim = 1;
    pc.hidden_width = 11;
    pc.depth = 3;
    pc.learnable_std = true;
    pc.init_std = 0.4;
    pc.flow.enabled = true;
    pc.squash.enabled = true;
    policy::FlowPolicy pol(pc, rng);
    pol.set_update_count(60);
    for (auto& p : pol.all_parameters())
        for (std::size_t i = 0; i < p->size(); ++i) p->data()[i] += 0.1 * rng.normal();
    double worst_norm = 0.0;
    for (double x : {0.5, 1.0, 1.8}) {
        const int grid_n = 4000;
        double mass = 0.0;
        MatrixXd srep = MatrixXd::Constant(grid_n, 1, x);
        MatrixXd uu(grid_n, 1);
        for (int j = 0; j < grid_n; ++j) uu(j, 0) = (j + 0.5) / grid_n;
        auto lp = pol.log_prob_batch(nullptr, 0.5, srep, uu);
        for (int j = 0; j < grid_n; ++j) mass += std::exp(lp->at(static_cast<std::size_t>(j), 0));
        mass /= grid_n;
        worst_norm = std::max(worst_norm, std::abs(mass - 1.0));
    }

    report(3, "flow integrity", worst_rt < 1e-6 && worst_ld < 1e-4 && worst_norm < 1e-3,
           "round trip " + std::to_string(worst_rt) + ", log-det err " + std::to_string(worst_ld) +
               ", norm err " + std::to_string(worst_norm));
}

void criterion_4_benchmarks() {
    std::string detail;
    bool ok = true;

    // ARE with a stabilizing closed loop
    {
        auto cfg = run::default_config("lq-homogeneous");
        cfg.dim = 5;
        auto problem = run::build_lq(cfg);
        const auto pair = bench::solve_are(problem.lq.B_inf, problem.lq.Sigma_inf,
                                           problem.lq.alpha_inf, problem.lq.lambda_inf,
                                           problem.lq.R_inf, problem.lq.Q_inf, 1.0, 0.05);
        const MatrixXd S = problem.lq.B_inf * problem.lq.R_inf.inverse() *
                           problem.lq.B_inf.transpose();
        const double res =
            (1.0 * pair.H + problem.lq.Q_inf - pair.H * S * pair.H).cwiseAbs().maxCoeff();
        ok = ok && res < 1e-8;
        detail += "ARE " + std::to_string(res);
    }
    // backward Riccati
    {
        auto cfg = run::default_config("lq-convergent");
        auto problem = run::build_lq(cfg);
        const double res = bench::riccati_residual(problem.riccati, problem.lq);
        ok = ok && res < 1e-6;
        detail += ", backward " + std::to_string(res);
    }
    // periodic shooting
    {
        auto cfg = run::default_config("lq-periodic");
        auto problem = run::build_lq(cfg);
        const double res = bench::riccati_residual(problem.riccati, problem.lq);
        const double gap =
            (problem.riccati.H.front() - problem.riccati.H.back()).cwiseAbs().maxCoeff();
        ok = ok && res < 1e-6 && gap < 1e-6;
        detail += ", periodic " + std::to_string(res) + "/" + std::to_string(gap);
    }
    // Merton
    {
        bench::MertonParams q;  // table defaults
        const auto mb = bench::solve_merton_standard(q);
        ok = ok && std::abs(mb.foc_residual()) < 1e-10 && std::abs(mb.u_star - 0.2252) < 1e-3;
        detail += ", merton u* " + std::to_string(mb.u_star);
    }
    // game
    {
        auto cfg = run::default_config("game");
        const auto gb = bench::solve_game(run::build_game(cfg));
        double worst = 0.0;
        bool beta_ok = true;
        for (std::size_t i = 0; i < 2; ++i) {
            worst = std::max(worst, std::abs(gb.psi_prime(i, gb.u_star[i])));
            beta_ok = beta_ok && gb.params.beta > gb.lambda_star[i];
        }
        ok = ok && worst < 1e-10 && beta_ok;
        detail += ", game psi' " + std::to_string(worst);
    }
    report(4, "benchmark solver residuals", ok, detail);
}

// one-step conditional expectation of the advantage estimator for the
// homogeneous LQ problem, exact in the Euler discretization
double lq_advantage_bias(const bench::LqModel& m, const MatrixXd& H, double g, double beta,
                         double dt, double t, const VectorXd& x, const VectorXd& u) {
    const MatrixXd B = m.B(t);
    const MatrixXd Sigma = m.Sigma(t);
    const VectorXd alpha = m.alpha(t);
    const VectorXd lambda = m.lambda(t);
    const MatrixXd R = m.R(t);
    const MatrixXd Q = m.Q(t);
    const double f = -(u.dot(R * u) + x.dot(Q * x));

    // E J(X') with X' = x + B u dt + Sigma dW + compensated jumps
    const VectorXd mu = x + B * u * dt;
    MatrixXd cov = Sigma * Sigma.transpose() * dt;
    for (Eigen::Index i = 0; i < alpha.size(); ++i)
        cov(i, i) += lambda[i] * dt * alpha[i] * alpha[i];
    const double ej_next = mu.dot(H * mu) + (H * cov).trace() + g;
    const double j_now = x.dot(H * x) + g;
    const double a_hat = (f * dt + std::exp(-beta * dt) * ej_next - j_now) / dt;

    // q(t, x, u) from the generator
    double jump_term = 0.0;
    for (Eigen::Index i = 0; i < alpha.size(); ++i)
        jump_term += lambda[i] * alpha[i] * alpha[i] * H(i, i);
    const double q = 2.0 * u.dot(B.transpose() * H * x) + (Sigma * Sigma.transpose() * H).trace() +
                     jump_term + f - beta * j_now;
    return a_hat - q;  // the gamma log pi terms cancel exactly
}

void criterion_5_advantage_consistency() {
    auto cfg = run::default_config("lq-homogeneous");  // gamma 0.05
    auto problem = run::build_lq(cfg);
    const auto bench = problem.benchmark();
    const MatrixXd H = problem.riccati.H_stationary;
    const double g = problem.riccati.g_stationary;

    // 1e5 (t, x, u) samples from the optimal stochastic policy
    run::FeedbackSampler mean_sampler(1, [&](double t, const MatrixXd& states) {
        MatrixXd u(states.rows(), 1);
        for (Eigen::Index l = 0; l < states.rows(); ++l)
            u.row(l) = bench.policy_mean(t, states.row(l).transpose()).transpose();
        return u;
    });
    const std::size_t L = 100, K = 1000;
    auto batch = sde::rollout_batch(problem.model, sde::TimeGrid(K, 0.01), mean_sampler, L, 99);
    const double sigma_star = std::sqrt(bench.policy_covariance(0.0)(0, 0));
    Rng urng(123);

    double bias_coarse = 0.0, bias_fine = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < K; k += 1) {
        const double t = batch.grid.t(k);
        for (std::size_t l = 0; l < L; ++l) {
            const VectorXd x = batch.states[k].row(l).transpose();
            VectorXd u = batch.actions[k].row(l).transpose();
            u[0] += sigma_star * urng.normal();  // sample the gaussian policy
            bias_coarse += lq_advantage_bias(problem.lq, H, g, 1.0, 0.02, t, x, u);
            bias_fine += lq_advantage_bias(problem.lq, H, g, 1.0, 0.01, t, x, u);
            ++n;
        }
    }
    bias_coarse /= static_cast<double>(n);
    bias_fine /= static_cast<double>(n);
    const double ratio = std::abs(bias_coarse) / std::abs(bias_fine);
    report(5, "first-order advantage consistency", ratio > 1.5 && ratio < 3.0,
           "bias(dt=0.02) " + std::to_string(bias_coarse) + ", bias(dt=0.01) " +
               std::to_string(bias_fine) + ", ratio " + std::to_string(ratio) + " over " +
               std::to_string(n) + " samples");
}

void criterion_6_martingale_correction() {
    auto cfg = run::default_config("lq-homogeneous");
    cfg.train.gamma = 0.0;
    auto problem = run::build_lq(cfg);
    const auto bench = problem.benchmark();
    auto critic = learner::CriticPair::analytic(
        [&bench](double t, const VectorXd& x) { return bench.value(t, x); },
        [&bench](double t, const VectorXd& x) -> VectorXd {
            return 2.0 * bench.riccati.H_at(t) * x;
        });

    run::FeedbackSampler policy(1, [&](double t, const MatrixXd& states) {
        MatrixXd u(states.rows(), 1);
        for (Eigen::Index l = 0; l < states.rows(); ++l)
            u.row(l) = bench.policy_mean(t, states.row(l).transpose()).transpose();
        return u;
    });
    // dt chosen so the O(dt^2) Euler bias sits inside the 3 SE band of the
    // corrected errors (the correction itself is exactly mean-zero)
    const double dt = 1e-3;
    const std::size_t L = 100, K = 1000;
    auto batch = sde::rollout_batch(problem.model, sde::TimeGrid(K, dt), policy, L, 5);

    double sd = 0.0, sd2 = 0.0, sc = 0.0, sc2 = 0.0;
    const std::size_t n = L * K;
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t l = 0; l < L; ++l) {
            const double d = learner::td_error(critic, batch, k, l, 1.0);
            const double c = learner::martingale_corrected_td(critic, batch, k, l, problem.model);
            sd += d;
            sd2 += d * d;
            sc += c;
            sc2 += c * c;
        }
    const double mean_d = sd / n, var_d = sd2 / n - mean_d * mean_d;
    const double mean_c = sc / n, var_c = sc2 / n - mean_c * mean_c;
    const double se_c = std::sqrt(var_c / n);
    report(6, "martingale correction", var_c <= var_d && std::abs(mean_c) < 3.0 * se_c,
           "Var(delta) " + std::to_string(var_d) + ", Var(corrected) " + std::to_string(var_c) +
               ", |mean| " + std::to_string(std::abs(mean_c)) + " vs 3se " +
               std::to_string(3.0 * se_c));
}

}  // namespace

int main() {
    criterion_1_gradients();
    criterion_2_sde();
    criterion_3_flow();
    criterion_4_benchmarks();
    criterion_5_advantage_consistency();
    criterion_6_martingale_correction();
    if (g_failures) {
        std::printf("%d criterion(s) FAILED\n", g_failures);
        return 1;
    }
    std::printf("all fast acceptance criteria passed\n");
    return 0;
}
