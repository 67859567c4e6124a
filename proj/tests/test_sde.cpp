#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bench/riccati.hpp"
#include "sde/model.hpp"
#include "sde/simulate.hpp"

#include <cmath>

using namespace jd;
using namespace jd::sde;

namespace {

// scalar model with constant coefficients, deterministic or trivial pieces
// switched off by zeros
ModelSpec scalar_model(double b, double sigma, double lambda, double alpha) {
    ModelSpec m;
    m.state_dim = 1;
    m.control_dim = 1;
    m.brownian_dim = 1;
    m.drift = [b](double, const VectorXd&, const VectorXd&) { return VectorXd::Constant(1, b); };
    m.diffusion = [sigma](double, const VectorXd&, const VectorXd&) {
        return MatrixXd::Constant(1, 1, sigma);
    };
    m.jump_size.push_back([alpha](double, const VectorXd&, const VectorXd&) {
        return VectorXd::Constant(1, alpha);
    });
    m.jump_intensity.push_back([lambda](double) { return lambda; });
    m.discount = 1.0;
    m.running_reward = [](double, const VectorXd& x, const VectorXd&) { return x[0]; };
    m.initial_state = VectorXd::Zero(1);
    return m;
}

class ZeroPolicy : public ActionSampler {
public:
    std::size_t control_dim() const override { return 1; }
    void sample_batch(double, const MatrixXd& states, std::vector<Rng>&, MatrixXd& actions,
                      VectorXd& log_probs) const override {
        actions = MatrixXd::Zero(states.rows(), 1);
        log_probs = VectorXd::Zero(states.rows());
    }
};

}  // namespace

TEST_CASE("coefficient profiles") {
    const auto conv = CoefProfile::convergent(0.6, 0.5, 1.0);
    CHECK(conv(0.0) == doctest::Approx(0.6));
    CHECK(conv(40.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(conv.limit() == 0.5);

    const auto per = CoefProfile::periodic(0.2, 0.1, 10.0, 0.0);
    CHECK(eval_profile(per, 2.5) == doctest::Approx(0.3).epsilon(1e-12));
    SUBCASE("periodicity to 1e-12") {
        for (double t : {0.0, 1.3, 4.99, 7.2, 9.999})
            CHECK(std::abs(per(t + 10.0) - per(t)) < 1e-12);
    }
    const auto c = CoefProfile::constant(0.3);
    CHECK(c(123.0) == 0.3);
}

TEST_CASE("poisson jump sampling") {
    Rng rng(99);
    SUBCASE("zero intensity never jumps") {
        for (int i = 0; i < 1000; ++i) {
            auto rec = sample_jumps({0.0}, 0.01, rng);
            CHECK(rec.counts[0] == 0);
        }
    }
    SUBCASE("negative intensity rejected") {
        CHECK_THROWS_AS(sample_jumps({-1.0}, 0.01, rng), std::invalid_argument);
    }
    SUBCASE("mean and tail match the Poisson law") {
        const double lambda = 0.2, dt = 0.01;
        const int n = 1000000;
        long long total = 0;
        int multi = 0;
        for (int i = 0; i < n; ++i) {
            auto rec = sample_jumps({lambda}, dt, rng);
            total += rec.counts[0];
            if (rec.counts[0] >= 2) ++multi;
        }
        const double mean = static_cast<double>(total) / n;
        // SE of the count mean is sqrt(lambda dt / n)
        const double se = std::sqrt(lambda * dt / n);
        CHECK(std::abs(mean - lambda * dt) < 3.0 * se);
        // P(N >= 2) = 1 - e^-m (1 + m) with m = 0.002 -> about 2.0e-6
        CHECK(multi <= 10);
    }
}

TEST_CASE("euler step") {
    Rng rng(1);
    SUBCASE("all-zero coefficients keep the state") {
        auto m = scalar_model(0.0, 0.0, 0.0, 0.0);
        JumpRecord rec;
        rec.counts = {0};
        auto x = VectorXd::Constant(1, 1.7);
        auto next = euler_step(m, 0.0, 0.01, x, VectorXd::Zero(1), VectorXd::Zero(1), rec);
        CHECK(next[0] == 1.7);
    }
    SUBCASE("pure drift") {
        auto m = scalar_model(1.0, 0.0, 0.0, 0.0);
        JumpRecord rec;
        rec.counts = {0};
        auto next = euler_step(m, 0.0, 0.01, VectorXd::Zero(1), VectorXd::Zero(1),
                               VectorXd::Zero(1), rec);
        CHECK(next[0] == doctest::Approx(0.01).epsilon(1e-15));
    }
    SUBCASE("compensated jumps have zero mean increment") {
        const double lambda = 0.2, alpha = 0.3, dt = 0.01;
        auto m = scalar_model(0.0, 0.0, lambda, alpha);
        const int n = 1000000;
        double sum = 0.0, sumsq = 0.0;
        JumpRecord rec;
        rec.counts = {0};
        const VectorXd x0 = VectorXd::Zero(1);
        for (int i = 0; i < n; ++i) {
            rec.counts[0] = rng.poisson(lambda * dt);
            const double dx =
                euler_step(m, 0.0, dt, x0, VectorXd::Zero(1), VectorXd::Zero(1), rec)[0];
            sum += dx;
            sumsq += dx * dx;
        }
        const double mean = sum / n;
        const double var = sumsq / n - mean * mean;
        const double se = std::sqrt(var / n);
        CHECK(std::abs(mean) < 3.0 * se);
        // Var = alpha^2 lambda dt for the compensated channel
        CHECK(var == doctest::Approx(alpha * alpha * lambda * dt).epsilon(0.05));
    }
}

TEST_CASE("rollout batch") {
    SUBCASE("zero coefficients, zero action: state never moves") {
        auto m = scalar_model(0.0, 0.0, 0.0, 0.0);
        const auto batch = rollout_batch(m, TimeGrid(1, 0.01), ZeroPolicy{}, 1, 42);
        CHECK(batch.states[1](0, 0) == batch.states[0](0, 0));
    }
    SUBCASE("identical seeds give identical batches") {
        auto m = scalar_model(0.1, 0.3, 0.2, 0.3);
        const auto a = rollout_batch(m, TimeGrid(50, 0.01), ZeroPolicy{}, 7, 2025);
        const auto b = rollout_batch(m, TimeGrid(50, 0.01), ZeroPolicy{}, 7, 2025);
        for (std::size_t k = 0; k <= 50; ++k) CHECK(a.states[k] == b.states[k]);
        for (std::size_t k = 0; k < 50; ++k) {
            CHECK(a.brownian[k] == b.brownian[k]);
            CHECK(a.jump_counts[k] == b.jump_counts[k]);
        }
        CHECK(a.rewards == b.rewards);
    }
    SUBCASE("different seeds differ") {
        auto m = scalar_model(0.1, 0.3, 0.2, 0.3);
        const auto a = rollout_batch(m, TimeGrid(10, 0.01), ZeroPolicy{}, 3, 1);
        const auto b = rollout_batch(m, TimeGrid(10, 0.01), ZeroPolicy{}, 3, 2);
        CHECK(a.states[10] != b.states[10]);
    }
    SUBCASE("state explosion aborts with a diagnostic") {
        auto m = scalar_model(1e9, 0.0, 0.0, 0.0);
        CHECK_THROWS_AS(rollout_batch(m, TimeGrid(5, 0.01), ZeroPolicy{}, 1, 3),
                        std::runtime_error);
    }
    SUBCASE("brownian increments have variance dt") {
        auto m = scalar_model(0.0, 1.0, 0.0, 0.0);
        const double dt = 0.25;
        const auto batch = rollout_batch(m, TimeGrid(200, dt), ZeroPolicy{}, 50, 7);
        double s2 = 0.0;
        int n = 0;
        for (std::size_t k = 0; k < 200; ++k)
            for (int l = 0; l < 50; ++l) {
                s2 += batch.brownian[k](l, 0) * batch.brownian[k](l, 0);
                ++n;
            }
        CHECK(s2 / n == doctest::Approx(dt).epsilon(0.05));
    }
}

namespace {

class LinearFeedback : public ActionSampler {
public:
    explicit LinearFeedback(double gain) : gain_(gain) {}
    std::size_t control_dim() const override { return 1; }
    void sample_batch(double, const MatrixXd& states, std::vector<Rng>&, MatrixXd& actions,
                      VectorXd& log_probs) const override {
        actions = gain_ * states;
        log_probs = VectorXd::Zero(states.rows());
    }

private:
    double gain_;
};

}  // namespace

TEST_CASE("discounted reward of the optimal LQ feedback matches the value function") {
    // scalar homogeneous LQ, table parameters, gamma = 0
    const double B = 0.5, Sig = 0.3, R = 5.0, Q = 0.5, beta = 1.0, lam = 0.2, alf = 0.3;
    const auto pair = bench::solve_are(MatrixXd::Constant(1, 1, B), MatrixXd::Constant(1, 1, Sig),
                                       VectorXd::Constant(1, alf), VectorXd::Constant(1, lam),
                                       MatrixXd::Constant(1, 1, R), MatrixXd::Constant(1, 1, Q),
                                       beta, 0.0);
    const double H = pair.H(0, 0);
    const double gain = B * H / R;  // u* = R^-1 B' H x

    ModelSpec m;
    m.state_dim = m.control_dim = m.brownian_dim = 1;
    m.drift = [B](double, const VectorXd&, const VectorXd& u) {
        return VectorXd::Constant(1, B * u[0]);
    };
    m.diffusion = [Sig](double, const VectorXd&, const VectorXd&) {
        return MatrixXd::Constant(1, 1, Sig);
    };
    m.jump_size.push_back(
        [alf](double, const VectorXd&, const VectorXd&) { return VectorXd::Constant(1, alf); });
    m.jump_intensity.push_back([lam](double) { return lam; });
    m.discount = beta;
    m.running_reward = [R, Q](double, const VectorXd& x, const VectorXd& u) {
        return -(R * u[0] * u[0] + Q * x[0] * x[0]);
    };
    m.initial_state = VectorXd::Constant(1, 1.0);

    const std::size_t K = 1000, L = 10000;
    const double dt = 0.01;
    const auto batch = rollout_batch(m, TimeGrid(K, dt), LinearFeedback(gain), L, 314);

    double sum = 0.0, sumsq = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k)
            acc += std::exp(-beta * batch.grid.t(k)) * batch.rewards(l, k);
        sum += acc;
        sumsq += acc * acc;
    }
    const double mc_mean = sum / L;
    const double se = std::sqrt((sumsq / L - mc_mean * mc_mean) / L);

    // exact expectation of the same discrete functional: the closed-loop state
    // is linear in independent noises, so its second moment recurses exactly
    const double A = 1.0 + B * gain * dt;
    const double noise_var = Sig * Sig * dt + lam * dt * alf * alf;
    const double cost_coef = R * gain * gain + Q;
    double m2 = 1.0;  // E[x_k^2], x_0 = 1
    double exact_discrete = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        exact_discrete += std::exp(-beta * batch.grid.t(k)) * (-cost_coef * m2) * dt;
        m2 = A * A * m2 + noise_var;
    }
    CHECK(std::abs(mc_mean - exact_discrete) < 3.0 * se);

    // and the discrete functional approximates V(0, x0) = H x0^2 + g
    const double v0 = H * 1.0 + pair.g;
    CHECK(std::abs(exact_discrete - v0) < 0.015 * std::abs(v0));
    CHECK(std::abs(mc_mean - v0) < 3.0 * se + 0.015 * std::abs(v0));
}

TEST_CASE("grid refinement: drift-only path converges at the analytic rate") {
    // dx = -x dt has exact solution e^-t; Euler error at T halves with dt
    ModelSpec m;
    m.state_dim = m.control_dim = 1;
    m.brownian_dim = 0;
    m.drift = [](double, const VectorXd& x, const VectorXd&) { return VectorXd(-x); };
    m.diffusion = [](double, const VectorXd&, const VectorXd&) { return MatrixXd::Zero(1, 0); };
    m.running_reward = [](double, const VectorXd&, const VectorXd&) { return 0.0; };
    m.discount = 1.0;
    m.initial_state = VectorXd::Constant(1, 1.0);

    auto err_at = [&](std::size_t steps) {
        const double dt = 1.0 / static_cast<double>(steps);
        const auto batch = rollout_batch(m, TimeGrid(steps, dt), ZeroPolicy{}, 1, 0);
        return std::abs(batch.states[steps](0, 0) - std::exp(-1.0));
    };
    const double e1 = err_at(100), e2 = err_at(200);
    CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.03));
}
