#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "policy/policy.hpp"

#include <cmath>

using namespace jd;
using namespace jd::policy;
using nn::Tensor;
using nn::Tape;

namespace {

PolicyConfig gaussian_config(std::size_t d = 1, std::size_t m = 1) {
    PolicyConfig cfg;
    cfg.state_dim = d;
    cfg.control_dim = m;
    cfg.hidden_width = d + 10;
    cfg.depth = 3;
    cfg.learnable_std = false;
    cfg.fixed_std = 1.0;
    return cfg;
}

MatrixXd single_state(double x) {
    MatrixXd s(1, 1);
    s(0, 0) = x;
    return s;
}

}  // namespace

TEST_CASE("gaussian log density at the mean") {
    Rng rng(4);
    auto cfg = gaussian_config();
    FlowPolicy pol(cfg, rng);  // zero readout -> mu = 0 everywhere
    MatrixXd u = MatrixXd::Zero(1, 1);
    const double lp = pol.log_prob_batch(nullptr, 0.3, single_state(0.7), u)->at(0, 0);
    CHECK(lp == doctest::Approx(-0.918939).epsilon(1e-5));
}

TEST_CASE("m-dimensional gaussian log density formula") {
    Rng rng(4);
    auto cfg = gaussian_config(2, 3);
    cfg.fixed_std = 0.25;
    cfg.hidden_width = 12;
    FlowPolicy pol(cfg, rng);
    MatrixXd s(1, 2);
    s << 0.1, -0.4;
    MatrixXd u = MatrixXd::Zero(1, 3);
    const double expect = -1.5 * std::log(2.0 * 3.14159265358979) - 3.0 * std::log(0.25);
    CHECK(pol.log_prob_batch(nullptr, 0.0, s, u)->at(0, 0) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("gamma=0 configuration keeps std fixed at 0.1") {
    Rng rng(8);
    auto cfg = gaussian_config();
    cfg.fixed_std = 0.1;
    FlowPolicy pol(cfg, rng);
    MatrixXd mu, sd;
    for (double x : {-2.0, 0.0, 1.5}) {
        pol.base_parameters(1.0, single_state(x), mu, sd);
        CHECK(sd(0, 0) == 0.1);
    }
}

TEST_CASE("sampling agrees with log_prob (round trip within 1e-8)") {
    Rng rng(123);
    for (int variant = 0; variant < 3; ++variant) {
        PolicyConfig cfg = gaussian_config();
        cfg.learnable_std = variant != 0;
        if (variant >= 1) {
            cfg.squash.enabled = true;
            cfg.squash.u_min = 0.0;
            cfg.squash.u_max = 1.0;
        }
        if (variant == 2) cfg.flow.enabled = true;
        FlowPolicy pol(cfg, rng);
        pol.set_update_count(1000);  // flow active, temperature annealed
        // give the nets non-trivial outputs
        for (auto& p : pol.all_parameters())
            for (std::size_t i = 0; i < p->size(); ++i) p->data()[i] += 0.1 * rng.normal();

        std::vector<Rng> streams;
        for (int l = 0; l < 1000; ++l) streams.emplace_back(77, l);
        MatrixXd states(1000, 1);
        for (int l = 0; l < 1000; ++l) states(l, 0) = 0.5 + 0.2 * std::sin(l * 0.01);
        MatrixXd actions;
        VectorXd lp;
        pol.sample_batch(0.4, states, streams, actions, lp);
        auto lp2 = pol.log_prob_batch(nullptr, 0.4, states, actions);
        double worst = 0.0;
        for (int l = 0; l < 1000; ++l) worst = std::max(worst, std::abs(lp2->at(l, 0) - lp[l]));
        CHECK(worst < 1e-8);
    }
}

TEST_CASE("squash log-det at z=0, unit range, tau=1 is log 1/4") {
    Rng rng(3);
    auto cfg = gaussian_config();
    cfg.squash.enabled = true;
    cfg.squash.tau_start = 1.0;
    cfg.squash.tau_end = 1.0;
    FlowPolicy pol(cfg, rng);
    // mu = 0 (zero readout); action u = sigmoid(0) = 0.5 corresponds to z = 0
    MatrixXd u = MatrixXd::Constant(1, 1, 0.5);
    const double lp = pol.log_prob_batch(nullptr, 0.0, single_state(1.0), u)->at(0, 0);
    // log pi(u) = log N(0; 0, 1) - log|J_S| = -0.918939 + 1.386294
    CHECK(lp == doctest::Approx(-0.918939 + 1.386294).epsilon(1e-5));
}

TEST_CASE("actions on the squash boundary are flagged as saturated") {
    Rng rng(3);
    auto cfg = gaussian_config();
    cfg.squash.enabled = true;
    FlowPolicy pol(cfg, rng);
    MatrixXd u(2, 1);
    u << 1.0, 0.5;
    std::vector<std::uint8_t> sat;
    auto lp = pol.log_prob_batch(nullptr, 0.0, MatrixXd::Zero(2, 1), u, &sat);
    CHECK(sat[0] == 1);
    CHECK(sat[1] == 0);
    CHECK(std::isfinite(lp->at(0, 0)));
}

TEST_CASE("1-d density normalizes on a fine grid") {
    Rng rng(31);
    PolicyConfig cfg = gaussian_config();
    cfg.learnable_std = true;
    cfg.init_std = 0.4;
    cfg.squash.enabled = true;
    cfg.flow.enabled = true;
    FlowPolicy pol(cfg, rng);
    pol.set_update_count(100);
    for (auto& p : pol.all_parameters())
        for (std::size_t i = 0; i < p->size(); ++i) p->data()[i] += 0.15 * rng.normal();

    for (double x : {0.4, 1.0, 2.2}) {
        const int n = 4000;
        double mass = 0.0;
        // midpoint rule over (0,1); the density vanishes at the endpoints
        for (int j = 0; j < n; ++j) {
            const double u = (j + 0.5) / n;
            MatrixXd uu = MatrixXd::Constant(1, 1, u);
            mass += std::exp(pol.log_prob_batch(nullptr, 0.7, single_state(x), uu)->at(0, 0)) / n;
        }
        CHECK(std::abs(mass - 1.0) < 1e-3);
    }
}

TEST_CASE("entropy estimates match gaussian formulas") {
    Rng rng(17);
    SUBCASE("std 1") {
        auto cfg = gaussian_config();
        FlowPolicy pol(cfg, rng);
        Rng er(5);
        const double ent = pol.entropy_estimate(0.0, VectorXd::Zero(1), 200000, er);
        const double expect = 1.418939;
        CHECK(std::abs(ent - expect) < 3.0 * 1.0 / std::sqrt(200000.0));
    }
    SUBCASE("std 0.1 and the scaling law") {
        auto cfg = gaussian_config();
        cfg.fixed_std = 0.1;
        FlowPolicy pol(cfg, rng);
        Rng er(6);
        const double ent = pol.entropy_estimate(0.0, VectorXd::Zero(1), 200000, er);
        const double expect = 1.418939 + std::log(0.1);
        CHECK(std::abs(ent - expect) < 0.01);
    }
}

TEST_CASE("policy checkpoints round trip") {
    Rng rng(55);
    PolicyConfig cfg = gaussian_config();
    cfg.learnable_std = true;
    cfg.flow.enabled = true;
    cfg.squash.enabled = true;
    FlowPolicy pol(cfg, rng);
    pol.set_update_count(12);
    for (auto& p : pol.all_parameters())
        for (std::size_t i = 0; i < p->size(); ++i) p->data()[i] += 0.05 * rng.normal();
    pol.save("/tmp/jd_policy_ckpt.bin");
    auto loaded = FlowPolicy::load("/tmp/jd_policy_ckpt.bin");
    CHECK(loaded.update_count() == 12);

    std::vector<Rng> s1, s2;
    s1.emplace_back(9, 0);
    s2.emplace_back(9, 0);
    MatrixXd a1, a2;
    VectorXd l1, l2;
    pol.sample_batch(0.2, single_state(0.8), s1, a1, l1);
    loaded.sample_batch(0.2, single_state(0.8), s2, a2, l2);
    CHECK(a1(0, 0) == a2(0, 0));
    CHECK(l1[0] == l2[0]);
}
