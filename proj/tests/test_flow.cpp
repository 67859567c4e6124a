#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "policy/policy.hpp"
#include "policy/spline_flow.hpp"

#include <cmath>

using namespace jd;
using namespace jd::policy;
using nn::Tensor;
using nn::Tape;

namespace {

SplineFlow perturbed_flow(Rng& rng, std::size_t m = 1, double scale = 0.4) {
    SplineFlow flow(1, m, 6, 2.5, 32, 2, rng);
    for (auto& p : flow.parameters())
        for (std::size_t i = 0; i < p->size(); ++i) p->data()[i] += scale * rng.normal();
    return flow;
}

MatrixXd state_batch(std::size_t n) {
    MatrixXd s(n, 1);
    for (std::size_t i = 0; i < n; ++i) s(i, 0) = 0.3 + 0.001 * static_cast<double>(i);
    return s;
}

}  // namespace

TEST_CASE("freshly initialized flow is the exact identity") {
    Rng rng(1);
    SplineFlow flow(1, 1, 6, 2.5, 32, 2, rng);  // zero readout
    auto z = nn::make_tensor(5, 1, {-2.4, -1.0, 0.0, 0.7, 2.2});
    auto res = flow.forward(nullptr, z, 0.5, state_batch(5));
    for (int i = 0; i < 5; ++i) {
        CHECK(res.value->at(i, 0) == doctest::Approx(z->at(i, 0)).epsilon(1e-14));
        CHECK(res.log_det->at(i, 0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
    }
}

TEST_CASE("identity tails outside the bound") {
    Rng rng(10);
    auto flow = perturbed_flow(rng);
    auto z = nn::make_tensor(4, 1, {-3.7, 2.51, 5.0, -2.5001});
    auto res = flow.forward(nullptr, z, 0.1, state_batch(4));
    for (int i = 0; i < 4; ++i) {
        CHECK(res.value->at(i, 0) == z->at(i, 0));
        CHECK(res.log_det->at(i, 0) == 0.0);
    }
}

TEST_CASE("forward/inverse round trip below 1e-6 including tails and bin edges") {
    Rng rng(22);
    auto flow = perturbed_flow(rng);
    const std::size_t n = 10000;
    MatrixXd states = state_batch(n);
    auto z = nn::make_tensor(n, 1);
    Rng zr(5);
    for (std::size_t i = 0; i < n; ++i) {
        if (i < 100) z->at(i, 0) = -2.5 + 5.0 * static_cast<double>(i) / 99.0;  // sweep the band
        else if (i < 120) z->at(i, 0) = (i % 2 ? 2.5 : -2.5) * (1.0 - 1e-9);    // edge pokes
        else z->at(i, 0) = 3.0 * zr.normal();
    }
    auto fwd = flow.forward(nullptr, z, 0.2, states);
    auto inv = flow.inverse(nullptr, fwd.value, 0.2, states);
    double worst = 0.0, worst_ld = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        worst = std::max(worst, std::abs(inv.value->at(i, 0) - z->at(i, 0)));
        worst_ld = std::max(worst_ld, std::abs(inv.log_det->at(i, 0) + fwd.log_det->at(i, 0)));
    }
    CHECK(worst < 1e-6);
    CHECK(worst_ld < 1e-6);
}

TEST_CASE("monotonicity: derivative strictly positive across the band") {
    Rng rng(30);
    auto flow = perturbed_flow(rng, 1, 0.8);
    const std::size_t n = 2001;
    auto z = nn::make_tensor(n, 1);
    for (std::size_t i = 0; i < n; ++i)
        z->at(i, 0) = -2.5 + 5.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    MatrixXd states = MatrixXd::Constant(n, 1, 0.9);
    auto res = flow.forward(nullptr, z, 0.0, states);
    for (std::size_t i = 0; i + 1 < n; ++i)
        CHECK(res.value->at(i + 1, 0) > res.value->at(i, 0));
    for (std::size_t i = 0; i < n; ++i) CHECK(std::isfinite(res.log_det->at(i, 0)));
}

TEST_CASE("analytic log-det matches numerical derivative") {
    Rng rng(41);
    auto flow = perturbed_flow(rng);
    const double h = 1e-6;
    Rng zr(7);
    double worst = 0.0;
    for (int i = 0; i < 500; ++i) {
        const double zv = 2.4 * (2.0 * zr.uniform() - 1.0);
        MatrixXd states = MatrixXd::Constant(1, 1, 0.5 + 0.3 * zr.uniform());
        auto z = nn::make_tensor(3, 1, {zv, zv + h, zv - h});
        MatrixXd s3(3, 1);
        s3 << states(0, 0), states(0, 0), states(0, 0);
        auto res = flow.forward(nullptr, z, 0.3, s3);
        const double num = (res.value->at(1, 0) - res.value->at(2, 0)) / (2.0 * h);
        if (num <= 0.0) continue;  // numerically degenerate spot, skip
        const double rel = std::abs(res.log_det->at(0, 0) - std::log(num)) /
                           std::max(1e-8, std::abs(std::log(num)) + 1.0);
        worst = std::max(worst, rel);
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("gradients flow through base, spline and squash jointly") {
    Rng rng(61);
    PolicyConfig cfg;
    cfg.state_dim = 1;
    cfg.control_dim = 1;
    cfg.hidden_width = 11;
    cfg.depth = 2;
    cfg.learnable_std = true;
    cfg.init_std = 0.3;
    cfg.flow.enabled = true;
    cfg.squash.enabled = true;
    FlowPolicy pol(cfg, rng);
    pol.set_update_count(50);
    for (auto& p : pol.all_parameters())
        for (std::size_t i = 0; i < p->size(); ++i) p->data()[i] += 0.2 * rng.normal();

    MatrixXd states(3, 1);
    states << 0.4, 0.9, 1.6;
    MatrixXd actions(3, 1);
    actions << 0.21, 0.55, 0.83;

    auto loss_value = [&]() {
        Tape t;
        return nn::mean_all(&t, pol.log_prob_batch(&t, 0.6, states, actions))->scalar();
    };

    Tape tape;
    auto loss = nn::mean_all(&tape, pol.log_prob_batch(&tape, 0.6, states, actions));
    tape.backward(loss);

    int checked = 0;
    double worst = 0.0;
    for (auto& p : pol.all_parameters()) {
        const std::size_t stride = std::max<std::size_t>(1, p->size() / 8);
        for (std::size_t j = 0; j < p->size(); j += stride) {
            const double h = 1e-5;
            double* w = p->data();
            const double saved = w[j];
            w[j] = saved + h;
            const double up = loss_value();
            w[j] = saved - h;
            const double down = loss_value();
            w[j] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double ad = p->has_grad() ? p->grad()[j] : 0.0;
            if (std::abs(fd) < 1e-10 && std::abs(ad) < 1e-10) continue;
            worst = std::max(worst, std::abs(fd - ad) / std::max({1e-8, std::abs(fd), std::abs(ad)}));
            ++checked;
        }
    }
    CHECK(checked >= 100);
    CHECK(worst < 1e-4);
}

TEST_CASE("flow stays frozen as an identity during warm-up updates") {
    Rng rng(71);
    PolicyConfig cfg;
    cfg.state_dim = 1;
    cfg.control_dim = 1;
    cfg.flow.enabled = true;
    cfg.warmup_updates = 30;
    FlowPolicy pol(cfg, rng);
    // perturb the flow conditioner: must not matter while frozen
    for (auto& p : pol.flow_parameters_list())
        for (std::size_t i = 0; i < p->size(); ++i) p->data()[i] += rng.normal();

    pol.set_update_count(29);
    CHECK(!pol.flow_active());
    std::vector<Rng> streams;
    streams.emplace_back(3, 0);
    MatrixXd a1;
    VectorXd l1;
    pol.sample_batch(0.0, MatrixXd::Constant(1, 1, 1.0), streams, a1, l1);
    MatrixXd mu, sd;
    pol.base_parameters(0.0, MatrixXd::Constant(1, 1, 1.0), mu, sd);
    // frozen identity flow and no squash: the log density is the base gaussian
    const double lp_expected = -0.5 * std::log(2.0 * 3.14159265358979) - std::log(sd(0, 0)) -
                               0.5 * std::pow((a1(0, 0) - mu(0, 0)) / sd(0, 0), 2);
    CHECK(l1[0] == doctest::Approx(lp_expected).epsilon(1e-10));

    pol.set_update_count(30);
    CHECK(pol.flow_active());
}
