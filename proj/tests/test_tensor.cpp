#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nn/net.hpp"
#include "nn/optim.hpp"
#include "nn/tensor.hpp"
#include "util/rng.hpp"

#include <cmath>

using namespace jd;
using namespace jd::nn;

namespace {

// Central finite differences of a scalar-valued function of the parameters.
template <typename F>
double fd_gradient(const Tensor& param, std::size_t index, F eval, double h = 1e-5) {
    double* w = param->data();
    const double saved = w[index];
    w[index] = saved + h;
    const double up = eval();
    w[index] = saved - h;
    const double down = eval();
    w[index] = saved;
    return (up - down) / (2.0 * h);
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1e-10, std::abs(a), std::abs(b)});
}

}  // namespace

TEST_CASE("zero-parameter network maps any input to zero") {
    Rng rng(7);
    ResidualMlp net(3, 8, 2, 2, rng);
    for (auto& p : net.parameters())
        for (std::size_t i = 0; i < p->size(); ++i) p->data()[i] = 0.0;
    auto x = make_tensor(4, 3, {1.0, -2.0, 0.3, 4.0, 0.0, -1.0, 2.5, 2.5, 2.5, -0.1, 0.2, -0.3});
    auto y = net.forward(nullptr, x);
    for (std::size_t i = 0; i < y->size(); ++i) CHECK(y->data()[i] == 0.0);
}

TEST_CASE("single tanh unit evaluates tanh(1)") {
    // one input layer with weight 1, bias 0, rest of the blocks zeroed, and a
    // pass-through readout
    Rng rng(3);
    ResidualMlp net(1, 1, 1, 1, rng);
    auto& p = net.parameters();
    p[0]->data()[0] = 1.0;  // W_in
    p[1]->data()[0] = 0.0;
    p[2]->data()[0] = 0.0;  // residual block inner transform zero
    p[3]->data()[0] = 0.0;
    p[4]->data()[0] = 1.0;  // W_out
    p[5]->data()[0] = 0.0;
    auto x = make_scalar(1.0);
    auto y = net.forward(nullptr, x);
    CHECK(y->scalar() == doctest::Approx(0.761594).epsilon(1e-6));
}

TEST_CASE("residual block with zero inner transform is the identity") {
    Rng rng(9);
    ResidualMlp net(2, 2, 3, 2, rng);
    auto& p = net.parameters();
    // input layer = atanh wiring is awkward; instead check the hidden block
    // maps v -> v by zeroing block weights and reading through an identity
    // readout
    for (std::size_t k = 0; k < 3; ++k) {
        for (std::size_t i = 0; i < p[2 + 2 * k]->size(); ++i) p[2 + 2 * k]->data()[i] = 0.0;
        for (std::size_t i = 0; i < p[3 + 2 * k]->size(); ++i) p[3 + 2 * k]->data()[i] = 0.0;
    }
    p[8]->data()[0] = 1.0;
    p[8]->data()[3] = 1.0;  // W_out = I
    auto x = make_tensor(1, 2, {0.3, -0.8});
    auto y = net.forward(nullptr, x);
    // v = tanh(W_in x + b_in) passes through all blocks unchanged
    Tape tape;
    auto v = tanh_op(&tape, add(&tape, matmul(&tape, x, p[0]), p[1]));
    CHECK(y->at(0, 0) == doctest::Approx(v->at(0, 0)).epsilon(1e-12));
    CHECK(y->at(0, 1) == doctest::Approx(v->at(0, 1)).epsilon(1e-12));
}

TEST_CASE("backward of simple scalar functions") {
    SUBCASE("tanh gradient at 0 is 1") {
        Tape tape;
        auto x = make_scalar(0.0, true);
        auto y = tanh_op(&tape, x);
        tape.backward(y);
        CHECK(x->grad()[0] == doctest::Approx(1.0));
    }
    SUBCASE("d(x*x)/dx at 3 is 6") {
        Tape tape;
        auto x = make_scalar(3.0, true);
        auto y = mul(&tape, x, x);
        tape.backward(y);
        CHECK(x->grad()[0] == doctest::Approx(6.0));
    }
    SUBCASE("backward twice throws") {
        Tape tape;
        auto x = make_scalar(2.0, true);
        auto y = square(&tape, x);
        tape.backward(y);
        CHECK_THROWS_AS(tape.backward(y), std::logic_error);
    }
    SUBCASE("backward on non-scalar throws") {
        Tape tape;
        auto x = make_tensor(1, 2, {1.0, 2.0}, true);
        auto y = square(&tape, x);
        CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
    }
}

TEST_CASE("network gradients match central finite differences") {
    Rng rng(2024);
    for (auto [in, width, depth, out] : {std::tuple<int, int, int, int>{2, 11, 3, 1},
                                         {6, 15, 3, 2}, {3, 32, 2, 5}}) {
        ResidualMlp net(in, width, depth, out, rng);
        // randomize the readout too; zero init would hide gradient bugs
        for (auto& p : net.parameters())
            for (std::size_t i = 0; i < p->size(); ++i)
                p->data()[i] += 0.3 * rng.normal() / std::sqrt(static_cast<double>(width));

        auto x = make_tensor(5, in);
        for (std::size_t i = 0; i < x->size(); ++i) x->data()[i] = rng.normal();

        auto loss_value = [&]() {
            Tape t;
            auto y = net.forward(&t, x);
            return mean_all(&t, square(&t, y))->scalar();
        };

        Tape tape;
        auto y = net.forward(&tape, x);
        auto loss = mean_all(&tape, square(&tape, y));
        tape.backward(loss);

        int checked = 0;
        double worst = 0.0;
        auto& params = net.parameters();
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            auto& p = params[pi];
            const std::size_t stride = std::max<std::size_t>(1, p->size() / 12);
            for (std::size_t j = 0; j < p->size(); j += stride) {
                const double fd = fd_gradient(p, j, loss_value);
                const double ad = p->grad()[j];
                if (std::abs(fd) < 1e-12 && std::abs(ad) < 1e-12) continue;
                worst = std::max(worst, rel_err(fd, ad));
                ++checked;
            }
        }
        CHECK(checked >= 100);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("forward and gradients are bitwise deterministic") {
    auto run = [](std::uint64_t seed) {
        Rng rng(seed);
        ResidualMlp net(3, 9, 2, 1, rng);
        auto x = make_tensor(4, 3);
        Rng xr(seed + 1);
        for (std::size_t i = 0; i < x->size(); ++i) x->data()[i] = xr.normal();
        Tape tape;
        auto loss = mean_all(&tape, square(&tape, net.forward(&tape, x)));
        tape.backward(loss);
        std::vector<double> out{loss->scalar()};
        for (auto& p : net.parameters())
            out.insert(out.end(), p->grad().begin(), p->grad().end());
        return out;
    };
    CHECK(run(11) == run(11));
}

TEST_CASE("adam steps") {
    Rng rng(5);
    auto w = make_tensor(1, 3, {0.5, -0.2, 1.0}, true);

    SUBCASE("zero gradient leaves parameters unchanged") {
        Adam opt({w}, 1e-3);
        w->grad_buffer();  // zeros
        opt.step();
        CHECK(w->at(0, 0) == 0.5);
        CHECK(w->at(0, 1) == -0.2);
        CHECK(w->at(0, 2) == 1.0);
    }
    SUBCASE("first step with unit gradient moves by about -lr") {
        Adam opt({w}, 1e-3);
        auto& g = w->grad_buffer();
        g[0] = 1.0;
        g[1] = 1.0;
        g[2] = 1.0;
        opt.step();
        CHECK(w->at(0, 0) == doctest::Approx(0.5 - 1e-3).epsilon(1e-6));
        CHECK(opt.step_count() == 1);
    }
    SUBCASE("zero learning rate freezes parameters") {
        Adam opt({w}, 0.0);
        auto& g = w->grad_buffer();
        g[0] = 2.0;
        opt.step();
        CHECK(w->at(0, 0) == 0.5);
    }
    SUBCASE("non-finite gradient aborts") {
        Adam opt({w}, 1e-3);
        w->grad_buffer()[1] = std::nan("");
        CHECK_THROWS_AS(opt.step(), std::runtime_error);
    }
}

TEST_CASE("polyak averaging") {
    auto t = make_tensor(1, 2, {0.0, 4.0});
    auto o = make_tensor(1, 2, {2.0, 2.0});
    std::vector<Tensor> target{t}, online{o};

    SUBCASE("rho 1 keeps the target") {
        polyak_update(target, online, 1.0);
        CHECK(t->at(0, 0) == 0.0);
        CHECK(t->at(0, 1) == 4.0);
    }
    SUBCASE("rho 0 copies the online net") {
        polyak_update(target, online, 0.0);
        CHECK(t->at(0, 0) == 2.0);
        CHECK(t->at(0, 1) == 2.0);
    }
    SUBCASE("rho 0.5 averages") {
        polyak_update(target, online, 0.5);
        CHECK(t->at(0, 0) == doctest::Approx(1.0));
        CHECK(t->at(0, 1) == doctest::Approx(3.0));
    }
    SUBCASE("fixed point: equal nets stay equal for any rho") {
        auto a = make_tensor(1, 2, {1.5, -2.5});
        auto b = make_tensor(1, 2, {1.5, -2.5});
        std::vector<Tensor> ta{a}, ob{b};
        for (double rho : {0.0, 0.3, 0.77, 1.0}) {
            polyak_update(ta, ob, rho);
            CHECK(a->at(0, 0) == 1.5);
            CHECK(a->at(0, 1) == -2.5);
        }
    }
    SUBCASE("rho outside [0,1] is rejected") {
        CHECK_THROWS_AS(polyak_update(target, online, 1.5), std::invalid_argument);
    }
}

TEST_CASE("learning rate schedules stay positive and decay as configured") {
    auto c = LrSchedule::constant(1e-3);
    CHECK(c.rate(0) == 1e-3);
    CHECK(c.rate(5000) == 1e-3);

    auto ms = LrSchedule::multi_step(1e-3, {100, 200}, 0.1);
    CHECK(ms.rate(99) == doctest::Approx(1e-3));
    CHECK(ms.rate(100) == doctest::Approx(1e-4));
    CHECK(ms.rate(200) == doctest::Approx(1e-5));

    auto cw = LrSchedule::cosine_warmup(1e-3, 10, 100, 0.1);
    CHECK(cw.rate(0) > 0.0);
    CHECK(cw.rate(9) <= 1e-3);
    CHECK(cw.rate(10) == doctest::Approx(1e-3));
    CHECK(cw.rate(100) == doctest::Approx(1e-4));
    for (int s = 0; s < 120; ++s) CHECK(cw.rate(s) > 0.0);
}

TEST_CASE("gradient clipping rescales to the requested global norm") {
    auto a = make_tensor(1, 2, {0.0, 0.0}, true);
    auto b = make_tensor(1, 1, {0.0}, true);
    a->grad_buffer()[0] = 3.0;
    a->grad_buffer()[1] = 0.0;
    b->grad_buffer()[0] = 4.0;
    const double norm = clip_grad_norm({a, b}, 1.0);
    CHECK(norm == doctest::Approx(5.0));
    CHECK(a->grad()[0] == doctest::Approx(0.6));
    CHECK(b->grad()[0] == doctest::Approx(0.8));
}
