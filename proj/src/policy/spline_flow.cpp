#include "policy/spline_flow.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace jd::policy {

using nn::Tensor;
using nn::Tape;

namespace {

constexpr double kMinBinFraction = 1e-3;
const double kDerivRawOffset = std::log(std::exp(1.0) - 1.0);  // softplus^-1(1)

Tensor row_max_const(const Tensor& a) {
    auto out = nn::make_tensor(a->rows(), 1);
    for (std::size_t r = 0; r < a->rows(); ++r) {
        double m = a->at(r, 0);
        for (std::size_t c = 1; c < a->cols(); ++c) m = std::max(m, a->at(r, c));
        out->at(r, 0) = m;
    }
    return out;
}

Tensor softmax_cols(Tape* tape, const Tensor& a) {
    auto e = nn::exp_op(tape, nn::sub(tape, a, row_max_const(a)));
    return nn::div(tape, e, nn::row_sum(tape, e));
}

// Fractions -> knot positions on [-B, B], first knot pinned at -B.
Tensor knots_from_fractions(Tape* tape, const Tensor& fractions, double bound, std::size_t rows) {
    auto cum = nn::cumsum_cols(tape, fractions);
    auto partial = nn::add_scalar(tape, nn::scale(tape, cum, 2.0 * bound), -bound);
    auto left = nn::make_tensor(rows, 1);
    for (std::size_t r = 0; r < rows; ++r) left->at(r, 0) = -bound;
    return nn::concat_cols(tape, {left, partial});
}

}  // namespace

SplineFlow::SplineFlow(std::size_t state_dim, std::size_t control_dim, std::size_t bins,
                       double tail_bound, std::size_t hidden_width, std::size_t depth,
                       jd::Rng& rng)
    : control_dim_(control_dim), bins_(bins), tail_bound_(tail_bound),
      conditioner_(state_dim + 1, hidden_width, depth, control_dim * (3 * bins - 1), rng) {}

SplineFlow::Result SplineFlow::forward(Tape* tape, const Tensor& z, double t,
                                       const sde::MatrixXd& states) const {
    return apply(tape, z, t, states, false);
}

SplineFlow::Result SplineFlow::inverse(Tape* tape, const Tensor& z_prime, double t,
                                       const sde::MatrixXd& states) const {
    return apply(tape, z_prime, t, states, true);
}

SplineFlow::Result SplineFlow::apply(Tape* tape, const Tensor& z, double t,
                                     const sde::MatrixXd& states, bool inverse) const {
    const std::size_t L = z->rows();
    const std::size_t K = bins_;
    const std::size_t P = 3 * K - 1;
    const double B = tail_bound_;
    if (z->cols() != control_dim_) throw std::invalid_argument("spline: control dim mismatch");
    if (static_cast<std::size_t>(states.rows()) != L)
        throw std::invalid_argument("spline: state batch mismatch");

    auto input = nn::make_tensor(L, static_cast<std::size_t>(states.cols()) + 1);
    for (std::size_t r = 0; r < L; ++r) {
        input->at(r, 0) = t;
        for (Eigen::Index c = 0; c < states.cols(); ++c) input->at(r, c + 1) = states(r, c);
    }
    auto raw_all = conditioner_.forward(tape, input);

    std::vector<Tensor> out_cols, ld_cols;
    for (std::size_t j = 0; j < control_dim_; ++j) {
        auto raw = nn::slice_cols(tape, raw_all, j * P, (j + 1) * P);
        auto w_frac = softmax_cols(tape, nn::slice_cols(tape, raw, 0, K));
        auto h_frac = softmax_cols(tape, nn::slice_cols(tape, raw, K, 2 * K));
        const double span = 1.0 - static_cast<double>(K) * kMinBinFraction;
        auto w = nn::add_scalar(tape, nn::scale(tape, w_frac, span), kMinBinFraction);
        auto h = nn::add_scalar(tape, nn::scale(tape, h_frac, span), kMinBinFraction);
        auto xknots = knots_from_fractions(tape, w, B, L);
        auto yknots = knots_from_fractions(tape, h, B, L);
        auto ones = nn::make_tensor(L, 1);
        for (std::size_t r = 0; r < L; ++r) ones->at(r, 0) = 1.0;
        auto d_mid = nn::softplus(
            tape, nn::add_scalar(tape, nn::slice_cols(tape, raw, 2 * K, P), kDerivRawOffset));
        auto derivs = nn::concat_cols(tape, {ones, d_mid, ones});

        auto zj = nn::slice_cols(tape, z, j, j + 1);
        auto z_safe = nn::clamp_op(tape, zj, -B, B);

        // bin index from the side whose knots partition the input
        const Tensor& search_knots = inverse ? yknots : xknots;
        std::vector<std::size_t> idx(L), idx1(L);
        auto mask = nn::make_tensor(L, 1);
        for (std::size_t r = 0; r < L; ++r) {
            const double v = zj->at(r, 0);
            mask->at(r, 0) = (v >= -B && v <= B) ? 1.0 : 0.0;
            const double vs = z_safe->at(r, 0);
            std::size_t k = 0;
            while (k + 1 < K && search_knots->at(r, k + 1) <= vs) ++k;
            idx[r] = k;
            idx1[r] = k + 1;
        }

        auto xk = nn::gather_cols(tape, xknots, idx);
        auto xk1 = nn::gather_cols(tape, xknots, idx1);
        auto yk = nn::gather_cols(tape, yknots, idx);
        auto yk1 = nn::gather_cols(tape, yknots, idx1);
        auto dk = nn::gather_cols(tape, derivs, idx);
        auto dk1 = nn::gather_cols(tape, derivs, idx1);

        auto dx = nn::sub(tape, xk1, xk);
        auto dy = nn::sub(tape, yk1, yk);
        auto s = nn::div(tape, dy, dx);
        auto big_d = nn::sub(tape, nn::add(tape, dk1, dk), nn::scale(tape, s, 2.0));

        Tensor xi;
        if (!inverse) {
            xi = nn::clamp_op(tape, nn::div(tape, nn::sub(tape, z_safe, xk), dx), 0.0, 1.0);
        } else {
            // solve the bin's quadratic for xi; Durkan et al.'s stable root
            auto f = nn::sub(tape, z_safe, yk);
            auto fd = nn::mul(tape, f, big_d);
            auto qa = nn::add(tape, nn::mul(tape, dy, nn::sub(tape, s, dk)), fd);
            auto qb = nn::sub(tape, nn::mul(tape, dy, dk), fd);
            auto qc = nn::neg(tape, nn::mul(tape, f, s));
            auto disc = nn::clamp_op(
                tape, nn::sub(tape, nn::square(tape, qb), nn::scale(tape, nn::mul(tape, qa, qc), 4.0)),
                0.0, std::numeric_limits<double>::infinity());
            auto denom_q = nn::sub(tape, nn::neg(tape, qb), nn::sqrt_op(tape, disc));
            xi = nn::clamp_op(tape, nn::div(tape, nn::scale(tape, qc, 2.0), denom_q), 0.0, 1.0);
        }

        auto one_minus = nn::add_scalar(tape, nn::neg(tape, xi), 1.0);
        auto xi_om = nn::mul(tape, xi, one_minus);
        auto xi2 = nn::square(tape, xi);
        auto denom = nn::add(tape, s, nn::mul(tape, big_d, xi_om));
        auto deriv_num = nn::mul(
            tape, nn::square(tape, s),
            nn::add(tape,
                    nn::add(tape, nn::mul(tape, dk1, xi2),
                            nn::scale(tape, nn::mul(tape, s, xi_om), 2.0)),
                    nn::mul(tape, dk, nn::square(tape, one_minus))));
        auto log_det_fwd =
            nn::sub(tape, nn::log_op(tape, deriv_num), nn::scale(tape, nn::log_op(tape, denom), 2.0));

        Tensor val_in;
        if (!inverse) {
            auto num = nn::mul(
                tape, dy, nn::add(tape, nn::mul(tape, s, xi2), nn::mul(tape, dk, xi_om)));
            val_in = nn::add(tape, yk, nn::div(tape, num, denom));
        } else {
            val_in = nn::add(tape, xk, nn::mul(tape, xi, dx));
        }
        auto ld_in = inverse ? nn::neg(tape, log_det_fwd) : log_det_fwd;

        auto zeros = nn::make_tensor(L, 1);
        out_cols.push_back(nn::where(tape, mask, val_in, zj));
        ld_cols.push_back(nn::where(tape, mask, ld_in, zeros));
    }

    Result res;
    res.value = control_dim_ == 1 ? out_cols[0] : nn::concat_cols(tape, out_cols);
    res.log_det = ld_cols[0];
    for (std::size_t j = 1; j < ld_cols.size(); ++j)
        res.log_det = nn::add(tape, res.log_det, ld_cols[j]);
    return res;
}

}  // namespace jd::policy
