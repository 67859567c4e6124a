#pragma once

#include "nn/net.hpp"
#include "nn/tensor.hpp"
#include "sde/model.hpp"

#include <utility>

namespace jd::policy {

// Conditional monotone rational-quadratic spline acting per control
// coordinate, identity outside [-tail_bound, tail_bound]. Knot widths,
// heights and interior derivatives come from a conditioner network of
// (t, x); boundary derivatives are pinned to 1 so the map matches the
// identity tails in value and slope. With the conditioner readout at zero
// the transform is the exact identity (log-det 0 everywhere).
class SplineFlow {
public:
    SplineFlow() = default;
    SplineFlow(std::size_t state_dim, std::size_t control_dim, std::size_t bins,
               double tail_bound, std::size_t hidden_width, std::size_t depth, jd::Rng& rng);

    struct Result {
        nn::Tensor value;    // L x m
        nn::Tensor log_det;  // L x 1, log|det dz'/dz| of the direction applied
    };

    // z -> z', log_det = log|det dz'/dz|.
    Result forward(nn::Tape* tape, const nn::Tensor& z, double t, const sde::MatrixXd& states) const;
    // z' -> z, log_det = log|det dz/dz'| (the inverse map's own Jacobian).
    Result inverse(nn::Tape* tape, const nn::Tensor& z_prime, double t,
                   const sde::MatrixXd& states) const;

    std::vector<nn::Tensor>& parameters() { return conditioner_.parameters(); }
    const std::vector<nn::Tensor>& parameters() const { return conditioner_.parameters(); }
    nn::ResidualMlp& conditioner() { return conditioner_; }
    const nn::ResidualMlp& conditioner() const { return conditioner_; }

    std::size_t bins() const { return bins_; }
    double tail_bound() const { return tail_bound_; }
    std::size_t control_dim() const { return control_dim_; }

    void set_input_scale(const std::vector<double>& s) { conditioner_.set_input_scale(s); }

private:
    Result apply(nn::Tape* tape, const nn::Tensor& z, double t, const sde::MatrixXd& states,
                 bool inverse) const;

    std::size_t control_dim_ = 0;
    std::size_t bins_ = 6;
    double tail_bound_ = 2.5;
    nn::ResidualMlp conditioner_;
};

}  // namespace jd::policy
