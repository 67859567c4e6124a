#pragma once

#include "nn/tensor.hpp"
#include "util/rng.hpp"

#include <cstdint>
#include <vector>

namespace jd::nn {

// tanh MLP with residual blocks:
//   h = tanh(W_in x + b_in)
//   h = h + tanh(W_i h + b_i)      (depth blocks)
//   y = W_out h + b_out
// Hidden layers use uniform fan-in init; the readout is zero-initialized so a
// fresh network outputs exactly zero. Inputs may be scaled per-feature before
// the first layer (keeps tanh out of saturation when e.g. t runs to 20).
class ResidualMlp {
public:
    ResidualMlp() = default;
    ResidualMlp(std::size_t input_dim, std::size_t hidden_width, std::size_t depth,
                std::size_t output_dim, Rng& rng);

    Tensor forward(Tape* tape, const Tensor& input) const;

    // d(sum of outputs)/d(input), one row per batch row. Runs its own tape;
    // parameter gradients are untouched as far as the caller's tape goes.
    std::vector<double> input_gradient(const Tensor& input) const;

    std::vector<Tensor>& parameters() { return params_; }
    const std::vector<Tensor>& parameters() const { return params_; }

    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_dim() const { return output_dim_; }
    std::size_t hidden_width() const { return hidden_width_; }
    std::size_t depth() const { return depth_; }

    void set_input_scale(const std::vector<double>& scale);
    const std::vector<double>& input_scale() const { return input_scale_; }

    void copy_parameters_from(const ResidualMlp& other);

private:
    std::size_t input_dim_ = 0, hidden_width_ = 0, depth_ = 0, output_dim_ = 0;
    std::vector<double> input_scale_;
    std::vector<Tensor> params_;  // [W_in, b_in, (W_k, b_k) x depth, W_out, b_out]
};

// Serialization of a flat parameter list (row-major doubles).
std::vector<double> flatten_parameters(const std::vector<Tensor>& params);
void unflatten_parameters(const std::vector<double>& flat, std::vector<Tensor>& params);

}  // namespace jd::nn
