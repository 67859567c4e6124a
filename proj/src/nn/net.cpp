#include "nn/net.hpp"

#include <cmath>
#include <stdexcept>

namespace jd::nn {

namespace {

Tensor uniform_fan_in(std::size_t rows, std::size_t cols, Rng& rng) {
    auto t = make_tensor(rows, cols, true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    for (std::size_t i = 0; i < t->size(); ++i) t->data()[i] = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

ResidualMlp::ResidualMlp(std::size_t input_dim, std::size_t hidden_width, std::size_t depth,
                         std::size_t output_dim, Rng& rng)
    : input_dim_(input_dim), hidden_width_(hidden_width), depth_(depth), output_dim_(output_dim),
      input_scale_(input_dim, 1.0) {
    params_.push_back(uniform_fan_in(input_dim, hidden_width, rng));
    params_.push_back(uniform_fan_in(1, hidden_width, rng));
    for (std::size_t k = 0; k < depth; ++k) {
        params_.push_back(uniform_fan_in(hidden_width, hidden_width, rng));
        params_.push_back(uniform_fan_in(1, hidden_width, rng));
    }
    params_.push_back(make_tensor(hidden_width, output_dim, true));  // zero readout
    params_.push_back(make_tensor(1, output_dim, true));
}

void ResidualMlp::set_input_scale(const std::vector<double>& scale) {
    if (scale.size() != input_dim_) throw std::invalid_argument("net: input scale dim mismatch");
    input_scale_ = scale;
}

Tensor ResidualMlp::forward(Tape* tape, const Tensor& input) const {
    if (input->cols() != input_dim_)
        throw std::invalid_argument("net: forward input dim " + std::to_string(input->cols()) +
                                    " != " + std::to_string(input_dim_));
    Tensor x = input;
    bool scaled = false;
    for (double s : input_scale_)
        if (s != 1.0) scaled = true;
    if (scaled) {
        auto sc = make_tensor(1, input_dim_, input_scale_);
        x = mul(tape, input, sc);
    }
    Tensor h = tanh_op(tape, add(tape, matmul(tape, x, params_[0]), params_[1]));
    for (std::size_t k = 0; k < depth_; ++k) {
        const Tensor& w = params_[2 + 2 * k];
        const Tensor& b = params_[3 + 2 * k];
        h = add(tape, h, tanh_op(tape, add(tape, matmul(tape, h, w), b)));
    }
    Tensor out = add(tape, matmul(tape, h, params_[2 + 2 * depth_]), params_[3 + 2 * depth_]);
    if (!out->all_finite()) throw std::runtime_error("net: non-finite forward output");
    return out;
}

std::vector<double> ResidualMlp::input_gradient(const Tensor& input) const {
    Tape tape;
    auto x = clone_data(input);
    x->set_requires_grad(true);
    auto y = forward(&tape, x);
    tape.backward(sum_all(&tape, y));
    return x->grad();
}

void ResidualMlp::copy_parameters_from(const ResidualMlp& other) {
    if (params_.size() != other.params_.size())
        throw std::invalid_argument("net: parameter list mismatch in copy");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i]->size() != other.params_[i]->size())
            throw std::invalid_argument("net: parameter shape mismatch in copy");
        std::copy(other.params_[i]->data(), other.params_[i]->data() + params_[i]->size(),
                  params_[i]->data());
    }
    input_scale_ = other.input_scale_;
}

std::vector<double> flatten_parameters(const std::vector<Tensor>& params) {
    std::vector<double> flat;
    for (const auto& p : params) flat.insert(flat.end(), p->data(), p->data() + p->size());
    return flat;
}

void unflatten_parameters(const std::vector<double>& flat, std::vector<Tensor>& params) {
    std::size_t off = 0;
    for (auto& p : params) {
        if (off + p->size() > flat.size())
            throw std::invalid_argument("net: flat parameter buffer too short");
        std::copy(flat.begin() + off, flat.begin() + off + p->size(), p->data());
        off += p->size();
    }
    if (off != flat.size()) throw std::invalid_argument("net: flat parameter buffer too long");
}

}  // namespace jd::nn
