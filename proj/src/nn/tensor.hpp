#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace jd::nn {

// Dense 2-D tensor of doubles (rows x cols, row-major). Scalars are 1x1,
// vectors 1xN. Gradients live in a buffer that is owned by the tensor but
// written by Tape::backward; each backward pass zeroes the buffers of every
// tensor it touches before accumulating, so grads are valid immediately
// after the pass and never leak across training steps.
class TensorImpl;
using Tensor = std::shared_ptr<TensorImpl>;

class TensorImpl {
public:
    struct Uninit {};
    TensorImpl(std::size_t rows, std::size_t cols, bool requires_grad = false)
        : rows_(rows), cols_(cols), data_(new double[rows * cols]()),
          requires_grad_(requires_grad) {}
    TensorImpl(std::size_t rows, std::size_t cols, Uninit)
        : rows_(rows), cols_(cols), data_(new double[rows * cols]) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return rows_ * cols_; }
    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool v) { requires_grad_ = v; }

    double* data() { return data_.get(); }
    const double* data() const { return data_.get(); }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double scalar() const;

    std::vector<double>& grad_buffer() {
        if (grad_.size() != size()) grad_.assign(size(), 0.0);
        return grad_;
    }
    const std::vector<double>& grad() const { return grad_; }
    double grad_at(std::size_t r, std::size_t c) const { return grad_[r * cols_ + c]; }
    void zero_grad() { grad_.assign(size(), 0.0); }
    bool has_grad() const { return grad_.size() == size(); }

    bool all_finite() const;

private:
    std::size_t rows_, cols_;
    std::unique_ptr<double[]> data_;
    std::vector<double> grad_;
    bool requires_grad_ = false;
};

Tensor make_tensor(std::size_t rows, std::size_t cols, bool requires_grad = false);
Tensor make_tensor(std::size_t rows, std::size_t cols, const std::vector<double>& values,
                   bool requires_grad = false);
Tensor make_scalar(double v, bool requires_grad = false);
Tensor clone_data(const Tensor& t);  // detached copy (requires_grad = false)

// Records the forward graph of one loss window. Destroy (or simply drop) the
// tape to reset; a tape can run backward exactly once.
class Tape {
public:
    void backward(const Tensor& scalar_output);
    bool used() const { return used_; }
    std::size_t num_ops() const { return ops_.size(); }

    void record(std::function<void()> backward_op, std::initializer_list<Tensor> touched);
    void touch(const Tensor& t);

private:
    std::vector<std::function<void()>> ops_;
    std::vector<Tensor> touched_;
    bool used_ = false;
};

// Elementwise binary ops support shapes: (BxN op BxN), (BxN op 1xN),
// (BxN op Bx1), (BxN op 1x1). Gradients reduce over broadcast axes.
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor div(Tape* tape, const Tensor& a, const Tensor& b);

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);

Tensor neg(Tape* tape, const Tensor& a);
Tensor scale(Tape* tape, const Tensor& a, double c);
Tensor add_scalar(Tape* tape, const Tensor& a, double c);
Tensor tanh_op(Tape* tape, const Tensor& a);
Tensor exp_op(Tape* tape, const Tensor& a);
Tensor log_op(Tape* tape, const Tensor& a);
Tensor sqrt_op(Tape* tape, const Tensor& a);
Tensor square(Tape* tape, const Tensor& a);
Tensor sigmoid(Tape* tape, const Tensor& a);
Tensor softplus(Tape* tape, const Tensor& a);
// Subgradient 1 inside [lo, hi], 0 outside.
Tensor clamp_op(Tape* tape, const Tensor& a, double lo, double hi);

Tensor sum_all(Tape* tape, const Tensor& a);
Tensor mean_all(Tape* tape, const Tensor& a);
Tensor row_sum(Tape* tape, const Tensor& a);  // BxN -> Bx1

Tensor concat_cols(Tape* tape, const std::vector<Tensor>& parts);
Tensor slice_cols(Tape* tape, const Tensor& a, std::size_t c0, std::size_t c1);
Tensor cumsum_cols(Tape* tape, const Tensor& a);

// out(r, 0) = a(r, idx[r]); backward scatter-adds.
Tensor gather_cols(Tape* tape, const Tensor& a, const std::vector<std::size_t>& idx);

// mask is plain data (1 -> a, 0 -> b); gradients are routed accordingly.
Tensor where(Tape* tape, const Tensor& mask, const Tensor& a, const Tensor& b);

}  // namespace jd::nn
