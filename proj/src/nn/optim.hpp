#pragma once

#include "nn/tensor.hpp"

#include <cstdint>
#include <vector>

namespace jd::nn {

enum class LrScheduleKind { Constant, MultiStep, CosineWarmup };

// Learning-rate schedule, queried by step index (we step once per training
// iteration). Rates are strictly positive.
struct LrSchedule {
    LrScheduleKind kind = LrScheduleKind::Constant;
    double base_lr = 1e-3;
    // multi-step
    std::vector<std::int64_t> milestones;
    double decay = 0.1;
    // cosine warm-up
    std::int64_t warmup_steps = 0;
    std::int64_t total_steps = 1;
    double min_lr_fraction = 0.1;

    double rate(std::int64_t step) const;

    static LrSchedule constant(double lr);
    static LrSchedule multi_step(double lr, std::vector<std::int64_t> milestones, double decay);
    static LrSchedule cosine_warmup(double lr, std::int64_t warmup, std::int64_t total,
                                    double min_fraction = 0.1);
};

// Standard Adam with bias correction. Gradients are read from each
// parameter's grad buffer, which must hold the gradients of the most recent
// backward pass. Non-finite gradients abort with a diagnostic.
class Adam {
public:
    Adam() = default;
    Adam(std::vector<Tensor> params, double learning_rate, double beta1 = 0.9,
         double beta2 = 0.999, double epsilon = 1e-8);

    void step();
    void set_learning_rate(double lr) { learning_rate_ = lr; }
    double learning_rate() const { return learning_rate_; }
    std::int64_t step_count() const { return step_count_; }

    const std::vector<Tensor>& params() const { return params_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> first_moment_, second_moment_;
    double learning_rate_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, epsilon_ = 1e-8;
    std::int64_t step_count_ = 0;
};

// target <- rho_c * target + (1 - rho_c) * online, elementwise.
void polyak_update(std::vector<Tensor>& target_params, const std::vector<Tensor>& online_params,
                   double rho_c);

// Scales gradients in place so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

}  // namespace jd::nn
