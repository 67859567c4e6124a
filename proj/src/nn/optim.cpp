#include "nn/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace jd::nn {

double LrSchedule::rate(std::int64_t step) const {
    double lr = base_lr;
    switch (kind) {
        case LrScheduleKind::Constant: break;
        case LrScheduleKind::MultiStep:
            for (auto m : milestones)
                if (step >= m) lr *= decay;
            break;
        case LrScheduleKind::CosineWarmup: {
            if (warmup_steps > 0 && step < warmup_steps) {
                // Linear ramp; starts at 1/warmup rather than 0 so the rate
                // stays strictly positive.
                lr = base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
            } else {
                const double lr_min = base_lr * min_lr_fraction;
                const std::int64_t span = total_steps > warmup_steps ? total_steps - warmup_steps : 1;
                double phase = static_cast<double>(step - warmup_steps) / static_cast<double>(span);
                if (phase > 1.0) phase = 1.0;
                if (phase < 0.0) phase = 0.0;
                lr = lr_min + 0.5 * (base_lr - lr_min) * (1.0 + std::cos(3.14159265358979323846 * phase));
            }
            break;
        }
    }
    if (!(lr > 0.0)) throw std::runtime_error("lr schedule: non-positive rate");
    return lr;
}

LrSchedule LrSchedule::constant(double lr) {
    LrSchedule s;
    s.kind = LrScheduleKind::Constant;
    s.base_lr = lr;
    return s;
}

LrSchedule LrSchedule::multi_step(double lr, std::vector<std::int64_t> milestones, double decay) {
    LrSchedule s;
    s.kind = LrScheduleKind::MultiStep;
    s.base_lr = lr;
    s.milestones = std::move(milestones);
    s.decay = decay;
    return s;
}

LrSchedule LrSchedule::cosine_warmup(double lr, std::int64_t warmup, std::int64_t total,
                                     double min_fraction) {
    LrSchedule s;
    s.kind = LrScheduleKind::CosineWarmup;
    s.base_lr = lr;
    s.warmup_steps = warmup;
    s.total_steps = total;
    s.min_lr_fraction = min_fraction;
    return s;
}

Adam::Adam(std::vector<Tensor> params, double learning_rate, double beta1, double beta2,
           double epsilon)
    : params_(std::move(params)), learning_rate_(learning_rate), beta1_(beta1), beta2_(beta2),
      epsilon_(epsilon) {
    for (const auto& p : params_) {
        first_moment_.emplace_back(p->size(), 0.0);
        second_moment_.emplace_back(p->size(), 0.0);
    }
}

void Adam::step() {
    ++step_count_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p->has_grad()) continue;  // parameter not touched by this loss
        const double* g = p->grad().data();
        double* m = first_moment_[i].data();
        double* v = second_moment_[i].data();
        double* w = p->data();
        for (std::size_t j = 0; j < p->size(); ++j) {
            if (!std::isfinite(g[j]))
                throw std::runtime_error("adam: non-finite gradient at parameter " +
                                         std::to_string(i) + "[" + std::to_string(j) + "]");
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            w[j] -= learning_rate_ * m_hat / (std::sqrt(v_hat) + epsilon_);
        }
    }
}

void polyak_update(std::vector<Tensor>& target_params, const std::vector<Tensor>& online_params,
                   double rho_c) {
    if (rho_c < 0.0 || rho_c > 1.0) throw std::invalid_argument("polyak: rho_c outside [0,1]");
    if (target_params.size() != online_params.size())
        throw std::invalid_argument("polyak: parameter list mismatch");
    for (std::size_t i = 0; i < target_params.size(); ++i) {
        auto& t = target_params[i];
        const auto& o = online_params[i];
        if (t->size() != o->size()) throw std::invalid_argument("polyak: shape mismatch");
        double* pt = t->data();
        const double* po = o->data();
        // increment form: exact no-op when target == online
        for (std::size_t j = 0; j < t->size(); ++j) pt[j] += (1.0 - rho_c) * (po[j] - pt[j]);
    }
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        if (!p->has_grad()) continue;
        for (double g : p->grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (const auto& p : params) {
            if (!p->has_grad()) continue;
            for (double& g : p->grad_buffer()) g *= s;
        }
    }
    return norm;
}

}  // namespace jd::nn
