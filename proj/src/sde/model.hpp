#pragma once

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace jd::sde {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Uniform grid t_k = k * delta_t, k = 0..steps.
struct TimeGrid {
    std::size_t steps = 0;
    double delta_t = 0.0;

    TimeGrid() = default;
    TimeGrid(std::size_t k, double dt) : steps(k), delta_t(dt) {
        if (!(delta_t > 0.0)) throw std::invalid_argument("time grid: delta_t must be positive");
    }
    double horizon() const { return static_cast<double>(steps) * delta_t; }
    double t(std::size_t k) const { return static_cast<double>(k) * delta_t; }
};

// Scalar coefficient as a function of time: constant, exponentially
// convergent v_inf + (v0 - v_inf) e^{-kappa t}, or sinusoidal
// v_bar + v_amp sin(2 pi t / period + phase).
struct CoefProfile {
    enum class Kind { Constant, Convergent, Periodic };
    Kind kind = Kind::Constant;
    double value = 0.0;                            // constant
    double v0 = 0.0, v_inf = 0.0, kappa = 1.0;     // convergent
    double v_bar = 0.0, v_amp = 0.0, period = 1.0, phase = 0.0;  // periodic

    static CoefProfile constant(double v);
    static CoefProfile convergent(double v0, double v_inf, double kappa);
    static CoefProfile periodic(double v_bar, double v_amp, double period, double phase = 0.0);

    double operator()(double t) const;
    double limit() const;  // long-time limit (time average for periodic)
};

double eval_profile(const CoefProfile& p, double t);

// Controlled jump-diffusion
//   dX = b(t,X,u) dt + sigma(t,X,u) dW + sum_i alpha_i(t,X,u) dM^(i),
// with M^(i) the compensated Poisson process of channel i at rate
// lambda_i(t). sigma maps to d x brownian_dim; each jump channel moves the
// whole state by its alpha vector.
struct ModelSpec {
    std::size_t state_dim = 0;
    std::size_t control_dim = 0;
    std::size_t brownian_dim = 0;

    std::function<VectorXd(double t, const VectorXd& x, const VectorXd& u)> drift;
    std::function<MatrixXd(double t, const VectorXd& x, const VectorXd& u)> diffusion;
    std::vector<std::function<VectorXd(double t, const VectorXd& x, const VectorXd& u)>> jump_size;
    std::vector<std::function<double(double t)>> jump_intensity;

    double discount = 1.0;       // beta
    double entropy_weight = 0.0; // gamma
    std::function<double(double t, const VectorXd& x, const VectorXd& u)> running_reward;

    VectorXd initial_state;

    // Optional batched fast paths over an L-row batch (rows are trajectories).
    // Semantics must match the per-row maps; the simulator falls back to the
    // row-wise maps when these are absent.
    std::function<void(double t, const MatrixXd& X, const MatrixXd& U, MatrixXd& out)> drift_batch;
    std::function<void(double t, const MatrixXd& X, const MatrixXd& U, const MatrixXd& dW,
                       MatrixXd& out)>
        diffusion_apply_batch;  // out = sigma(t, x_l, u_l) * dW_l per row
    std::vector<std::function<void(double t, const MatrixXd& X, const MatrixXd& U, MatrixXd& out)>>
        jump_size_batch;
    std::function<void(double t, const MatrixXd& X, const MatrixXd& U, VectorXd& out)> reward_batch;

    std::size_t num_jump_channels() const { return jump_size.size(); }
    bool has_batched() const {
        return drift_batch && diffusion_apply_batch && reward_batch &&
               jump_size_batch.size() == jump_size.size();
    }
    void validate() const;
};

// Jump events of one simulation step: Poisson counts per channel and the
// realized per-channel jump vectors (already scaled by the count).
struct JumpRecord {
    std::vector<int> counts;

    int total() const {
        int s = 0;
        for (int c : counts) s += c;
        return s;
    }
};

}  // namespace jd::sde
