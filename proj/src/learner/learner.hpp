#pragma once

#include "nn/net.hpp"
#include "nn/optim.hpp"
#include "policy/policy.hpp"
#include "sde/simulate.hpp"

#include <functional>
#include <vector>

namespace jd::learner {

using sde::MatrixXd;
using sde::VectorXd;

// Online value network plus its Polyak-averaged bootstrap target. For
// validation a closed-form value (and its state gradient) can be installed in
// place of the networks; the TD/advantage operations then see the exact map.
struct CriticPair {
    nn::ResidualMlp online;
    nn::ResidualMlp target;
    double rho_c = 0.99;
    std::function<double(double, const VectorXd&)> analytic_value;
    std::function<VectorXd(double, const VectorXd&)> analytic_gradient;

    CriticPair() = default;
    CriticPair(std::size_t state_dim, std::size_t hidden_width, std::size_t depth, jd::Rng& rng,
               const std::vector<double>& input_scale = {});
    static CriticPair analytic(std::function<double(double, const VectorXd&)> value,
                               std::function<VectorXd(double, const VectorXd&)> gradient);

    // batched V(t, x), no tape
    VectorXd value(double t, const MatrixXd& states, bool use_target = false) const;
    // d V / d x rows (time gradient dropped), detached from parameters
    MatrixXd state_gradient(double t, const MatrixXd& states) const;
    void polyak() { nn::polyak_update(target.parameters(), online.parameters(), rho_c); }
};

enum class ScheduleKind { Constant, MultiStep, CosineWarmup };

struct TrainConfig {
    double beta = 1.0;
    double gamma = 0.0;
    double delta_t = 0.01;
    std::size_t steps = 1000;        // K, grid points per iteration
    std::size_t batch = 100;         // L, trajectories per iteration
    int iterations = 1000;           // N_itr
    std::size_t critic_period = 5;   // K_critic
    std::size_t actor_period = 20;   // K_actor
    double rho_c = 0.99;
    double critic_lr = 1e-3;
    double actor_lr = 1e-3;
    double flow_lr = 0.0;            // 0: flow parameters share actor_lr
    ScheduleKind schedule = ScheduleKind::MultiStep;
    std::uint64_t seed = 2025;
    bool martingale_correction = true;
    double grad_clip = 10.0;
    double explosion_bound = 1e6;
    double divergence_guard = 1e8;
};

// --- single transition quantities (batch-level twins drive the training loop) ---

// delta = f_{k,l} + e^{-beta dt} Vbar(t_{k+1}, X_{k+1}) - V(t_k, X_k); when
// entropy_weight > 0 the sampled entropy reward -gamma log pi dt is part of
// the running term.
double td_error(const CriticPair& critic, const sde::PathBatch& batch, std::size_t k,
                std::size_t l, double beta, double entropy_weight = 0.0);

// delta minus the Brownian and compensated-jump martingale increments,
// evaluated with the online critic and the model's sigma/alpha/lambda.
double martingale_corrected_td(const CriticPair& critic, const sde::PathBatch& batch,
                               std::size_t k, std::size_t l, const sde::ModelSpec& model,
                               double entropy_weight = 0.0);

// mean squared (optionally corrected) TD error over steps [k0, k1) of a fixed
// batch; gradients flow into the online critic only.
nn::Tensor critic_loss(nn::Tape* tape, CriticPair& critic, const sde::PathBatch& batch,
                       std::size_t k0, std::size_t k1, double beta, double entropy_weight = 0.0,
                       const sde::ModelSpec* correction_model = nullptr);

// one-step advantage (1/dt)(f + e^{-beta dt} V(t_{k+1}) - V(t_k)) - gamma log pi,
// both value terms from the online critic.
double gae_advantage(const CriticPair& critic, const sde::PathBatch& batch, std::size_t k,
                     std::size_t l, double beta, double gamma, double delta_t);

// -(1/(beta L K_window)) sum log pi_theta(u | t, x) * stopgrad(advantage)
nn::Tensor actor_loss(nn::Tape* tape, const policy::FlowPolicy& pol, const sde::PathBatch& batch,
                      const std::vector<VectorXd>& advantages, std::size_t k0, std::size_t k1,
                      double beta);

struct IterationStats {
    int iteration = 0;
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    std::vector<IterationStats> iterations;
};

// The online actor-critic loop: per grid step sample an action, evolve the
// state, accumulate the (corrected) TD loss, step the critic optimizer every
// critic_period steps (with a Polyak target update), accumulate the
// policy-gradient surrogate and step the actor every actor_period steps.
// Partial windows left at the end of an iteration are discarded.
TrainResult train(const sde::ModelSpec& model, const TrainConfig& config,
                  policy::FlowPolicy& pol, CriticPair& critic,
                  const std::function<void(const IterationStats&)>& on_iteration = {});

nn::LrSchedule make_schedule(ScheduleKind kind, double lr, int iterations);

}  // namespace jd::learner
