#pragma once

#include "nn/net.hpp"
#include "policy/spline_flow.hpp"
#include "sde/simulate.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

namespace jd::policy {

using nn::Tensor;
using nn::Tape;
using sde::MatrixXd;
using sde::VectorXd;

struct SquashConfig {
    bool enabled = false;
    double u_min = 0.0;
    double u_max = 1.0;
    double tau_start = 2.0;
    double tau_end = 1.0;
};

struct FlowConfig {
    bool enabled = false;
    std::size_t bins = 6;
    double tail_bound = 2.5;
    std::size_t hidden_width = 32;
    std::size_t depth = 2;
};

struct PolicyConfig {
    std::size_t state_dim = 1;
    std::size_t control_dim = 1;
    std::size_t hidden_width = 11;
    std::size_t depth = 3;
    bool learnable_std = false;
    double fixed_std = 0.1;
    double init_std = 0.15;
    FlowConfig flow;
    SquashConfig squash;
    // Flow stays a frozen identity and the squash temperature anneals
    // tau_start -> tau_end over this many actor updates (one shared counter).
    int warmup_updates = 30;
    std::vector<double> input_scale;  // per (t, x...) feature, optional
};

// Conditional stochastic policy pi(u | t, x): Gaussian base from a network,
// optional rational-quadratic spline flow, optional temperature-controlled
// sigmoid squashing. Sampling and log densities are exact.
class FlowPolicy : public sde::ActionSampler {
public:
    FlowPolicy(const PolicyConfig& config, jd::Rng& rng);

    std::size_t control_dim() const override { return config_.control_dim; }
    void sample_batch(double t, const MatrixXd& states, std::vector<jd::Rng>& rngs,
                      MatrixXd& actions, VectorXd& log_probs) const override;

    // Exact log pi(u | t, x) via the inverse path; differentiable through all
    // policy parameters when a tape is supplied. Rows where the action had to
    // be clamped away from the squash bounds are flagged.
    Tensor log_prob_batch(Tape* tape, double t, const MatrixXd& states, const MatrixXd& actions,
                          std::vector<std::uint8_t>* saturated = nullptr) const;
    double log_prob(double t, const VectorXd& x, const VectorXd& u) const;

    // Pushforward mean. Exact for a pure Gaussian base; Monte-Carlo with a
    // fixed internal seed otherwise.
    MatrixXd mean_action(double t, const MatrixXd& states, std::size_t mc_samples = 256) const;

    // Base distribution (mu, std) at (t, x); std column equals the fixed one
    // when the policy is not learnable-std.
    void base_parameters(double t, const MatrixXd& states, MatrixXd& mu, MatrixXd& std) const;

    double entropy_estimate(double t, const VectorXd& x, std::size_t n_samples, jd::Rng& rng) const;

    void notify_actor_update() { ++update_count_; }
    int update_count() const { return update_count_; }
    void set_update_count(int n) { update_count_ = n; }
    bool flow_active() const { return config_.flow.enabled && update_count_ >= config_.warmup_updates; }
    double squash_temperature() const;

    std::vector<Tensor> base_parameters_list() const;
    std::vector<Tensor> flow_parameters_list() const;
    std::vector<Tensor> all_parameters() const;

    const PolicyConfig& config() const { return config_; }
    nn::ResidualMlp& base_net() { return base_net_; }
    SplineFlow* flow() { return flow_ ? flow_.get() : nullptr; }
    const SplineFlow* flow() const { return flow_ ? flow_.get() : nullptr; }

    void save(const std::string& path) const;
    static FlowPolicy load(const std::string& path);

private:
    struct Base {
        Tensor mu;
        Tensor std;
        Tensor log_std_sum;  // L x 1
    };
    Base base_forward(Tape* tape, double t, const MatrixXd& states) const;
    Tensor net_input(double t, const MatrixXd& states) const;

    PolicyConfig config_;
    nn::ResidualMlp base_net_;
    std::unique_ptr<SplineFlow> flow_;
    int update_count_ = 0;
};

}  // namespace jd::policy
