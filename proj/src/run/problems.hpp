#pragma once

#include "bench/game.hpp"
#include "bench/merton.hpp"
#include "bench/riccati.hpp"
#include "learner/game_trainer.hpp"
#include "learner/learner.hpp"
#include "metrics/metrics.hpp"
#include "policy/policy.hpp"
#include "run/config.hpp"

namespace jd::run {

// Fully instantiated LQ experiment: simulation model, coefficient bundle and
// the Riccati ground truth.
struct LqProblem {
    bench::LqModel lq;
    sde::ModelSpec model;
    bench::RiccatiSolution riccati;
    double horizon = 0.0;

    bench::LqBenchmark benchmark() const { return bench::LqBenchmark{lq, riccati}; }
};

LqProblem build_lq(const ExperimentConfig& config);

sde::ModelSpec build_merton_model(const ExperimentConfig& config);
bench::MertonParams merton_params(const ExperimentConfig& config);
bench::GameParams build_game(const ExperimentConfig& config);

policy::PolicyConfig make_policy_config(const ExperimentConfig& config);
policy::FlowPolicy make_policy(const ExperimentConfig& config, jd::Rng& rng);
learner::CriticPair make_critic(const ExperimentConfig& config, jd::Rng& rng);

// Evaluation protocols. Learned and benchmark trajectories are driven by the
// same Brownian increments and jump events (common random numbers); the
// learned side replays the policy's mean action, gamma > 0 control error is
// the time-averaged KL(pi* || pi_hat) at the learned path's states.
metrics::MetricReport evaluate_lq(const LqProblem& problem, const ExperimentConfig& config,
                                  const policy::FlowPolicy& pol,
                                  const learner::CriticPair& critic);
metrics::MetricReport evaluate_merton_standard(const ExperimentConfig& config,
                                               const bench::MertonBenchmark& benchmark,
                                               const policy::FlowPolicy& pol,
                                               const learner::CriticPair& critic);
metrics::MetricReport evaluate_merton_entropy(const ExperimentConfig& config,
                                              const bench::MertonEntropyBenchmark& benchmark,
                                              const policy::FlowPolicy& pol,
                                              const learner::CriticPair& critic);
metrics::MetricReport evaluate_game(const ExperimentConfig& config,
                                    const bench::GameBenchmark& benchmark,
                                    const std::vector<policy::FlowPolicy>& policies,
                                    const std::vector<learner::CriticPair>& critics);

// Self checks: the benchmark plays both sides, so every metric must vanish.
metrics::MetricReport evaluate_lq_self(const LqProblem& problem, const ExperimentConfig& config);
metrics::MetricReport evaluate_merton_standard_self(const ExperimentConfig& config,
                                                    const bench::MertonBenchmark& benchmark);
metrics::MetricReport evaluate_game_self(const ExperimentConfig& config,
                                         const bench::GameBenchmark& benchmark);

// Deterministic feedback wrapper for benchmark controls.
class FeedbackSampler : public sde::ActionSampler {
public:
    using Fn = std::function<sde::MatrixXd(double, const sde::MatrixXd&)>;
    FeedbackSampler(std::size_t control_dim, Fn fn) : m_(control_dim), fn_(std::move(fn)) {}
    std::size_t control_dim() const override { return m_; }
    void sample_batch(double t, const sde::MatrixXd& states, std::vector<jd::Rng>&,
                      sde::MatrixXd& actions, sde::VectorXd& log_probs) const override {
        actions = fn_(t, states);
        log_probs = sde::VectorXd::Zero(states.rows());
    }

private:
    std::size_t m_;
    Fn fn_;
};

// Mean-action replay of a stochastic policy (draws nothing from the rollout
// streams, so the driving noise matches the benchmark replay).
class MeanPolicySampler : public sde::ActionSampler {
public:
    MeanPolicySampler(const policy::FlowPolicy& pol, std::size_t mc_samples)
        : pol_(pol), mc_(mc_samples) {}
    std::size_t control_dim() const override { return pol_.control_dim(); }
    void sample_batch(double t, const sde::MatrixXd& states, std::vector<jd::Rng>&,
                      sde::MatrixXd& actions, sde::VectorXd& log_probs) const override {
        actions = pol_.mean_action(t, states, mc_);
        log_probs = sde::VectorXd::Zero(states.rows());
    }

private:
    const policy::FlowPolicy& pol_;
    std::size_t mc_;
};

}  // namespace jd::run
