#pragma once

#include "sde/model.hpp"
#include "util/rng.hpp"

#include <iosfwd>
#include <memory>

namespace jd::sde {

// Batched policy hook for the simulator. Implementations must draw all
// randomness for trajectory l from rngs[l] only, so rollouts stay
// reproducible regardless of how the batch is traversed.
class ActionSampler {
public:
    virtual ~ActionSampler() = default;
    virtual std::size_t control_dim() const = 0;
    // states: L x d. Fills actions (L x m) and per-row log densities.
    virtual void sample_batch(double t, const MatrixXd& states, std::vector<Rng>& rngs,
                              MatrixXd& actions, VectorXd& log_probs) const = 0;
};

// L trajectories on a K-step grid, stored stepwise (states[k] is L x d).
struct PathBatch {
    TimeGrid grid;
    std::uint64_t seed = 0;
    std::vector<MatrixXd> states;                  // K+1 entries, L x d
    std::vector<MatrixXd> actions;                 // K entries, L x m
    MatrixXd log_probs;                            // L x K
    MatrixXd rewards;                              // L x K, f(t_k, X_k, u_k) * dt
    std::vector<MatrixXd> brownian;                // K entries, L x dW
    std::vector<Eigen::MatrixXi> jump_counts;      // K entries, L x channels

    std::size_t num_paths() const { return states.empty() ? 0 : static_cast<std::size_t>(states[0].rows()); }
    std::size_t num_steps() const { return actions.size(); }

    // Debug dump, one row per (l, k); see README for the column list.
    void write_csv(std::ostream& os) const;
};

JumpRecord sample_jumps(const std::vector<double>& lambdas, double delta_t, Rng& rng);

// One Euler step with compensated jumps:
//   x' = x + b dt + sigma dW + sum_i count_i * alpha_i - sum_i lambda_i(t) alpha_i dt.
// All jumps of a step are applied at the step's left endpoint state; dw must
// be drawn with variance delta_t per coordinate.
VectorXd euler_step(const ModelSpec& model, double t, double delta_t, const VectorXd& x,
                    const VectorXd& u, const VectorXd& dw, const JumpRecord& jumps,
                    std::vector<VectorXd>* applied_sizes = nullptr);

// Whole-batch Euler step (rows are trajectories); uses the model's batched
// fast paths when present, otherwise loops over euler_step.
void euler_step_batch(const ModelSpec& model, double t, double delta_t, const MatrixXd& X,
                      const MatrixXd& U, const MatrixXd& dW, const Eigen::MatrixXi& counts,
                      MatrixXd& X_next);

// Batched running reward (undiscounted rate, not yet scaled by dt).
void reward_batch(const ModelSpec& model, double t, const MatrixXd& X, const MatrixXd& U,
                  VectorXd& out);

struct RolloutOptions {
    double explosion_bound = 1e6;
};

PathBatch rollout_batch(const ModelSpec& model, const TimeGrid& grid, const ActionSampler& policy,
                        std::size_t num_paths, std::uint64_t seed,
                        const RolloutOptions& opts = {});

}  // namespace jd::sde
