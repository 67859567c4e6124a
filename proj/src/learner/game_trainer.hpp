#pragma once

#include "bench/game.hpp"
#include "learner/learner.hpp"

#include <functional>

namespace jd::learner {

// Joint simulation of the n-agent wealth system. Brownian and jump columns
// put the common factor first (column 0 = W^0 / M^0, column 1+i = agent i).
struct GamePathBatch {
    sde::TimeGrid grid;
    std::uint64_t seed = 0;
    std::vector<MatrixXd> wealth;        // K+1 entries, L x n
    std::vector<MatrixXd> actions;       // K entries, L x n
    std::vector<MatrixXd> rewards;       // K entries, L x n (f_i dt)
    std::vector<MatrixXd> brownian;      // K entries, L x (n+1)
    std::vector<Eigen::MatrixXi> jumps;  // K entries, L x (n+1)

    std::size_t num_paths() const { return wealth.empty() ? 0 : static_cast<std::size_t>(wealth[0].rows()); }
};

// average wealth of the others: y_i = (1/n) sum_{j != i} x_j
double other_average(const Eigen::RowVectorXd& x, std::size_t i, std::size_t n);

// CARA relative-performance reward of agent i at (x_i, y_i)
double game_reward(const bench::GameParams& params, std::size_t i, double x, double y);

// Deterministic feedback rollout (the provider sees the full wealth matrix and
// returns all agents' actions); used for evaluation under common noise.
using GameActionFn = std::function<MatrixXd(double t, const MatrixXd& wealth)>;
GamePathBatch rollout_game(const bench::GameParams& params, const sde::TimeGrid& grid,
                           const GameActionFn& actions, std::size_t num_paths,
                           std::uint64_t seed);

// All agents run the online actor-critic scheme simultaneously against the
// current joint policy; agent i observes (t, X^i, Y^i).
TrainResult train_game(const bench::GameParams& params, const TrainConfig& config,
                       std::vector<policy::FlowPolicy>& policies,
                       std::vector<CriticPair>& critics,
                       const std::function<void(const IterationStats&)>& on_iteration = {});

}  // namespace jd::learner
