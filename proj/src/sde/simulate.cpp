#include "sde/simulate.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace jd::sde {

JumpRecord sample_jumps(const std::vector<double>& lambdas, double delta_t, Rng& rng) {
    JumpRecord rec;
    rec.counts.resize(lambdas.size());
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (lambdas[i] < 0.0) throw std::invalid_argument("sample_jumps: negative intensity");
        rec.counts[i] = rng.poisson(lambdas[i] * delta_t);
    }
    return rec;
}

VectorXd euler_step(const ModelSpec& model, double t, double delta_t, const VectorXd& x,
                    const VectorXd& u, const VectorXd& dw, const JumpRecord& jumps,
                    std::vector<VectorXd>* applied_sizes) {
    VectorXd next = x + model.drift(t, x, u) * delta_t;
    if (model.brownian_dim > 0) {
        if (dw.size() != static_cast<Eigen::Index>(model.brownian_dim))
            throw std::invalid_argument("euler_step: brownian increment dimension mismatch");
        next += model.diffusion(t, x, u) * dw;
    }
    const std::size_t channels = model.num_jump_channels();
    if (jumps.counts.size() != channels)
        throw std::invalid_argument("euler_step: jump record channel mismatch");
    if (applied_sizes) applied_sizes->assign(channels, VectorXd::Zero(x.size()));
    for (std::size_t i = 0; i < channels; ++i) {
        const double lambda = model.jump_intensity[i](t);
        if (jumps.counts[i] == 0 && lambda == 0.0) continue;
        const VectorXd size = model.jump_size[i](t, x, u);
        // jumps at the left state, compensator subtracted so the increment is
        // driven by the compensated measure
        next += size * static_cast<double>(jumps.counts[i]) - size * (lambda * delta_t);
        if (applied_sizes) (*applied_sizes)[i] = size * static_cast<double>(jumps.counts[i]);
    }
    for (Eigen::Index i = 0; i < next.size(); ++i)
        if (!std::isfinite(next[i]))
            throw std::runtime_error("euler_step: non-finite state at t=" + std::to_string(t));
    return next;
}

void euler_step_batch(const ModelSpec& model, double t, double delta_t, const MatrixXd& X,
                      const MatrixXd& U, const MatrixXd& dW, const Eigen::MatrixXi& counts,
                      MatrixXd& X_next) {
    const std::size_t L = X.rows();
    const std::size_t channels = model.num_jump_channels();
    if (model.has_batched()) {
        MatrixXd tmp(L, X.cols());
        model.drift_batch(t, X, U, tmp);
        X_next = X + delta_t * tmp;
        if (model.brownian_dim > 0) {
            model.diffusion_apply_batch(t, X, U, dW, tmp);
            X_next += tmp;
        }
        for (std::size_t i = 0; i < channels; ++i) {
            const double lambda = model.jump_intensity[i](t);
            model.jump_size_batch[i](t, X, U, tmp);
            for (std::size_t l = 0; l < L; ++l) {
                const double scale =
                    static_cast<double>(counts(static_cast<Eigen::Index>(l),
                                               static_cast<Eigen::Index>(i))) -
                    lambda * delta_t;
                if (scale != 0.0) X_next.row(l) += scale * tmp.row(l);
            }
        }
        if (!X_next.allFinite())
            throw std::runtime_error("euler_step_batch: non-finite state at t=" +
                                     std::to_string(t));
        return;
    }
    JumpRecord rec;
    rec.counts.resize(channels);
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t i = 0; i < channels; ++i)
            rec.counts[i] = counts(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(i));
        X_next.row(l) = euler_step(model, t, delta_t, X.row(l).transpose(), U.row(l).transpose(),
                                   dW.row(l).transpose(), rec)
                            .transpose();
    }
}

void reward_batch(const ModelSpec& model, double t, const MatrixXd& X, const MatrixXd& U,
                  VectorXd& out) {
    out.resize(X.rows());
    if (model.reward_batch) {
        model.reward_batch(t, X, U, out);
        return;
    }
    for (Eigen::Index l = 0; l < X.rows(); ++l)
        out[l] = model.running_reward(t, X.row(l).transpose(), U.row(l).transpose());
}

PathBatch rollout_batch(const ModelSpec& model, const TimeGrid& grid, const ActionSampler& policy,
                        std::size_t num_paths, std::uint64_t seed, const RolloutOptions& opts) {
    model.validate();
    if (policy.control_dim() != model.control_dim)
        throw std::invalid_argument("rollout: policy/model control dimension mismatch");
    const std::size_t L = num_paths;
    const std::size_t K = grid.steps;
    const std::size_t d = model.state_dim;
    const std::size_t dW = model.brownian_dim;
    const std::size_t channels = model.num_jump_channels();
    const double dt = grid.delta_t;
    const double sqrt_dt = std::sqrt(dt);

    PathBatch batch;
    batch.grid = grid;
    batch.seed = seed;
    batch.states.assign(K + 1, MatrixXd::Zero(L, d));
    batch.actions.assign(K, MatrixXd::Zero(L, model.control_dim));
    batch.log_probs = MatrixXd::Zero(L, K);
    batch.rewards = MatrixXd::Zero(L, K);
    batch.brownian.assign(K, MatrixXd::Zero(L, dW));
    batch.jump_counts.assign(K, Eigen::MatrixXi::Zero(L, static_cast<Eigen::Index>(channels)));

    std::vector<Rng> rngs;
    rngs.reserve(L);
    for (std::size_t l = 0; l < L; ++l) rngs.emplace_back(seed, static_cast<std::uint64_t>(l));

    for (std::size_t l = 0; l < L; ++l) batch.states[0].row(l) = model.initial_state.transpose();

    std::vector<double> lambdas(channels);
    MatrixXd actions(L, model.control_dim);
    VectorXd logp(L);
    VectorXd rewards(L);
    for (std::size_t k = 0; k < K; ++k) {
        const double t = grid.t(k);
        policy.sample_batch(t, batch.states[k], rngs, actions, logp);
        batch.actions[k] = actions;
        batch.log_probs.col(k) = logp;
        for (std::size_t i = 0; i < channels; ++i) lambdas[i] = model.jump_intensity[i](t);

        for (std::size_t l = 0; l < L; ++l) {
            for (std::size_t j = 0; j < dW; ++j)
                batch.brownian[k](l, static_cast<Eigen::Index>(j)) = sqrt_dt * rngs[l].normal();
            for (std::size_t i = 0; i < channels; ++i)
                batch.jump_counts[k](l, static_cast<Eigen::Index>(i)) =
                    rngs[l].poisson(lambdas[i] * dt);
        }
        reward_batch(model, t, batch.states[k], actions, rewards);
        batch.rewards.col(k) = rewards * dt;
        euler_step_batch(model, t, dt, batch.states[k], actions, batch.brownian[k],
                         batch.jump_counts[k], batch.states[k + 1]);
        if (batch.states[k + 1].cwiseAbs().maxCoeff() > opts.explosion_bound)
            throw std::runtime_error("rollout: state explosion at step " + std::to_string(k) +
                                     " (|x| > " + std::to_string(opts.explosion_bound) + ")");
    }
    return batch;
}

void PathBatch::write_csv(std::ostream& os) const {
    const std::size_t L = num_paths();
    const std::size_t K = num_steps();
    const auto d = states.empty() ? 0 : states[0].cols();
    const auto m = actions.empty() ? 0 : actions[0].cols();
    const auto dw = brownian.empty() ? 0 : brownian[0].cols();
    const auto ch = jump_counts.empty() ? 0 : jump_counts[0].cols();
    os << "path,step,t";
    for (Eigen::Index i = 0; i < d; ++i) os << ",x" << i;
    for (Eigen::Index i = 0; i < m; ++i) os << ",u" << i;
    os << ",log_prob,reward";
    for (Eigen::Index i = 0; i < dw; ++i) os << ",dw" << i;
    for (Eigen::Index i = 0; i < ch; ++i) os << ",jumps" << i;
    os << "\n";
    for (std::size_t l = 0; l < L; ++l)
        for (std::size_t k = 0; k < K; ++k) {
            os << l << "," << k << "," << grid.t(k);
            for (Eigen::Index i = 0; i < d; ++i) os << "," << states[k](l, i);
            for (Eigen::Index i = 0; i < m; ++i) os << "," << actions[k](l, i);
            os << "," << log_probs(l, k) << "," << rewards(l, k);
            for (Eigen::Index i = 0; i < dw; ++i) os << "," << brownian[k](l, i);
            for (Eigen::Index i = 0; i < ch; ++i) os << "," << jump_counts[k](l, i);
            os << "\n";
        }
}

}  // namespace jd::sde
