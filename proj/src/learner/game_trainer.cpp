#include "learner/game_trainer.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace jd::learner {

using nn::Tensor;
using nn::Tape;

double other_average(const Eigen::RowVectorXd& x, std::size_t i, std::size_t n) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        if (j != i) s += x[static_cast<Eigen::Index>(j)];
    return s / static_cast<double>(n);
}

double game_reward(const bench::GameParams& q, std::size_t i, double x, double y) {
    const double chi = (1.0 - q.varpi[i] / static_cast<double>(q.n)) / q.varrho[i];
    const double rho = q.varpi[i] / q.varrho[i];
    return -std::exp(-chi * x + rho * y);
}

namespace {

Tensor obs_input(double t, const MatrixXd& wealth, std::size_t i, std::size_t n) {
    const std::size_t L = wealth.rows();
    auto input = nn::make_tensor(L, 3);
    for (std::size_t l = 0; l < L; ++l) {
        const Eigen::RowVectorXd row = wealth.row(l);
        input->at(l, 0) = t;
        input->at(l, 1) = row[static_cast<Eigen::Index>(i)];
        input->at(l, 2) = other_average(row, i, n);
    }
    return input;
}

MatrixXd obs_matrix(const MatrixXd& wealth, std::size_t i, std::size_t n) {
    MatrixXd obs(wealth.rows(), 2);
    for (Eigen::Index l = 0; l < wealth.rows(); ++l) {
        obs(l, 0) = wealth(l, static_cast<Eigen::Index>(i));
        obs(l, 1) = other_average(wealth.row(l), i, n);
    }
    return obs;
}

void step_wealth(const bench::GameParams& q, double dt, const Eigen::RowVectorXd& x,
                 const Eigen::RowVectorXd& u, const Eigen::RowVectorXd& dw,
                 const Eigen::RowVectorXi& counts, Eigen::RowVectorXd& out) {
    const std::size_t n = q.n;
    const double m0 = static_cast<double>(counts[0]) - q.lambda0 * dt;  // compensated common jump
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        const double mi = static_cast<double>(counts[ii + 1]) - q.lambda[i] * dt;
        out[ii] = x[ii] + u[ii] * (q.b[i] * dt + q.eta[i] * dw[ii + 1] + q.sigma[i] * dw[0] +
                                   q.alpha[i] * mi + q.xi[i] * m0);
    }
}

}  // namespace

GamePathBatch rollout_game(const bench::GameParams& q, const sde::TimeGrid& grid,
                           const GameActionFn& action_fn, std::size_t num_paths,
                           std::uint64_t seed) {
    q.validate();
    const std::size_t L = num_paths, K = grid.steps, n = q.n;
    const double dt = grid.delta_t;
    const double sqrt_dt = std::sqrt(dt);

    GamePathBatch batch;
    batch.grid = grid;
    batch.seed = seed;
    batch.wealth.assign(K + 1, MatrixXd::Zero(L, n));
    batch.actions.assign(K, MatrixXd::Zero(L, n));
    batch.rewards.assign(K, MatrixXd::Zero(L, n));
    batch.brownian.assign(K, MatrixXd::Zero(L, n + 1));
    batch.jumps.assign(K, Eigen::MatrixXi::Zero(L, static_cast<Eigen::Index>(n) + 1));

    std::vector<jd::Rng> rngs;
    for (std::size_t l = 0; l < L; ++l) rngs.emplace_back(seed, static_cast<std::uint64_t>(l));

    for (std::size_t k = 0; k < K; ++k) {
        const double t = grid.t(k);
        batch.actions[k] = action_fn(t, batch.wealth[k]);
        for (std::size_t l = 0; l < L; ++l) {
            for (std::size_t j = 0; j <= n; ++j)
                batch.brownian[k](l, static_cast<Eigen::Index>(j)) = sqrt_dt * rngs[l].normal();
            batch.jumps[k](l, 0) = rngs[l].poisson(q.lambda0 * dt);
            for (std::size_t i = 0; i < n; ++i)
                batch.jumps[k](l, static_cast<Eigen::Index>(i) + 1) =
                    rngs[l].poisson(q.lambda[i] * dt);
            Eigen::RowVectorXd next(n);
            step_wealth(q, dt, batch.wealth[k].row(l), batch.actions[k].row(l),
                        batch.brownian[k].row(l), batch.jumps[k].row(l), next);
            batch.wealth[k + 1].row(l) = next;
            for (std::size_t i = 0; i < n; ++i) {
                const double y = other_average(batch.wealth[k].row(l), i, n);
                batch.rewards[k](l, static_cast<Eigen::Index>(i)) =
                    game_reward(q, i, batch.wealth[k](l, static_cast<Eigen::Index>(i)), y) * dt;
            }
        }
    }
    return batch;
}

TrainResult train_game(const bench::GameParams& q, const TrainConfig& config,
                       std::vector<policy::FlowPolicy>& policies,
                       std::vector<CriticPair>& critics,
                       const std::function<void(const IterationStats&)>& on_iteration) {
    q.validate();
    const std::size_t n = q.n;
    if (policies.size() != n || critics.size() != n)
        throw std::invalid_argument("train_game: need one policy and critic per agent");
    const std::size_t L = config.batch, K = config.steps;
    const double dt = config.delta_t;
    const double disc = std::exp(-config.beta * dt);
    const double sqrt_dt = std::sqrt(dt);

    std::vector<nn::Adam> critic_opts, actor_opts;
    for (std::size_t i = 0; i < n; ++i) {
        critic_opts.emplace_back(critics[i].online.parameters(), config.critic_lr);
        actor_opts.emplace_back(policies[i].base_parameters_list(), config.actor_lr);
    }
    const auto critic_sched = make_schedule(config.schedule, config.critic_lr, config.iterations);
    const auto actor_sched = make_schedule(config.schedule, config.actor_lr, config.iterations);

    TrainResult result;
    std::vector<jd::Rng> rngs;
    MatrixXd X(L, n), X_next(L, n), dW(L, n + 1);
    Eigen::MatrixXi counts(L, static_cast<Eigen::Index>(n) + 1);
    MatrixXd actions(L, n), logp(L, n);

    for (int it = 0; it < config.iterations; ++it) {
        const auto t_start = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < n; ++i) {
            critic_opts[i].set_learning_rate(critic_sched.rate(it));
            actor_opts[i].set_learning_rate(actor_sched.rate(it));
        }
        rngs.clear();
        for (std::size_t l = 0; l < L; ++l)
            rngs.emplace_back(config.seed, static_cast<std::uint64_t>(it) * L + l);
        X.setZero();

        std::vector<std::unique_ptr<Tape>> ctape(n), atape(n);
        std::vector<Tensor> cacc(n), aacc(n);
        for (std::size_t i = 0; i < n; ++i) {
            ctape[i] = std::make_unique<Tape>();
            atape[i] = std::make_unique<Tape>();
            cacc[i] = nn::make_scalar(0.0);
            aacc[i] = nn::make_scalar(0.0);
        }
        std::size_t n_critic = 0, n_actor = 0;
        double closs_sum = 0.0, aloss_sum = 0.0;
        std::size_t c_updates = 0, a_updates = 0;

        for (std::size_t k = 0; k < K; ++k) {
            const double t = static_cast<double>(k) * dt;

            // all agents sample against the current joint state
            for (std::size_t i = 0; i < n; ++i) {
                MatrixXd acts;
                VectorXd lp;
                policies[i].sample_batch(t, obs_matrix(X, i, n), rngs, acts, lp);
                actions.col(static_cast<Eigen::Index>(i)) = acts.col(0);
                logp.col(static_cast<Eigen::Index>(i)) = lp;
            }
            for (std::size_t l = 0; l < L; ++l) {
                for (std::size_t j = 0; j <= n; ++j)
                    dW(l, static_cast<Eigen::Index>(j)) = sqrt_dt * rngs[l].normal();
                counts(l, 0) = rngs[l].poisson(q.lambda0 * dt);
                for (std::size_t i = 0; i < n; ++i)
                    counts(l, static_cast<Eigen::Index>(i) + 1) = rngs[l].poisson(q.lambda[i] * dt);
                Eigen::RowVectorXd next(n);
                step_wealth(q, dt, X.row(l), actions.row(l), dW.row(l), counts.row(l), next);
                if (next.cwiseAbs().maxCoeff() > config.explosion_bound)
                    throw std::runtime_error("train_game: wealth explosion at iteration " +
                                             std::to_string(it));
                X_next.row(l) = next;
            }

            // ---- critics ----
            for (std::size_t i = 0; i < n; ++i) {
                auto v_on = critics[i].online.forward(ctape[i].get(), obs_input(t, X, i, n));
                const MatrixXd obs_next = obs_matrix(X_next, i, n);
                const VectorXd v_tgt = critics[i].value(t + dt, obs_next, true);
                VectorXd const_part(L);
                for (std::size_t l = 0; l < L; ++l) {
                    const double y = other_average(X.row(l), i, n);
                    const double f = game_reward(q, i, X(l, static_cast<Eigen::Index>(i)), y);
                    const_part[l] = f * dt + disc * v_tgt[static_cast<Eigen::Index>(l)];
                }
                auto cp = nn::make_tensor(L, 1);
                for (std::size_t l = 0; l < L; ++l) cp->at(l, 0) = const_part[l];
                auto delta = nn::sub(ctape[i].get(), cp, v_on);

                if (config.martingale_correction) {
                    const MatrixXd obs = obs_matrix(X, i, n);
                    const MatrixXd grad = critics[i].state_gradient(t, obs);
                    const VectorXd v_now = critics[i].value(t, obs);
                    VectorXd corr = VectorXd::Zero(L);
                    const double inv_n = 1.0 / static_cast<double>(n);
                    // Brownian increments seen by (X^i, Y^i)
                    for (std::size_t l = 0; l < L; ++l) {
                        const auto li = static_cast<Eigen::Index>(l);
                        const auto ii = static_cast<Eigen::Index>(i);
                        double dX = actions(li, ii) * (q.eta[i] * dW(li, ii + 1) +
                                                       q.sigma[i] * dW(li, 0));
                        double dY = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                            if (j == i) continue;
                            const auto ji = static_cast<Eigen::Index>(j);
                            dY += inv_n * actions(li, ji) *
                                  (q.eta[j] * dW(li, ji + 1) + q.sigma[j] * dW(li, 0));
                        }
                        corr[li] = grad(li, 0) * dX + grad(li, 1) * dY;
                    }
                    // compensated jumps: own, common, and the others' channels
                    MatrixXd shifted(L, 2);
                    // own channel
                    for (std::size_t l = 0; l < L; ++l) {
                        const auto li = static_cast<Eigen::Index>(l);
                        shifted(li, 0) = obs(li, 0) +
                                         actions(li, static_cast<Eigen::Index>(i)) * q.alpha[i];
                        shifted(li, 1) = obs(li, 1);
                    }
                    VectorXd v_shift = critics[i].value(t, shifted);
                    for (std::size_t l = 0; l < L; ++l) {
                        const auto li = static_cast<Eigen::Index>(l);
                        const double m = static_cast<double>(counts(li, static_cast<Eigen::Index>(i) + 1)) -
                                         q.lambda[i] * dt;
                        corr[li] += m * (v_shift[li] - v_now[li]);
                    }
                    // common channel
                    for (std::size_t l = 0; l < L; ++l) {
                        const auto li = static_cast<Eigen::Index>(l);
                        double u_xi_hat = 0.0;
                        for (std::size_t j = 0; j < n; ++j)
                            if (j != i)
                                u_xi_hat += inv_n * actions(li, static_cast<Eigen::Index>(j)) * q.xi[j];
                        shifted(li, 0) = obs(li, 0) +
                                         actions(li, static_cast<Eigen::Index>(i)) * q.xi[i];
                        shifted(li, 1) = obs(li, 1) + u_xi_hat;
                    }
                    v_shift = critics[i].value(t, shifted);
                    for (std::size_t l = 0; l < L; ++l) {
                        const auto li = static_cast<Eigen::Index>(l);
                        const double m = static_cast<double>(counts(li, 0)) - q.lambda0 * dt;
                        corr[li] += m * (v_shift[li] - v_now[li]);
                    }
                    // other agents' channels move only Y^i
                    for (std::size_t j = 0; j < n; ++j) {
                        if (j == i) continue;
                        for (std::size_t l = 0; l < L; ++l) {
                            const auto li = static_cast<Eigen::Index>(l);
                            shifted(li, 0) = obs(li, 0);
                            shifted(li, 1) = obs(li, 1) +
                                             inv_n * actions(li, static_cast<Eigen::Index>(j)) *
                                                 q.alpha[j];
                        }
                        v_shift = critics[i].value(t, shifted);
                        for (std::size_t l = 0; l < L; ++l) {
                            const auto li = static_cast<Eigen::Index>(l);
                            const double m =
                                static_cast<double>(counts(li, static_cast<Eigen::Index>(j) + 1)) -
                                q.lambda[j] * dt;
                            corr[li] += m * (v_shift[li] - v_now[li]);
                        }
                    }
                    auto corr_t = nn::make_tensor(L, 1);
                    for (std::size_t l = 0; l < L; ++l) corr_t->at(l, 0) = corr[l];
                    delta = nn::sub(ctape[i].get(), delta, corr_t);
                }
                cacc[i] = nn::add(ctape[i].get(), cacc[i],
                                  nn::sum_all(ctape[i].get(), nn::square(ctape[i].get(), delta)));
            }
            ++n_critic;
            if (n_critic == config.critic_period) {
                for (std::size_t i = 0; i < n; ++i) {
                    auto loss = nn::scale(ctape[i].get(), cacc[i],
                                          1.0 / (static_cast<double>(L) * n_critic));
                    const double lv = loss->scalar();
                    if (!std::isfinite(lv) || lv > config.divergence_guard)
                        throw std::runtime_error("train_game: critic diverged at iteration " +
                                                 std::to_string(it));
                    ctape[i]->backward(loss);
                    nn::clip_grad_norm(critics[i].online.parameters(), config.grad_clip);
                    critic_opts[i].step();
                    critics[i].polyak();
                    closs_sum += lv;
                    ctape[i] = std::make_unique<Tape>();
                    cacc[i] = nn::make_scalar(0.0);
                }
                ++c_updates;
                n_critic = 0;
            }

            // ---- actors ----
            for (std::size_t i = 0; i < n; ++i) {
                const MatrixXd obs = obs_matrix(X, i, n);
                const MatrixXd obs_next = obs_matrix(X_next, i, n);
                const VectorXd v_now = critics[i].value(t, obs);
                const VectorXd v_next = critics[i].value(t + dt, obs_next);
                VectorXd adv(L);
                for (std::size_t l = 0; l < L; ++l) {
                    const auto li = static_cast<Eigen::Index>(l);
                    const double y = other_average(X.row(li), i, n);
                    const double f = game_reward(q, i, X(li, static_cast<Eigen::Index>(i)), y);
                    adv[li] = (f * dt + disc * v_next[li] - v_now[li]) / dt -
                              config.gamma * logp(li, static_cast<Eigen::Index>(i));
                }
                MatrixXd ui = actions.col(static_cast<Eigen::Index>(i));
                auto lp = policies[i].log_prob_batch(atape[i].get(), t, obs, ui);
                auto adv_t = nn::make_tensor(L, 1);
                for (std::size_t l = 0; l < L; ++l) adv_t->at(l, 0) = adv[l];
                aacc[i] = nn::add(atape[i].get(), aacc[i],
                                  nn::sum_all(atape[i].get(), nn::mul(atape[i].get(), lp, adv_t)));
            }
            ++n_actor;
            if (n_actor == config.actor_period) {
                for (std::size_t i = 0; i < n; ++i) {
                    auto loss = nn::scale(atape[i].get(), aacc[i],
                                          -1.0 / (config.beta * static_cast<double>(L) * n_actor));
                    const double lv = loss->scalar();
                    if (!std::isfinite(lv) || std::abs(lv) > config.divergence_guard)
                        throw std::runtime_error("train_game: actor diverged at iteration " +
                                                 std::to_string(it));
                    atape[i]->backward(loss);
                    auto params = policies[i].all_parameters();
                    nn::clip_grad_norm(params, config.grad_clip);
                    actor_opts[i].step();
                    policies[i].notify_actor_update();
                    aloss_sum += lv;
                    atape[i] = std::make_unique<Tape>();
                    aacc[i] = nn::make_scalar(0.0);
                }
                ++a_updates;
                n_actor = 0;
            }

            X.swap(X_next);
        }

        IterationStats stats;
        stats.iteration = it;
        stats.critic_loss = c_updates ? closs_sum / (static_cast<double>(c_updates) * n) : 0.0;
        stats.actor_loss = a_updates ? aloss_sum / (static_cast<double>(a_updates) * n) : 0.0;
        stats.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        result.iterations.push_back(stats);
        if (on_iteration) on_iteration(stats);
    }
    return result;
}

}  // namespace jd::learner
