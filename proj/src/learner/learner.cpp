#include "learner/learner.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace jd::learner {

using nn::Tensor;
using nn::Tape;

namespace {

Tensor time_state_input(double t, const MatrixXd& states) {
    const std::size_t L = states.rows();
    auto input = nn::make_tensor(L, static_cast<std::size_t>(states.cols()) + 1);
    for (std::size_t r = 0; r < L; ++r) {
        input->at(r, 0) = t;
        for (Eigen::Index c = 0; c < states.cols(); ++c) input->at(r, c + 1) = states(r, c);
    }
    return input;
}

Tensor const_column(const VectorXd& v) {
    auto t = nn::make_tensor(static_cast<std::size_t>(v.size()), 1);
    for (Eigen::Index i = 0; i < v.size(); ++i) t->at(static_cast<std::size_t>(i), 0) = v[i];
    return t;
}

// Brownian plus compensated-jump martingale increments of the online critic,
// evaluated at the step's left endpoint and detached from the parameters.
VectorXd martingale_increment(const CriticPair& critic, const sde::ModelSpec& model, double t,
                              double dt, const MatrixXd& X, const MatrixXd& U, const MatrixXd& dW,
                              const Eigen::MatrixXi& counts, const VectorXd& v_at_x) {
    const std::size_t L = X.rows();
    VectorXd corr(L);

    const MatrixXd grad = critic.state_gradient(t, X);
    if (model.diffusion_apply_batch) {
        MatrixXd sdw(L, X.cols());
        model.diffusion_apply_batch(t, X, U, dW, sdw);
        for (std::size_t l = 0; l < L; ++l) corr[l] = grad.row(l).dot(sdw.row(l));
    } else {
        for (std::size_t l = 0; l < L; ++l) {
            const VectorXd x = X.row(l).transpose();
            const VectorXd u = U.row(l).transpose();
            const MatrixXd sig = model.diffusion(t, x, u);
            corr[l] = grad.row(l).dot((sig * dW.row(l).transpose()).transpose());
        }
    }

    const std::size_t channels = model.num_jump_channels();
    MatrixXd shifted(L, X.cols());
    for (std::size_t i = 0; i < channels; ++i) {
        const double lambda = model.jump_intensity[i](t);
        if (!model.jump_size_batch.empty() && model.jump_size_batch[i]) {
            model.jump_size_batch[i](t, X, U, shifted);
            shifted += X;
        } else {
            for (std::size_t l = 0; l < L; ++l) {
                const VectorXd x = X.row(l).transpose();
                const VectorXd u = U.row(l).transpose();
                shifted.row(l) = (x + model.jump_size[i](t, x, u)).transpose();
            }
        }
        const VectorXd v_shift = critic.value(t, shifted);
        for (std::size_t l = 0; l < L; ++l) {
            const double n_comp =
                static_cast<double>(counts(l, static_cast<Eigen::Index>(i))) - lambda * dt;
            corr[l] += n_comp * (v_shift[l] - v_at_x[l]);
        }
    }
    return corr;
}

}  // namespace

CriticPair::CriticPair(std::size_t state_dim, std::size_t hidden_width, std::size_t depth,
                       jd::Rng& rng, const std::vector<double>& input_scale) {
    online = nn::ResidualMlp(state_dim + 1, hidden_width, depth, 1, rng);
    if (!input_scale.empty()) online.set_input_scale(input_scale);
    target = nn::ResidualMlp(state_dim + 1, hidden_width, depth, 1, rng);
    target.copy_parameters_from(online);
}

CriticPair CriticPair::analytic(std::function<double(double, const VectorXd&)> value,
                                std::function<VectorXd(double, const VectorXd&)> gradient) {
    CriticPair c;
    c.analytic_value = std::move(value);
    c.analytic_gradient = std::move(gradient);
    return c;
}

VectorXd CriticPair::value(double t, const MatrixXd& states, bool use_target) const {
    if (analytic_value) {
        VectorXd v(states.rows());
        for (Eigen::Index l = 0; l < states.rows(); ++l)
            v[l] = analytic_value(t, states.row(l).transpose());
        return v;
    }
    const auto& net = use_target ? target : online;
    auto out = net.forward(nullptr, time_state_input(t, states));
    VectorXd v(states.rows());
    for (Eigen::Index l = 0; l < states.rows(); ++l) v[l] = out->at(static_cast<std::size_t>(l), 0);
    return v;
}

MatrixXd CriticPair::state_gradient(double t, const MatrixXd& states) const {
    if (analytic_gradient) {
        MatrixXd out(states.rows(), states.cols());
        for (Eigen::Index l = 0; l < states.rows(); ++l)
            out.row(l) = analytic_gradient(t, states.row(l).transpose()).transpose();
        return out;
    }
    const auto grad = online.input_gradient(time_state_input(t, states));
    const std::size_t d = states.cols();
    MatrixXd out(states.rows(), states.cols());
    for (Eigen::Index l = 0; l < states.rows(); ++l)
        for (std::size_t c = 0; c < d; ++c)
            out(l, static_cast<Eigen::Index>(c)) =
                grad[static_cast<std::size_t>(l) * (d + 1) + c + 1];
    return out;
}

double td_error(const CriticPair& critic, const sde::PathBatch& batch, std::size_t k,
                std::size_t l, double beta, double entropy_weight) {
    const double dt = batch.grid.delta_t;
    double reward = batch.rewards(l, k);
    if (entropy_weight > 0.0) reward -= entropy_weight * batch.log_probs(l, k) * dt;
    const MatrixXd x_next = batch.states[k + 1].row(l);
    const MatrixXd x_now = batch.states[k].row(l);
    const double v_next = critic.value(batch.grid.t(k + 1), x_next, true)[0];
    const double v_now = critic.value(batch.grid.t(k), x_now)[0];
    return reward + std::exp(-beta * dt) * v_next - v_now;
}

double martingale_corrected_td(const CriticPair& critic, const sde::PathBatch& batch,
                               std::size_t k, std::size_t l, const sde::ModelSpec& model,
                               double entropy_weight) {
    if (!model.drift || !model.diffusion || model.jump_size.size() != model.jump_intensity.size())
        throw std::invalid_argument("martingale correction requires model coefficients");
    const double t = batch.grid.t(k);
    const double dt = batch.grid.delta_t;
    const double delta = td_error(critic, batch, k, l, model.discount, entropy_weight);
    const MatrixXd X = batch.states[k].row(l);
    const MatrixXd U = batch.actions[k].row(l);
    const MatrixXd dW = batch.brownian[k].row(l);
    const Eigen::MatrixXi counts = batch.jump_counts[k].row(l);
    const VectorXd v = critic.value(t, X);
    return delta - martingale_increment(critic, model, t, dt, X, U, dW, counts, v)[0];
}

nn::Tensor critic_loss(Tape* tape, CriticPair& critic, const sde::PathBatch& batch,
                       std::size_t k0, std::size_t k1, double beta, double entropy_weight,
                       const sde::ModelSpec* correction_model) {
    if (k1 <= k0 || k1 > batch.num_steps())
        throw std::invalid_argument("critic_loss: empty or out-of-range window");
    const std::size_t L = batch.num_paths();
    const double dt = batch.grid.delta_t;
    const double disc = std::exp(-beta * dt);
    Tensor acc = nn::make_scalar(0.0);
    for (std::size_t k = k0; k < k1; ++k) {
        const double t = batch.grid.t(k);
        auto v_on = critic.online.forward(tape, time_state_input(t, batch.states[k]));
        const VectorXd v_next = critic.value(batch.grid.t(k + 1), batch.states[k + 1], true);
        VectorXd const_part(L);
        for (std::size_t l = 0; l < L; ++l) {
            double reward = batch.rewards(l, k);
            if (entropy_weight > 0.0) reward -= entropy_weight * batch.log_probs(l, k) * dt;
            const_part[l] = reward + disc * v_next[static_cast<Eigen::Index>(l)];
        }
        auto delta = nn::sub(tape, const_column(const_part), v_on);
        if (correction_model) {
            VectorXd v_now(L);
            for (std::size_t l = 0; l < L; ++l) v_now[l] = v_on->at(l, 0);
            const VectorXd corr =
                martingale_increment(critic, *correction_model, t, dt, batch.states[k],
                                     batch.actions[k], batch.brownian[k], batch.jump_counts[k],
                                     v_now);
            delta = nn::sub(tape, delta, const_column(corr));
        }
        acc = nn::add(tape, acc, nn::sum_all(tape, nn::square(tape, delta)));
    }
    return nn::scale(tape, acc, 1.0 / (static_cast<double>(L) * static_cast<double>(k1 - k0)));
}

double gae_advantage(const CriticPair& critic, const sde::PathBatch& batch, std::size_t k,
                     std::size_t l, double beta, double gamma, double delta_t) {
    const MatrixXd x_next = batch.states[k + 1].row(l);
    const MatrixXd x_now = batch.states[k].row(l);
    const double v_next = critic.value(batch.grid.t(k + 1), x_next)[0];
    const double v_now = critic.value(batch.grid.t(k), x_now)[0];
    const double q_rate =
        (batch.rewards(l, k) + std::exp(-beta * delta_t) * v_next - v_now) / delta_t;
    return q_rate - gamma * batch.log_probs(l, k);
}

nn::Tensor actor_loss(Tape* tape, const policy::FlowPolicy& pol, const sde::PathBatch& batch,
                      const std::vector<VectorXd>& advantages, std::size_t k0, std::size_t k1,
                      double beta) {
    if (k1 <= k0 || advantages.size() != k1 - k0)
        throw std::invalid_argument("actor_loss: window/advantage mismatch");
    const std::size_t L = batch.num_paths();
    Tensor acc = nn::make_scalar(0.0);
    for (std::size_t k = k0; k < k1; ++k) {
        auto logp = pol.log_prob_batch(tape, batch.grid.t(k), batch.states[k], batch.actions[k]);
        acc = nn::add(tape, acc,
                      nn::sum_all(tape, nn::mul(tape, logp, const_column(advantages[k - k0]))));
    }
    return nn::scale(tape, acc,
                     -1.0 / (beta * static_cast<double>(L) * static_cast<double>(k1 - k0)));
}

nn::LrSchedule make_schedule(ScheduleKind kind, double lr, int iterations) {
    switch (kind) {
        case ScheduleKind::Constant: return nn::LrSchedule::constant(lr);
        case ScheduleKind::MultiStep:
            return nn::LrSchedule::multi_step(lr, {iterations / 2, (3 * iterations) / 4}, 0.1);
        case ScheduleKind::CosineWarmup:
            return nn::LrSchedule::cosine_warmup(lr, std::max(1, iterations / 20), iterations, 0.1);
    }
    return nn::LrSchedule::constant(lr);
}

TrainResult train(const sde::ModelSpec& model, const TrainConfig& config, policy::FlowPolicy& pol,
                  CriticPair& critic, const std::function<void(const IterationStats&)>& on_iteration) {
    model.validate();
    const std::size_t L = config.batch;
    const std::size_t K = config.steps;
    const std::size_t d = model.state_dim;
    const double dt = config.delta_t;
    const double disc = std::exp(-config.beta * dt);
    const double sqrt_dt = std::sqrt(dt);
    const std::size_t channels = model.num_jump_channels();

    nn::Adam critic_opt(critic.online.parameters(), config.critic_lr);
    nn::Adam actor_opt(pol.base_parameters_list(), config.actor_lr);
    const double flow_lr = config.flow_lr > 0.0 ? config.flow_lr : config.actor_lr;
    nn::Adam flow_opt(pol.flow_parameters_list(), flow_lr);
    const auto critic_sched = make_schedule(config.schedule, config.critic_lr, config.iterations);
    const auto actor_sched = make_schedule(config.schedule, config.actor_lr, config.iterations);
    const auto flow_sched = make_schedule(config.schedule, flow_lr, config.iterations);

    TrainResult result;
    result.iterations.reserve(static_cast<std::size_t>(config.iterations));

    std::vector<jd::Rng> rngs;
    rngs.reserve(L);
    MatrixXd X(L, d), X_next(L, d), actions, dW(L, model.brownian_dim);
    VectorXd logp, rewards(L);
    Eigen::MatrixXi counts(L, static_cast<Eigen::Index>(channels));
    std::vector<double> lambdas(channels);

    for (int it = 0; it < config.iterations; ++it) {
        const auto t_start = std::chrono::steady_clock::now();
        critic_opt.set_learning_rate(critic_sched.rate(it));
        actor_opt.set_learning_rate(actor_sched.rate(it));
        flow_opt.set_learning_rate(flow_sched.rate(it));

        rngs.clear();
        for (std::size_t l = 0; l < L; ++l)
            rngs.emplace_back(config.seed, static_cast<std::uint64_t>(it) * L + l);
        for (std::size_t l = 0; l < L; ++l) X.row(l) = model.initial_state.transpose();

        auto critic_tape = std::make_unique<Tape>();
        auto actor_tape = std::make_unique<Tape>();
        Tensor critic_acc = nn::make_scalar(0.0);
        Tensor actor_acc = nn::make_scalar(0.0);
        std::size_t n_critic = 0, n_actor = 0;
        double critic_loss_sum = 0.0, actor_loss_sum = 0.0;
        std::size_t critic_updates = 0, actor_updates = 0;

        for (std::size_t k = 0; k < K; ++k) {
            const double t = static_cast<double>(k) * dt;

            pol.sample_batch(t, X, rngs, actions, logp);
            for (std::size_t i = 0; i < channels; ++i) lambdas[i] = model.jump_intensity[i](t);
            for (std::size_t l = 0; l < L; ++l) {
                for (std::size_t j = 0; j < model.brownian_dim; ++j)
                    dW(l, static_cast<Eigen::Index>(j)) = sqrt_dt * rngs[l].normal();
                for (std::size_t i = 0; i < channels; ++i)
                    counts(l, static_cast<Eigen::Index>(i)) = rngs[l].poisson(lambdas[i] * dt);
            }
            sde::reward_batch(model, t, X, actions, rewards);
            sde::euler_step_batch(model, t, dt, X, actions, dW, counts, X_next);
            if (X_next.cwiseAbs().maxCoeff() > config.explosion_bound)
                throw std::runtime_error("train: state explosion at iteration " +
                                         std::to_string(it) + ", step " + std::to_string(k));

            // ---- critic accumulation ----
            auto v_on = critic.online.forward(critic_tape.get(), time_state_input(t, X));
            const VectorXd v_tgt_next = critic.value(t + dt, X_next, true);
            VectorXd const_part(L);
            for (std::size_t l = 0; l < L; ++l) {
                double reward = rewards[l] * dt;
                if (config.gamma > 0.0) reward -= config.gamma * logp[l] * dt;
                const_part[l] = reward + disc * v_tgt_next[static_cast<Eigen::Index>(l)];
            }
            auto delta = nn::sub(critic_tape.get(), const_column(const_part), v_on);
            if (config.martingale_correction) {
                VectorXd v_now(L);
                for (std::size_t l = 0; l < L; ++l) v_now[l] = v_on->at(l, 0);
                const VectorXd corr =
                    martingale_increment(critic, model, t, dt, X, actions, dW, counts, v_now);
                delta = nn::sub(critic_tape.get(), delta, const_column(corr));
            }
            critic_acc = nn::add(critic_tape.get(), critic_acc,
                                 nn::sum_all(critic_tape.get(), nn::square(critic_tape.get(), delta)));
            ++n_critic;

            bool critic_updated = false;
            if (n_critic == config.critic_period) {
                auto loss = nn::scale(critic_tape.get(), critic_acc,
                                      1.0 / (static_cast<double>(L) * n_critic));
                const double loss_value = loss->scalar();
                if (!std::isfinite(loss_value) || loss_value > config.divergence_guard)
                    throw std::runtime_error("train: critic loss diverged at iteration " +
                                             std::to_string(it));
                critic_tape->backward(loss);
                nn::clip_grad_norm(critic.online.parameters(), config.grad_clip);
                critic_opt.step();
                critic.polyak();
                critic_loss_sum += loss_value;
                ++critic_updates;
                critic_tape = std::make_unique<Tape>();
                critic_acc = nn::make_scalar(0.0);
                n_critic = 0;
                critic_updated = true;
            }

            // ---- actor accumulation (online critic, post-update values) ----
            VectorXd v_now(L);
            if (critic_updated) {
                v_now = critic.value(t, X);
            } else {
                // psi unchanged since the tape forward; reuse it
                for (std::size_t l = 0; l < L; ++l) v_now[static_cast<Eigen::Index>(l)] =
                    v_on->at(l, 0);
            }
            const VectorXd v_next = critic.value(t + dt, X_next);
            VectorXd advantage(L);
            for (std::size_t l = 0; l < L; ++l) {
                advantage[l] = (rewards[l] * dt + disc * v_next[static_cast<Eigen::Index>(l)] -
                                v_now[static_cast<Eigen::Index>(l)]) /
                                   dt -
                               config.gamma * logp[l];
            }
            auto logp_tape = pol.log_prob_batch(actor_tape.get(), t, X, actions);
            actor_acc = nn::add(
                actor_tape.get(), actor_acc,
                nn::sum_all(actor_tape.get(),
                            nn::mul(actor_tape.get(), logp_tape, const_column(advantage))));
            ++n_actor;

            if (n_actor == config.actor_period) {
                auto loss = nn::scale(actor_tape.get(), actor_acc,
                                      -1.0 / (config.beta * static_cast<double>(L) * n_actor));
                const double loss_value = loss->scalar();
                if (!std::isfinite(loss_value) || std::abs(loss_value) > config.divergence_guard)
                    throw std::runtime_error("train: actor loss diverged at iteration " +
                                             std::to_string(it));
                actor_tape->backward(loss);
                auto all_params = pol.all_parameters();
                nn::clip_grad_norm(all_params, config.grad_clip);
                actor_opt.step();
                if (pol.flow_active()) flow_opt.step();
                pol.notify_actor_update();
                actor_loss_sum += loss_value;
                ++actor_updates;
                actor_tape = std::make_unique<Tape>();
                actor_acc = nn::make_scalar(0.0);
                n_actor = 0;
            }

            X.swap(X_next);
        }

        IterationStats stats;
        stats.iteration = it;
        stats.critic_loss = critic_updates ? critic_loss_sum / critic_updates : 0.0;
        stats.actor_loss = actor_updates ? actor_loss_sum / actor_updates : 0.0;
        stats.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        result.iterations.push_back(stats);
        if (on_iteration) on_iteration(stats);
    }
    return result;
}

}  // namespace jd::learner
