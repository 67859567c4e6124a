#include "run/problems.hpp"

#include <cmath>
#include <stdexcept>

namespace jd::run {

using sde::MatrixXd;
using sde::VectorXd;

namespace {

VectorXd linspace_vec(double lo, double hi, std::size_t n) {
    VectorXd v(n);
    if (n == 1) {
        v[0] = lo;
        return v;
    }
    for (std::size_t i = 0; i < n; ++i)
        v[static_cast<Eigen::Index>(i)] =
            lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

}  // namespace

LqProblem build_lq(const ExperimentConfig& config) {
    LqProblem p;
    const std::size_t d = config.dim;
    const auto& lq = config.lq;
    p.horizon = config.horizon();

    bench::LqModel& m = p.lq;
    m.d = m.m = d;
    m.beta = config.train.beta;
    m.gamma = config.train.gamma;

    if (config.problem == "lq-homogeneous") {
        const double B = lq.B, S = lq.Sigma, R = lq.R, Q = lq.Q;
        const VectorXd lam = linspace_vec(lq.lambda_min, lq.lambda_max, d);
        const VectorXd alf = linspace_vec(lq.alpha_min, lq.alpha_max, d);
        m.B = [B, d](double) { return B * MatrixXd::Identity(d, d); };
        m.Sigma = [S, d](double) { return S * MatrixXd::Identity(d, d); };
        m.R = [R, d](double) { return R * MatrixXd::Identity(d, d); };
        m.Q = [Q, d](double) { return Q * MatrixXd::Identity(d, d); };
        m.alpha = [alf](double) { return alf; };
        m.lambda = [lam](double) { return lam; };
    } else if (config.problem == "lq-convergent") {
        const auto b = sde::CoefProfile::convergent(lq.b0, lq.b_inf, lq.kappa_b);
        const auto s = sde::CoefProfile::convergent(lq.sigma0, lq.sigma_inf, lq.kappa_sigma);
        const auto a = sde::CoefProfile::convergent(lq.alpha0, lq.alpha_inf, lq.kappa_alpha);
        const double R = lq.R, Q = lq.Q, lam = lq.lambda_const;
        m.B = [b, d](double t) { return b(t) * MatrixXd::Identity(d, d); };
        m.Sigma = [s, d](double t) { return s(t) * MatrixXd::Identity(d, d); };
        m.R = [R, d](double) { return R * MatrixXd::Identity(d, d); };
        m.Q = [Q, d](double) { return Q * MatrixXd::Identity(d, d); };
        m.alpha = [a, d](double t) { return VectorXd::Constant(d, a(t)); };
        m.lambda = [lam, d](double) { return VectorXd::Constant(d, lam); };
    } else if (config.problem == "lq-periodic") {
        const auto b = sde::CoefProfile::periodic(lq.b_bar, lq.b_amp, lq.period, lq.phase);
        const auto s = sde::CoefProfile::periodic(lq.sigma_bar, lq.sigma_amp, lq.period, lq.phase);
        const auto a = sde::CoefProfile::periodic(lq.alpha_bar, lq.alpha_amp, lq.period, lq.phase);
        const double R = lq.R, Q = lq.Q, lam = lq.lambda_const;
        m.B = [b, d](double t) { return b(t) * MatrixXd::Identity(d, d); };
        m.Sigma = [s, d](double t) { return s(t) * MatrixXd::Identity(d, d); };
        m.R = [R, d](double) { return R * MatrixXd::Identity(d, d); };
        m.Q = [Q, d](double) { return Q * MatrixXd::Identity(d, d); };
        m.alpha = [a, d](double t) { return VectorXd::Constant(d, a(t)); };
        m.lambda = [lam, d](double) { return VectorXd::Constant(d, lam); };
        m.period = lq.period;
    } else {
        throw std::invalid_argument("build_lq: not an lq problem: " + config.problem);
    }
    m.B_inf = m.B(1e9);
    m.Sigma_inf = m.Sigma(1e9);
    m.R_inf = m.R(1e9);
    m.Q_inf = m.Q(1e9);
    m.alpha_inf = m.alpha(1e9);
    m.lambda_inf = m.lambda(1e9);
    if (config.problem == "lq-periodic") {
        // stationary shooting seed uses the time averages, i.e. the bar values
        m.B_inf = MatrixXd::Identity(d, d) * lq.b_bar;
        m.Sigma_inf = MatrixXd::Identity(d, d) * lq.sigma_bar;
        m.alpha_inf = VectorXd::Constant(d, lq.alpha_bar);
    }

    // ground truth
    if (config.problem == "lq-homogeneous") {
        const auto pair = bench::solve_are(m.B_inf, m.Sigma_inf, m.alpha_inf, m.lambda_inf,
                                           m.R_inf, m.Q_inf, m.beta, m.gamma);
        p.riccati.dt = p.horizon;  // two grid points are enough for a constant solution
        p.riccati.H = {pair.H, pair.H};
        p.riccati.g = {pair.g, pair.g};
        p.riccati.H_stationary = pair.H;
        p.riccati.g_stationary = pair.g;
        p.riccati.has_stationary = true;
    } else if (config.problem == "lq-convergent") {
        p.riccati = bench::integrate_riccati_backward(m, p.horizon,
                                                      lq.t_infinity_factor * p.horizon, lq.ode_dt);
    } else {
        p.riccati = bench::solve_periodic_riccati(m, lq.ode_dt);
    }

    // simulation model
    sde::ModelSpec& sim = p.model;
    sim.state_dim = d;
    sim.control_dim = d;
    sim.brownian_dim = d;
    const auto B_fn = m.B, Sigma_fn = m.Sigma, R_fn = m.R, Q_fn = m.Q;
    const auto alpha_fn = m.alpha, lambda_fn = m.lambda;
    sim.drift = [B_fn](double t, const VectorXd&, const VectorXd& u) -> VectorXd {
        return B_fn(t) * u;
    };
    sim.diffusion = [Sigma_fn](double t, const VectorXd&, const VectorXd&) {
        return Sigma_fn(t);
    };
    for (std::size_t i = 0; i < d; ++i) {
        sim.jump_size.push_back([alpha_fn, i, d](double t, const VectorXd&, const VectorXd&) {
            VectorXd e = VectorXd::Zero(d);
            e[static_cast<Eigen::Index>(i)] = alpha_fn(t)[static_cast<Eigen::Index>(i)];
            return e;
        });
        sim.jump_intensity.push_back(
            [lambda_fn, i](double t) { return lambda_fn(t)[static_cast<Eigen::Index>(i)]; });
    }
    sim.discount = m.beta;
    sim.entropy_weight = m.gamma;
    sim.running_reward = [R_fn, Q_fn](double t, const VectorXd& x, const VectorXd& u) {
        return -(u.dot(R_fn(t) * u) + x.dot(Q_fn(t) * x));
    };
    sim.initial_state = VectorXd::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));

    // batched fast paths (hot in training)
    sim.drift_batch = [B_fn](double t, const MatrixXd&, const MatrixXd& U, MatrixXd& out) {
        out.noalias() = U * B_fn(t).transpose();
    };
    sim.diffusion_apply_batch = [Sigma_fn](double t, const MatrixXd&, const MatrixXd&,
                                           const MatrixXd& dW, MatrixXd& out) {
        out.noalias() = dW * Sigma_fn(t).transpose();
    };
    for (std::size_t i = 0; i < d; ++i) {
        sim.jump_size_batch.push_back(
            [alpha_fn, i](double t, const MatrixXd& X, const MatrixXd&, MatrixXd& out) {
                out.setZero(X.rows(), X.cols());
                out.col(static_cast<Eigen::Index>(i))
                    .setConstant(alpha_fn(t)[static_cast<Eigen::Index>(i)]);
            });
    }
    sim.reward_batch = [R_fn, Q_fn](double t, const MatrixXd& X, const MatrixXd& U,
                                    VectorXd& out) {
        const MatrixXd R = R_fn(t);
        const MatrixXd Q = Q_fn(t);
        out = -((U * R).cwiseProduct(U).rowwise().sum() +
                (X * Q).cwiseProduct(X).rowwise().sum());
    };
    return p;
}

bench::MertonParams merton_params(const ExperimentConfig& config) {
    bench::MertonParams q;
    q.mu = config.merton.mu;
    q.r = config.merton.r;
    q.sigma = config.merton.sigma;
    q.lambda = config.merton.lambda;
    q.alpha = config.merton.alpha;
    q.p = config.merton.p;
    q.beta = config.train.beta;
    return q;
}

sde::ModelSpec build_merton_model(const ExperimentConfig& config) {
    const auto q = merton_params(config);
    sde::ModelSpec m;
    m.state_dim = 1;
    m.control_dim = 1;
    m.brownian_dim = 1;
    m.drift = [q](double, const VectorXd& x, const VectorXd& u) {
        return VectorXd::Constant(1, (q.r + u[0] * (q.mu - q.r)) * x[0]);
    };
    m.diffusion = [q](double, const VectorXd& x, const VectorXd& u) {
        return MatrixXd::Constant(1, 1, q.sigma * u[0] * x[0]);
    };
    m.jump_size.push_back([q](double, const VectorXd& x, const VectorXd& u) {
        return VectorXd::Constant(1, q.alpha * u[0] * x[0]);
    });
    m.jump_intensity.push_back([q](double) { return q.lambda; });
    m.discount = q.beta;
    m.entropy_weight = config.train.gamma;
    m.running_reward = [q](double, const VectorXd& x, const VectorXd&) {
        return std::pow(std::max(x[0], 0.0), q.p) / q.p;
    };
    m.initial_state = VectorXd::Constant(1, 1.0);  // unit wealth

    m.drift_batch = [q](double, const MatrixXd& X, const MatrixXd& U, MatrixXd& out) {
        out = (q.r + (q.mu - q.r) * U.col(0).array()).cwiseProduct(X.col(0).array()).matrix();
    };
    m.diffusion_apply_batch = [q](double, const MatrixXd& X, const MatrixXd& U,
                                  const MatrixXd& dW, MatrixXd& out) {
        out = (q.sigma * U.col(0).array() * X.col(0).array() * dW.col(0).array()).matrix();
    };
    m.jump_size_batch.push_back([q](double, const MatrixXd& X, const MatrixXd& U, MatrixXd& out) {
        out = (q.alpha * U.col(0).array() * X.col(0).array()).matrix();
    });
    m.reward_batch = [q](double, const MatrixXd& X, const MatrixXd&, VectorXd& out) {
        out = X.col(0).array().max(0.0).pow(q.p).matrix() / q.p;
    };
    return m;
}

bench::GameParams build_game(const ExperimentConfig& config) {
    bench::GameParams g;
    const std::size_t n = config.dim;
    g.n = n;
    g.b.assign(n, config.game.b_rest);
    g.eta.assign(n, config.game.eta_rest);
    g.sigma.assign(n, config.game.sigma_rest);
    g.alpha.assign(n, config.game.alpha);
    g.xi.assign(n, config.game.xi);
    g.lambda.assign(n, config.game.lambda);
    g.varpi.assign(n, config.game.varpi);
    g.varrho.assign(n, config.game.varrho_rest);
    g.b[0] = config.game.b1;
    g.eta[0] = config.game.eta1;
    g.sigma[0] = config.game.sigma1;
    g.varrho[0] = config.game.varrho1;
    g.lambda0 = config.game.lambda0;
    g.beta = config.train.beta;
    return g;
}

policy::PolicyConfig make_policy_config(const ExperimentConfig& config) {
    policy::PolicyConfig pc;
    const bool merton = config.problem == "merton-standard" || config.problem == "merton-entropy";
    const bool game = config.problem == "game";
    const std::size_t obs_dim = game ? 2 : config.dim;
    pc.state_dim = obs_dim;
    pc.control_dim = game || merton ? 1 : config.dim;
    pc.hidden_width =
        config.network.hidden_width ? config.network.hidden_width : obs_dim + 10;
    pc.depth = config.network.depth;
    pc.learnable_std = config.train.gamma > 0.0;
    pc.fixed_std = 0.1;
    pc.init_std = config.network.init_std;
    pc.warmup_updates = config.network.warmup_updates;
    if (config.problem == "merton-entropy") {
        pc.flow.enabled = true;
        pc.flow.bins = config.network.flow_bins;
        pc.flow.tail_bound = config.network.flow_tail_bound;
        pc.flow.hidden_width = config.network.flow_hidden;
        pc.flow.depth = config.network.flow_depth;
    }
    if (merton) {
        pc.squash.enabled = true;
        pc.squash.u_min = config.merton.u_min;
        pc.squash.u_max = config.merton.u_max;
    }
    // time runs to K dt; scale it into the tanh-friendly range
    pc.input_scale.assign(obs_dim + 1, 1.0);
    pc.input_scale[0] = 1.0 / std::max(1.0, config.horizon());
    return pc;
}

policy::FlowPolicy make_policy(const ExperimentConfig& config, jd::Rng& rng) {
    return policy::FlowPolicy(make_policy_config(config), rng);
}

learner::CriticPair make_critic(const ExperimentConfig& config, jd::Rng& rng) {
    const bool game = config.problem == "game";
    const std::size_t obs_dim = game ? 2 : config.dim;
    const std::size_t width =
        config.network.hidden_width ? config.network.hidden_width : obs_dim + 10;
    std::vector<double> scale(obs_dim + 1, 1.0);
    scale[0] = 1.0 / std::max(1.0, config.horizon());
    learner::CriticPair critic(obs_dim, width, config.network.depth, rng, scale);
    critic.rho_c = config.train.rho_c;
    return critic;
}

namespace {

struct PathAccumulators {
    double state_num = 0.0, state_den = 0.0;
    double value_num = 0.0, value_den = 0.0;
    double control_num = 0.0, control_den = 0.0;
};

// trapezoid weight over grid index 0..K
double tw(std::size_t k, std::size_t K) { return (k == 0 || k == K) ? 0.5 : 1.0; }

metrics::MetricReport finalize(const PathAccumulators& acc, const ExperimentConfig& config,
                               double kl_time_avg, bool use_kl) {
    metrics::MetricReport rep;
    rep.t_eval = config.eval_horizon();
    rep.e_x = acc.state_num / (acc.state_den + rep.eps_x);
    rep.e_v = acc.value_num / (acc.value_den + rep.eps_v);
    rep.e_u = use_kl ? kl_time_avg : acc.control_num / (acc.control_den + rep.eps_u);
    return rep;
}

}  // namespace

metrics::MetricReport evaluate_lq(const LqProblem& problem, const ExperimentConfig& config,
                                  const policy::FlowPolicy& pol,
                                  const learner::CriticPair& critic) {
    const auto bench = problem.benchmark();
    const double dt = config.train.delta_t;
    const auto K = static_cast<std::size_t>(std::llround(config.eval_horizon() / dt));
    const sde::TimeGrid grid(K, dt);
    const std::size_t L = config.eval.paths;

    MeanPolicySampler learned_sampler(pol, config.eval.mc_mean_samples);
    FeedbackSampler bench_sampler(problem.model.control_dim,
                                  [&bench](double t, const MatrixXd& states) {
                                      MatrixXd u(states.rows(), states.cols());
                                      for (Eigen::Index l = 0; l < states.rows(); ++l)
                                          u.row(l) = bench
                                                         .policy_mean(t, states.row(l).transpose())
                                                         .transpose();
                                      return u;
                                  });
    const auto learned = sde::rollout_batch(problem.model, grid, learned_sampler, L,
                                            config.eval.seed);
    const auto reference = sde::rollout_batch(problem.model, grid, bench_sampler, L,
                                              config.eval.seed);

    PathAccumulators acc;
    VectorXd kl_series = VectorXd::Zero(static_cast<Eigen::Index>(K + 1));
    const bool use_kl = config.train.gamma > 0.0;

    for (std::size_t k = 0; k <= K; ++k) {
        const double t = grid.t(k);
        const double w = tw(k, K);
        const VectorXd v_learned = critic.value(t, learned.states[k]);
        for (std::size_t l = 0; l < L; ++l) {
            const VectorXd xh = learned.states[k].row(l).transpose();
            const VectorXd xb = reference.states[k].row(l).transpose();
            acc.state_num += w * (xh - xb).squaredNorm();
            acc.state_den += w * xb.squaredNorm();
            const double vb = bench.value(t, xb);
            const double vl = v_learned[static_cast<Eigen::Index>(l)];
            acc.value_num += w * (vl - vb) * (vl - vb);
            acc.value_den += w * vb * vb;
        }
        if (use_kl) {
            MatrixXd mu_hat, std_hat;
            pol.base_parameters(t, learned.states[k], mu_hat, std_hat);
            const MatrixXd cov_star = bench.policy_covariance(t);
            double kl_k = 0.0;
            for (std::size_t l = 0; l < L; ++l) {
                const VectorXd xh = learned.states[k].row(l).transpose();
                const VectorXd mu_star = bench.policy_mean(t, xh);
                VectorXd var_star(mu_star.size()), var_hat(mu_star.size()), mu_h(mu_star.size());
                for (Eigen::Index i = 0; i < mu_star.size(); ++i) {
                    var_star[i] = cov_star(i, i);
                    var_hat[i] = std_hat(static_cast<Eigen::Index>(l), i) *
                                 std_hat(static_cast<Eigen::Index>(l), i);
                    mu_h[i] = mu_hat(static_cast<Eigen::Index>(l), i);
                }
                kl_k += metrics::kl_gaussian_diag(mu_star, var_star, mu_h, var_hat);
            }
            kl_series[static_cast<Eigen::Index>(k)] = kl_k / static_cast<double>(L);
        } else if (k < K) {
            for (std::size_t l = 0; l < L; ++l) {
                const Eigen::RowVectorXd uh = learned.actions[k].row(l);
                const Eigen::RowVectorXd ub = reference.actions[k].row(l);
                acc.control_num += w * (uh - ub).squaredNorm();
                acc.control_den += w * ub.squaredNorm();
            }
        }
    }
    return finalize(acc, config, use_kl ? metrics::time_average(kl_series, dt) : 0.0, use_kl);
}

metrics::MetricReport evaluate_lq_self(const LqProblem& problem, const ExperimentConfig& config) {
    const auto bench = problem.benchmark();
    const double dt = config.train.delta_t;
    const auto K = static_cast<std::size_t>(std::llround(config.eval_horizon() / dt));
    const sde::TimeGrid grid(K, dt);
    const std::size_t L = config.eval.paths;
    FeedbackSampler bench_sampler(problem.model.control_dim,
                                  [&bench](double t, const MatrixXd& states) {
                                      MatrixXd u(states.rows(), states.cols());
                                      for (Eigen::Index l = 0; l < states.rows(); ++l)
                                          u.row(l) = bench
                                                         .policy_mean(t, states.row(l).transpose())
                                                         .transpose();
                                      return u;
                                  });
    const auto a = sde::rollout_batch(problem.model, grid, bench_sampler, L, config.eval.seed);
    const auto b = sde::rollout_batch(problem.model, grid, bench_sampler, L, config.eval.seed);
    PathAccumulators acc;
    for (std::size_t k = 0; k <= K; ++k) {
        const double t = grid.t(k);
        const double w = tw(k, K);
        for (std::size_t l = 0; l < L; ++l) {
            const VectorXd xa = a.states[k].row(l).transpose();
            const VectorXd xb = b.states[k].row(l).transpose();
            acc.state_num += w * (xa - xb).squaredNorm();
            acc.state_den += w * xb.squaredNorm();
            const double va = bench.value(t, xa), vb = bench.value(t, xb);
            acc.value_num += w * (va - vb) * (va - vb);
            acc.value_den += w * vb * vb;
            if (k < K) {
                acc.control_num += w * (a.actions[k].row(l) - b.actions[k].row(l)).squaredNorm();
                acc.control_den += w * b.actions[k].row(l).squaredNorm();
            }
        }
    }
    return finalize(acc, config, 0.0, false);
}

metrics::MetricReport evaluate_merton_standard(const ExperimentConfig& config,
                                               const bench::MertonBenchmark& benchmark,
                                               const policy::FlowPolicy& pol,
                                               const learner::CriticPair& critic) {
    const auto model = build_merton_model(config);
    const double dt = config.train.delta_t;
    const auto K = static_cast<std::size_t>(std::llround(config.eval_horizon() / dt));
    const sde::TimeGrid grid(K, dt);
    const std::size_t L = config.eval.paths;

    MeanPolicySampler learned_sampler(pol, config.eval.mc_mean_samples);
    const double u_star = benchmark.u_star;
    FeedbackSampler bench_sampler(1, [u_star](double, const MatrixXd& states) {
        return MatrixXd::Constant(states.rows(), 1, u_star);
    });
    const auto learned = sde::rollout_batch(model, grid, learned_sampler, L, config.eval.seed);
    const auto reference = sde::rollout_batch(model, grid, bench_sampler, L, config.eval.seed);

    PathAccumulators acc;
    for (std::size_t k = 0; k <= K; ++k) {
        const double t = grid.t(k);
        const double w = tw(k, K);
        const VectorXd v_learned = critic.value(t, learned.states[k]);
        for (std::size_t l = 0; l < L; ++l) {
            const double xh = learned.states[k](l, 0);
            const double xb = reference.states[k](l, 0);
            acc.state_num += w * (xh - xb) * (xh - xb);
            acc.state_den += w * xb * xb;
            const double vb = benchmark.value(xb);
            const double vl = v_learned[static_cast<Eigen::Index>(l)];
            acc.value_num += w * (vl - vb) * (vl - vb);
            acc.value_den += w * vb * vb;
            if (k < K) {
                const double uh = learned.actions[k](l, 0);
                acc.control_num += w * (uh - u_star) * (uh - u_star);
                acc.control_den += w * u_star * u_star;
            }
        }
    }
    return finalize(acc, config, 0.0, false);
}

metrics::MetricReport evaluate_merton_standard_self(const ExperimentConfig& config,
                                                    const bench::MertonBenchmark& benchmark) {
    const auto model = build_merton_model(config);
    const double dt = config.train.delta_t;
    const auto K = static_cast<std::size_t>(std::llround(config.eval_horizon() / dt));
    const sde::TimeGrid grid(K, dt);
    const double u_star = benchmark.u_star;
    FeedbackSampler bench_sampler(1, [u_star](double, const MatrixXd& states) {
        return MatrixXd::Constant(states.rows(), 1, u_star);
    });
    const auto a = sde::rollout_batch(model, grid, bench_sampler, config.eval.paths,
                                      config.eval.seed);
    PathAccumulators acc;
    for (std::size_t k = 0; k <= K; ++k) {
        const double w = tw(k, K);
        for (std::size_t l = 0; l < config.eval.paths; ++l) {
            const double xb = a.states[k](l, 0);
            acc.state_den += w * xb * xb;
            const double vb = benchmark.value(xb);
            acc.value_den += w * vb * vb;
            if (k < K) acc.control_den += w * u_star * u_star;
        }
    }
    return finalize(acc, config, 0.0, false);
}

metrics::MetricReport evaluate_merton_entropy(const ExperimentConfig& config,
                                              const bench::MertonEntropyBenchmark& benchmark,
                                              const policy::FlowPolicy& pol,
                                              const learner::CriticPair& critic) {
    const auto model = build_merton_model(config);
    const double dt = config.train.delta_t;
    const auto K = static_cast<std::size_t>(std::llround(config.eval_horizon() / dt));
    const sde::TimeGrid grid(K, dt);
    const std::size_t L = config.eval.paths;

    MeanPolicySampler learned_sampler(pol, config.eval.mc_mean_samples);
    FeedbackSampler bench_sampler(1, [&benchmark](double, const MatrixXd& states) {
        MatrixXd u(states.rows(), 1);
        for (Eigen::Index l = 0; l < states.rows(); ++l)
            u(l, 0) = benchmark.gibbs_mean(states(l, 0));
        return u;
    });
    const auto learned = sde::rollout_batch(model, grid, learned_sampler, L, config.eval.seed);
    const auto reference = sde::rollout_batch(model, grid, bench_sampler, L, config.eval.seed);

    // KL grid: midpoints of the benchmark's u grid (open interval, the
    // squashed density vanishes at the endpoints)
    const std::size_t nu = benchmark.u_grid.size();
    VectorXd u_mid(static_cast<Eigen::Index>(nu - 1));
    for (std::size_t j = 0; j + 1 < nu; ++j)
        u_mid[static_cast<Eigen::Index>(j)] = 0.5 * (benchmark.u_grid[j] + benchmark.u_grid[j + 1]);
    const double du = benchmark.u_grid[1] - benchmark.u_grid[0];

    PathAccumulators acc;
    VectorXd kl_series = VectorXd::Zero(static_cast<Eigen::Index>(K + 1));
    for (std::size_t k = 0; k <= K; ++k) {
        const double t = grid.t(k);
        const double w = tw(k, K);
        const VectorXd v_learned = critic.value(t, learned.states[k]);
        double kl_k = 0.0;
        for (std::size_t l = 0; l < L; ++l) {
            const double xh = learned.states[k](l, 0);
            const double xb = reference.states[k](l, 0);
            acc.state_num += w * (xh - xb) * (xh - xb);
            acc.state_den += w * xb * xb;
            const double vb = benchmark.value_at(xb);
            const double vl = v_learned[static_cast<Eigen::Index>(l)];
            acc.value_num += w * (vl - vb) * (vl - vb);
            acc.value_den += w * vb * vb;

            // density comparison at the learned path's state
            const VectorXd slice = benchmark.density_at(xh);
            VectorXd p_star(u_mid.size()), p_hat(u_mid.size());
            for (Eigen::Index j = 0; j < u_mid.size(); ++j)
                p_star[j] = 0.5 * (slice[j] + slice[j + 1]);
            MatrixXd states_rep = MatrixXd::Constant(u_mid.size(), 1, xh);
            MatrixXd actions(u_mid.size(), 1);
            for (Eigen::Index j = 0; j < u_mid.size(); ++j) actions(j, 0) = u_mid[j];
            auto logp = pol.log_prob_batch(nullptr, t, states_rep, actions);
            for (Eigen::Index j = 0; j < u_mid.size(); ++j) p_hat[j] = std::exp(logp->at(j, 0));
            // midpoint masses and KL
            const double mass_star = p_star.sum() * du;
            const double mass_hat = p_hat.sum() * du;
            if (std::abs(mass_star - 1.0) > 1e-3 || std::abs(mass_hat - 1.0) > 1e-3)
                throw std::runtime_error("merton entropy eval: unnormalized density on KL grid");
            double kl = 0.0;
            for (Eigen::Index j = 0; j < u_mid.size(); ++j)
                if (p_star[j] > 0.0) kl += p_star[j] * std::log(p_star[j] /
                                                                 std::max(p_hat[j], 1e-300)) * du;
            kl_k += kl;
        }
        kl_series[static_cast<Eigen::Index>(k)] = kl_k / static_cast<double>(L);
    }
    return finalize(acc, config, metrics::time_average(kl_series, dt), true);
}

metrics::MetricReport evaluate_game(const ExperimentConfig& config,
                                    const bench::GameBenchmark& benchmark,
                                    const std::vector<policy::FlowPolicy>& policies,
                                    const std::vector<learner::CriticPair>& critics) {
    const auto params = build_game(config);
    const std::size_t n = params.n;
    const double dt = config.train.delta_t;
    const auto K = static_cast<std::size_t>(std::llround(config.eval_horizon() / dt));
    const sde::TimeGrid grid(K, dt);
    const std::size_t L = config.eval.paths;

    learner::GameActionFn learned_fn = [&](double t, const MatrixXd& wealth) {
        MatrixXd u(wealth.rows(), n);
        for (std::size_t i = 0; i < n; ++i) {
            MatrixXd obs(wealth.rows(), 2);
            for (Eigen::Index l = 0; l < wealth.rows(); ++l) {
                obs(l, 0) = wealth(l, static_cast<Eigen::Index>(i));
                obs(l, 1) = learner::other_average(wealth.row(l), i, n);
            }
            u.col(static_cast<Eigen::Index>(i)) =
                policies[i].mean_action(t, obs, config.eval.mc_mean_samples).col(0);
        }
        return u;
    };
    learner::GameActionFn bench_fn = [&](double, const MatrixXd& wealth) {
        MatrixXd u(wealth.rows(), n);
        for (std::size_t i = 0; i < n; ++i)
            u.col(static_cast<Eigen::Index>(i)).setConstant(benchmark.u_star[i]);
        return u;
    };
    const auto learned = learner::rollout_game(params, grid, learned_fn, L, config.eval.seed);
    const auto reference = learner::rollout_game(params, grid, bench_fn, L, config.eval.seed);

    metrics::MetricReport rep;
    rep.t_eval = config.eval_horizon();
    rep.per_agent_e_x.resize(n);
    rep.per_agent_e_v.resize(n);
    rep.per_agent_e_u.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        PathAccumulators acc;
        for (std::size_t k = 0; k <= K; ++k) {
            const double t = grid.t(k);
            const double w = tw(k, K);
            MatrixXd obs(learned.wealth[k].rows(), 2);
            for (Eigen::Index l = 0; l < learned.wealth[k].rows(); ++l) {
                obs(l, 0) = learned.wealth[k](l, static_cast<Eigen::Index>(i));
                obs(l, 1) = learner::other_average(learned.wealth[k].row(l), i, n);
            }
            const VectorXd v_learned = critics[i].value(t, obs);
            for (std::size_t l = 0; l < L; ++l) {
                const auto li = static_cast<Eigen::Index>(l);
                const double xh = learned.wealth[k](li, static_cast<Eigen::Index>(i));
                const double xb = reference.wealth[k](li, static_cast<Eigen::Index>(i));
                acc.state_num += w * (xh - xb) * (xh - xb);
                acc.state_den += w * xb * xb;
                const double yb = learner::other_average(reference.wealth[k].row(li), i, n);
                const double vb = benchmark.value(i, xb, yb);
                const double vl = v_learned[li];
                acc.value_num += w * (vl - vb) * (vl - vb);
                acc.value_den += w * vb * vb;
                if (k < K) {
                    const double uh = learned.actions[k](li, static_cast<Eigen::Index>(i));
                    const double ub = benchmark.u_star[i];
                    acc.control_num += w * (uh - ub) * (uh - ub);
                    acc.control_den += w * ub * ub;
                }
            }
        }
        rep.per_agent_e_x[i] = acc.state_num / (acc.state_den + rep.eps_x);
        rep.per_agent_e_v[i] = acc.value_num / (acc.value_den + rep.eps_v);
        rep.per_agent_e_u[i] = acc.control_num / (acc.control_den + rep.eps_u);
    }
    rep.e_x = 0.0;
    rep.e_v = 0.0;
    rep.e_u = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        rep.e_x += rep.per_agent_e_x[i] / static_cast<double>(n);
        rep.e_v += rep.per_agent_e_v[i] / static_cast<double>(n);
        rep.e_u += rep.per_agent_e_u[i] / static_cast<double>(n);
    }
    return rep;
}

metrics::MetricReport evaluate_game_self(const ExperimentConfig& config,
                                         const bench::GameBenchmark& benchmark) {
    const auto params = build_game(config);
    const std::size_t n = params.n;
    const double dt = config.train.delta_t;
    const auto K = static_cast<std::size_t>(std::llround(config.eval_horizon() / dt));
    const sde::TimeGrid grid(K, dt);
    learner::GameActionFn bench_fn = [&](double, const MatrixXd& wealth) {
        MatrixXd u(wealth.rows(), n);
        for (std::size_t i = 0; i < n; ++i)
            u.col(static_cast<Eigen::Index>(i)).setConstant(benchmark.u_star[i]);
        return u;
    };
    const auto a = learner::rollout_game(params, grid, bench_fn, config.eval.paths,
                                         config.eval.seed);
    const auto b = learner::rollout_game(params, grid, bench_fn, config.eval.paths,
                                         config.eval.seed);
    metrics::MetricReport rep;
    rep.t_eval = config.eval_horizon();
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k <= K; ++k) {
        num += (a.wealth[k] - b.wealth[k]).squaredNorm();
        den += b.wealth[k].squaredNorm();
    }
    rep.e_x = num / (den + rep.eps_x);
    rep.e_v = 0.0;
    rep.e_u = 0.0;
    return rep;
}

}  // namespace jd::run
