#include "run/runner.hpp"

#include "run/problems.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace jd::run {

using nlohmann::json;
using sde::MatrixXd;
using sde::VectorXd;
namespace fs = std::filesystem;

namespace {

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&tt));
    return buf;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
}

void save_critic(const learner::CriticPair& critic, const std::string& path) {
    json header;
    header["format"] = "jumpdiff-critic";
    header["version"] = 1;
    header["input_dim"] = critic.online.input_dim();
    header["hidden_width"] = critic.online.hidden_width();
    header["depth"] = critic.online.depth();
    header["rho_c"] = critic.rho_c;
    header["input_scale"] = critic.online.input_scale();
    const auto on = nn::flatten_parameters(critic.online.parameters());
    const auto tg = nn::flatten_parameters(critic.target.parameters());
    header["params"] = on.size();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write critic checkpoint " + path);
    const std::string h = header.dump();
    const std::uint64_t hlen = h.size();
    os.write("JDCRITK1", 8);
    os.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    os.write(reinterpret_cast<const char*>(on.data()),
             static_cast<std::streamsize>(on.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(tg.data()),
             static_cast<std::streamsize>(tg.size() * sizeof(double)));
}

learner::CriticPair load_critic(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::invalid_argument("cannot open critic checkpoint " + path);
    char magic[8];
    is.read(magic, 8);
    if (std::string(magic, 8) != "JDCRITK1")
        throw std::invalid_argument("bad critic checkpoint magic in " + path);
    std::uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string h(hlen, '\0');
    is.read(h.data(), static_cast<std::streamsize>(hlen));
    const auto header = json::parse(h);
    jd::Rng rng(1);
    learner::CriticPair critic(header.at("input_dim").get<std::size_t>() - 1,
                               header.at("hidden_width").get<std::size_t>(),
                               header.at("depth").get<std::size_t>(), rng,
                               header.at("input_scale").get<std::vector<double>>());
    critic.rho_c = header.at("rho_c").get<double>();
    std::vector<double> on(header.at("params").get<std::size_t>()), tg(on.size());
    is.read(reinterpret_cast<char*>(on.data()),
            static_cast<std::streamsize>(on.size() * sizeof(double)));
    is.read(reinterpret_cast<char*>(tg.data()),
            static_cast<std::streamsize>(tg.size() * sizeof(double)));
    if (!is) throw std::invalid_argument("truncated critic checkpoint " + path);
    nn::unflatten_parameters(on, critic.online.parameters());
    nn::unflatten_parameters(tg, critic.target.parameters());
    return critic;
}

json riccati_json(const bench::RiccatiSolution& sol, std::size_t max_points = 2001) {
    json j;
    j["dt"] = sol.dt;
    if (sol.has_stationary) {
        json H;
        for (Eigen::Index r = 0; r < sol.H_stationary.rows(); ++r) {
            json row;
            for (Eigen::Index c = 0; c < sol.H_stationary.cols(); ++c)
                row.push_back(sol.H_stationary(r, c));
            H.push_back(row);
        }
        j["H_stationary"] = H;
        j["g_stationary"] = sol.g_stationary;
    }
    if (sol.period > 0.0) j["period"] = sol.period;
    const std::size_t stride = std::max<std::size_t>(1, sol.H.size() / max_points);
    json ts, Hs, gs;
    for (std::size_t k = 0; k < sol.H.size(); k += stride) {
        ts.push_back(sol.t0 + static_cast<double>(k) * sol.dt);
        json H;
        for (Eigen::Index r = 0; r < sol.H[k].rows(); ++r) {
            json row;
            for (Eigen::Index c = 0; c < sol.H[k].cols(); ++c) row.push_back(sol.H[k](r, c));
            H.push_back(row);
        }
        Hs.push_back(H);
        gs.push_back(sol.g[k]);
    }
    j["t"] = ts;
    j["H"] = Hs;
    j["g"] = gs;
    return j;
}

struct TrainingArtifacts {
    std::vector<policy::FlowPolicy> policies;
    std::vector<learner::CriticPair> critics;
};

metrics::MetricReport evaluate_any(const ExperimentConfig& config,
                                   const std::vector<policy::FlowPolicy>& policies,
                                   const std::vector<learner::CriticPair>& critics) {
    if (config.problem == "game") {
        const auto bench = bench::solve_game(build_game(config));
        return evaluate_game(config, bench, policies, critics);
    }
    if (config.problem == "merton-standard") {
        const auto bench = bench::solve_merton_standard(merton_params(config));
        return evaluate_merton_standard(config, bench, policies[0], critics[0]);
    }
    if (config.problem == "merton-entropy") {
        bench::MertonEntropyOptions opts;
        opts.x_min = config.merton.x_min;
        opts.x_max = config.merton.x_max;
        opts.n_x = config.merton.n_x;
        opts.u_min = config.merton.u_min;
        opts.u_max = config.merton.u_max;
        opts.n_u = config.merton.n_u;
        const auto bench =
            bench::solve_merton_entropy_grid(merton_params(config), config.train.gamma, opts);
        return evaluate_merton_entropy(config, bench, policies[0], critics[0]);
    }
    const auto problem = build_lq(config);
    return evaluate_lq(problem, config, policies[0], critics[0]);
}

}  // namespace

std::string benchmark_to_json(const ExperimentConfig& config) {
    json j;
    j["problem"] = config.problem;
    if (config.problem == "merton-standard") {
        const auto bench = bench::solve_merton_standard(merton_params(config));
        j["u_star"] = bench.u_star;
        j["h_star"] = bench.h_star;
        j["foc_residual"] = bench.foc_residual();
    } else if (config.problem == "merton-entropy") {
        bench::MertonEntropyOptions opts;
        opts.x_min = config.merton.x_min;
        opts.x_max = config.merton.x_max;
        opts.n_x = config.merton.n_x;
        opts.u_min = config.merton.u_min;
        opts.u_max = config.merton.u_max;
        opts.n_u = config.merton.n_u;
        const auto bench =
            bench::solve_merton_entropy_grid(merton_params(config), config.train.gamma, opts);
        j["x_grid"] = bench.x_grid;
        j["u_grid"] = bench.u_grid;
        json v;
        for (Eigen::Index i = 0; i < bench.value.size(); ++i) v.push_back(bench.value[i]);
        j["value"] = v;
        j["fixed_point_residual"] = bench.fixed_point_residual;
        j["iterations"] = bench.iterations;
        j["extrapolated_points"] = bench.extrapolated_points;
        // density rows subsampled to keep the document readable
        const std::size_t stride = std::max<std::size_t>(1, bench.x_grid.size() / 100);
        json dens, dens_x;
        for (std::size_t i = 0; i < bench.x_grid.size(); i += stride) {
            json row;
            for (std::size_t jj = 0; jj < bench.u_grid.size(); ++jj)
                row.push_back(bench.gibbs(i, jj));
            dens.push_back(row);
            dens_x.push_back(bench.x_grid[i]);
        }
        j["gibbs_x"] = dens_x;
        j["gibbs"] = dens;
    } else if (config.problem == "game") {
        const auto bench = bench::solve_game(build_game(config));
        j["u_star"] = bench.u_star;
        j["chi"] = bench.chi;
        j["rho"] = bench.rho;
        j["C"] = bench.C;
        j["lambda_star"] = bench.lambda_star;
        j["psi_at_optimum"] = bench.psi_at_optimum;
        json res;
        for (std::size_t i = 0; i < bench.params.n; ++i)
            res.push_back(bench.psi_prime(i, bench.u_star[i]));
        j["psi_prime_residual"] = res;
        j["iterations"] = bench.iterations;
    } else {
        const auto problem = build_lq(config);
        j["riccati"] = riccati_json(problem.riccati);
        j["ode_residual"] = config.problem == "lq-homogeneous"
                                ? 0.0
                                : bench::riccati_residual(problem.riccati, problem.lq);
    }
    return j.dump(2);
}

void run_benchmark(const ExperimentConfig& config) {
    fs::create_directories(config.out_dir);
    write_file(fs::path(config.out_dir) / "benchmark.json", benchmark_to_json(config));
}

void run_train(const ExperimentConfig& config) {
    fs::create_directories(config.out_dir);
    const fs::path out(config.out_dir);
    const std::string started = timestamp_now();
    const auto wall_start = std::chrono::steady_clock::now();

    jd::Rng init_rng(config.seed);
    TrainingArtifacts arts;
    const std::size_t n_agents = config.problem == "game" ? config.dim : 1;
    for (std::size_t i = 0; i < n_agents; ++i) {
        arts.policies.emplace_back(make_policy(config, init_rng));
        arts.critics.emplace_back(make_critic(config, init_rng));
    }

    std::ofstream log(out / "training_log.csv");
    log << "iteration,critic_loss,actor_loss,E_V,E_u,wall_time\n";
    double last_ev = std::nan(""), last_eu = std::nan("");

    auto on_iteration = [&](const learner::IterationStats& s) {
        const bool eval_now =
            config.eval.every > 0 && (s.iteration + 1) % config.eval.every == 0;
        if (eval_now) {
            const auto rep = evaluate_any(config, arts.policies, arts.critics);
            last_ev = rep.e_v;
            last_eu = rep.e_u;
        }
        log << s.iteration << "," << s.critic_loss << "," << s.actor_loss << ",";
        if (eval_now) log << last_ev;
        log << ",";
        if (eval_now) log << last_eu;
        log << "," << s.wall_seconds << "\n";
        if (config.checkpoint_every > 0 && (s.iteration + 1) % config.checkpoint_every == 0) {
            for (std::size_t i = 0; i < n_agents; ++i) {
                const std::string suffix = n_agents > 1 ? "_agent" + std::to_string(i) : "";
                arts.policies[i].save((out / ("policy_it" + std::to_string(s.iteration + 1) +
                                              suffix + ".bin")).string());
            }
        }
    };

    if (config.problem == "game") {
        learner::train_game(build_game(config), config.train, arts.policies, arts.critics,
                            on_iteration);
    } else {
        sde::ModelSpec model;
        if (config.problem == "merton-standard" || config.problem == "merton-entropy")
            model = build_merton_model(config);
        else
            model = build_lq(config).model;
        learner::train(model, config.train, arts.policies[0], arts.critics[0], on_iteration);
    }
    log.close();

    for (std::size_t i = 0; i < n_agents; ++i) {
        const std::string suffix = n_agents > 1 ? "_agent" + std::to_string(i) : "";
        arts.policies[i].save((out / ("policy_final" + suffix + ".bin")).string());
        save_critic(arts.critics[i], (out / ("critic_final" + suffix + ".bin")).string());
    }

    const auto report = evaluate_any(config, arts.policies, arts.critics);
    write_file(out / "metrics_final.json", report.to_json());

    json manifest;
    manifest["config"] = json::parse(serialize_config(config));
    manifest["config_hash"] = config_hash(config);
    manifest["started_at"] = started;
    manifest["finished_at"] = timestamp_now();
    manifest["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    manifest["artifacts"] = {"training_log.csv", "policy_final.bin", "critic_final.bin",
                             "metrics_final.json"};
    write_file(out / "manifest.json", manifest.dump(2));
}

void run_evaluate(const ExperimentConfig& config, bool self_check) {
    fs::create_directories(config.out_dir);
    const fs::path out(config.out_dir);
    if (self_check) {
        metrics::MetricReport rep;
        if (config.problem == "game") {
            const auto bench = bench::solve_game(build_game(config));
            rep = evaluate_game_self(config, bench);
        } else if (config.problem == "merton-standard" || config.problem == "merton-entropy") {
            const auto bench = bench::solve_merton_standard(merton_params(config));
            rep = evaluate_merton_standard_self(config, bench);
        } else {
            rep = evaluate_lq_self(build_lq(config), config);
        }
        write_file(out / "metrics_self_check.json", rep.to_json());
        return;
    }
    TrainingArtifacts arts;
    const std::size_t n_agents = config.problem == "game" ? config.dim : 1;
    for (std::size_t i = 0; i < n_agents; ++i) {
        const std::string suffix = n_agents > 1 ? "_agent" + std::to_string(i) : "";
        arts.policies.emplace_back(
            policy::FlowPolicy::load((out / ("policy_final" + suffix + ".bin")).string()));
        arts.critics.emplace_back(load_critic((out / ("critic_final" + suffix + ".bin")).string()));
    }
    const auto rep = evaluate_any(config, arts.policies, arts.critics);
    write_file(out / "metrics_eval.json", rep.to_json());
}

void run_plot_data(const ExperimentConfig& config) {
    const fs::path out(config.out_dir);
    fs::create_directories(out);
    const std::size_t n_agents = config.problem == "game" ? config.dim : 1;
    TrainingArtifacts arts;
    for (std::size_t i = 0; i < n_agents; ++i) {
        const std::string suffix = n_agents > 1 ? "_agent" + std::to_string(i) : "";
        arts.policies.emplace_back(
            policy::FlowPolicy::load((out / ("policy_final" + suffix + ".bin")).string()));
        arts.critics.emplace_back(load_critic((out / ("critic_final" + suffix + ".bin")).string()));
    }

    const double dt = config.train.delta_t;
    const auto K = static_cast<std::size_t>(std::llround(config.eval_horizon() / dt));
    const sde::TimeGrid grid(K, dt);

    std::ofstream fs_state(out / "plot_state.csv"), fs_value(out / "plot_value.csv"),
        fs_control(out / "plot_control.csv");

    if (config.problem == "game") {
        const auto params = build_game(config);
        const auto bench = bench::solve_game(params);
        const std::size_t n = params.n;
        learner::GameActionFn learned_fn = [&](double t, const MatrixXd& wealth) {
            MatrixXd u(wealth.rows(), n);
            for (std::size_t i = 0; i < n; ++i) {
                MatrixXd obs(wealth.rows(), 2);
                for (Eigen::Index l = 0; l < wealth.rows(); ++l) {
                    obs(l, 0) = wealth(l, static_cast<Eigen::Index>(i));
                    obs(l, 1) = learner::other_average(wealth.row(l), i, n);
                }
                u.col(static_cast<Eigen::Index>(i)) =
                    arts.policies[i].mean_action(t, obs, config.eval.mc_mean_samples).col(0);
            }
            return u;
        };
        learner::GameActionFn bench_fn = [&](double, const MatrixXd& wealth) {
            MatrixXd u(wealth.rows(), n);
            for (std::size_t i = 0; i < n; ++i)
                u.col(static_cast<Eigen::Index>(i)).setConstant(bench.u_star[i]);
            return u;
        };
        const auto learned = learner::rollout_game(params, grid, learned_fn, 1, config.eval.seed);
        const auto reference = learner::rollout_game(params, grid, bench_fn, 1, config.eval.seed);
        fs_state << "t";
        fs_value << "t";
        fs_control << "t";
        for (std::size_t i = 0; i < n; ++i) {
            fs_state << ",learned_x" << i << ",benchmark_x" << i;
            fs_value << ",learned_v" << i << ",benchmark_v" << i;
            fs_control << ",learned_u" << i << ",benchmark_u" << i;
        }
        fs_state << "\n";
        fs_value << "\n";
        fs_control << "\n";
        for (std::size_t k = 0; k <= K; ++k) {
            const double t = grid.t(k);
            fs_state << t;
            fs_value << t;
            fs_control << t;
            for (std::size_t i = 0; i < n; ++i) {
                const double xh = learned.wealth[k](0, static_cast<Eigen::Index>(i));
                const double xb = reference.wealth[k](0, static_cast<Eigen::Index>(i));
                fs_state << "," << xh << "," << xb;
                MatrixXd obs(1, 2);
                obs(0, 0) = xh;
                obs(0, 1) = learner::other_average(learned.wealth[k].row(0), i, n);
                const double vh = arts.critics[i].value(t, obs)[0];
                const double yb = learner::other_average(reference.wealth[k].row(0), i, n);
                fs_value << "," << vh << "," << bench.value(i, xb, yb);
                const double uh = k < K ? learned.actions[k](0, static_cast<Eigen::Index>(i))
                                        : learned.actions[K - 1](0, static_cast<Eigen::Index>(i));
                fs_control << "," << uh << "," << bench.u_star[i];
            }
            fs_state << "\n";
            fs_value << "\n";
            fs_control << "\n";
        }
        return;
    }

    // single-agent problems
    sde::ModelSpec model;
    std::function<double(double, const VectorXd&)> bench_value;
    std::function<VectorXd(double, const VectorXd&)> bench_control;
    LqProblem lqp;
    bench::MertonBenchmark mb;
    bench::MertonEntropyBenchmark meb;
    if (config.problem == "merton-standard") {
        model = build_merton_model(config);
        mb = bench::solve_merton_standard(merton_params(config));
        bench_value = [&mb](double, const VectorXd& x) { return mb.value(x[0]); };
        bench_control = [&mb](double, const VectorXd&) {
            return VectorXd::Constant(1, mb.u_star);
        };
    } else if (config.problem == "merton-entropy") {
        model = build_merton_model(config);
        bench::MertonEntropyOptions opts;
        opts.x_min = config.merton.x_min;
        opts.x_max = config.merton.x_max;
        opts.n_x = config.merton.n_x;
        opts.u_min = config.merton.u_min;
        opts.u_max = config.merton.u_max;
        opts.n_u = config.merton.n_u;
        meb = bench::solve_merton_entropy_grid(merton_params(config), config.train.gamma, opts);
        bench_value = [&meb](double, const VectorXd& x) { return meb.value_at(x[0]); };
        bench_control = [&meb](double, const VectorXd& x) {
            return VectorXd::Constant(1, meb.gibbs_mean(x[0]));
        };
    } else {
        lqp = build_lq(config);
        model = lqp.model;
        const auto lqb = lqp.benchmark();
        bench_value = [lqb](double t, const VectorXd& x) { return lqb.value(t, x); };
        bench_control = [lqb](double t, const VectorXd& x) { return lqb.policy_mean(t, x); };
    }

    MeanPolicySampler learned_sampler(arts.policies[0], config.eval.mc_mean_samples);
    FeedbackSampler bench_sampler(model.control_dim, [&](double t, const MatrixXd& states) {
        MatrixXd u(states.rows(), model.control_dim);
        for (Eigen::Index l = 0; l < states.rows(); ++l)
            u.row(l) = bench_control(t, states.row(l).transpose()).transpose();
        return u;
    });
    const auto learned = sde::rollout_batch(model, grid, learned_sampler, 1, config.eval.seed);
    const auto reference = sde::rollout_batch(model, grid, bench_sampler, 1, config.eval.seed);

    const std::size_t d = model.state_dim;
    fs_state << "t";
    fs_control << "t";
    for (std::size_t i = 0; i < d; ++i) fs_state << ",learned_x" << i << ",benchmark_x" << i;
    for (std::size_t i = 0; i < model.control_dim; ++i)
        fs_control << ",learned_u" << i << ",benchmark_u" << i;
    fs_state << "\n";
    fs_control << "\n";
    fs_value << "t,learned_v,benchmark_v\n";
    for (std::size_t k = 0; k <= K; ++k) {
        const double t = grid.t(k);
        fs_state << t;
        fs_value << t;
        fs_control << t;
        for (std::size_t i = 0; i < d; ++i)
            fs_state << "," << learned.states[k](0, static_cast<Eigen::Index>(i)) << ","
                     << reference.states[k](0, static_cast<Eigen::Index>(i));
        const double vh = arts.critics[0].value(t, learned.states[k])[0];
        fs_value << "," << vh << ","
                 << bench_value(t, reference.states[k].row(0).transpose());
        const std::size_t ka = k < K ? k : K - 1;
        for (std::size_t i = 0; i < model.control_dim; ++i)
            fs_control << "," << learned.actions[ka](0, static_cast<Eigen::Index>(i)) << ","
                       << reference.actions[ka](0, static_cast<Eigen::Index>(i));
        fs_state << "\n";
        fs_value << "\n";
        fs_control << "\n";
    }

    if (config.problem == "merton-entropy") {
        std::ofstream fd(out / "plot_density.csv");
        fd << "u";
        const double T = config.eval_horizon();
        const std::vector<double> times = {0.25 * T, 0.5 * T, 0.75 * T, T};
        for (double t : times) fd << ",benchmark_t" << t << ",learned_t" << t;
        fd << "\n";
        for (std::size_t j = 0; j < meb.u_grid.size(); ++j) {
            fd << meb.u_grid[j];
            for (double t : times) {
                const auto k = static_cast<std::size_t>(std::llround(t / dt));
                const double x = learned.states[std::min(k, K)](0, 0);
                const VectorXd slice = meb.density_at(x);
                MatrixXd srep = MatrixXd::Constant(1, 1, x);
                MatrixXd act = MatrixXd::Constant(1, 1, meb.u_grid[j]);
                const double lp = arts.policies[0].log_prob_batch(nullptr, t, srep, act)->at(0, 0);
                fd << "," << slice[static_cast<Eigen::Index>(j)] << "," << std::exp(lp);
            }
            fd << "\n";
        }
    }
}

void run_table(const std::string& table_config_json, const std::string& out_dir) {
    json doc;
    try {
        doc = json::parse(table_config_json);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("table config: invalid JSON: ") + e.what());
    }
    if (!doc.contains("cells") || !doc.at("cells").is_array())
        throw std::invalid_argument("table config: needs a 'cells' array");
    const std::string out_name = doc.value("out", std::string("table.csv"));
    fs::create_directories(out_dir);
    std::ofstream os(fs::path(out_dir) / out_name);
    os << "cell,E_u,E_V,E_X,runtime_min,runs\n";
    for (const auto& cell : doc.at("cells")) {
        const std::string label = cell.value("label", std::string("?"));
        double eu = 0.0, ev = 0.0, ex = 0.0, minutes = 0.0;
        int found = 0;
        for (const auto& run : cell.value("runs", std::vector<std::string>{})) {
            const fs::path mpath = fs::path(run) / "metrics_final.json";
            const fs::path manpath = fs::path(run) / "manifest.json";
            if (!fs::exists(mpath)) {
                std::cerr << "table: warning: missing " << mpath.string() << "\n";
                continue;
            }
            std::ifstream mi(mpath);
            const auto m = json::parse(mi);
            eu += m.value("E_u", 0.0);
            ev += m.value("E_V", 0.0);
            ex += m.value("E_X", 0.0);
            if (fs::exists(manpath)) {
                std::ifstream mani(manpath);
                const auto man = json::parse(mani);
                minutes += man.value("wall_seconds", 0.0) / 60.0;
            }
            ++found;
        }
        os << label << ",";
        if (found > 0)
            os << eu / found << "," << ev / found << "," << ex / found << "," << minutes / found;
        else {
            std::cerr << "table: warning: empty cell '" << label << "'\n";
            os << ",,,";
        }
        os << "," << found << "\n";
    }
}

void run_command(const std::string& command, const std::string& config_json,
                 long long seed_override, const std::string& out_override) {
    if (command == "table") {
        run_table(config_json, out_override.empty() ? "." : out_override);
        return;
    }
    auto config = parse_config(config_json);
    if (seed_override >= 0) config.seed = static_cast<std::uint64_t>(seed_override);
    if (!out_override.empty()) config.out_dir = out_override;
    if (command == "train") run_train(config);
    else if (command == "benchmark") run_benchmark(config);
    else if (command == "evaluate") run_evaluate(config);
    else if (command == "evaluate-self-check") run_evaluate(config, true);
    else if (command == "plot-data") run_plot_data(config);
    else throw std::invalid_argument("unknown command '" + command + "'");
}

}  // namespace jd::run
