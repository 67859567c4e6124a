#include "run/config.hpp"

#include <json.hpp>

#include <set>
#include <stdexcept>

namespace jd::run {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw std::invalid_argument("config: " + path + ": " + what);
}

void require_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& item : obj.items())
        if (!allowed.count(item.key())) fail(path + "." + item.key(), "unknown key");
}

template <typename T>
void read(const json& obj, const std::string& path, const char* key, T& into) {
    if (!obj.contains(key)) return;
    try {
        into = obj.at(key).get<T>();
    } catch (const json::exception&) {
        fail(path + "." + key, "type mismatch");
    }
}

void read_schedule(const json& obj, const std::string& path, learner::ScheduleKind& kind) {
    if (!obj.contains("schedule")) return;
    const std::string s = obj.at("schedule").get<std::string>();
    if (s == "constant") kind = learner::ScheduleKind::Constant;
    else if (s == "multi-step") kind = learner::ScheduleKind::MultiStep;
    else if (s == "cosine-warmup") kind = learner::ScheduleKind::CosineWarmup;
    else fail(path + ".schedule", "must be constant | multi-step | cosine-warmup");
}

std::string schedule_name(learner::ScheduleKind k) {
    switch (k) {
        case learner::ScheduleKind::Constant: return "constant";
        case learner::ScheduleKind::MultiStep: return "multi-step";
        case learner::ScheduleKind::CosineWarmup: return "cosine-warmup";
    }
    return "constant";
}

const std::set<std::string> kTopKeys = {"problem", "dim",     "seed",    "seeds",
                                        "out_dir", "train",   "lq",      "merton",
                                        "game",    "network", "eval",    "checkpoint_every"};
const std::set<std::string> kTrainKeys = {
    "beta",         "gamma",      "delta_t",      "steps",
    "batch",        "iterations", "critic_period", "actor_period",
    "rho_c",        "critic_lr",  "actor_lr",     "flow_lr",
    "schedule",     "martingale_correction",      "grad_clip",
    "explosion_bound", "divergence_guard"};
const std::set<std::string> kLqKeys = {
    "B",       "Sigma",     "R",          "Q",          "lambda_min", "lambda_max",
    "alpha_min", "alpha_max", "b0",       "b_inf",      "kappa_b",    "sigma0",
    "sigma_inf", "kappa_sigma", "alpha0", "alpha_inf",  "kappa_alpha", "b_bar",
    "b_amp",   "sigma_bar", "sigma_amp",  "alpha_bar",  "alpha_amp",  "period",
    "phase",   "lambda_const", "ode_dt",  "t_infinity_factor"};
const std::set<std::string> kMertonKeys = {"mu",    "r",     "sigma", "lambda", "alpha", "p",
                                           "u_min", "u_max", "x_min", "x_max",  "n_x",   "n_u"};
const std::set<std::string> kGameKeys = {"b1",     "b_rest",     "eta1",    "eta_rest",
                                         "sigma1", "sigma_rest", "alpha",   "xi",
                                         "lambda", "lambda0",    "varpi",   "varrho1",
                                         "varrho_rest"};
const std::set<std::string> kNetworkKeys = {"hidden_width", "depth",      "init_std",
                                            "flow_bins",    "flow_tail_bound",
                                            "flow_hidden",  "flow_depth", "warmup_updates"};
const std::set<std::string> kEvalKeys = {"paths", "seed", "every", "mc_mean_samples", "t_eval"};

void validate(const ExperimentConfig& c) {
    static const std::set<std::string> tags = {"lq-homogeneous", "lq-convergent", "lq-periodic",
                                               "merton-standard", "merton-entropy", "game"};
    if (!tags.count(c.problem)) fail("problem", "unknown problem tag '" + c.problem + "'");
    if (c.dim < 1) fail("dim", "must be at least 1");
    if (!(c.train.beta > 0.0)) fail("train.beta", "must be positive");
    if (c.train.gamma < 0.0) fail("train.gamma", "must be non-negative");
    if (!(c.train.delta_t > 0.0)) fail("train.delta_t", "must be positive");
    if (c.train.steps == 0) fail("train.steps", "must be positive");
    if (c.train.batch == 0) fail("train.batch", "must be positive");
    if (c.train.iterations < 0) fail("train.iterations", "must be non-negative");
    if (c.train.critic_period == 0) fail("train.critic_period", "must be positive");
    if (c.train.actor_period == 0) fail("train.actor_period", "must be positive");
    if (c.train.rho_c < 0.0 || c.train.rho_c > 1.0) fail("train.rho_c", "must be in [0,1]");
    if (!(c.train.critic_lr > 0.0)) fail("train.critic_lr", "must be positive");
    if (!(c.train.actor_lr > 0.0)) fail("train.actor_lr", "must be positive");
    if (c.train.flow_lr < 0.0) fail("train.flow_lr", "must be non-negative");
    if (!(c.train.grad_clip > 0.0)) fail("train.grad_clip", "must be positive");
    if (!(c.merton.p > 0.0 && c.merton.p < 1.0)) fail("merton.p", "must be in (0,1)");
    if (!(c.merton.sigma > 0.0)) fail("merton.sigma", "must be positive");
    if (!(c.merton.u_min < c.merton.u_max)) fail("merton.u_min", "must be below merton.u_max");
    if (c.merton.n_x < 4) fail("merton.n_x", "needs at least 4 grid points");
    if (c.merton.n_u < 2) fail("merton.n_u", "needs at least 2 grid points");
    if (!(c.game.varrho1 > 0.0) || !(c.game.varrho_rest > 0.0))
        fail("game.varrho1", "risk tolerances must be positive");
    if (c.game.lambda < 0.0 || c.game.lambda0 < 0.0) fail("game.lambda", "must be non-negative");
    if (c.lq.ode_dt <= 0.0) fail("lq.ode_dt", "must be positive");
    if (c.lq.period <= 0.0) fail("lq.period", "must be positive");
    if (c.network.depth == 0) fail("network.depth", "must be positive");
    if (c.network.flow_bins < 2) fail("network.flow_bins", "needs at least 2 bins");
    if (!(c.network.flow_tail_bound > 0.0)) fail("network.flow_tail_bound", "must be positive");
    if (c.eval.paths == 0) fail("eval.paths", "must be positive");
    if (c.eval.t_eval < 0.0) fail("eval.t_eval", "must be non-negative");
    if (c.problem == "game" && c.dim < 2) fail("dim", "the game needs at least 2 agents");
}

}  // namespace

ExperimentConfig default_config(const std::string& problem) {
    ExperimentConfig c;
    c.problem = problem;
    auto& t = c.train;
    t.beta = 1.0;
    t.rho_c = 0.99;
    t.martingale_correction = true;
    if (problem == "lq-homogeneous") {
        c.dim = 1;
        t.gamma = 0.05;
        t.delta_t = 0.01;
        t.steps = 1000;
        t.batch = 100;
        t.iterations = 1000;
        t.critic_period = 5;
        t.actor_period = 20;
        t.critic_lr = 1e-3;
        t.actor_lr = 1e-3;
        t.schedule = learner::ScheduleKind::MultiStep;
    } else if (problem == "lq-convergent" || problem == "lq-periodic") {
        c.dim = 1;
        t.gamma = problem == "lq-periodic" ? 0.05 : 0.0;
        t.delta_t = 0.01;
        t.steps = 2000;
        t.batch = 100;
        t.iterations = 3000;
        t.critic_period = 5;
        t.actor_period = 15;
        t.critic_lr = 1e-3;
        t.actor_lr = 5e-4;
        t.schedule = learner::ScheduleKind::MultiStep;
        c.lq.R = 2.0;
        c.lq.Q = 0.1;
    } else if (problem == "merton-standard") {
        c.dim = 1;
        t.gamma = 0.0;
        t.delta_t = 0.01;
        t.steps = 1000;
        t.batch = 500;
        t.iterations = 2000;
        t.critic_period = 5;
        t.actor_period = 20;
        t.critic_lr = 1e-3;
        t.actor_lr = 1e-3;
        t.schedule = learner::ScheduleKind::MultiStep;
    } else if (problem == "merton-entropy") {
        c.dim = 1;
        t.gamma = 0.05;
        t.delta_t = 0.05;
        t.steps = 200;
        t.batch = 200;
        t.iterations = 2000;
        t.critic_period = 5;
        t.actor_period = 20;
        t.critic_lr = 1e-3;
        t.actor_lr = 6e-5;
        t.flow_lr = 1e-5;
        t.schedule = learner::ScheduleKind::CosineWarmup;
        c.merton.mu = 0.1;
        c.merton.r = 0.05;
        c.merton.lambda = 0.3;
        c.merton.alpha = 0.1;
        // wide initial exploration across the squashed action box; the
        // entropy-regularized optimum is itself broad
        c.network.init_std = 1.5;
    } else if (problem == "game") {
        c.dim = 2;
        t.gamma = 0.0;
        t.delta_t = 0.02;
        t.steps = 100;
        t.batch = 100;
        t.iterations = 1000;
        t.critic_period = 10;
        t.actor_period = 30;
        t.critic_lr = 1e-3;
        t.actor_lr = 1e-3;
        // the CARA reward carries no direct control signal, so the actor
        // leans entirely on the critic: a short target lag and a smooth decay
        // keep the joint updates from oscillating around the equilibrium
        t.rho_c = 0.5;
        t.schedule = learner::ScheduleKind::CosineWarmup;
    } else {
        fail("problem", "unknown problem tag '" + problem + "'");
    }
    return c;
}

ExperimentConfig parse_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        fail("<document>", std::string("invalid JSON: ") + e.what());
    }
    require_keys(doc, "<root>", kTopKeys);
    if (!doc.contains("problem")) fail("problem", "required");
    const auto problem = doc.at("problem").get<std::string>();
    ExperimentConfig c = default_config(problem);

    read(doc, "<root>", "dim", c.dim);
    read(doc, "<root>", "seed", c.seed);
    read(doc, "<root>", "seeds", c.seeds);
    read(doc, "<root>", "out_dir", c.out_dir);
    read(doc, "<root>", "checkpoint_every", c.checkpoint_every);

    if (doc.contains("train")) {
        const auto& t = doc.at("train");
        require_keys(t, "train", kTrainKeys);
        read(t, "train", "beta", c.train.beta);
        read(t, "train", "gamma", c.train.gamma);
        read(t, "train", "delta_t", c.train.delta_t);
        read(t, "train", "steps", c.train.steps);
        read(t, "train", "batch", c.train.batch);
        read(t, "train", "iterations", c.train.iterations);
        read(t, "train", "critic_period", c.train.critic_period);
        read(t, "train", "actor_period", c.train.actor_period);
        read(t, "train", "rho_c", c.train.rho_c);
        read(t, "train", "critic_lr", c.train.critic_lr);
        read(t, "train", "actor_lr", c.train.actor_lr);
        read(t, "train", "flow_lr", c.train.flow_lr);
        read_schedule(t, "train", c.train.schedule);
        read(t, "train", "martingale_correction", c.train.martingale_correction);
        read(t, "train", "grad_clip", c.train.grad_clip);
        read(t, "train", "explosion_bound", c.train.explosion_bound);
        read(t, "train", "divergence_guard", c.train.divergence_guard);
    }
    if (doc.contains("lq")) {
        const auto& l = doc.at("lq");
        require_keys(l, "lq", kLqKeys);
        read(l, "lq", "B", c.lq.B);
        read(l, "lq", "Sigma", c.lq.Sigma);
        read(l, "lq", "R", c.lq.R);
        read(l, "lq", "Q", c.lq.Q);
        read(l, "lq", "lambda_min", c.lq.lambda_min);
        read(l, "lq", "lambda_max", c.lq.lambda_max);
        read(l, "lq", "alpha_min", c.lq.alpha_min);
        read(l, "lq", "alpha_max", c.lq.alpha_max);
        read(l, "lq", "b0", c.lq.b0);
        read(l, "lq", "b_inf", c.lq.b_inf);
        read(l, "lq", "kappa_b", c.lq.kappa_b);
        read(l, "lq", "sigma0", c.lq.sigma0);
        read(l, "lq", "sigma_inf", c.lq.sigma_inf);
        read(l, "lq", "kappa_sigma", c.lq.kappa_sigma);
        read(l, "lq", "alpha0", c.lq.alpha0);
        read(l, "lq", "alpha_inf", c.lq.alpha_inf);
        read(l, "lq", "kappa_alpha", c.lq.kappa_alpha);
        read(l, "lq", "b_bar", c.lq.b_bar);
        read(l, "lq", "b_amp", c.lq.b_amp);
        read(l, "lq", "sigma_bar", c.lq.sigma_bar);
        read(l, "lq", "sigma_amp", c.lq.sigma_amp);
        read(l, "lq", "alpha_bar", c.lq.alpha_bar);
        read(l, "lq", "alpha_amp", c.lq.alpha_amp);
        read(l, "lq", "period", c.lq.period);
        read(l, "lq", "phase", c.lq.phase);
        read(l, "lq", "lambda_const", c.lq.lambda_const);
        read(l, "lq", "ode_dt", c.lq.ode_dt);
        read(l, "lq", "t_infinity_factor", c.lq.t_infinity_factor);
    }
    if (doc.contains("merton")) {
        const auto& m = doc.at("merton");
        require_keys(m, "merton", kMertonKeys);
        read(m, "merton", "mu", c.merton.mu);
        read(m, "merton", "r", c.merton.r);
        read(m, "merton", "sigma", c.merton.sigma);
        read(m, "merton", "lambda", c.merton.lambda);
        read(m, "merton", "alpha", c.merton.alpha);
        read(m, "merton", "p", c.merton.p);
        read(m, "merton", "u_min", c.merton.u_min);
        read(m, "merton", "u_max", c.merton.u_max);
        read(m, "merton", "x_min", c.merton.x_min);
        read(m, "merton", "x_max", c.merton.x_max);
        read(m, "merton", "n_x", c.merton.n_x);
        read(m, "merton", "n_u", c.merton.n_u);
    }
    if (doc.contains("game")) {
        const auto& g = doc.at("game");
        require_keys(g, "game", kGameKeys);
        read(g, "game", "b1", c.game.b1);
        read(g, "game", "b_rest", c.game.b_rest);
        read(g, "game", "eta1", c.game.eta1);
        read(g, "game", "eta_rest", c.game.eta_rest);
        read(g, "game", "sigma1", c.game.sigma1);
        read(g, "game", "sigma_rest", c.game.sigma_rest);
        read(g, "game", "alpha", c.game.alpha);
        read(g, "game", "xi", c.game.xi);
        read(g, "game", "lambda", c.game.lambda);
        read(g, "game", "lambda0", c.game.lambda0);
        read(g, "game", "varpi", c.game.varpi);
        read(g, "game", "varrho1", c.game.varrho1);
        read(g, "game", "varrho_rest", c.game.varrho_rest);
    }
    if (doc.contains("network")) {
        const auto& n = doc.at("network");
        require_keys(n, "network", kNetworkKeys);
        read(n, "network", "hidden_width", c.network.hidden_width);
        read(n, "network", "depth", c.network.depth);
        read(n, "network", "init_std", c.network.init_std);
        read(n, "network", "flow_bins", c.network.flow_bins);
        read(n, "network", "flow_tail_bound", c.network.flow_tail_bound);
        read(n, "network", "flow_hidden", c.network.flow_hidden);
        read(n, "network", "flow_depth", c.network.flow_depth);
        read(n, "network", "warmup_updates", c.network.warmup_updates);
    }
    if (doc.contains("eval")) {
        const auto& e = doc.at("eval");
        require_keys(e, "eval", kEvalKeys);
        read(e, "eval", "paths", c.eval.paths);
        read(e, "eval", "seed", c.eval.seed);
        read(e, "eval", "every", c.eval.every);
        read(e, "eval", "mc_mean_samples", c.eval.mc_mean_samples);
        read(e, "eval", "t_eval", c.eval.t_eval);
    }
    validate(c);
    return c;
}

std::string serialize_config(const ExperimentConfig& c) {
    json doc;
    doc["problem"] = c.problem;
    doc["dim"] = c.dim;
    doc["seed"] = c.seed;
    if (!c.seeds.empty()) doc["seeds"] = c.seeds;
    doc["out_dir"] = c.out_dir;
    doc["checkpoint_every"] = c.checkpoint_every;
    doc["train"] = {{"beta", c.train.beta},
                    {"gamma", c.train.gamma},
                    {"delta_t", c.train.delta_t},
                    {"steps", c.train.steps},
                    {"batch", c.train.batch},
                    {"iterations", c.train.iterations},
                    {"critic_period", c.train.critic_period},
                    {"actor_period", c.train.actor_period},
                    {"rho_c", c.train.rho_c},
                    {"critic_lr", c.train.critic_lr},
                    {"actor_lr", c.train.actor_lr},
                    {"flow_lr", c.train.flow_lr},
                    {"schedule", schedule_name(c.train.schedule)},
                    {"martingale_correction", c.train.martingale_correction},
                    {"grad_clip", c.train.grad_clip},
                    {"explosion_bound", c.train.explosion_bound},
                    {"divergence_guard", c.train.divergence_guard}};
    doc["lq"] = {{"B", c.lq.B},
                 {"Sigma", c.lq.Sigma},
                 {"R", c.lq.R},
                 {"Q", c.lq.Q},
                 {"lambda_min", c.lq.lambda_min},
                 {"lambda_max", c.lq.lambda_max},
                 {"alpha_min", c.lq.alpha_min},
                 {"alpha_max", c.lq.alpha_max},
                 {"b0", c.lq.b0},
                 {"b_inf", c.lq.b_inf},
                 {"kappa_b", c.lq.kappa_b},
                 {"sigma0", c.lq.sigma0},
                 {"sigma_inf", c.lq.sigma_inf},
                 {"kappa_sigma", c.lq.kappa_sigma},
                 {"alpha0", c.lq.alpha0},
                 {"alpha_inf", c.lq.alpha_inf},
                 {"kappa_alpha", c.lq.kappa_alpha},
                 {"b_bar", c.lq.b_bar},
                 {"b_amp", c.lq.b_amp},
                 {"sigma_bar", c.lq.sigma_bar},
                 {"sigma_amp", c.lq.sigma_amp},
                 {"alpha_bar", c.lq.alpha_bar},
                 {"alpha_amp", c.lq.alpha_amp},
                 {"period", c.lq.period},
                 {"phase", c.lq.phase},
                 {"lambda_const", c.lq.lambda_const},
                 {"ode_dt", c.lq.ode_dt},
                 {"t_infinity_factor", c.lq.t_infinity_factor}};
    doc["merton"] = {{"mu", c.merton.mu},     {"r", c.merton.r},
                     {"sigma", c.merton.sigma}, {"lambda", c.merton.lambda},
                     {"alpha", c.merton.alpha}, {"p", c.merton.p},
                     {"u_min", c.merton.u_min}, {"u_max", c.merton.u_max},
                     {"x_min", c.merton.x_min}, {"x_max", c.merton.x_max},
                     {"n_x", c.merton.n_x},     {"n_u", c.merton.n_u}};
    doc["game"] = {{"b1", c.game.b1},
                   {"b_rest", c.game.b_rest},
                   {"eta1", c.game.eta1},
                   {"eta_rest", c.game.eta_rest},
                   {"sigma1", c.game.sigma1},
                   {"sigma_rest", c.game.sigma_rest},
                   {"alpha", c.game.alpha},
                   {"xi", c.game.xi},
                   {"lambda", c.game.lambda},
                   {"lambda0", c.game.lambda0},
                   {"varpi", c.game.varpi},
                   {"varrho1", c.game.varrho1},
                   {"varrho_rest", c.game.varrho_rest}};
    doc["network"] = {{"hidden_width", c.network.hidden_width},
                      {"depth", c.network.depth},
                      {"init_std", c.network.init_std},
                      {"flow_bins", c.network.flow_bins},
                      {"flow_tail_bound", c.network.flow_tail_bound},
                      {"flow_hidden", c.network.flow_hidden},
                      {"flow_depth", c.network.flow_depth},
                      {"warmup_updates", c.network.warmup_updates}};
    doc["eval"] = {{"paths", c.eval.paths},
                   {"seed", c.eval.seed},
                   {"every", c.eval.every},
                   {"mc_mean_samples", c.eval.mc_mean_samples},
                   {"t_eval", c.eval.t_eval}};
    return doc.dump(2);
}

std::string config_hash(const ExperimentConfig& config) {
    const std::string s = serialize_config(config);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace jd::run
