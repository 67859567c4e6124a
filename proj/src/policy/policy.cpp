#include "policy/policy.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace jd::policy {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kStdFloor = 1e-6;
constexpr double kSquashClamp = 1e-6;

double softplus_inv(double y) { return std::log(std::expm1(y)); }

}  // namespace

FlowPolicy::FlowPolicy(const PolicyConfig& config, jd::Rng& rng) : config_(config) {
    const std::size_t out_dim = config_.learnable_std ? 2 * config_.control_dim : config_.control_dim;
    base_net_ = nn::ResidualMlp(config_.state_dim + 1, config_.hidden_width, config_.depth,
                                out_dim, rng);
    if (!config_.input_scale.empty()) base_net_.set_input_scale(config_.input_scale);
    if (config_.flow.enabled) {
        flow_ = std::make_unique<SplineFlow>(config_.state_dim, config_.control_dim,
                                             config_.flow.bins, config_.flow.tail_bound,
                                             config_.flow.hidden_width, config_.flow.depth, rng);
        if (!config_.input_scale.empty()) flow_->set_input_scale(config_.input_scale);
    }
}

double FlowPolicy::squash_temperature() const {
    const auto& s = config_.squash;
    if (config_.warmup_updates <= 0) return s.tau_end;
    const double frac = std::min(1.0, static_cast<double>(update_count_) /
                                          static_cast<double>(config_.warmup_updates));
    return s.tau_start + (s.tau_end - s.tau_start) * frac;
}

Tensor FlowPolicy::net_input(double t, const MatrixXd& states) const {
    const std::size_t L = states.rows();
    auto input = nn::make_tensor(L, config_.state_dim + 1);
    for (std::size_t r = 0; r < L; ++r) {
        input->at(r, 0) = t;
        for (std::size_t c = 0; c < config_.state_dim; ++c) input->at(r, c + 1) = states(r, c);
    }
    return input;
}

FlowPolicy::Base FlowPolicy::base_forward(Tape* tape, double t, const MatrixXd& states) const {
    Base out;
    auto raw = base_net_.forward(tape, net_input(t, states));
    const std::size_t m = config_.control_dim;
    if (config_.learnable_std) {
        out.mu = nn::slice_cols(tape, raw, 0, m);
        auto raw_std = nn::add_scalar(tape, nn::slice_cols(tape, raw, m, 2 * m),
                                      softplus_inv(config_.init_std));
        out.std = nn::add_scalar(tape, nn::softplus(tape, raw_std), kStdFloor);
    } else {
        out.mu = raw;
        auto s = nn::make_tensor(states.rows(), m);
        for (std::size_t i = 0; i < s->size(); ++i) s->data()[i] = config_.fixed_std;
        out.std = s;
    }
    out.log_std_sum = nn::row_sum(tape, nn::log_op(tape, out.std));
    return out;
}

void FlowPolicy::sample_batch(double t, const MatrixXd& states, std::vector<jd::Rng>& rngs,
                              MatrixXd& actions, VectorXd& log_probs) const {
    const std::size_t L = states.rows();
    const std::size_t m = config_.control_dim;
    if (rngs.size() < L) throw std::invalid_argument("policy: not enough rng streams");
    auto base = base_forward(nullptr, t, states);

    auto z0 = nn::make_tensor(L, m);
    log_probs.resize(L);
    for (std::size_t r = 0; r < L; ++r) {
        double lp = -0.5 * static_cast<double>(m) * kLog2Pi - base.log_std_sum->at(r, 0);
        for (std::size_t c = 0; c < m; ++c) {
            const double eps = rngs[r].normal();
            z0->at(r, c) = base.mu->at(r, c) + base.std->at(r, c) * eps;
            lp -= 0.5 * eps * eps;
        }
        log_probs[r] = lp;
    }

    Tensor z = z0;
    if (flow_active()) {
        auto res = flow_->forward(nullptr, z, t, states);
        z = res.value;
        for (std::size_t r = 0; r < L; ++r) log_probs[r] -= res.log_det->at(r, 0);
    }

    actions.resize(L, m);
    if (config_.squash.enabled) {
        const double tau = squash_temperature();
        const double range = config_.squash.u_max - config_.squash.u_min;
        for (std::size_t r = 0; r < L; ++r)
            for (std::size_t c = 0; c < m; ++c) {
                const double zv = z->at(r, c) / tau;
                const double sig = zv >= 0.0 ? 1.0 / (1.0 + std::exp(-zv))
                                             : std::exp(zv) / (1.0 + std::exp(zv));
                actions(r, c) = config_.squash.u_min + range * sig;
                log_probs[r] -= std::log(range * sig * (1.0 - sig) / tau);
            }
    } else {
        for (std::size_t r = 0; r < L; ++r)
            for (std::size_t c = 0; c < m; ++c) actions(r, c) = z->at(r, c);
    }
    for (std::size_t r = 0; r < L; ++r)
        if (!std::isfinite(log_probs[r]))
            throw std::runtime_error("policy: non-finite log density while sampling");
}

Tensor FlowPolicy::log_prob_batch(Tape* tape, double t, const MatrixXd& states,
                                  const MatrixXd& actions,
                                  std::vector<std::uint8_t>* saturated) const {
    const std::size_t L = states.rows();
    const std::size_t m = config_.control_dim;
    if (saturated) saturated->assign(L, 0);

    // squash inverse and its log-det involve only the fixed action data
    Tensor z_f = nn::make_tensor(L, m);
    auto squash_ld = nn::make_tensor(L, 1);
    if (config_.squash.enabled) {
        const double tau = squash_temperature();
        const double u_min = config_.squash.u_min, u_max = config_.squash.u_max;
        const double range = u_max - u_min;
        for (std::size_t r = 0; r < L; ++r) {
            double ld = 0.0;
            for (std::size_t c = 0; c < m; ++c) {
                double u = actions(r, c);
                if (u <= u_min || u >= u_max) {
                    if (saturated) (*saturated)[r] = 1;
                }
                u = std::min(std::max(u, u_min + kSquashClamp), u_max - kSquashClamp);
                const double p = (u - u_min) / range;
                z_f->at(r, c) = tau * (std::log(p) - std::log1p(-p));
                ld += std::log(range * p * (1.0 - p) / tau);
            }
            squash_ld->at(r, 0) = ld;
        }
    } else {
        for (std::size_t r = 0; r < L; ++r)
            for (std::size_t c = 0; c < m; ++c) z_f->at(r, c) = actions(r, c);
    }

    Tensor z0 = z_f;
    Tensor flow_ld;  // log|dz0/dz_f|, parameter-dependent
    if (flow_active()) {
        auto res = flow_->inverse(tape, z_f, t, states);
        z0 = res.value;
        flow_ld = res.log_det;
    }

    auto base = base_forward(tape, t, states);
    auto delta = nn::div(tape, nn::sub(tape, z0, base.mu), base.std);
    auto quad = nn::scale(tape, nn::row_sum(tape, nn::square(tape, delta)), -0.5);
    auto logp = nn::add_scalar(tape, nn::sub(tape, quad, base.log_std_sum),
                               -0.5 * static_cast<double>(m) * kLog2Pi);
    if (flow_ld) logp = nn::add(tape, logp, flow_ld);
    if (config_.squash.enabled) logp = nn::sub(tape, logp, squash_ld);
    return logp;
}

double FlowPolicy::log_prob(double t, const VectorXd& x, const VectorXd& u) const {
    MatrixXd s(1, x.size()), a(1, u.size());
    s.row(0) = x.transpose();
    a.row(0) = u.transpose();
    return log_prob_batch(nullptr, t, s, a)->at(0, 0);
}

MatrixXd FlowPolicy::mean_action(double t, const MatrixXd& states, std::size_t mc_samples) const {
    const std::size_t L = states.rows();
    const std::size_t m = config_.control_dim;
    if (!config_.squash.enabled && !flow_active()) {
        auto base = base_forward(nullptr, t, states);
        MatrixXd out(L, m);
        for (std::size_t r = 0; r < L; ++r)
            for (std::size_t c = 0; c < m; ++c) out(r, c) = base.mu->at(r, c);
        return out;
    }
    MatrixXd acc = MatrixXd::Zero(L, m);
    std::vector<jd::Rng> rngs;
    rngs.reserve(L);
    for (std::size_t r = 0; r < L; ++r) rngs.emplace_back(0x9e1cu, static_cast<std::uint64_t>(r));
    MatrixXd actions;
    VectorXd lp;
    for (std::size_t i = 0; i < mc_samples; ++i) {
        sample_batch(t, states, rngs, actions, lp);
        acc += actions;
    }
    return acc / static_cast<double>(mc_samples);
}

void FlowPolicy::base_parameters(double t, const MatrixXd& states, MatrixXd& mu,
                                 MatrixXd& std) const {
    auto base = base_forward(nullptr, t, states);
    const std::size_t L = states.rows();
    const std::size_t m = config_.control_dim;
    mu.resize(L, m);
    std.resize(L, m);
    for (std::size_t r = 0; r < L; ++r)
        for (std::size_t c = 0; c < m; ++c) {
            mu(r, c) = base.mu->at(r, c);
            std(r, c) = base.std->at(r, c);
        }
}

double FlowPolicy::entropy_estimate(double t, const VectorXd& x, std::size_t n_samples,
                                    jd::Rng& rng) const {
    if (n_samples == 0) throw std::invalid_argument("entropy_estimate: need n_samples >= 1");
    MatrixXd states(n_samples, x.size());
    for (std::size_t r = 0; r < n_samples; ++r) states.row(r) = x.transpose();
    std::vector<jd::Rng> rngs;
    rngs.reserve(n_samples);
    const std::uint64_t root = rng.next_u64();
    for (std::size_t r = 0; r < n_samples; ++r) rngs.emplace_back(root, static_cast<std::uint64_t>(r));
    MatrixXd actions;
    VectorXd lp;
    sample_batch(t, states, rngs, actions, lp);
    return -lp.mean();
}

std::vector<Tensor> FlowPolicy::base_parameters_list() const {
    return base_net_.parameters();
}

std::vector<Tensor> FlowPolicy::flow_parameters_list() const {
    if (!flow_) return {};
    return flow_->parameters();
}

std::vector<Tensor> FlowPolicy::all_parameters() const {
    auto out = base_parameters_list();
    auto f = flow_parameters_list();
    out.insert(out.end(), f.begin(), f.end());
    return out;
}

void FlowPolicy::save(const std::string& path) const {
    nlohmann::json header;
    header["format"] = "jumpdiff-policy";
    header["version"] = 1;
    header["state_dim"] = config_.state_dim;
    header["control_dim"] = config_.control_dim;
    header["hidden_width"] = config_.hidden_width;
    header["depth"] = config_.depth;
    header["learnable_std"] = config_.learnable_std;
    header["fixed_std"] = config_.fixed_std;
    header["init_std"] = config_.init_std;
    header["flow_enabled"] = config_.flow.enabled;
    header["flow_bins"] = config_.flow.bins;
    header["flow_tail_bound"] = config_.flow.tail_bound;
    header["flow_hidden"] = config_.flow.hidden_width;
    header["flow_depth"] = config_.flow.depth;
    header["squash_enabled"] = config_.squash.enabled;
    header["u_min"] = config_.squash.u_min;
    header["u_max"] = config_.squash.u_max;
    header["tau_start"] = config_.squash.tau_start;
    header["tau_end"] = config_.squash.tau_end;
    header["warmup_updates"] = config_.warmup_updates;
    header["input_scale"] = config_.input_scale;
    header["update_count"] = update_count_;

    auto base_flat = nn::flatten_parameters(base_net_.parameters());
    std::vector<double> flow_flat;
    if (flow_) flow_flat = nn::flatten_parameters(flow_->parameters());
    header["base_params"] = base_flat.size();
    header["flow_params"] = flow_flat.size();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("policy: cannot open checkpoint for writing: " + path);
    const std::string h = header.dump();
    const std::uint64_t hlen = h.size();
    os.write("JDPOLCK1", 8);
    os.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    os.write(reinterpret_cast<const char*>(base_flat.data()),
             static_cast<std::streamsize>(base_flat.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(flow_flat.data()),
             static_cast<std::streamsize>(flow_flat.size() * sizeof(double)));
    if (!os) throw std::runtime_error("policy: checkpoint write failed: " + path);
}

FlowPolicy FlowPolicy::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("policy: cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (std::string(magic, 8) != "JDPOLCK1")
        throw std::runtime_error("policy: bad checkpoint magic in " + path);
    std::uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string h(hlen, '\0');
    is.read(h.data(), static_cast<std::streamsize>(hlen));
    const auto header = nlohmann::json::parse(h);

    PolicyConfig cfg;
    cfg.state_dim = header.at("state_dim").get<std::size_t>();
    cfg.control_dim = header.at("control_dim").get<std::size_t>();
    cfg.hidden_width = header.at("hidden_width").get<std::size_t>();
    cfg.depth = header.at("depth").get<std::size_t>();
    cfg.learnable_std = header.at("learnable_std").get<bool>();
    cfg.fixed_std = header.at("fixed_std").get<double>();
    cfg.init_std = header.at("init_std").get<double>();
    cfg.flow.enabled = header.at("flow_enabled").get<bool>();
    cfg.flow.bins = header.at("flow_bins").get<std::size_t>();
    cfg.flow.tail_bound = header.at("flow_tail_bound").get<double>();
    cfg.flow.hidden_width = header.at("flow_hidden").get<std::size_t>();
    cfg.flow.depth = header.at("flow_depth").get<std::size_t>();
    cfg.squash.enabled = header.at("squash_enabled").get<bool>();
    cfg.squash.u_min = header.at("u_min").get<double>();
    cfg.squash.u_max = header.at("u_max").get<double>();
    cfg.squash.tau_start = header.at("tau_start").get<double>();
    cfg.squash.tau_end = header.at("tau_end").get<double>();
    cfg.warmup_updates = header.at("warmup_updates").get<int>();
    cfg.input_scale = header.at("input_scale").get<std::vector<double>>();

    jd::Rng rng(1);
    FlowPolicy policy(cfg, rng);
    policy.update_count_ = header.at("update_count").get<int>();

    std::vector<double> base_flat(header.at("base_params").get<std::size_t>());
    std::vector<double> flow_flat(header.at("flow_params").get<std::size_t>());
    is.read(reinterpret_cast<char*>(base_flat.data()),
            static_cast<std::streamsize>(base_flat.size() * sizeof(double)));
    is.read(reinterpret_cast<char*>(flow_flat.data()),
            static_cast<std::streamsize>(flow_flat.size() * sizeof(double)));
    if (!is) throw std::runtime_error("policy: truncated checkpoint: " + path);
    nn::unflatten_parameters(base_flat, policy.base_net_.parameters());
    if (policy.flow_) nn::unflatten_parameters(flow_flat, policy.flow_->parameters());
    return policy;
}

}  // namespace jd::policy
