#include "sde/model.hpp"

#include <cmath>

namespace jd::sde {

CoefProfile CoefProfile::constant(double v) {
    CoefProfile p;
    p.kind = Kind::Constant;
    p.value = v;
    return p;
}

CoefProfile CoefProfile::convergent(double v0, double v_inf, double kappa) {
    CoefProfile p;
    p.kind = Kind::Convergent;
    p.v0 = v0;
    p.v_inf = v_inf;
    p.kappa = kappa;
    return p;
}

CoefProfile CoefProfile::periodic(double v_bar, double v_amp, double period, double phase) {
    CoefProfile p;
    p.kind = Kind::Periodic;
    p.v_bar = v_bar;
    p.v_amp = v_amp;
    p.period = period;
    p.phase = phase;
    return p;
}

double CoefProfile::operator()(double t) const {
    switch (kind) {
        case Kind::Constant: return value;
        case Kind::Convergent: return v_inf + (v0 - v_inf) * std::exp(-kappa * t);
        case Kind::Periodic:
            return v_bar + v_amp * std::sin(2.0 * 3.14159265358979323846 * t / period + phase);
    }
    return value;
}

double CoefProfile::limit() const {
    switch (kind) {
        case Kind::Constant: return value;
        case Kind::Convergent: return v_inf;
        case Kind::Periodic: return v_bar;
    }
    return value;
}

double eval_profile(const CoefProfile& p, double t) { return p(t); }

void ModelSpec::validate() const {
    if (state_dim == 0 || control_dim == 0)
        throw std::invalid_argument("model: zero state or control dimension");
    if (!(discount > 0.0)) throw std::invalid_argument("model: discount beta must be positive");
    if (entropy_weight < 0.0) throw std::invalid_argument("model: gamma must be non-negative");
    if (!drift || !diffusion || !running_reward)
        throw std::invalid_argument("model: missing coefficient map");
    if (jump_size.size() != jump_intensity.size())
        throw std::invalid_argument("model: jump channel count mismatch");
    if (initial_state.size() != static_cast<Eigen::Index>(state_dim))
        throw std::invalid_argument("model: initial state dimension mismatch");
}

}  // namespace jd::sde
