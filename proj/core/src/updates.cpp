#include "zorl/updates.hpp"

#include "zorl/errors.hpp"

#include <cmath>
#include <stdexcept>

namespace zorl {

UpdateRuleKind parse_update_rule(const std::string& name) {
    if (name == "sgd") return UpdateRuleKind::sgd;
    if (name == "signsgd") return UpdateRuleKind::signsgd;
    if (name == "adam") return UpdateRuleKind::adam;
    throw ConfigError("unknown update rule '" + name + "' (expected sgd|signsgd|adam)");
}

std::string update_rule_name(UpdateRuleKind kind) {
    switch (kind) {
        case UpdateRuleKind::sgd: return "sgd";
        case UpdateRuleKind::signsgd: return "signsgd";
        case UpdateRuleKind::adam: return "adam";
    }
    return "?";
}

namespace {
void check_step_args(const Vector& x, const Vector& g, double eta) {
    if (x.size() != g.size()) throw std::invalid_argument("update step: dimension mismatch");
    if (!(eta > 0.0)) throw std::invalid_argument("update step: eta must be positive");
}
} // namespace

Vector sgd_step(const Vector& x, const Vector& g, double eta) {
    check_step_args(x, g, eta);
    Vector next(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) next[i] = x[i] - eta * g[i];
    return next;
}

Vector signsgd_step(const Vector& x, const Vector& g, double eta) {
    check_step_args(x, g, eta);
    Vector next(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double sign = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
        next[i] = x[i] - eta * sign;
    }
    return next;
}

Vector adam_step(AdamVectorState& state, const Vector& x, const Vector& g, double eta,
                 const AdamParams& params) {
    check_step_args(x, g, eta);
    if (state.m.size() != x.size()) throw std::invalid_argument("adam_step: state dimension mismatch");
    ++state.t;
    const double b1t = std::pow(params.beta1, static_cast<double>(state.t));
    const double b2t = std::pow(params.beta2, static_cast<double>(state.t));
    Vector next(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        state.m[i] = params.beta1 * state.m[i] + (1.0 - params.beta1) * g[i];
        state.v[i] = params.beta2 * state.v[i] + (1.0 - params.beta2) * g[i] * g[i];
        const double mhat = state.m[i] / (1.0 - b1t);
        const double vhat = state.v[i] / (1.0 - b2t);
        next[i] = x[i] - eta * mhat / (std::sqrt(vhat) + params.eps);
    }
    return next;
}

UpdateRule::UpdateRule(UpdateRuleKind kind, std::size_t dim, double eta, AdamParams adam)
    : kind_(kind), eta_(eta), adam_params_(adam), adam_state_(dim) {
    if (!(eta > 0.0)) throw std::invalid_argument("UpdateRule: eta must be positive");
}

Vector UpdateRule::step(const Vector& x, const Vector& g) {
    switch (kind_) {
        case UpdateRuleKind::sgd: return sgd_step(x, g, eta_);
        case UpdateRuleKind::signsgd: return signsgd_step(x, g, eta_);
        case UpdateRuleKind::adam: return adam_step(adam_state_, x, g, eta_, adam_params_);
    }
    throw std::logic_error("UpdateRule::step: unreachable");
}

} // namespace zorl
