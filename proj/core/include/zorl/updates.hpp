#pragma once

#include "zorl/numerics.hpp"

#include <string>

namespace zorl {

enum class UpdateRuleKind { sgd, signsgd, adam };

UpdateRuleKind parse_update_rule(const std::string& name); // "sgd" | "signsgd" | "adam"
std::string update_rule_name(UpdateRuleKind kind);

/// x - eta * g
Vector sgd_step(const Vector& x, const Vector& g, double eta);

/// x - eta * sign(g), with sign(0) = 0.
Vector signsgd_step(const Vector& x, const Vector& g, double eta);

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First/second-moment state for the ZO Adam update rule.
struct AdamVectorState {
    Vector m;
    Vector v;
    std::uint64_t t = 0;

    explicit AdamVectorState(std::size_t dim) : m(dim), v(dim) {}
};

/// Bias-corrected Adam: m <- b1 m + (1-b1) g, v <- b2 v + (1-b2) g^2,
/// x <- x - eta * m_hat / (sqrt(v_hat) + eps). Mutates the state in place.
Vector adam_step(AdamVectorState& state, const Vector& x, const Vector& g, double eta,
                 const AdamParams& params = {});

/// One update-rule instance owned by a single optimizer run.
class UpdateRule {
public:
    UpdateRule(UpdateRuleKind kind, std::size_t dim, double eta, AdamParams adam = {});

    Vector step(const Vector& x, const Vector& g);

    UpdateRuleKind kind() const { return kind_; }
    double eta() const { return eta_; }

private:
    UpdateRuleKind kind_;
    double eta_;
    AdamParams adam_params_;
    AdamVectorState adam_state_;
};

} // namespace zorl
