#pragma once

#include "zorl/errors.hpp"
#include "zorl/numerics.hpp"
#include "zorl/objectives.hpp"
#include "zorl/policies.hpp"

#include <optional>
#include <span>
#include <vector>

namespace zorl {

struct EstimatorConfig {
    double mu = 0.01; // smoothing parameter, > 0
    std::size_t q = 20; // number of query directions, >= 1

    void validate() const;
};

struct GradientEstimate {
    Vector g;                        // estimated gradient, dim(x)
    std::uint64_t queries_used = 0;  // always q + 1
    std::vector<Vector> directions;  // the q directions used
    double base_value = 0.0;         // f(x), evaluated once
};

/// Thrown when the objective returns a non-finite value during estimation;
/// carries the offending query point.
class EvaluationError : public RunError {
public:
    EvaluationError(std::string what, Vector point) : RunError(std::move(what)), point_(std::move(point)) {}
    const Vector& point() const { return point_; }

private:
    Vector point_;
};

/// Forward-difference zeroth-order gradient oracle:
/// g = 1/(mu q) * sum_i [f(x + mu u_i) - f(x)] u_i.
/// f(x) is evaluated exactly once and reused across all q differences, so the
/// call costs exactly q + 1 queries.
GradientEstimate estimate_gradient(const Vector& x, const Objective& f, std::span<const Vector> directions,
                                   const EstimatorConfig& cfg);

struct EstimatorStats {
    Vector mean_g;
    /// Trace of the empirical covariance of the repeated estimates divided by
    /// the dimension (population convention).
    double variance = 0.0;
    /// Mean over repeats of cos(g_hat, analytic gradient); present only when
    /// the objective carries an analytic gradient.
    std::optional<double> cosine_to_true;
    std::uint64_t queries_used = 0;
};

/// Repeats the estimator M times at a fixed point with fresh directions from
/// the policy, reporting dispersion diagnostics. Requires repeats >= 2.
EstimatorStats estimator_statistics(const Vector& x, const Objective& f, SamplingPolicy& policy,
                                    const EstimatorConfig& cfg, std::size_t repeats, RngStream& rng,
                                    const OptimizerState* state = nullptr);

} // namespace zorl
