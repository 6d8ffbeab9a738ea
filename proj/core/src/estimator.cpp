#include "zorl/estimator.hpp"

#include <cmath>
#include <stdexcept>

namespace zorl {

void EstimatorConfig::validate() const {
    if (!(mu > 0.0)) throw std::invalid_argument("EstimatorConfig: mu must be positive");
    if (q == 0) throw std::invalid_argument("EstimatorConfig: q must be at least 1");
}

GradientEstimate estimate_gradient(const Vector& x, const Objective& f, std::span<const Vector> directions,
                                   const EstimatorConfig& cfg) {
    cfg.validate();
    if (directions.size() != cfg.q)
        throw std::invalid_argument("estimate_gradient: direction count does not match cfg.q");
    for (const Vector& u : directions) {
        if (u.size() != x.size()) throw std::invalid_argument("estimate_gradient: direction dimension mismatch");
    }

    const double base = f.evaluate(x);
    if (!std::isfinite(base))
        throw EvaluationError("estimate_gradient: non-finite objective value at base point", x);

    const std::size_t d = x.size();
    Vector g(d);
    for (const Vector& u : directions) {
        Vector probe = x;
        for (std::size_t j = 0; j < d; ++j) probe[j] += cfg.mu * u[j];
        const double fp = f.evaluate(probe);
        if (!std::isfinite(fp))
            throw EvaluationError("estimate_gradient: non-finite objective value at query point", probe);
        const double coeff = (fp - base) / (cfg.mu * static_cast<double>(cfg.q));
        for (std::size_t j = 0; j < d; ++j) g[j] += coeff * u[j];
    }

    GradientEstimate est;
    est.g = std::move(g);
    est.queries_used = cfg.q + 1;
    est.directions.assign(directions.begin(), directions.end());
    est.base_value = base;
    return est;
}

EstimatorStats estimator_statistics(const Vector& x, const Objective& f, SamplingPolicy& policy,
                                    const EstimatorConfig& cfg, std::size_t repeats, RngStream& rng,
                                    const OptimizerState* state) {
    cfg.validate();
    if (repeats < 2) throw std::invalid_argument("estimator_statistics: repeats must be at least 2");

    const std::size_t d = x.size();
    OptimizerState local_state(d, 1, 1);
    const OptimizerState& s = state ? *state : local_state;

    std::optional<Vector> true_grad;
    if (f.has_analytic_gradient()) true_grad = f.analytic_gradient(x);
    const double true_norm = true_grad ? norms(*true_grad).l2 : 0.0;

    Vector mean(d);
    Vector mean_sq(d);
    double cosine_sum = 0.0;
    std::size_t cosine_count = 0;
    std::uint64_t queries = 0;

    for (std::size_t m = 0; m < repeats; ++m) {
        const auto directions = policy.propose(s, cfg.q, rng);
        const GradientEstimate est = estimate_gradient(x, f, directions, cfg);
        queries += est.queries_used;
        for (std::size_t j = 0; j < d; ++j) {
            mean[j] += est.g[j];
            mean_sq[j] += est.g[j] * est.g[j];
        }
        if (true_grad && true_norm > 0.0) {
            const double gn = norms(est.g).l2;
            if (gn > 0.0) {
                cosine_sum += dot(est.g, *true_grad) / (gn * true_norm);
                ++cosine_count;
            }
        }
    }

    const double n = static_cast<double>(repeats);
    double trace = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        mean[j] /= n;
        trace += mean_sq[j] / n - mean[j] * mean[j];
    }

    EstimatorStats stats;
    stats.mean_g = std::move(mean);
    stats.variance = std::max(trace, 0.0) / static_cast<double>(d);
    if (true_grad && cosine_count > 0) cosine_sum /= static_cast<double>(cosine_count);
    if (true_grad) stats.cosine_to_true = cosine_count > 0 ? cosine_sum : 0.0;
    stats.queries_used = queries;
    return stats;
}

} // namespace zorl
