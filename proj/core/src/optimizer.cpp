#include "zorl/optimizer.hpp"

#include <chrono>
#include <stdexcept>

namespace zorl {

RunTrace run(const Objective& objective, SamplingPolicy& policy, const RunConfig& cfg, RngStream rng) {
    if (cfg.iterations == 0) throw std::invalid_argument("run: iterations must be at least 1");
    cfg.estimator.validate();
    const std::size_t d = objective.dim();
    if (cfg.x0 && cfg.x0->size() != d) throw std::invalid_argument("run: x0 dimension mismatch");

    const auto start = std::chrono::steady_clock::now();

    Vector x = cfg.x0 ? *cfg.x0 : Vector::zeros(d);
    OptimizerState state(d, cfg.feature_layout.history, cfg.iterations);
    UpdateRule rule(cfg.update, d, cfg.eta, cfg.adam);

    RngStream directions_rng = rng.child("directions");
    RngStream probe_rng = rng.child("probes");

    RunTrace trace;
    trace.records.reserve(cfg.iterations);
    trace.final_x = x;

    const bool probing = cfg.probe_every > 0 && cfg.probe_repeats >= 2;
    for (std::size_t k = 0; k < cfg.iterations; ++k) {
        IterationRecord record;
        record.iteration = k;

        try {
            if (probing && k % cfg.probe_every == 0) {
                RngStream pr = probe_rng.child(k);
                const EstimatorStats stats =
                    estimator_statistics(x, objective, policy, cfg.estimator, cfg.probe_repeats, pr, &state);
                record.probe_variance = stats.variance;
                record.probe_cosine = stats.cosine_to_true;
                trace.probe_queries += stats.queries_used;
            }

            const auto directions = policy.propose(state, cfg.estimator.q, directions_rng);
            const GradientEstimate est = estimate_gradient(x, objective, directions, cfg.estimator);

            const Vector x_next = rule.step(x, est.g);
            const Vector delta = x_next - x;

            record.f_value = est.base_value;
            record.grad_norm = norms(est.g).l2;
            record.cumulative_queries = static_cast<std::uint64_t>(k + 1) * (cfg.estimator.q + 1);
            trace.records.push_back(record);

            state.record_step(est.g, est.base_value, delta, k);
            policy.observe_gradient(est.g);
            x = x_next;
        } catch (const EvaluationError& err) {
            trace.final_x = x;
            trace.complete = false;
            trace.abort_reason = err.what();
            trace.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            return trace;
        }
    }

    trace.final_x = x;
    trace.complete = true;
    trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return trace;
}

} // namespace zorl
