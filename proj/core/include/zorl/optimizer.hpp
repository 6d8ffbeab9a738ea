#pragma once

#include "zorl/estimator.hpp"
#include "zorl/objectives.hpp"
#include "zorl/policies.hpp"
#include "zorl/updates.hpp"

#include <optional>
#include <string>
#include <vector>

namespace zorl {

struct RunConfig {
    std::size_t iterations = 200;
    EstimatorConfig estimator;
    UpdateRuleKind update = UpdateRuleKind::sgd;
    double eta = 0.1;
    AdamParams adam;
    std::optional<Vector> x0;     // zero-initialized when absent
    FeatureLayout feature_layout; // for state featurization
    /// Variance probes: at iterations k with k % probe_every == 0, run the
    /// estimator probe_repeats times at x_k without advancing the run. Probe
    /// queries are accounted separately from optimization queries. Probing is
    /// off when probe_every == 0; probe_repeats < 2 leaves the fields absent.
    std::size_t probe_every = 0;
    std::size_t probe_repeats = 0;
};

struct IterationRecord {
    std::size_t iteration = 0;
    double f_value = 0.0;   // base value f(x_k) of the estimate at this iterate
    double grad_norm = 0.0; // ||g_hat||_2
    std::optional<double> probe_variance;
    std::optional<double> probe_cosine;
    std::uint64_t cumulative_queries = 0; // optimization queries only: (k+1)(q+1)
};

struct RunTrace {
    std::vector<IterationRecord> records;
    Vector final_x;
    double wall_seconds = 0.0;
    bool complete = false;
    std::string abort_reason;            // set when complete == false
    std::uint64_t probe_queries = 0;     // queries spent on probes, kept out of the records
};

/// Algorithm loop: propose directions, estimate the gradient, apply the update
/// rule, K times. An objective evaluation failure aborts with the partial
/// trace flagged incomplete.
RunTrace run(const Objective& objective, SamplingPolicy& policy, const RunConfig& cfg, RngStream rng);

} // namespace zorl
