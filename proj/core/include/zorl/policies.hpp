#pragma once

#include "zorl/nn.hpp"
#include "zorl/numerics.hpp"

#include <deque>
#include <memory>
#include <string_view>
#include <vector>

namespace zorl {

/// What the optimizer knows at iteration k: the latest base function value,
/// rings of the last H gradient estimates and parameter updates, and the
/// iteration counters. All stored vectors share the problem dimension.
class OptimizerState {
public:
    OptimizerState(std::size_t dim, std::size_t history, std::size_t total_iterations);

    struct Entry {
        Vector gradient;
        double grad_norm;
        double f_value;  // base value of the estimate that produced the gradient
        double f_delta;  // previous f_value minus this one (positive = improvement)
        std::size_t iteration;
    };

    /// Records one optimization step: the gradient estimate at x_k, its base
    /// value f(x_k), and the applied parameter update x_{k+1} - x_k.
    void record_step(const Vector& gradient, double f_value, const Vector& delta, std::size_t iteration);

    std::size_t dim() const { return dim_; }
    std::size_t history_capacity() const { return history_; }
    std::size_t total_iterations() const { return total_iterations_; }
    std::size_t iteration() const { return iteration_; }
    double f_current() const { return f_current_; }
    void set_f_current(double f) { f_current_ = f; }

    const std::deque<Entry>& gradient_history() const { return grad_history_; }
    const std::deque<Vector>& delta_history() const { return delta_history_; }

private:
    std::size_t dim_;
    std::size_t history_;
    std::size_t total_iterations_;
    std::size_t iteration_ = 0;
    double f_current_ = 0.0;
    std::deque<Entry> grad_history_;
    std::deque<Vector> delta_history_;
};

/// Layout of the feature image fed to the actor: H history rows (oldest
/// first, zero-padded at the front) by (grad_slots + 4) channels per row:
///   [0..m)  signed entries of the unit-normalized gradient estimate; the
///           identity embedding when d <= m, otherwise the m largest-magnitude
///           entries in descending magnitude order
///   [m]     gradient L2 norm
///   [m+1]   function-value delta realized by that step
///   [m+2]   iteration fraction k/K of that step
///   [m+3]   current function value (same in every row)
struct FeatureLayout {
    std::size_t history = 5;
    std::size_t grad_slots = 8;

    std::size_t channels() const { return grad_slots + 4; }
};

Matrix featurize(const OptimizerState& state, const FeatureLayout& layout);

/// Strategy producing the q perturbation directions consumed by the gradient
/// estimator. Implementations must return exactly q finite vectors of the
/// problem dimension.
class SamplingPolicy {
public:
    virtual ~SamplingPolicy() = default;

    virtual std::vector<Vector> propose(const OptimizerState& state, std::size_t q, RngStream& rng) = 0;

    /// Hook invoked by the optimizer after each gradient estimate; policies
    /// that track gradient history (Guided ES) update themselves here.
    virtual void observe_gradient(const Vector& gradient) { (void)gradient; }

    virtual std::string_view name() const = 0;
};

/// q independent draws from N(0, I_d); ignores the state entirely.
class StandardGaussianPolicy final : public SamplingPolicy {
public:
    std::vector<Vector> propose(const OptimizerState& state, std::size_t q, RngStream& rng) override;
    std::string_view name() const override { return "standard-gaussian"; }
};

std::vector<Vector> standard_gaussian_propose(std::size_t dim, std::size_t q, RngStream& rng);

/// Orthonormal basis of the most recent surrogate gradients. Raw gradients are
/// kept in a ring of at most max_rank entries; the basis is their span.
class GuidedSubspace {
public:
    GuidedSubspace(std::size_t dim, std::size_t max_rank);

    std::size_t dim() const { return dim_; }
    std::size_t rank() const { return basis_.cols(); }
    /// d x rank matrix with orthonormal columns (U^T U = I within 1e-10).
    const Matrix& basis() const { return basis_; }

    friend GuidedSubspace update_subspace(GuidedSubspace subspace, const Vector& new_gradient);

private:
    void rebuild();

    std::size_t dim_;
    std::size_t max_rank_;
    std::deque<Vector> recent_;
    Matrix basis_;
};

/// Appends a gradient (zero vectors are skipped), evicts the oldest entry
/// beyond capacity, and re-orthonormalizes. Linearly dependent directions are
/// dropped, so the rank never exceeds the number of independent inputs.
GuidedSubspace update_subspace(GuidedSubspace subspace, const Vector& new_gradient);

/// Samples u = sqrt(alpha/d) e1 + sqrt((1-alpha)/k) U e2 with e1 ~ N(0,I_d),
/// e2 ~ N(0,I_k). With an empty subspace, falls back to N(0, I_d / d).
std::vector<Vector> guided_es_propose(const GuidedSubspace& subspace, std::size_t q, RngStream& rng, double alpha);

class GuidedEsPolicy final : public SamplingPolicy {
public:
    GuidedEsPolicy(std::size_t dim, std::size_t max_rank, double alpha);

    std::vector<Vector> propose(const OptimizerState& state, std::size_t q, RngStream& rng) override;
    void observe_gradient(const Vector& gradient) override;
    std::string_view name() const override { return "guided-es"; }

    const GuidedSubspace& subspace() const { return subspace_; }

private:
    GuidedSubspace subspace_;
    double alpha_;
};

/// Blends a guiding direction into otherwise-Gaussian perturbations:
/// u_i = beta * sqrt(d) * a_hat + sqrt(1 - beta^2) * z_i, z_i ~ N(0, I_d),
/// where a_hat is the unit-normalized action. A (near-)zero action or beta = 0
/// falls back to plain standard Gaussian sampling, bit-identically.
std::vector<Vector> guided_directions(const Vector& action, double beta, std::size_t dim, std::size_t q,
                                      RngStream& rng);

/// Deterministic actor driving the sampling rule: the action is the guiding
/// direction produced from the featurized optimizer state.
class RlActorPolicy final : public SamplingPolicy {
public:
    RlActorPolicy(nn::Network actor, FeatureLayout layout, double beta);

    std::vector<Vector> propose(const OptimizerState& state, std::size_t q, RngStream& rng) override;
    std::string_view name() const override { return "rl-actor"; }

    /// Raw action for the current state (pre-normalization).
    Vector action(const OptimizerState& state) const;

    const nn::Network& actor() const { return actor_; }
    const FeatureLayout& layout() const { return layout_; }
    double beta() const { return beta_; }

private:
    nn::Network actor_;
    FeatureLayout layout_;
    double beta_;
};

/// Flattens a feature matrix into the batch layout a network expects
/// (channels become conv channels when the spec input is not flat).
nn::Batch features_to_batch(const Matrix& features, const nn::DataShape& shape);

} // namespace zorl
