#include "zorl/policies.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace zorl {

OptimizerState::OptimizerState(std::size_t dim, std::size_t history, std::size_t total_iterations)
    : dim_(dim), history_(history), total_iterations_(total_iterations) {
    if (dim_ == 0) throw std::invalid_argument("OptimizerState: dimension must be positive");
    if (history_ == 0) throw std::invalid_argument("OptimizerState: history must be positive");
}

void OptimizerState::record_step(const Vector& gradient, double f_value, const Vector& delta,
                                 std::size_t iteration) {
    if (gradient.size() != dim_ || delta.size() != dim_)
        throw std::invalid_argument("OptimizerState::record_step: dimension mismatch");
    Entry entry;
    entry.gradient = gradient;
    entry.grad_norm = norms(gradient).l2;
    entry.f_value = f_value;
    entry.f_delta = grad_history_.empty() ? 0.0 : grad_history_.back().f_value - f_value;
    entry.iteration = iteration;
    grad_history_.push_back(std::move(entry));
    delta_history_.push_back(delta);
    while (grad_history_.size() > history_) grad_history_.pop_front();
    while (delta_history_.size() > history_) delta_history_.pop_front();
    f_current_ = f_value;
    iteration_ = iteration + 1;
}

Matrix featurize(const OptimizerState& state, const FeatureLayout& layout) {
    const std::size_t m = layout.grad_slots;
    Matrix features(layout.history, layout.channels());

    const auto& history = state.gradient_history();
    const std::size_t filled = std::min<std::size_t>(history.size(), layout.history);
    const double k_total = static_cast<double>(std::max<std::size_t>(state.total_iterations(), 1));

    for (std::size_t r = 0; r < filled; ++r) {
        // Newest entry in the last row; zero padding stays at the front.
        const auto& entry = history[history.size() - filled + r];
        const std::size_t row = layout.history - filled + r;
        const Vector& g = entry.gradient;
        const double norm = entry.grad_norm;

        if (norm > 1e-12) {
            if (g.size() <= m) {
                for (std::size_t j = 0; j < g.size(); ++j) features(row, j) = g[j] / norm;
            } else {
                std::vector<std::size_t> idx(g.size());
                std::iota(idx.begin(), idx.end(), 0);
                std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m), idx.end(),
                                  [&](std::size_t a, std::size_t b) {
                                      return std::abs(g[a]) != std::abs(g[b]) ? std::abs(g[a]) > std::abs(g[b])
                                                                              : a < b;
                                  });
                for (std::size_t j = 0; j < m; ++j) features(row, j) = g[idx[j]] / norm;
            }
        }
        features(row, m) = norm;
        features(row, m + 1) = entry.f_delta;
        features(row, m + 2) = static_cast<double>(entry.iteration) / k_total;
    }
    for (std::size_t r = 0; r < layout.history; ++r) {
        features(r, m + 3) = state.f_current();
    }
    return features;
}

std::vector<Vector> standard_gaussian_propose(std::size_t dim, std::size_t q, RngStream& rng) {
    if (q == 0) throw std::invalid_argument("standard_gaussian_propose: q must be positive");
    std::vector<Vector> directions;
    directions.reserve(q);
    for (std::size_t i = 0; i < q; ++i) directions.push_back(gaussian_vector(rng, dim));
    return directions;
}

std::vector<Vector> StandardGaussianPolicy::propose(const OptimizerState& state, std::size_t q, RngStream& rng) {
    return standard_gaussian_propose(state.dim(), q, rng);
}

// ---------------------------------------------------------------------------
// Guided ES

GuidedSubspace::GuidedSubspace(std::size_t dim, std::size_t max_rank)
    : dim_(dim), max_rank_(max_rank), basis_(dim, 0) {
    if (dim_ == 0) throw std::invalid_argument("GuidedSubspace: dimension must be positive");
    if (max_rank_ == 0) throw std::invalid_argument("GuidedSubspace: max rank must be positive");
}

void GuidedSubspace::rebuild() {
    // Modified Gram-Schmidt with a second orthogonalization pass; dependent
    // columns are dropped.
    std::vector<Vector> columns;
    for (const Vector& raw : recent_) {
        Vector v = raw;
        for (int pass = 0; pass < 2; ++pass) {
            for (const Vector& u : columns) v -= dot(v, u) * u;
        }
        const double residual = norms(v).l2;
        if (residual > 1e-8 * std::max(1.0, norms(raw).l2)) {
            columns.push_back((1.0 / residual) * v);
        }
    }
    basis_ = Matrix(dim_, columns.size());
    for (std::size_t j = 0; j < columns.size(); ++j) basis_.set_column(j, columns[j]);
}

GuidedSubspace update_subspace(GuidedSubspace subspace, const Vector& new_gradient) {
    if (new_gradient.size() != subspace.dim_)
        throw std::invalid_argument("update_subspace: dimension mismatch");
    if (norms(new_gradient).l2 > 0.0) {
        subspace.recent_.push_back(new_gradient);
        while (subspace.recent_.size() > subspace.max_rank_) subspace.recent_.pop_front();
        subspace.rebuild();
    }
    return subspace;
}

std::vector<Vector> guided_es_propose(const GuidedSubspace& subspace, std::size_t q, RngStream& rng,
                                      double alpha) {
    if (q == 0) throw std::invalid_argument("guided_es_propose: q must be positive");
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("guided_es_propose: alpha outside [0,1]");
    const std::size_t d = subspace.dim();
    const std::size_t k = subspace.rank();

    std::vector<Vector> directions;
    directions.reserve(q);
    if (k == 0) {
        // No surrogate-gradient subspace yet: isotropic N(0, I/d).
        const double scale = 1.0 / std::sqrt(static_cast<double>(d));
        for (std::size_t i = 0; i < q; ++i) directions.push_back(scale * gaussian_vector(rng, d));
        return directions;
    }

    const double iso_scale = std::sqrt(alpha / static_cast<double>(d));
    const double sub_scale = std::sqrt((1.0 - alpha) / static_cast<double>(k));
    for (std::size_t i = 0; i < q; ++i) {
        Vector u = iso_scale * gaussian_vector(rng, d);
        const Vector eps2 = gaussian_vector(rng, k);
        const Matrix& basis = subspace.basis();
        for (std::size_t r = 0; r < d; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < k; ++c) s += basis(r, c) * eps2[c];
            u[r] += sub_scale * s;
        }
        directions.push_back(std::move(u));
    }
    return directions;
}

GuidedEsPolicy::GuidedEsPolicy(std::size_t dim, std::size_t max_rank, double alpha)
    : subspace_(dim, max_rank), alpha_(alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("GuidedEsPolicy: alpha outside [0,1]");
}

std::vector<Vector> GuidedEsPolicy::propose(const OptimizerState& state, std::size_t q, RngStream& rng) {
    (void)state;
    return guided_es_propose(subspace_, q, rng, alpha_);
}

void GuidedEsPolicy::observe_gradient(const Vector& gradient) {
    subspace_ = update_subspace(std::move(subspace_), gradient);
}

// ---------------------------------------------------------------------------
// RL actor

std::vector<Vector> guided_directions(const Vector& action, double beta, std::size_t dim, std::size_t q,
                                      RngStream& rng) {
    if (q == 0) throw std::invalid_argument("guided_directions: q must be positive");
    if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("guided_directions: beta outside [0,1)");
    if (action.size() != dim) throw std::invalid_argument("guided_directions: action dimension mismatch");
    for (double v : action) {
        if (!std::isfinite(v)) throw std::invalid_argument("guided_directions: non-finite actor output");
    }

    // The noise draws below happen in the same order as plain Gaussian
    // sampling, so beta = 0 (or a degenerate action) reproduces it exactly.
    std::vector<Vector> directions = standard_gaussian_propose(dim, q, rng);

    const double action_norm = norms(action).l2;
    if (beta == 0.0 || action_norm < 1e-12) return directions;

    const double guide_scale = beta * std::sqrt(static_cast<double>(dim)) / action_norm;
    const double noise_scale = std::sqrt(1.0 - beta * beta);
    for (Vector& u : directions) {
        for (std::size_t j = 0; j < dim; ++j) u[j] = guide_scale * action[j] + noise_scale * u[j];
    }
    return directions;
}

nn::Batch features_to_batch(const Matrix& features, const nn::DataShape& shape) {
    if (shape.size() != features.rows() * features.cols())
        throw std::invalid_argument("features_to_batch: size mismatch");
    nn::Batch batch = nn::Batch::zeros(1, shape);
    if (shape.flat) {
        // Row-major: history rows concatenated.
        std::size_t i = 0;
        for (std::size_t r = 0; r < features.rows(); ++r)
            for (std::size_t c = 0; c < features.cols(); ++c) batch.data[i++] = features(r, c);
    } else {
        // Conv layout: channels outer, history positions inner.
        if (shape.channels != features.cols() || shape.length != features.rows())
            throw std::invalid_argument("features_to_batch: conv shape mismatch");
        for (std::size_t c = 0; c < features.cols(); ++c)
            for (std::size_t r = 0; r < features.rows(); ++r)
                batch.data[c * features.rows() + r] = features(r, c);
    }
    return batch;
}

RlActorPolicy::RlActorPolicy(nn::Network actor, FeatureLayout layout, double beta)
    : actor_(std::move(actor)), layout_(layout), beta_(beta) {
    if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("RlActorPolicy: beta outside [0,1)");
    const std::size_t expected = layout_.history * layout_.channels();
    if (actor_.spec.input.size() != expected)
        throw std::invalid_argument("RlActorPolicy: actor input does not match featurized state");
}

Vector RlActorPolicy::action(const OptimizerState& state) const {
    const Matrix features = featurize(state, layout_);
    const nn::Batch input = features_to_batch(features, actor_.spec.input);
    const nn::Batch out = nn::forward_eval(actor_.spec, actor_.params, input);
    return Vector(out.data);
}

std::vector<Vector> RlActorPolicy::propose(const OptimizerState& state, std::size_t q, RngStream& rng) {
    const Vector a = action(state);
    if (a.size() != state.dim())
        throw std::invalid_argument("RlActorPolicy: actor output does not match problem dimension");
    return guided_directions(a, beta_, state.dim(), q, rng);
}

} // namespace zorl
