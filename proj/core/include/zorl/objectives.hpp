#pragma once

#include "zorl/nn.hpp"
#include "zorl/numerics.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace zorl {

/// A black-box function handle: evaluation counter, dimension, and an optional
/// analytic gradient used only for diagnostics. Every evaluate() increments
/// the query counter by exactly one; evaluation is deterministic for fixed x.
class Objective {
public:
    using EvalFn = std::function<double(const Vector&)>;
    using GradFn = std::function<Vector(const Vector&)>;

    Objective(std::string name, std::size_t dim, EvalFn eval, GradFn analytic_gradient = {});

    double evaluate(const Vector& x) const;
    double operator()(const Vector& x) const { return evaluate(x); }

    bool has_analytic_gradient() const { return static_cast<bool>(grad_); }
    Vector analytic_gradient(const Vector& x) const;

    const std::string& name() const { return name_; }
    std::size_t dim() const { return dim_; }
    std::uint64_t query_count() const { return counter_->load(); }
    void reset_query_count() { counter_->store(0); }

private:
    std::string name_;
    std::size_t dim_;
    EvalFn eval_;
    GradFn grad_;
    // Owned behind a pointer so the handle stays movable; concurrent trials
    // evaluating a shared objective increment it atomically.
    std::unique_ptr<std::atomic<std::uint64_t>> counter_;
};

// ---------------------------------------------------------------------------
// Two-class datasets (LIBSVM text format)

struct Dataset {
    std::string name;
    std::vector<Vector> features; // all of dimension dim
    std::vector<int> labels;      // exactly -1 or +1
    std::size_t dim = 0;

    std::size_t size() const { return features.size(); }
};

/// Parses "label idx:val idx:val ..." lines with 1-based indices into dense
/// vectors of the maximum observed dimension. Two-class label encodings other
/// than {-1,+1} are mapped onto {-1,+1} (smaller value -> -1).
Dataset load_libsvm(const std::filesystem::path& path);

/// Inverse of load_libsvm on the parsed representation (non-zero features only).
void save_libsvm(const Dataset& data, const std::filesystem::path& path);

/// Mean squared residual between labels and sigmoid scores:
/// (1/n) * sum_i (y_i - 1/(1+exp(-w.x_i)))^2.
double least_squares_loss(const Vector& w, const Dataset& data);

/// Objective wrapping least_squares_loss over a shared dataset, with the
/// analytic gradient attached for diagnostics.
Objective make_least_squares_objective(std::shared_ptr<const Dataset> data);

// ---------------------------------------------------------------------------
// Image sets (IDX binary format) and the victim classifier

struct ImageSet {
    std::vector<Vector> images; // pixels in [0,1]
    std::vector<int> labels;    // class indices 0..K-1
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return images.size(); }
    std::size_t pixel_count() const { return rows * cols; }
    std::size_t num_classes() const;
};

/// IDX loader; magic numbers 0x00000803 (images) / 0x00000801 (labels),
/// big-endian dimensions, pixel bytes scaled by 1/255.
ImageSet load_idx_images(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Writes an ImageSet back out in IDX format (pixels rounded to bytes).
void save_idx_images(const ImageSet& set, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path);

/// K-class scorer queried by attacks through scores() only.
class VictimClassifier {
public:
    VictimClassifier(nn::Network net);

    /// Prediction scores for all K classes (logits; finite for valid input).
    std::vector<double> scores(const Vector& x) const;
    int predict(const Vector& x) const;

    std::size_t input_dim() const { return net_.spec.input.size(); }
    std::size_t num_classes() const { return net_.spec.output_size(); }

    void save(const std::filesystem::path& path) const;
    static VictimClassifier load(const std::filesystem::path& path);

private:
    nn::Network net_;
};

struct VictimTrainOptions {
    std::size_t hidden = 32;
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 1e-2;
    double holdout_fraction = 0.2;
    double accuracy_floor = 0.8;
};

/// Trains a small multinomial classifier on the images. Fails loudly when
/// training diverges or held-out accuracy ends below the configured floor.
VictimClassifier train_victim(const ImageSet& data, const VictimTrainOptions& opts, RngStream& rng);

/// Held-out accuracy helper (exposed for tests and the CLI).
double classification_accuracy(const VictimClassifier& victim, const ImageSet& data,
                               const std::vector<std::size_t>& indices);

// ---------------------------------------------------------------------------
// Black-box attack loss

struct AttackInstance {
    Vector x0;          // original input, every coordinate in [0,1]
    std::size_t true_label = 0;
    double c = 0.1;     // distortion weight
    int p = 1;          // norm order (1 or 2)
};

/// Hinge attack term plus c-weighted p-norm distortion:
/// max{F_t0(x) - max_{j != t0} F_j(x), 0} + c * ||x - x0||_p.
double attack_loss(const Vector& x, const VictimClassifier& victim, const AttackInstance& inst);

Objective make_attack_objective(std::shared_ptr<const VictimClassifier> victim, AttackInstance inst);

// ---------------------------------------------------------------------------
// Synthetic quadratics

/// f(x) = 1/2 (x - x*)^T diag(spectrum) (x - x*), analytic gradient attached.
Objective quadratic_objective(Vector spectrum, Vector x_star);

/// f(x) = 1/2 (x - x*)^T A (x - x*) for symmetric positive definite A.
Objective quadratic_objective(Matrix a, Vector x_star);

/// Random member of the quadratic family: spectrum uniform in [0.1, 10],
/// diagonal A in the standard basis, x* standard normal.
Objective synthetic_quadratic(std::size_t d, RngStream& rng);

/// Random symmetric positive definite matrix with spectrum in [0.1, 10] and a
/// random orthogonal eigenbasis.
Matrix random_spd_matrix(std::size_t d, RngStream& rng);

} // namespace zorl
