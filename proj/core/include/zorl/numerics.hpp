#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace zorl {

/// Counter-based deterministic random stream. The same seed always yields the
/// same draw sequence, on any platform, and child streams derived from
/// (seed, label) are independent across labels. Streams are cheap values;
/// derive children before distributing work so no two tasks share one.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64();

    /// Uniform draw in [0, 1), 53-bit resolution.
    double next_uniform();

    /// Standard normal via Box-Muller; consumes exactly two u64 draws.
    double next_gaussian();

    /// Uniform integer in [0, bound). bound must be positive.
    std::uint64_t next_below(std::uint64_t bound);

    /// Derived stream for an independent purpose. Deterministic in (seed, label)
    /// and unaffected by how far this stream has advanced.
    RngStream child(std::uint64_t label) const;
    RngStream child(std::string_view label) const;

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

/// Dense real vector. Constructors reject non-finite entries; dimension is
/// fixed at creation.
class Vector {
public:
    Vector() = default;
    /// Zero vector of dimension n.
    explicit Vector(std::size_t n) : values_(n, 0.0) {}
    Vector(std::initializer_list<double> init);
    explicit Vector(std::vector<double> values);

    static Vector zeros(std::size_t n) { return Vector(n); }
    /// Standard basis vector e_i of dimension n.
    static Vector unit(std::size_t n, std::size_t i);

    std::size_t size() const { return values_.size(); }
    double& operator[](std::size_t i) { return values_[i]; }
    const double& operator[](std::size_t i) const { return values_[i]; }

    const std::vector<double>& values() const { return values_; }
    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    auto begin() const { return values_.begin(); }
    auto end() const { return values_.end(); }
    auto begin() { return values_.begin(); }
    auto end() { return values_.end(); }

    bool operator==(const Vector& other) const = default;

private:
    std::vector<double> values_;
};

Vector operator+(const Vector& a, const Vector& b);
Vector operator-(const Vector& a, const Vector& b);
Vector operator-(const Vector& a);
Vector operator*(double s, const Vector& a);
Vector operator*(const Vector& a, double s);
Vector& operator+=(Vector& a, const Vector& b);
Vector& operator-=(Vector& a, const Vector& b);

/// Dense row-major matrix with finite entries and fixed shape.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Matrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    const double& operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

    const std::vector<double>& values() const { return values_; }

    /// A * v
    Vector matvec(const Vector& v) const;
    /// A^T * v
    Vector matvec_transposed(const Vector& v) const;
    /// Column j as a vector.
    Vector column(std::size_t j) const;
    void set_column(std::size_t j, const Vector& v);

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

/// d independent standard-normal draws. Throws std::invalid_argument for d = 0.
Vector gaussian_vector(RngStream& rng, std::size_t d);

/// Inner product; dimensions must agree.
double dot(const Vector& a, const Vector& b);

struct Norms {
    double l1;
    double l2;
};

Norms norms(const Vector& a);

} // namespace zorl
