#include "zorl/numerics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace zorl {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

void require_finite(const std::vector<double>& values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument(std::string(what) + ": non-finite entry");
        }
    }
}

} // namespace

std::uint64_t RngStream::next_u64() {
    ++counter_;
    return mix64(seed_ + counter_ * kGolden);
}

double RngStream::next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_gaussian() {
    // u1 in (0, 1] so the log is finite.
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("RngStream::next_below: bound must be positive");
    const unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * bound;
    return static_cast<std::uint64_t>(wide >> 64);
}

RngStream RngStream::child(std::uint64_t label) const {
    return RngStream(mix64(seed_ ^ mix64(label + 0xD1B54A32D192ED03ull)));
}

RngStream RngStream::child(std::string_view label) const {
    // FNV-1a over the label bytes.
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (char c : label) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ull;
    }
    return child(h);
}

Vector::Vector(std::initializer_list<double> init) : values_(init) {
    require_finite(values_, "Vector");
}

Vector::Vector(std::vector<double> values) : values_(std::move(values)) {
    require_finite(values_, "Vector");
}

Vector Vector::unit(std::size_t n, std::size_t i) {
    if (i >= n) throw std::invalid_argument("Vector::unit: index out of range");
    Vector e(n);
    e[i] = 1.0;
    return e;
}

namespace {
void check_same_dim(const Vector& a, const Vector& b, const char* op) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(std::string(op) + ": dimension mismatch (" +
                                    std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    }
}
} // namespace

Vector operator+(const Vector& a, const Vector& b) {
    check_same_dim(a, b, "Vector+");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Vector operator-(const Vector& a, const Vector& b) {
    check_same_dim(a, b, "Vector-");
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Vector operator-(const Vector& a) {
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = -a[i];
    return out;
}

Vector operator*(double s, const Vector& a) {
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
    return out;
}

Vector operator*(const Vector& a, double s) { return s * a; }

Vector& operator+=(Vector& a, const Vector& b) {
    check_same_dim(a, b, "Vector+=");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

Vector& operator-=(Vector& a, const Vector& b) {
    check_same_dim(a, b, "Vector-=");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
    return a;
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows * cols) {
        throw std::invalid_argument("Matrix: value count does not match shape");
    }
    require_finite(values_, "Matrix");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Vector Matrix::matvec(const Vector& v) const {
    if (v.size() != cols_) throw std::invalid_argument("Matrix::matvec: dimension mismatch");
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        double s = 0.0;
        const double* row = values_.data() + r * cols_;
        for (std::size_t c = 0; c < cols_; ++c) s += row[c] * v[c];
        out[r] = s;
    }
    return out;
}

Vector Matrix::matvec_transposed(const Vector& v) const {
    if (v.size() != rows_) throw std::invalid_argument("Matrix::matvec_transposed: dimension mismatch");
    Vector out(cols_);
    for (std::size_t r = 0; r < rows_; ++r) {
        const double* row = values_.data() + r * cols_;
        for (std::size_t c = 0; c < cols_; ++c) out[c] += row[c] * v[r];
    }
    return out;
}

Vector Matrix::column(std::size_t j) const {
    if (j >= cols_) throw std::invalid_argument("Matrix::column: index out of range");
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, j);
    return out;
}

void Matrix::set_column(std::size_t j, const Vector& v) {
    if (j >= cols_ || v.size() != rows_) throw std::invalid_argument("Matrix::set_column: shape mismatch");
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, j) = v[r];
}

Vector gaussian_vector(RngStream& rng, std::size_t d) {
    if (d == 0) throw std::invalid_argument("gaussian_vector: dimension must be positive");
    Vector out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = rng.next_gaussian();
    return out;
}

double dot(const Vector& a, const Vector& b) {
    check_same_dim(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Norms norms(const Vector& a) {
    double l1 = 0.0;
    double sq = 0.0;
    for (double v : a) {
        l1 += std::abs(v);
        sq += v * v;
    }
    return Norms{l1, std::sqrt(sq)};
}

} // namespace zorl
