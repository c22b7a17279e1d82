#pragma once

// Normalized-vector and simplex primitives. Every routine here is a pure
// function of its arguments; the in-place kernels in `sight::kernel` are the
// single arithmetic path shared by the value-returning wrappers and the
// adapter's allocation-free step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sight/error.hpp"

namespace sight {

inline constexpr double kDefaultEpsilon = 1e-8;
inline constexpr double kUnitNormTolerance = 1e-5;
inline constexpr double kSimplexTolerance = 1e-6;

namespace kernel {

inline void require_finite(std::span<const double> v, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            fail(ErrorKind::InvalidInput,
                 std::string(what) + ": non-finite component at index " + std::to_string(i));
        }
    }
}

inline void require_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        fail(ErrorKind::Dimension, std::string(what) + ": size " + std::to_string(a) +
                                       " vs " + std::to_string(b));
    }
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

// out = v / (||v|| + eps). `out` may alias `v`. Returns the input norm.
inline double normalize(std::span<const double> v, std::span<double> out, double eps) {
    const double n = norm2(v);
    const double denom = n + eps;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / denom;
    return n;
}

// out = a / sum(a), or uniform when sum(a) <= eps. Returns false on the
// uniform fallback.
inline bool simplex_project(std::span<const double> a, std::span<double> out, double eps) {
    double s = 0.0;
    for (double x : a) s += x;
    if (!(s > eps)) {
        std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
        return false;
    }
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] / s;
    return true;
}

inline void softmax(std::span<const double> scores, double tau, std::span<double> out) {
    const double m = *std::max_element(scores.begin(), scores.end());
    double s = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = std::exp((scores[i] - m) / tau);
        s += out[i];
    }
    for (double& x : out) x /= s;
}

// Identical inputs give exactly 0, so the persistence limit is exact even
// though eps-normalized vectors fall short of unit length by ~eps.
inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
    if (std::equal(a.begin(), a.end(), b.begin(), b.end())) return 0.0;
    return std::clamp(1.0 - dot(a, b), 0.0, 2.0);
}

}  // namespace kernel

/// Lowest index attaining the maximum.
inline std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

/// l2-normalized feature direction. The all-zero vector is representable and
/// marks a degenerate direction (normalize of a zero input).
class UnitVector {
public:
    UnitVector() = default;

    /// Wraps values already produced by an eps-normalization; no check.
    static UnitVector trusted(std::vector<double> values) { return UnitVector(std::move(values)); }

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> span() const noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }
    bool is_degenerate() const noexcept {
        return std::all_of(values_.begin(), values_.end(), [](double x) { return x == 0.0; });
    }

    friend bool operator==(const UnitVector&, const UnitVector&) = default;

private:
    explicit UnitVector(std::vector<double> v) : values_(std::move(v)) {}
    std::vector<double> values_;
};

/// Point on the (K-1)-simplex.
class ProbVector {
public:
    ProbVector() = default;

    /// Validates non-negativity and |sum - 1| <= tol.
    static ProbVector from_values(std::vector<double> values, double tol = kSimplexTolerance) {
        if (values.size() < 2) {
            fail(ErrorKind::Dimension, "probability vector needs K >= 2, got " +
                                           std::to_string(values.size()));
        }
        double s = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!std::isfinite(values[i]) || values[i] < 0.0) {
                fail(ErrorKind::Validation,
                     "probability component " + std::to_string(i) + " is negative or non-finite");
            }
            s += values[i];
        }
        if (std::abs(s - 1.0) > tol) {
            fail(ErrorKind::Validation, "probabilities sum to " + std::to_string(s));
        }
        return ProbVector(std::move(values));
    }

    /// Wraps values produced by a simplex-preserving kernel; no check.
    static ProbVector trusted(std::vector<double> values) { return ProbVector(std::move(values)); }

    static ProbVector uniform(std::size_t k) {
        return ProbVector(std::vector<double>(k, 1.0 / static_cast<double>(k)));
    }

    static ProbVector one_hot(std::size_t k, std::size_t index) {
        std::vector<double> v(k, 0.0);
        v.at(index) = 1.0;
        return ProbVector(std::move(v));
    }

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    std::span<const double> span() const noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::size_t argmax() const { return sight::argmax(values_); }

    friend bool operator==(const ProbVector&, const ProbVector&) = default;

private:
    explicit ProbVector(std::vector<double> v) : values_(std::move(v)) {}
    std::vector<double> values_;
};

/// v / (||v|| + eps). The zero vector maps to itself.
inline UnitVector normalize(std::span<const double> v, double eps = kDefaultEpsilon) {
    if (v.empty()) fail(ErrorKind::Dimension, "normalize: empty vector");
    kernel::require_finite(v, "normalize");
    if (!(eps > 0.0)) fail(ErrorKind::Parameter, "normalize: eps must be positive");
    std::vector<double> out(v.size());
    kernel::normalize(v, out, eps);
    return UnitVector::trusted(std::move(out));
}

/// a / sum(a); uniform 1/K when sum(a) <= eps.
inline ProbVector simplex_project(std::span<const double> a, double eps = kDefaultEpsilon) {
    if (a.size() < 2) fail(ErrorKind::Dimension, "simplex_project: K must be >= 2");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i])) {
            fail(ErrorKind::InvalidInput, "simplex_project: non-finite component " + std::to_string(i));
        }
        if (a[i] < 0.0) {
            fail(ErrorKind::InvalidInput, "simplex_project: negative component " + std::to_string(i));
        }
    }
    std::vector<double> out(a.size());
    kernel::simplex_project(a, out, eps);
    return ProbVector::trusted(std::move(out));
}

/// 1 - a.b clamped to [0, 2]; exactly 0 for identical inputs.
inline double cosine_distance(const UnitVector& a, const UnitVector& b) {
    kernel::require_same_size(a.size(), b.size(), "cosine_distance");
    return kernel::cosine_distance(a.span(), b.span());
}

/// exp(s_i / tau) / sum_j exp(s_j / tau), max-shifted.
inline ProbVector softmax_temp(std::span<const double> scores, double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        fail(ErrorKind::Parameter, "softmax_temp: tau must be positive and finite");
    }
    if (scores.size() < 2) fail(ErrorKind::Dimension, "softmax_temp: K must be >= 2");
    kernel::require_finite(scores, "softmax_temp");
    std::vector<double> out(scores.size());
    kernel::softmax(scores, tau, out);
    return ProbVector::trusted(std::move(out));
}

}  // namespace sight
