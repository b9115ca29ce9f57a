#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "semlog/errors.hpp"

namespace semlog {

inline constexpr double kNormEpsilon = 1e-12;
inline constexpr double kUnitTolerance = 1e-6;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> a) {
  for (double x : a) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

// L2-normalized copy, or an empty vector when the norm is below kNormEpsilon.
inline std::vector<double> normalized_or_empty(std::span<const double> a) {
  const double n = l2_norm(a);
  if (!(n > kNormEpsilon)) return {};
  std::vector<double> out(a.begin(), a.end());
  for (double& x : out) x /= n;
  return out;
}

// A real vector whose L2 norm is within kUnitTolerance of one.
class UnitVector {
 public:
  UnitVector() = default;

  // Wraps already-normalized values; throws ContractViolation otherwise.
  static UnitVector from_unit(std::vector<double> values) {
    const double n = l2_norm(values);
    if (values.empty() || !all_finite(values) || std::abs(n - 1.0) > kUnitTolerance) {
      throw ContractViolation("vector is not unit-norm (norm " + std::to_string(n) + ")");
    }
    UnitVector u;
    u.values_ = std::move(values);
    return u;
  }

  // Divides by the L2 norm; throws DegenerateEmbedding below kNormEpsilon.
  static UnitVector normalize(std::span<const double> values) {
    auto out = normalized_or_empty(values);
    if (out.empty()) throw DegenerateEmbedding("cannot normalize a near-zero vector");
    UnitVector u;
    u.values_ = std::move(out);
    return u;
  }

  std::span<const double> values() const { return values_; }
  std::size_t dim() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double dot(const UnitVector& o) const { return semlog::dot(values_, o.values_); }

  friend bool operator==(const UnitVector&, const UnitVector&) = default;

 private:
  std::vector<double> values_;
};

}  // namespace semlog
