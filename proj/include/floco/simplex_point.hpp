#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace floco {

/// Barycentric coordinate in the standard simplex: M+1 nonnegative entries
/// summing to one.
class SimplexPoint {
 public:
  static constexpr double kClampTolerance = 1e-12;
  static constexpr double kSumTolerance = 1e-9;

  SimplexPoint() : coords_(Eigen::VectorXd::Ones(1)) {}

  /// Validates and clamps entries in [-1e-12, 0) to zero. Throws on anything
  /// else outside the simplex.
  explicit SimplexPoint(Eigen::VectorXd coords) : coords_(std::move(coords)) {
    if (coords_.size() == 0) {
      throw std::invalid_argument("SimplexPoint: empty coordinate vector");
    }
    for (Eigen::Index i = 0; i < coords_.size(); ++i) {
      const double v = coords_[i];
      if (!std::isfinite(v) || v < -kClampTolerance) {
        throw std::invalid_argument("SimplexPoint: entry " + std::to_string(i) +
                                    " = " + std::to_string(v) + " is not a valid weight");
      }
      if (v < 0.0) coords_[i] = 0.0;
    }
    if (std::abs(coords_.sum() - 1.0) > kSumTolerance) {
      throw std::invalid_argument("SimplexPoint: coordinates sum to " +
                                  std::to_string(coords_.sum()));
    }
  }

  static SimplexPoint uniform(Eigen::Index M) {
    return SimplexPoint(Eigen::VectorXd::Constant(M + 1, 1.0 / static_cast<double>(M + 1)));
  }

  static SimplexPoint vertex(Eigen::Index M, Eigen::Index m) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(M + 1);
    c[m] = 1.0;
    return SimplexPoint(std::move(c));
  }

  const Eigen::VectorXd& coords() const { return coords_; }
  double operator[](Eigen::Index i) const { return coords_[i]; }
  Eigen::Index size() const { return coords_.size(); }
  /// Simplex dimension M (one less than the number of coordinates).
  Eigen::Index dim() const { return coords_.size() - 1; }

  double l1_distance(const SimplexPoint& other) const {
    return (coords_ - other.coords_).lpNorm<1>();
  }

 private:
  Eigen::VectorXd coords_;
};

}  // namespace floco
