#pragma once

#include "floco/numerics.hpp"
#include "floco/simplex_point.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace floco {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Euclidean projection of kappa onto the scaled simplex {beta >= 0, sum(beta) = z}.
///
/// Solves the dual for the threshold lambda with [kappa - lambda]_+ summing to
/// z. Bisection on [min(kappa) - z, max(kappa)] brackets lambda; the active
/// set it identifies is then polished with the closed-form threshold
/// (sum of active entries - z) / |active| until the set is stable.
template <typename Derived>
Vec<typename Derived::Scalar> project_to_scaled_simplex(const Eigen::MatrixBase<Derived>& kappa,
                                                        typename Derived::Scalar z) {
  using Scalar = typename Derived::Scalar;
  if (!(z > Scalar(0))) throw std::invalid_argument("project_to_scaled_simplex: z must be > 0");
  if (kappa.size() == 0) throw std::invalid_argument("project_to_scaled_simplex: empty input");
  if (!kappa.allFinite()) throw std::invalid_argument("project_to_scaled_simplex: non-finite input");

  const Vec<Scalar> k = kappa;
  // Already feasible up to rounding: the projection is the point itself.
  const Scalar tol = Scalar(4) * Eigen::NumTraits<Scalar>::epsilon() * Scalar(k.size()) * z;
  if (k.minCoeff() >= Scalar(0) && std::abs(k.sum() - z) <= tol) return k;
  auto mass = [&](Scalar lambda) { return (k.array() - lambda).max(Scalar(0)).sum(); };

  Scalar lo = k.minCoeff() - z;  // mass(lo) >= n*z >= z
  Scalar hi = k.maxCoeff();      // mass(hi) == 0
  for (int it = 0; it < 200 && hi - lo >= Scalar(1e-12); ++it) {
    const Scalar mid = lo + (hi - lo) / Scalar(2);
    if (mass(mid) > z) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  Scalar lambda = lo + (hi - lo) / Scalar(2);

  for (int it = 0; it < 64; ++it) {
    Scalar active_sum = 0;
    Eigen::Index active = 0;
    for (Eigen::Index i = 0; i < k.size(); ++i) {
      if (k[i] > lambda) {
        active_sum += k[i];
        ++active;
      }
    }
    if (active == 0) break;
    const Scalar next = (active_sum - z) / Scalar(active);
    if (next == lambda) break;
    bool same_set = true;
    for (Eigen::Index i = 0; i < k.size() && same_set; ++i) {
      same_set = (k[i] > lambda) == (k[i] > next);
    }
    lambda = next;
    if (same_set) break;
  }
  Vec<Scalar> beta = (k.array() - lambda).max(Scalar(0)).matrix();
  // Fold the rounding residual into the largest entry so the sum is z to
  // within an ulp.
  Eigen::Index top = 0;
  beta.maxCoeff(&top);
  beta[top] = std::max(Scalar(0), beta[top] + (z - beta.sum()));
  return beta;
}

/// Riesz s-energy with s = 2 over all ordered pairs i != j:
///   sum_{i != j} 1 / (|p_i - p_j|^2 + eps)
/// Terms are summed in sorted order, so the value does not depend on the
/// order of `points`.
template <typename Scalar>
Scalar riesz_energy(const std::vector<Vec<Scalar>>& points, Scalar eps = Scalar(1e-12)) {
  if (points.size() < 2) throw std::invalid_argument("riesz_energy: need at least 2 points");
  const Eigen::Index dim = points.front().size();
  std::vector<Scalar> terms;
  terms.reserve(points.size() * (points.size() - 1) / 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != dim) throw std::invalid_argument("riesz_energy: dimension mismatch");
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      terms.push_back(Scalar(1) / ((points[i] - points[j]).squaredNorm() + eps));
    }
  }
  std::sort(terms.begin(), terms.end());
  Scalar total = 0;
  for (Scalar t : terms) total += t;
  // Each unordered pair appears twice in the ordered double sum.
  return Scalar(2) * total;
}

struct ClientAssignment {
  std::vector<SimplexPoint> alphas;
  double z_hat = 0.0;
  double energy = 0.0;
  /// All inputs identical: every client was placed at the simplex center.
  bool degenerate = false;
};

inline constexpr int kZGridSize = 1000;
inline constexpr double kZGridStep = 0.001;
/// Relative energy gap below which two grid values count as equal.
inline constexpr double kEnergyTieTolerance = 1e-12;

/// Scale z of grid index i (1-based): 0.001, 0.002, ..., 1.000.
inline double z_grid_value(int i) { return kZGridStep * static_cast<double>(i); }

/// Energy of the scaled projections of `kappas` at scale z.
double assignment_energy(const std::vector<Eigen::VectorXd>& kappas, double z);

/// Places clients in the standard simplex: projects every kappa onto z times
/// the simplex for each grid value of z, keeps the z with the smallest Riesz
/// energy (smallest z among values within
/// kEnergyTieTolerance of the minimum) and rescales by 1/z.
ClientAssignment assign_client_representations(const std::vector<Eigen::VectorXd>& kappas);

/// L1 ball of radius `radius` around `center`, intersected with the simplex.
struct Subregion {
  SimplexPoint center;
  double radius = 2.0;

  Eigen::Index dim() const { return center.dim(); }
  bool contains(const SimplexPoint& alpha, double tol = 1e-9) const {
    return center.l1_distance(alpha) <= radius + tol;
  }
  bool is_whole_simplex() const { return radius >= 2.0; }
};

/// Radii above the simplex's L1 diameter (2) are clamped to 2.
Subregion make_subregion(const SimplexPoint& center, double rho);
Subregion whole_simplex(Eigen::Index M);

/// Uniform sampler over a subregion with online acceptance tracking.
///
/// Proposals start as uniform simplex draws rejected outside the ball. Once at
/// least kMinTrials proposals show an acceptance rate below kMinAcceptance the
/// sampler switches to proposals drawn uniformly from the L1 ball around the
/// center (still exact). If that also falls below the threshold it falls back
/// to shrinking a uniform simplex draw toward the center, which stays inside
/// the region but is not uniform; `approximate()` reports that.
class SubregionSampler {
 public:
  static constexpr double kMinAcceptance = 1e-3;
  static constexpr std::uint64_t kMinTrials = 1000;

  enum class Mode { simplex_rejection, ball_rejection, approximate };

  explicit SubregionSampler(Subregion region, Mode initial = Mode::simplex_rejection);

  SimplexPoint draw(RngStream& rng);

  const Subregion& region() const { return region_; }
  Mode mode() const { return mode_; }
  bool approximate() const { return mode_ == Mode::approximate; }

 private:
  bool try_simplex(RngStream& rng, SimplexPoint& out);
  bool try_ball(RngStream& rng, SimplexPoint& out);
  SimplexPoint shrink_toward_center(RngStream& rng);
  void record(bool accepted);

  Subregion region_;
  Mode mode_ = Mode::simplex_rejection;
  std::uint64_t trials_ = 0;
  std::uint64_t accepted_ = 0;
  Eigen::Index pivot_ = 0;
};

/// One uniform draw from the region (fresh sampler state).
SimplexPoint sample_uniform_subregion(const Subregion& region, RngStream& rng);

}  // namespace floco
