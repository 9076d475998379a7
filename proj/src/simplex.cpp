#include "floco/simplex.hpp"

#include <cmath>
#include <stdexcept>

namespace floco {

double assignment_energy(const std::vector<Eigen::VectorXd>& kappas, double z) {
  std::vector<Eigen::VectorXd> betas;
  betas.reserve(kappas.size());
  for (const auto& k : kappas) betas.push_back(project_to_scaled_simplex(k, z));
  return riesz_energy(betas);
}

ClientAssignment assign_client_representations(const std::vector<Eigen::VectorXd>& kappas) {
  if (kappas.empty()) throw std::invalid_argument("assign_client_representations: no clients");
  if (kappas.size() < 2) {
    throw std::invalid_argument("assign_client_representations: need at least 2 clients");
  }
  const Eigen::Index n = kappas.front().size();
  if (n == 0) throw std::invalid_argument("assign_client_representations: empty representation");
  for (const auto& k : kappas) {
    if (k.size() != n) {
      throw std::invalid_argument("assign_client_representations: dimension mismatch");
    }
  }

  ClientAssignment out;
  bool identical = true;
  for (const auto& k : kappas) identical = identical && (k == kappas.front());
  if (identical) {
    out.degenerate = true;
    out.z_hat = 1.0;
    out.alphas.assign(kappas.size(), SimplexPoint::uniform(n - 1));
    return out;
  }

  std::vector<double> energies(kZGridSize);
  for (int i = 1; i <= kZGridSize; ++i) energies[static_cast<std::size_t>(i - 1)] = assignment_energy(kappas, z_grid_value(i));
  // Once every projection is interior the energy no longer depends on z, so
  // values within rounding of the minimum count as ties.
  const double lowest = *std::min_element(energies.begin(), energies.end());
  int best = 1;
  while (energies[static_cast<std::size_t>(best - 1)] > lowest * (1.0 + kEnergyTieTolerance)) ++best;
  out.z_hat = z_grid_value(best);
  out.energy = energies[static_cast<std::size_t>(best - 1)];
  out.alphas.reserve(kappas.size());
  for (const auto& k : kappas) {
    Eigen::VectorXd beta = project_to_scaled_simplex(k, out.z_hat) / out.z_hat;
    out.alphas.emplace_back(std::move(beta));
  }
  return out;
}

Subregion make_subregion(const SimplexPoint& center, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("make_subregion: radius must be positive");
  return Subregion{center, std::min(rho, 2.0)};
}

Subregion whole_simplex(Eigen::Index M) { return Subregion{SimplexPoint::uniform(M), 2.0}; }

SubregionSampler::SubregionSampler(Subregion region, Mode initial)
    : region_(std::move(region)), mode_(initial) {
  region_.center.coords().maxCoeff(&pivot_);
}

void SubregionSampler::record(bool accepted) {
  ++trials_;
  if (accepted) ++accepted_;
}

bool SubregionSampler::try_simplex(RngStream& rng, SimplexPoint& out) {
  SimplexPoint candidate = sample_uniform_simplex(region_.dim(), rng);
  const bool ok = region_.center.l1_distance(candidate) <= region_.radius;
  record(ok);
  if (ok) out = std::move(candidate);
  return ok;
}

// Exact proposal in the hyperplane sum(d) = 0: the M coordinates other than
// the pivot are uniform in the M-dimensional L1 ball of radius rho and the
// pivot absorbs -sum. Coordinates whose center value is exactly zero can only
// move up, so their sign is forced positive; reflecting those coordinates
// keeps the proposal uniform over a superset of the target.
bool SubregionSampler::try_ball(RngStream& rng, SimplexPoint& out) {
  const Eigen::VectorXd& c = region_.center.coords();
  const Eigen::Index n = c.size();
  const double rho = region_.radius;

  Eigen::VectorXd e(n);
  for (Eigen::Index i = 0; i < n; ++i) e[i] = rng.exponential();
  const double total = e.sum();

  Eigen::VectorXd d(n);
  double free_l1 = 0.0;
  double free_sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i == pivot_) continue;
    double v = rho * e[i] / total;
    const bool negative = rng.uniform() < 0.5;
    if (negative && c[i] > 0.0) v = -v;
    d[i] = v;
    free_l1 += std::abs(v);
    free_sum += v;
  }
  d[pivot_] = -free_sum;

  bool ok = free_l1 + std::abs(free_sum) <= rho;
  Eigen::VectorXd alpha = c + d;
  for (Eigen::Index i = 0; i < n && ok; ++i) ok = alpha[i] >= 0.0;
  record(ok);
  if (!ok) return false;
  Eigen::Index arg = 0;
  alpha.maxCoeff(&arg);
  alpha[arg] += 1.0 - alpha.sum();
  out = SimplexPoint(std::move(alpha));
  return true;
}

SimplexPoint SubregionSampler::shrink_toward_center(RngStream& rng) {
  const SimplexPoint u = sample_uniform_simplex(region_.dim(), rng);
  const Eigen::VectorXd& c = region_.center.coords();
  const Eigen::VectorXd d = u.coords() - c;
  const double dist = d.lpNorm<1>();
  double t = 1.0;
  const double M = static_cast<double>(std::max<Eigen::Index>(region_.dim(), 1));
  if (dist > region_.radius) t = region_.radius * std::pow(rng.uniform(), 1.0 / M) / dist;
  // c + t (u - c) is a convex combination, hence inside the simplex.
  Eigen::VectorXd alpha = (1.0 - t) * c + t * u.coords();
  alpha = alpha.cwiseMax(0.0);
  alpha /= alpha.sum();
  return SimplexPoint(std::move(alpha));
}

SimplexPoint SubregionSampler::draw(RngStream& rng) {
  if (region_.dim() == 0) return SimplexPoint(Eigen::VectorXd::Ones(1));
  if (region_.is_whole_simplex()) return sample_uniform_simplex(region_.dim(), rng);

  SimplexPoint out;
  while (true) {
    const bool starved = trials_ >= kMinTrials &&
                         static_cast<double>(accepted_) <
                             kMinAcceptance * static_cast<double>(trials_);
    if (starved) {
      mode_ = mode_ == Mode::simplex_rejection ? Mode::ball_rejection : Mode::approximate;
      trials_ = 0;
      accepted_ = 0;
    }
    switch (mode_) {
      case Mode::simplex_rejection:
        if (try_simplex(rng, out)) return out;
        break;
      case Mode::ball_rejection:
        if (try_ball(rng, out)) return out;
        break;
      case Mode::approximate:
        return shrink_toward_center(rng);
    }
  }
}

SimplexPoint sample_uniform_subregion(const Subregion& region, RngStream& rng) {
  SubregionSampler sampler(region);
  return sampler.draw(rng);
}

}  // namespace floco
