#include "floco/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace floco {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix_key(std::uint64_t master_seed, const StreamKey& key) {
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ key.round);
  h = splitmix64(h ^ (key.client * 0x632be59bd9b4e019ULL));
  h = splitmix64(h ^ static_cast<std::uint64_t>(key.purpose));
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed, StreamKey key) {
  const std::uint64_t base = mix_key(master_seed, key);
  std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                    static_cast<std::uint32_t>(splitmix64(base)),
                    static_cast<std::uint32_t>(splitmix64(base) >> 32)};
  engine_.seed(seq);
}

double RngStream::uniform() {
  // 53 random bits -> [0, 1)
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t RngStream::uniform_index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  // Rejection to avoid modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r = engine_();
  while (r >= limit) r = engine_();
  return static_cast<std::size_t>(r % n);
}

double RngStream::normal() {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(engine_);
}

double RngStream::exponential() {
  // 1 - u lies in (0, 1], so the log is finite.
  return -std::log1p(-uniform());
}

double RngStream::gamma(double shape) {
  std::gamma_distribution<double> dist(shape, 1.0);
  return dist(engine_);
}

bool all_finite(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return v.allFinite();
}

std::vector<Eigen::VectorXd> pca_project(const std::vector<Eigen::VectorXd>& rows,
                                         Eigen::Index target_dims) {
  if (rows.size() < 2) throw std::invalid_argument("pca_project: need at least 2 rows");
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = rows.front().size();
  if (target_dims < 0 || d < target_dims) {
    throw std::invalid_argument("pca_project: target_dims exceeds row length");
  }
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (rows[static_cast<std::size_t>(i)].size() != d) {
      throw std::invalid_argument("pca_project: rows have different lengths");
    }
    X.row(i) = rows[static_cast<std::size_t>(i)].transpose();
  }
  const Eigen::RowVectorXd mean = X.colwise().mean();
  X.rowwise() -= mean;

  // Principal directions as columns of `dirs`, sorted by decreasing variance.
  const Eigen::Index available = std::min(target_dims, std::min(n, d));
  Eigen::MatrixXd dirs = Eigen::MatrixXd::Zero(d, target_dims);
  Eigen::VectorXd variances = Eigen::VectorXd::Zero(target_dims);
  if (n > d) {
    const Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    for (Eigen::Index j = 0; j < available; ++j) {
      dirs.col(j) = es.eigenvectors().col(d - 1 - j);
      variances[j] = es.eigenvalues()[d - 1 - j];
    }
  } else {
    const Eigen::MatrixXd gram = X * X.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    for (Eigen::Index j = 0; j < available; ++j) {
      const double lambda = es.eigenvalues()[n - 1 - j];
      variances[j] = lambda / static_cast<double>(n - 1);
      Eigen::VectorXd v = X.transpose() * es.eigenvectors().col(n - 1 - j);
      const double norm = v.norm();
      if (norm > 1e-12 * std::max(1.0, std::sqrt(std::abs(es.eigenvalues()[n - 1])))) {
        dirs.col(j) = v / norm;
      }
    }
  }

  // Zero-variance directions carry no information; leave them zero so that
  // degenerate inputs project to exact zeros.
  const double scale = variances.size() > 0 ? std::max(variances.maxCoeff(), 0.0) : 0.0;
  for (Eigen::Index j = 0; j < target_dims; ++j) {
    if (variances[j] <= 1e-14 * std::max(scale, 1e-300)) {
      dirs.col(j).setZero();
      continue;
    }
    Eigen::Index arg = 0;
    dirs.col(j).cwiseAbs().maxCoeff(&arg);
    if (dirs(arg, j) < 0.0) dirs.col(j) = -dirs.col(j);
  }

  const Eigen::MatrixXd scores = X * dirs;
  std::vector<Eigen::VectorXd> out;
  out.reserve(rows.size());
  for (Eigen::Index i = 0; i < n; ++i) out.emplace_back(scores.row(i).transpose());
  return out;
}

SimplexPoint sample_uniform_simplex(Eigen::Index M, RngStream& rng) {
  if (M < 0) throw std::invalid_argument("sample_uniform_simplex: negative dimension");
  if (M == 0) return SimplexPoint(Eigen::VectorXd::Ones(1));
  Eigen::VectorXd e(M + 1);
  for (Eigen::Index i = 0; i <= M; ++i) e[i] = rng.exponential();
  const double total = e.sum();
  e /= total;
  // Put the rounding residue on the largest entry so the sum is 1 to the ulp.
  Eigen::Index arg = 0;
  e.maxCoeff(&arg);
  e[arg] += 1.0 - e.sum();
  return SimplexPoint(std::move(e));
}

Eigen::VectorXd finite_diff_gradient(const ScalarFunction& f, const Eigen::VectorXd& x,
                                     double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_gradient: step must be positive");
  Eigen::VectorXd grad(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw std::domain_error("finite_diff_gradient: non-finite function value");
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace floco
