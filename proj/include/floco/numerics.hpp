#pragma once

#include "floco/simplex_point.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace floco {

/// Purpose tags for seeded random streams. Every consumer of randomness
/// draws from its own stream so that adding draws in one place never shifts
/// another.
enum class StreamPurpose : std::uint64_t {
  model_init = 1,
  data = 2,
  global_test = 3,
  partition = 4,
  split = 5,
  participants = 6,
  batches = 7,
  alpha = 8,
  finetune_batches = 9,
  finetune_alpha = 10,
  surface = 11,
  generic = 12,
};

struct StreamKey {
  std::uint64_t round = 0;
  std::uint64_t client = 0;
  StreamPurpose purpose = StreamPurpose::generic;
};

/// Deterministic random stream derived from (master seed, round, client,
/// purpose). Equal keys produce equal sequences regardless of which thread
/// owns the stream.
class RngStream {
 public:
  using engine_type = std::mt19937_64;

  RngStream(std::uint64_t master_seed, StreamKey key);
  explicit RngStream(std::uint64_t master_seed)
      : RngStream(master_seed, StreamKey{}) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, n).
  std::size_t uniform_index(std::size_t n);
  double normal();
  /// Unit-rate exponential.
  double exponential();
  double gamma(double shape);

  engine_type& engine() { return engine_; }

 private:
  engine_type engine_;
};

/// In-place Fisher-Yates shuffle driven by the stream.
template <typename T>
void shuffle(std::vector<T>& values, RngStream& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(values[i - 1], values[j]);
  }
}

/// Projects rows onto their top `target_dims` principal directions of the
/// mean-centered data (ordered by decreasing variance). Each direction is
/// sign-fixed so that its largest-magnitude entry is positive. Directions
/// that do not exist (fewer rows than target_dims + 1) are zero-padded.
///
/// Uses the covariance eigenproblem when rows outnumber columns and the
/// equivalent Gram-matrix eigenproblem otherwise.
std::vector<Eigen::VectorXd> pca_project(const std::vector<Eigen::VectorXd>& rows,
                                         Eigen::Index target_dims);

/// Uniform draw from the standard simplex via M+1 normalized unit
/// exponentials.
SimplexPoint sample_uniform_simplex(Eigen::Index M, RngStream& rng);

using ScalarFunction = std::function<double(const Eigen::VectorXd&)>;

/// Central differences, one coordinate at a time.
Eigen::VectorXd finite_diff_gradient(const ScalarFunction& f, const Eigen::VectorXd& x,
                                     double h);

bool all_finite(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace floco
