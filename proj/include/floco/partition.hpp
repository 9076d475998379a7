#pragma once

#include "floco/numerics.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <vector>

namespace floco {

struct LabeledDataset {
  Eigen::MatrixXd features;  // N x d
  std::vector<int> labels;
  int classes = 0;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  Eigen::Index dim() const { return features.cols(); }

  /// Rows selected by `indices`, in that order.
  LabeledDataset subset(const std::vector<std::size_t>& indices) const;
  std::vector<std::size_t> class_counts() const;
};

struct PartitionResult {
  std::vector<std::vector<std::size_t>> client_indices;

  std::size_t clients() const { return client_indices.size(); }
  std::size_t total() const;
};

/// Generative Gaussian-blob model: one centroid per class on a sphere of
/// radius `radius`, isotropic within-class standard deviation `spread`.
struct BlobModel {
  Eigen::MatrixXd centroids;  // L x d
  double spread = 0.0;

  static BlobModel random(int classes, Eigen::Index dim, double spread, RngStream& rng,
                          double radius = 1.0);
  /// n_per_class samples of every class, grouped by class.
  LabeledDataset draw(std::size_t n_per_class, RngStream& rng) const;
};

LabeledDataset synth_blobs(int classes, Eigen::Index dim, std::size_t n_per_class, double spread,
                           RngStream& rng);

/// Label-skew partition: each client draws phi_k ~ Dir_L(beta), gets a budget
/// of N/K samples and label quotas round(phi_k * N/K) (largest remainder),
/// filled without replacement from per-class pools. Unfilled budget is then
/// topped up from whatever remains, in order of the client's preferences.
PartitionResult partition_dirichlet(const LabeledDataset& data, int clients, double beta,
                                    RngStream& rng);

/// Group partition: clients form `groups` equal groups, group g's primary
/// classes are the g-th contiguous block of L/groups classes. Each client
/// takes q% of its N/K budget from its primary classes and the rest
/// uniformly from the other classes.
PartitionResult partition_fivefold(const LabeledDataset& data, int clients, double q_percent,
                                   int groups, RngStream& rng);

/// Largest-remainder rounding of `weights` (nonnegative) to integers that sum
/// to `total`. Ties go to the lower index.
std::vector<std::size_t> largest_remainder(const std::vector<double>& weights, std::size_t total);

struct ClientSplit {
  LabeledDataset train;
  LabeledDataset test;
};

/// Stratified holdout of round(test_fraction * n) samples per client; at
/// least one sample always stays in train.
ClientSplit split_train_test(const LabeledDataset& client_data, double test_fraction,
                             RngStream& rng);

/// counts[k][c]: samples of class c held by client k.
std::vector<std::vector<std::size_t>> label_histograms(const LabeledDataset& data,
                                                       const PartitionResult& partition);

/// CSV with header client_id,class_id,count (one row per client and class).
void write_partition_csv(std::ostream& out, const LabeledDataset& data,
                         const PartitionResult& partition);

}  // namespace floco
