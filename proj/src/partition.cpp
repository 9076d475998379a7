#include "floco/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace floco {

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
  LabeledDataset out;
  out.classes = classes;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) =
        features.row(static_cast<Eigen::Index>(indices[i]));
    out.labels.push_back(labels[indices[i]]);
  }
  return out;
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

std::size_t PartitionResult::total() const {
  std::size_t n = 0;
  for (const auto& c : client_indices) n += c.size();
  return n;
}

BlobModel BlobModel::random(int classes, Eigen::Index dim, double spread, RngStream& rng,
                            double radius) {
  if (classes < 2 || dim < 2) throw std::invalid_argument("synth_blobs: need L >= 2 and d >= 2");
  BlobModel model;
  model.spread = spread;
  model.centroids.resize(classes, dim);
  for (int c = 0; c < classes; ++c) {
    Eigen::VectorXd v(dim);
    do {
      for (Eigen::Index j = 0; j < dim; ++j) v[j] = rng.normal();
    } while (v.norm() < 1e-8);
    model.centroids.row(c) = (radius / v.norm()) * v.transpose();
  }
  return model;
}

LabeledDataset BlobModel::draw(std::size_t n_per_class, RngStream& rng) const {
  const auto L = static_cast<int>(centroids.rows());
  const Eigen::Index d = centroids.cols();
  LabeledDataset out;
  out.classes = L;
  out.features.resize(static_cast<Eigen::Index>(n_per_class) * L, d);
  out.labels.reserve(n_per_class * static_cast<std::size_t>(L));
  Eigen::Index row = 0;
  for (int c = 0; c < L; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      for (Eigen::Index j = 0; j < d; ++j) {
        out.features(row, j) = centroids(c, j) + spread * rng.normal();
      }
      out.labels.push_back(c);
    }
  }
  return out;
}

LabeledDataset synth_blobs(int classes, Eigen::Index dim, std::size_t n_per_class, double spread,
                           RngStream& rng) {
  return BlobModel::random(classes, dim, spread, rng).draw(n_per_class, rng);
}

std::vector<std::size_t> largest_remainder(const std::vector<double>& weights,
                                           std::size_t total) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(weights.size(), 0);
  if (weights.empty() || total == 0) return out;
  if (!(wsum > 0.0)) throw std::invalid_argument("largest_remainder: weights sum to zero");
  std::vector<double> remainder(weights.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] / wsum * static_cast<double>(total);
    out[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - std::floor(exact);
    assigned += out[i];
  }
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++out[order[i % order.size()]];
  return out;
}

namespace {

std::vector<std::vector<std::size_t>> class_pools(const LabeledDataset& data, RngStream& rng) {
  std::vector<std::vector<std::size_t>> pools(static_cast<std::size_t>(data.classes));
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    pools[static_cast<std::size_t>(data.labels[i])].push_back(i);
  }
  for (auto& p : pools) shuffle(p, rng);
  return pools;
}

std::vector<std::size_t> equal_budgets(std::size_t n, int clients) {
  return largest_remainder(std::vector<double>(static_cast<std::size_t>(clients), 1.0), n);
}

std::size_t take(std::vector<std::size_t>& pool, std::size_t count, std::vector<std::size_t>& dst) {
  const std::size_t n = std::min(count, pool.size());
  for (std::size_t i = 0; i < n; ++i) {
    dst.push_back(pool.back());
    pool.pop_back();
  }
  return n;
}

// Each client in turn takes its quotas; afterwards clients short of their
// budget are topped up from the remaining pools in order of `preference`.
PartitionResult fill_quotas(std::vector<std::vector<std::size_t>>& pools,
                            const std::vector<std::vector<std::size_t>>& quotas,
                            const std::vector<std::size_t>& budgets,
                            const std::vector<std::vector<std::size_t>>& preference) {
  const std::size_t K = quotas.size();
  PartitionResult result;
  result.client_indices.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t c = 0; c < pools.size(); ++c) {
      take(pools[c], quotas[k][c], result.client_indices[k]);
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    auto& mine = result.client_indices[k];
    for (std::size_t c : preference[k]) {
      if (mine.size() >= budgets[k]) break;
      take(pools[c], budgets[k] - mine.size(), mine);
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (result.client_indices[k].empty()) {
      throw std::runtime_error("partition: client " + std::to_string(k) + " received no samples");
    }
    std::sort(result.client_indices[k].begin(), result.client_indices[k].end());
  }
  return result;
}

}  // namespace

PartitionResult partition_dirichlet(const LabeledDataset& data, int clients, double beta,
                                    RngStream& rng) {
  if (clients < 1) throw std::invalid_argument("partition_dirichlet: need at least one client");
  if (!(beta > 0.0)) throw std::invalid_argument("partition_dirichlet: beta must be positive");
  if (static_cast<std::size_t>(clients) > data.size()) {
    throw std::invalid_argument("partition_dirichlet: more clients than samples");
  }
  const auto K = static_cast<std::size_t>(clients);
  const auto L = static_cast<std::size_t>(data.classes);
  auto pools = class_pools(data, rng);
  const auto budgets = equal_budgets(data.size(), clients);

  std::vector<std::vector<std::size_t>> quotas(K), preference(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> phi(L);
    double total = 0.0;
    for (std::size_t c = 0; c < L; ++c) total += (phi[c] = rng.gamma(beta));
    if (!(total > 0.0)) {
      // All gamma draws underflowed; any single class is a valid extreme draw.
      phi[rng.uniform_index(L)] = 1.0;
    }
    quotas[k] = largest_remainder(phi, budgets[k]);
    preference[k].resize(L);
    std::iota(preference[k].begin(), preference[k].end(), 0);
    std::stable_sort(preference[k].begin(), preference[k].end(),
                     [&](std::size_t a, std::size_t b) { return phi[a] > phi[b]; });
  }
  return fill_quotas(pools, quotas, budgets, preference);
}

PartitionResult partition_fivefold(const LabeledDataset& data, int clients, double q_percent,
                                   int groups, RngStream& rng) {
  if (groups < 1 || clients < 1 || clients % groups != 0) {
    throw std::invalid_argument("partition_fivefold: clients must be divisible by groups");
  }
  if (data.classes % groups != 0) {
    throw std::invalid_argument("partition_fivefold: classes must be divisible by groups");
  }
  if (q_percent < 0.0 || q_percent > 100.0) {
    throw std::invalid_argument("partition_fivefold: q must lie in [0, 100]");
  }
  if (static_cast<std::size_t>(clients) > data.size()) {
    throw std::invalid_argument("partition_fivefold: more clients than samples");
  }
  const auto K = static_cast<std::size_t>(clients);
  const auto L = static_cast<std::size_t>(data.classes);
  const std::size_t per_group_clients = K / static_cast<std::size_t>(groups);
  const std::size_t block = L / static_cast<std::size_t>(groups);
  auto pools = class_pools(data, rng);
  const auto budgets = equal_budgets(data.size(), clients);

  auto primary = [&](std::size_t k, std::size_t c) {
    const std::size_t first = (k / per_group_clients) * block;
    return c >= first && c < first + block;
  };
  std::vector<std::vector<std::size_t>> quotas(K, std::vector<std::size_t>(L, 0)), preference(K);
  std::vector<std::size_t> rest(K, 0);
  std::vector<std::vector<bool>> topped(K, std::vector<bool>(L, false));
  std::vector<long long> supply(L);
  for (std::size_t c = 0; c < L; ++c) supply[c] = static_cast<long long>(pools[c].size());

  // Primary quotas, then the even floor share of the non-primary quota.
  for (std::size_t k = 0; k < K; ++k) {
    const auto split = largest_remainder({q_percent, 100.0 - q_percent}, budgets[k]);
    std::vector<double> prim_w(L, 0.0);
    for (std::size_t c = 0; c < L; ++c) prim_w[c] = primary(k, c) ? 1.0 : 0.0;
    if (split[0] > 0) quotas[k] = largest_remainder(prim_w, split[0]);
    rest[k] = split[1];
    if (block < L) {
      const std::size_t share = split[1] / (L - block);
      for (std::size_t c = 0; c < L; ++c) {
        if (!primary(k, c)) quotas[k][c] = share;
      }
      rest[k] -= share * (L - block);
    }
    for (std::size_t c = 0; c < L; ++c) supply[c] -= static_cast<long long>(quotas[k][c]);
    for (std::size_t c = 0; c < L; ++c) if (primary(k, c)) preference[k].push_back(c);
    for (std::size_t c = 0; c < L; ++c) if (!primary(k, c)) preference[k].push_back(c);
  }
  // Leftover units, one per client per pass, go to the non-primary class with
  // the most unclaimed samples so per-class demand tracks per-class supply.
  if (block < L) {
    for (bool any = true; any;) {
      any = false;
      for (std::size_t k = 0; k < K; ++k) {
        if (rest[k] == 0) continue;
        std::size_t best = L;
        for (std::size_t c = 0; c < L; ++c) {
          if (primary(k, c) || topped[k][c]) continue;
          if (best == L || supply[c] > supply[best]) best = c;
        }
        ++quotas[k][best];
        topped[k][best] = true;
        --supply[best];
        --rest[k];
        any = true;
      }
    }
  }
  return fill_quotas(pools, quotas, budgets, preference);
}

ClientSplit split_train_test(const LabeledDataset& client_data, double test_fraction,
                             RngStream& rng) {
  if (client_data.empty()) throw std::invalid_argument("split_train_test: empty client data");
  const auto L = static_cast<std::size_t>(client_data.classes);
  std::vector<std::vector<std::size_t>> by_class(L);
  for (std::size_t i = 0; i < client_data.size(); ++i) {
    by_class[static_cast<std::size_t>(client_data.labels[i])].push_back(i);
  }
  std::vector<double> weights(L);
  for (std::size_t c = 0; c < L; ++c) weights[c] = static_cast<double>(by_class[c].size());
  std::size_t n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(client_data.size())));
  n_test = std::min(n_test, client_data.size() - 1);
  const auto per_class = largest_remainder(weights, n_test);

  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t c = 0; c < L; ++c) {
    shuffle(by_class[c], rng);
    for (std::size_t i = 0; i < by_class[c].size(); ++i) {
      (i < per_class[c] ? test_idx : train_idx).push_back(by_class[c][i]);
    }
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return ClientSplit{client_data.subset(train_idx), client_data.subset(test_idx)};
}

std::vector<std::vector<std::size_t>> label_histograms(const LabeledDataset& data,
                                                       const PartitionResult& partition) {
  std::vector<std::vector<std::size_t>> h(partition.clients(),
                                          std::vector<std::size_t>(
                                              static_cast<std::size_t>(data.classes), 0));
  for (std::size_t k = 0; k < partition.clients(); ++k) {
    for (std::size_t i : partition.client_indices[k]) {
      ++h[k][static_cast<std::size_t>(data.labels[i])];
    }
  }
  return h;
}

void write_partition_csv(std::ostream& out, const LabeledDataset& data,
                         const PartitionResult& partition) {
  const auto h = label_histograms(data, partition);
  out << "client_id,class_id,count\n";
  for (std::size_t k = 0; k < h.size(); ++k) {
    for (std::size_t c = 0; c < h[k].size(); ++c) out << k << ',' << c << ',' << h[k][c] << '\n';
  }
}

}  // namespace floco
