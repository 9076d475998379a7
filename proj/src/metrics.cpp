#include "floco/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace floco {

int argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  int best = 0;
  for (Eigen::Index c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = static_cast<int>(c);
  }
  return best;
}

double accuracy(const Eigen::MatrixXd& probs, const std::vector<int>& labels) {
  if (labels.empty()) throw std::invalid_argument("accuracy: empty dataset");
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows()) {
    throw std::invalid_argument("accuracy: label count does not match predictions");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (argmax_row(probs.row(static_cast<Eigen::Index>(i))) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double accuracy(const Predictor& predictor, const LabeledDataset& dataset) {
  if (dataset.empty()) throw std::invalid_argument("accuracy: empty dataset");
  return accuracy(predictor.probabilities(dataset.features), dataset.labels);
}

double ece(const Eigen::MatrixXd& probs, const std::vector<int>& labels, int bins) {
  if (bins < 1) throw std::invalid_argument("ece: need at least one bin");
  if (labels.empty()) throw std::invalid_argument("ece: empty dataset");
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows()) {
    throw std::invalid_argument("ece: label count does not match predictions");
  }
  std::vector<double> conf_sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> hits(static_cast<std::size_t>(bins), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = probs.row(static_cast<Eigen::Index>(i));
    if (!row.allFinite() || row.minCoeff() < -1e-12 || std::abs(row.sum() - 1.0) > 1e-6) {
      throw std::invalid_argument("ece: row " + std::to_string(i) + " is not a probability vector");
    }
    const int pred = argmax_row(row);
    const double conf = row[pred];
    int b = static_cast<int>(std::ceil(conf * bins)) - 1;
    b = std::clamp(b, 0, bins - 1);
    conf_sum[static_cast<std::size_t>(b)] += conf;
    hits[static_cast<std::size_t>(b)] += pred == labels[i] ? 1.0 : 0.0;
    ++count[static_cast<std::size_t>(b)];
  }
  const auto n = static_cast<double>(labels.size());
  double total = 0.0;
  for (std::size_t b = 0; b < count.size(); ++b) {
    if (count[b] == 0) continue;
    const auto nb = static_cast<double>(count[b]);
    total += (nb / n) * std::abs(hits[b] / nb - conf_sum[b] / nb);
  }
  return total;
}

double cross_entropy(const Eigen::MatrixXd& probs, const std::vector<int>& labels) {
  if (labels.empty()) throw std::invalid_argument("cross_entropy: empty dataset");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = probs(static_cast<Eigen::Index>(i), labels[i]);
    total -= std::log(std::max(p, 1e-300));
  }
  return total / static_cast<double>(labels.size());
}

namespace {

// First evaluation round whose accuracy reaches `target`, or -1.
int first_reaching(const AccuracyCurve& curve, double target) {
  for (const auto& [round, acc] : curve) {
    if (acc >= target) return round;
  }
  return -1;
}

}  // namespace

TtaResult tta_improvement(const AccuracyCurve& baseline, const AccuracyCurve& method) {
  if (baseline.empty() || method.empty()) throw std::invalid_argument("tta_improvement: empty curve");
  double target = baseline.front().second;
  for (const auto& p : baseline) target = std::max(target, p.second);

  TtaResult r;
  r.baseline_round = first_reaching(baseline, target);
  r.method_round = first_reaching(method, target);
  if (r.method_round < 0) {
    r.did_not_reach = true;
    r.improvement = 0.0;
    return r;
  }
  if (method.front().second > target) r.underlined = true;
  if (r.method_round <= 0) throw std::invalid_argument("tta_improvement: rounds must be positive");
  r.improvement = static_cast<double>(r.baseline_round) / static_cast<double>(r.method_round);
  return r;
}

double worst_fraction_accuracy(std::vector<double> local_accs, double fraction) {
  if (local_accs.empty()) throw std::invalid_argument("worst_fraction_accuracy: empty list");
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("worst_fraction_accuracy: fraction must lie in (0, 1]");
  }
  // Guard the ceiling against 0.05 * 20 = 1.0000000000000002 style noise.
  const double scaled = fraction * static_cast<double>(local_accs.size());
  auto count = static_cast<std::size_t>(std::ceil(scaled - 1e-9));
  count = std::clamp<std::size_t>(count, 1, local_accs.size());
  std::sort(local_accs.begin(), local_accs.end());
  const double sum = std::accumulate(local_accs.begin(),
                                     local_accs.begin() + static_cast<std::ptrdiff_t>(count), 0.0);
  return sum / static_cast<double>(count);
}

double total_gradient_variance(const std::vector<Eigen::VectorXd>& updates) {
  if (updates.size() < 2) throw std::invalid_argument("total_gradient_variance: need >= 2 updates");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(updates.front().size());
  for (const auto& u : updates) {
    if (u.size() != mean.size()) throw std::invalid_argument("total_gradient_variance: shape mismatch");
    mean += u;
  }
  mean /= static_cast<double>(updates.size());
  double total = 0.0;
  for (const auto& u : updates) total += (u - mean).squaredNorm();
  return total;
}

double total_gradient_variance(const std::vector<std::vector<Eigen::VectorXd>>& updates) {
  if (updates.size() < 2) throw std::invalid_argument("total_gradient_variance: need >= 2 updates");
  const std::size_t endpoints = updates.front().size();
  if (endpoints == 0) throw std::invalid_argument("total_gradient_variance: no endpoints");
  double total = 0.0;
  std::vector<Eigen::VectorXd> per_endpoint(updates.size());
  for (std::size_t m = 0; m < endpoints; ++m) {
    for (std::size_t k = 0; k < updates.size(); ++k) {
      if (updates[k].size() != endpoints) {
        throw std::invalid_argument("total_gradient_variance: endpoint count mismatch");
      }
      per_endpoint[k] = updates[k][m];
    }
    total += total_gradient_variance(per_endpoint);
  }
  return total / static_cast<double>(endpoints);
}

std::vector<SurfacePoint> loss_surface_grid(const ModelState& model, const HeadEndpoints& head,
                                            const LabeledDataset& dataset, std::size_t n_points,
                                            RngStream& rng) {
  if (dataset.empty()) throw std::invalid_argument("loss_surface_grid: empty dataset");
  const Eigen::Index M = head.M();
  std::vector<SurfacePoint> out;
  out.reserve(n_points + 1 + static_cast<std::size_t>(M + 1));
  auto evaluate = [&](SimplexPoint alpha, SurfacePoint::Tag tag) {
    const Eigen::MatrixXd probs =
        net_forward(model.arch, params_at(model, head, alpha), dataset.features);
    out.push_back(SurfacePoint{std::move(alpha), cross_entropy(probs, dataset.labels),
                               accuracy(probs, dataset.labels), tag});
  };
  for (std::size_t i = 0; i < n_points; ++i) {
    evaluate(sample_uniform_simplex(M, rng), SurfacePoint::Tag::sample);
  }
  evaluate(SimplexPoint::uniform(M), SurfacePoint::Tag::center);
  for (Eigen::Index m = 0; m <= M; ++m) evaluate(SimplexPoint::vertex(M, m), SurfacePoint::Tag::vertex);
  return out;
}

const char* to_string(SurfacePoint::Tag tag) {
  switch (tag) {
    case SurfacePoint::Tag::sample: return "sample";
    case SurfacePoint::Tag::center: return "center";
    case SurfacePoint::Tag::vertex: return "vertex";
  }
  return "sample";
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void write_surface_csv(std::ostream& out, const std::vector<SurfacePoint>& surface) {
  if (surface.empty()) return;
  const Eigen::Index n = surface.front().alpha.size();
  for (Eigen::Index i = 0; i < n; ++i) out << "alpha_" << i << ',';
  out << "loss,accuracy,tag\n";
  for (const auto& p : surface) {
    for (Eigen::Index i = 0; i < n; ++i) out << format_real(p.alpha[i]) << ',';
    out << format_real(p.loss) << ',' << format_real(p.accuracy) << ',' << to_string(p.tag) << '\n';
  }
}

namespace {
constexpr const char* kMetricsHeader =
    "round,global_acc,mean_local_acc,global_ece,mean_local_ece,total_grad_variance,"
    "worst5_local_acc";
}

void write_metrics_csv(std::ostream& out, const std::vector<RoundMetrics>& rows) {
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) {
    out << r.round << ',' << format_real(r.global_acc) << ',' << format_real(r.mean_local_acc)
        << ',' << format_real(r.global_ece) << ',' << format_real(r.mean_local_ece) << ','
        << format_real(r.total_grad_variance) << ',' << format_real(r.worst5_local_acc) << '\n';
  }
}

std::vector<RoundMetrics> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw std::runtime_error("metrics CSV: unexpected header");
  }
  std::vector<RoundMetrics> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw std::runtime_error("metrics CSV: malformed row '" + line + "'");
    RoundMetrics r;
    r.round = std::stoi(cells[0]);
    r.global_acc = std::stod(cells[1]);
    r.mean_local_acc = std::stod(cells[2]);
    r.global_ece = std::stod(cells[3]);
    r.mean_local_ece = std::stod(cells[4]);
    r.total_grad_variance = std::stod(cells[5]);
    r.worst5_local_acc = std::stod(cells[6]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace floco
