#pragma once

#include "floco/model.hpp"
#include "floco/numerics.hpp"
#include "floco/partition.hpp"
#include "floco/simplex_point.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace floco {

struct RoundMetrics {
  int round = 0;
  double global_acc = 0.0;
  double mean_local_acc = 0.0;
  double global_ece = 0.0;
  double mean_local_ece = 0.0;
  double total_grad_variance = 0.0;
  double worst5_local_acc = 0.0;
};

/// Argmax with ties going to the lowest class index.
int argmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& row);

double accuracy(const Eigen::MatrixXd& probs, const std::vector<int>& labels);
double accuracy(const Predictor& predictor, const LabeledDataset& dataset);

/// Binned expected calibration error over `bins` equal-width confidence bins
/// on (0, 1]; confidence is the max class probability.
double ece(const Eigen::MatrixXd& probs, const std::vector<int>& labels, int bins = 10);

/// Mean cross-entropy of `probs` against `labels`.
double cross_entropy(const Eigen::MatrixXd& probs, const std::vector<int>& labels);

using AccuracyCurve = std::vector<std::pair<int, double>>;

struct TtaResult {
  double improvement = 0.0;
  /// Method already beats the target at its first evaluation.
  bool underlined = false;
  /// Method never reaches the target (improvement is 0).
  bool did_not_reach = false;
  int baseline_round = 0;
  int method_round = 0;
};

/// Rounds the baseline needs to reach its own best accuracy, divided by the
/// rounds the method needs to reach that same accuracy.
TtaResult tta_improvement(const AccuracyCurve& baseline, const AccuracyCurve& method);

/// Mean of the lowest ceil(fraction * K) accuracies.
double worst_fraction_accuracy(std::vector<double> local_accs, double fraction);

/// sum_k |dw_k - mean(dw)|^2
double total_gradient_variance(const std::vector<Eigen::VectorXd>& updates);

/// (1 / (M+1)) sum_m sum_k |dtheta_{m,k} - mean_k(dtheta_{m,k})|^2, with
/// updates[k][m] the update of endpoint m from client k.
double total_gradient_variance(const std::vector<std::vector<Eigen::VectorXd>>& updates);

struct SurfacePoint {
  enum class Tag { sample, center, vertex };
  SimplexPoint alpha;
  double loss = 0.0;
  double accuracy = 0.0;
  Tag tag = Tag::sample;
};

/// Loss and accuracy at n_points uniform simplex draws, followed by the
/// center and then every vertex in order.
std::vector<SurfacePoint> loss_surface_grid(const ModelState& model, const HeadEndpoints& head,
                                            const LabeledDataset& dataset, std::size_t n_points,
                                            RngStream& rng);
inline std::vector<SurfacePoint> loss_surface_grid(const ModelState& model,
                                                   const LabeledDataset& dataset,
                                                   std::size_t n_points, RngStream& rng) {
  return loss_surface_grid(model, model.head, dataset, n_points, rng);
}

const char* to_string(SurfacePoint::Tag tag);

/// Header alpha_0..alpha_M,loss,accuracy,tag.
void write_surface_csv(std::ostream& out, const std::vector<SurfacePoint>& surface);

/// Fixed-schema metrics CSV (9 significant digits, LF endings).
void write_metrics_csv(std::ostream& out, const std::vector<RoundMetrics>& rows);
std::vector<RoundMetrics> read_metrics_csv(std::istream& in);

/// "%.9g" formatting used by every CSV writer.
std::string format_real(double v);

}  // namespace floco
