#pragma once

#include "floco/metrics.hpp"
#include "floco/model.hpp"
#include "floco/numerics.hpp"
#include "floco/partition.hpp"
#include "floco/simplex.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace floco {

enum class Strategy { fedavg, fedprox, floco, floco_plus, ditto };

const char* to_string(Strategy s);
Strategy parse_strategy(const std::string& name);
/// FLOCO and FLOCO+ train a solution simplex; the rest train a single model.
bool trains_simplex(Strategy s);

struct FederationConfig {
  int clients = 20;                 // K
  int rounds = 200;                 // T
  int local_epochs = 5;             // T' = local_epochs * ceil(N_k / B) unless local_steps > 0
  int local_steps = 0;              // explicit T'
  int participants = 10;            // |S^t|
  double lr = 0.05;                 // gamma
  int batch_size = 32;              // B
  int simplex_dim = 5;              // M
  int tau = 100;                    // subregion assignment round; rounds + 1 disables it
  double rho = 0.1;                 // subregion radius
  Strategy strategy = Strategy::floco;
  double mu = 0.01;                 // FedProx proximity
  double lambda = 1.0;              // Ditto / FLOCO+ proximity
  int finetune_epochs = 5;          // E
  int ece_bins = 10;
  int eval_interval = 10;
  SimplexScope simplex_scope = SimplexScope::last_layer;
  std::uint64_t seed = 0;
  bool renormalize_participation = false;
  int hidden_dim = 32;
  int threads = 1;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  /// Simplex dimension of the trained model (0 for single-model strategies).
  int model_simplex_dim() const { return trains_simplex(strategy) ? simplex_dim : 0; }
};

struct ClientState {
  int id = 0;
  LabeledDataset train;
  LabeledDataset test;
  Subregion subregion;
  bool assigned = false;
  std::optional<HeadEndpoints> personal_head;  // FLOCO+
  std::optional<NetParams> personal_model;     // Ditto

  std::size_t num_samples() const { return train.size(); }
};

struct GlobalState {
  int round = 0;
  ModelState model;
};

/// Client-side change of every trained parameter block.
struct ModelDelta {
  Eigen::VectorXd backbone;
  std::vector<Eigen::VectorXd> endpoints;
};

struct FederatedData {
  std::vector<ClientSplit> clients;
  LabeledDataset global_test;
};

/// Per-client stratified 80/20 splits of a partitioned dataset.
FederatedData build_federated_data(const LabeledDataset& data, const PartitionResult& partition,
                                   LabeledDataset global_test, std::uint64_t seed,
                                   double test_fraction = 0.2);

/// Epoch-wise shuffled mini-batches over n samples; a fresh permutation is
/// drawn whenever the previous one is used up.
class BatchSchedule {
 public:
  BatchSchedule(std::size_t n, int batch_size, RngStream rng);
  std::vector<std::size_t> next();

 private:
  void reshuffle();

  std::size_t n_;
  std::size_t batch_size_;
  RngStream rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

Batch make_batch(const LabeledDataset& data, const std::vector<std::size_t>& indices);

/// T' for a client holding n training samples.
int local_step_count(const FederationConfig& cfg, std::size_t n);

/// Uniform sample of `count` distinct ids out of K, sorted ascending.
std::vector<int> choose_participants(int round, int clients, int count, std::uint64_t seed);

/// Proximal term (strength/2) * (sum_m |theta_m - anchor_m|^2 [+ |b - anchor_b|^2]).
struct ProxTerm {
  const ModelState* anchor = nullptr;
  double strength = 0.0;
  bool include_backbone = true;
};

struct StepGradients {
  double objective = 0.0;
  Eigen::VectorXd backbone;                // empty when the backbone is not trained
  std::vector<Eigen::VectorXd> endpoints;  // alpha_m * grad_w F + prox
};

/// Objective and gradients of one local step: F(w_alpha) plus the optional
/// proximal term. The backbone gradient is the ordinary unscaled gradient.
StepGradients regularized_gradients(const ModelState& model, const SimplexPoint& alpha,
                                    const Batch& batch, const ProxTerm& prox,
                                    bool train_backbone = true);
double regularized_objective(const ModelState& model, const SimplexPoint& alpha,
                             const Batch& batch, const ProxTerm& prox,
                             bool train_backbone = true);

struct SimplexSgdOptions {
  int steps = 1;
  int batch_size = 32;
  double lr = 0.05;
  bool train_backbone = true;
  ProxTerm prox;
};

/// Runs `steps` mini-batch steps on `model` in place, drawing one alpha per
/// step from `region`:
///   theta_m <- theta_m - lr * (alpha_m * grad_w F + prox_m)
///   b       <- b - lr * (grad_b F + prox_b)
void simplex_sgd(ModelState& model, const Subregion& region, const LabeledDataset& train,
                 const SimplexSgdOptions& options, RngStream batch_rng, RngStream alpha_rng);

ModelDelta model_delta(const ModelState& before, const ModelState& after);

ModelDelta local_update_fedavg(const ModelState& global, const ClientState& client,
                               const FederationConfig& cfg, int round);
ModelDelta local_update_fedprox(const ModelState& global, const ClientState& client,
                                const FederationConfig& cfg, int round);
ModelDelta local_update_floco(const ModelState& global, const ClientState& client,
                              const FederationConfig& cfg, int round);

/// base + sum_k (N_k / N) delta_k, accumulated in ascending client id. N is
/// `total_samples` (all clients) unless it is 0, in which case the weights
/// are renormalized over the participants.
Eigen::VectorXd global_aggregate(const std::map<int, Eigen::VectorXd>& updates,
                                 const std::map<int, std::size_t>& weights,
                                 std::size_t total_samples, const Eigen::VectorXd& base);

/// Applies global_aggregate to every parameter block of the model.
void aggregate_model(ModelState& model, const std::map<int, ModelDelta>& updates,
                     const std::map<int, std::size_t>& weights, std::size_t total_samples);

/// Stacks each client's endpoint updates, reduces them with PCA to M+1
/// dimensions, places the clients in the simplex and gives each one the
/// radius-rho ball around its point. `stacks` is indexed by position in
/// `clients`.
ClientAssignment assign_subregions_at_tau(const std::vector<ModelDelta>& stacks,
                                          std::vector<ClientState>& clients,
                                          const FederationConfig& cfg);

NetParams ditto_finetune(const ClientState& client, const ModelState& global,
                         const FederationConfig& cfg, int round);
HeadEndpoints floco_plus_finetune(const ClientState& client, const ModelState& global,
                                  const FederationConfig& cfg, int round);

/// Model at the simplex center.
Predictor infer_global(const ModelState& model);
/// Model at the client's point (center before assignment), over personal
/// parameters when present.
Predictor infer_local(const ModelState& model, const ClientState& client);

struct ExperimentResult {
  std::vector<RoundMetrics> metrics;
  /// Total gradient variance of every round with at least two participants.
  std::vector<std::pair<int, double>> variance_trace;
  GlobalState final_state;
  std::vector<ClientState> clients;
  std::optional<ClientAssignment> assignment;
  int assignment_round = 0;
};

ExperimentResult run_experiment(const FederationConfig& cfg, const FederatedData& data);

/// Runs fn(i) for i in [0, n) on up to `threads` worker threads.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn);

}  // namespace floco

#include "floco/detail/parallel.hpp"
