#include "floco/federation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace floco {

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::fedavg: return "fedavg";
    case Strategy::fedprox: return "fedprox";
    case Strategy::floco: return "floco";
    case Strategy::floco_plus: return "floco_plus";
    case Strategy::ditto: return "ditto";
  }
  return "fedavg";
}

Strategy parse_strategy(const std::string& name) {
  for (Strategy s : {Strategy::fedavg, Strategy::fedprox, Strategy::floco, Strategy::floco_plus,
                     Strategy::ditto}) {
    if (name == to_string(s)) return s;
  }
  throw std::invalid_argument("unknown strategy '" + name +
                              "' (expected fedavg, fedprox, floco, floco_plus or ditto)");
}

bool trains_simplex(Strategy s) { return s == Strategy::floco || s == Strategy::floco_plus; }

void FederationConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (clients < 1) fail("clients", "must be >= 1");
  if (rounds < 1) fail("rounds", "must be >= 1");
  if (participants < 1 || participants > clients) fail("participants", "must lie in [1, clients]");
  if (!(lr > 0.0)) fail("lr", "must be > 0");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (local_steps < 0) fail("local_steps", "must be >= 0");
  if (local_steps == 0 && local_epochs < 1) fail("local_epochs", "must be >= 1");
  if (simplex_dim < 0) fail("simplex_dim", "must be >= 0");
  if (tau < 1 || tau > rounds + 1) fail("tau", "must lie in [1, rounds + 1]");
  if (!(rho > 0.0)) fail("rho", "must be > 0");
  if (!(mu >= 0.0)) fail("mu", "must be >= 0");
  if (!(lambda >= 0.0)) fail("lambda", "must be >= 0");
  if (finetune_epochs < 1) fail("finetune_epochs", "must be >= 1");
  if (ece_bins < 1) fail("ece_bins", "must be >= 1");
  if (eval_interval < 1) fail("eval_interval", "must be >= 1");
  if (hidden_dim < 1) fail("hidden_dim", "must be >= 1");
  if (threads < 1) fail("threads", "must be >= 1");
}

FederatedData build_federated_data(const LabeledDataset& data, const PartitionResult& partition,
                                   LabeledDataset global_test, std::uint64_t seed,
                                   double test_fraction) {
  FederatedData out;
  out.global_test = std::move(global_test);
  out.clients.reserve(partition.clients());
  for (std::size_t k = 0; k < partition.clients(); ++k) {
    RngStream rng(seed, StreamKey{0, k, StreamPurpose::split});
    out.clients.push_back(
        split_train_test(data.subset(partition.client_indices[k]), test_fraction, rng));
  }
  return out;
}

BatchSchedule::BatchSchedule(std::size_t n, int batch_size, RngStream rng)
    : n_(n), batch_size_(static_cast<std::size_t>(batch_size)), rng_(std::move(rng)) {
  if (n == 0) throw std::invalid_argument("BatchSchedule: empty training split");
  if (batch_size < 1) throw std::invalid_argument("BatchSchedule: batch size must be >= 1");
  order_.resize(n_);
  reshuffle();
}

void BatchSchedule::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  shuffle(order_, rng_);
  cursor_ = 0;
}

std::vector<std::size_t> BatchSchedule::next() {
  if (cursor_ >= n_) reshuffle();
  const std::size_t end = std::min(n_, cursor_ + batch_size_);
  std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  return batch;
}

Batch make_batch(const LabeledDataset& data, const std::vector<std::size_t>& indices) {
  Batch b;
  b.inputs.resize(static_cast<Eigen::Index>(indices.size()), data.features.cols());
  b.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    b.inputs.row(static_cast<Eigen::Index>(i)) = data.features.row(static_cast<Eigen::Index>(indices[i]));
    b.labels.push_back(data.labels[indices[i]]);
  }
  return b;
}

int local_step_count(const FederationConfig& cfg, std::size_t n) {
  if (cfg.local_steps > 0) return cfg.local_steps;
  const auto B = static_cast<std::size_t>(cfg.batch_size);
  return cfg.local_epochs * static_cast<int>((n + B - 1) / B);
}

std::vector<int> choose_participants(int round, int clients, int count, std::uint64_t seed) {
  if (count < 0 || count > clients) {
    throw std::invalid_argument("choose_participants: count must lie in [0, clients]");
  }
  std::vector<int> ids(static_cast<std::size_t>(clients));
  std::iota(ids.begin(), ids.end(), 0);
  RngStream rng(seed, StreamKey{static_cast<std::uint64_t>(round), 0, StreamPurpose::participants});
  // Partial Fisher-Yates: the first `count` slots are a uniform sample.
  for (int i = 0; i < count; ++i) {
    const std::size_t j = static_cast<std::size_t>(i) +
                          rng.uniform_index(static_cast<std::size_t>(clients - i));
    std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
  }
  ids.resize(static_cast<std::size_t>(count));
  std::sort(ids.begin(), ids.end());
  return ids;
}

StepGradients regularized_gradients(const ModelState& model, const SimplexPoint& alpha,
                                    const Batch& batch, const ProxTerm& prox,
                                    bool train_backbone) {
  LossAndGrads lg = loss_and_grads(model, alpha, batch);
  StepGradients out;
  out.objective = lg.loss;
  out.endpoints = std::move(lg.endpoint_grads);
  const bool has_backbone = train_backbone && model.scope == SimplexScope::last_layer;
  if (has_backbone) out.backbone = std::move(lg.backbone_grad);

  if (prox.anchor != nullptr && prox.strength != 0.0) {
    const ModelState& anchor = *prox.anchor;
    if (anchor.head.size() != model.head.size()) {
      throw std::invalid_argument("proximal anchor has a different number of endpoints");
    }
    double penalty = 0.0;
    for (std::size_t m = 0; m < model.head.size(); ++m) {
      const Eigen::VectorXd diff = model.head.endpoints[m] - anchor.head.endpoints[m];
      out.endpoints[m] += prox.strength * diff;
      penalty += diff.squaredNorm();
    }
    if (has_backbone && prox.include_backbone) {
      const Eigen::VectorXd diff = model.backbone - anchor.backbone;
      out.backbone += prox.strength * diff;
      penalty += diff.squaredNorm();
    }
    out.objective += 0.5 * prox.strength * penalty;
  }
  return out;
}

double regularized_objective(const ModelState& model, const SimplexPoint& alpha,
                             const Batch& batch, const ProxTerm& prox, bool train_backbone) {
  double value = net_loss(model.arch, params_at(model, alpha), batch);
  if (prox.anchor != nullptr && prox.strength != 0.0) {
    double penalty = 0.0;
    for (std::size_t m = 0; m < model.head.size(); ++m) {
      penalty += (model.head.endpoints[m] - prox.anchor->head.endpoints[m]).squaredNorm();
    }
    if (train_backbone && prox.include_backbone && model.scope == SimplexScope::last_layer) {
      penalty += (model.backbone - prox.anchor->backbone).squaredNorm();
    }
    value += 0.5 * prox.strength * penalty;
  }
  return value;
}

void simplex_sgd(ModelState& model, const Subregion& region, const LabeledDataset& train,
                 const SimplexSgdOptions& options, RngStream batch_rng, RngStream alpha_rng) {
  if (train.empty()) throw std::invalid_argument("local update: empty train split");
  if (region.center.size() != static_cast<Eigen::Index>(model.head.size())) {
    throw std::invalid_argument("local update: subregion dimension does not match the model");
  }
  BatchSchedule schedule(train.size(), options.batch_size, std::move(batch_rng));
  SubregionSampler sampler(region);
  for (int step = 0; step < options.steps; ++step) {
    const Batch batch = make_batch(train, schedule.next());
    const SimplexPoint alpha = sampler.draw(alpha_rng);
    const StepGradients g =
        regularized_gradients(model, alpha, batch, options.prox, options.train_backbone);
    for (std::size_t m = 0; m < model.head.size(); ++m) {
      model.head.endpoints[m] = sgd_step(model.head.endpoints[m], g.endpoints[m], options.lr);
    }
    if (g.backbone.size() > 0) model.backbone = sgd_step(model.backbone, g.backbone, options.lr);
  }
}

ModelDelta model_delta(const ModelState& before, const ModelState& after) {
  ModelDelta d;
  d.backbone = after.backbone - before.backbone;
  d.endpoints.reserve(after.head.size());
  for (std::size_t m = 0; m < after.head.size(); ++m) {
    d.endpoints.push_back(after.head.endpoints[m] - before.head.endpoints[m]);
  }
  return d;
}

namespace {

RngStream stream(const FederationConfig& cfg, int round, int client, StreamPurpose purpose) {
  return RngStream(cfg.seed, StreamKey{static_cast<std::uint64_t>(round),
                                       static_cast<std::uint64_t>(client), purpose});
}

ModelDelta flat_local_update(const ModelState& global, const ClientState& client,
                             const FederationConfig& cfg, int round, double mu) {
  if (global.M() != 0) {
    throw std::invalid_argument("single-model local update requires one endpoint (M = 0)");
  }
  SimplexSgdOptions opt;
  opt.steps = local_step_count(cfg, client.num_samples());
  opt.batch_size = cfg.batch_size;
  opt.lr = cfg.lr;
  opt.prox = ProxTerm{&global, mu, true};
  ModelState local = global;
  simplex_sgd(local, whole_simplex(0), client.train, opt,
              stream(cfg, round, client.id, StreamPurpose::batches),
              stream(cfg, round, client.id, StreamPurpose::alpha));
  return model_delta(global, local);
}

}  // namespace

ModelDelta local_update_fedavg(const ModelState& global, const ClientState& client,
                               const FederationConfig& cfg, int round) {
  return flat_local_update(global, client, cfg, round, 0.0);
}

ModelDelta local_update_fedprox(const ModelState& global, const ClientState& client,
                                const FederationConfig& cfg, int round) {
  if (!(cfg.mu >= 0.0)) throw std::invalid_argument("mu must be >= 0");
  return flat_local_update(global, client, cfg, round, cfg.mu);
}

ModelDelta local_update_floco(const ModelState& global, const ClientState& client,
                              const FederationConfig& cfg, int round) {
  SimplexSgdOptions opt;
  opt.steps = local_step_count(cfg, client.num_samples());
  opt.batch_size = cfg.batch_size;
  opt.lr = cfg.lr;
  ModelState local = global;
  simplex_sgd(local, client.subregion, client.train, opt,
              stream(cfg, round, client.id, StreamPurpose::batches),
              stream(cfg, round, client.id, StreamPurpose::alpha));
  return model_delta(global, local);
}

Eigen::VectorXd global_aggregate(const std::map<int, Eigen::VectorXd>& updates,
                                 const std::map<int, std::size_t>& weights,
                                 std::size_t total_samples, const Eigen::VectorXd& base) {
  if (updates.empty()) throw std::invalid_argument("global_aggregate: no updates");
  std::size_t total = total_samples;
  if (total == 0) {
    for (const auto& [id, _] : updates) {
      const auto w = weights.find(id);
      if (w == weights.end()) throw std::invalid_argument("global_aggregate: missing weight");
      total += w->second;
    }
  }
  if (total == 0) throw std::invalid_argument("global_aggregate: zero total weight");
  Eigen::VectorXd out = base;
  for (const auto& [id, delta] : updates) {
    const auto w = weights.find(id);
    if (w == weights.end()) {
      throw std::invalid_argument("global_aggregate: missing weight for client " + std::to_string(id));
    }
    if (delta.size() != base.size()) throw std::invalid_argument("global_aggregate: shape mismatch");
    out.noalias() += (static_cast<double>(w->second) / static_cast<double>(total)) * delta;
  }
  return out;
}

void aggregate_model(ModelState& model, const std::map<int, ModelDelta>& updates,
                     const std::map<int, std::size_t>& weights, std::size_t total_samples) {
  if (updates.empty()) throw std::invalid_argument("aggregate_model: no updates");
  std::map<int, Eigen::VectorXd> block;
  for (const auto& [id, d] : updates) block[id] = d.backbone;
  if (model.backbone.size() > 0) {
    model.backbone = global_aggregate(block, weights, total_samples, model.backbone);
  }
  for (std::size_t m = 0; m < model.head.size(); ++m) {
    for (const auto& [id, d] : updates) {
      if (d.endpoints.size() != model.head.size()) {
        throw std::invalid_argument("aggregate_model: endpoint count mismatch");
      }
      block[id] = d.endpoints[m];
    }
    model.head.endpoints[m] =
        global_aggregate(block, weights, total_samples, model.head.endpoints[m]);
  }
}

ClientAssignment assign_subregions_at_tau(const std::vector<ModelDelta>& stacks,
                                          std::vector<ClientState>& clients,
                                          const FederationConfig& cfg) {
  if (stacks.size() != clients.size()) {
    throw std::invalid_argument("assign_subregions_at_tau: missing gradient stacks");
  }
  std::vector<Eigen::VectorXd> rows;
  rows.reserve(stacks.size());
  for (const auto& s : stacks) {
    if (s.endpoints.empty()) throw std::invalid_argument("assign_subregions_at_tau: empty stack");
    Eigen::Index len = 0;
    for (const auto& e : s.endpoints) len += e.size();
    Eigen::VectorXd row(len);
    Eigen::Index off = 0;
    for (const auto& e : s.endpoints) {
      row.segment(off, e.size()) = e;
      off += e.size();
    }
    rows.push_back(std::move(row));
  }
  const auto dims = static_cast<Eigen::Index>(stacks.front().endpoints.size());
  ClientAssignment assignment = assign_client_representations(pca_project(rows, dims));
  for (std::size_t k = 0; k < clients.size(); ++k) {
    clients[k].subregion = make_subregion(assignment.alphas[k], cfg.rho);
    clients[k].assigned = true;
  }
  return assignment;
}

NetParams ditto_finetune(const ClientState& client, const ModelState& global,
                         const FederationConfig& cfg, int round) {
  if (cfg.finetune_epochs < 1) throw std::invalid_argument("finetune_epochs must be >= 1");
  if (!(cfg.lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (global.M() != 0) throw std::invalid_argument("ditto_finetune: expects a single-model global");
  SimplexSgdOptions opt;
  const auto B = static_cast<std::size_t>(cfg.batch_size);
  opt.steps = cfg.finetune_epochs * static_cast<int>((client.num_samples() + B - 1) / B);
  opt.batch_size = cfg.batch_size;
  opt.lr = cfg.lr;
  opt.prox = ProxTerm{&global, cfg.lambda, true};
  ModelState personal = global;
  simplex_sgd(personal, whole_simplex(0), client.train, opt,
              stream(cfg, round, client.id, StreamPurpose::finetune_batches),
              stream(cfg, round, client.id, StreamPurpose::finetune_alpha));
  return params_at(personal, SimplexPoint::uniform(0));
}

HeadEndpoints floco_plus_finetune(const ClientState& client, const ModelState& global,
                                  const FederationConfig& cfg, int round) {
  if (cfg.finetune_epochs < 1) throw std::invalid_argument("finetune_epochs must be >= 1");
  if (!(cfg.lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  SimplexSgdOptions opt;
  const auto B = static_cast<std::size_t>(cfg.batch_size);
  opt.steps = cfg.finetune_epochs * static_cast<int>((client.num_samples() + B - 1) / B);
  opt.batch_size = cfg.batch_size;
  opt.lr = cfg.lr;
  opt.train_backbone = false;
  opt.prox = ProxTerm{&global, cfg.lambda, false};
  ModelState personal = global;
  simplex_sgd(personal, client.subregion, client.train, opt,
              stream(cfg, round, client.id, StreamPurpose::finetune_batches),
              stream(cfg, round, client.id, StreamPurpose::finetune_alpha));
  return personal.head;
}

Predictor infer_global(const ModelState& model) {
  return Predictor(model.arch, params_at(model, SimplexPoint::uniform(model.M())));
}

Predictor infer_local(const ModelState& model, const ClientState& client) {
  if (client.personal_model) return Predictor(model.arch, *client.personal_model);
  const HeadEndpoints& head = client.personal_head ? *client.personal_head : model.head;
  const SimplexPoint alpha =
      client.assigned ? client.subregion.center : SimplexPoint::uniform(model.M());
  return Predictor(model.arch, params_at(model, head, alpha));
}

namespace {

// Head slice of an update block (the whole block in last-layer scope).
Eigen::VectorXd head_slice(const ModelState& model, const Eigen::VectorXd& block) {
  return block.tail(model.arch.head_size());
}

double round_variance(const ModelState& model, const std::map<int, ModelDelta>& updates,
                      bool simplex) {
  if (simplex) {
    std::vector<std::vector<Eigen::VectorXd>> per_client;
    for (const auto& [id, d] : updates) {
      std::vector<Eigen::VectorXd> e;
      for (const auto& v : d.endpoints) e.push_back(head_slice(model, v));
      per_client.push_back(std::move(e));
    }
    return total_gradient_variance(per_client);
  }
  std::vector<Eigen::VectorXd> flat;
  for (const auto& [id, d] : updates) flat.push_back(head_slice(model, d.endpoints.front()));
  return total_gradient_variance(flat);
}

RoundMetrics evaluate_round(int round, const ModelState& model, std::vector<ClientState>& clients,
                            const FederatedData& data, const FederationConfig& cfg,
                            double variance) {
  RoundMetrics r;
  r.round = round;
  r.total_grad_variance = variance;
  const Predictor global = infer_global(model);
  const Eigen::MatrixXd gp = global.probabilities(data.global_test.features);
  r.global_acc = accuracy(gp, data.global_test.labels);
  r.global_ece = ece(gp, data.global_test.labels, cfg.ece_bins);

  std::vector<double> accs(clients.size()), eces(clients.size());
  parallel_for(clients.size(), cfg.threads, [&](std::size_t k) {
    ClientState& c = clients[k];
    if (cfg.strategy == Strategy::ditto) c.personal_model = ditto_finetune(c, model, cfg, round);
    if (cfg.strategy == Strategy::floco_plus) c.personal_head = floco_plus_finetune(c, model, cfg, round);
    const Eigen::MatrixXd p = infer_local(model, c).probabilities(c.test.features);
    accs[k] = accuracy(p, c.test.labels);
    eces[k] = ece(p, c.test.labels, cfg.ece_bins);
  });
  const auto n = static_cast<double>(clients.size());
  r.mean_local_acc = std::accumulate(accs.begin(), accs.end(), 0.0) / n;
  r.mean_local_ece = std::accumulate(eces.begin(), eces.end(), 0.0) / n;
  r.worst5_local_acc = worst_fraction_accuracy(accs, 0.05);
  return r;
}

}  // namespace

ExperimentResult run_experiment(const FederationConfig& cfg, const FederatedData& data) {
  cfg.validate();
  if (data.clients.size() != static_cast<std::size_t>(cfg.clients)) {
    throw std::invalid_argument("run_experiment: data holds " + std::to_string(data.clients.size()) +
                                " clients, config expects " + std::to_string(cfg.clients));
  }
  if (data.global_test.empty()) throw std::invalid_argument("run_experiment: empty global test set");

  const bool simplex = trains_simplex(cfg.strategy);
  Architecture arch{data.global_test.dim(), cfg.hidden_dim, data.global_test.classes};
  RngStream init_rng(cfg.seed, StreamKey{0, 0, StreamPurpose::model_init});

  ExperimentResult result;
  result.final_state.model = init_model(arch, cfg.model_simplex_dim(), cfg.simplex_scope, init_rng);
  ModelState& model = result.final_state.model;

  std::vector<ClientState>& clients = result.clients;
  std::size_t total_samples = 0;
  for (std::size_t k = 0; k < data.clients.size(); ++k) {
    ClientState c;
    c.id = static_cast<int>(k);
    c.train = data.clients[k].train;
    c.test = data.clients[k].test;
    if (c.train.empty() || c.test.empty()) {
      throw std::invalid_argument("run_experiment: client " + std::to_string(k) +
                                  " has an empty train or test split");
    }
    c.subregion = whole_simplex(model.M());
    total_samples += c.num_samples();
    clients.push_back(std::move(c));
  }
  std::map<int, std::size_t> weights;
  for (const auto& c : clients) weights[c.id] = c.num_samples();

  auto local_update = [&](const ClientState& c, int t) {
    switch (cfg.strategy) {
      case Strategy::fedprox: return local_update_fedprox(model, c, cfg, t);
      case Strategy::floco:
      case Strategy::floco_plus: return local_update_floco(model, c, cfg, t);
      case Strategy::fedavg:
      case Strategy::ditto: break;
    }
    return local_update_fedavg(model, c, cfg, t);
  };

  for (int t = 1; t <= cfg.rounds; ++t) {
    const std::vector<int> participants =
        choose_participants(t, cfg.clients, cfg.participants, cfg.seed);
    const bool assign_now = simplex && t == cfg.tau;

    std::vector<bool> runs(clients.size(), assign_now);
    for (int id : participants) runs[static_cast<std::size_t>(id)] = true;
    std::vector<ModelDelta> deltas(clients.size());
    parallel_for(clients.size(), cfg.threads, [&](std::size_t k) {
      if (runs[k]) deltas[k] = local_update(clients[k], t);
    });

    std::map<int, ModelDelta> updates;
    for (int id : participants) updates.emplace(id, deltas[static_cast<std::size_t>(id)]);

    if (assign_now) {
      result.assignment = assign_subregions_at_tau(deltas, clients, cfg);
      result.assignment_round = t;
    }

    double variance = 0.0;
    if (updates.size() >= 2) {
      variance = round_variance(model, updates, simplex);
      result.variance_trace.emplace_back(t, variance);
    }
    aggregate_model(model, updates, weights, cfg.renormalize_participation ? 0 : total_samples);
    for (const auto& e : model.head.endpoints) {
      if (!e.allFinite()) {
        throw std::runtime_error("run_experiment: non-finite endpoint after round " + std::to_string(t));
      }
    }
    result.final_state.round = t;

    if (t % cfg.eval_interval == 0 || t == cfg.rounds) {
      result.metrics.push_back(evaluate_round(t, model, clients, data, cfg, variance));
    }
  }
  return result;
}

}  // namespace floco
