#include "floco/config.hpp"

#include <cctype>
#include <cmath>
#include <set>
#include <stdexcept>
#include <type_traits>

namespace floco {

namespace {

using nlohmann::json;

const char* to_string(PartitionKind k) {
  return k == PartitionKind::dirichlet ? "dirichlet" : "fivefold";
}

PartitionKind parse_partition(const std::string& name) {
  if (name == "dirichlet") return PartitionKind::dirichlet;
  if (name == "fivefold") return PartitionKind::fivefold;
  throw std::invalid_argument("partition: unknown kind '" + name + "' (expected dirichlet or fivefold)");
}

const char* to_string(SimplexScope s) {
  return s == SimplexScope::last_layer ? "last_layer" : "all_layers";
}

SimplexScope parse_scope(const std::string& name) {
  if (name == "last_layer") return SimplexScope::last_layer;
  if (name == "all_layers") return SimplexScope::all_layers;
  throw std::invalid_argument("simplex_scope: unknown value '" + name +
                              "' (expected last_layer or all_layers)");
}

template <typename T>
void read(const json& doc, const char* key, T& out) {
  const auto it = doc.find(key);
  if (it == doc.end()) return;
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw std::invalid_argument("expected a number");
      out = it->get<double>();
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw std::invalid_argument("expected a boolean");
      out = it->get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw std::invalid_argument("expected a string");
      out = it->get<std::string>();
    } else {
      if (!it->is_number_integer()) throw std::invalid_argument("expected an integer");
      out = it->get<T>();
    }
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string(key) + ": " + e.what());
  }
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "clients", "rounds", "local_epochs", "local_steps", "participants", "lr", "batch_size",
      "simplex_dim", "tau", "rho", "strategy", "mu", "lambda", "finetune_epochs", "ece_bins",
      "eval_interval", "simplex_scope", "seed", "renormalize_participation", "hidden_dim",
      "threads", "classes", "input_dim", "samples", "spread", "partition", "dirichlet_beta",
      "fivefold_q", "fivefold_groups", "test_fraction", "surface_points"};
  return keys;
}

}  // namespace

void DataConfig::validate(int clients) const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument(field + ": " + why);
  };
  if (classes < 2) fail("classes", "must be >= 2");
  if (input_dim < 2) fail("input_dim", "must be >= 2");
  if (samples < classes) fail("samples", "must be >= classes");
  if (samples < clients) fail("samples", "must be >= clients");
  if (!(spread >= 0.0)) fail("spread", "must be >= 0");
  if (!(dirichlet_beta > 0.0)) fail("dirichlet_beta", "must be > 0");
  if (fivefold_q < 0.0 || fivefold_q > 100.0) fail("fivefold_q", "must lie in [0, 100]");
  if (fivefold_groups < 1) fail("fivefold_groups", "must be >= 1");
  if (partition == PartitionKind::fivefold) {
    if (clients % fivefold_groups != 0) fail("fivefold_groups", "must divide clients");
    if (classes % fivefold_groups != 0) fail("fivefold_groups", "must divide classes");
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail("test_fraction", "must lie in (0, 1)");
}

ParsedConfig parse_config(const std::string& text) {
  json doc;
  bool blank = true;
  for (char ch : text) blank = blank && std::isspace(static_cast<unsigned char>(ch));
  if (blank) {
    doc = json::object();
  } else {
    try {
      doc = json::parse(text);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument(std::string("config: malformed JSON: ") + e.what());
    }
  }
  if (!doc.is_object()) throw std::invalid_argument("config: top level must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (!known_keys().count(key)) throw std::invalid_argument(key + ": unknown key");
  }

  ParsedConfig out;
  FederationConfig& f = out.config.federation;
  DataConfig& d = out.config.data;
  std::string strategy = to_string(f.strategy), scope = to_string(f.simplex_scope),
              partition = to_string(d.partition);
  read(doc, "clients", f.clients);
  read(doc, "rounds", f.rounds);
  read(doc, "local_epochs", f.local_epochs);
  read(doc, "local_steps", f.local_steps);
  read(doc, "participants", f.participants);
  read(doc, "lr", f.lr);
  read(doc, "batch_size", f.batch_size);
  read(doc, "simplex_dim", f.simplex_dim);
  read(doc, "tau", f.tau);
  read(doc, "rho", f.rho);
  read(doc, "strategy", strategy);
  read(doc, "mu", f.mu);
  read(doc, "lambda", f.lambda);
  read(doc, "finetune_epochs", f.finetune_epochs);
  read(doc, "ece_bins", f.ece_bins);
  read(doc, "eval_interval", f.eval_interval);
  read(doc, "simplex_scope", scope);
  read(doc, "seed", f.seed);
  read(doc, "renormalize_participation", f.renormalize_participation);
  read(doc, "hidden_dim", f.hidden_dim);
  read(doc, "threads", f.threads);
  read(doc, "classes", d.classes);
  read(doc, "input_dim", d.input_dim);
  read(doc, "samples", d.samples);
  read(doc, "spread", d.spread);
  read(doc, "partition", partition);
  read(doc, "dirichlet_beta", d.dirichlet_beta);
  read(doc, "fivefold_q", d.fivefold_q);
  read(doc, "fivefold_groups", d.fivefold_groups);
  read(doc, "test_fraction", d.test_fraction);
  read(doc, "surface_points", out.config.surface_points);

  try {
    f.strategy = parse_strategy(strategy);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("strategy: ") + e.what());
  }
  f.simplex_scope = parse_scope(scope);
  d.partition = parse_partition(partition);

  f.validate();
  d.validate(f.clients);
  if (out.config.surface_points < 0) throw std::invalid_argument("surface_points: must be >= 0");

  auto warn_unused = [&](const char* key, bool used) {
    if (doc.contains(key) && !used) {
      out.warnings.push_back(std::string(key) + " is ignored by strategy " + to_string(f.strategy));
    }
  };
  const bool simplex = trains_simplex(f.strategy);
  warn_unused("mu", f.strategy == Strategy::fedprox);
  warn_unused("lambda", f.strategy == Strategy::ditto || f.strategy == Strategy::floco_plus);
  warn_unused("finetune_epochs", f.strategy == Strategy::ditto || f.strategy == Strategy::floco_plus);
  warn_unused("tau", simplex);
  warn_unused("rho", simplex);
  warn_unused("simplex_dim", simplex);
  warn_unused("simplex_scope", simplex);
  return out;
}

nlohmann::json to_json(const ExperimentConfig& config) {
  const FederationConfig& f = config.federation;
  const DataConfig& d = config.data;
  json j;
  j["clients"] = f.clients;
  j["rounds"] = f.rounds;
  j["local_epochs"] = f.local_epochs;
  j["local_steps"] = f.local_steps;
  j["participants"] = f.participants;
  j["lr"] = f.lr;
  j["batch_size"] = f.batch_size;
  j["simplex_dim"] = f.simplex_dim;
  j["tau"] = f.tau;
  j["rho"] = f.rho;
  j["strategy"] = to_string(f.strategy);
  j["mu"] = f.mu;
  j["lambda"] = f.lambda;
  j["finetune_epochs"] = f.finetune_epochs;
  j["ece_bins"] = f.ece_bins;
  j["eval_interval"] = f.eval_interval;
  j["simplex_scope"] = to_string(f.simplex_scope);
  j["seed"] = f.seed;
  j["renormalize_participation"] = f.renormalize_participation;
  j["hidden_dim"] = f.hidden_dim;
  j["threads"] = f.threads;
  j["classes"] = d.classes;
  j["input_dim"] = d.input_dim;
  j["samples"] = d.samples;
  j["spread"] = d.spread;
  j["partition"] = to_string(d.partition);
  j["dirichlet_beta"] = d.dirichlet_beta;
  j["fivefold_q"] = d.fivefold_q;
  j["fivefold_groups"] = d.fivefold_groups;
  j["test_fraction"] = d.test_fraction;
  j["surface_points"] = config.surface_points;
  return j;
}

PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed) {
  const DataConfig& d = config.data;
  const FederationConfig& f = config.federation;
  d.validate(f.clients);
  const auto per_class = static_cast<std::size_t>(d.samples / d.classes);
  const auto test_per_class = static_cast<std::size_t>(
      std::max<long long>(1, std::llround(d.test_fraction * static_cast<double>(per_class))));

  RngStream data_rng(seed, StreamKey{0, 0, StreamPurpose::data});
  const BlobModel blobs = BlobModel::random(d.classes, d.input_dim, d.spread, data_rng);

  PreparedData out;
  out.pool = blobs.draw(per_class, data_rng);
  RngStream test_rng(seed, StreamKey{0, 0, StreamPurpose::global_test});
  LabeledDataset global_test = blobs.draw(test_per_class, test_rng);

  RngStream part_rng(seed, StreamKey{0, 0, StreamPurpose::partition});
  out.partition = d.partition == PartitionKind::dirichlet
                      ? partition_dirichlet(out.pool, f.clients, d.dirichlet_beta, part_rng)
                      : partition_fivefold(out.pool, f.clients, d.fivefold_q, d.fivefold_groups,
                                           part_rng);
  out.federated = build_federated_data(out.pool, out.partition, std::move(global_test), seed,
                                       d.test_fraction);
  return out;
}

}  // namespace floco
