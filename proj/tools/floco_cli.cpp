// Experiment runner: run, surface, partition-stats, compare.

#include "floco/config.hpp"
#include "floco/federation.hpp"
#include "floco/metrics.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace floco;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::string> strategy;
  std::optional<int> tau;
  std::optional<double> rho;
  std::optional<int> m;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "JSON config file (defaults when omitted)");
  cmd->add_option("--out", o.out_dir, "Output directory");
  cmd->add_option("--strategy", o.strategy, "Override strategy");
  cmd->add_option("--tau", o.tau, "Override subregion assignment round");
  cmd->add_option("--rho", o.rho, "Override subregion radius");
  cmd->add_option("--m", o.m, "Override simplex dimension");
  cmd->add_option("--threads", o.threads, "Worker threads (results do not depend on it)");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

ExperimentConfig load_config(const CommonOptions& o) {
  ParsedConfig parsed = parse_config(o.config_path.empty() ? "" : read_file(o.config_path));
  for (const auto& w : parsed.warnings) std::cerr << "warning: " << w << '\n';
  ExperimentConfig cfg = parsed.config;
  FederationConfig& f = cfg.federation;
  if (o.strategy) f.strategy = parse_strategy(*o.strategy);
  if (o.tau) f.tau = *o.tau;
  if (o.rho) f.rho = *o.rho;
  if (o.m) f.simplex_dim = *o.m;
  if (o.threads) f.threads = *o.threads;
  f.validate();
  cfg.data.validate(f.clients);
  return cfg;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

std::string metrics_name(const ExperimentConfig& cfg, std::uint64_t seed) {
  return std::string("metrics_") + to_string(cfg.federation.strategy) + "_seed" +
         std::to_string(seed) + ".csv";
}

int run_seeds(ExperimentConfig cfg, int seeds, const fs::path& out_dir) {
  if (seeds < 1) throw std::invalid_argument("--seeds must be >= 1");
  fs::create_directories(out_dir);
  const std::uint64_t master = cfg.federation.seed;
  nlohmann::json manifest;
  manifest["resolved_config"] = to_json(cfg);
  manifest["master_seed"] = master;
  manifest["seeds"] = seeds;
  manifest["started_at"] = timestamp();
  nlohmann::json outputs = nlohmann::json::array();
  for (int i = 0; i < seeds; ++i) {
    ExperimentConfig run_cfg = cfg;
    run_cfg.federation.seed = master + static_cast<std::uint64_t>(i);
    const PreparedData data = prepare_data(run_cfg, run_cfg.federation.seed);
    const ExperimentResult result = run_experiment(run_cfg.federation, data.federated);
    std::ostringstream csv;
    write_metrics_csv(csv, result.metrics);
    const fs::path path = out_dir / metrics_name(cfg, run_cfg.federation.seed);
    write_file(path, csv.str());
    outputs.push_back({{"seed", run_cfg.federation.seed}, {"metrics", path.filename().string()}});
    const RoundMetrics& last = result.metrics.back();
    std::cerr << "seed " << run_cfg.federation.seed << ": global_acc=" << format_real(last.global_acc)
              << " mean_local_acc=" << format_real(last.mean_local_acc) << '\n';
  }
  manifest["outputs"] = outputs;
  manifest["finished_at"] = timestamp();
  write_file(out_dir / (std::string("manifest_") + to_string(cfg.federation.strategy) + ".json"),
             manifest.dump(2) + "\n");
  return 0;
}

int run_surface(const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const std::uint64_t seed = cfg.federation.seed;
  const PreparedData data = prepare_data(cfg, seed);
  const ExperimentResult result = run_experiment(cfg.federation, data.federated);
  const ModelState& model = result.final_state.model;
  const auto n = static_cast<std::size_t>(cfg.surface_points);

  RngStream rng(seed, StreamKey{0, 0, StreamPurpose::surface});
  std::ostringstream global_csv;
  write_surface_csv(global_csv, loss_surface_grid(model, data.federated.global_test, n, rng));
  write_file(out_dir / "surface_global.csv", global_csv.str());

  for (const ClientState& c : result.clients) {
    RngStream crng(seed, StreamKey{0, static_cast<std::uint64_t>(c.id) + 1, StreamPurpose::surface});
    const HeadEndpoints& head = c.personal_head ? *c.personal_head : model.head;
    std::ostringstream csv;
    write_surface_csv(csv, loss_surface_grid(model, head, c.test, n, crng));
    write_file(out_dir / ("surface_client" + std::to_string(c.id) + ".csv"), csv.str());
  }
  return 0;
}

int run_partition_stats(const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const PreparedData data = prepare_data(cfg, cfg.federation.seed);
  std::ostringstream csv;
  write_partition_csv(csv, data.pool, data.partition);
  write_file(out_dir / "partition_stats.csv", csv.str());
  return 0;
}

std::vector<RoundMetrics> load_metrics(const std::string& path) {
  std::istringstream in(read_file(path));
  auto rows = read_metrics_csv(in);
  if (rows.empty()) throw std::runtime_error(path + ": no metric rows");
  return rows;
}

int run_compare(const std::string& baseline_path, const std::string& method_path,
                const std::string& out_path) {
  const auto base = load_metrics(baseline_path);
  const auto method = load_metrics(method_path);
  if (base.size() != method.size()) throw std::runtime_error("compare: evaluation grids differ");
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (base[i].round != method[i].round) throw std::runtime_error("compare: evaluation grids differ");
  }

  struct Column {
    const char* name;
    double RoundMetrics::*field;
    bool accuracy;
  };
  const Column columns[] = {
      {"global_acc", &RoundMetrics::global_acc, true},
      {"mean_local_acc", &RoundMetrics::mean_local_acc, true},
      {"worst5_local_acc", &RoundMetrics::worst5_local_acc, true},
      {"global_ece", &RoundMetrics::global_ece, false},
      {"mean_local_ece", &RoundMetrics::mean_local_ece, false},
  };
  std::ostringstream out;
  out << "metric,tta_improvement,underlined,did_not_reach,final_baseline,final_method,delta\n";
  for (const Column& c : columns) {
    out << c.name << ',';
    if (c.accuracy) {
      AccuracyCurve bc, mc;
      for (const auto& r : base) bc.emplace_back(r.round, r.*(c.field));
      for (const auto& r : method) mc.emplace_back(r.round, r.*(c.field));
      const TtaResult tta = tta_improvement(bc, mc);
      out << format_real(tta.improvement) << ',' << (tta.underlined ? 1 : 0) << ','
          << (tta.did_not_reach ? 1 : 0) << ',';
    } else {
      out << ",,,";
    }
    const double b = base.back().*(c.field);
    const double m = method.back().*(c.field);
    out << format_real(b) << ',' << format_real(m) << ',' << format_real(m - b) << '\n';
  }
  if (out_path.empty()) {
    std::cout << out.str();
  } else {
    write_file(out_path, out.str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated simplex-learning simulator"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  int seeds = 1;
  std::string manifest_path;
  auto* run = app.add_subcommand("run", "Run experiments and write metrics CSVs plus a manifest");
  add_common(run, run_opts);
  run->add_option("--seeds", seeds, "Number of seeds (master_seed + i)");
  run->add_option("--manifest", manifest_path, "Re-run from a manifest written by a previous run");

  CommonOptions surface_opts;
  auto* surface = app.add_subcommand("surface", "Write loss-surface CSVs for the global and every client");
  add_common(surface, surface_opts);

  CommonOptions stats_opts;
  auto* stats = app.add_subcommand("partition-stats", "Write the client/class histogram CSV");
  add_common(stats, stats_opts);

  std::string baseline_path, method_path, compare_out;
  auto* compare = app.add_subcommand("compare", "TTA improvement and final deltas of two metrics CSVs");
  compare->add_option("baseline", baseline_path, "Baseline metrics CSV")->required();
  compare->add_option("method", method_path, "Method metrics CSV")->required();
  compare->add_option("--out", compare_out, "Output CSV (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      if (!manifest_path.empty()) {
        const auto manifest = nlohmann::json::parse(read_file(manifest_path));
        ParsedConfig parsed = parse_config(manifest.at("resolved_config").dump());
        if (manifest.contains("seeds") && run->count("--seeds") == 0) seeds = manifest.at("seeds").get<int>();
        return run_seeds(parsed.config, seeds, run_opts.out_dir);
      }
      return run_seeds(load_config(run_opts), seeds, run_opts.out_dir);
    }
    if (*surface) return run_surface(load_config(surface_opts), surface_opts.out_dir);
    if (*stats) return run_partition_stats(load_config(stats_opts), stats_opts.out_dir);
    if (*compare) return run_compare(baseline_path, method_path, compare_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
