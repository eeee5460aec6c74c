// Command-line driver: crgraph <subcommand> [--config FILE] [--seed S] [--out DIR] [--jobs J] [--resume]

#include "crgraph/experiment.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace crgraph;

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kRuntimeFailure = 2, kPartialSweep = 3 };

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> jobs;
  bool resume = false;
};

ExperimentConfig load_config(const GlobalOptions& opts, std::optional<AttackMode> forced_mode) {
  ExperimentConfig config = opts.config_path.empty()
                                ? default_config(forced_mode.value_or(AttackMode::evasion))
                                : parse_config(opts.config_path);
  if (forced_mode) config.mode = *forced_mode;
  if (opts.seed) config.seeds = {*opts.seed};
  if (!opts.out.empty()) config.output_dir = opts.out;
  if (opts.jobs) config.jobs = *opts.jobs;
  config.validate();
  return config;
}

std::vector<int> gather_labels(const Graph& graph, std::span<const Index> nodes) {
  std::vector<int> labels;
  labels.reserve(nodes.size());
  for (Index u : nodes) labels.push_back(graph.labels[static_cast<std::size_t>(u)]);
  return labels;
}

int cmd_train(const GlobalOptions& opts) {
  const ExperimentConfig config = load_config(opts, std::nullopt);
  const CellSetup setup = prepare_cell(config, enumerate_cells(config).front());
  std::vector<double> history;
  const GCNParams params = train(setup.graph, setup.split, setup.graph.adjacency.cast<double>(), setup.train,
                                 &history);
  fs::create_directories(config.output_dir);
  save_checkpoint(params, config.output_dir / "model.bin");

  const auto predictions = predict_all(params, setup.graph.adjacency, setup.graph.features);
  std::ofstream out(config.output_dir / "train.csv");
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < history.size(); ++e) out << e << ',' << fmt::format("{}", history[e]) << '\n';
  const double train_acc = classification_accuracy(predictions, setup.graph.labels, setup.split.train);
  const double test_acc = classification_accuracy(predictions, setup.graph.labels, setup.split.test);
  std::cout << fmt::format("train accuracy {:.4f}, test accuracy {:.4f}\n", train_acc, test_acc);
  return kOk;
}

int cmd_certify(const GlobalOptions& opts, const std::string& flips_path) {
  const ExperimentConfig config = load_config(opts, std::nullopt);
  const CellSetup setup = prepare_cell(config, enumerate_cells(config).front());
  const Graph& graph = setup.graph;
  BinaryMatrix adjacency = graph.adjacency;
  if (!flips_path.empty())
    adjacency = apply_perturbation(adjacency, read_edge_flips(graph.num_nodes(), flips_path));
  const AttackConfig& attack = setup.attack;
  std::vector<Certificate> certificates;
  if (config.mode == AttackMode::evasion) {
    const GCNParams params = train(graph, setup.split, setup.train);
    certificates = certify_evasion(params, adjacency, graph.features, setup.split.test,
                                   gather_labels(graph, setup.split.test), attack.noise,
                                   attack.smoothing, attack.r_max);
  } else {
    const LabelView view(graph.labels, setup.split.train);
    const auto train_labels = view.gather(setup.split.train);
    certificates = certify_poisoning(adjacency, graph.features, setup.split.train, train_labels,
                                     graph.num_classes, setup.split.train, train_labels,
                                     setup.train, attack.noise, attack.smoothing, attack.r_max);
  }
  fs::create_directories(config.output_dir);
  write_certificates_csv(certificates, attack.smoothing.alpha, attack.noise,
                         config.output_dir / "certificates.csv");
  Index certified = 0;
  for (const auto& c : certificates) certified += c.certified_size > 0 ? 1 : 0;
  std::cout << fmt::format("{} nodes certified, {} with K > 0\n", certificates.size(), certified);
  return kOk;
}

int cmd_attack(const GlobalOptions& opts, AttackMode mode) {
  const ExperimentConfig config = load_config(opts, mode);
  fs::create_directories(config.output_dir);
  const std::uint64_t seed = config.seeds.front();
  bool wrote_certificates = false;
  for (auto kind : config.schemes) {
    Cell cell{seed, "", kind, config.budget_ratio};
    ExperimentConfig single = config;
    single.axis = SweepAxis::budget_ratio;
    const CellSetup setup = prepare_cell(single, cell);
    const CellOutcome outcome = run_cell(setup, mode, !wrote_certificates);
    if (!wrote_certificates) {
      write_certificates_csv(outcome.clean_certificates, setup.attack.smoothing.alpha,
                             setup.attack.noise, config.output_dir / "certificates_clean.csv");
      wrote_certificates = true;
    }
    const std::string name = to_string(kind);
    const auto& report = outcome.report;
    write_attack_report_csv(report, setup.attack, config.output_dir / fmt::format("report_{}.csv", name));
    write_edge_flips(setup.graph.adjacency, *report.perturbation.binary,
                     config.output_dir / fmt::format("flips_{}.tsv", name));
    std::cout << fmt::format("{} {}: budget {} used {}, accuracy {:.4f} -> {:.4f} ({:.2f} s)\n",
                             to_string(mode), name, setup.attack.budget,
                             report.perturbation.popcount(), report.pre_attack_accuracy,
                             report.post_attack_accuracy, report.runtime_seconds);
  }
  return kOk;
}

int cmd_sweep(const GlobalOptions& opts) {
  const ExperimentConfig config = load_config(opts, std::nullopt);
  const SweepResult result = run_sweep(config, opts.resume);
  std::cout << fmt::format("{} cells, {} resumed, {} failed; results in {}\n", result.rows.size(),
                           result.skipped, result.failed, config.output_dir.string());
  return result.failed > 0 ? kPartialSweep : kOk;
}

int cmd_distribution(const GlobalOptions& opts, const std::string& flips_path,
                     const std::string& certificates_path, Index nodes) {
  if (flips_path.empty() || certificates_path.empty())
    throw ConfigError("report-distribution needs --flips and --certificates");
  const ExperimentConfig config = load_config(opts, std::nullopt);
  if (nodes <= 0) nodes = build_graph(config, config.seeds.front()).num_nodes();
  const EdgeMask delta = read_edge_flips(nodes, flips_path);
  const auto certificates = read_certificates_csv(certificates_path);
  fs::create_directories(config.output_dir);
  const fs::path path = config.output_dir / "distribution.csv";
  report_distribution(nodes, delta, certificates, path);
  for (const auto& row : perturbed_edge_distribution(nodes, delta, certificates)) {
    std::cout << fmt::format("K={}: {}\n",
                             row.certified_size ? std::to_string(*row.certified_size) : "none",
                             row.edges);
  }
  return kOk;
}

int cmd_profile(const GlobalOptions& opts, std::vector<int> samples) {
  const ExperimentConfig config = load_config(opts, std::nullopt);
  if (samples.empty()) samples = config.profile_samples;
  fs::create_directories(config.output_dir);
  for (const auto& row : runtime_profile(config, samples, config.output_dir / "profile.csv")) {
    std::cout << fmt::format("N={}: attack {:.3f} s, certification {:.3f} s\n", row.num_samples,
                             row.attack_seconds, row.certification_seconds);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Certified-robustness-guided graph attacks"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions opts;
  app.add_option("--config", opts.config_path, "Experiment config (key=value with [sections])");
  app.add_option("--seed", opts.seed, "Run a single seed instead of the configured list");
  app.add_option("--out", opts.out, "Output directory");
  app.add_option("--jobs", opts.jobs, "Worker threads for sweep cells")->check(CLI::PositiveNumber);
  app.add_flag("--resume", opts.resume, "Skip sweep cells already present in results.csv");

  auto* train_cmd = app.add_subcommand("train", "Train a clean GCN and save a checkpoint");
  std::string certify_flips;
  auto* certify_cmd = app.add_subcommand("certify", "Certify targets of the configured mode");
  certify_cmd->add_option("--flips", certify_flips, "Certify on the graph with these flips applied");
  auto* evasion_cmd = app.add_subcommand("attack-evasion", "Weighted PGD evasion attack");
  auto* poisoning_cmd = app.add_subcommand("attack-poisoning", "Weighted Minmax poisoning attack");
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a configured sweep");
  std::string dist_flips, dist_certs;
  Index dist_nodes = 0;
  auto* dist_cmd = app.add_subcommand("report-distribution",
                                      "Histogram of perturbed edges by endpoint certified size");
  dist_cmd->add_option("--flips", dist_flips, "Edge flip file")->required();
  dist_cmd->add_option("--certificates", dist_certs, "Certificate CSV")->required();
  dist_cmd->add_option("--nodes", dist_nodes, "Node count (defaults to the configured graph)");
  std::vector<int> profile_samples;
  auto* profile_cmd = app.add_subcommand("profile", "Attack and certification time per N");
  profile_cmd->add_option("--samples", profile_samples, "Sample counts N")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train_cmd) return cmd_train(opts);
    if (*certify_cmd) return cmd_certify(opts, certify_flips);
    if (*evasion_cmd) return cmd_attack(opts, AttackMode::evasion);
    if (*poisoning_cmd) return cmd_attack(opts, AttackMode::poisoning);
    if (*sweep_cmd) return cmd_sweep(opts);
    if (*dist_cmd) return cmd_distribution(opts, dist_flips, dist_certs, dist_nodes);
    if (*profile_cmd) return cmd_profile(opts, profile_samples);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kOk;
}
