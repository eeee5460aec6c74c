#pragma once

#include "crgraph/attacks.hpp"
#include "crgraph/common.hpp"
#include "crgraph/gcn.hpp"
#include "crgraph/graph.hpp"
#include "crgraph/smoothing.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace crgraph {

enum class AttackMode { evasion, poisoning };

std::string to_string(AttackMode mode);

/// Raised for malformed or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct DatasetSpec {
  bool synthetic = true;
  // SBM parameters
  Index nodes = 100;
  int blocks = 2;
  double p_in = 0.1;
  double p_out = 0.01;
  Index feature_dim = 16;
  std::uint64_t seed = 0;
  /// SBM seed is seed + cell seed, so each repetition draws a new graph.
  bool vary_with_seed = true;
  // file triple
  std::filesystem::path edges;
  std::filesystem::path features;
  std::filesystem::path labels;
  int num_classes = -1;
};

enum class SweepAxis { budget_ratio, beta, alpha, num_samples, a, scheme };

std::string to_string(SweepAxis axis);

struct ExperimentConfig {
  DatasetSpec dataset;
  SplitRatios ratios;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  TrainConfig train;
  AttackMode mode = AttackMode::evasion;
  AttackConfig attack;
  /// Budget as a fraction of the clean edge count, rounded down.
  double budget_ratio = 0.2;
  std::vector<WeightScheme::Kind> schemes{WeightScheme::Kind::certified};
  SweepAxis axis = SweepAxis::budget_ratio;
  std::vector<double> sweep_values;
  std::vector<WeightScheme::Kind> sweep_schemes;  // axis == scheme
  std::vector<int> profile_samples{5, 10, 20};
  std::filesystem::path output_dir = "results";
  int jobs = 1;

  void validate() const;
};

/// Defaults for each threat model: evasion T=100, INT=10, N=200; poisoning
/// T=10, INT=2, N=20; budget 20% of edges, beta 0.999, alpha 0.1, a 1.
ExperimentConfig default_config(AttackMode mode);

/// Parses the sectioned key=value format; throws ConfigError.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Everything one (seed, sweep value, scheme) cell needs.
struct Cell {
  std::uint64_t seed = 0;
  std::string value;  // canonical text of the sweep value
  WeightScheme::Kind scheme = WeightScheme::Kind::certified;
  double numeric_value = 0.0;
};

struct CellSetup {
  Graph graph;
  DataSplit split;
  TrainConfig train;
  AttackConfig attack;
};

std::vector<Cell> enumerate_cells(const ExperimentConfig& config);

/// Builds the graph, split and per-cell configs; no model is trained.
CellSetup prepare_cell(const ExperimentConfig& config, const Cell& cell);

Graph build_graph(const ExperimentConfig& config, std::uint64_t seed);

struct CellOutcome {
  AttackReport report;
  /// Certificates of the attack targets on the clean graph.
  std::vector<Certificate> clean_certificates;
};

/// Trains (evasion) and attacks one cell; optionally certifies the clean graph.
CellOutcome run_cell(const CellSetup& setup, AttackMode mode, bool certify_clean = false);

struct ResultRow {
  std::uint64_t seed = 0;
  std::string axis;
  std::string value;
  std::string scheme;
  std::string mode;
  Index budget = 0;
  Index budget_used = 0;
  double pre_accuracy = 0.0;
  double post_accuracy = 0.0;
  double runtime_seconds = 0.0;
  double certification_seconds = 0.0;
  bool ok = true;
  std::string reason;
};

struct SweepResult {
  std::vector<ResultRow> rows;
  Index failed = 0;
  Index skipped = 0;  // resumed cells
};

/// Runs every cell on `config.jobs` workers and writes results.csv,
/// summary.csv and runtime.csv into the output directory. Rows are ordered by
/// (seed, value, scheme) regardless of completion order.
SweepResult run_sweep(const ExperimentConfig& config, bool resume = false);

std::string results_csv_header();
std::string format_result_row(const ResultRow& row);

struct SummaryRow {
  std::string value;
  std::string scheme;
  Index count = 0;
  double pre_mean = 0.0;
  double pre_std = 0.0;
  double post_mean = 0.0;
  double post_std = 0.0;
};

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

/// Histogram key: certified size, or nullopt for edges touching no target.
struct DistributionRow {
  std::optional<int> certified_size;
  Index edges = 0;
};

/// Maps each flipped pair to the certified sizes of its endpoints that are
/// targets; pairs touching no target are counted under "none".
std::vector<DistributionRow> perturbed_edge_distribution(Index num_nodes, const EdgeMask& delta,
                                                         std::span<const Certificate> certificates);

void report_distribution(Index num_nodes, const EdgeMask& delta,
                         std::span<const Certificate> certificates,
                         const std::filesystem::path& path);

struct ProfileRow {
  int num_samples = 0;
  double attack_seconds = 0.0;
  double certification_seconds = 0.0;
};

/// Times one attack per sample count on the first seed; writes profile.csv.
/// Certified scheme is forced so the certification phase is exercised.
std::vector<ProfileRow> runtime_profile(const ExperimentConfig& config,
                                        std::span<const int> sample_counts,
                                        const std::filesystem::path& path);

}  // namespace crgraph
