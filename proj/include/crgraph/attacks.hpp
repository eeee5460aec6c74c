#pragma once

#include "crgraph/common.hpp"
#include "crgraph/gcn.hpp"
#include "crgraph/graph.hpp"
#include "crgraph/smoothing.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace crgraph {

struct WeightScheme {
  enum class Kind { uniform, random, degree, centrality, certified };

  Kind kind = Kind::certified;
  double a = 1.0;
  std::uint64_t seed = 0;

  /// Certified weights depend on the current graph and need refreshing.
  bool needs_certificates() const { return kind == Kind::certified; }
  void validate() const;
};

std::string to_string(WeightScheme::Kind kind);
WeightScheme::Kind parse_weight_scheme(const std::string& name);

struct AttackConfig {
  Index budget = 1;
  int iterations = 100;
  int refresh_interval = 10;
  // Perturbation step sizes <= 0 resolve to 0.1 * budget / iterations.
  double step_size = 0.0;          // PGD
  double inner_step_size = 1e-4;   // Minmax, model descent
  double outer_step_size = 0.0;    // Minmax, perturbation ascent
  LossKind loss;
  SmoothingConfig smoothing;
  NoiseSpec noise;
  WeightScheme scheme;
  int discretize_trials = 20;
  std::uint64_t seed = 0;
  int r_max = 2000;
  /// Minmax starts from a model trained on the clean graph instead of a
  /// fresh random initialization.
  bool pretrained_init = true;
  /// Keep every relaxed iterate in AttackReport::trajectory.
  bool record_trajectory = false;

  void validate() const;
  double resolved_step_size() const;
  double resolved_outer_step_size() const;
};

struct AttackReport {
  Perturbation perturbation;
  double pre_attack_accuracy = 0.0;
  double post_attack_accuracy = 0.0;
  std::vector<double> per_iteration_loss;
  std::vector<double> feasible_mass;
  std::vector<std::vector<double>> weights_history;
  std::vector<std::vector<double>> trajectory;
  /// Certificates from the last weight refresh (certified scheme only).
  std::vector<Certificate> last_certificates;
  double runtime_seconds = 0.0;
  double certification_seconds = 0.0;
};

/// Per-target weights: certified 1/(1+exp(a K)), degree 1/(1+exp(a deg)),
/// centrality 1/(1+exp(a cen)), random U(0,1), uniform 1.
std::vector<double> node_weights(const WeightScheme& scheme,
                                 std::span<const Certificate> certificates,
                                 const BinaryMatrix& adjacency, std::span<const Index> targets);

/// Σ_u w(u) ℓ(f(A'; u), y_u).
double cr_loss(const GCNParams& params, const Matrix& adjacency, const Matrix& features,
               const NodeObjective& objective);

/// Euclidean projection onto {p in [0,1]^m : Σ p <= budget}.
std::vector<double> project_budget(std::span<const double> relaxed, double budget);

using BinaryObjective = std::function<double(const EdgeMask&)>;

/// Best of the deterministic top-budget rounding and `trials` Bernoulli draws
/// (each cut to its top-budget entries), scored by `objective`.
EdgeMask discretize(std::span<const double> relaxed, Index budget, int trials,
                    std::uint64_t seed, const BinaryObjective& objective);

/// Weighted PGD evasion against fixed params over the test nodes.
AttackReport pgd_evasion(const GCNParams& params, const Graph& graph, const DataSplit& split,
                         const AttackConfig& config);

/// Weighted Minmax poisoning over the train nodes; reports test accuracy of a
/// model retrained on the perturbed graph.
AttackReport minmax_poisoning(const Graph& graph, const DataSplit& split,
                              const TrainConfig& train_config, const AttackConfig& config);

struct AccuracyPair {
  double pre = 0.0;
  double post = 0.0;
};

AccuracyPair evaluate_evasion(const GCNParams& params, const Graph& graph,
                              const DataSplit& split, const EdgeMask& delta);

/// Retrains with train_config on clean and perturbed graphs.
AccuracyPair evaluate_poisoning(const Graph& graph, const DataSplit& split,
                                const TrainConfig& train_config, const EdgeMask& delta);

/// Reads labels only for an allowed node set; any other read is counted as a
/// violation and throws. Poisoning attacks see test labels only through this.
class LabelView {
 public:
  LabelView(std::span<const int> labels, std::span<const Index> allowed);

  int at(Index node) const;
  std::vector<int> gather(std::span<const Index> nodes) const;

  /// Total violations across all views in this process.
  static Index violations();
  static void reset_violations();

 private:
  std::span<const int> labels_;
  std::vector<std::uint8_t> allowed_;
};

void write_attack_report_csv(const AttackReport& report, const AttackConfig& config,
                             const std::filesystem::path& path);

/// One "s<TAB>t<TAB>direction" line per flip; direction is "add" or "remove".
void write_edge_flips(const BinaryMatrix& adjacency, const EdgeMask& delta,
                      const std::filesystem::path& path);

EdgeMask read_edge_flips(Index num_nodes, const std::filesystem::path& path);

}  // namespace crgraph
