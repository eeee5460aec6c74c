#pragma once

#include "crgraph/common.hpp"
#include "crgraph/gcn.hpp"
#include "crgraph/graph.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace crgraph {

/// Each pair keeps its edge status with probability beta.
struct NoiseSpec {
  double beta = 0.999;

  void validate() const;
};

struct SmoothingConfig {
  int num_samples = 200;
  double alpha = 0.1;
  std::uint64_t seed = 0;
  /// Worker threads for Monte Carlo replicates; counts do not depend on it.
  int threads = 1;
  /// Poisoning replicate j trains with mix_seed(train seed, j) when set,
  /// otherwise every replicate shares the training seed.
  bool vary_replicate_seeds = true;

  void validate() const;
};

struct Certificate {
  Index node = 0;
  int true_label = 0;
  std::vector<int> counts;
  int smoothed_label = 0;
  double p_lower = 0.0;
  int certified_size = 0;
  bool saturated = false;
};

/// Per-target label counts, |targets| x C.
using LabelCounts = Eigen::MatrixXi;

/// Flipped pair indices of noise sample `sample_index` (sorted).
std::vector<Index> sample_noise_flips(const NoiseSpec& spec, Index num_nodes, std::uint64_t seed,
                                      std::uint64_t sample_index);

/// Dense 0/1 form of sample_noise_flips.
EdgeMask sample_noise(const NoiseSpec& spec, Index num_nodes, std::uint64_t seed,
                      std::uint64_t sample_index);

/// Predictions of fixed params on N noisy copies of the graph.
LabelCounts mc_counts_evasion(const GCNParams& params, const BinaryMatrix& adjacency,
                              const Matrix& features, std::span<const Index> targets,
                              const NoiseSpec& spec, const SmoothingConfig& config);

/// Trains one classifier per noisy graph on (train_nodes, train_labels) and
/// predicts the targets on that same noisy graph.
LabelCounts mc_counts_poisoning(const BinaryMatrix& adjacency, const Matrix& features,
                                std::span<const Index> train_nodes,
                                std::span<const int> train_labels, Index num_classes,
                                std::span<const Index> targets, const TrainConfig& train_config,
                                const NoiseSpec& spec, const SmoothingConfig& config);

LabelCounts mc_counts_poisoning(const Graph& graph, const DataSplit& split,
                                const TrainConfig& train_config, std::span<const Index> targets,
                                const NoiseSpec& spec, const SmoothingConfig& config);

/// One-sided Clopper-Pearson bound: alpha-quantile of Beta(count, total - count + 1).
double lower_bound_prob(Index count, Index total, double alpha);

/// Smallest smoothed probability the class can keep once r pairs are flipped,
/// given it holds p_lower mass on the clean graph.
double worst_case_probability(double p_lower, double beta, Index radius);

struct CertifiedRadius {
  int size = 0;
  bool saturated = false;
};

/// Largest r <= r_max with worst_case_probability(r) > 1/2.
CertifiedRadius certified_size(double p_lower, const NoiseSpec& spec, int r_max = 2000);

inline constexpr int kMaxEnumerablePairs = 20;

/// Exact smoothed class probabilities of every node by enumerating all 2^m
/// noise masks; rows sum to 1. Requires m <= kMaxEnumerablePairs.
Matrix exact_smoothed_probs(const GCNParams& params, const BinaryMatrix& adjacency,
                            const Matrix& features, const NoiseSpec& spec);

std::vector<double> exact_smoothed_prob(const GCNParams& params, const BinaryMatrix& adjacency,
                                        const Matrix& features, Index node,
                                        const NoiseSpec& spec);

/// counts -> smoothed label -> p_lower of the true label -> K.
std::vector<Certificate> certify_from_counts(const LabelCounts& counts,
                                             std::span<const Index> targets,
                                             std::span<const int> true_labels, double alpha,
                                             const NoiseSpec& spec, int r_max = 2000);

std::vector<Certificate> certify_evasion(const GCNParams& params, const BinaryMatrix& adjacency,
                                         const Matrix& features, std::span<const Index> targets,
                                         std::span<const int> true_labels,
                                         const NoiseSpec& spec, const SmoothingConfig& config,
                                         int r_max = 2000);

std::vector<Certificate> certify_poisoning(const BinaryMatrix& adjacency, const Matrix& features,
                                           std::span<const Index> train_nodes,
                                           std::span<const int> train_labels, Index num_classes,
                                           std::span<const Index> targets,
                                           std::span<const int> true_labels,
                                           const TrainConfig& train_config,
                                           const NoiseSpec& spec, const SmoothingConfig& config,
                                           int r_max = 2000);

void write_certificates_csv(const std::vector<Certificate>& certificates, double alpha,
                            const NoiseSpec& spec, const std::filesystem::path& path);

std::vector<Certificate> read_certificates_csv(const std::filesystem::path& path);

}  // namespace crgraph
