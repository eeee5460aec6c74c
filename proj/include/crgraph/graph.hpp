#pragma once

#include "crgraph/common.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace crgraph {

/// Node-classification instance: undirected binary adjacency, dense
/// features and class labels in [0, num_classes).
struct Graph {
  BinaryMatrix adjacency;
  Matrix features;
  std::vector<int> labels;
  int num_classes = 0;

  Index num_nodes() const { return adjacency.rows(); }
  Index feature_dim() const { return features.cols(); }
  Index num_edges() const;

  /// Throws ParameterError when any invariant is violated.
  void validate() const;
};

/// Disjoint, sorted node-index sets.
struct DataSplit {
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;

  /// Checks disjointness and range; train must be non-empty, test too when
  /// `require_test` is set.
  void validate(Index num_nodes, bool require_test = true) const;
};

/// Budgeted edge-flip variable over the upper-triangle index space.
struct Perturbation {
  std::vector<double> relaxed;
  std::optional<EdgeMask> binary;
  Index budget = 0;

  Index popcount() const;
  void validate(double tolerance = 1e-6) const;
};

struct LoadWarnings {
  Index self_loops = 0;
  Index duplicate_edges = 0;
};

/// Reads a TSV edge list, headerless CSV features and one label per line.
/// `num_classes` < 0 infers max(label) + 1.
Graph load_graph(const std::filesystem::path& edges_path,
                 const std::filesystem::path& features_path,
                 const std::filesystem::path& labels_path, int num_classes = -1,
                 LoadWarnings* warnings = nullptr);

void save_graph(const Graph& graph, const std::filesystem::path& edges_path,
                const std::filesystem::path& features_path,
                const std::filesystem::path& labels_path);

/// Stochastic block model with n/k nodes per block. Features are the one-hot
/// block indicator (first k columns) plus N(0, 0.5^2) noise.
Graph synth_sbm(Index n, int k, double p_in, double p_out, Index feature_dim,
                std::uint64_t seed);

struct SplitRatios {
  double train = 0.1;
  double val = 0.1;
  double test = 0.8;
};

/// Label-stratified random split; split sizes are floor(ratio * n).
DataSplit split_nodes(const Graph& graph, SplitRatios ratios, std::uint64_t seed);

/// A XOR delta on the upper triangle, mirrored. The input is not modified.
BinaryMatrix apply_perturbation(const BinaryMatrix& adjacency, const EdgeMask& delta);

/// Continuous surrogate of XOR: A + (1 - 2A) * delta, entry-wise.
Matrix relax_perturbation(const BinaryMatrix& adjacency, std::span<const double> delta);

/// Fraction of `mask` nodes whose prediction equals the label.
double classification_accuracy(std::span<const int> predictions,
                               std::span<const int> labels,
                               std::span<const Index> mask);

std::vector<Index> degrees(const BinaryMatrix& adjacency);

/// Eigenvector centrality by power iteration on A + I, scaled to max 1.
std::vector<double> eigenvector_centrality(const BinaryMatrix& adjacency,
                                           int max_iterations = 100,
                                           double tolerance = 1e-8);

/// Deterministic top-`budget` entries of `relaxed` among strictly positive ones.
EdgeMask top_budget_mask(std::span<const double> relaxed, Index budget);

/// Undirected edge flips of a binary perturbation, as (s, t) with s < t.
std::vector<std::pair<Index, Index>> flipped_pairs(Index num_nodes, const EdgeMask& delta);

}  // namespace crgraph
