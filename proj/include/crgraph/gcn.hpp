#pragma once

#include "crgraph/common.hpp"
#include "crgraph/graph.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace crgraph {

/// Two-layer GCN weights: logits = Â relu(Â X W1) W2.
struct GCNParams {
  Matrix w1;  // d x h
  Matrix w2;  // h x C

  Index hidden_dim() const { return w1.cols(); }
  Index input_dim() const { return w1.rows(); }
  Index num_classes() const { return w2.cols(); }
};

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 200;
  double weight_decay = 5e-4;
  int hidden_dim = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossKind {
  enum class Tag { cross_entropy, cw_margin };

  Tag tag = Tag::cross_entropy;
  double kappa = 0.0;

  static LossKind cross_entropy() { return {}; }
  static LossKind cw_margin(double kappa = 0.0) { return {Tag::cw_margin, kappa}; }
  void validate() const;
};

/// Loss terms Σ_i weights[i] * ℓ(logits(nodes[i]), labels[i]). Labels are
/// gathered per node so callers control which ground truth an attack sees.
struct NodeObjective {
  std::vector<Index> nodes;
  std::vector<int> labels;
  std::vector<double> weights;
  LossKind kind;

  void validate(Index num_nodes, Index num_classes) const;
};

/// Builds an objective over `nodes` with unit weights.
NodeObjective make_objective(std::span<const Index> nodes, std::span<const int> all_labels,
                             LossKind kind = LossKind::cross_entropy());

/// D^{-1/2} (A + I) D^{-1/2}; A may be real-valued (relaxed).
Matrix normalize_adjacency(const Matrix& adjacency);

Matrix forward(const GCNParams& params, const Matrix& adjacency, const Matrix& features);
Matrix forward(const GCNParams& params, const BinaryMatrix& adjacency, const Matrix& features);

/// Cross-entropy or CW margin max(max_{c != y} z_c - z_y, -kappa).
double node_loss(std::span<const double> logits, int label, LossKind kind);

/// Argmax per row, ties to the lowest class index.
std::vector<int> predict_from_logits(const Matrix& logits);
std::vector<int> predict_all(const GCNParams& params, const BinaryMatrix& adjacency,
                             const Matrix& features);

/// Σ w_i ℓ_i at the relaxed adjacency.
double weighted_loss(const GCNParams& params, const Matrix& adjacency, const Matrix& features,
                     const NodeObjective& objective);

struct Gradients {
  double loss = 0.0;
  Matrix w1;
  Matrix w2;
  std::vector<double> delta;  // upper-triangle, empty unless requested
};

enum class GradientParts : unsigned { params = 1, delta = 2, all = 3 };

/// Analytic gradients of the weighted objective at A'(δ) = A + (1 - 2A) ∘ δ.
/// The δ gradient sums the (s, t) and (t, s) contributions.
Gradients gradients(const GCNParams& params, const BinaryMatrix& clean_adjacency,
                    std::span<const double> delta, const Matrix& features,
                    const NodeObjective& objective, GradientParts parts = GradientParts::all);

/// Gradients at an arbitrary real adjacency; no δ part.
Gradients parameter_gradients(const GCNParams& params, const Matrix& adjacency,
                              const Matrix& features, const NodeObjective& objective);

/// Glorot-uniform initialization from `seed`.
GCNParams init_params(Index input_dim, Index hidden_dim, Index num_classes, std::uint64_t seed);

/// Full-batch gradient descent on the mean cross-entropy of `train_nodes` plus
/// (weight_decay / 2) ||W||^2. `loss_history` receives the loss before each step.
GCNParams train_model(const Matrix& adjacency, const Matrix& features,
                      std::span<const Index> train_nodes, std::span<const int> train_labels,
                      Index num_classes, const TrainConfig& config,
                      std::vector<double>* loss_history = nullptr);

GCNParams train(const Graph& graph, const DataSplit& split, const Matrix& adjacency,
                const TrainConfig& config, std::vector<double>* loss_history = nullptr);

GCNParams train(const Graph& graph, const DataSplit& split, const TrainConfig& config);

void save_checkpoint(const GCNParams& params, const std::filesystem::path& path);
GCNParams load_checkpoint(const std::filesystem::path& path);

}  // namespace crgraph
