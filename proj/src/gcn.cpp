#include "crgraph/gcn.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

namespace crgraph {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be positive");
  if (epochs < 1) throw ParameterError("epochs must be at least 1");
  if (!(weight_decay >= 0.0)) throw ParameterError("weight_decay must be non-negative");
  if (hidden_dim < 1) throw ParameterError("hidden_dim must be positive");
}

void LossKind::validate() const {
  if (!(kappa >= 0.0)) throw ParameterError("kappa must be non-negative");
}

void NodeObjective::validate(Index num_nodes, Index num_classes) const {
  if (labels.size() != nodes.size() || weights.size() != nodes.size())
    throw DimensionError(fmt::format("objective has {} nodes, {} labels, {} weights",
                                     nodes.size(), labels.size(), weights.size()));
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i] < 0 || nodes[i] >= num_nodes)
      throw ParameterError(fmt::format("objective node {} out of range", nodes[i]));
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw ParameterError(fmt::format("objective label {} out of range", labels[i]));
  }
  kind.validate();
}

NodeObjective make_objective(std::span<const Index> nodes, std::span<const int> all_labels,
                             LossKind kind) {
  NodeObjective obj;
  obj.nodes.assign(nodes.begin(), nodes.end());
  obj.labels.reserve(nodes.size());
  for (Index u : nodes) obj.labels.push_back(all_labels[u]);
  obj.weights.assign(nodes.size(), 1.0);
  obj.kind = kind;
  return obj;
}

namespace {

Matrix normalize_with_scale(const Matrix& adjacency, Vector& inv_sqrt) {
  const Index n = adjacency.rows();
  Matrix a_hat = adjacency;
  a_hat.diagonal().array() += 1.0;
  inv_sqrt = a_hat.rowwise().sum().array().rsqrt();
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) a_hat(i, j) *= inv_sqrt[i] * inv_sqrt[j];
  return a_hat;
}

}  // namespace

Matrix normalize_adjacency(const Matrix& adjacency) {
  Vector inv_sqrt;
  return normalize_with_scale(adjacency, inv_sqrt);
}

namespace {

void check_shapes(const GCNParams& params, const Matrix& adjacency, const Matrix& features) {
  if (adjacency.rows() != adjacency.cols() || adjacency.rows() != features.rows())
    throw DimensionError("adjacency and feature shapes disagree");
  if (params.w1.rows() != features.cols())
    throw DimensionError(fmt::format("W1 has {} rows but features have {} columns",
                                     params.w1.rows(), features.cols()));
  if (params.w2.rows() != params.w1.cols())
    throw DimensionError("W2 rows must equal hidden dimension");
}

// Intermediates of one forward pass, kept for backpropagation.
struct ForwardCache {
  Matrix norm;       // Â
  Vector scale;      // d^{-1/2} of A + I
  Matrix prop_x;     // Â X
  Matrix pre;        // Â X W1
  Matrix hidden;     // relu(pre)
  Matrix prop_h;     // Â H
  Matrix logits;     // Â H W2
};

ForwardCache run_forward(const GCNParams& params, const Matrix& adjacency,
                         const Matrix& features) {
  check_shapes(params, adjacency, features);
  ForwardCache c;
  c.norm = normalize_with_scale(adjacency, c.scale);
  c.prop_x = c.norm * features;
  c.pre = c.prop_x * params.w1;
  c.hidden = c.pre.cwiseMax(0.0);
  if (!c.hidden.allFinite()) throw NumericError("non-finite activation in layer 1");
  c.prop_h = c.norm * c.hidden;
  c.logits = c.prop_h * params.w2;
  if (!c.logits.allFinite()) throw NumericError("non-finite activation in layer 2");
  return c;
}

// Fills the loss gradient rows of G_Z for the objective nodes; returns the loss.
double loss_and_logit_gradient(const Matrix& logits, const NodeObjective& objective,
                               Matrix& grad_logits) {
  const Index classes = logits.cols();
  grad_logits.setZero(logits.rows(), classes);
  double total = 0.0;
  for (std::size_t i = 0; i < objective.nodes.size(); ++i) {
    const Index u = objective.nodes[i];
    const int y = objective.labels[i];
    const double w = objective.weights[i];
    Eigen::RowVectorXd z = logits.row(u);
    if (objective.kind.tag == LossKind::Tag::cross_entropy) {
      const double zmax = z.maxCoeff();
      Eigen::RowVectorXd e = (z.array() - zmax).exp();
      const double sum = e.sum();
      total += w * node_loss({z.data(), static_cast<std::size_t>(classes)}, y, objective.kind);
      if (w != 0.0) {
        e /= sum;
        e[y] -= 1.0;
        grad_logits.row(u) += w * e;
      }
    } else {
      Index best = -1;
      for (Index c = 0; c < classes; ++c)
        if (c != y && (best < 0 || z[c] > z[best])) best = c;
      if (best < 0) continue;  // single class: margin undefined, loss 0
      const double margin = z[best] - z[y];
      if (margin > -objective.kind.kappa) {
        total += w * margin;
        grad_logits(u, best) += w;
        grad_logits(u, y) -= w;
      } else {
        total += w * -objective.kind.kappa;
      }
    }
  }
  return total;
}

}  // namespace

Matrix forward(const GCNParams& params, const Matrix& adjacency, const Matrix& features) {
  return run_forward(params, adjacency, features).logits;
}

Matrix forward(const GCNParams& params, const BinaryMatrix& adjacency, const Matrix& features) {
  return forward(params, Matrix(adjacency.cast<double>()), features);
}

double node_loss(std::span<const double> logits, int label, LossKind kind) {
  const Index classes = static_cast<Index>(logits.size());
  if (label < 0 || label >= classes)
    throw ParameterError(fmt::format("label {} outside [0, {})", label, classes));
  if (kind.tag == LossKind::Tag::cross_entropy) {
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - zmax);
    return std::log(sum) + zmax - logits[label];
  }
  double best = -std::numeric_limits<double>::infinity();
  for (Index c = 0; c < classes; ++c)
    if (c != label) best = std::max(best, logits[c]);
  return std::max(best - logits[label], -kind.kappa);
}

std::vector<int> predict_from_logits(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (Index u = 0; u < logits.rows(); ++u) {
    Index best = 0;
    for (Index c = 1; c < logits.cols(); ++c)
      if (logits(u, c) > logits(u, best)) best = c;
    out[u] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict_all(const GCNParams& params, const BinaryMatrix& adjacency,
                             const Matrix& features) {
  return predict_from_logits(forward(params, adjacency, features));
}

double weighted_loss(const GCNParams& params, const Matrix& adjacency, const Matrix& features,
                     const NodeObjective& objective) {
  const Matrix logits = forward(params, adjacency, features);
  double total = 0.0;
  for (std::size_t i = 0; i < objective.nodes.size(); ++i) {
    const Eigen::RowVectorXd row = logits.row(objective.nodes[i]);
    total += objective.weights[i] *
             node_loss({row.data(), static_cast<std::size_t>(row.size())}, objective.labels[i],
                       objective.kind);
  }
  return total;
}

namespace {

Gradients backward(const GCNParams& params, const ForwardCache& c, const Matrix& features,
                   const NodeObjective& objective, bool want_adjacency, Matrix* grad_tilde) {
  Gradients g;
  Matrix grad_logits;
  g.loss = loss_and_logit_gradient(c.logits, objective, grad_logits);

  g.w2 = c.prop_h.transpose() * grad_logits;
  const Matrix grad_prop_h = grad_logits * params.w2.transpose();
  Matrix grad_pre = c.norm * grad_prop_h;  // Â symmetric
  grad_pre.array() *= (c.pre.array() > 0.0).cast<double>();
  g.w1 = c.prop_x.transpose() * grad_pre;

  if (want_adjacency) {
    // dL/dÂ, then through Â = S (A + I) S with S = diag(d^{-1/2}).
    const Matrix grad_norm =
        grad_prop_h * c.hidden.transpose() + grad_pre * (features * params.w1).transpose();
    const Index n = c.norm.rows();
    const Vector& s = c.scale;
    const Vector d = s.array().square().inverse();
    // With M = G ∘ Â, Σ_j G_kj Ã_kj s_j = (Σ_j M_kj) / s_k, and likewise by column.
    const Matrix m = grad_norm.cwiseProduct(c.norm);
    const Vector inv_s = s.cwiseInverse();
    const Vector row_term = m.rowwise().sum().cwiseProduct(inv_s);
    const Vector col_term = m.colwise().sum().transpose().cwiseProduct(inv_s);
    const Vector grad_degree =
        -0.5 * d.array().pow(-1.5) * (row_term + col_term).array();
    Matrix gt(n, n);
    for (Index l = 0; l < n; ++l)
      for (Index k = 0; k < n; ++k) gt(k, l) = grad_norm(k, l) * s[k] * s[l] + grad_degree[k];
    *grad_tilde = std::move(gt);
  }
  return g;
}

}  // namespace

Gradients gradients(const GCNParams& params, const BinaryMatrix& clean_adjacency,
                    std::span<const double> delta, const Matrix& features,
                    const NodeObjective& objective, GradientParts parts) {
  const Index n = clean_adjacency.rows();
  objective.validate(n, params.num_classes());
  const Matrix relaxed = relax_perturbation(clean_adjacency, delta);
  const ForwardCache cache = run_forward(params, relaxed, features);
  const bool want_delta =
      static_cast<unsigned>(parts) & static_cast<unsigned>(GradientParts::delta);
  Matrix grad_tilde;
  Gradients g = backward(params, cache, features, objective, want_delta, &grad_tilde);
  if (want_delta) {
    g.delta.resize(pair_count(n));
    Index k = 0;
    for (Index s = 0; s < n; ++s) {
      for (Index t = s + 1; t < n; ++t, ++k) {
        const double sign = 1.0 - 2.0 * clean_adjacency(s, t);
        g.delta[k] = sign * (grad_tilde(s, t) + grad_tilde(t, s));
      }
    }
    if (!std::all_of(g.delta.begin(), g.delta.end(), [](double v) { return std::isfinite(v); }))
      throw NumericError("non-finite perturbation gradient");
  }
  if (!(g.w1.allFinite() && g.w2.allFinite() && std::isfinite(g.loss)))
    throw NumericError("non-finite parameter gradient");
  return g;
}

Gradients parameter_gradients(const GCNParams& params, const Matrix& adjacency,
                              const Matrix& features, const NodeObjective& objective) {
  objective.validate(adjacency.rows(), params.num_classes());
  const ForwardCache cache = run_forward(params, adjacency, features);
  Gradients g = backward(params, cache, features, objective, false, nullptr);
  if (!(g.w1.allFinite() && g.w2.allFinite() && std::isfinite(g.loss)))
    throw NumericError("non-finite parameter gradient");
  return g;
}

GCNParams init_params(Index input_dim, Index hidden_dim, Index num_classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto glorot = [&](Index rows, Index cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    return m;
  };
  GCNParams p;
  p.w1 = glorot(input_dim, hidden_dim);
  p.w2 = glorot(hidden_dim, num_classes);
  return p;
}

GCNParams train_model(const Matrix& adjacency, const Matrix& features,
                      std::span<const Index> train_nodes, std::span<const int> train_labels,
                      Index num_classes, const TrainConfig& config,
                      std::vector<double>* loss_history) {
  config.validate();
  if (train_nodes.empty()) throw ParameterError("no training nodes");
  if (train_nodes.size() != train_labels.size())
    throw DimensionError("train node and label counts differ");

  GCNParams params = init_params(features.cols(), config.hidden_dim, num_classes, config.seed);
  NodeObjective objective;
  objective.nodes.assign(train_nodes.begin(), train_nodes.end());
  objective.labels.assign(train_labels.begin(), train_labels.end());
  objective.weights.assign(train_nodes.size(), 1.0 / static_cast<double>(train_nodes.size()));

  if (loss_history) loss_history->clear();
  const double decay = config.weight_decay;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Gradients g;
    try {
      g = parameter_gradients(params, adjacency, features, objective);
    } catch (const NumericError& e) {
      throw TrainingError(fmt::format("training diverged at epoch {}: {}", epoch, e.what()),
                          epoch);
    }
    const double loss =
        g.loss + 0.5 * decay * (params.w1.squaredNorm() + params.w2.squaredNorm());
    if (!std::isfinite(loss))
      throw TrainingError(fmt::format("training loss non-finite at epoch {}", epoch), epoch);
    if (loss_history) loss_history->push_back(loss);
    params.w1 -= config.learning_rate * (g.w1 + decay * params.w1);
    params.w2 -= config.learning_rate * (g.w2 + decay * params.w2);
  }
  return params;
}

GCNParams train(const Graph& graph, const DataSplit& split, const Matrix& adjacency,
                const TrainConfig& config, std::vector<double>* loss_history) {
  std::vector<int> labels;
  labels.reserve(split.train.size());
  for (Index u : split.train) labels.push_back(graph.labels[u]);
  return train_model(adjacency, graph.features, split.train, labels, graph.num_classes, config,
                     loss_history);
}

GCNParams train(const Graph& graph, const DataSplit& split, const TrainConfig& config) {
  return train(graph, split, Matrix(graph.adjacency.cast<double>()), config);
}

namespace {

constexpr char kMagic[8] = {'C', 'R', 'G', 'C', 'N', 'P', 'R', 'M'};
constexpr std::uint64_t kCheckpointVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(sizeof(T) == 8);
  std::uint64_t bits;
  std::memcpy(&bits, &value, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  out.write(reinterpret_cast<const char*>(&bits), 8);
}

template <typename T>
T read_le(std::istream& in) {
  std::uint64_t bits = 0;
  if (!in.read(reinterpret_cast<char*>(&bits), 8)) throw Error("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  T value;
  std::memcpy(&value, &bits, 8);
  return value;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  write_le<std::uint64_t>(out, m.rows());
  write_le<std::uint64_t>(out, m.cols());
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) write_le<double>(out, m(i, j));
}

Matrix read_matrix(std::istream& in) {
  const auto rows = read_le<std::uint64_t>(in);
  const auto cols = read_le<std::uint64_t>(in);
  if (rows > (1u << 24) || cols > (1u << 24)) throw Error("implausible checkpoint dimensions");
  Matrix m(rows, cols);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = read_le<double>(in);
  return m;
}

}  // namespace

// Layout: 8-byte magic "CRGCNPRM", u64 version, then W1 and W2 each as
// u64 rows, u64 cols and rows*cols f64 in row-major order, all little-endian.
void save_checkpoint(const GCNParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("{}: cannot open for writing", path.string()));
  out.write(kMagic, sizeof kMagic);
  write_le<std::uint64_t>(out, kCheckpointVersion);
  write_matrix(out, params.w1);
  write_matrix(out, params.w2);
}

GCNParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("{}: cannot open checkpoint", path.string()));
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw Error(fmt::format("{}: not a GCN checkpoint", path.string()));
  const auto version = read_le<std::uint64_t>(in);
  if (version != kCheckpointVersion)
    throw Error(fmt::format("{}: unsupported checkpoint version {}", path.string(), version));
  GCNParams p;
  p.w1 = read_matrix(in);
  p.w2 = read_matrix(in);
  if (p.w2.rows() != p.w1.cols()) throw Error("checkpoint layer shapes disagree");
  return p;
}

}  // namespace crgraph
