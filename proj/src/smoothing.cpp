#include "crgraph/smoothing.hpp"

#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace crgraph {

void NoiseSpec::validate() const {
  if (!(beta > 0.5 && beta <= 1.0))
    throw ParameterError(fmt::format("beta must lie in (0.5, 1], got {}", beta));
}

void SmoothingConfig::validate() const {
  if (num_samples < 1) throw ParameterError("num_samples must be at least 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ParameterError(fmt::format("alpha must lie in (0, 1), got {}", alpha));
}

std::vector<Index> sample_noise_flips(const NoiseSpec& spec, Index num_nodes, std::uint64_t seed,
                                      std::uint64_t sample_index) {
  spec.validate();
  std::vector<Index> flips;
  const double flip_prob = 1.0 - spec.beta;
  if (flip_prob <= 0.0) return flips;
  const Index m = pair_count(num_nodes);
  std::mt19937_64 rng(mix_seed(seed, sample_index));
  // Gaps between successive flips are geometric, same law as m Bernoulli draws.
  std::geometric_distribution<Index> gap(flip_prob);
  for (Index pos = gap(rng); pos < m; pos += gap(rng) + 1) flips.push_back(pos);
  return flips;
}

EdgeMask sample_noise(const NoiseSpec& spec, Index num_nodes, std::uint64_t seed,
                      std::uint64_t sample_index) {
  EdgeMask mask(pair_count(num_nodes), 0);
  for (Index k : sample_noise_flips(spec, num_nodes, seed, sample_index)) mask[k] = 1;
  return mask;
}

namespace {

// XOR the noise flips into a real copy of the adjacency.
Matrix noisy_adjacency(const Matrix& base, Index n, std::span<const Index> flips) {
  Matrix out = base;
  for (Index k : flips) {
    const auto [s, t] = pair_from_index(n, k);
    out(s, t) = out(t, s) = 1.0 - out(s, t);
  }
  return out;
}

// Predictions of fixed params on noisy copies of one binary graph. Noisy graphs
// are sparse, so Â M is accumulated over an edge list instead of a dense product.
class SparsePredictor {
 public:
  SparsePredictor(const GCNParams& params, const BinaryMatrix& base, const Matrix& features)
      : params_(params), n_(base.rows()) {
    if (params.w1.rows() != features.cols())
      throw DimensionError("W1 rows must equal the feature dimension");
    xw_ = features * params.w1;
    for (Index s = 0; s < n_; ++s)
      for (Index t = s + 1; t < n_; ++t)
        if (base(s, t)) base_edges_.push_back({pair_index(n_, s, t), s, t});
  }

  std::vector<int> predict(std::span<const Index> flips) const {
    // Symmetric difference of the sorted base edges and the sorted flips.
    std::vector<Edge> edges;
    edges.reserve(base_edges_.size() + flips.size());
    std::size_t b = 0;
    for (Index k : flips) {
      while (b < base_edges_.size() && base_edges_[b].key < k) edges.push_back(base_edges_[b++]);
      if (b < base_edges_.size() && base_edges_[b].key == k) {
        ++b;
        continue;
      }
      const auto [s, t] = pair_from_index(n_, k);
      edges.push_back({k, s, t});
    }
    edges.insert(edges.end(), base_edges_.begin() + static_cast<std::ptrdiff_t>(b),
                 base_edges_.end());

    Vector scale = Vector::Ones(n_);
    for (const Edge& e : edges) {
      scale[e.s] += 1.0;
      scale[e.t] += 1.0;
    }
    scale = scale.cwiseSqrt().cwiseInverse();
    auto propagate = [&](const RowMatrix& m) {
      const RowMatrix scaled = scale.asDiagonal() * m;
      RowMatrix out = scaled;
      for (const Edge& e : edges) {
        out.row(e.s) += scaled.row(e.t);
        out.row(e.t) += scaled.row(e.s);
      }
      return RowMatrix(scale.asDiagonal() * out);
    };
    const RowMatrix hidden = propagate(xw_).cwiseMax(0.0);
    if (!hidden.allFinite()) throw NumericError("non-finite activation in layer 1");
    const Matrix logits = propagate(hidden * params_.w2);
    if (!logits.allFinite()) throw NumericError("non-finite activation in layer 2");
    return predict_from_logits(logits);
  }

 private:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  struct Edge {
    Index key, s, t;
  };
  const GCNParams& params_;
  Index n_;
  RowMatrix xw_;
  std::vector<Edge> base_edges_;
};

void check_targets(std::span<const Index> targets, Index n) {
  for (Index u : targets)
    if (u < 0 || u >= n) throw ParameterError(fmt::format("target node {} out of range", u));
}

LabelCounts reduce_predictions(const std::vector<std::vector<int>>& per_sample, Index targets,
                               Index classes) {
  LabelCounts counts = LabelCounts::Zero(targets, classes);
  for (const auto& preds : per_sample)
    for (Index i = 0; i < targets; ++i) ++counts(i, preds[i]);
  return counts;
}

}  // namespace

LabelCounts mc_counts_evasion(const GCNParams& params, const BinaryMatrix& adjacency,
                              const Matrix& features, std::span<const Index> targets,
                              const NoiseSpec& spec, const SmoothingConfig& config) {
  spec.validate();
  config.validate();
  const Index n = adjacency.rows();
  check_targets(targets, n);
  if (features.rows() != n) throw DimensionError("adjacency and feature shapes disagree");
  const SparsePredictor predictor(params, adjacency, features);
  std::vector<std::vector<int>> per_sample(config.num_samples);
  parallel_for(config.num_samples, config.threads, [&](Index j) {
    const auto flips = sample_noise_flips(spec, n, config.seed, j);
    const auto preds = predictor.predict(flips);
    auto& out = per_sample[j];
    out.reserve(targets.size());
    for (Index u : targets) out.push_back(preds[u]);
  });
  return reduce_predictions(per_sample, targets.size(), params.num_classes());
}

LabelCounts mc_counts_poisoning(const BinaryMatrix& adjacency, const Matrix& features,
                                std::span<const Index> train_nodes,
                                std::span<const int> train_labels, Index num_classes,
                                std::span<const Index> targets, const TrainConfig& train_config,
                                const NoiseSpec& spec, const SmoothingConfig& config) {
  spec.validate();
  config.validate();
  train_config.validate();
  const Index n = adjacency.rows();
  check_targets(targets, n);
  const Matrix base = adjacency.cast<double>();
  std::vector<std::vector<int>> per_sample(config.num_samples);
  parallel_for(config.num_samples, config.threads, [&](Index j) {
    const auto flips = sample_noise_flips(spec, n, config.seed, j);
    const Matrix noisy = noisy_adjacency(base, n, flips);
    TrainConfig replicate = train_config;
    if (config.vary_replicate_seeds) replicate.seed = mix_seed(train_config.seed, j);
    GCNParams model;
    try {
      model = train_model(noisy, features, train_nodes, train_labels, num_classes, replicate);
    } catch (const Error& e) {
      throw CertificationError(fmt::format("replicate {} failed: {}", j, e.what()), j);
    }
    const auto preds = predict_from_logits(forward(model, noisy, features));
    auto& out = per_sample[j];
    out.reserve(targets.size());
    for (Index u : targets) out.push_back(preds[u]);
  });
  return reduce_predictions(per_sample, targets.size(), num_classes);
}

LabelCounts mc_counts_poisoning(const Graph& graph, const DataSplit& split,
                                const TrainConfig& train_config, std::span<const Index> targets,
                                const NoiseSpec& spec, const SmoothingConfig& config) {
  std::vector<int> train_labels;
  for (Index u : split.train) train_labels.push_back(graph.labels[u]);
  return mc_counts_poisoning(graph.adjacency, graph.features, split.train, train_labels,
                             graph.num_classes, targets, train_config, spec, config);
}

double lower_bound_prob(Index count, Index total, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ParameterError(fmt::format("alpha must lie in (0, 1), got {}", alpha));
  if (total < 1 || count < 0 || count > total)
    throw ParameterError(fmt::format("need 0 <= count <= total, total >= 1 (got {}/{})", count,
                                     total));
  if (count == 0) return 0.0;
  return boost::math::ibeta_inv(static_cast<double>(count),
                                static_cast<double>(total - count + 1), alpha);
}

double worst_case_probability(double p_lower, double beta, Index radius) {
  if (radius == 0) return p_lower;
  // Region k: k of the r flipped pairs agree with the clean graph, with
  // likelihood ratio (beta/(1-beta))^(2k-r). The worst case keeps the highest
  // ratio regions, so the excluded 1 - p_lower mass fills k = 0, 1, ... first.
  // Working with the excluded mass stays exact as p_lower approaches 1.
  const double log_keep = std::log(beta);
  const double log_flip = std::log1p(-beta);
  double log_binom = 0.0;  // log C(r, k)
  double remaining = 1.0 - p_lower;
  double excluded = 0.0;
  for (Index k = 0; k <= radius && remaining > 0.0; ++k) {
    if (k > 0) log_binom += std::log(static_cast<double>(radius - k + 1) / static_cast<double>(k));
    const double px = std::exp(log_binom + k * log_keep + (radius - k) * log_flip);
    const double py = std::exp(log_binom + (radius - k) * log_keep + k * log_flip);
    if (remaining >= px) {
      excluded += py;
      remaining -= px;
    } else {
      excluded += py * (remaining / px);
      remaining = 0.0;
    }
  }
  return std::clamp(1.0 - excluded, 0.0, 1.0);
}

CertifiedRadius certified_size(double p_lower, const NoiseSpec& spec, int r_max) {
  if (!(p_lower >= 0.0 && p_lower <= 1.0))
    throw ParameterError(fmt::format("p_lower must lie in [0, 1], got {}", p_lower));
  if (!(spec.beta > 0.5 && spec.beta < 1.0))
    throw ParameterError(fmt::format("certification needs beta in (0.5, 1), got {}", spec.beta));
  if (r_max < 1) throw ParameterError("r_max must be positive");
  if (p_lower <= 0.5) return {};
  double previous = p_lower;
  for (int r = 1; r <= r_max; ++r) {
    const double rho = worst_case_probability(p_lower, spec.beta, r);
    if (rho > previous + 1e-12)
      throw CertificationError(
          fmt::format("worst-case probability increased from {} to {} at radius {}", previous,
                      rho, r),
          -1);
    if (rho <= 0.5) return {r - 1, false};
    previous = rho;
  }
  return {r_max, true};
}

Matrix exact_smoothed_probs(const GCNParams& params, const BinaryMatrix& adjacency,
                            const Matrix& features, const NoiseSpec& spec) {
  spec.validate();
  const Index n = adjacency.rows();
  const Index m = pair_count(n);
  if (m > kMaxEnumerablePairs)
    throw CapacityError(fmt::format("{} node pairs exceed the enumeration cap of {}", m,
                                    kMaxEnumerablePairs));
  const Matrix base = adjacency.cast<double>();
  Matrix probs = Matrix::Zero(n, params.num_classes());
  std::vector<Index> flips;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << m); ++mask) {
    flips.clear();
    for (Index k = 0; k < m; ++k)
      if (mask >> k & 1U) flips.push_back(k);
    const double weight = std::pow(spec.beta, static_cast<double>(m - flips.size())) *
                          std::pow(1.0 - spec.beta, static_cast<double>(flips.size()));
    if (weight == 0.0) continue;
    const auto preds = predict_from_logits(forward(params, noisy_adjacency(base, n, flips), features));
    for (Index u = 0; u < n; ++u) probs(u, preds[u]) += weight;
  }
  return probs;
}

std::vector<double> exact_smoothed_prob(const GCNParams& params, const BinaryMatrix& adjacency,
                                        const Matrix& features, Index node,
                                        const NoiseSpec& spec) {
  if (node < 0 || node >= adjacency.rows())
    throw ParameterError(fmt::format("node {} out of range", node));
  const Matrix probs = exact_smoothed_probs(params, adjacency, features, spec);
  return {probs.row(node).begin(), probs.row(node).end()};
}

std::vector<Certificate> certify_from_counts(const LabelCounts& counts,
                                             std::span<const Index> targets,
                                             std::span<const int> true_labels, double alpha,
                                             const NoiseSpec& spec, int r_max) {
  if (counts.rows() != static_cast<Index>(targets.size()) || true_labels.size() != targets.size())
    throw DimensionError("counts, targets and labels must align");
  std::vector<Certificate> out;
  out.reserve(targets.size());
  for (Index i = 0; i < counts.rows(); ++i) {
    Certificate cert;
    cert.node = targets[i];
    cert.true_label = true_labels[i];
    cert.counts.assign(counts.row(i).begin(), counts.row(i).end());
    Index best = 0;
    for (Index c = 1; c < counts.cols(); ++c)
      if (counts(i, c) > counts(i, best)) best = c;
    cert.smoothed_label = static_cast<int>(best);
    const Index total = counts.row(i).sum();
    cert.p_lower = lower_bound_prob(counts(i, cert.true_label), total, alpha);
    if (cert.smoothed_label == cert.true_label && cert.p_lower > 0.5) {
      const auto radius = certified_size(cert.p_lower, spec, r_max);
      cert.certified_size = radius.size;
      cert.saturated = radius.saturated;
    }
    out.push_back(std::move(cert));
  }
  return out;
}

std::vector<Certificate> certify_evasion(const GCNParams& params, const BinaryMatrix& adjacency,
                                         const Matrix& features, std::span<const Index> targets,
                                         std::span<const int> true_labels,
                                         const NoiseSpec& spec, const SmoothingConfig& config,
                                         int r_max) {
  const auto counts = mc_counts_evasion(params, adjacency, features, targets, spec, config);
  return certify_from_counts(counts, targets, true_labels, config.alpha, spec, r_max);
}

std::vector<Certificate> certify_poisoning(const BinaryMatrix& adjacency, const Matrix& features,
                                           std::span<const Index> train_nodes,
                                           std::span<const int> train_labels, Index num_classes,
                                           std::span<const Index> targets,
                                           std::span<const int> true_labels,
                                           const TrainConfig& train_config,
                                           const NoiseSpec& spec, const SmoothingConfig& config,
                                           int r_max) {
  const auto counts = mc_counts_poisoning(adjacency, features, train_nodes, train_labels,
                                          num_classes, targets, train_config, spec, config);
  return certify_from_counts(counts, targets, true_labels, config.alpha, spec, r_max);
}

void write_certificates_csv(const std::vector<Certificate>& certificates, double alpha,
                            const NoiseSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("{}: cannot open for writing", path.string()));
  out << "node,true_label,smoothed_label,top_count,N,alpha,beta,p_lower,K\n";
  for (const auto& c : certificates) {
    Index total = 0;
    for (int v : c.counts) total += v;
    const int top = c.counts.empty() ? 0 : c.counts[c.smoothed_label];
    out << fmt::format("{},{},{},{},{},{},{},{:.17g},{}\n", c.node, c.true_label,
                       c.smoothed_label, top, total, alpha, spec.beta, c.p_lower,
                       c.certified_size);
  }
}

std::vector<Certificate> read_certificates_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(fmt::format("{}: cannot open certificates", path.string()));
  std::vector<Certificate> out;
  std::string line;
  std::getline(in, line);  // header
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() != 9)
      throw LoadError(fmt::format("{}:{}: expected 9 columns", path.string(), lineno));
    try {
      Certificate c;
      c.node = std::stoll(fields[0]);
      c.true_label = std::stoi(fields[1]);
      c.smoothed_label = std::stoi(fields[2]);
      c.p_lower = std::stod(fields[7]);
      c.certified_size = std::stoi(fields[8]);
      out.push_back(std::move(c));
    } catch (const std::exception&) {
      throw LoadError(fmt::format("{}:{}: malformed certificate row", path.string(), lineno));
    }
  }
  return out;
}

}  // namespace crgraph
