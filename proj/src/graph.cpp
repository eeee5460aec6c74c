#include "crgraph/graph.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <string_view>

namespace crgraph {

Index Graph::num_edges() const {
  Index count = 0;
  for (Index s = 0; s < num_nodes(); ++s)
    for (Index t = s + 1; t < num_nodes(); ++t) count += adjacency(s, t);
  return count;
}

void Graph::validate() const {
  const Index n = num_nodes();
  if (adjacency.cols() != n) throw ParameterError("adjacency must be square");
  if (features.rows() != n)
    throw ParameterError(fmt::format("feature rows {} != node count {}", features.rows(), n));
  if (static_cast<Index>(labels.size()) != n)
    throw ParameterError(fmt::format("label count {} != node count {}", labels.size(), n));
  if (num_classes < 1) throw ParameterError("num_classes must be positive");
  for (Index s = 0; s < n; ++s) {
    if (adjacency(s, s) != 0) throw ParameterError(fmt::format("self-loop at node {}", s));
    for (Index t = s + 1; t < n; ++t) {
      if (adjacency(s, t) > 1) throw ParameterError("adjacency entries must be 0 or 1");
      if (adjacency(s, t) != adjacency(t, s))
        throw ParameterError(fmt::format("adjacency not symmetric at ({}, {})", s, t));
    }
  }
  for (Index u = 0; u < n; ++u) {
    if (labels[u] < 0 || labels[u] >= num_classes)
      throw ParameterError(fmt::format("label {} of node {} outside [0, {})", labels[u], u,
                                       num_classes));
  }
  if (!features.allFinite()) throw ParameterError("features contain non-finite entries");
}

void DataSplit::validate(Index num_nodes, bool require_test) const {
  if (train.empty()) throw ParameterError("train split is empty");
  if (require_test && test.empty()) throw ParameterError("test split is empty");
  std::vector<std::uint8_t> seen(num_nodes, 0);
  for (const auto* part : {&train, &val, &test}) {
    for (Index u : *part) {
      if (u < 0 || u >= num_nodes)
        throw ParameterError(fmt::format("split node {} out of range", u));
      if (seen[u]++) throw ParameterError(fmt::format("node {} in more than one split", u));
    }
  }
}

Index Perturbation::popcount() const {
  if (!binary) return 0;
  return std::count(binary->begin(), binary->end(), std::uint8_t{1});
}

void Perturbation::validate(double tolerance) const {
  double total = 0.0;
  for (double v : relaxed) {
    if (!(v >= 0.0 && v <= 1.0)) throw ParameterError("relaxed entry outside [0, 1]");
    total += v;
  }
  if (total > static_cast<double>(budget) + tolerance)
    throw ParameterError(fmt::format("relaxed mass {} exceeds budget {}", total, budget));
  if (binary) {
    for (auto b : *binary)
      if (b > 1) throw ParameterError("binary perturbation entry not in {0, 1}");
    if (popcount() > budget)
      throw ParameterError(fmt::format("binary perturbation flips {} > budget {}", popcount(),
                                       budget));
  }
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line, std::string_view delims) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    const auto start = line.find_first_not_of(delims, pos);
    if (start == std::string_view::npos) break;
    auto end = line.find_first_of(delims, start);
    if (end == std::string_view::npos) end = line.size();
    out.push_back(line.substr(start, end - start));
    pos = end;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  text = trim(text);
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  return ec == std::errc{} && ptr == end;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(fmt::format("{}: cannot open file", path.string()));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
  return lines;
}

}  // namespace

Graph load_graph(const std::filesystem::path& edges_path,
                 const std::filesystem::path& features_path,
                 const std::filesystem::path& labels_path, int num_classes,
                 LoadWarnings* warnings) {
  Graph g;

  const auto label_lines = read_lines(labels_path);
  int max_label = -1;
  for (std::size_t i = 0; i < label_lines.size(); ++i) {
    const auto text = trim(label_lines[i]);
    if (text.empty()) continue;
    int label = 0;
    if (!parse_number(text, label) || label < 0)
      throw LoadError(fmt::format("{}:{}: invalid label '{}'", labels_path.string(), i + 1, text));
    if (num_classes >= 0 && label >= num_classes)
      throw LoadError(fmt::format("{}:{}: label {} outside [0, {})", labels_path.string(), i + 1,
                                  label, num_classes));
    max_label = std::max(max_label, label);
    g.labels.push_back(label);
  }
  const Index n = static_cast<Index>(g.labels.size());
  if (n == 0) throw LoadError(fmt::format("{}: no labels", labels_path.string()));
  g.num_classes = num_classes >= 0 ? num_classes : max_label + 1;

  const auto feature_lines = read_lines(features_path);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < feature_lines.size(); ++i) {
    if (trim(feature_lines[i]).empty()) continue;
    std::vector<double> row;
    for (auto field : split_fields(feature_lines[i], ",")) {
      double v = 0.0;
      if (!parse_number(field, v) || !std::isfinite(v))
        throw LoadError(fmt::format("{}:{}: invalid or non-finite feature '{}'",
                                    features_path.string(), i + 1, trim(field)));
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw LoadError(fmt::format("{}:{}: expected {} columns, found {}", features_path.string(),
                                  i + 1, rows.front().size(), row.size()));
    rows.push_back(std::move(row));
  }
  if (static_cast<Index>(rows.size()) != n)
    throw LoadError(fmt::format("{}: {} feature rows but {} labels", features_path.string(),
                                rows.size(), n));
  const Index d = rows.front().size();
  g.features.resize(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) g.features(i, j) = rows[i][j];

  g.adjacency = BinaryMatrix::Zero(n, n);
  LoadWarnings local;
  const auto edge_lines = read_lines(edges_path);
  for (std::size_t i = 0; i < edge_lines.size(); ++i) {
    auto line = trim(edge_lines[i]);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_fields(line, " \t");
    Index u = 0, v = 0;
    if (fields.size() != 2 || !parse_number(fields[0], u) || !parse_number(fields[1], v))
      throw LoadError(fmt::format("{}:{}: expected 'u<TAB>v'", edges_path.string(), i + 1));
    if (u < 0 || v < 0 || u >= n || v >= n)
      throw LoadError(fmt::format("{}:{}: node index out of range [0, {})", edges_path.string(),
                                  i + 1, n));
    if (u == v) {
      ++local.self_loops;
      continue;
    }
    if (g.adjacency(u, v)) {
      ++local.duplicate_edges;
      continue;
    }
    g.adjacency(u, v) = g.adjacency(v, u) = 1;
  }
  if (local.self_loops || local.duplicate_edges)
    warn(fmt::format("{}: dropped {} self-loops and {} duplicate edges", edges_path.string(),
                     local.self_loops, local.duplicate_edges));
  if (warnings) *warnings = local;

  g.validate();
  return g;
}

void save_graph(const Graph& graph, const std::filesystem::path& edges_path,
                const std::filesystem::path& features_path,
                const std::filesystem::path& labels_path) {
  std::ofstream edges(edges_path), features(features_path), labels(labels_path);
  if (!edges || !features || !labels) throw Error("cannot open graph output files");
  const Index n = graph.num_nodes();
  for (Index s = 0; s < n; ++s)
    for (Index t = s + 1; t < n; ++t)
      if (graph.adjacency(s, t)) edges << s << '\t' << t << '\n';
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < graph.feature_dim(); ++j)
      features << (j ? "," : "") << fmt::format("{:.17g}", graph.features(i, j));
    features << '\n';
    labels << graph.labels[i] << '\n';
  }
}

Graph synth_sbm(Index n, int k, double p_in, double p_out, Index feature_dim,
                std::uint64_t seed) {
  if (!(0.0 <= p_out && p_out < p_in && p_in <= 1.0))
    throw ParameterError(fmt::format("need 0 <= p_out < p_in <= 1, got p_in={} p_out={}", p_in,
                                     p_out));
  if (k < 1 || n < k || n % k != 0)
    throw ParameterError(fmt::format("node count {} must be a positive multiple of k={}", n, k));
  if (feature_dim < k)
    throw ParameterError(fmt::format("feature_dim {} must be at least k={}", feature_dim, k));

  const Index block = n / k;
  Graph g;
  g.num_classes = k;
  g.labels.resize(n);
  for (Index u = 0; u < n; ++u) g.labels[u] = static_cast<int>(u / block);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  g.adjacency = BinaryMatrix::Zero(n, n);
  for (Index s = 0; s < n; ++s) {
    for (Index t = s + 1; t < n; ++t) {
      const double p = g.labels[s] == g.labels[t] ? p_in : p_out;
      if (unit(rng) < p) g.adjacency(s, t) = g.adjacency(t, s) = 1;
    }
  }

  std::normal_distribution<double> noise(0.0, 0.5);
  g.features.resize(n, feature_dim);
  for (Index u = 0; u < n; ++u)
    for (Index j = 0; j < feature_dim; ++j)
      g.features(u, j) = (j == g.labels[u] ? 1.0 : 0.0) + noise(rng);
  return g;
}

namespace {

// Largest-remainder allocation of `target` items across classes with per-class
// capacities; `ideal[c]` is the proportional share.
std::vector<Index> allocate(Index target, const std::vector<double>& ideal,
                            const std::vector<Index>& capacity) {
  const std::size_t k = ideal.size();
  std::vector<Index> quota(k);
  Index assigned = 0;
  for (std::size_t c = 0; c < k; ++c) {
    quota[c] = std::min<Index>(static_cast<Index>(std::floor(ideal[c] + 1e-9)), capacity[c]);
    assigned += quota[c];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ideal[a] - std::floor(ideal[a] + 1e-9) > ideal[b] - std::floor(ideal[b] + 1e-9);
  });
  while (assigned < target) {
    bool progressed = false;
    for (std::size_t c : order) {
      if (assigned >= target) break;
      if (quota[c] < capacity[c]) {
        ++quota[c];
        ++assigned;
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  return quota;
}

}  // namespace

DataSplit split_nodes(const Graph& graph, SplitRatios ratios, std::uint64_t seed) {
  if (!(ratios.train > 0.0) || ratios.val < 0.0 || ratios.test < 0.0 ||
      ratios.train + ratios.val + ratios.test > 1.0 + 1e-12)
    throw ParameterError("split ratios must be non-negative, train positive, sum <= 1");

  const Index n = graph.num_nodes();
  const int k = graph.num_classes;
  std::vector<std::vector<Index>> by_class(k);
  for (Index u = 0; u < n; ++u) by_class[graph.labels[u]].push_back(u);

  std::mt19937_64 rng(seed);
  for (auto& members : by_class) std::shuffle(members.begin(), members.end(), rng);

  std::vector<Index> capacity(k);
  for (int c = 0; c < k; ++c) {
    capacity[c] = static_cast<Index>(by_class[c].size());
    if (capacity[c] > 0 && capacity[c] < 3)
      warn(fmt::format("class {} has only {} nodes; it cannot appear in every split", c,
                       capacity[c]));
  }

  auto share = [&](double ratio) {
    std::vector<double> ideal(k);
    for (int c = 0; c < k; ++c) ideal[c] = ratio * static_cast<double>(by_class[c].size());
    return ideal;
  };
  auto total = [&](double ratio) {
    return static_cast<Index>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  };

  auto train_q = allocate(total(ratios.train), share(ratios.train), capacity);
  // Every non-empty class gets a training node when another class can spare one.
  for (int c = 0; c < k; ++c) {
    if (train_q[c] > 0 || capacity[c] == 0) continue;
    auto donor = std::max_element(train_q.begin(), train_q.end()) - train_q.begin();
    if (train_q[donor] > 1) {
      --train_q[donor];
      ++train_q[c];
    }
  }
  for (int c = 0; c < k; ++c) capacity[c] -= train_q[c];
  auto val_q = allocate(total(ratios.val), share(ratios.val), capacity);
  for (int c = 0; c < k; ++c) capacity[c] -= val_q[c];
  auto test_q = allocate(total(ratios.test), share(ratios.test), capacity);

  DataSplit split;
  for (int c = 0; c < k; ++c) {
    const auto& members = by_class[c];
    Index pos = 0;
    for (Index i = 0; i < train_q[c]; ++i) split.train.push_back(members[pos++]);
    for (Index i = 0; i < val_q[c]; ++i) split.val.push_back(members[pos++]);
    for (Index i = 0; i < test_q[c]; ++i) split.test.push_back(members[pos++]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

BinaryMatrix apply_perturbation(const BinaryMatrix& adjacency, const EdgeMask& delta) {
  const Index n = adjacency.rows();
  if (static_cast<Index>(delta.size()) != pair_count(n))
    throw DimensionError(fmt::format("perturbation length {} != {} pairs", delta.size(),
                                     pair_count(n)));
  BinaryMatrix out = adjacency;
  Index k = 0;
  for (Index s = 0; s < n; ++s) {
    for (Index t = s + 1; t < n; ++t, ++k) {
      if (delta[k]) {
        out(s, t) ^= 1;
        out(t, s) = out(s, t);
      }
    }
  }
  return out;
}

Matrix relax_perturbation(const BinaryMatrix& adjacency, std::span<const double> delta) {
  const Index n = adjacency.rows();
  if (static_cast<Index>(delta.size()) != pair_count(n))
    throw DimensionError(fmt::format("perturbation length {} != {} pairs", delta.size(),
                                     pair_count(n)));
  Matrix out = adjacency.cast<double>();
  Index k = 0;
  for (Index s = 0; s < n; ++s) {
    for (Index t = s + 1; t < n; ++t, ++k) {
      const double d = delta[k];
      if (!(d >= 0.0 && d <= 1.0))
        throw ParameterError(fmt::format("relaxed entry {} = {} outside [0, 1]", k, d));
      const double a = out(s, t);
      out(s, t) = out(t, s) = a + (1.0 - 2.0 * a) * d;
    }
  }
  return out;
}

double classification_accuracy(std::span<const int> predictions, std::span<const int> labels,
                               std::span<const Index> mask) {
  if (mask.empty()) throw ParameterError("accuracy mask is empty");
  Index correct = 0;
  for (Index u : mask) correct += predictions[u] == labels[u];
  return static_cast<double>(correct) / static_cast<double>(mask.size());
}

std::vector<Index> degrees(const BinaryMatrix& adjacency) {
  std::vector<Index> deg(adjacency.rows());
  for (Index u = 0; u < adjacency.rows(); ++u) deg[u] = adjacency.row(u).cast<Index>().sum();
  return deg;
}

std::vector<double> eigenvector_centrality(const BinaryMatrix& adjacency, int max_iterations,
                                           double tolerance) {
  const Index n = adjacency.rows();
  Matrix a = adjacency.cast<double>();
  a.diagonal().array() += 1.0;  // shift keeps bipartite graphs from oscillating
  Vector x = Vector::Ones(n);
  for (int it = 0; it < max_iterations; ++it) {
    Vector next = a * x;
    next /= next.maxCoeff();
    const double change = (next - x).cwiseAbs().maxCoeff();
    x = std::move(next);
    if (change < tolerance) break;
  }
  return {x.data(), x.data() + n};
}

EdgeMask top_budget_mask(std::span<const double> relaxed, Index budget) {
  std::vector<Index> order;
  for (Index k = 0; k < static_cast<Index>(relaxed.size()); ++k)
    if (relaxed[k] > 0.0) order.push_back(k);
  const Index keep = std::min<Index>(budget, order.size());
  std::partial_sort(order.begin(), order.begin() + keep, order.end(), [&](Index a, Index b) {
    return relaxed[a] > relaxed[b] || (relaxed[a] == relaxed[b] && a < b);
  });
  EdgeMask mask(relaxed.size(), 0);
  for (Index i = 0; i < keep; ++i) mask[order[i]] = 1;
  return mask;
}

std::vector<std::pair<Index, Index>> flipped_pairs(Index num_nodes, const EdgeMask& delta) {
  std::vector<std::pair<Index, Index>> out;
  Index k = 0;
  for (Index s = 0; s < num_nodes; ++s)
    for (Index t = s + 1; t < num_nodes; ++t, ++k)
      if (delta[k]) out.emplace_back(s, t);
  return out;
}

}  // namespace crgraph
