#include "crgraph/attacks.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace crgraph {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::atomic<Index>& label_violations() {
  static std::atomic<Index> count{0};
  return count;
}

}  // namespace

void WeightScheme::validate() const {
  if (!(a > 0.0)) throw ParameterError(fmt::format("weight sharpness a must be positive, got {}", a));
}

std::string to_string(WeightScheme::Kind kind) {
  switch (kind) {
    case WeightScheme::Kind::uniform: return "uniform";
    case WeightScheme::Kind::random: return "random";
    case WeightScheme::Kind::degree: return "degree";
    case WeightScheme::Kind::centrality: return "centrality";
    case WeightScheme::Kind::certified: return "certified";
  }
  return "unknown";
}

WeightScheme::Kind parse_weight_scheme(const std::string& name) {
  for (auto kind : {WeightScheme::Kind::uniform, WeightScheme::Kind::random,
                    WeightScheme::Kind::degree, WeightScheme::Kind::centrality,
                    WeightScheme::Kind::certified})
    if (name == to_string(kind)) return kind;
  throw ParameterError(fmt::format("unknown weight scheme '{}'", name));
}

namespace {

double auto_step(double step, Index budget, int iterations) {
  if (step > 0.0) return step;
  return 0.1 * static_cast<double>(std::max<Index>(budget, 1)) / iterations;
}

}  // namespace

double AttackConfig::resolved_step_size() const { return auto_step(step_size, budget, iterations); }

double AttackConfig::resolved_outer_step_size() const {
  return auto_step(outer_step_size, budget, iterations);
}

void AttackConfig::validate() const {
  if (budget < 0) throw ParameterError("budget must be non-negative");
  if (iterations < 1) throw ParameterError("iterations must be at least 1");
  if (refresh_interval < 1) throw ParameterError("refresh interval must be at least 1");
  if (!(inner_step_size > 0.0)) throw ParameterError("inner step size must be positive");
  if (!std::isfinite(step_size) || !std::isfinite(outer_step_size))
    throw ParameterError("step sizes must be finite");
  if (discretize_trials < 0) throw ParameterError("discretize_trials must be non-negative");
  loss.validate();
  scheme.validate();
  if (scheme.needs_certificates()) {
    smoothing.validate();
    noise.validate();
  }
}

std::vector<double> node_weights(const WeightScheme& scheme,
                                 std::span<const Certificate> certificates,
                                 const BinaryMatrix& adjacency, std::span<const Index> targets) {
  scheme.validate();
  std::vector<double> w(targets.size(), 1.0);
  auto logistic = [&](double x) { return 1.0 / (1.0 + std::exp(scheme.a * x)); };
  switch (scheme.kind) {
    case WeightScheme::Kind::uniform:
      break;
    case WeightScheme::Kind::random: {
      std::mt19937_64 rng(scheme.seed);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (auto& v : w) v = unit(rng);
      break;
    }
    case WeightScheme::Kind::degree: {
      const auto deg = degrees(adjacency);
      for (std::size_t i = 0; i < targets.size(); ++i)
        w[i] = logistic(static_cast<double>(deg[targets[i]]));
      break;
    }
    case WeightScheme::Kind::centrality: {
      const auto cen = eigenvector_centrality(adjacency);
      for (std::size_t i = 0; i < targets.size(); ++i) w[i] = logistic(cen[targets[i]]);
      break;
    }
    case WeightScheme::Kind::certified: {
      std::unordered_map<Index, int> size_of;
      for (const auto& c : certificates) size_of[c.node] = c.certified_size;
      for (std::size_t i = 0; i < targets.size(); ++i) {
        auto it = size_of.find(targets[i]);
        if (it == size_of.end())
          throw ParameterError(fmt::format("no certificate for target node {}", targets[i]));
        w[i] = logistic(static_cast<double>(it->second));
      }
      break;
    }
  }
  return w;
}

double cr_loss(const GCNParams& params, const Matrix& adjacency, const Matrix& features,
               const NodeObjective& objective) {
  objective.validate(adjacency.rows(), params.num_classes());
  return weighted_loss(params, adjacency, features, objective);
}

std::vector<double> project_budget(std::span<const double> relaxed, double budget) {
  std::vector<double> out(relaxed.size());
  auto clipped_sum = [&](double mu) {
    double total = 0.0;
    for (std::size_t i = 0; i < relaxed.size(); ++i)
      total += std::clamp(relaxed[i] - mu, 0.0, 1.0);
    return total;
  };
  double mu = 0.0;
  if (clipped_sum(0.0) > budget) {
    double lo = 0.0;
    double hi = *std::max_element(relaxed.begin(), relaxed.end());
    for (int it = 0; it < 100 && hi - lo >= 1e-10; ++it) {
      const double mid = 0.5 * (lo + hi);
      (clipped_sum(mid) > budget ? lo : hi) = mid;
    }
    mu = hi;  // upper end keeps the result feasible
  }
  for (std::size_t i = 0; i < relaxed.size(); ++i) out[i] = std::clamp(relaxed[i] - mu, 0.0, 1.0);
  return out;
}

EdgeMask discretize(std::span<const double> relaxed, Index budget, int trials,
                    std::uint64_t seed, const BinaryObjective& objective) {
  EdgeMask best = top_budget_mask(relaxed, budget);
  double best_value = objective(best);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> drawn(relaxed.size());
  for (int trial = 0; trial < trials; ++trial) {
    for (std::size_t k = 0; k < relaxed.size(); ++k)
      drawn[k] = unit(rng) < relaxed[k] ? relaxed[k] : 0.0;
    EdgeMask candidate = top_budget_mask(drawn, budget);
    const double value = objective(candidate);
    if (value > best_value) {
      best_value = value;
      best = std::move(candidate);
    }
  }
  return best;
}

LabelView::LabelView(std::span<const int> labels, std::span<const Index> allowed)
    : labels_(labels), allowed_(labels.size(), 0) {
  for (Index u : allowed) allowed_.at(u) = 1;
}

int LabelView::at(Index node) const {
  if (node < 0 || node >= static_cast<Index>(labels_.size()) || !allowed_[node]) {
    ++label_violations();
    throw ParameterError(fmt::format("attack path read the label of protected node {}", node));
  }
  return labels_[node];
}

std::vector<int> LabelView::gather(std::span<const Index> nodes) const {
  std::vector<int> out;
  out.reserve(nodes.size());
  for (Index u : nodes) out.push_back(at(u));
  return out;
}

Index LabelView::violations() { return label_violations().load(); }
void LabelView::reset_violations() { label_violations() = 0; }

namespace {

double mass(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

Matrix dense(const BinaryMatrix& a) { return a.cast<double>(); }

void step_and_project(std::vector<double>& delta, const std::vector<double>& grad, double step,
                      Index budget) {
  for (std::size_t k = 0; k < delta.size(); ++k) delta[k] += step * grad[k];
  delta = project_budget(delta, static_cast<double>(budget));
}

}  // namespace

AttackReport pgd_evasion(const GCNParams& params, const Graph& graph, const DataSplit& split,
                         const AttackConfig& config) {
  config.validate();
  split.validate(graph.num_nodes());
  const auto start = Clock::now();
  const Index n = graph.num_nodes();
  const auto& targets = split.test;

  NodeObjective objective = make_objective(targets, graph.labels, config.loss);
  AttackReport report;
  report.perturbation.budget = config.budget;
  report.pre_attack_accuracy = classification_accuracy(
      predict_all(params, graph.adjacency, graph.features), graph.labels, targets);

  std::vector<double> delta(pair_count(n), 0.0);
  for (int t = 0; t < config.iterations; ++t) {
    if (t == 0 || (config.scheme.needs_certificates() && t % config.refresh_interval == 0)) {
      std::vector<Certificate> certs;
      if (config.scheme.needs_certificates()) {
        const auto cert_start = Clock::now();
        const BinaryMatrix current =
            apply_perturbation(graph.adjacency, top_budget_mask(delta, config.budget));
        SmoothingConfig smoothing = config.smoothing;
        smoothing.seed = mix_seed(config.smoothing.seed, t);
        certs = certify_evasion(params, current, graph.features, targets, objective.labels,
                                config.noise, smoothing, config.r_max);
        report.certification_seconds += seconds_since(cert_start);
      }
      objective.weights = node_weights(config.scheme, certs, graph.adjacency, targets);
      report.weights_history.push_back(objective.weights);
      report.last_certificates = std::move(certs);
    }
    const Gradients g =
        gradients(params, graph.adjacency, delta, graph.features, objective, GradientParts::delta);
    report.per_iteration_loss.push_back(g.loss);
    step_and_project(delta, g.delta, config.resolved_step_size(), config.budget);
    report.feasible_mass.push_back(mass(delta));
    if (config.record_trajectory) report.trajectory.push_back(delta);
  }

  const EdgeMask binary = discretize(
      delta, config.budget, config.discretize_trials, mix_seed(config.seed, 0xD15C),
      [&](const EdgeMask& candidate) {
        return cr_loss(params, dense(apply_perturbation(graph.adjacency, candidate)),
                       graph.features, objective);
      });
  report.post_attack_accuracy =
      classification_accuracy(predict_all(params, apply_perturbation(graph.adjacency, binary),
                                          graph.features),
                              graph.labels, targets);
  report.perturbation.relaxed = std::move(delta);
  report.perturbation.binary = binary;
  report.runtime_seconds = seconds_since(start);
  return report;
}

AttackReport minmax_poisoning(const Graph& graph, const DataSplit& split,
                              const TrainConfig& train_config, const AttackConfig& config) {
  config.validate();
  train_config.validate();
  split.validate(graph.num_nodes());
  const auto start = Clock::now();
  const Index n = graph.num_nodes();
  const auto& targets = split.train;

  AttackReport report;
  report.perturbation.budget = config.budget;

  std::vector<double> delta(pair_count(n), 0.0);
  EdgeMask binary;
  GCNParams theta;
  {
    // Only training labels are visible while the perturbation is optimized.
    const LabelView view(graph.labels, split.train);
    NodeObjective objective;
    objective.nodes = targets;
    objective.labels = view.gather(targets);
    objective.weights.assign(targets.size(), 1.0);
    objective.kind = config.loss;

    if (config.pretrained_init) {
      TrainConfig warm = train_config;
      warm.seed = mix_seed(config.seed, 0x7E7A);
      theta = train_model(dense(graph.adjacency), graph.features, targets, objective.labels,
                          graph.num_classes, warm);
    } else {
      theta = init_params(graph.feature_dim(), train_config.hidden_dim, graph.num_classes,
                          mix_seed(config.seed, 0x7E7A));
    }
    for (int t = 0; t < config.iterations; ++t) {
      if (t == 0 || (config.scheme.needs_certificates() && t % config.refresh_interval == 0)) {
        std::vector<Certificate> certs;
        if (config.scheme.needs_certificates()) {
          const auto cert_start = Clock::now();
          const BinaryMatrix current =
              apply_perturbation(graph.adjacency, top_budget_mask(delta, config.budget));
          SmoothingConfig smoothing = config.smoothing;
          smoothing.seed = mix_seed(config.smoothing.seed, t);
          certs = certify_poisoning(current, graph.features, targets, objective.labels,
                                    graph.num_classes, targets, objective.labels, train_config,
                                    config.noise, smoothing, config.r_max);
          report.certification_seconds += seconds_since(cert_start);
        }
        objective.weights = node_weights(config.scheme, certs, graph.adjacency, targets);
        report.weights_history.push_back(objective.weights);
        report.last_certificates = std::move(certs);
      }
      const Gradients inner = gradients(theta, graph.adjacency, delta, graph.features, objective,
                                        GradientParts::params);
      theta.w1 -= config.inner_step_size * inner.w1;
      theta.w2 -= config.inner_step_size * inner.w2;
      const Gradients outer = gradients(theta, graph.adjacency, delta, graph.features, objective,
                                        GradientParts::delta);
      report.per_iteration_loss.push_back(outer.loss);
      step_and_project(delta, outer.delta, config.resolved_outer_step_size(), config.budget);
      report.feasible_mass.push_back(mass(delta));
      if (config.record_trajectory) report.trajectory.push_back(delta);
    }

    binary = discretize(delta, config.budget, config.discretize_trials,
                        mix_seed(config.seed, 0xD15C), [&](const EdgeMask& candidate) {
                          return cr_loss(theta, dense(apply_perturbation(graph.adjacency, candidate)),
                                         graph.features, objective);
                        });
  }

  const auto accuracy = evaluate_poisoning(graph, split, train_config, binary);
  report.pre_attack_accuracy = accuracy.pre;
  report.post_attack_accuracy = accuracy.post;
  report.perturbation.relaxed = std::move(delta);
  report.perturbation.binary = std::move(binary);
  report.runtime_seconds = seconds_since(start);
  return report;
}

AccuracyPair evaluate_evasion(const GCNParams& params, const Graph& graph,
                              const DataSplit& split, const EdgeMask& delta) {
  AccuracyPair out;
  out.pre = classification_accuracy(predict_all(params, graph.adjacency, graph.features),
                                    graph.labels, split.test);
  out.post = classification_accuracy(
      predict_all(params, apply_perturbation(graph.adjacency, delta), graph.features),
      graph.labels, split.test);
  return out;
}

AccuracyPair evaluate_poisoning(const Graph& graph, const DataSplit& split,
                                const TrainConfig& train_config, const EdgeMask& delta) {
  AccuracyPair out;
  const GCNParams clean = train(graph, split, train_config);
  out.pre = classification_accuracy(predict_all(clean, graph.adjacency, graph.features),
                                    graph.labels, split.test);
  const BinaryMatrix poisoned = apply_perturbation(graph.adjacency, delta);
  const GCNParams victim = train(graph, split, dense(poisoned), train_config);
  out.post = classification_accuracy(predict_all(victim, poisoned, graph.features), graph.labels,
                                     split.test);
  return out;
}

void write_attack_report_csv(const AttackReport& report, const AttackConfig& config,
                             const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("{}: cannot open for writing", path.string()));
  out << "iteration,cr_loss,feasible_mass\n";
  for (std::size_t t = 0; t < report.per_iteration_loss.size(); ++t)
    out << fmt::format("{},{:.17g},{:.17g}\n", t, report.per_iteration_loss[t],
                       report.feasible_mass[t]);
  out << "scheme,budget,budget_used,pre_accuracy,post_accuracy,runtime_seconds\n";
  out << fmt::format("{},{},{},{:.17g},{:.17g},{:.6f}\n", to_string(config.scheme.kind),
                     config.budget, report.perturbation.popcount(), report.pre_attack_accuracy,
                     report.post_attack_accuracy, report.runtime_seconds);
}

void write_edge_flips(const BinaryMatrix& adjacency, const EdgeMask& delta,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(fmt::format("{}: cannot open for writing", path.string()));
  for (const auto& [s, t] : flipped_pairs(adjacency.rows(), delta))
    out << s << '\t' << t << '\t' << (adjacency(s, t) ? "remove" : "add") << '\n';
}

EdgeMask read_edge_flips(Index num_nodes, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(fmt::format("{}: cannot open edge flips", path.string()));
  EdgeMask mask(pair_count(num_nodes), 0);
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    Index s = -1, t = -1;
    std::string direction;
    if (!(fields >> s >> t >> direction) || s < 0 || t < 0 || s >= num_nodes ||
        t >= num_nodes || s == t)
      throw LoadError(fmt::format("{}:{}: malformed edge flip", path.string(), lineno));
    mask[pair_index(num_nodes, s, t)] = 1;
  }
  return mask;
}

}  // namespace crgraph
