#pragma once

#include "crgraph/gcn.hpp"
#include "crgraph/graph.hpp"

#include <random>
#include <vector>

namespace fixture {

using namespace crgraph;

/// Erdos-Renyi adjacency with Gaussian features and uniform labels.
inline Graph random_graph(Index n, Index d, int classes, double p_edge, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution edge(p_edge);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> label(0, classes - 1);
  Graph g;
  g.adjacency = BinaryMatrix::Zero(n, n);
  for (Index s = 0; s < n; ++s)
    for (Index t = s + 1; t < n; ++t)
      if (edge(rng)) g.adjacency(s, t) = g.adjacency(t, s) = 1;
  g.features = Matrix(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) g.features(i, j) = gauss(rng);
  for (Index i = 0; i < n; ++i) g.labels.push_back(label(rng));
  g.num_classes = classes;
  return g;
}

inline std::vector<double> uniform_vector(std::size_t size, double lo, double hi,
                                          std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> out(size);
  for (auto& v : out) v = u(rng);
  return out;
}

inline std::vector<Index> all_nodes(Index n) {
  std::vector<Index> nodes(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) nodes[static_cast<std::size_t>(i)] = i;
  return nodes;
}

/// Two disjoint 2-cliques with block features; linearly separable.
inline Graph toy_cliques() { return synth_sbm(4, 2, 1.0, 0.0, 2, 7); }

}  // namespace fixture
