#include "crgraph/gcn.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace crgraph;

TEST_CASE("normalize_adjacency on small closed forms") {
  const Matrix zero = Matrix::Zero(2, 2);
  CHECK((normalize_adjacency(zero) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);

  Matrix k2(2, 2);
  k2 << 0, 1, 1, 0;
  const Matrix a = normalize_adjacency(k2);
  for (Index i = 0; i < 2; ++i)
    for (Index j = 0; j < 2; ++j) CHECK(a(i, j) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("normalize_adjacency matches the per-entry formula, relaxed input included") {
  const Graph g = fixture::random_graph(5, 2, 2, 0.5, 3);
  const auto delta = fixture::uniform_vector(pair_count(5), 0.0, 1.0, 4);
  for (const Matrix& a : {Matrix(g.adjacency.cast<double>()), relax_perturbation(g.adjacency, delta)}) {
    const Matrix hat = normalize_adjacency(a);
    for (Index i = 0; i < 5; ++i)
      for (Index j = 0; j < 5; ++j)
        CHECK(hat(i, j) == doctest::Approx(oracle::normalized_entry(a, i, j)).epsilon(1e-13));
  }
}

TEST_CASE("forward with W2 = 0 predicts class 0 everywhere") {
  const Graph g = fixture::random_graph(6, 3, 3, 0.4, 1);
  GCNParams p = init_params(3, 4, 3, 2);
  p.w2.setZero();
  const Matrix logits = forward(p, g.adjacency, g.features);
  CHECK(logits.cwiseAbs().maxCoeff() == 0.0);
  for (int y : predict_all(p, g.adjacency, g.features)) CHECK(y == 0);
}

TEST_CASE("forward on a single isolated node is relu(x W1) W2") {
  GCNParams p = init_params(3, 4, 2, 5);
  Matrix x(1, 3);
  x << 0.3, -1.2, 0.7;
  const Matrix logits = forward(p, Matrix(Matrix::Zero(1, 1)), x);
  const Matrix expected = (x * p.w1).cwiseMax(0.0) * p.w2;
  CHECK((logits - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward on a relaxed binary delta equals forward on the XOR graph") {
  const Graph g = fixture::random_graph(8, 3, 2, 0.4, 6);
  const GCNParams p = init_params(3, 5, 2, 7);
  const Index m = pair_count(8);
  EdgeMask bin(m, 0);
  std::vector<double> real(m, 0.0);
  for (Index k = 0; k < m; k += 5) {
    bin[k] = 1;
    real[k] = 1.0;
  }
  const Matrix a = forward(p, relax_perturbation(g.adjacency, real), g.features);
  const Matrix b = forward(p, apply_perturbation(g.adjacency, bin), g.features);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward after one relaxed change equals a from-scratch recomputation") {
  const Graph g = fixture::random_graph(5, 2, 2, 0.5, 8);
  const GCNParams p = init_params(2, 3, 2, 9);
  std::vector<double> delta(pair_count(5), 0.0);
  delta[pair_index(5, 1, 3)] = 0.4;
  Matrix a = g.adjacency.cast<double>();
  const double v = a(1, 3) + (1.0 - 2.0 * a(1, 3)) * 0.4;
  a(1, 3) = a(3, 1) = v;
  Matrix hat(5, 5);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j) hat(i, j) = oracle::normalized_entry(a, i, j);
  const Matrix expected = hat * (hat * g.features * p.w1).cwiseMax(0.0) * p.w2;
  const Matrix got = forward(p, relax_perturbation(g.adjacency, delta), g.features);
  CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward reports non-finite layers") {
  const Graph g = fixture::random_graph(4, 2, 2, 0.5, 1);
  GCNParams p = init_params(2, 3, 2, 1);
  p.w1(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(forward(p, g.adjacency, g.features), NumericError);
  try {
    forward(p, g.adjacency, g.features);
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
}

TEST_CASE("node_loss examples") {
  const std::vector<double> uniform{0.7, 0.7, 0.7, 0.7};
  CHECK(node_loss(uniform, 2, LossKind::cross_entropy()) == doctest::Approx(std::log(4.0)));
  CHECK(node_loss(std::vector<double>{5, 0, 0}, 0, LossKind::cw_margin(0.0)) == 0.0);
  CHECK(node_loss(std::vector<double>{0, 3, 1}, 0, LossKind::cw_margin(10.0)) == 3.0);
  CHECK(node_loss(std::vector<double>{5, 0, 0}, 0, LossKind::cw_margin(10.0)) == -5.0);
  // Large logits stay finite thanks to max subtraction.
  CHECK(std::isfinite(node_loss(std::vector<double>{1000, -1000}, 1, LossKind::cross_entropy())));
  CHECK(node_loss(std::vector<double>{1000, -1000}, 1, LossKind::cross_entropy()) ==
        doctest::Approx(2000.0));
}

TEST_CASE("gradients vanish for zero weights and scale linearly with weights") {
  const Graph g = fixture::random_graph(6, 3, 3, 0.4, 2);
  const GCNParams p = init_params(3, 4, 3, 3);
  const auto delta = fixture::uniform_vector(pair_count(6), 0.1, 0.9, 4);
  NodeObjective obj = make_objective(fixture::all_nodes(6), g.labels);
  obj.weights = fixture::uniform_vector(6, 0.1, 1.0, 5);
  const Gradients base = gradients(p, g.adjacency, delta, g.features, obj);

  NodeObjective doubled = obj;
  for (auto& w : doubled.weights) w *= 2.0;
  const Gradients twice = gradients(p, g.adjacency, delta, g.features, doubled);
  CHECK((twice.w1 - 2.0 * base.w1).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((twice.w2 - 2.0 * base.w2).cwiseAbs().maxCoeff() < 1e-14);
  for (std::size_t k = 0; k < delta.size(); ++k)
    CHECK(std::abs(twice.delta[k] - 2.0 * base.delta[k]) < 1e-14);

  NodeObjective zero = obj;
  std::fill(zero.weights.begin(), zero.weights.end(), 0.0);
  const Gradients none = gradients(p, g.adjacency, delta, g.features, zero);
  CHECK(none.w1.cwiseAbs().maxCoeff() == 0.0);
  CHECK(none.w2.cwiseAbs().maxCoeff() == 0.0);
  for (double v : none.delta) CHECK(v == 0.0);
  CHECK(none.loss == 0.0);
}

TEST_CASE("gradients match central finite differences") {
  for (int kind = 0; kind < 2; ++kind) {
    const LossKind loss = kind == 0 ? LossKind::cross_entropy() : LossKind::cw_margin(0.5);
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const Graph g = fixture::random_graph(6, 3, 3, 0.4, seed);
      const GCNParams p = init_params(3, 5, 3, seed + 100);
      const auto delta = fixture::uniform_vector(pair_count(6), 0.1, 0.9, seed + 200);
      NodeObjective obj = make_objective(fixture::all_nodes(6), g.labels, loss);
      obj.weights = fixture::uniform_vector(6, 0.1, 1.0, seed + 300);
      const auto fd = oracle::gradient_check(p, g.adjacency, delta, g.features, obj);
      INFO("kind " << kind << " seed " << seed << " analytic " << fd.worst_analytic
                   << " numeric " << fd.worst_numeric);
      CHECK(fd.max_relative_error <= 1e-4);
    }
  }
}

TEST_CASE("unit-weight loss equals the plain sum of node losses exactly") {
  const Graph g = fixture::random_graph(7, 3, 2, 0.4, 11);
  const GCNParams p = init_params(3, 4, 2, 12);
  const NodeObjective obj = make_objective(fixture::all_nodes(7), g.labels);
  const Matrix a = g.adjacency.cast<double>();
  const Matrix logits = forward(p, a, g.features);
  double sum = 0.0;
  for (Index u = 0; u < 7; ++u) {
    const Vector row = logits.row(u);
    sum += node_loss(std::span<const double>(row.data(), row.size()), g.labels[u], obj.kind);
  }
  CHECK(weighted_loss(p, a, g.features, obj) == sum);
  const auto delta = std::vector<double>(pair_count(7), 0.0);
  CHECK(gradients(p, g.adjacency, delta, g.features, obj).loss == sum);
}

TEST_CASE("train separates two cliques") {
  const Graph g = fixture::toy_cliques();
  DataSplit split;
  split.train = {0, 1, 2, 3};
  split.test = {0, 1, 2, 3};
  TrainConfig config;
  config.learning_rate = 0.05;
  config.epochs = 200;
  config.seed = 3;
  const GCNParams p = train(g, split, config);
  const auto pred = predict_all(p, g.adjacency, g.features);
  CHECK(classification_accuracy(pred, g.labels, split.train) == 1.0);
}

TEST_CASE("training loss is non-increasing at a small learning rate") {
  const Graph g = fixture::toy_cliques();
  DataSplit split;
  split.train = {0, 1, 2, 3};
  split.test = {0};
  TrainConfig config;
  config.learning_rate = 0.01;
  config.epochs = 300;
  std::vector<double> history;
  train(g, split, Matrix(g.adjacency.cast<double>()), config, &history);
  REQUIRE(history.size() == 300);
  for (std::size_t e = 1; e < history.size(); ++e) CHECK(history[e] <= history[e - 1] + 1e-8);
}

TEST_CASE("train rejects bad configs, is deterministic, and reports divergence") {
  const Graph g = synth_sbm(20, 2, 0.5, 0.05, 4, 2);
  const DataSplit split = split_nodes(g, {}, 2);
  TrainConfig config;
  config.epochs = 0;
  CHECK_THROWS_AS(train(g, split, config), ParameterError);
  config.epochs = 50;
  config.seed = 8;
  const GCNParams a = train(g, split, config);
  const GCNParams b = train(g, split, config);
  CHECK(a.w1 == b.w1);
  CHECK(a.w2 == b.w2);

  config.learning_rate = 1e200;
  try {
    train(g, split, config);
    FAIL("expected divergence");
  } catch (const TrainingError& e) {
    CHECK(e.epoch() >= 0);
    CHECK(e.epoch() < 50);
  }
}

TEST_CASE("predict_all is argmax of forward and shift invariant") {
  const Graph g = fixture::random_graph(10, 3, 4, 0.3, 21);
  GCNParams p = init_params(3, 6, 4, 22);
  const Matrix logits = forward(p, g.adjacency, g.features);
  const auto pred = predict_all(p, g.adjacency, g.features);
  for (Index u = 0; u < 10; ++u) {
    Index best = 0;
    for (Index c = 1; c < 4; ++c)
      if (logits(u, c) > logits(u, best)) best = c;
    CHECK(pred[u] == best);
  }
  const Matrix shifted = logits.array().colwise() + Vector::LinSpaced(10, -3.0, 5.0).array();
  CHECK(predict_from_logits(shifted) == pred);
  Matrix ties = Matrix::Zero(2, 3);
  ties(1, 1) = ties(1, 2) = 1.0;
  CHECK(predict_from_logits(ties) == std::vector<int>{0, 1});
}

TEST_CASE("checkpoint round-trip and format") {
  const auto dir = std::filesystem::temp_directory_path() / "crgraph_ckpt_test";
  std::filesystem::create_directories(dir);
  const GCNParams p = init_params(3, 4, 2, 5);
  save_checkpoint(p, dir / "m.bin");
  const GCNParams q = load_checkpoint(dir / "m.bin");
  CHECK(q.w1 == p.w1);
  CHECK(q.w2 == p.w2);
  CHECK(std::filesystem::file_size(dir / "m.bin") == 8 + 8 + 2 * 16 + 8 * (12 + 8));
  std::ofstream(dir / "bad.bin") << "NOTMAGIC";
  CHECK_THROWS(load_checkpoint(dir / "bad.bin"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("init_params draws from the Glorot range") {
  const GCNParams p = init_params(10, 6, 3, 1);
  CHECK(p.w1.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 16.0));
  CHECK(p.w2.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 9.0));
  CHECK(init_params(10, 6, 3, 1).w1 == p.w1);
  CHECK(init_params(10, 6, 3, 2).w1 != p.w1);
}
