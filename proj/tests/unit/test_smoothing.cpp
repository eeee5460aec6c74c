#include "crgraph/smoothing.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace crgraph;

namespace {

// Random-weight model on a 4-node graph: 6 pairs, 64 masks.
struct SmallInstance {
  Graph graph;
  GCNParams params;
};

SmallInstance small_instance(std::uint64_t seed) {
  SmallInstance s;
  s.graph = fixture::random_graph(4, 3, 3, 0.5, seed);
  s.params = init_params(3, 5, 3, seed + 100);
  return s;
}

}  // namespace

TEST_CASE("sample_noise with beta = 1 flips nothing") {
  const auto mask = sample_noise(NoiseSpec{1.0}, 50, 3, 0);
  CHECK(mask.size() == static_cast<std::size_t>(pair_count(50)));
  for (auto v : mask) CHECK(v == 0);
}

TEST_CASE("sample_noise flip fraction concentrates around 1 - beta") {
  // m = C(142, 2) = 10011, close to the 10000 of the binomial bound.
  const Index n = 142;
  const double m = static_cast<double>(pair_count(n));
  const double tolerance = 3.0 * std::sqrt(0.09 / 10000.0);
  int within = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto mask = sample_noise(NoiseSpec{0.9}, n, seed, 0);
    double flips = 0.0;
    for (auto v : mask) flips += v;
    within += std::abs(flips / m - 0.1) <= tolerance ? 1 : 0;
  }
  // 3 sigma holds with probability 0.997 per sample.
  CHECK(within >= 19);
}

TEST_CASE("sample_noise is deterministic in (seed, index)") {
  const NoiseSpec spec{0.8};
  CHECK(sample_noise(spec, 30, 11, 4) == sample_noise(spec, 30, 11, 4));
  CHECK(sample_noise(spec, 30, 11, 4) != sample_noise(spec, 30, 11, 5));
  CHECK(sample_noise(spec, 30, 11, 4) != sample_noise(spec, 30, 12, 4));
  const auto flips = sample_noise_flips(spec, 30, 11, 4);
  const auto mask = sample_noise(spec, 30, 11, 4);
  Index count = 0;
  for (auto v : mask) count += v;
  CHECK(count == static_cast<Index>(flips.size()));
  for (Index k : flips) CHECK(mask[k] == 1);
}

TEST_CASE("NoiseSpec and SmoothingConfig validation") {
  CHECK_THROWS_AS(NoiseSpec{0.5}.validate(), ParameterError);
  CHECK_THROWS_AS(NoiseSpec{1.01}.validate(), ParameterError);
  CHECK_NOTHROW(NoiseSpec{1.0}.validate());
  SmoothingConfig c;
  c.num_samples = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c.num_samples = 10;
  c.alpha = 1.0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
}

TEST_CASE("mc_counts_evasion without noise puts all mass on the clean prediction") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Graph g = fixture::random_graph(12, 4, 3, 0.05 * static_cast<double>(seed % 10), seed);
    const GCNParams p = init_params(4, 6, 3, seed + 9);
    const auto nodes = fixture::all_nodes(12);
    SmoothingConfig config;
    config.num_samples = 17;
    const auto counts =
        mc_counts_evasion(p, g.adjacency, g.features, nodes, NoiseSpec{1.0}, config);
    const auto clean = predict_all(p, g.adjacency, g.features);
    for (Index u = 0; u < 12; ++u) CHECK(counts(u, clean[u]) == 17);
  }
}

TEST_CASE("mc_counts_evasion rows sum to N and ignore the thread count") {
  const Graph g = fixture::random_graph(15, 4, 3, 0.3, 6);
  const GCNParams p = init_params(4, 6, 3, 10);
  const std::vector<Index> targets{0, 3, 7, 14};
  SmoothingConfig config;
  config.num_samples = 64;
  config.seed = 21;
  const auto one = mc_counts_evasion(p, g.adjacency, g.features, targets, NoiseSpec{0.8}, config);
  for (Index i = 0; i < one.rows(); ++i) CHECK(one.row(i).sum() == 64);
  config.threads = 3;
  const auto three = mc_counts_evasion(p, g.adjacency, g.features, targets, NoiseSpec{0.8}, config);
  CHECK(one == three);
  const std::vector<Index> bad{15};
  CHECK_THROWS_AS(mc_counts_evasion(p, g.adjacency, g.features, bad, NoiseSpec{0.8}, config),
                  ParameterError);
}

TEST_CASE("exact_smoothed_probs matches the independent enumeration and sums to one") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const SmallInstance s = small_instance(seed);
    const Matrix probs = exact_smoothed_probs(s.params, s.graph.adjacency, s.graph.features,
                                              NoiseSpec{0.75});
    for (Index u = 0; u < 4; ++u) {
      CHECK(probs.row(u).sum() == doctest::Approx(1.0).epsilon(1e-12));
      const auto expected =
          oracle::smoothed_probabilities(s.params, s.graph.adjacency, s.graph.features, u, 0.75);
      for (Index c = 0; c < 3; ++c) CHECK(probs(u, c) == doctest::Approx(expected[c]).epsilon(1e-12));
    }
  }
}

TEST_CASE("exact_smoothed_prob with beta = 1 is the clean prediction") {
  const SmallInstance s = small_instance(4);
  const auto clean = predict_all(s.params, s.graph.adjacency, s.graph.features);
  for (Index u = 0; u < 4; ++u) {
    const auto probs =
        exact_smoothed_prob(s.params, s.graph.adjacency, s.graph.features, u, NoiseSpec{1.0});
    CHECK(probs[clean[u]] == 1.0);
  }
}

TEST_CASE("exact_smoothed_probs refuses graphs above the enumeration cap") {
  // 7 nodes give 21 pairs.
  const Graph g = fixture::random_graph(7, 2, 2, 0.3, 1);
  const GCNParams p = init_params(2, 3, 2, 1);
  CHECK_THROWS_AS(exact_smoothed_probs(p, g.adjacency, g.features, NoiseSpec{0.9}), CapacityError);
  const Graph ok = fixture::random_graph(6, 2, 2, 0.3, 1);
  CHECK_NOTHROW(exact_smoothed_probs(p, ok.adjacency, ok.features, NoiseSpec{0.9}));
}

TEST_CASE("Monte Carlo counts agree with exact probabilities within 5 sigma") {
  const NoiseSpec spec{0.75};
  {
    const SmallInstance s = small_instance(7);
    SmoothingConfig config;
    config.num_samples = 10000;
    config.seed = 3;
    const auto nodes = fixture::all_nodes(4);
    const auto counts = mc_counts_evasion(s.params, s.graph.adjacency, s.graph.features, nodes,
                                          spec, config);
    for (Index u = 0; u < 4; ++u) {
      const auto exact =
          oracle::smoothed_probabilities(s.params, s.graph.adjacency, s.graph.features, u, 0.75);
      for (Index c = 0; c < 3; ++c) {
        const double p = exact[c];
        const double sigma = std::sqrt(p * (1 - p) / 10000.0);
        CHECK(std::abs(counts(u, c) / 10000.0 - p) <= 5 * sigma + 1e-12);
      }
    }
  }
  // Across many seeded trials at a smaller N, at least 99% of entries pass.
  int checks = 0, passed = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const SmallInstance s = small_instance(200 + seed);
    SmoothingConfig config;
    config.num_samples = 1000;
    config.seed = seed;
    const auto nodes = fixture::all_nodes(4);
    const auto counts = mc_counts_evasion(s.params, s.graph.adjacency, s.graph.features, nodes,
                                          spec, config);
    const Matrix exact = exact_smoothed_probs(s.params, s.graph.adjacency, s.graph.features, spec);
    for (Index u = 0; u < 4; ++u) {
      for (Index c = 0; c < 3; ++c) {
        const double p = exact(u, c);
        const double sigma = std::sqrt(p * (1 - p) / 1000.0);
        ++checks;
        passed += std::abs(counts(u, c) / 1000.0 - p) <= 5 * sigma + 1e-12 ? 1 : 0;
      }
    }
  }
  CHECK(passed >= 0.99 * checks);
}

TEST_CASE("mc_counts_poisoning with a shared seed and no noise concentrates counts") {
  const Graph g = synth_sbm(20, 2, 0.4, 0.05, 4, 3);
  const DataSplit split = split_nodes(g, {0.5, 0.0, 0.5}, 3);
  TrainConfig train;
  train.epochs = 40;
  train.seed = 8;
  SmoothingConfig config;
  config.num_samples = 5;
  config.vary_replicate_seeds = false;
  const auto counts = mc_counts_poisoning(g, split, train, split.test, NoiseSpec{1.0}, config);
  for (Index i = 0; i < counts.rows(); ++i) CHECK(counts.row(i).maxCoeff() == 5);
}

TEST_CASE("mc_counts_poisoning majority agrees with the clean model on well-classified nodes") {
  const Graph g = synth_sbm(40, 2, 0.3, 0.02, 8, 5);
  const DataSplit split = split_nodes(g, {0.3, 0.0, 0.7}, 5);
  TrainConfig train;
  train.seed = 2;
  const GCNParams clean_model = train_model(g.adjacency.cast<double>(), g.features, split.train,
                                            [&] {
                                              std::vector<int> y;
                                              for (Index u : split.train) y.push_back(g.labels[u]);
                                              return y;
                                            }(),
                                            g.num_classes, train);
  const auto clean = predict_all(clean_model, g.adjacency, g.features);
  SmoothingConfig config;
  config.num_samples = 20;
  config.seed = 4;
  const auto counts = mc_counts_poisoning(g, split, train, split.test, NoiseSpec{0.9}, config);
  int well = 0, agree = 0;
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    const Index u = split.test[i];
    CHECK(counts.row(static_cast<Index>(i)).sum() == 20);
    if (clean[u] != g.labels[u]) continue;
    ++well;
    Index majority = 0;
    counts.row(static_cast<Index>(i)).maxCoeff(&majority);
    agree += majority == clean[u] ? 1 : 0;
  }
  REQUIRE(well > 0);
  CHECK(agree >= 0.8 * well);
}

TEST_CASE("mc_counts_poisoning names the failing replicate") {
  const Graph g = synth_sbm(20, 2, 0.4, 0.05, 4, 3);
  const DataSplit split = split_nodes(g, {0.5, 0.0, 0.5}, 3);
  TrainConfig train;
  train.learning_rate = 1e6;
  train.epochs = 50;
  SmoothingConfig config;
  config.num_samples = 3;
  CHECK_THROWS_AS(mc_counts_poisoning(g, split, train, split.test, NoiseSpec{0.9}, config),
                  CertificationError);
}

TEST_CASE("lower_bound_prob closed forms") {
  CHECK(lower_bound_prob(200, 200, 0.1) == doctest::Approx(std::pow(0.1, 1.0 / 200)).epsilon(1e-12));
  CHECK(lower_bound_prob(200, 200, 0.1) == doctest::Approx(0.988553).epsilon(1e-6));
  CHECK(lower_bound_prob(0, 200, 0.1) == 0.0);
  // Beta(1, N) quantile: 1 - (1 - alpha)^(1/N).
  CHECK(lower_bound_prob(1, 50, 0.05) ==
        doctest::Approx(1 - std::pow(0.95, 1.0 / 50)).epsilon(1e-12));
}

TEST_CASE("lower_bound_prob is strictly increasing and matches the binomial-tail oracle") {
  double previous = 0.0;
  for (Index k = 1; k <= 200; ++k) {
    const double p = lower_bound_prob(k, 200, 0.1);
    CHECK(p > previous);
    previous = p;
    if (k % 7 == 0 || k == 1 || k == 200)
      CHECK(p == doctest::Approx(oracle::clopper_pearson_lower(k, 200, 0.1)).epsilon(1e-9));
  }
  for (auto [k, n] : {std::pair<Index, Index>{3, 5}, {19, 20}, {10, 20}, {1, 1}})
    CHECK(lower_bound_prob(k, n, 0.01) ==
          doctest::Approx(oracle::clopper_pearson_lower(k, n, 0.01)).epsilon(1e-9));
}

TEST_CASE("lower_bound_prob rejects bad arguments") {
  CHECK_THROWS_AS(lower_bound_prob(5, 10, 0.0), ParameterError);
  CHECK_THROWS_AS(lower_bound_prob(5, 10, 1.0), ParameterError);
  CHECK_THROWS_AS(lower_bound_prob(11, 10, 0.1), ParameterError);
  CHECK_THROWS_AS(lower_bound_prob(-1, 10, 0.1), ParameterError);
}

TEST_CASE("lower_bound_prob covers the true probability at rate 1 - alpha") {
  std::mt19937_64 rng(2024);
  int covered = 0;
  const double alpha = 0.1;
  for (int trial = 0; trial < 1000; ++trial) {
    const double p = 0.55 + 0.4 * (trial % 10) / 9.0;
    std::binomial_distribution<Index> draw(100, p);
    covered += lower_bound_prob(draw(rng), 100, alpha) <= p ? 1 : 0;
  }
  CHECK(covered >= (1 - alpha - 0.02) * 1000);
}

TEST_CASE("certified_size hand-computed regions") {
  CHECK(certified_size(0.4, NoiseSpec{0.9}).size == 0);
  CHECK(certified_size(0.5, NoiseSpec{0.9}).size == 0);
  CHECK(worst_case_probability(0.99, 0.9, 1) == doctest::Approx(0.91).epsilon(1e-12));
  CHECK(worst_case_probability(0.99, 0.9, 2) == doctest::Approx(0.19).epsilon(1e-12));
  CHECK(certified_size(0.99, NoiseSpec{0.9}).size == 1);
  CHECK(worst_case_probability(0.95, 0.9, 1) == doctest::Approx(0.55).epsilon(1e-12));
  CHECK(worst_case_probability(0.95, 0.9, 2) < 0.5);
  CHECK(certified_size(0.95, NoiseSpec{0.9}).size == 1);
  CHECK(worst_case_probability(0.7, 0.9, 0) == 0.7);
}

TEST_CASE("certified_size regression values at p = 0.99") {
  // A noisier beta spreads the flip likelihood ratio less, so it certifies more here.
  CHECK(certified_size(0.99, NoiseSpec{0.999}).size == 0);
  CHECK(certified_size(0.99, NoiseSpec{0.9}).size == 1);
}

TEST_CASE("certified_size agrees with radii from the rational worst case") {
  for (double beta : {0.7, 0.8, 0.9}) {
    for (double p : {0.55, 0.7, 0.9, 0.99}) {
      int expected = 0;
      for (int r = 1; r <= 12; ++r) {
        const auto rho = oracle::worst_case_probability_exact(oracle::Rational(p),
                                                              oracle::Rational(beta), r);
        if (rho <= oracle::Rational(1, 2)) break;
        expected = r;
      }
      REQUIRE(expected < 12);
      CHECK(certified_size(p, NoiseSpec{beta}).size == expected);
    }
  }
}

TEST_CASE("certified_size rejects beta = 1 and other bad input") {
  CHECK_THROWS_AS(certified_size(0.9, NoiseSpec{1.0}), ParameterError);
  CHECK_THROWS_AS(certified_size(1.2, NoiseSpec{0.9}), ParameterError);
  CHECK_THROWS_AS(certified_size(0.9, NoiseSpec{0.9}, 0), ParameterError);
}

TEST_CASE("certified_size saturates when the bound never fails") {
  const auto r = certified_size(1.0, NoiseSpec{0.9}, 5);
  CHECK(r.size == 5);
  CHECK(r.saturated);
  CHECK_FALSE(certified_size(0.99, NoiseSpec{0.9}, 5).saturated);
}

TEST_CASE("certified_size is monotone in p_lower") {
  for (double beta : {0.6, 0.7, 0.8, 0.9, 0.99, 0.999}) {
    int previous = 0;
    for (int i = 50; i <= 100; ++i) {
      const int k = certified_size(i / 100.0, NoiseSpec{beta}).size;
      CHECK(k >= previous);
      previous = k;
    }
  }
}

TEST_CASE("worst_case_probability equals the exact rational minimum for r <= 4") {
  for (double beta : {0.55, 0.7, 0.75, 0.9, 0.99, 0.999}) {
    for (double p : {0.5, 0.51, 0.6, 0.75, 0.9, 0.95, 0.99, 0.999, 1.0}) {
      for (int r = 1; r <= 4; ++r) {
        const double expected = oracle::worst_case_probability_exact(
                                    oracle::Rational(p), oracle::Rational(beta), r)
                                    .convert_to<double>();
        CHECK(worst_case_probability(p, beta, r) == doctest::Approx(expected).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("certify_from_counts conventions") {
  LabelCounts counts(3, 2);
  counts << 0, 200,  // all mass on the wrong label
      200, 0,        // all on the true label
      100, 100;      // tie resolves to class 0
  const std::vector<Index> targets{4, 5, 6};
  const std::vector<int> labels{0, 0, 1};
  const auto certs = certify_from_counts(counts, targets, labels, 0.1, NoiseSpec{0.9});
  CHECK(certs[0].smoothed_label == 1);
  CHECK(certs[0].certified_size == 0);
  CHECK(certs[1].node == 5);
  CHECK(certs[1].p_lower == doctest::Approx(0.9886).epsilon(1e-4));
  CHECK(certs[1].certified_size == 1);
  CHECK(certs[2].smoothed_label == 0);
  CHECK(certs[2].certified_size == 0);
  CHECK(certs[2].p_lower < 0.5);
  for (const auto& c : certs) {
    int total = 0;
    for (int v : c.counts) total += v;
    CHECK(total == 200);
  }
  const std::vector<int> short_labels{0};
  CHECK_THROWS_AS(certify_from_counts(counts, targets, short_labels, 0.1, NoiseSpec{0.9}),
                  DimensionError);
}

TEST_CASE("certify_evasion is deterministic and survives a CSV round trip") {
  const Graph g = synth_sbm(30, 2, 0.4, 0.05, 6, 2);
  const DataSplit split = split_nodes(g, {0.3, 0.0, 0.7}, 2);
  TrainConfig train;
  train.seed = 1;
  const GCNParams p = train_model(g.adjacency.cast<double>(), g.features, split.train,
                                  [&] {
                                    std::vector<int> y;
                                    for (Index u : split.train) y.push_back(g.labels[u]);
                                    return y;
                                  }(),
                                  g.num_classes, train);
  std::vector<int> labels;
  for (Index u : split.test) labels.push_back(g.labels[u]);
  SmoothingConfig config;
  config.seed = 13;
  const NoiseSpec spec{0.9};
  const auto a = certify_evasion(p, g.adjacency, g.features, split.test, labels, spec, config);
  const auto b = certify_evasion(p, g.adjacency, g.features, split.test, labels, spec, config);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].counts == b[i].counts);
    CHECK(a[i].p_lower == b[i].p_lower);
    CHECK(a[i].certified_size == b[i].certified_size);
    if (a[i].smoothed_label != a[i].true_label || a[i].p_lower <= 0.5)
      CHECK(a[i].certified_size == 0);
  }

  const auto path = std::filesystem::temp_directory_path() / "crgraph_test_certs.csv";
  write_certificates_csv(a, config.alpha, spec, path);
  const auto back = read_certificates_csv(path);
  std::filesystem::remove(path);
  REQUIRE(back.size() == a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(back[i].node == a[i].node);
    CHECK(back[i].true_label == a[i].true_label);
    CHECK(back[i].smoothed_label == a[i].smoothed_label);
    CHECK(back[i].p_lower == a[i].p_lower);
    CHECK(back[i].certified_size == a[i].certified_size);
  }
}

TEST_CASE("read_certificates_csv reports malformed rows with a line number") {
  const auto path = std::filesystem::temp_directory_path() / "crgraph_bad_certs.csv";
  {
    std::ofstream out(path);
    out << "node,true_label,smoothed_label,top_count,N,alpha,beta,p_lower,K\n";
    out << "0,1,1,20,20,0.1,0.9,0.8,1\n";
    out << "1,1,1,20\n";
  }
  try {
    read_certificates_csv(path);
    FAIL("expected LoadError");
  } catch (const LoadError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
  std::filesystem::remove(path);
}
