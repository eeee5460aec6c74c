#include "crgraph/attacks.hpp"
#include "crgraph/experiment.hpp"
#include "crgraph/gcn.hpp"
#include "crgraph/graph.hpp"
#include "crgraph/smoothing.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace crgraph;

namespace {

AttackConfig make_attack_config(Index budget, int iterations, int refresh_interval,
                                const std::string& scheme, double beta, int num_samples,
                                double alpha, double a, std::uint64_t seed, double step_size,
                                double inner_step_size, double outer_step_size) {
  AttackConfig config;
  config.budget = budget;
  config.iterations = iterations;
  config.refresh_interval = refresh_interval;
  config.scheme.kind = parse_weight_scheme(scheme);
  config.scheme.a = a;
  config.scheme.seed = seed;
  config.noise.beta = beta;
  config.smoothing.num_samples = num_samples;
  config.smoothing.alpha = alpha;
  config.smoothing.seed = seed;
  config.seed = seed;
  config.step_size = step_size;
  config.inner_step_size = inner_step_size;
  config.outer_step_size = outer_step_size;
  return config;
}

py::dict report_dict(const AttackReport& r, Index num_nodes) {
  py::dict d;
  d["pre_accuracy"] = r.pre_attack_accuracy;
  d["post_accuracy"] = r.post_attack_accuracy;
  d["flips"] = flipped_pairs(num_nodes, *r.perturbation.binary);
  d["relaxed"] = r.perturbation.relaxed;
  d["loss"] = r.per_iteration_loss;
  d["runtime_seconds"] = r.runtime_seconds;
  d["certification_seconds"] = r.certification_seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_crgraph, m) {
  m.doc() = "Certified-robustness-guided attacks on graph convolutional networks";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<CapacityError>(m, "CapacityError", PyExc_ValueError);

  py::class_<Graph>(m, "Graph")
      .def(py::init<>())
      .def_readwrite("adjacency", &Graph::adjacency)
      .def_readwrite("features", &Graph::features)
      .def_readwrite("labels", &Graph::labels)
      .def_readwrite("num_classes", &Graph::num_classes)
      .def_property_readonly("num_nodes", &Graph::num_nodes)
      .def_property_readonly("num_edges", &Graph::num_edges)
      .def("validate", &Graph::validate);

  py::class_<DataSplit>(m, "DataSplit")
      .def(py::init<>())
      .def_readwrite("train", &DataSplit::train)
      .def_readwrite("val", &DataSplit::val)
      .def_readwrite("test", &DataSplit::test);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("weight_decay", &TrainConfig::weight_decay)
      .def_readwrite("hidden_dim", &TrainConfig::hidden_dim)
      .def_readwrite("seed", &TrainConfig::seed);

  py::class_<GCNParams>(m, "GCNParams")
      .def(py::init<>())
      .def_readwrite("w1", &GCNParams::w1)
      .def_readwrite("w2", &GCNParams::w2);

  py::class_<Certificate>(m, "Certificate")
      .def_readonly("node", &Certificate::node)
      .def_readonly("true_label", &Certificate::true_label)
      .def_readonly("counts", &Certificate::counts)
      .def_readonly("smoothed_label", &Certificate::smoothed_label)
      .def_readonly("p_lower", &Certificate::p_lower)
      .def_readonly("certified_size", &Certificate::certified_size)
      .def_readonly("saturated", &Certificate::saturated);

  m.def("synth_sbm", &synth_sbm, py::arg("n"), py::arg("blocks"), py::arg("p_in"),
        py::arg("p_out"), py::arg("feature_dim"), py::arg("seed"));
  m.def(
      "split_nodes",
      [](const Graph& g, double train, double val, double test, std::uint64_t seed) {
        return split_nodes(g, SplitRatios{train, val, test}, seed);
      },
      py::arg("graph"), py::arg("train") = 0.1, py::arg("val") = 0.1, py::arg("test") = 0.8,
      py::arg("seed") = 0);
  m.def("apply_perturbation", &apply_perturbation);
  m.def("pair_index", &pair_index);

  m.def("train", py::overload_cast<const Graph&, const DataSplit&, const TrainConfig&>(&train),
        py::arg("graph"), py::arg("split"), py::arg("config") = TrainConfig{});
  m.def("forward", py::overload_cast<const GCNParams&, const BinaryMatrix&, const Matrix&>(&forward));
  m.def("predict_all", &predict_all);
  m.def("normalize_adjacency", &normalize_adjacency);

  m.def("lower_bound_prob", &lower_bound_prob, py::arg("count"), py::arg("total"),
        py::arg("alpha"));
  m.def("worst_case_probability", &worst_case_probability, py::arg("p_lower"), py::arg("beta"),
        py::arg("radius"));
  m.def(
      "certified_size",
      [](double p_lower, double beta, int r_max) {
        return certified_size(p_lower, NoiseSpec{beta}, r_max).size;
      },
      py::arg("p_lower"), py::arg("beta"), py::arg("r_max") = 2000);
  m.def(
      "exact_smoothed_probs",
      [](const GCNParams& p, const BinaryMatrix& a, const Matrix& x, double beta) {
        return exact_smoothed_probs(p, a, x, NoiseSpec{beta});
      },
      py::arg("params"), py::arg("adjacency"), py::arg("features"), py::arg("beta"));
  m.def(
      "certify_evasion",
      [](const GCNParams& p, const Graph& g, std::vector<Index> targets, double beta,
         int num_samples, double alpha, std::uint64_t seed) {
        std::vector<int> labels;
        for (Index u : targets) labels.push_back(g.labels.at(static_cast<std::size_t>(u)));
        SmoothingConfig config;
        config.num_samples = num_samples;
        config.alpha = alpha;
        config.seed = seed;
        return certify_evasion(p, g.adjacency, g.features, targets, labels, NoiseSpec{beta}, config);
      },
      py::arg("params"), py::arg("graph"), py::arg("targets"), py::arg("beta") = 0.999,
      py::arg("num_samples") = 200, py::arg("alpha") = 0.1, py::arg("seed") = 0);

  m.def(
      "project_budget",
      [](std::vector<double> relaxed, double budget) { return project_budget(relaxed, budget); },
      py::arg("relaxed"), py::arg("budget"));

  m.def(
      "pgd_evasion",
      [](const GCNParams& p, const Graph& g, const DataSplit& split, Index budget, int iterations,
         int refresh_interval, const std::string& scheme, double beta, int num_samples,
         double alpha, double a, std::uint64_t seed, double step_size) {
        const AttackConfig config =
            make_attack_config(budget, iterations, refresh_interval, scheme, beta, num_samples,
                               alpha, a, seed, step_size, 1e-4, 0.0);
        AttackReport report;
        {
          py::gil_scoped_release release;
          report = pgd_evasion(p, g, split, config);
        }
        return report_dict(report, g.num_nodes());
      },
      py::arg("params"), py::arg("graph"), py::arg("split"), py::arg("budget"),
      py::arg("iterations") = 100, py::arg("refresh_interval") = 10,
      py::arg("scheme") = "certified", py::arg("beta") = 0.999, py::arg("num_samples") = 200,
      py::arg("alpha") = 0.1, py::arg("a") = 1.0, py::arg("seed") = 0, py::arg("step_size") = 0.0);

  m.def(
      "minmax_poisoning",
      [](const Graph& g, const DataSplit& split, const TrainConfig& train_config, Index budget,
         int iterations, int refresh_interval, const std::string& scheme, double beta,
         int num_samples, double alpha, double a, std::uint64_t seed, double inner_step_size,
         double outer_step_size) {
        const AttackConfig config =
            make_attack_config(budget, iterations, refresh_interval, scheme, beta, num_samples,
                               alpha, a, seed, 0.0, inner_step_size, outer_step_size);
        AttackReport report;
        {
          py::gil_scoped_release release;
          report = minmax_poisoning(g, split, train_config, config);
        }
        return report_dict(report, g.num_nodes());
      },
      py::arg("graph"), py::arg("split"), py::arg("train_config"), py::arg("budget"),
      py::arg("iterations") = 10, py::arg("refresh_interval") = 2,
      py::arg("scheme") = "certified", py::arg("beta") = 0.999, py::arg("num_samples") = 20,
      py::arg("alpha") = 0.1, py::arg("a") = 1.0, py::arg("seed") = 0,
      py::arg("inner_step_size") = 1e-4, py::arg("outer_step_size") = 0.0);

  m.def(
      "run_sweep",
      [](const std::string& config_path, const std::string& out, int jobs, bool resume) {
        ExperimentConfig config = parse_config(config_path);
        if (!out.empty()) config.output_dir = out;
        if (jobs > 0) config.jobs = jobs;
        config.validate();
        SweepResult result;
        {
          py::gil_scoped_release release;
          result = run_sweep(config, resume);
        }
        py::dict d;
        d["cells"] = result.rows.size();
        d["failed"] = result.failed;
        d["skipped"] = result.skipped;
        d["output_dir"] = config.output_dir.string();
        return d;
      },
      py::arg("config_path"), py::arg("out") = "", py::arg("jobs") = 0, py::arg("resume") = false);
}
