#include "crgraph/experiment.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace crgraph {

namespace fs = std::filesystem;

std::string to_string(AttackMode mode) {
  return mode == AttackMode::evasion ? "evasion" : "poisoning";
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::budget_ratio: return "budget_ratio";
    case SweepAxis::beta: return "beta";
    case SweepAxis::alpha: return "alpha";
    case SweepAxis::num_samples: return "num_samples";
    case SweepAxis::a: return "a";
    case SweepAxis::scheme: return "scheme";
  }
  return "unknown";
}

namespace {

AttackMode parse_mode(const std::string& text) {
  if (text == "evasion") return AttackMode::evasion;
  if (text == "poisoning") return AttackMode::poisoning;
  throw ConfigError(fmt::format("unknown attack mode '{}'", text));
}

SweepAxis parse_axis(const std::string& text) {
  for (SweepAxis axis : {SweepAxis::budget_ratio, SweepAxis::beta, SweepAxis::alpha,
                         SweepAxis::num_samples, SweepAxis::a, SweepAxis::scheme}) {
    if (to_string(axis) == text) return axis;
  }
  throw ConfigError(fmt::format("unknown sweep axis '{}'", text));
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& text, char sep = ',') {
  std::vector<std::string> items;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, sep)) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

double to_double(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(value)) throw std::invalid_argument(text);
    return value;
  } catch (const std::logic_error&) {
    throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, text));
  }
}

long long to_integer(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const long long value = std::stoll(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::logic_error&) {
    throw ConfigError(fmt::format("{}: expected an integer, got '{}'", key, text));
  }
}

std::uint64_t to_seed(const std::string& key, const std::string& text) {
  const long long value = to_integer(key, text);
  if (value < 0) throw ConfigError(fmt::format("{}: seeds must be non-negative", key));
  return static_cast<std::uint64_t>(value);
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, text));
}

WeightScheme::Kind to_scheme(const std::string& text) {
  try {
    return parse_weight_scheme(text);
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

/// Shortest round-trip text, so the same value always prints the same way.
std::string canonical(double value) { return fmt::format("{}", value); }

std::string sanitize(std::string text) {
  std::replace(text.begin(), text.end(), ',', ';');
  std::replace(text.begin(), text.end(), '\n', ' ');
  std::replace(text.begin(), text.end(), '\r', ' ');
  return text;
}

void apply_setting(ExperimentConfig& config, const std::string& section, const std::string& key,
                   const std::string& value) {
  const std::string name = section + "." + key;
  auto& d = config.dataset;
  auto& at = config.attack;
  if (section == "dataset") {
    if (key == "source") {
      if (value == "sbm") d.synthetic = true;
      else if (value == "files") d.synthetic = false;
      else throw ConfigError(fmt::format("{}: expected sbm or files", name));
    } else if (key == "nodes") d.nodes = to_integer(name, value);
    else if (key == "blocks") d.blocks = static_cast<int>(to_integer(name, value));
    else if (key == "p_in") d.p_in = to_double(name, value);
    else if (key == "p_out") d.p_out = to_double(name, value);
    else if (key == "feature_dim") d.feature_dim = to_integer(name, value);
    else if (key == "seed") d.seed = to_seed(name, value);
    else if (key == "vary_with_seed") d.vary_with_seed = to_bool(name, value);
    else if (key == "edges") d.edges = value;
    else if (key == "features") d.features = value;
    else if (key == "labels") d.labels = value;
    else if (key == "num_classes") d.num_classes = static_cast<int>(to_integer(name, value));
    else throw ConfigError(fmt::format("unknown key '{}'", name));
  } else if (section == "split") {
    if (key == "train") config.ratios.train = to_double(name, value);
    else if (key == "val") config.ratios.val = to_double(name, value);
    else if (key == "test") config.ratios.test = to_double(name, value);
    else throw ConfigError(fmt::format("unknown key '{}'", name));
  } else if (section == "train") {
    auto& t = config.train;
    if (key == "learning_rate") t.learning_rate = to_double(name, value);
    else if (key == "epochs") t.epochs = static_cast<int>(to_integer(name, value));
    else if (key == "weight_decay") t.weight_decay = to_double(name, value);
    else if (key == "hidden_dim") t.hidden_dim = static_cast<int>(to_integer(name, value));
    else if (key == "seed") t.seed = to_seed(name, value);
    else throw ConfigError(fmt::format("unknown key '{}'", name));
  } else if (section == "attack") {
    if (key == "mode") config.mode = parse_mode(value);
    else if (key == "budget_ratio") config.budget_ratio = to_double(name, value);
    else if (key == "iterations") at.iterations = static_cast<int>(to_integer(name, value));
    else if (key == "refresh_interval") at.refresh_interval = static_cast<int>(to_integer(name, value));
    else if (key == "step_size") at.step_size = to_double(name, value);
    else if (key == "inner_step_size") at.inner_step_size = to_double(name, value);
    else if (key == "outer_step_size") at.outer_step_size = to_double(name, value);
    else if (key == "loss") {
      if (value == "ce") at.loss.tag = LossKind::Tag::cross_entropy;
      else if (value == "cw") at.loss.tag = LossKind::Tag::cw_margin;
      else throw ConfigError(fmt::format("{}: expected ce or cw", name));
    } else if (key == "kappa") at.loss.kappa = to_double(name, value);
    else if (key == "beta") at.noise.beta = to_double(name, value);
    else if (key == "alpha") at.smoothing.alpha = to_double(name, value);
    else if (key == "num_samples") at.smoothing.num_samples = static_cast<int>(to_integer(name, value));
    else if (key == "smoothing_threads") at.smoothing.threads = static_cast<int>(to_integer(name, value));
    else if (key == "a") at.scheme.a = to_double(name, value);
    else if (key == "discretize_trials") at.discretize_trials = static_cast<int>(to_integer(name, value));
    else if (key == "r_max") at.r_max = static_cast<int>(to_integer(name, value));
    else if (key == "pretrained_init") at.pretrained_init = to_bool(name, value);
    else throw ConfigError(fmt::format("unknown key '{}'", name));
  } else if (section == "sweep") {
    if (key == "seeds") {
      config.seeds.clear();
      for (const auto& item : split_list(value)) config.seeds.push_back(to_seed(name, item));
    } else if (key == "schemes") {
      config.schemes.clear();
      for (const auto& item : split_list(value)) config.schemes.push_back(to_scheme(item));
    } else if (key == "axis") {
      config.axis = parse_axis(value);
    } else if (key == "values") {
      config.sweep_values.clear();
      config.sweep_schemes.clear();
      for (const auto& item : split_list(value)) {
        if (config.axis == SweepAxis::scheme) config.sweep_schemes.push_back(to_scheme(item));
        else config.sweep_values.push_back(to_double(name, item));
      }
    } else {
      throw ConfigError(fmt::format("unknown key '{}'", name));
    }
  } else if (section == "output") {
    if (key == "dir") config.output_dir = value;
    else if (key == "jobs") config.jobs = static_cast<int>(to_integer(name, value));
    else throw ConfigError(fmt::format("unknown key '{}'", name));
  } else if (section == "profile") {
    if (key == "samples") {
      config.profile_samples.clear();
      for (const auto& item : split_list(value))
        config.profile_samples.push_back(static_cast<int>(to_integer(name, item)));
    } else {
      throw ConfigError(fmt::format("unknown key '{}'", name));
    }
  } else {
    throw ConfigError(fmt::format("unknown section [{}]", section));
  }
}

}  // namespace

ExperimentConfig default_config(AttackMode mode) {
  ExperimentConfig config;
  config.mode = mode;
  config.attack.noise.beta = 0.999;
  config.attack.smoothing.alpha = 0.1;
  config.attack.scheme.a = 1.0;
  if (mode == AttackMode::evasion) {
    config.attack.iterations = 100;
    config.attack.refresh_interval = 10;
    config.attack.smoothing.num_samples = 200;
    config.profile_samples = {50, 200};
  } else {
    config.attack.iterations = 10;
    config.attack.refresh_interval = 2;
    config.attack.smoothing.num_samples = 20;
    config.profile_samples = {5, 10, 20};
  }
  config.sweep_values = {config.budget_ratio};
  return config;
}

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("seeds list must be non-empty");
  if (axis == SweepAxis::scheme) {
    if (sweep_schemes.empty()) throw ConfigError("scheme sweep needs at least one value");
    if (!sweep_values.empty()) throw ConfigError("exactly one sweep axis may carry values");
  } else {
    if (sweep_values.empty()) throw ConfigError("sweep axis has no values");
    if (!sweep_schemes.empty()) throw ConfigError("exactly one sweep axis may carry values");
    if (schemes.empty()) throw ConfigError("schemes list must be non-empty");
  }
  for (double v : sweep_values) {
    switch (axis) {
      case SweepAxis::budget_ratio:
        if (v < 0.0 || v > 1.0) throw ConfigError("budget_ratio values must lie in [0,1]");
        break;
      case SweepAxis::num_samples:
        if (v < 1.0 || v != std::floor(v)) throw ConfigError("num_samples values must be positive integers");
        break;
      default:
        break;
    }
  }
  if (budget_ratio < 0.0 || budget_ratio > 1.0) throw ConfigError("budget_ratio must lie in [0,1]");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  for (int n : profile_samples)
    if (n < 1) throw ConfigError("profile samples must be positive");
  if (dataset.synthetic) {
    if (dataset.nodes < 1 || dataset.blocks < 1) throw ConfigError("sbm needs positive nodes and blocks");
  } else if (dataset.edges.empty() || dataset.features.empty() || dataset.labels.empty()) {
    throw ConfigError("file datasets need edges, features and labels paths");
  }
  try {
    train.validate();
    AttackConfig probe = attack;
    probe.budget = 0;
    probe.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig parse_config_text(const std::string& text) {
  struct Setting {
    std::string section, key, value;
    int line;
  };
  std::vector<Setting> settings;
  std::string section;
  std::stringstream stream(text);
  std::string raw;
  int line_number = 0;
  while (std::getline(stream, raw)) {
    ++line_number;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(fmt::format("line {}: unterminated section", line_number));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(fmt::format("line {}: expected key = value", line_number));
    if (section.empty())
      throw ConfigError(fmt::format("line {}: setting outside a section", line_number));
    settings.push_back({section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_number});
  }

  AttackMode mode = AttackMode::evasion;
  for (const auto& s : settings)
    if (s.section == "attack" && s.key == "mode") mode = parse_mode(s.value);
  ExperimentConfig config = default_config(mode);

  // The axis decides how sweep values parse, so it must be known first.
  for (const auto& s : settings)
    if (s.section == "sweep" && s.key == "axis") config.axis = parse_axis(s.value);
  bool has_values = false;
  for (const auto& s : settings) {
    try {
      apply_setting(config, s.section, s.key, s.value);
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("line {}: {}", s.line, e.what()));
    }
    if (s.section == "sweep" && s.key == "values") has_values = true;
  }
  if (!has_values) {
    config.sweep_values.clear();
    config.sweep_schemes.clear();
    switch (config.axis) {
      case SweepAxis::budget_ratio: config.sweep_values = {config.budget_ratio}; break;
      case SweepAxis::beta: config.sweep_values = {config.attack.noise.beta}; break;
      case SweepAxis::alpha: config.sweep_values = {config.attack.smoothing.alpha}; break;
      case SweepAxis::num_samples:
        config.sweep_values = {static_cast<double>(config.attack.smoothing.num_samples)};
        break;
      case SweepAxis::a: config.sweep_values = {config.attack.scheme.a}; break;
      case SweepAxis::scheme: config.sweep_schemes = config.schemes; break;
    }
  }
  config.validate();
  return config;
}

ExperimentConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config_text(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::vector<Cell> enumerate_cells(const ExperimentConfig& config) {
  std::vector<Cell> cells;
  for (std::uint64_t seed : config.seeds) {
    if (config.axis == SweepAxis::scheme) {
      for (auto kind : config.sweep_schemes) cells.push_back({seed, to_string(kind), kind, 0.0});
    } else {
      for (double value : config.sweep_values)
        for (auto kind : config.schemes) cells.push_back({seed, canonical(value), kind, value});
    }
  }
  return cells;
}

Graph build_graph(const ExperimentConfig& config, std::uint64_t seed) {
  const auto& d = config.dataset;
  if (!d.synthetic) return load_graph(d.edges, d.features, d.labels, d.num_classes);
  const std::uint64_t graph_seed = d.vary_with_seed ? d.seed + seed : d.seed;
  return synth_sbm(d.nodes, d.blocks, d.p_in, d.p_out, d.feature_dim, graph_seed);
}

CellSetup prepare_cell(const ExperimentConfig& config, const Cell& cell) {
  CellSetup setup;
  setup.graph = build_graph(config, cell.seed);
  setup.split = split_nodes(setup.graph, config.ratios, cell.seed);
  setup.train = config.train;
  setup.train.seed = config.train.seed + cell.seed;

  AttackConfig& attack = setup.attack;
  attack = config.attack;
  double ratio = config.budget_ratio;
  switch (config.axis) {
    case SweepAxis::budget_ratio: ratio = cell.numeric_value; break;
    case SweepAxis::beta: attack.noise.beta = cell.numeric_value; break;
    case SweepAxis::alpha: attack.smoothing.alpha = cell.numeric_value; break;
    case SweepAxis::num_samples:
      attack.smoothing.num_samples = static_cast<int>(cell.numeric_value);
      break;
    case SweepAxis::a: attack.scheme.a = cell.numeric_value; break;
    case SweepAxis::scheme: break;
  }
  attack.budget = static_cast<Index>(std::floor(ratio * static_cast<double>(setup.graph.num_edges())));
  attack.scheme.kind = cell.scheme;
  attack.scheme.seed = cell.seed;
  attack.seed = cell.seed;
  attack.smoothing.seed = cell.seed;
  attack.validate();
  return setup;
}

CellOutcome run_cell(const CellSetup& setup, AttackMode mode, bool certify_clean) {
  CellOutcome outcome;
  const Graph& graph = setup.graph;
  const AttackConfig& attack = setup.attack;
  if (mode == AttackMode::evasion) {
    const GCNParams params = train(graph, setup.split, setup.train);
    outcome.report = pgd_evasion(params, graph, setup.split, attack);
    if (certify_clean) {
      std::vector<int> truth;
      for (Index u : setup.split.test) truth.push_back(graph.labels[u]);
      outcome.clean_certificates =
          certify_evasion(params, graph.adjacency, graph.features, setup.split.test, truth,
                          attack.noise, attack.smoothing, attack.r_max);
    }
  } else {
    outcome.report = minmax_poisoning(graph, setup.split, setup.train, attack);
    if (certify_clean) {
      const LabelView view(graph.labels, setup.split.train);
      const std::vector<int> train_labels = view.gather(setup.split.train);
      outcome.clean_certificates = certify_poisoning(
          graph.adjacency, graph.features, setup.split.train, train_labels, graph.num_classes,
          setup.split.train, train_labels, setup.train, attack.noise, attack.smoothing,
          attack.r_max);
    }
  }
  return outcome;
}

std::string results_csv_header() {
  return "seed,axis,value,scheme,mode,budget,budget_used,pre_accuracy,post_accuracy,status,reason";
}

std::string format_result_row(const ResultRow& row) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{}", row.seed, row.axis, row.value, row.scheme,
                     row.mode, row.budget, row.budget_used, canonical(row.pre_accuracy),
                     canonical(row.post_accuracy), row.ok ? "ok" : "failed", sanitize(row.reason));
}

namespace {

std::string cell_key(std::uint64_t seed, const std::string& value, const std::string& scheme) {
  return fmt::format("{}|{}|{}", seed, value, scheme);
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return lines;
}

std::optional<ResultRow> parse_result_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream stream(line);
  std::string item;
  while (std::getline(stream, item, ',')) f.push_back(item);
  if (line.back() == ',') f.emplace_back();
  if (f.size() != 11) return std::nullopt;
  try {
    ResultRow row;
    row.seed = std::stoull(f[0]);
    row.axis = f[1];
    row.value = f[2];
    row.scheme = f[3];
    row.mode = f[4];
    row.budget = std::stoll(f[5]);
    row.budget_used = std::stoll(f[6]);
    row.pre_accuracy = std::stod(f[7]);
    row.post_accuracy = std::stod(f[8]);
    row.ok = f[9] == "ok";
    row.reason = f[10];
    return row;
  } catch (const std::logic_error&) {
    return std::nullopt;
  }
}

double mean_of(const std::vector<double>& xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

void write_lines(const fs::path& path, const std::string& header,
                 const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << header << '\n';
  for (const auto& line : lines) out << line << '\n';
}

}  // namespace

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::vector<SummaryRow> summary;
  std::map<std::pair<std::string, std::string>, std::size_t> position;
  std::vector<std::pair<std::vector<double>, std::vector<double>>> samples;
  for (const auto& row : rows) {
    const auto key = std::make_pair(row.value, row.scheme);
    auto it = position.find(key);
    if (it == position.end()) {
      it = position.emplace(key, summary.size()).first;
      summary.push_back({row.value, row.scheme});
      samples.emplace_back();
    }
    if (!row.ok) continue;
    samples[it->second].first.push_back(row.pre_accuracy);
    samples[it->second].second.push_back(row.post_accuracy);
  }
  for (std::size_t i = 0; i < summary.size(); ++i) {
    const auto& [pre, post] = samples[i];
    summary[i].count = static_cast<Index>(pre.size());
    if (pre.empty()) continue;
    summary[i].pre_mean = mean_of(pre);
    summary[i].pre_std = std_of(pre, summary[i].pre_mean);
    summary[i].post_mean = mean_of(post);
    summary[i].post_std = std_of(post, summary[i].post_mean);
  }
  return summary;
}

SweepResult run_sweep(const ExperimentConfig& config, bool resume) {
  config.validate();
  const std::vector<Cell> cells = enumerate_cells(config);
  fs::create_directories(config.output_dir);
  const fs::path results_path = config.output_dir / "results.csv";
  const fs::path runtime_path = config.output_dir / "runtime.csv";

  std::unordered_map<std::string, ResultRow> previous;
  std::unordered_map<std::string, std::string> previous_timing;
  if (resume) {
    for (const auto& line : read_lines(results_path)) {
      auto row = parse_result_row(line);
      if (row && row->ok) previous[cell_key(row->seed, row->value, row->scheme)] = *row;
    }
    for (const auto& line : read_lines(runtime_path)) {
      const auto parts = split_list(line);
      if (parts.size() == 6 && parts[0] != "seed")
        previous_timing[fmt::format("{}|{}|{}", parts[0], parts[2], parts[3])] = line;
    }
  }

  const std::string axis = to_string(config.axis);
  const std::string mode = to_string(config.mode);
  SweepResult result;
  result.rows.resize(cells.size());
  std::vector<std::uint8_t> reused(cells.size(), 0);
  std::vector<Index> pending;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto key = cell_key(cells[i].seed, cells[i].value, to_string(cells[i].scheme));
    if (auto it = previous.find(key); it != previous.end()) {
      result.rows[i] = it->second;
      reused[i] = 1;
      ++result.skipped;
    } else {
      pending.push_back(static_cast<Index>(i));
    }
  }

  parallel_for(static_cast<Index>(pending.size()), config.jobs, [&](Index job) {
    const Cell& cell = cells[static_cast<std::size_t>(pending[job])];
    ResultRow& row = result.rows[static_cast<std::size_t>(pending[job])];
    row.seed = cell.seed;
    row.axis = axis;
    row.value = cell.value;
    row.scheme = to_string(cell.scheme);
    row.mode = mode;
    try {
      const CellSetup setup = prepare_cell(config, cell);
      row.budget = setup.attack.budget;
      const CellOutcome outcome = run_cell(setup, config.mode);
      row.budget_used = outcome.report.perturbation.popcount();
      row.pre_accuracy = outcome.report.pre_attack_accuracy;
      row.post_accuracy = outcome.report.post_attack_accuracy;
      row.runtime_seconds = outcome.report.runtime_seconds;
      row.certification_seconds = outcome.report.certification_seconds;
    } catch (const std::exception& e) {
      row.ok = false;
      row.reason = e.what();
    }
  });

  std::vector<std::string> raw_lines, timing_lines;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const ResultRow& row = result.rows[i];
    if (!row.ok) ++result.failed;
    raw_lines.push_back(format_result_row(row));
    const auto key = cell_key(row.seed, row.value, row.scheme);
    if (reused[i] && previous_timing.count(key)) {
      timing_lines.push_back(previous_timing[key]);
    } else {
      timing_lines.push_back(fmt::format("{},{},{},{},{:.6f},{:.6f}", row.seed, row.axis, row.value,
                                         row.scheme, row.runtime_seconds,
                                         row.certification_seconds));
    }
  }
  write_lines(results_path, results_csv_header(), raw_lines);
  write_lines(runtime_path, "seed,axis,value,scheme,runtime_seconds,certification_seconds",
              timing_lines);

  std::vector<std::string> summary_lines;
  for (const auto& s : summarize(result.rows)) {
    summary_lines.push_back(fmt::format("{},{},{},{},{},{},{},{}", axis, s.value, s.scheme, s.count,
                                        canonical(s.pre_mean), canonical(s.pre_std),
                                        canonical(s.post_mean), canonical(s.post_std)));
  }
  write_lines(config.output_dir / "summary.csv",
              "axis,value,scheme,count,pre_mean,pre_std,post_mean,post_std", summary_lines);
  return result;
}

std::vector<DistributionRow> perturbed_edge_distribution(Index num_nodes, const EdgeMask& delta,
                                                         std::span<const Certificate> certificates) {
  std::unordered_map<Index, int> size_of;
  for (const auto& c : certificates) size_of[c.node] = c.certified_size;
  std::map<int, Index> bins;
  Index none = 0;
  for (const auto& [s, t] : flipped_pairs(num_nodes, delta)) {
    bool touched = false;
    for (Index endpoint : {s, t}) {
      if (auto it = size_of.find(endpoint); it != size_of.end()) {
        ++bins[it->second];
        touched = true;
      }
    }
    if (!touched) ++none;
  }
  std::vector<DistributionRow> rows;
  for (const auto& [k, count] : bins) rows.push_back({k, count});
  if (none > 0) rows.push_back({std::nullopt, none});
  return rows;
}

void report_distribution(Index num_nodes, const EdgeMask& delta,
                         std::span<const Certificate> certificates, const fs::path& path) {
  std::vector<std::string> lines;
  for (const auto& row : perturbed_edge_distribution(num_nodes, delta, certificates)) {
    lines.push_back(fmt::format("{},{}",
                                row.certified_size ? std::to_string(*row.certified_size) : "none",
                                row.edges));
  }
  write_lines(path, "certified_size,edges", lines);
}

std::vector<ProfileRow> runtime_profile(const ExperimentConfig& config,
                                        std::span<const int> sample_counts, const fs::path& path) {
  std::vector<ProfileRow> rows;
  const Cell base = enumerate_cells(config).front();
  for (int n : sample_counts) {
    if (n < 1) throw ParameterError("sample counts must be positive");
    Cell cell = base;
    cell.scheme = WeightScheme::Kind::certified;
    CellSetup setup = prepare_cell(config, cell);
    setup.attack.smoothing.num_samples = n;
    const CellOutcome outcome = run_cell(setup, config.mode);
    rows.push_back({n, outcome.report.runtime_seconds, outcome.report.certification_seconds});
  }
  if (!path.empty()) {
    std::vector<std::string> lines;
    for (const auto& r : rows)
      lines.push_back(fmt::format("{},{:.6f},{:.6f}", r.num_samples, r.attack_seconds,
                                  r.certification_seconds));
    write_lines(path, "num_samples,attack_seconds,certification_seconds", lines);
  }
  return rows;
}

}  // namespace crgraph
