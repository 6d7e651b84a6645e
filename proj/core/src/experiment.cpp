#include "pseudopilot/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <ostream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "pseudopilot/errors.hpp"

namespace pseudopilot {

namespace {

using nlohmann::json;

[[noreturn]] void bad_config(const std::string& msg) { throw ConfigError("config: " + msg); }

void check_keys(const json& obj, const char* where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) bad_config(std::string(where) + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) bad_config(std::string(where) + ": unknown key \"" + it.key() + "\"");
  }
}

double get_double(const json& o, const char* key, double dflt) {
  if (!o.contains(key)) return dflt;
  const json& v = o.at(key);
  if (!v.is_number()) bad_config(std::string(key) + ": expected a number");
  return v.get<double>();
}

std::size_t get_count(const json& o, const char* key, std::size_t dflt) {
  if (!o.contains(key)) return dflt;
  const json& v = o.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && v.get<std::int64_t>() < 0))
    bad_config(std::string(key) + ": expected a nonnegative integer");
  return static_cast<std::size_t>(v.get<std::int64_t>());
}

std::string get_string(const json& o, const char* key, const std::string& dflt) {
  if (!o.contains(key)) return dflt;
  const json& v = o.at(key);
  if (!v.is_string()) bad_config(std::string(key) + ": expected a string");
  return v.get<std::string>();
}

bool get_bool(const json& o, const char* key, bool dflt) {
  if (!o.contains(key)) return dflt;
  const json& v = o.at(key);
  if (!v.is_boolean()) bad_config(std::string(key) + ": expected a boolean");
  return v.get<bool>();
}

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  return out;
}

}  // namespace

void validate_spec(const ExperimentSpec& spec) {
  if (spec.methods.empty()) throw ConfigError("spec: methods must be nonempty");
  if (spec.seeds.empty()) throw ConfigError("spec: seeds must be nonempty");
  for (std::size_t k : spec.k_shots)
    if (k == 0) throw ConfigError("spec: k_shots entries must be >= 1");
  if (spec.jobs == 0) throw ConfigError("spec: jobs must be >= 1");
  if (spec.out_dir.empty()) throw ConfigError("spec: out_dir must be nonempty");
  validate_config(spec.run);
}

ExperimentSpec parse_spec_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  check_keys(root, "config",
             {"schema", "dataset", "methods", "seeds", "k_shots", "out_dir", "jobs",
              "transition_logs", "run"});
  if (!root.contains("schema")) bad_config("missing schema field");
  if (!root.at("schema").is_number_integer() || root.at("schema").get<std::int64_t>() != 1)
    bad_config("unsupported schema (expected 1)");

  ExperimentSpec spec;

  if (root.contains("dataset")) {
    const json& d = root.at("dataset");
    check_keys(d, "dataset",
               {"type", "path", "seed", "classes", "input_dim", "shift_magnitude",
                "rotation_angle", "n_source_per_class", "k_shot",
                "n_unlabeled_per_class", "sigma", "min_separation"});
    const std::string type = get_string(d, "type", "blobs");
    if (type == "file") {
      spec.data_path = get_string(d, "path", "");
      if (spec.data_path.empty()) bad_config("dataset: file type needs a path");
    } else if (type == "blobs") {
      BlobSpec b;
      b.seed = get_count(d, "seed", b.seed);
      b.classes = static_cast<int>(get_count(d, "classes", static_cast<std::size_t>(b.classes)));
      b.input_dim = get_count(d, "input_dim", b.input_dim);
      b.shift_magnitude = get_double(d, "shift_magnitude", b.shift_magnitude);
      b.rotation_angle = get_double(d, "rotation_angle", b.rotation_angle);
      b.n_source_per_class = get_count(d, "n_source_per_class", b.n_source_per_class);
      b.k_shot = get_count(d, "k_shot", b.k_shot);
      b.n_unlabeled_per_class = get_count(d, "n_unlabeled_per_class", b.n_unlabeled_per_class);
      b.sigma = get_double(d, "sigma", b.sigma);
      b.min_separation = get_double(d, "min_separation", b.min_separation);
      spec.blobs = b;
    } else {
      bad_config("dataset: unknown type \"" + type + "\"");
    }
  }

  if (root.contains("methods")) {
    const json& ms = root.at("methods");
    if (!ms.is_array()) bad_config("methods: expected an array of strings");
    spec.methods.clear();
    for (const json& m : ms) {
      if (!m.is_string()) bad_config("methods: expected an array of strings");
      const auto parsed = parse_method(m.get<std::string>());
      if (!parsed) bad_config("methods: unknown method \"" + m.get<std::string>() + "\"");
      spec.methods.push_back(*parsed);
    }
  }

  if (root.contains("seeds")) {
    const json& ss = root.at("seeds");
    if (!ss.is_array()) bad_config("seeds: expected an array of integers");
    spec.seeds.clear();
    for (const json& s : ss) {
      if (!s.is_number_integer() || s.get<std::int64_t>() < 0)
        bad_config("seeds: expected nonnegative integers");
      spec.seeds.push_back(s.get<std::uint64_t>());
    }
  }

  if (root.contains("k_shots")) {
    const json& ks = root.at("k_shots");
    if (!ks.is_array()) bad_config("k_shots: expected an array of integers");
    spec.k_shots.clear();
    for (const json& k : ks) {
      if (!k.is_number_integer() || k.get<std::int64_t>() < 1)
        bad_config("k_shots: expected integers >= 1");
      spec.k_shots.push_back(k.get<std::size_t>());
    }
  }

  spec.out_dir = get_string(root, "out_dir", spec.out_dir);
  spec.jobs = get_count(root, "jobs", spec.jobs);
  spec.transition_logs = get_bool(root, "transition_logs", spec.transition_logs);

  if (root.contains("run")) {
    const json& r = root.at("run");
    check_keys(r, "run",
               {"hidden", "feature_dim", "scale", "margin", "alpha", "lr", "momentum",
                "weight_decay", "lr_decay_rate", "lr_decay_power", "batch_size",
                "pretrain_epochs", "finetune_epochs", "max_outer", "early_stop_patience",
                "probe_size", "confidence_threshold", "candidate_capacity", "qnet_hidden1",
                "qnet_hidden2", "q_lr", "gamma", "beta", "lambda", "tau",
                "replay_capacity", "q_batch", "epsilon_total_steps", "clone_epochs"});
    RunConfig& c = spec.run;
    if (r.contains("hidden")) {
      const json& h = r.at("hidden");
      if (!h.is_array()) bad_config("hidden: expected an array of integers");
      c.hidden.clear();
      for (const json& w : h) {
        if (!w.is_number_integer() || w.get<std::int64_t>() < 1)
          bad_config("hidden: expected integers >= 1");
        c.hidden.push_back(w.get<std::size_t>());
      }
    }
    c.feature_dim = get_count(r, "feature_dim", c.feature_dim);
    c.scale = get_double(r, "scale", c.scale);
    c.margin = get_double(r, "margin", c.margin);
    c.alpha = get_double(r, "alpha", c.alpha);
    c.optim.base_lr = get_double(r, "lr", c.optim.base_lr);
    c.optim.momentum = get_double(r, "momentum", c.optim.momentum);
    c.optim.weight_decay = get_double(r, "weight_decay", c.optim.weight_decay);
    c.optim.decay_rate = get_double(r, "lr_decay_rate", c.optim.decay_rate);
    c.optim.decay_power = get_double(r, "lr_decay_power", c.optim.decay_power);
    c.batch_size = get_count(r, "batch_size", c.batch_size);
    c.pretrain_epochs = get_count(r, "pretrain_epochs", c.pretrain_epochs);
    c.finetune_epochs = get_count(r, "finetune_epochs", c.finetune_epochs);
    c.max_outer = get_count(r, "max_outer", c.max_outer);
    c.early_stop_patience = get_count(r, "early_stop_patience", c.early_stop_patience);
    c.probe_size = get_count(r, "probe_size", c.probe_size);
    c.confidence_threshold = get_double(r, "confidence_threshold", c.confidence_threshold);
    c.candidate_capacity = get_count(r, "candidate_capacity", c.candidate_capacity);
    c.qnet_hidden1 = get_count(r, "qnet_hidden1", c.qnet_hidden1);
    c.qnet_hidden2 = get_count(r, "qnet_hidden2", c.qnet_hidden2);
    c.q_optim.base_lr = get_double(r, "q_lr", c.q_optim.base_lr);
    c.gamma = get_double(r, "gamma", c.gamma);
    c.reward.beta = get_double(r, "beta", c.reward.beta);
    c.reward.lambda = get_double(r, "lambda", c.reward.lambda);
    if (r.contains("tau")) c.reward.tau_override = get_double(r, "tau", 0.0);
    c.replay_capacity = get_count(r, "replay_capacity", c.replay_capacity);
    c.q_batch = get_count(r, "q_batch", c.q_batch);
    c.epsilon_total_steps = get_count(r, "epsilon_total_steps", c.epsilon_total_steps);
    c.clone_epochs = get_count(r, "clone_epochs", c.clone_epochs);
  }

  validate_spec(spec);
  return spec;
}

ExperimentSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_spec_text(buf.str());
}

BlobSpec standard_blobs(std::uint64_t data_seed) {
  BlobSpec b;
  b.seed = data_seed;
  b.classes = 4;
  b.input_dim = 2;
  // Tuned so the source-only baseline lands mid 70-90% and pseudo-labels
  // are imperfect enough that selection quality is measurable.
  b.shift_magnitude = 3.0;
  b.rotation_angle = 0.7;
  b.n_source_per_class = 100;
  b.k_shot = 3;
  b.n_unlabeled_per_class = 50;
  b.sigma = 1.4;
  b.min_separation = 5.5;
  return b;
}

RunConfig standard_run_config() {
  RunConfig cfg;  // the struct defaults are the desk-scale settings
  return cfg;
}

DatasetBundle realize_dataset(const ExperimentSpec& spec) {
  if (!spec.data_path.empty()) return load_bundle(spec.data_path);
  return make_shifted_blobs(spec.blobs);
}

std::vector<CellResult> run_cells(const ExperimentSpec& spec, const DatasetBundle& bundle) {
  struct Cell {
    Method method;
    std::uint64_t seed;
  };
  std::vector<Cell> grid;
  for (Method m : spec.methods)
    for (std::uint64_t s : spec.seeds) grid.push_back(Cell{m, s});

  std::vector<CellResult> results(grid.size());
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.size()) return;
      CellResult& cell = results[i];
      cell.method = grid[i].method;
      cell.seed = grid[i].seed;
      try {
        RunConfig cfg = spec.run;
        cfg.method = grid[i].method;
        cfg.seed = grid[i].seed;
        if (spec.transition_logs && cfg.method == Method::kTmlDqnpl)
          cfg.transition_log_path = spec.out_dir + "/transitions_" + method_name(cfg.method) +
                                    "_seed" + std::to_string(cfg.seed) + ".log";
        const DatasetBundle local = bundle;  // private copy: no shared audit counter
        cell.run = run_method(cfg, local);
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
    }
  };

  const std::size_t jobs = std::min(std::max<std::size_t>(spec.jobs, 1), grid.size());
  if (jobs <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(jobs);
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return results;
}

std::vector<CurvePoint> sweep_kshot(const ExperimentSpec& spec) {
  if (!spec.data_path.empty())
    throw ConfigError("sweep-kshot needs generator parameters (a data file pins its own k)");
  if (spec.k_shots.empty()) throw ConfigError("sweep-kshot: k_shots must be nonempty");

  std::vector<CurvePoint> points;
  for (std::size_t k : spec.k_shots) {
    ExperimentSpec at_k = spec;
    at_k.blobs.k_shot = k;
    const DatasetBundle bundle = make_shifted_blobs(at_k.blobs);
    const std::vector<CellResult> cells = run_cells(at_k, bundle);
    for (Method m : spec.methods) {
      const MethodStats stats = method_stats(cells, m);
      CurvePoint p;
      p.k = k;
      p.method = m;
      p.n = stats.n;
      p.mean_accuracy = stats.mean;
      p.std_accuracy = stats.stddev;
      points.push_back(p);
    }
  }
  return points;
}

MethodStats method_stats(const std::vector<CellResult>& cells, Method method) {
  std::vector<double> acc;
  for (const CellResult& c : cells)
    if (c.ok && c.method == method) acc.push_back(c.run.final_accuracy);
  MethodStats s;
  s.n = acc.size();
  if (acc.empty()) return s;
  double sum = 0.0;
  for (double a : acc) sum += a;
  s.mean = sum / static_cast<double>(acc.size());
  if (acc.size() >= 2) {
    double ss = 0.0;
    for (double a : acc) ss += (a - s.mean) * (a - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(acc.size() - 1));
  }
  return s;
}

void write_results_csv(const std::string& path, const std::vector<CellResult>& cells) {
  std::ofstream out = open_out(path);
  out << "method,seed,phase,accuracy,positives,positive_precision,status\n";
  for (const CellResult& c : cells) {
    if (!c.ok) {
      out << method_name(c.method) << ',' << c.seed << ",error,,,,failed\n";
      continue;
    }
    for (const PhaseRecord& ph : c.run.phases) {
      out << method_name(c.method) << ',' << c.seed << ',' << ph.phase << ','
          << fmt_g(ph.accuracy) << ',' << ph.positives << ','
          << fmt_g(ph.positive_precision) << ",ok\n";
    }
  }
  if (!out) throw ParseError("failed writing " + path);
}

void write_summary_csv(const std::string& path, const std::vector<CellResult>& cells,
                       const std::vector<Method>& method_order) {
  std::ofstream out = open_out(path);
  out << "method,n_seeds,mean_accuracy,std_accuracy\n";
  for (Method m : method_order) {
    const MethodStats s = method_stats(cells, m);
    out << method_name(m) << ',' << s.n << ',';
    if (s.n > 0)
      out << fmt_g(s.mean) << ',' << fmt_g(s.stddev);
    else
      out << ',';
    out << '\n';
  }
  if (!out) throw ParseError("failed writing " + path);
}

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& points) {
  std::ofstream out = open_out(path);
  out << "k,method,n_seeds,mean_accuracy,std_accuracy\n";
  for (const CurvePoint& p : points) {
    out << p.k << ',' << method_name(p.method) << ',' << p.n << ',';
    if (p.n > 0)
      out << fmt_g(p.mean_accuracy) << ',' << fmt_g(p.std_accuracy);
    else
      out << ',';
    out << '\n';
  }
  if (!out) throw ParseError("failed writing " + path);
}

int cmd_run(const ExperimentSpec& spec, std::ostream& log) {
  validate_spec(spec);
  std::filesystem::create_directories(spec.out_dir);
  const DatasetBundle bundle = realize_dataset(spec);
  const std::vector<CellResult> cells = run_cells(spec, bundle);

  bool any_failed = false;
  for (const CellResult& c : cells) {
    if (c.ok) {
      log << method_name(c.method) << " seed " << c.seed << ": accuracy "
          << fmt_short(c.run.final_accuracy) << " (" << fmt_short(c.run.wall_seconds)
          << " s)\n";
    } else {
      any_failed = true;
      log << method_name(c.method) << " seed " << c.seed << ": FAILED (" << c.error << ")\n";
    }
  }
  write_results_csv(spec.out_dir + "/results.csv", cells);
  write_summary_csv(spec.out_dir + "/summary.csv", cells, spec.methods);
  for (Method m : spec.methods) {
    const MethodStats s = method_stats(cells, m);
    log << method_name(m) << ": mean " << fmt_short(s.mean) << " std "
        << fmt_short(s.stddev) << " (n=" << s.n << ")\n";
  }
  log << "wrote " << spec.out_dir << "/results.csv and " << spec.out_dir << "/summary.csv\n";
  return any_failed ? 2 : 0;
}

int cmd_sweep_kshot(const ExperimentSpec& spec, std::ostream& log) {
  validate_spec(spec);
  std::filesystem::create_directories(spec.out_dir);
  const std::vector<CurvePoint> points = sweep_kshot(spec);
  bool any_failed = false;
  for (const CurvePoint& p : points) {
    if (p.n < spec.seeds.size()) any_failed = true;
    log << "k=" << p.k << ' ' << method_name(p.method) << ": mean "
        << fmt_short(p.mean_accuracy) << " std " << fmt_short(p.std_accuracy)
        << " (n=" << p.n << ")\n";
  }
  write_curve_csv(spec.out_dir + "/curve.csv", points);
  log << "wrote " << spec.out_dir << "/curve.csv\n";
  return any_failed ? 2 : 0;
}

int cmd_gen_data(const ExperimentSpec& spec, std::ostream& log) {
  if (!spec.data_path.empty())
    throw ConfigError("gen-data needs generator parameters, not a data file");
  std::filesystem::create_directories(spec.out_dir);
  const DatasetBundle bundle = make_shifted_blobs(spec.blobs);
  const std::string path = spec.out_dir + "/dataset.txt";
  save_bundle(bundle, path);
  log << "wrote " << path << " (" << bundle.source().size() << " source, "
      << bundle.target_labeled().size() << " labeled target, "
      << bundle.target_unlabeled().size() << " unlabeled target)\n";
  return 0;
}

}  // namespace pseudopilot
