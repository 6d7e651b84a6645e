#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "pseudopilot/dataset.hpp"
#include "pseudopilot/orchestrator.hpp"

namespace pseudopilot {

// One experiment: a dataset (generated or loaded), a method x seed grid,
// a k-per-class list for sweeps, and the shared run configuration.
struct ExperimentSpec {
  BlobSpec blobs;         // generator parameters (used when data_path is empty)
  std::string data_path;  // pre-generated dataset file instead of the generator
  std::vector<Method> methods{Method::kSPlusT, Method::kTml, Method::kTmlDqnpl};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::size_t> k_shots{1, 3, 5};
  std::string out_dir = ".";
  std::size_t jobs = 1;
  bool transition_logs = false;  // per-cell agent transition files
  RunConfig run;                 // method and seed are filled per cell
};

void validate_spec(const ExperimentSpec& spec);

// JSON configuration with a "schema" version field. Unknown keys and type
// mismatches are rejected with the offending key named.
ExperimentSpec parse_spec_text(const std::string& text);
ExperimentSpec load_spec(const std::string& path);

// The standard synthetic benchmark: four blob classes in two dimensions,
// rotated and shifted so the plain source+target baseline lands mid-range
// instead of saturating.
BlobSpec standard_blobs(std::uint64_t data_seed);
RunConfig standard_run_config();

// Builds the spec's dataset (generator or file).
DatasetBundle realize_dataset(const ExperimentSpec& spec);

// Outcome of one (method, seed) cell. A failed run keeps its error text;
// the other cells still execute.
struct CellResult {
  Method method = Method::kTml;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  RunResult run;
};

// Executes every (method, seed) cell against one dataset. `jobs` > 1
// dispatches cells to a worker pool; results come back in grid order
// (methods outer, seeds inner) regardless of completion order.
std::vector<CellResult> run_cells(const ExperimentSpec& spec, const DatasetBundle& bundle);

// One curve point of the labels-per-class sweep.
struct CurvePoint {
  std::size_t k = 0;
  Method method = Method::kTml;
  std::size_t n = 0;  // contributing seeds
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
};

// Re-generates the dataset at each k in spec.k_shots and runs the grid.
// Requires the generator (a fixed data file pins its own k).
std::vector<CurvePoint> sweep_kshot(const ExperimentSpec& spec);

// Comma-separated emitters. Every float is printed with "%.17g" so a rerun
// of the same spec is byte-identical. Phase rows carry per-phase accuracy,
// positive-set size, and positive precision; the summary aggregates final
// accuracies per method (sample standard deviation, 0 when n < 2).
void write_results_csv(const std::string& path, const std::vector<CellResult>& cells);
void write_summary_csv(const std::string& path, const std::vector<CellResult>& cells,
                       const std::vector<Method>& method_order);
void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& points);

// Mean and sample standard deviation of final accuracies of the ok cells
// of one method (empty input: n = 0, both stats 0).
struct MethodStats {
  std::size_t n = 0;
  double mean = 0.0;
  double stddev = 0.0;
};
MethodStats method_stats(const std::vector<CellResult>& cells, Method method);

// Subcommand drivers; return a process exit code (0 ok, 1 usage, 2 run
// failure). Progress goes to the log stream, results to out_dir.
int cmd_run(const ExperimentSpec& spec, std::ostream& log);
int cmd_sweep_kshot(const ExperimentSpec& spec, std::ostream& log);
int cmd_gen_data(const ExperimentSpec& spec, std::ostream& log);

}  // namespace pseudopilot
