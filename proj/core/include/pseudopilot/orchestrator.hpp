#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pseudopilot/dataset.hpp"
#include "pseudopilot/model.hpp"
#include "pseudopilot/param_store.hpp"
#include "pseudopilot/pseudo.hpp"
#include "pseudopilot/rl.hpp"
#include "pseudopilot/rng.hpp"

namespace pseudopilot {

enum class Method { kSPlusT, kEnt, kTml, kTmlSpl, kTmlDqnpl, kCml };

std::string method_name(Method m);
std::optional<Method> parse_method(const std::string& name);

// Supervised margin applied by a method (zero for the plain-CE baselines)
// and its entropy weight (zero when the method ignores unlabeled data).
double method_margin(Method m, double margin);
double method_alpha(Method m, double alpha);

struct RunConfig {
  Method method = Method::kTml;
  std::uint64_t seed = 0;

  // architecture
  std::vector<std::size_t> hidden = {64};
  std::size_t feature_dim = 16;
  double scale = 30.0;
  double margin = 0.5;
  double alpha = 0.1;

  // main-model optimizer (polynomial lr decay over the whole run)
  OptimConfig optim;  // base_lr 0.01, momentum 0.9, weight_decay 5e-4

  std::size_t batch_size = 32;
  std::size_t pretrain_epochs = 30;
  std::size_t finetune_epochs = 6;  // main-model epochs after each episode
  std::size_t max_outer = 5;
  std::size_t early_stop_patience = 2;
  std::size_t probe_size = 64;  // seeded validation probe for early stop

  // selective pseudo-labeling
  double confidence_threshold = 0.9;

  // selection agent
  std::size_t candidate_capacity = 16;  // N_c
  std::size_t qnet_hidden1 = 128;
  std::size_t qnet_hidden2 = 64;
  // Constant lr, no decay. The TD objective is a batch sum, so its gradient
  // scale grows with q_batch; 3e-5 sits ~10x under the measured divergence
  // threshold on the desk benchmark (instability starts near 3e-4).
  OptimConfig q_optim{3e-5, 0.9, 0.0, 0.0, 0.75};
  double gamma = 0.9;
  RewardParams reward;
  std::size_t replay_capacity = 10000;
  std::size_t q_batch = 32;
  std::size_t epsilon_total_steps = 40;  // linear 1 -> 0 over this many agent steps
  std::size_t clone_epochs = 1;          // trial-model epochs per selection

  std::string transition_log_path;  // empty: no transition log
};

void validate_config(const RunConfig& cfg);

struct PhaseRecord {
  std::string phase;  // "pretrain", "outer1", ...
  double accuracy = 0.0;
  std::size_t positives = 0;        // |D_p| after this phase
  double positive_precision = 0.0;  // 0 when D_p is empty
};

struct EpisodeLog {
  std::size_t outer = 0;
  std::vector<std::size_t> candidate_indices;  // rows into D_u, slot order
  std::vector<int> candidate_labels;           // pseudo-labels, slot order
  std::vector<std::size_t> actions;            // chosen slots, step order
  std::vector<double> rewards;
  std::vector<double> phis;
};

struct RunResult {
  Method method = Method::kTml;
  std::uint64_t seed = 0;
  std::vector<PhaseRecord> phases;
  double final_accuracy = 0.0;
  std::vector<PseudoLabel> positives;  // final D_p (pseudo-labeled rows of D_u)
  double positive_precision = 0.0;
  std::vector<EpisodeLog> episodes;
  double wall_seconds = 0.0;  // never written into comparable outputs
  Model model;                // final trained model
};

// Cycles through seeded shuffles of [0, n) in chunks of `batch`; when the
// population is smaller than one batch, draws with replacement instead.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch, Rng rng);
  std::vector<std::size_t> next();

 private:
  std::size_t n_;
  std::size_t batch_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

// Accuracy of the model on the unlabeled split, judged by the hidden
// labels. The single sanctioned consumer of DatasetBundle::hidden_labels
// besides positive_precision below.
double evaluate(const Model& m, const DatasetBundle& bundle);

// Fraction of positives whose pseudo-label matches the hidden label
// (0 for an empty set).
double positive_precision(const DatasetBundle& bundle,
                          const std::vector<PseudoLabel>& positives);

// Base training with the combined objective (supervised terms plus
// alpha-weighted entropy). Exposed for tests; run_method uses it.
Model pretrain_base(const RunConfig& cfg, const DatasetBundle& bundle);

// Selection-quality baseline: pretrain exactly as the Q-learning loop does,
// pseudo-label the unlabeled set, pick `size` distinct samples uniformly at
// random, and return the fraction whose pseudo-label matches the hidden
// label. Compares against the agent's positive-set precision.
double random_selection_precision(const RunConfig& cfg, const DatasetBundle& bundle,
                                  std::size_t size);

// One selection episode. `make_state` builds the agent state from the
// current pool; `score` performs the per-selection evaluation (trial-model
// epoch plus the selection metric) and returns phi. Selections accumulate
// in pool.positives(). Exposed for tests, which may stub `score`.
struct EpisodeResult {
  std::vector<std::size_t> actions;
  std::vector<double> phis;
  std::vector<double> rewards;
  bool ended_negative = false;
};

EpisodeResult run_episode(PseudoPool& pool, QNet& qnet, ReplayPool& replay, Rng& rng,
                          const std::function<Tensor(const PseudoPool&)>& make_state,
                          const std::function<double(const PseudoLabel&)>& score,
                          double tau, double gamma, const OptimConfig& q_optim,
                          std::size_t q_batch, std::size_t* agent_step,
                          std::size_t epsilon_total_steps, TransitionLogger* logger,
                          std::size_t episode_index);

// Full run of any method; dispatches to the baseline trainer, the
// confidence-threshold loop, or the Q-learning loop.
RunResult run_method(const RunConfig& cfg, const DatasetBundle& bundle);

}  // namespace pseudopilot
