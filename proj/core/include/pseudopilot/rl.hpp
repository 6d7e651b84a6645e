#pragma once

#include <cstdint>
#include <deque>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "pseudopilot/mlp.hpp"
#include "pseudopilot/model.hpp"
#include "pseudopilot/param_store.hpp"
#include "pseudopilot/pseudo.hpp"
#include "pseudopilot/rng.hpp"
#include "pseudopilot/tensor.hpp"

namespace pseudopilot {

// Geometry of the agent state: `capacity` candidate blocks, then K labeled
// centroid blocks, then K unlabeled centroid blocks. Every block is a
// [feature, class-probability] pair of length d+K.
struct StateLayout {
  std::size_t capacity = 0;  // candidate slots
  int classes = 0;           // K
  std::size_t feature_dim = 0;

  std::size_t block_len() const { return feature_dim + static_cast<std::size_t>(classes); }
  std::size_t total_len() const {
    return (capacity + 2 * static_cast<std::size_t>(classes)) * block_len();
  }
  std::size_t candidate_offset(std::size_t slot) const { return slot * block_len(); }
  std::size_t labeled_offset(int cls) const {
    return (capacity + static_cast<std::size_t>(cls)) * block_len();
  }
  std::size_t unlabeled_offset(int cls) const {
    return (capacity + static_cast<std::size_t>(classes + cls)) * block_len();
  }
};

// State as a [1, total_len] tensor. Candidate blocks hold [F(x), C(x)] for
// occupied slots and zeros for consumed ones; labeled blocks average [F,C]
// per class over the labeled inputs; unlabeled blocks average [F,C] per
// predicted class over xu, zeros when no sample predicts a class. A class
// without a labeled member raises ValidationError naming it. Feature vectors
// enter blocks L2-normalized (the gauge the cosine classifier sees): raw
// magnitudes are unconstrained by training and would swamp the Q-net input.
Tensor build_state(const StateLayout& layout, const PseudoPool& pool, const Model& m,
                   const Tensor& labeled_x, const std::vector<int>& labeled_y,
                   const Tensor& xu);

// Consumed slots are exactly the all-zero candidate blocks (an occupied
// block cannot be all zero: its probability part sums to one).
std::vector<bool> occupied_mask_from_state(const StateLayout& layout, const Tensor& state);

// Per-class mean feature [K, d] over labeled samples; an empty class
// raises ValidationError naming it.
Tensor class_centers(const Model& m, const Tensor& labeled_x,
                     const std::vector<int>& labeled_y);

// Log softmax over the s-scaled cosine similarity of each feature row to
// each center row: [n, K]. Max-subtracted, so finite even at s = 30.
Tensor center_log_probs(const Tensor& features, const Tensor& centers, double scale);

// Mean prediction entropy (nats) over a set.
double mean_entropy(const Model& m, const Tensor& x);

struct RewardParams {
  double beta = 1.0;
  double lambda = 0.1;
  double scale = 30.0;                 // shared with the classifier head
  std::optional<double> tau_override;  // when unset: (1 + beta) * log 0.9

  double tau() const;
};

// phi = log p_c + beta * log p_f + lambda * delta_e (log probabilities in).
double selection_metric(double log_pc, double log_pf, double delta_e,
                        const RewardParams& p);

// +1 when phi > tau, else -1 (ties are bad picks).
double binary_reward(double phi, double tau);

struct Transition {
  Tensor state;         // [1, L]
  std::size_t action = 0;
  double reward = 0.0;  // exactly +1 or -1
  Tensor next_state;    // [1, L]
  bool terminal = false;
};

// Bounded FIFO of transitions with uniform with-replacement sampling.
class ReplayPool {
 public:
  explicit ReplayPool(std::size_t capacity);

  void insert(Transition t);
  std::vector<Transition> sample(std::size_t batch_size, Rng& rng) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  std::deque<Transition> entries_;
};

// Three fully connected layers (ReLU after the hidden two), state in,
// one Q value per candidate slot out.
struct QNet {
  MlpSpec spec;  // prefix "q."
  ParamStore params;
  StateLayout layout;
};

QNet init_qnet(const StateLayout& layout, std::size_t hidden1, std::size_t hidden2, Rng& rng);

// Q values for a batch of states: [n, capacity].
Tensor q_values(const QNet& q, const Tensor& states);

// Epsilon-greedy over the occupied slots only: with probability epsilon a
// uniform occupied slot, otherwise the occupied argmax of Q(state, .)
// (lowest slot wins ties). No occupied slot raises ValidationError.
std::size_t select_action(const QNet& q, const Tensor& state,
                          const std::vector<bool>& occupied, double epsilon, Rng& rng);

// Bootstrap target: r for terminal transitions, else r + gamma * max Q over
// the occupied slots of next_state.
double q_target(const QNet& q, const Transition& t, double gamma);
std::vector<double> q_targets(const QNet& q, const std::vector<Transition>& batch,
                              double gamma);

// Sum of squared TD errors sum_i (Q(s_i, a_i) - V_i)^2 at fixed targets V.
// When grads is non-null it receives the exact gradient for q.params.
double td_loss(const QNet& q, const std::vector<Transition>& batch,
               const std::vector<double>& targets, GradMap* grads);

// One semi-gradient step (targets held fixed); returns the pre-step loss.
double q_update(QNet& q, const std::vector<Transition>& batch, double gamma,
                const OptimConfig& cfg);

// Linear 1 -> 0 exploration schedule over total_steps agent steps.
double epsilon_linear(std::size_t step, std::size_t total_steps);

// Append-only per-transition record file (one line per transition).
class TransitionLogger {
 public:
  explicit TransitionLogger(const std::string& path);

  void log(std::size_t episode, std::size_t step, std::size_t action, double reward,
           double phi, bool terminal);

 private:
  std::ofstream out_;
};

}  // namespace pseudopilot
