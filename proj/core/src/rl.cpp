#include "pseudopilot/rl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "pseudopilot/autodiff.hpp"
#include "pseudopilot/errors.hpp"

namespace pseudopilot {

namespace {

void check_layout(const StateLayout& layout) {
  if (layout.capacity == 0 || layout.classes < 2 || layout.feature_dim == 0)
    throw ConfigError("StateLayout: capacity, classes and feature_dim must be positive");
}

// [F(x), C(x)] pairs for every row of x under the current model.
struct FeatProbs {
  Tensor feats;  // [n, d]
  Tensor probs;  // [n, K]
};

FeatProbs feat_probs(const Model& m, const Tensor& x) {
  FeatProbs fp;
  fp.feats = features_eval(m, x);
  Tensor logits = cosine_eval(m, fp.feats);
  for (auto& v : logits.values()) v *= m.spec.classifier.scale;
  fp.probs = softmax_rows_eval(logits);
  return fp;
}

// State blocks carry the feature direction, not the raw vector: the cosine
// classifier is scale-invariant, so nothing anchors the extractor's output
// magnitude and it can grow without bound during training.  Feeding the unit
// gauge to the Q-net keeps its input scale fixed across runs and epochs.
double feature_inv_norm(const Tensor& feats, std::size_t row) {
  const double norm = feats.row_norm(row);
  if (norm < 1e-12)
    throw NumericError("build_state: zero-norm feature vector at row " + std::to_string(row));
  return 1.0 / norm;
}

void write_block(Tensor& state, std::size_t offset, const Tensor& feats, const Tensor& probs,
                 std::size_t row) {
  const double finv = feature_inv_norm(feats, row);
  std::size_t j = offset;
  for (std::size_t c = 0; c < feats.cols(); ++c) state.at(0, j++) = feats.at(row, c) * finv;
  for (std::size_t c = 0; c < probs.cols(); ++c) state.at(0, j++) = probs.at(row, c);
}

void write_mean_block(Tensor& state, std::size_t offset, const Tensor& feats,
                      const Tensor& probs, const std::vector<std::size_t>& rows) {
  const double inv = 1.0 / static_cast<double>(rows.size());
  std::vector<double> acc(feats.cols() + probs.cols(), 0.0);
  for (std::size_t r : rows) {
    const double finv = feature_inv_norm(feats, r);
    for (std::size_t c = 0; c < feats.cols(); ++c) acc[c] += feats.at(r, c) * finv;
    for (std::size_t c = 0; c < probs.cols(); ++c) acc[feats.cols() + c] += probs.at(r, c);
  }
  std::size_t j = offset;
  for (double v : acc) state.at(0, j++) = v * inv;
}

std::vector<std::vector<std::size_t>> group_rows(const std::vector<int>& labels, int classes,
                                                 const char* what, bool allow_empty) {
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(classes));
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || labels[r] >= classes)
      throw ValidationError(std::string(what) + ": label " + std::to_string(labels[r]) +
                            " outside [0, K)");
    groups[static_cast<std::size_t>(labels[r])].push_back(r);
  }
  if (!allow_empty)
    for (int j = 0; j < classes; ++j)
      if (groups[static_cast<std::size_t>(j)].empty())
        throw ValidationError(std::string(what) + ": class " + std::to_string(j) +
                              " has no labeled member");
  return groups;
}

std::vector<int> argmax_rows(const Tensor& probs) {
  std::vector<int> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.cols(); ++c)
      if (probs.at(r, c) > probs.at(r, best)) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

}  // namespace

Tensor build_state(const StateLayout& layout, const PseudoPool& pool, const Model& m,
                   const Tensor& labeled_x, const std::vector<int>& labeled_y,
                   const Tensor& xu) {
  check_layout(layout);
  if (pool.capacity() != layout.capacity)
    throw ConfigError("build_state: pool capacity does not match the layout");
  if (m.spec.classifier.classes != layout.classes ||
      m.spec.extractor.output_dim() != layout.feature_dim)
    throw ConfigError("build_state: model dimensions do not match the layout");
  if (labeled_x.rows() != labeled_y.size())
    throw ValidationError("build_state: labeled batch/label size mismatch");

  const FeatProbs u = feat_probs(m, xu);
  const FeatProbs l = feat_probs(m, labeled_x);

  Tensor state(1, layout.total_len());

  for (std::size_t slot = 0; slot < pool.capacity(); ++slot) {
    if (!pool.occupied(slot)) continue;  // consumed slots stay zero blocks
    const std::size_t row = pool.slot(slot).index;
    if (row >= xu.rows())
      throw ValidationError("build_state: candidate index " + std::to_string(row) +
                            " outside the unlabeled set");
    write_block(state, layout.candidate_offset(slot), u.feats, u.probs, row);
  }

  const auto labeled_groups = group_rows(labeled_y, layout.classes, "build_state", false);
  for (int j = 0; j < layout.classes; ++j)
    write_mean_block(state, layout.labeled_offset(j), l.feats, l.probs,
                     labeled_groups[static_cast<std::size_t>(j)]);

  const auto predicted_groups =
      group_rows(argmax_rows(u.probs), layout.classes, "build_state", true);
  for (int j = 0; j < layout.classes; ++j) {
    const auto& rows = predicted_groups[static_cast<std::size_t>(j)];
    if (rows.empty()) continue;  // zero block when nothing predicts class j
    write_mean_block(state, layout.unlabeled_offset(j), u.feats, u.probs, rows);
  }

  if (!state.all_finite()) throw NumericError("build_state: non-finite state entries");
  return state;
}

std::vector<bool> occupied_mask_from_state(const StateLayout& layout, const Tensor& state) {
  check_layout(layout);
  if (state.rows() != 1 || state.cols() != layout.total_len())
    throw ConfigError("occupied_mask_from_state: state length does not match the layout");
  std::vector<bool> mask(layout.capacity, false);
  for (std::size_t slot = 0; slot < layout.capacity; ++slot) {
    const std::size_t off = layout.candidate_offset(slot);
    for (std::size_t j = 0; j < layout.block_len(); ++j) {
      if (state.at(0, off + j) != 0.0) {
        mask[slot] = true;
        break;
      }
    }
  }
  return mask;
}

Tensor class_centers(const Model& m, const Tensor& labeled_x,
                     const std::vector<int>& labeled_y) {
  if (labeled_x.rows() != labeled_y.size())
    throw ValidationError("class_centers: batch/label size mismatch");
  const int classes = m.spec.classifier.classes;
  const Tensor feats = features_eval(m, labeled_x);
  const auto groups = group_rows(labeled_y, classes, "class_centers", false);
  Tensor centers(static_cast<std::size_t>(classes), feats.cols());
  for (int j = 0; j < classes; ++j) {
    const auto& rows = groups[static_cast<std::size_t>(j)];
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (std::size_t c = 0; c < feats.cols(); ++c) {
      double s = 0.0;
      for (std::size_t r : rows) s += feats.at(r, c);
      centers.at(static_cast<std::size_t>(j), c) = s * inv;
    }
  }
  return centers;
}

Tensor center_log_probs(const Tensor& features, const Tensor& centers, double scale) {
  Tensor cosine = clamp_unit_eval(
      matmul_nt(row_l2_normalize_eval(features), row_l2_normalize_eval(centers)));
  for (auto& v : cosine.values()) v *= scale;
  return log_softmax_rows_eval(cosine);
}

double mean_entropy(const Model& m, const Tensor& x) {
  if (x.rows() == 0) throw ValidationError("mean_entropy: empty set");
  const Tensor h = entropy_eval(m, x);
  double s = 0.0;
  for (std::size_t r = 0; r < h.rows(); ++r) s += h.at(r, 0);
  return s / static_cast<double>(h.rows());
}

double RewardParams::tau() const {
  if (tau_override) return *tau_override;
  return (1.0 + beta) * std::log(0.9);
}

double selection_metric(double log_pc, double log_pf, double delta_e,
                        const RewardParams& p) {
  return log_pc + p.beta * log_pf + p.lambda * delta_e;
}

double binary_reward(double phi, double tau) { return phi > tau ? 1.0 : -1.0; }

ReplayPool::ReplayPool(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("ReplayPool: zero capacity");
}

void ReplayPool::insert(Transition t) {
  entries_.push_back(std::move(t));
  if (entries_.size() > capacity_) entries_.pop_front();
}

std::vector<Transition> ReplayPool::sample(std::size_t batch_size, Rng& rng) const {
  if (entries_.empty()) throw ValidationError("ReplayPool: sampling from an empty pool");
  std::vector<Transition> out;
  out.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i)
    out.push_back(entries_[rng.uniform_index(entries_.size())]);
  return out;
}

QNet init_qnet(const StateLayout& layout, std::size_t hidden1, std::size_t hidden2, Rng& rng) {
  check_layout(layout);
  QNet q;
  q.layout = layout;
  q.spec.prefix = "q.";
  q.spec.widths = {layout.total_len(), hidden1, hidden2, layout.capacity};
  init_mlp_params(q.params, q.spec, rng);
  return q;
}

Tensor q_values(const QNet& q, const Tensor& states) {
  return mlp_eval(q.params, q.spec, states);
}

std::size_t select_action(const QNet& q, const Tensor& state,
                          const std::vector<bool>& occupied, double epsilon, Rng& rng) {
  if (occupied.size() != q.layout.capacity)
    throw ConfigError("select_action: mask length does not match the layout");
  std::vector<std::size_t> open;
  for (std::size_t i = 0; i < occupied.size(); ++i)
    if (occupied[i]) open.push_back(i);
  if (open.empty()) throw ValidationError("select_action: no occupied slot left");
  if (rng.uniform() < epsilon) return open[rng.uniform_index(open.size())];
  const Tensor qv = q_values(q, state);
  std::size_t best = open.front();
  for (std::size_t slot : open)
    if (qv.at(0, slot) > qv.at(0, best)) best = slot;
  return best;
}

double q_target(const QNet& q, const Transition& t, double gamma) {
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("q_target: gamma must lie in [0,1)");
  if (t.terminal) return t.reward;
  const std::vector<bool> mask = occupied_mask_from_state(q.layout, t.next_state);
  const Tensor qv = q_values(q, t.next_state);
  bool any = false;
  double best = 0.0;
  for (std::size_t slot = 0; slot < mask.size(); ++slot) {
    if (!mask[slot]) continue;
    if (!any || qv.at(0, slot) > best) best = qv.at(0, slot);
    any = true;
  }
  if (!any)
    throw ValidationError("q_target: non-terminal transition with no occupied next slot");
  return t.reward + gamma * best;
}

std::vector<double> q_targets(const QNet& q, const std::vector<Transition>& batch,
                              double gamma) {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& t : batch) out.push_back(q_target(q, t, gamma));
  return out;
}

double td_loss(const QNet& q, const std::vector<Transition>& batch,
               const std::vector<double>& targets, GradMap* grads) {
  if (batch.empty()) throw ValidationError("td_loss: empty batch");
  if (batch.size() != targets.size())
    throw ValidationError("td_loss: batch/target size mismatch");
  Tensor states(batch.size(), q.layout.total_len());
  std::vector<int> actions(batch.size());
  Tensor target_col(batch.size(), 1);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Tensor& s = batch[i].state;
    if (s.rows() != 1 || s.cols() != q.layout.total_len())
      throw ConfigError("td_loss: state length does not match the layout");
    for (std::size_t c = 0; c < s.cols(); ++c) states.at(i, c) = s.at(0, c);
    if (batch[i].action >= q.layout.capacity)
      throw ValidationError("td_loss: action outside the slot range");
    actions[i] = static_cast<int>(batch[i].action);
    target_col.at(i, 0) = targets[i];
  }
  Tape tape;
  Value qs = mlp_forward(tape, q.params, q.spec, states);
  Value diff = sub(pick_columns(qs, actions), tape.input(target_col));
  Value loss = sum_all(mul(diff, diff));
  if (grads) *grads = tape.gradients(loss, q.params);
  return tape.scalar(loss);
}

double q_update(QNet& q, const std::vector<Transition>& batch, double gamma,
                const OptimConfig& cfg) {
  const std::vector<double> targets = q_targets(q, batch, gamma);
  GradMap grads;
  const double loss = td_loss(q, batch, targets, &grads);
  sgd_step(q.params, grads, cfg, 0.0);
  return loss;
}

double epsilon_linear(std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) throw ConfigError("epsilon_linear: zero total steps");
  if (step >= total_steps) return 0.0;
  return 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
}

TransitionLogger::TransitionLogger(const std::string& path) : out_(path) {
  if (!out_) throw ParseError("TransitionLogger: cannot open '" + path + "'");
  out_ << "episode,step,action,reward,phi,terminal\n";
}

void TransitionLogger::log(std::size_t episode, std::size_t step, std::size_t action,
                           double reward, double phi, bool terminal) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%zu,%zu,%zu,%d,%.17g,%d", episode, step, action,
                reward > 0 ? 1 : -1, phi, terminal ? 1 : 0);
  out_ << buf << '\n';
  out_.flush();
}

}  // namespace pseudopilot
