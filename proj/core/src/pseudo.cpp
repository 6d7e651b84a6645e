#include "pseudopilot/pseudo.hpp"

#include <string>

#include "pseudopilot/errors.hpp"
#include "pseudopilot/rng.hpp"

namespace pseudopilot {

std::vector<PseudoLabel> assign_pseudo_labels(const Model& m, const Tensor& xu) {
  const Tensor probs = class_probs_eval(m, xu);
  std::vector<PseudoLabel> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.cols(); ++c)
      if (probs.at(r, c) > probs.at(r, best)) best = c;
    out[r] = PseudoLabel{r, static_cast<int>(best), probs.at(r, best)};
  }
  return out;
}

std::vector<PseudoLabel> confidence_select(const std::vector<PseudoLabel>& pseudo_list,
                                           double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0)
    throw ValidationError("confidence_select: threshold must lie in (0,1)");
  std::vector<PseudoLabel> out;
  for (const auto& p : pseudo_list)
    if (p.confidence > threshold) out.push_back(p);
  return out;
}

PseudoPool::PseudoPool(std::vector<PseudoLabel> candidates)
    : slots_(std::move(candidates)), occupied_(slots_.size(), true) {
  if (slots_.empty()) throw ValidationError("PseudoPool: empty candidate set");
}

bool PseudoPool::occupied(std::size_t slot) const {
  if (slot >= slots_.size())
    throw ValidationError("PseudoPool: slot " + std::to_string(slot) + " out of range");
  return occupied_[slot];
}

std::size_t PseudoPool::occupied_count() const {
  std::size_t n = 0;
  for (bool o : occupied_)
    if (o) ++n;
  return n;
}

std::vector<std::size_t> PseudoPool::occupied_slots() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < occupied_.size(); ++i)
    if (occupied_[i]) out.push_back(i);
  return out;
}

const PseudoLabel& PseudoPool::slot(std::size_t slot) const {
  if (!occupied(slot))
    throw ValidationError("PseudoPool: slot " + std::to_string(slot) + " already consumed");
  return slots_[slot];
}

PseudoLabel PseudoPool::take(std::size_t slot) {
  if (!occupied(slot))
    throw ValidationError("PseudoPool: cannot act on consumed slot " + std::to_string(slot));
  occupied_[slot] = false;
  positives_.push_back(slots_[slot]);
  return slots_[slot];
}

PseudoPool init_candidate_set(const std::vector<PseudoLabel>& pseudo_list,
                              std::size_t capacity, std::uint64_t seed) {
  if (capacity == 0) throw ValidationError("init_candidate_set: zero capacity");
  if (pseudo_list.size() < capacity)
    throw ValidationError("init_candidate_set: " + std::to_string(pseudo_list.size()) +
                          " pseudo-labeled samples cannot fill " + std::to_string(capacity) +
                          " slots");
  std::vector<std::size_t> order(pseudo_list.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<PseudoLabel> chosen;
  chosen.reserve(capacity);
  for (std::size_t i = 0; i < capacity; ++i) chosen.push_back(pseudo_list[order[i]]);
  return PseudoPool(std::move(chosen));
}

}  // namespace pseudopilot
