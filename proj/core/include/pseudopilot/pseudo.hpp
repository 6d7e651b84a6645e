#pragma once

#include <cstdint>
#include <vector>

#include "pseudopilot/model.hpp"
#include "pseudopilot/tensor.hpp"

namespace pseudopilot {

// One hard pseudo-label: argmax class for an unlabeled sample plus the
// classifier's probability for that class.
struct PseudoLabel {
  std::size_t index = 0;  // row into the unlabeled set
  int label = 0;
  double confidence = 0.0;

  bool operator==(const PseudoLabel&) const = default;
};

// Argmax pseudo-labels (lowest class id wins ties) with softmax confidence
// for every row of xu.
std::vector<PseudoLabel> assign_pseudo_labels(const Model& m, const Tensor& xu);

// Entries with confidence strictly above the threshold, order preserved.
std::vector<PseudoLabel> confidence_select(const std::vector<PseudoLabel>& pseudo_list,
                                           double threshold);

// Episode bookkeeping: a fixed-capacity candidate set whose entries move,
// one per action, into this episode's positive list. A consumed slot stays
// unoccupied for the rest of the episode.
class PseudoPool {
 public:
  explicit PseudoPool(std::vector<PseudoLabel> candidates);

  std::size_t capacity() const { return slots_.size(); }
  bool occupied(std::size_t slot) const;
  std::size_t occupied_count() const;
  std::vector<std::size_t> occupied_slots() const;
  const PseudoLabel& slot(std::size_t slot) const;

  // Moves the entry out of the candidate set; throws ValidationError for
  // an out-of-range or already consumed slot.
  PseudoLabel take(std::size_t slot);

  // This episode's selections, in selection order.
  const std::vector<PseudoLabel>& positives() const { return positives_; }

 private:
  std::vector<PseudoLabel> slots_;
  std::vector<bool> occupied_;
  std::vector<PseudoLabel> positives_;
};

// Seeded uniform draw of `capacity` distinct entries (order shuffled).
PseudoPool init_candidate_set(const std::vector<PseudoLabel>& pseudo_list,
                              std::size_t capacity, std::uint64_t seed);

}  // namespace pseudopilot
