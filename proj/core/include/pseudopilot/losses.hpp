#pragma once

#include <vector>

#include "pseudopilot/autodiff.hpp"
#include "pseudopilot/model.hpp"
#include "pseudopilot/tensor.hpp"

namespace pseudopilot {

// All losses are recorded scalar nodes on the caller's tape. Class labels
// must lie in [0, K); an out-of-range label throws ValidationError, an
// empty batch ValidationError, and a label/batch size mismatch too.

// Cross-entropy over softmax of the scaled cosine logits.
Value cross_entropy_loss(Tape& tape, const Model& m, const Tensor& x,
                         const std::vector<int>& y);

// Margin form: the true-class cosine receives the additive angular margin
// before scaling, i.e. -log( e^{s cos(th_y+m)} / (e^{s cos(th_y+m)} +
// sum_{j!=y} e^{s cos th_j}) ), averaged over the batch. With margin = 0
// this is exactly cross_entropy_loss (same values, same gradients).
Value margin_nll_loss(Tape& tape, const Model& m, const Tensor& x,
                      const std::vector<int>& y);

// Source cross-entropy plus labeled-target margin term, the two batch
// means added with equal weight.
Value target_margin_loss(Tape& tape, const Model& m, const Tensor& xs,
                         const std::vector<int>& ys, const Tensor& xt,
                         const std::vector<int>& yt);

// Mean Shannon entropy (nats) of the predicted class distribution on an
// unlabeled batch.
Value entropy_loss(Tape& tape, const Model& m, const Tensor& xu);

// target_margin_loss + alpha * entropy_loss. With alpha = 0 the unlabeled
// batch is not read and no entropy branch is recorded.
Value combined_loss(Tape& tape, const Model& m, const Tensor& xs,
                    const std::vector<int>& ys, const Tensor& xt,
                    const std::vector<int>& yt, const Tensor& xu, double alpha);

// Ablation: the margin applied to source and target alike, one mean over
// the pooled batch.
Value complete_margin_loss(Tape& tape, const Model& m, const Tensor& xs,
                           const std::vector<int>& ys, const Tensor& xt,
                           const std::vector<int>& yt);

}  // namespace pseudopilot
