#include "pseudopilot/losses.hpp"

#include <string>

#include "pseudopilot/errors.hpp"

namespace pseudopilot {

namespace {

void check_batch(const Model& m, const Tensor& x, const std::vector<int>& y,
                 const char* what) {
  if (x.rows() == 0) throw ValidationError(std::string(what) + ": empty batch");
  if (x.rows() != y.size())
    throw ValidationError(std::string(what) + ": batch has " + std::to_string(x.rows()) +
                          " rows but " + std::to_string(y.size()) + " labels");
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] < 0 || y[i] >= m.spec.classifier.classes)
      throw ValidationError(std::string(what) + ": label " + std::to_string(y[i]) +
                            " at row " + std::to_string(i) + " outside [0, K)");
}

Value nll_of_logits(Value logits, const std::vector<int>& y) {
  Value lp = pick_columns(log_softmax_rows(logits), y);
  return scale(mean_all(lp), -1.0);
}

}  // namespace

Value cross_entropy_loss(Tape& tape, const Model& m, const Tensor& x,
                         const std::vector<int>& y) {
  check_batch(m, x, y, "cross_entropy_loss");
  Value logits = logits_node(tape, m, features_node(tape, m, x));
  return nll_of_logits(logits, y);
}

Value margin_nll_loss(Tape& tape, const Model& m, const Tensor& x,
                      const std::vector<int>& y) {
  check_batch(m, x, y, "margin_nll_loss");
  Value cosine = cosine_node(tape, m, features_node(tape, m, x));
  Value margined = margin_cosine(pick_columns(cosine, y), m.spec.classifier.margin);
  Value adjusted = replace_columns(cosine, y, margined);
  Value logits = scale(adjusted, m.spec.classifier.scale);
  return nll_of_logits(logits, y);
}

Value target_margin_loss(Tape& tape, const Model& m, const Tensor& xs,
                         const std::vector<int>& ys, const Tensor& xt,
                         const std::vector<int>& yt) {
  return add(cross_entropy_loss(tape, m, xs, ys), margin_nll_loss(tape, m, xt, yt));
}

Value entropy_loss(Tape& tape, const Model& m, const Tensor& xu) {
  if (xu.rows() == 0) throw ValidationError("entropy_loss: empty batch");
  Value logits = logits_node(tape, m, features_node(tape, m, xu));
  Value p = softmax_rows(logits);
  Value lp = log_softmax_rows(logits);
  return scale(mean_all(row_sum(mul(p, lp))), -1.0);
}

Value combined_loss(Tape& tape, const Model& m, const Tensor& xs,
                    const std::vector<int>& ys, const Tensor& xt,
                    const std::vector<int>& yt, const Tensor& xu, double alpha) {
  Value base = target_margin_loss(tape, m, xs, ys, xt, yt);
  if (alpha == 0.0) return base;
  return add(base, scale(entropy_loss(tape, m, xu), alpha));
}

Value complete_margin_loss(Tape& tape, const Model& m, const Tensor& xs,
                           const std::vector<int>& ys, const Tensor& xt,
                           const std::vector<int>& yt) {
  std::vector<int> y = ys;
  y.insert(y.end(), yt.begin(), yt.end());
  return margin_nll_loss(tape, m, vstack(xs, xt), y);
}

}  // namespace pseudopilot
