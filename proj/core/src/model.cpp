#include "pseudopilot/model.hpp"

#include <cmath>

#include "pseudopilot/errors.hpp"

namespace pseudopilot {

ModelSpec make_model_spec(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                          std::size_t feature_dim, int classes) {
  if (classes < 2) throw ConfigError("make_model_spec: need at least 2 classes");
  if (input_dim == 0 || feature_dim == 0)
    throw ConfigError("make_model_spec: zero input or feature dimension");
  ModelSpec spec;
  spec.extractor.prefix = "f.";
  spec.extractor.widths.push_back(input_dim);
  for (std::size_t w : hidden) spec.extractor.widths.push_back(w);
  spec.extractor.widths.push_back(feature_dim);
  spec.classifier.classes = classes;
  spec.classifier.feature_dim = feature_dim;
  return spec;
}

Model init_model(const ModelSpec& spec, Rng& rng) {
  if (spec.classifier.feature_dim != spec.extractor.output_dim())
    throw ConfigError("init_model: classifier feature_dim != extractor output");
  if (spec.classifier.classes < 2) throw ConfigError("init_model: need at least 2 classes");
  Model m;
  m.spec = spec;
  init_mlp_params(m.params, spec.extractor, rng);
  Tensor w(static_cast<std::size_t>(spec.classifier.classes), spec.classifier.feature_dim);
  const double sd = std::sqrt(2.0 / static_cast<double>(spec.classifier.feature_dim));
  for (auto& v : w.values()) v = sd * rng.normal();
  m.params.add(spec.classifier.weight_name, std::move(w));
  return m;
}

Value features_node(Tape& tape, const Model& m, const Tensor& x) {
  return mlp_forward(tape, m.params, m.spec.extractor, x);
}

Value cosine_node(Tape& tape, const Model& m, Value features) {
  Value f = row_l2_normalize(features);
  Value w = row_l2_normalize(tape.param(m.params, m.spec.classifier.weight_name));
  return clamp_unit(matmul_nt(f, w));
}

Value logits_node(Tape& tape, const Model& m, Value features) {
  return scale(cosine_node(tape, m, features), m.spec.classifier.scale);
}

Tensor features_eval(const Model& m, const Tensor& x) {
  return mlp_eval(m.params, m.spec.extractor, x);
}

Tensor cosine_eval(const Model& m, const Tensor& features) {
  Tensor f = row_l2_normalize_eval(features);
  Tensor w = row_l2_normalize_eval(m.params.at(m.spec.classifier.weight_name));
  return clamp_unit_eval(matmul_nt(f, w));
}

Tensor logits_eval(const Model& m, const Tensor& x) {
  Tensor cosine = cosine_eval(m, features_eval(m, x));
  for (auto& v : cosine.values()) v *= m.spec.classifier.scale;
  return cosine;
}

Tensor class_log_probs_eval(const Model& m, const Tensor& x) {
  return log_softmax_rows_eval(logits_eval(m, x));
}

Tensor class_probs_eval(const Model& m, const Tensor& x) {
  return softmax_rows_eval(logits_eval(m, x));
}

Tensor entropy_eval(const Model& m, const Tensor& x) {
  const Tensor lp = class_log_probs_eval(m, x);
  Tensor out(lp.rows(), 1);
  for (std::size_t r = 0; r < lp.rows(); ++r) {
    double h = 0.0;
    // -sum p log p with p = exp(log p); p -> 0 contributes 0.
    for (std::size_t c = 0; c < lp.cols(); ++c) h -= std::exp(lp.at(r, c)) * lp.at(r, c);
    out.at(r, 0) = h;
  }
  return out;
}

std::vector<int> predict(const Model& m, const Tensor& x) {
  const Tensor logits = logits_eval(m, x);
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits.at(r, c) > logits.at(r, best)) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::vector<double> predict_confidence(const Model& m, const Tensor& x) {
  const Tensor probs = class_probs_eval(m, x);
  std::vector<double> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    double best = probs.at(r, 0);
    for (std::size_t c = 1; c < probs.cols(); ++c) best = std::max(best, probs.at(r, c));
    out[r] = best;
  }
  return out;
}

double accuracy(const Model& m, const Tensor& x, const std::vector<int>& labels) {
  if (x.rows() != labels.size()) throw ValidationError("accuracy: label count mismatch");
  if (x.rows() == 0) throw ValidationError("accuracy: empty evaluation set");
  const std::vector<int> pred = predict(m, x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace pseudopilot
