#pragma once

#include <string>
#include <vector>

#include "pseudopilot/autodiff.hpp"
#include "pseudopilot/mlp.hpp"
#include "pseudopilot/param_store.hpp"
#include "pseudopilot/rng.hpp"
#include "pseudopilot/tensor.hpp"

namespace pseudopilot {

// Cosine-similarity classifier head: both the extracted feature and each
// class weight row are L2-normalized, so logit_j = scale * cos(theta_j).
struct ClassifierSpec {
  int classes = 0;
  std::size_t feature_dim = 0;
  double scale = 30.0;
  double margin = 0.5;
  std::string weight_name = "c.w";
};

struct ModelSpec {
  MlpSpec extractor;  // widths = {input_dim, hidden..., feature_dim}
  ClassifierSpec classifier;
};

ModelSpec make_model_spec(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                          std::size_t feature_dim, int classes);

// Feature extractor plus classifier with their parameters. Copying the
// struct clones the whole network (the trial networks used for reward
// evaluation are plain copies with zeroed momentum).
struct Model {
  ModelSpec spec;
  ParamStore params;
};

Model init_model(const ModelSpec& spec, Rng& rng);

// Recorded graph pieces (for training losses).
Value features_node(Tape& tape, const Model& m, const Tensor& x);
Value cosine_node(Tape& tape, const Model& m, Value features);  // cos(theta), in [-1,1]
Value logits_node(Tape& tape, const Model& m, Value features);  // scale * cos(theta)

// Plain evaluation (no tape); values match the recorded path bitwise.
Tensor features_eval(const Model& m, const Tensor& x);
Tensor cosine_eval(const Model& m, const Tensor& features);
Tensor logits_eval(const Model& m, const Tensor& x);
Tensor class_log_probs_eval(const Model& m, const Tensor& x);
Tensor class_probs_eval(const Model& m, const Tensor& x);

// Per-sample Shannon entropy (nats) of the predicted class distribution,
// as an [n, 1] tensor. Always within [0, log K].
Tensor entropy_eval(const Model& m, const Tensor& x);

// Argmax class per sample; ties resolve to the lowest class id.
std::vector<int> predict(const Model& m, const Tensor& x);

// Highest class probability per sample, aligned with predict().
std::vector<double> predict_confidence(const Model& m, const Tensor& x);

double accuracy(const Model& m, const Tensor& x, const std::vector<int>& labels);

}  // namespace pseudopilot
