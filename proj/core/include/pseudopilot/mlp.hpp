#pragma once

#include <string>
#include <vector>

#include "pseudopilot/autodiff.hpp"
#include "pseudopilot/param_store.hpp"
#include "pseudopilot/rng.hpp"
#include "pseudopilot/tensor.hpp"

namespace pseudopilot {

// Fully connected network: widths = {in, hidden..., out}. ReLU after every
// layer except the last. Parameters are named "<prefix>w<i>" / "<prefix>b<i>".
struct MlpSpec {
  std::vector<std::size_t> widths;
  std::string prefix = "f.";

  std::size_t layer_count() const { return widths.empty() ? 0 : widths.size() - 1; }
  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
  std::string weight_name(std::size_t layer) const { return prefix + "w" + std::to_string(layer); }
  std::string bias_name(std::size_t layer) const { return prefix + "b" + std::to_string(layer); }
};

// He-normal weights, zero biases.
void init_mlp_params(ParamStore& store, const MlpSpec& spec, Rng& rng);

// Recorded forward pass: returns the output node of the tape.
Value mlp_forward(Tape& tape, const ParamStore& store, const MlpSpec& spec, const Tensor& x);

// Same computation without recording (inference path). Produces bitwise
// identical values to the recorded forward.
Tensor mlp_eval(const ParamStore& store, const MlpSpec& spec, const Tensor& x);

}  // namespace pseudopilot
