#pragma once

#include <map>
#include <string>
#include <vector>

#include "pseudopilot/tensor.hpp"

namespace pseudopilot {

// SGD-with-momentum settings plus the polynomial learning-rate schedule
// lr(p) = base_lr / (1 + decay_rate * p)^decay_power, p = fraction of the
// total training steps completed.
struct OptimConfig {
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  double decay_rate = 10.0;
  double decay_power = 0.75;
};

double lr_schedule(const OptimConfig& cfg, double progress);

// Named parameter tensors with matching momentum buffers. One store is
// confined to a single training run.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value);
  bool has(const std::string& name) const { return params_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  Tensor& momentum(const std::string& name);
  const Tensor& momentum(const std::string& name) const;

  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }

  // Fresh-optimizer state, e.g. for a cloned network.
  void zero_momentum();

  bool operator==(const ParamStore& o) const {
    return params_ == o.params_ && momentum_ == o.momentum_;
  }

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, Tensor> momentum_;
};

using GradMap = std::map<std::string, Tensor>;

// One momentum-SGD step over every named gradient:
//   v <- momentum * v + g + weight_decay * w
//   w <- w - lr(progress) * v
// Throws NumericError (before touching any parameter) if a gradient is
// non-finite or a shape does not match.
void sgd_step(ParamStore& params, const GradMap& grads, const OptimConfig& cfg,
              double progress);

// Checkpoint container: magic header, then (name, shape, little-endian f64
// values) records for parameters and momentum buffers.
inline constexpr const char* kCheckpointMagic = "PSEUDOPILOT-CKPT-1";

void save_checkpoint(const ParamStore& params, const std::string& path);
ParamStore load_checkpoint(const std::string& path);

}  // namespace pseudopilot
