#include "pseudopilot/mlp.hpp"

#include <cmath>

#include "pseudopilot/errors.hpp"

namespace pseudopilot {

namespace {

void check_spec(const MlpSpec& spec) {
  if (spec.widths.size() < 2) throw ConfigError("MlpSpec: need at least input and output widths");
  for (std::size_t w : spec.widths)
    if (w == 0) throw ConfigError("MlpSpec: zero-width layer");
}

void check_wiring(const ParamStore& store, const MlpSpec& spec, const Tensor& x) {
  check_spec(spec);
  if (x.cols() != spec.input_dim())
    throw ConfigError("mlp_forward: input has " + std::to_string(x.cols()) +
                      " columns, spec expects " + std::to_string(spec.input_dim()));
  if (!x.all_finite()) throw NumericError("mlp_forward: non-finite input");
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const Tensor& w = store.at(spec.weight_name(l));
    const Tensor& b = store.at(spec.bias_name(l));
    if (w.rows() != spec.widths[l + 1] || w.cols() != spec.widths[l])
      throw ConfigError("mlp_forward: weight " + spec.weight_name(l) + " has wrong shape");
    if (b.rows() != 1 || b.cols() != spec.widths[l + 1])
      throw ConfigError("mlp_forward: bias " + spec.bias_name(l) + " has wrong shape");
  }
}

}  // namespace

void init_mlp_params(ParamStore& store, const MlpSpec& spec, Rng& rng) {
  check_spec(spec);
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t fan_in = spec.widths[l];
    const std::size_t fan_out = spec.widths[l + 1];
    Tensor w(fan_out, fan_in);
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : w.values()) v = sd * rng.normal();
    store.add(spec.weight_name(l), std::move(w));
    store.add(spec.bias_name(l), Tensor::zeros(1, fan_out));
  }
}

Value mlp_forward(Tape& tape, const ParamStore& store, const MlpSpec& spec, const Tensor& x) {
  check_wiring(store, spec, x);
  Value h = tape.input(x);
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    Value w = tape.param(store, spec.weight_name(l));
    Value b = tape.param(store, spec.bias_name(l));
    h = add_row_broadcast(matmul_nt(h, w), b);
    if (l + 1 < spec.layer_count()) h = relu(h);
  }
  return h;
}

Tensor mlp_eval(const ParamStore& store, const MlpSpec& spec, const Tensor& x) {
  check_wiring(store, spec, x);
  Tensor h = x;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    Tensor z = matmul_nt(h, store.at(spec.weight_name(l)));
    const Tensor& b = store.at(spec.bias_name(l));
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = 0; c < z.cols(); ++c) z.at(r, c) += b.at(0, c);
    if (l + 1 < spec.layer_count())
      for (auto& v : z.values())
        if (v < 0.0) v = 0.0;
    h = std::move(z);
  }
  return h;
}

}  // namespace pseudopilot
