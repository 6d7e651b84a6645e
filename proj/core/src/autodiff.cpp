#include "pseudopilot/autodiff.hpp"

#include <cmath>
#include <string>

#include "pseudopilot/errors.hpp"

namespace pseudopilot {

namespace {
constexpr double kSinFloor = 1e-6;  // guards d/dc cos(theta+m) as |cos| -> 1
}  // namespace

Value Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Value(this, nodes_.size() - 1);
}

Value Tape::input(Tensor x) {
  Node n;
  n.op = Op::kInput;
  n.val = std::move(x);
  return push(std::move(n));
}

Value Tape::param(const ParamStore& store, const std::string& name) {
  auto it = param_nodes_.find(name);
  if (it != param_nodes_.end()) return Value(this, it->second);
  Node n;
  n.op = Op::kParam;
  n.val = store.at(name);
  n.name = name;
  Value v = push(std::move(n));
  param_nodes_[name] = v.index();
  return v;
}

const Tensor& Tape::value(Value v) const { return node(v).val; }

double Tape::scalar(Value v) const {
  const Tensor& t = node(v).val;
  if (t.rows() != 1 || t.cols() != 1) throw ConfigError("Tape::scalar: node is not 1x1");
  return t.at(0, 0);
}

Tensor& Tape::grad_of(std::size_t idx) {
  Node& n = nodes_[idx];
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.val.rows(), n.val.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::check_same_tape(Value a, Value b) const {
  if (a.tape() != b.tape()) throw ConfigError("autodiff: operands from different tapes");
}

GradMap Tape::gradients(Value loss, const ParamStore& params) {
  if (loss.tape() != this) throw ConfigError("Tape::gradients: loss from another tape");
  if (node(loss).val.rows() != 1 || node(loss).val.cols() != 1)
    throw ConfigError("Tape::gradients: loss must be scalar");
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  backward(loss.index());
  GradMap out;
  for (const auto& name : params.names()) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end() && nodes_[it->second].has_grad) {
      out[name] = nodes_[it->second].grad;
    } else {
      const Tensor& p = params.at(name);
      out[name] = Tensor::zeros(p.rows(), p.cols());
    }
  }
  return out;
}

void Tape::backward(std::size_t loss_idx) {
  grad_of(loss_idx).at(0, 0) = 1.0;
  for (std::size_t i = loss_idx + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::kInput:
      case Op::kParam:
        break;
      case Op::kMatMul: {
        const Tensor& a = nodes_[n.a].val;
        const Tensor& b = nodes_[n.b].val;
        Tensor& ga = grad_of(n.a);
        Tensor& gb = grad_of(n.b);
        // dA += g * B^T ; dB += A^T * g
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < b.cols(); ++j) s += g.at(r, j) * b.at(c, j);
            ga.at(r, c) += s;
          }
        for (std::size_t r = 0; r < b.rows(); ++r)
          for (std::size_t c = 0; c < b.cols(); ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < a.rows(); ++j) s += a.at(j, r) * g.at(j, c);
            gb.at(r, c) += s;
          }
        break;
      }
      case Op::kMatMulNT: {
        const Tensor& a = nodes_[n.a].val;
        const Tensor& b = nodes_[n.b].val;
        Tensor& ga = grad_of(n.a);
        Tensor& gb = grad_of(n.b);
        // y = A * B^T ; dA += g * B ; dB += g^T * A
        for (std::size_t r = 0; r < a.rows(); ++r)
          for (std::size_t c = 0; c < a.cols(); ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < b.rows(); ++j) s += g.at(r, j) * b.at(j, c);
            ga.at(r, c) += s;
          }
        for (std::size_t r = 0; r < b.rows(); ++r)
          for (std::size_t c = 0; c < b.cols(); ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < a.rows(); ++j) s += g.at(j, r) * a.at(j, c);
            gb.at(r, c) += s;
          }
        break;
      }
      case Op::kAdd: {
        Tensor& ga = grad_of(n.a);
        Tensor& gb = grad_of(n.b);
        for (std::size_t k = 0; k < g.size(); ++k) {
          ga.values()[k] += g.values()[k];
          gb.values()[k] += g.values()[k];
        }
        break;
      }
      case Op::kAddRow: {
        Tensor& ga = grad_of(n.a);
        Tensor& gr = grad_of(n.b);
        for (std::size_t k = 0; k < g.size(); ++k) ga.values()[k] += g.values()[k];
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) gr.at(0, c) += g.at(r, c);
        break;
      }
      case Op::kSub: {
        Tensor& ga = grad_of(n.a);
        Tensor& gb = grad_of(n.b);
        for (std::size_t k = 0; k < g.size(); ++k) {
          ga.values()[k] += g.values()[k];
          gb.values()[k] -= g.values()[k];
        }
        break;
      }
      case Op::kMul: {
        const Tensor& a = nodes_[n.a].val;
        const Tensor& b = nodes_[n.b].val;
        Tensor& ga = grad_of(n.a);
        Tensor& gb = grad_of(n.b);
        for (std::size_t k = 0; k < g.size(); ++k) {
          ga.values()[k] += g.values()[k] * b.values()[k];
          gb.values()[k] += g.values()[k] * a.values()[k];
        }
        break;
      }
      case Op::kScale: {
        Tensor& ga = grad_of(n.a);
        for (std::size_t k = 0; k < g.size(); ++k) ga.values()[k] += n.c0 * g.values()[k];
        break;
      }
      case Op::kRelu: {
        const Tensor& a = nodes_[n.a].val;
        Tensor& ga = grad_of(n.a);
        for (std::size_t k = 0; k < g.size(); ++k)
          if (a.values()[k] > 0.0) ga.values()[k] += g.values()[k];
        break;
      }
      case Op::kRowL2Normalize: {
        const Tensor& a = nodes_[n.a].val;
        const Tensor& y = n.val;
        Tensor& ga = grad_of(n.a);
        for (std::size_t r = 0; r < a.rows(); ++r) {
          const double norm = a.row_norm(r);
          double dot = 0.0;
          for (std::size_t c = 0; c < a.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
          for (std::size_t c = 0; c < a.cols(); ++c)
            ga.at(r, c) += (g.at(r, c) - dot * y.at(r, c)) / norm;
        }
        break;
      }
      case Op::kLogSoftmaxRows: {
        const Tensor& y = n.val;  // y <= 0, exp(y) = softmax
        Tensor& ga = grad_of(n.a);
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double gsum = 0.0;
          for (std::size_t c = 0; c < y.cols(); ++c) gsum += g.at(r, c);
          for (std::size_t c = 0; c < y.cols(); ++c)
            ga.at(r, c) += g.at(r, c) - std::exp(y.at(r, c)) * gsum;
        }
        break;
      }
      case Op::kSoftmaxRows: {
        const Tensor& y = n.val;
        Tensor& ga = grad_of(n.a);
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < y.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
          for (std::size_t c = 0; c < y.cols(); ++c)
            ga.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
        }
        break;
      }
      case Op::kClampUnit: {
        const Tensor& a = nodes_[n.a].val;
        Tensor& ga = grad_of(n.a);
        for (std::size_t k = 0; k < g.size(); ++k)
          if (a.values()[k] >= -1.0 && a.values()[k] <= 1.0) ga.values()[k] += g.values()[k];
        break;
      }
      case Op::kPickColumns: {
        Tensor& ga = grad_of(n.a);
        for (std::size_t r = 0; r < n.indices.size(); ++r)
          ga.at(r, static_cast<std::size_t>(n.indices[r])) += g.at(r, 0);
        break;
      }
      case Op::kReplaceColumns: {
        Tensor& ga = grad_of(n.a);
        Tensor& gv = grad_of(n.b);
        for (std::size_t r = 0; r < g.rows(); ++r) {
          const auto rep = static_cast<std::size_t>(n.indices[r]);
          for (std::size_t c = 0; c < g.cols(); ++c)
            if (c != rep) ga.at(r, c) += g.at(r, c);
          gv.at(r, 0) += g.at(r, rep);
        }
        break;
      }
      case Op::kMarginCosine: {
        const Tensor& a = nodes_[n.a].val;
        Tensor& ga = grad_of(n.a);
        // y = c*cos(m) - sqrt(1-c^2)*sin(m); dy/dc = cos(m) + c*sin(m)/sin(theta)
        for (std::size_t k = 0; k < g.size(); ++k) {
          double c = a.values()[k];
          if (c > 1.0) c = 1.0;
          if (c < -1.0) c = -1.0;
          const double sin_theta = std::sqrt(std::max(0.0, 1.0 - c * c));
          const double d = n.c0 + c * n.c1 / std::max(sin_theta, kSinFloor);
          ga.values()[k] += d * g.values()[k];
        }
        break;
      }
      case Op::kRowSum: {
        Tensor& ga = grad_of(n.a);
        for (std::size_t r = 0; r < ga.rows(); ++r)
          for (std::size_t c = 0; c < ga.cols(); ++c) ga.at(r, c) += g.at(r, 0);
        break;
      }
      case Op::kSumAll: {
        Tensor& ga = grad_of(n.a);
        for (std::size_t k = 0; k < ga.size(); ++k) ga.values()[k] += g.at(0, 0);
        break;
      }
      case Op::kMeanAll: {
        Tensor& ga = grad_of(n.a);
        const double inv = 1.0 / static_cast<double>(ga.size());
        for (std::size_t k = 0; k < ga.size(); ++k) ga.values()[k] += inv * g.at(0, 0);
        break;
      }
    }
  }
}

namespace {

Tape& tape_of(Value v) {
  if (v.tape() == nullptr) throw ConfigError("autodiff: empty value handle");
  return *v.tape();
}

void check_indices(const std::vector<int>& idx, std::size_t rows, std::size_t cols,
                   const char* what) {
  if (idx.size() != rows)
    throw ConfigError(std::string(what) + ": one index per row required");
  for (std::size_t r = 0; r < idx.size(); ++r)
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= cols)
      throw ValidationError(std::string(what) + ": index " + std::to_string(idx[r]) +
                            " out of range for row " + std::to_string(r));
}

}  // namespace

#define PP_BINARY_PROLOGUE(a, b)            \
  Tape& t = tape_of(a);                     \
  t.check_same_tape(a, b);                  \
  const Tensor& av = t.value(a);            \
  const Tensor& bv = t.value(b);

Value matmul(Value a, Value b) {
  PP_BINARY_PROLOGUE(a, b)
  if (av.cols() != bv.rows()) throw ConfigError("matmul: inner dimensions differ");
  Tape::Node n;
  n.op = Tape::Op::kMatMul;
  n.a = static_cast<int>(a.index());
  n.b = static_cast<int>(b.index());
  n.val = matmul(av, bv);
  return t.push(std::move(n));
}

Value matmul_nt(Value a, Value b) {
  PP_BINARY_PROLOGUE(a, b)
  if (av.cols() != bv.cols()) throw ConfigError("matmul_nt: inner dimensions differ");
  Tape::Node n;
  n.op = Tape::Op::kMatMulNT;
  n.a = static_cast<int>(a.index());
  n.b = static_cast<int>(b.index());
  n.val = matmul_nt(av, bv);
  return t.push(std::move(n));
}

Value add(Value a, Value b) {
  PP_BINARY_PROLOGUE(a, b)
  if (!av.same_shape(bv)) throw ConfigError("add: shape mismatch");
  Tape::Node n;
  n.op = Tape::Op::kAdd;
  n.a = static_cast<int>(a.index());
  n.b = static_cast<int>(b.index());
  n.val = av;
  for (std::size_t k = 0; k < n.val.size(); ++k) n.val.values()[k] += bv.values()[k];
  return t.push(std::move(n));
}

Value add_row_broadcast(Value a, Value r) {
  PP_BINARY_PROLOGUE(a, r)
  if (bv.rows() != 1 || bv.cols() != av.cols())
    throw ConfigError("add_row_broadcast: row vector shape mismatch");
  Tape::Node n;
  n.op = Tape::Op::kAddRow;
  n.a = static_cast<int>(a.index());
  n.b = static_cast<int>(r.index());
  n.val = av;
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t c = 0; c < av.cols(); ++c) n.val.at(i, c) += bv.at(0, c);
  return t.push(std::move(n));
}

Value sub(Value a, Value b) {
  PP_BINARY_PROLOGUE(a, b)
  if (!av.same_shape(bv)) throw ConfigError("sub: shape mismatch");
  Tape::Node n;
  n.op = Tape::Op::kSub;
  n.a = static_cast<int>(a.index());
  n.b = static_cast<int>(b.index());
  n.val = av;
  for (std::size_t k = 0; k < n.val.size(); ++k) n.val.values()[k] -= bv.values()[k];
  return t.push(std::move(n));
}

Value mul(Value a, Value b) {
  PP_BINARY_PROLOGUE(a, b)
  if (!av.same_shape(bv)) throw ConfigError("mul: shape mismatch");
  Tape::Node n;
  n.op = Tape::Op::kMul;
  n.a = static_cast<int>(a.index());
  n.b = static_cast<int>(b.index());
  n.val = av;
  for (std::size_t k = 0; k < n.val.size(); ++k) n.val.values()[k] *= bv.values()[k];
  return t.push(std::move(n));
}

#undef PP_BINARY_PROLOGUE

Value scale(Value a, double c) {
  Tape& t = tape_of(a);
  Tape::Node n;
  n.op = Tape::Op::kScale;
  n.a = static_cast<int>(a.index());
  n.c0 = c;
  n.val = t.value(a);
  for (auto& v : n.val.values()) v *= c;
  return t.push(std::move(n));
}

Value relu(Value a) {
  Tape& t = tape_of(a);
  Tape::Node n;
  n.op = Tape::Op::kRelu;
  n.a = static_cast<int>(a.index());
  n.val = t.value(a);
  for (auto& v : n.val.values())
    if (v < 0.0) v = 0.0;
  return t.push(std::move(n));
}

Value row_l2_normalize(Value a) {
  Tape& t = tape_of(a);
  Tape::Node n;
  n.op = Tape::Op::kRowL2Normalize;
  n.a = static_cast<int>(a.index());
  n.val = row_l2_normalize_eval(t.value(a));
  return t.push(std::move(n));
}

Value log_softmax_rows(Value a) {
  Tape& t = tape_of(a);
  Tape::Node n;
  n.op = Tape::Op::kLogSoftmaxRows;
  n.a = static_cast<int>(a.index());
  n.val = log_softmax_rows_eval(t.value(a));
  return t.push(std::move(n));
}

Value softmax_rows(Value a) {
  Tape& t = tape_of(a);
  Tape::Node n;
  n.op = Tape::Op::kSoftmaxRows;
  n.a = static_cast<int>(a.index());
  n.val = softmax_rows_eval(t.value(a));
  return t.push(std::move(n));
}

Value clamp_unit(Value a) {
  Tape& t = tape_of(a);
  Tape::Node n;
  n.op = Tape::Op::kClampUnit;
  n.a = static_cast<int>(a.index());
  n.val = clamp_unit_eval(t.value(a));
  return t.push(std::move(n));
}

Value pick_columns(Value a, const std::vector<int>& idx) {
  Tape& t = tape_of(a);
  const Tensor& av = t.value(a);
  check_indices(idx, av.rows(), av.cols(), "pick_columns");
  Tape::Node n;
  n.op = Tape::Op::kPickColumns;
  n.a = static_cast<int>(a.index());
  n.indices = idx;
  n.val = Tensor(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r)
    n.val.at(r, 0) = av.at(r, static_cast<std::size_t>(idx[r]));
  return t.push(std::move(n));
}

Value replace_columns(Value a, const std::vector<int>& idx, Value v) {
  Tape& t = tape_of(a);
  t.check_same_tape(a, v);
  const Tensor& av = t.value(a);
  const Tensor& vv = t.value(v);
  check_indices(idx, av.rows(), av.cols(), "replace_columns");
  if (vv.rows() != av.rows() || vv.cols() != 1)
    throw ConfigError("replace_columns: replacement must be [rows,1]");
  Tape::Node n;
  n.op = Tape::Op::kReplaceColumns;
  n.a = static_cast<int>(a.index());
  n.b = static_cast<int>(v.index());
  n.indices = idx;
  n.val = av;
  for (std::size_t r = 0; r < av.rows(); ++r)
    n.val.at(r, static_cast<std::size_t>(idx[r])) = vv.at(r, 0);
  return t.push(std::move(n));
}

Value margin_cosine(Value cos_theta, double margin) {
  Tape& t = tape_of(cos_theta);
  Tape::Node n;
  n.op = Tape::Op::kMarginCosine;
  n.a = static_cast<int>(cos_theta.index());
  n.c0 = std::cos(margin);
  n.c1 = std::sin(margin);
  n.val = t.value(cos_theta);
  for (auto& v : n.val.values()) {
    double c = v;
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    v = c * n.c0 - std::sqrt(std::max(0.0, 1.0 - c * c)) * n.c1;
  }
  return t.push(std::move(n));
}

Value row_sum(Value a) {
  Tape& t = tape_of(a);
  const Tensor& av = t.value(a);
  Tape::Node n;
  n.op = Tape::Op::kRowSum;
  n.a = static_cast<int>(a.index());
  n.val = Tensor(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < av.cols(); ++c) s += av.at(r, c);
    n.val.at(r, 0) = s;
  }
  return t.push(std::move(n));
}

Value sum_all(Value a) {
  Tape& t = tape_of(a);
  const Tensor& av = t.value(a);
  Tape::Node n;
  n.op = Tape::Op::kSumAll;
  n.a = static_cast<int>(a.index());
  n.val = Tensor(1, 1);
  double s = 0.0;
  for (double v : av.values()) s += v;
  n.val.at(0, 0) = s;
  return t.push(std::move(n));
}

Value mean_all(Value a) {
  Tape& t = tape_of(a);
  const Tensor& av = t.value(a);
  if (av.size() == 0) throw ConfigError("mean_all: empty tensor");
  Tape::Node n;
  n.op = Tape::Op::kMeanAll;
  n.a = static_cast<int>(a.index());
  n.val = Tensor(1, 1);
  double s = 0.0;
  for (double v : av.values()) s += v;
  n.val.at(0, 0) = s / static_cast<double>(av.size());
  return t.push(std::move(n));
}

}  // namespace pseudopilot
