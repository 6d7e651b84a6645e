#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "pseudopilot/param_store.hpp"
#include "pseudopilot/tensor.hpp"

namespace pseudopilot {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid for the tape's lifetime.
class Value {
 public:
  Value() = default;
  Tape* tape() const { return tape_; }
  std::size_t index() const { return index_; }

 private:
  friend class Tape;
  Value(Tape* t, std::size_t i) : tape_(t), index_(i) {}
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

// Records a computation over tensors and evaluates exact reverse-mode
// gradients for the ParamStore entries it touches. A tape is built per
// training step and discarded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Constant leaf; never receives a gradient.
  Value input(Tensor x);

  // Leaf bound to a named parameter (copied in). Binding the same name
  // twice returns the same node.
  Value param(const ParamStore& store, const std::string& name);

  const Tensor& value(Value v) const;
  double scalar(Value v) const;  // value of a 1x1 node

  // Reverse-mode gradients of a scalar node for every parameter in the
  // store. Parameters the loss does not reach get zero gradients.
  GradMap gradients(Value loss, const ParamStore& params);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  friend Value matmul(Value, Value);
  friend Value matmul_nt(Value, Value);
  friend Value add(Value, Value);
  friend Value add_row_broadcast(Value, Value);
  friend Value sub(Value, Value);
  friend Value mul(Value, Value);
  friend Value scale(Value, double);
  friend Value relu(Value);
  friend Value row_l2_normalize(Value);
  friend Value log_softmax_rows(Value);
  friend Value softmax_rows(Value);
  friend Value clamp_unit(Value);
  friend Value pick_columns(Value, const std::vector<int>&);
  friend Value replace_columns(Value, const std::vector<int>&, Value);
  friend Value margin_cosine(Value, double);
  friend Value row_sum(Value);
  friend Value sum_all(Value);
  friend Value mean_all(Value);

  enum class Op {
    kInput,
    kParam,
    kMatMul,
    kMatMulNT,
    kAdd,
    kAddRow,
    kSub,
    kMul,
    kScale,
    kRelu,
    kRowL2Normalize,
    kLogSoftmaxRows,
    kSoftmaxRows,
    kClampUnit,
    kPickColumns,
    kReplaceColumns,
    kMarginCosine,
    kRowSum,
    kSumAll,
    kMeanAll,
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    Tensor val;
    Tensor grad;
    bool has_grad = false;
    std::vector<int> indices;  // pick/replace column choices
    double c0 = 0.0;           // op constants (scale factor, cos(m))
    double c1 = 0.0;           // sin(m)
    std::string name;          // parameter name for kParam
  };

  Value push(Node n);
  Node& node(Value v) { return nodes_[v.index()]; }
  const Node& node(Value v) const { return nodes_[v.index()]; }
  Tensor& grad_of(std::size_t idx);
  void backward(std::size_t loss_idx);
  void check_same_tape(Value a, Value b) const;

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> param_nodes_;
};

// Recorded operations. Shapes are validated eagerly; a mismatch throws
// ConfigError, an out-of-range column index throws ValidationError, and a
// zero-norm row in row_l2_normalize throws NumericError naming the row.
Value matmul(Value a, Value b);             // [n,k]x[k,m]
Value matmul_nt(Value a, Value b);          // [n,k]x[m,k]^T
Value add(Value a, Value b);                // same shape
Value add_row_broadcast(Value a, Value r);  // a[n,m] + r[1,m] per row
Value sub(Value a, Value b);
Value mul(Value a, Value b);                // elementwise
Value scale(Value a, double c);
Value relu(Value a);
Value row_l2_normalize(Value a);
Value log_softmax_rows(Value a);  // max-subtracted, stable
Value softmax_rows(Value a);
Value clamp_unit(Value a);  // clamp to [-1, 1]
Value pick_columns(Value a, const std::vector<int>& idx);               // [n,K] -> [n,1]
Value replace_columns(Value a, const std::vector<int>& idx, Value v);   // a with a[i,idx_i] = v[i]
Value margin_cosine(Value cos_theta, double margin);  // cos(theta + m) from cos(theta)
Value row_sum(Value a);                               // [n,m] -> [n,1]
Value sum_all(Value a);                               // -> [1,1]
Value mean_all(Value a);                              // -> [1,1]

}  // namespace pseudopilot
