#pragma once

#include <cstddef>
#include <vector>

namespace pseudopilot {

// Dense rank-2 tensor of doubles, row-major. Vectors are represented as
// n x 1 or 1 x n. Every value is expected to stay finite; callers that
// can produce non-finite values check via all_finite().
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols); }
  static Tensor full(std::size_t rows, std::size_t cols, double v) {
    Tensor t(rows, cols);
    for (auto& x : t.values_) x = v;
    return t;
  }
  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
  }
  static Tensor row(const std::vector<double>& v) {
    Tensor t(1, v.size());
    t.values_ = v;
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& at(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool all_finite() const;

  // L2 norm of one row.
  double row_norm(std::size_t r) const;

  bool operator==(const Tensor& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && values_ == o.values_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Plain (non-recorded) matrix helpers used by inference paths and oracles.
// The recorded ops call these same routines, so a recorded forward and a
// plain evaluation of the same computation are bitwise identical.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor vstack(const Tensor& a, const Tensor& b);     // stack rows; column counts must match
Tensor row_l2_normalize_eval(const Tensor& a);       // NumericError on zero-norm row
Tensor log_softmax_rows_eval(const Tensor& a);       // max-subtracted, stable
Tensor softmax_rows_eval(const Tensor& a);
Tensor clamp_unit_eval(const Tensor& a);             // clamp to [-1, 1]

}  // namespace pseudopilot
