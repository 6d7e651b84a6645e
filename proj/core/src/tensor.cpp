#include "pseudopilot/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pseudopilot/errors.hpp"

namespace pseudopilot {

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::row_norm(std::size_t r) const {
  double s = 0.0;
  for (std::size_t c = 0; c < cols_; ++c) s += at(r, c) * at(r, c);
  return std::sqrt(s);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) throw ConfigError("matmul: inner dimensions differ");
  Tensor out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out.at(i, j) += aik * b.at(k, j);
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ConfigError("matmul_nt: inner dimensions differ");
  Tensor out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(j, k);
      out.at(i, j) = s;
    }
  }
  return out;
}

Tensor vstack(const Tensor& a, const Tensor& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.cols() != b.cols()) throw ConfigError("vstack: column counts differ");
  Tensor out(a.rows() + b.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out.at(r, c) = a.at(r, c);
  for (std::size_t r = 0; r < b.rows(); ++r)
    for (std::size_t c = 0; c < b.cols(); ++c) out.at(a.rows() + r, c) = b.at(r, c);
  return out;
}

namespace {
constexpr double kNormFloor = 1e-12;
}

Tensor row_l2_normalize_eval(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double norm = a.row_norm(r);
    if (norm < kNormFloor)
      throw NumericError("row_l2_normalize: zero-norm vector at row " + std::to_string(r));
    for (std::size_t c = 0; c < a.cols(); ++c) out.at(r, c) = a.at(r, c) / norm;
  }
  return out;
}

Tensor log_softmax_rows_eval(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double mx = a.at(r, 0);
    for (std::size_t c = 1; c < a.cols(); ++c) mx = std::max(mx, a.at(r, c));
    double lse = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) lse += std::exp(a.at(r, c) - mx);
    lse = mx + std::log(lse);
    for (std::size_t c = 0; c < a.cols(); ++c) out.at(r, c) = a.at(r, c) - lse;
  }
  return out;
}

Tensor softmax_rows_eval(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double mx = a.at(r, 0);
    for (std::size_t c = 1; c < a.cols(); ++c) mx = std::max(mx, a.at(r, c));
    double denom = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) {
      out.at(r, c) = std::exp(a.at(r, c) - mx);
      denom += out.at(r, c);
    }
    for (std::size_t c = 0; c < a.cols(); ++c) out.at(r, c) /= denom;
  }
  return out;
}

Tensor clamp_unit_eval(const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.values()) {
    if (v > 1.0) v = 1.0;
    if (v < -1.0) v = -1.0;
  }
  return out;
}

}  // namespace pseudopilot
