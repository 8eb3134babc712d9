#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "iarn/error.hpp"

namespace iarn {

/// Tensor dimensions, stored inline (rank at most 4).
class Shape {
 public:
  static constexpr std::size_t max_rank = 4;

  Shape() = default;
  explicit Shape(std::size_t rank) : rank_(checked(rank)) {}
  Shape(std::initializer_list<std::size_t> dims) : rank_(checked(dims.size())) {
    std::copy(dims.begin(), dims.end(), dims_.begin());
  }

  std::size_t size() const noexcept { return rank_; }
  bool empty() const noexcept { return rank_ == 0; }
  std::size_t& operator[](std::size_t i) noexcept { return dims_[i]; }
  std::size_t operator[](std::size_t i) const noexcept { return dims_[i]; }
  std::size_t* begin() noexcept { return dims_.data(); }
  std::size_t* end() noexcept { return dims_.data() + rank_; }
  const std::size_t* begin() const noexcept { return dims_.data(); }
  const std::size_t* end() const noexcept { return dims_.data() + rank_; }

  friend bool operator==(const Shape& a, const Shape& b) noexcept {
    return a.rank_ == b.rank_ && std::equal(a.begin(), a.end(), b.begin());
  }

 private:
  static std::size_t checked(std::size_t rank) {
    if (rank > max_rank) throw ShapeError("tensor rank " + std::to_string(rank) + " exceeds " + std::to_string(max_rank));
    return rank;
  }

  std::array<std::size_t, max_rank> dims_{};
  std::size_t rank_ = 0;
};

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major tensor of doubles. Vectors have rank 1, matrices rank 2.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    for (auto dim : shape_) {
      if (dim == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
    }
    data_.assign(element_count(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != element_count(shape_)) {
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string(shape_));
    }
  }

  static Tensor vector(std::size_t n, double fill = 0.0) { return Tensor({n}, fill); }
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }
  static Tensor from(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
  }
  static Tensor from(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }
  static Tensor identity(std::size_t n) {
    Tensor t = matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const noexcept { return shape_.size() < 2 ? 1 : shape_[1]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static std::size_t element_count(const Shape& shape) {
    if (shape.empty()) return 0;
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  Shape shape_;
  std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()) + " differ");
  }
}

/// result[i] = sum_k A[i][k] * x[k]
inline Tensor matvec(const Tensor& a, const Tensor& x) {
  if (a.rank() != 2 || x.rank() != 1 || a.cols() != x.size()) {
    throw ShapeError("matvec: cannot multiply " + shape_string(a.shape()) + " by " + shape_string(x.shape()));
  }
  Tensor out = Tensor::vector(a.rows());
  const std::size_t n = a.cols();
  const double* pa = a.data().data();
  const double* px = x.data().data();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    const double* rowp = pa + i * n;
    for (std::size_t k = 0; k < n; ++k) acc += rowp[k] * px[k];
    out[i] = acc;
  }
  return out;
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + shape_string(a.shape()) + " by " + shape_string(b.shape()));
  }
  Tensor out = Tensor::matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dot: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()) + " differ");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double max_abs_difference(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_difference");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------------------
// Activations

enum class ActivationKind { relu, prelu, sigmoid, tanh };

struct Activation {
  ActivationKind kind = ActivationKind::relu;
  double alpha = 0.0;  // PReLU negative-side slope

  static Activation relu() { return {ActivationKind::relu, 0.0}; }
  static Activation prelu(double alpha) { return {ActivationKind::prelu, alpha}; }
  static Activation sigmoid() { return {ActivationKind::sigmoid, 0.0}; }
  static Activation tanh() { return {ActivationKind::tanh, 0.0}; }
};

/// Logistic function. The input is clamped to [-36, 36] so the result stays strictly inside (0,1)
/// in double precision.
inline double sigmoid(double x) {
  x = std::clamp(x, -36.0, 36.0);
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double apply(const Activation& act, double x) {
  switch (act.kind) {
    case ActivationKind::relu:
      return x < 0.0 ? 0.0 : x;
    case ActivationKind::prelu:
      return x < 0.0 ? act.alpha * x : x;
    case ActivationKind::sigmoid:
      return sigmoid(x);
    case ActivationKind::tanh:
      return std::tanh(x);
  }
  return x;
}

/// Derivative with respect to the input. At exactly zero relu/prelu take the positive side.
inline double derivative(const Activation& act, double x) {
  switch (act.kind) {
    case ActivationKind::relu:
      return x >= 0.0 ? 1.0 : 0.0;
    case ActivationKind::prelu:
      return x >= 0.0 ? 1.0 : act.alpha;
    case ActivationKind::sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case ActivationKind::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

inline Tensor activate(const Tensor& x, const Activation& act) {
  if (act.kind == ActivationKind::prelu && !std::isfinite(act.alpha)) {
    throw ContractError("prelu slope must be finite");
  }
  Tensor out = x;
  for (auto& v : out.data()) v = apply(act, v);
  return out;
}

}  // namespace iarn
