#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace inductlab {

// Thrown when a caller violates a documented precondition (shapes, ranges,
// malformed configuration). Runtime failures use std::runtime_error.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Dense row-major matrix of 32-bit floats.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<std::vector<float>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  const std::vector<float>& storage() const { return data_; }

  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

// Standard product with a fixed i-k-j accumulation order: every output
// element is summed over k in increasing order, so results are reproducible
// bit for bit and a single row computes exactly as it would inside a batch.
Matrix matmul(const Matrix& a, const Matrix& b);

// Row-vector times matrix, same accumulation order as matmul. `out` must have
// b.cols() elements.
void vecmat(std::span<const float> x, const Matrix& b, std::span<float> out);

// Row-wise softmax with max subtraction. With `causal`, entries j > i of row i
// are masked out and written as exact zeros. A fully masked row (only
// possible for non-square inputs) becomes all zeros rather than NaN.
Matrix softmax_rows(const Matrix& m, bool causal = false);

// In-place softmax of a single row; an empty span is a no-op.
void softmax_inplace(std::span<float> row);

std::vector<float> layer_norm(std::span<const float> x, std::span<const float> gain,
                              std::span<const float> bias, float eps);

// tanh approximation.
float gelu(float x);
std::vector<float> gelu(std::span<const float> x);

}  // namespace inductlab
