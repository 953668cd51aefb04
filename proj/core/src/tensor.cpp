#include "inductlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace inductlab {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw InvalidArgument("Matrix: data length " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(rows_) + "x" +
                          std::to_string(cols_));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<float>>& rows) {
  if (rows.empty()) return {};
  const std::size_t cols = rows.front().size();
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw InvalidArgument("Matrix::from_rows: ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void vecmat(std::span<const float> x, const Matrix& b, std::span<float> out) {
  if (x.size() != b.rows() || out.size() != b.cols()) {
    throw InvalidArgument("vecmat: shape mismatch (" + std::to_string(x.size()) + ") x (" +
                          std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
  }
  std::fill(out.begin(), out.end(), 0.0f);
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < x.size(); ++k) {
    const float xk = x[k];
    // Adding a +/-0 product never changes an accumulator that starts at +0,
    // so skipping zeros is bit-exact.
    if (xk == 0.0f) continue;
    const float* brow = b.row(k).data();
    float* o = out.data();
    for (std::size_t j = 0; j < n; ++j) o[j] += xk * brow[j];
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw InvalidArgument("matmul: inner dimensions disagree (" + std::to_string(a.rows()) + "x" +
                          std::to_string(a.cols()) + " times " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()) + ")");
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) vecmat(a.row(i), b, c.row(i));
  return c;
}

void softmax_inplace(std::span<float> row) {
  if (row.empty()) return;
  const float mx = *std::max_element(row.begin(), row.end());
  if (mx == -std::numeric_limits<float>::infinity()) {
    std::fill(row.begin(), row.end(), 0.0f);  // fully masked
    return;
  }
  double sum = 0.0;
  for (float& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  const float inv = static_cast<float>(1.0 / sum);
  for (float& v : row) v *= inv;
}

Matrix softmax_rows(const Matrix& m, bool causal) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const std::size_t allowed = causal ? std::min(i + 1, m.cols()) : m.cols();
    auto src = m.row(i).first(allowed);
    auto dst = out.row(i).first(allowed);
    std::copy(src.begin(), src.end(), dst.begin());
    softmax_inplace(dst);
  }
  return out;
}

std::vector<float> layer_norm(std::span<const float> x, std::span<const float> gain,
                              std::span<const float> bias, float eps) {
  if (x.empty()) throw InvalidArgument("layer_norm: zero-length input");
  if (gain.size() != x.size() || bias.size() != x.size()) {
    throw InvalidArgument("layer_norm: gain/bias length mismatch");
  }
  if (!(eps > 0.0f)) throw InvalidArgument("layer_norm: eps must be positive");
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + eps);
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<float>((x[i] - mean) * inv) * gain[i] + bias[i];
  }
  return out;
}

float gelu(float x) {
  constexpr float kSqrt2OverPi = 0.7978845608028654f;
  return 0.5f * x * (1.0f + std::tanh(kSqrt2OverPi * (x + 0.044715f * x * x * x)));
}

std::vector<float> gelu(std::span<const float> x) {
  std::vector<float> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](float v) { return gelu(v); });
  return out;
}

}  // namespace inductlab
