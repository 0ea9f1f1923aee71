#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace simnet {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  void resize(std::size_t rows, std::size_t cols) {
    rows_ = rows;
    cols_ = cols;
    data_.assign(rows * cols, 0.0);
  }
  void fill(double v) noexcept {
    for (auto& x : data_) x = v;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// dst = src^T (dst is resized).
void transpose_into(const Matrix& src, Matrix& dst);

/// c = a * b^T, where a is m x k and b is n x k; c is resized to m x n.
///
/// Every output element is produced by the same fixed summation sequence over k
/// regardless of m, n or its position in the output, so a single-row product is
/// bit-identical to the corresponding row of a batched one.
void gemm_abt(const Matrix& a, const Matrix& b, Matrix& c);

/// Dot product using the same summation sequence as gemm_abt.
double dot(std::span<const double> a, std::span<const double> b);

}  // namespace simnet
