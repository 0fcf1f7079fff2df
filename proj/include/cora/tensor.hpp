#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cora {

/// Dense row-major matrix of doubles. Vectors are 1 x n rows.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2 from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor2 row_vector(std::span<const double> values);
  static Tensor2 identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor2& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols_, cols_); }

  const std::vector<double>& values() const { return data_; }

  bool all_finite() const;
  void fill(double v);
  std::string shape_string() const;

  bool operator==(const Tensor2& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Plain (non-recorded) kernels. Each checks shapes and finiteness of the result.
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
Tensor2 transpose(const Tensor2& a);
Tensor2 add(const Tensor2& a, const Tensor2& b);
Tensor2 sub(const Tensor2& a, const Tensor2& b);
Tensor2 hadamard(const Tensor2& a, const Tensor2& b);
Tensor2 scale(const Tensor2& a, double s);
Tensor2 add_row_broadcast(const Tensor2& a, const Tensor2& row);
Tensor2 slice_rows(const Tensor2& a, std::size_t begin, std::size_t end);
Tensor2 slice_cols(const Tensor2& a, std::size_t begin, std::size_t end);
Tensor2 vstack(std::span<const Tensor2> parts);

/// Numerically stable softmax (max-subtracted). Throws DomainError on empty input.
std::vector<double> softmax(std::span<const double> v);

double max_abs_diff(const Tensor2& a, const Tensor2& b);
double silu(double x);

/// Throws NumericError naming `what` if any entry is NaN/Inf.
void require_finite(const Tensor2& t, const char* what);

}  // namespace cora
