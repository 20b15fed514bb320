#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace odekin {

/// Dense row-major matrix of doubles. Column vectors are n x 1, scalars 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols);  // zero-filled
  Tensor(int rows, int cols, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor column(std::span<const double> v);
  static Tensor filled(int rows, int cols, double v);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  double* row(int r) { return data_.data() + static_cast<std::size_t>(r) * cols_; }
  const double* row(int r) const { return data_.data() + static_cast<std::size_t>(r) * cols_; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

  /// Index of the first non-finite entry, or size() if all entries are finite.
  std::size_t first_non_finite() const;

  /// Throws NonFiniteError when an entry is NaN/Inf (tensor content invariant).
  void require_finite(const std::string& context) const;

  std::string shape_str() const;  // "2x3"

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

// Kernels shared by the tape forward and backward passes. Elementwise ops
// accept equal shapes or a 1x1 operand broadcast against the other side.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T * b
Tensor tanh_ew(const Tensor& a);
Tensor square_ew(const Tensor& a);
Tensor sum_all(const Tensor& a);  // 1x1

void add_in_place(Tensor& acc, const Tensor& x);  // equal shapes only

}  // namespace odekin
