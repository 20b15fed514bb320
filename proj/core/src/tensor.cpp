#include "odekin/tensor.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "odekin/errors.hpp"

namespace odekin {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

std::string shapes(const Tensor& a, const Tensor& b) {
  return a.shape_str() + " and " + b.shape_str();
}

}  // namespace

Tensor::Tensor(int rows, int cols)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {
  require(rows > 0 && cols > 0, "tensor shape must be positive, got " + shape_str());
}

Tensor::Tensor(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(rows > 0 && cols > 0, "tensor shape must be positive, got " + shape_str());
  require(data_.size() == static_cast<std::size_t>(rows) * cols,
          "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
              shape_str());
}

Tensor Tensor::scalar(double v) { return Tensor(1, 1, {v}); }

Tensor Tensor::column(std::span<const double> v) {
  return Tensor(static_cast<int>(v.size()), 1, std::vector<double>(v.begin(), v.end()));
}

Tensor Tensor::filled(int rows, int cols, double v) {
  Tensor t(rows, cols);
  for (double& x : t.data_) x = v;
  return t;
}

std::size_t Tensor::first_non_finite() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) return i;
  }
  return data_.size();
}

void Tensor::require_finite(const std::string& context) const {
  const std::size_t i = first_non_finite();
  if (i < data_.size()) {
    throw NonFiniteError(context + ": non-finite entry at flat index " + std::to_string(i) +
                             " of " + shape_str() + " tensor",
                         i);
  }
}

std::string Tensor::shape_str() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

namespace {

enum class Ew { Add, Sub, Mul };

double apply(Ew op, double a, double b) {
  switch (op) {
    case Ew::Add: return a + b;
    case Ew::Sub: return a - b;
    case Ew::Mul: return a * b;
  }
  return 0.0;
}

Tensor elementwise(Ew op, const char* name, const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) {
    Tensor out(a.rows(), a.cols());
    auto av = a.values(), bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = apply(op, av[i], bv[i]);
    return out;
  }
  if (a.is_scalar()) {
    const double s = a(0, 0);
    Tensor out(b.rows(), b.cols());
    auto bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = apply(op, s, bv[i]);
    return out;
  }
  if (b.is_scalar()) {
    const double s = b(0, 0);
    Tensor out(a.rows(), a.cols());
    auto av = a.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = apply(op, av[i], s);
    return out;
  }
  throw DimensionError(std::string(name) + ": shapes " + shapes(a, b) +
                       " are neither equal nor scalar-broadcastable");
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Ew::Add, "add", a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Ew::Sub, "sub", a, b); }
Tensor hadamard(const Tensor& a, const Tensor& b) { return elementwise(Ew::Mul, "hadamard", a, b); }

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.rows(), a.cols());
  auto av = a.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = c * av[i];
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.rows(),
          "matmul: inner dimensions differ for " + shapes(a, b));
  Tensor out(a.rows(), b.cols());
  const int m = a.rows(), k = a.cols(), n = b.cols();
  for (int i = 0; i < m; ++i) {
    double* c = out.row(i);
    for (int p = 0; p < k; ++p) {
      const double av = a(i, p);
      const double* br = b.row(p);
      for (int j = 0; j < n; ++j) c[j] += av * br[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.cols() == b.cols(),
          "matmul_nt: inner dimensions differ for " + shapes(a, b));
  Tensor out(a.rows(), b.rows());
  const int m = a.rows(), k = a.cols(), n = b.rows();
  for (int i = 0; i < m; ++i) {
    const double* ar = a.row(i);
    double* c = out.row(i);
    for (int j = 0; j < n; ++j) {
      const double* br = b.row(j);
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ar[p] * br[p];
      c[j] = acc;
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require(a.rows() == b.rows(),
          "matmul_tn: inner dimensions differ for " + shapes(a, b));
  Tensor out(a.cols(), b.cols());
  const int m = a.rows(), k = a.cols(), n = b.cols();
  for (int i = 0; i < m; ++i) {
    const double* br = b.row(i);
    for (int p = 0; p < k; ++p) {
      const double av = a(i, p);
      double* c = out.row(p);
      for (int j = 0; j < n; ++j) c[j] += av * br[j];
    }
  }
  return out;
}

Tensor tanh_ew(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  auto av = a.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(av[i]);
  return out;
}

Tensor square_ew(const Tensor& a) {
  Tensor out(a.rows(), a.cols());
  auto av = a.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * av[i];
  return out;
}

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return Tensor::scalar(acc);
}

void add_in_place(Tensor& acc, const Tensor& x) {
  require(acc.same_shape(x), "add_in_place: shapes " + shapes(acc, x) + " differ");
  auto av = acc.values();
  auto xv = x.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += xv[i];
}

}  // namespace odekin
