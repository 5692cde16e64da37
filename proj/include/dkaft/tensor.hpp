#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dkaft::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

/// Dense row-major 64-bit float array. Rank 0 (shape {}) is a scalar with a
/// single element, so product(shape) == data.size() holds throughout.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v) { return Tensor(std::move(shape), v); }
  static Tensor eye(std::size_t n);
  static Tensor row_major(std::size_t rows, std::size_t cols, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool is_scalar() const { return data_.size() == 1 && shape_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }

  double scalar_value() const;
  bool all_finite() const;

private:
  Shape shape_;
  std::vector<double> data_;
};

// Plain tensor math used by backward rules, predictors and tests.
Tensor t_matmul(const Tensor& a, const Tensor& b);        // 2-D x 2-D
Tensor t_matvec(const Tensor& a, const Tensor& x);        // (m x k)(k) -> (m)
Tensor t_vecmat(const Tensor& x, const Tensor& a);        // (k)(k x n) -> (n)
Tensor t_transpose(const Tensor& a);
Tensor t_add(const Tensor& a, const Tensor& b);
Tensor t_sub(const Tensor& a, const Tensor& b);
Tensor t_scale(const Tensor& a, double c);
double t_dot(const Tensor& a, const Tensor& b);

struct CholOutcome {
  bool ok = false;
  double smallest_pivot = 0.0;
  Tensor lower;  // valid when ok
};

/// Unblocked Cholesky of a symmetric matrix; no jitter is added here.
CholOutcome plain_cholesky(const Tensor& a);

/// Jitter escalation: factors a + f*mean(diag(a))*I for f in
/// {start, start*growth, ...} up to max_factor.
struct JitterPolicy {
  double start_factor = 1e-8;
  double max_factor = 1e-3;
  double growth = 10.0;
};

struct JitteredChol {
  Tensor lower;
  double jitter = 0.0;  // absolute value added to the diagonal
};

/// Throws FactorizationError (with the smallest pivot) if the matrix is not
/// positive definite even at max jitter. Throws ShapeError if not symmetric.
JitteredChol cholesky_with_jitter(const Tensor& a, const JitterPolicy& policy = {});

/// Solve L x = b (or L^T x = b when transposed) for vector or matrix b.
Tensor plain_trisolve(const Tensor& lower, const Tensor& b, bool transposed);

}  // namespace dkaft::ad
