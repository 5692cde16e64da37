#include "dkaft/tensor.hpp"

#include <cmath>
#include <sstream>

#include "dkaft/errors.hpp"

namespace dkaft::ad {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << ")";
  return os.str();
}

namespace {
std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size())
    throw ShapeError("tensor: shape " + shape_str(shape_) + " does not match data length " +
                     std::to_string(data_.size()));
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::eye(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::row_major(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor(Shape{rows, cols}, std::move(data));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("tensor: rows() on non-matrix " + shape_str(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("tensor: cols() on non-matrix " + shape_str(shape_));
  return shape_[1];
}

double Tensor::scalar_value() const {
  if (size() != 1) throw ShapeError("tensor: scalar_value() on " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor t_matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * k;
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor t_matvec(const Tensor& a, const Tensor& x) {
  if (a.rank() != 2 || x.rank() != 1 || a.cols() != x.shape()[0])
    throw ShapeError("matvec: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(x.shape()));
  const std::size_t m = a.rows(), k = a.cols();
  Tensor out(Shape{m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) acc += arow[p] * x[p];
    out[i] = acc;
  }
  return out;
}

Tensor t_vecmat(const Tensor& x, const Tensor& a) {
  if (a.rank() != 2 || x.rank() != 1 || a.rows() != x.shape()[0])
    throw ShapeError("vecmat: incompatible shapes " + shape_str(x.shape()) + " and " +
                     shape_str(a.shape()));
  const std::size_t k = a.rows(), n = a.cols();
  Tensor out(Shape{n});
  for (std::size_t p = 0; p < k; ++p) {
    const double xv = x[p];
    if (xv == 0.0) continue;
    const double* arow = a.data() + p * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += xv * arow[j];
  }
  return out;
}

Tensor t_transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected matrix, got " + shape_str(a.shape()));
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor t_add(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ShapeError("add: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor t_sub(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ShapeError("sub: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor t_scale(const Tensor& a, double c) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
  return out;
}

double t_dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size())
    throw ShapeError("dot: incompatible sizes " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

CholOutcome plain_cholesky(const Tensor& a) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw ShapeError("cholesky: expected square matrix, got " + shape_str(a.shape()));
  CholOutcome out;
  out.lower = Tensor(Shape{n, n});
  out.smallest_pivot = n ? a.at(0, 0) : 0.0;
  Tensor& l = out.lower;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a.at(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l.at(j, k) * l.at(j, k);
    if (d < out.smallest_pivot) out.smallest_pivot = d;
    if (!(d > 0.0)) {
      out.ok = false;
      return out;
    }
    const double ljj = std::sqrt(d);
    l.at(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a.at(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
      l.at(i, j) = s / ljj;
    }
  }
  out.ok = true;
  return out;
}

JitteredChol cholesky_with_jitter(const Tensor& a, const JitterPolicy& policy) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw ShapeError("cholesky: expected square matrix, got " + shape_str(a.shape()));
  double max_abs = 0.0, max_asym = 0.0, diag_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diag_sum += a.at(i, i);
    for (std::size_t j = 0; j < n; ++j) {
      max_abs = std::max(max_abs, std::fabs(a.at(i, j)));
      if (j > i) max_asym = std::max(max_asym, std::fabs(a.at(i, j) - a.at(j, i)));
    }
  }
  if (max_asym > 1e-8 * (1.0 + max_abs))
    throw ShapeError("cholesky: input matrix is not symmetric (max asymmetry " +
                     std::to_string(max_asym) + ")");
  const double mean_diag = n ? diag_sum / static_cast<double>(n) : 0.0;

  double worst_pivot = 0.0;
  for (double f = policy.start_factor; f <= policy.max_factor * (1.0 + 1e-12); f *= policy.growth) {
    const double jitter = f * mean_diag;
    Tensor shifted = a;
    for (std::size_t i = 0; i < n; ++i) shifted.at(i, i) += jitter;
    CholOutcome c = plain_cholesky(shifted);
    if (c.ok) return JitteredChol{std::move(c.lower), jitter};
    worst_pivot = c.smallest_pivot;
    if (jitter == 0.0) break;  // escalation cannot help
  }
  throw FactorizationError(
      "cholesky: matrix not positive definite after jitter escalation (smallest pivot " +
          std::to_string(worst_pivot) + ")",
      worst_pivot);
}

Tensor plain_trisolve(const Tensor& lower, const Tensor& b, bool transposed) {
  const std::size_t n = lower.rows();
  if (lower.cols() != n)
    throw ShapeError("tri_solve: expected square matrix, got " + shape_str(lower.shape()));
  const bool vec = b.rank() == 1;
  if ((vec && b.shape()[0] != n) || (!vec && (b.rank() != 2 || b.rows() != n)))
    throw ShapeError("tri_solve: rhs shape " + shape_str(b.shape()) + " does not match L " +
                     shape_str(lower.shape()));
  for (std::size_t i = 0; i < n; ++i)
    if (lower.at(i, i) == 0.0)
      throw NumericError("tri_solve: zero diagonal entry at index " + std::to_string(i));

  const std::size_t k = vec ? 1 : b.cols();
  Tensor x = b;
  auto xat = [&](std::size_t i, std::size_t c) -> double& { return x.vec()[i * k + c]; };
  if (!transposed) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        double s = xat(i, c);
        for (std::size_t j = 0; j < i; ++j) s -= lower.at(i, j) * xat(j, c);
        xat(i, c) = s / lower.at(i, i);
      }
    }
  } else {
    for (std::size_t ii = n; ii-- > 0;) {
      for (std::size_t c = 0; c < k; ++c) {
        double s = xat(ii, c);
        for (std::size_t j = ii + 1; j < n; ++j) s -= lower.at(j, ii) * xat(j, c);
        xat(ii, c) = s / lower.at(ii, ii);
      }
    }
  }
  return x;
}

}  // namespace dkaft::ad
