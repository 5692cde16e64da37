#include "dkaft/tape.hpp"

#include <cmath>
#include <string>

#include "dkaft/errors.hpp"
#include "dkaft/math.hpp"

namespace dkaft::ad {

namespace {

#ifndef NDEBUG
void debug_check_finite(const char* op, const Tensor& v) {
  if (!v.all_finite())
    throw NumericError(std::string(op) + ": produced non-finite values");
}
#else
void debug_check_finite(const char*, const Tensor&) {}
#endif

Tensor mask_lower(Tensor m) {
  const std::size_t n = m.rows();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m.at(i, j) = 0.0;
  return m;
}

}  // namespace

int Tape::check(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw Error("tape: invalid node handle " + std::to_string(id));
  return id;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::emit(const char* op, Tensor value, std::vector<int> parents, Pull pull) {
  debug_check_finite(op, value);
  Node n;
  n.value = std::move(value);
  for (int p : parents)
    if (nodes_[check(p)].requires_grad) n.requires_grad = true;
  if (n.requires_grad) {
    n.parents = std::move(parents);
    n.pull = std::move(pull);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var root) {
  const Tensor& rv = value(root);
  if (rv.size() != 1)
    throw Error("backward: root must be scalar, got shape " + shape_str(rv.shape()));
  for (auto& n : nodes_) n.grad = Tensor();
  Node& r = nodes_[root.id];
  r.grad = Tensor(rv.shape(), 1.0);
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0 || !n.pull) continue;
    n.pull(*this, id);
  }
}

Tensor Tape::grad_of(Var v) const {
  const Node& n = nodes_[check(v.id)];
  if (n.grad.size() == 0) return Tensor(n.value.shape());
  return n.grad;
}

void Tape::accumulate(int id, const Tensor& g) {
  Node& n = nodes_[check(id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) n.grad = Tensor(n.value.shape());
  if (!n.grad.same_shape(g))
    throw ShapeError("tape: gradient shape " + shape_str(g.shape()) + " does not match value " +
                     shape_str(n.value.shape()));
  for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

// ---- ops -----------------------------------------------------------------

Var constant(Tape& t, Tensor value) { return t.leaf(std::move(value), false); }

Var scalar_const(Tape& t, double v) { return t.leaf(Tensor::scalar(v), false); }

namespace {

enum class BCase { Same, AScalar, BScalar };

BCase binary_case(const Tensor& a, const Tensor& b, const char* op) {
  if (a.same_shape(b)) return BCase::Same;
  if (a.is_scalar()) return BCase::AScalar;
  if (b.is_scalar()) return BCase::BScalar;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

// Elementwise binary with rank-0 broadcast on either side. df_a/df_b give the
// local derivative per element from (a, b, out).
template <class F, class DA, class DB>
Var ew_binary(Tape& t, Var a, Var b, const char* op, F f, DA df_a, DB df_b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  const BCase bc = binary_case(av, bv, op);
  const Tensor& big = (bc == BCase::AScalar) ? bv : av;
  Tensor out(big.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = (bc == BCase::AScalar) ? av[0] : av[i];
    const double y = (bc == BCase::BScalar) ? bv[0] : bv[i];
    out[i] = f(x, y);
  }
  const int aid = a.id, bid = b.id;
  return t.emit(op, std::move(out), {aid, bid}, [=](Tape& tp, int self) {
    const Tensor& g = tp.grad_const(self);
    const Tensor& A = tp.value(aid);
    const Tensor& B = tp.value(bid);
    const Tensor& O = tp.value(self);
    Tensor ga(A.shape());
    Tensor gb(B.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = (bc == BCase::AScalar) ? A[0] : A[i];
      const double y = (bc == BCase::BScalar) ? B[0] : B[i];
      const double gi = g[i];
      ga[(bc == BCase::AScalar) ? 0 : i] += gi * df_a(x, y, O[i]);
      gb[(bc == BCase::BScalar) ? 0 : i] += gi * df_b(x, y, O[i]);
    }
    tp.accumulate(aid, ga);
    tp.accumulate(bid, gb);
  });
}

template <class F, class DF>
Var ew_unary(Tape& t, Var a, const char* op, F f, DF df) {
  const Tensor& av = t.value(a);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  const int aid = a.id;
  return t.emit(op, std::move(out), {aid}, [=](Tape& tp, int self) {
    const Tensor& g = tp.grad_const(self);
    const Tensor& A = tp.value(aid);
    const Tensor& O = tp.value(self);
    Tensor ga(A.shape());
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * df(A[i], O[i]);
    tp.accumulate(aid, ga);
  });
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  return ew_binary(
      t, a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var sub(Tape& t, Var a, Var b) {
  return ew_binary(
      t, a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var mul(Tape& t, Var a, Var b) {
  return ew_binary(
      t, a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Var div(Tape& t, Var a, Var b) {
  const Tensor& bv = t.value(b);
  for (std::size_t i = 0; i < bv.size(); ++i)
    if (bv[i] == 0.0) throw DomainError("div: division by zero");
  return ew_binary(
      t, a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

Var neg(Tape& t, Var a) {
  return ew_unary(
      t, a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var add_scalar(Tape& t, Var a, double c) {
  return ew_unary(
      t, a, "add_scalar", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var mul_scalar(Tape& t, Var a, double c) {
  return ew_unary(
      t, a, "mul_scalar", [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Var matmul(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  const int aid = a.id, bid = b.id;
  if (av.rank() == 2 && bv.rank() == 2) {
    Tensor out = t_matmul(av, bv);
    return t.emit("matmul", std::move(out), {aid, bid}, [=](Tape& tp, int self) {
      const Tensor& g = tp.grad_const(self);
      tp.accumulate(aid, t_matmul(g, t_transpose(tp.value(bid))));
      tp.accumulate(bid, t_matmul(t_transpose(tp.value(aid)), g));
    });
  }
  if (av.rank() == 2 && bv.rank() == 1) {
    Tensor out = t_matvec(av, bv);
    return t.emit("matmul", std::move(out), {aid, bid}, [=](Tape& tp, int self) {
      const Tensor& g = tp.grad_const(self);
      const Tensor& A = tp.value(aid);
      const Tensor& x = tp.value(bid);
      Tensor ga(A.shape());
      for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t p = 0; p < A.cols(); ++p) ga.at(i, p) = g[i] * x[p];
      tp.accumulate(aid, ga);
      tp.accumulate(bid, t_vecmat(g, A));
    });
  }
  if (av.rank() == 1 && bv.rank() == 2) {
    Tensor out = t_vecmat(av, bv);
    return t.emit("matmul", std::move(out), {aid, bid}, [=](Tape& tp, int self) {
      const Tensor& g = tp.grad_const(self);
      const Tensor& x = tp.value(aid);
      const Tensor& B = tp.value(bid);
      tp.accumulate(aid, t_matvec(B, g));
      Tensor gb(B.shape());
      for (std::size_t p = 0; p < B.rows(); ++p)
        for (std::size_t j = 0; j < B.cols(); ++j) gb.at(p, j) = x[p] * g[j];
      tp.accumulate(bid, gb);
    });
  }
  throw ShapeError("matmul: incompatible shapes " + shape_str(av.shape()) + " and " +
                   shape_str(bv.shape()));
}

Var transpose(Tape& t, Var a) {
  Tensor out = t_transpose(t.value(a));
  const int aid = a.id;
  return t.emit("transpose", std::move(out), {aid}, [=](Tape& tp, int self) {
    tp.accumulate(aid, t_transpose(tp.grad_const(self)));
  });
}

Var exp(Tape& t, Var a) {
  return ew_unary(
      t, a, "exp", [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

Var log(Tape& t, Var a) {
  const Tensor& av = t.value(a);
  for (std::size_t i = 0; i < av.size(); ++i)
    if (!(av[i] > 0.0)) throw DomainError("log: input must be strictly positive");
  return ew_unary(
      t, a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var tanh(Tape& t, Var a) {
  return ew_unary(
      t, a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double o) { return 1.0 - o * o; });
}

Var sigmoid(Tape& t, Var a) {
  return ew_unary(
      t, a, "sigmoid", [](double x) { return mathx::sigmoid(x); },
      [](double, double o) { return o * (1.0 - o); });
}

Var softplus(Tape& t, Var a) {
  return ew_unary(
      t, a, "softplus", [](double x) { return mathx::softplus(x); },
      [](double x, double) { return mathx::sigmoid(x); });
}

Var square(Tape& t, Var a) {
  return ew_unary(
      t, a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(Tape& t, Var a) {
  const Tensor& av = t.value(a);
  for (std::size_t i = 0; i < av.size(); ++i)
    if (av[i] < 0.0) throw DomainError("sqrt: input must be non-negative");
  return ew_unary(
      t, a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double o) { return 0.5 / o; });
}

Var clamp_min(Tape& t, Var a, double floor) {
  // subgradient 0 at the hinge point
  return ew_unary(
      t, a, "clamp_min", [floor](double x) { return x > floor ? x : floor; },
      [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Var gauss_log_sf(Tape& t, Var u) {
  return ew_unary(
      t, u, "gauss_log_sf", [](double x) { return mathx::log_normal_sf(x); },
      [](double x, double) { return mathx::dlog_normal_sf(x); });
}

Var sum(Tape& t, Var a) {
  const Tensor& av = t.value(a);
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i];
  const int aid = a.id;
  return t.emit("sum", Tensor::scalar(acc), {aid}, [=](Tape& tp, int self) {
    const double g = tp.grad_const(self)[0];
    tp.accumulate(aid, Tensor(tp.value(aid).shape(), g));
  });
}

Var sum_axis(Tape& t, Var a, int axis) {
  const Tensor& av = t.value(a);
  if (av.rank() != 2 || (axis != 0 && axis != 1))
    throw ShapeError("sum_axis: expected matrix and axis in {0,1}, got " + shape_str(av.shape()));
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out(Shape{axis == 0 ? c : r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += av.at(i, j);
  const int aid = a.id;
  return t.emit("sum_axis", std::move(out), {aid}, [=](Tape& tp, int self) {
    const Tensor& g = tp.grad_const(self);
    const Tensor& A = tp.value(aid);
    Tensor ga(A.shape());
    for (std::size_t i = 0; i < A.rows(); ++i)
      for (std::size_t j = 0; j < A.cols(); ++j) ga.at(i, j) = g[axis == 0 ? j : i];
    tp.accumulate(aid, ga);
  });
}

Var mean(Tape& t, Var a) {
  const Tensor& av = t.value(a);
  if (av.size() == 0) throw ShapeError("mean: empty tensor");
  return mul_scalar(t, sum(t, a), 1.0 / static_cast<double>(av.size()));
}

Var dot(Tape& t, Var a, Var b) { return sum(t, mul(t, a, b)); }

Var concat(Tape& t, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::size_t total = 0;
  std::vector<int> pids;
  std::vector<std::size_t> lens;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    if (v.rank() != 1) throw ShapeError("concat: expected vectors, got " + shape_str(v.shape()));
    total += v.size();
    pids.push_back(p.id);
    lens.push_back(v.size());
  }
  Tensor out(Shape{total});
  std::size_t off = 0;
  for (Var p : parts) {
    const Tensor& v = t.value(p);
    for (std::size_t i = 0; i < v.size(); ++i) out[off + i] = v[i];
    off += v.size();
  }
  return t.emit("concat", std::move(out), pids, [pids, lens](Tape& tp, int self) {
    const Tensor& g = tp.grad_const(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < pids.size(); ++k) {
      Tensor gk(Shape{lens[k]});
      for (std::size_t i = 0; i < lens[k]; ++i) gk[i] = g[off + i];
      tp.accumulate(pids[k], gk);
      off += lens[k];
    }
  });
}

Var stack_rows(Tape& t, std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  const std::size_t d = t.value(rows[0]).size();
  std::vector<int> pids;
  for (Var r : rows) {
    const Tensor& v = t.value(r);
    if (v.rank() != 1 || v.size() != d)
      throw ShapeError("stack_rows: rows must be vectors of equal length");
    pids.push_back(r.id);
  }
  const std::size_t n = rows.size();
  Tensor out(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor& v = t.value(rows[i]);
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = v[j];
  }
  return t.emit("stack_rows", std::move(out), pids, [pids, d](Tape& tp, int self) {
    const Tensor& g = tp.grad_const(self);
    for (std::size_t i = 0; i < pids.size(); ++i) {
      Tensor gi(Shape{d});
      for (std::size_t j = 0; j < d; ++j) gi[j] = g.at(i, j);
      tp.accumulate(pids[i], gi);
    }
  });
}

Var slice(Tape& t, Var a, std::size_t start, std::size_t len) {
  const Tensor& av = t.value(a);
  if (av.rank() != 1 || start + len > av.size())
    throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") out of bounds for " + shape_str(av.shape()));
  Tensor out(Shape{len});
  for (std::size_t i = 0; i < len; ++i) out[i] = av[start + i];
  const int aid = a.id;
  return t.emit("slice", std::move(out), {aid}, [=](Tape& tp, int self) {
    const Tensor& g = tp.grad_const(self);
    Tensor ga(tp.value(aid).shape());
    for (std::size_t i = 0; i < len; ++i) ga[start + i] = g[i];
    tp.accumulate(aid, ga);
  });
}

Var row(Tape& t, Var a, std::size_t i) {
  const Tensor& av = t.value(a);
  if (av.rank() != 2 || i >= av.rows())
    throw ShapeError("row: index " + std::to_string(i) + " out of bounds for " +
                     shape_str(av.shape()));
  const std::size_t c = av.cols();
  Tensor out(Shape{c});
  for (std::size_t j = 0; j < c; ++j) out[j] = av.at(i, j);
  const int aid = a.id;
  return t.emit("row", std::move(out), {aid}, [=](Tape& tp, int self) {
    const Tensor& g = tp.grad_const(self);
    Tensor ga(tp.value(aid).shape());
    for (std::size_t j = 0; j < c; ++j) ga.at(i, j) = g[j];
    tp.accumulate(aid, ga);
  });
}

Var reshape(Tape& t, Var a, Shape target) {
  const Tensor& av = t.value(a);
  Tensor out(target, av.vec());
  const int aid = a.id;
  return t.emit("reshape", std::move(out), {aid}, [=](Tape& tp, int self) {
    const Tensor& g = tp.grad_const(self);
    tp.accumulate(aid, Tensor(tp.value(aid).shape(), g.vec()));
  });
}

Var broadcast_to(Tape& t, Var a, Shape target) {
  const Tensor& av = t.value(a);
  const int aid = a.id;
  if (av.is_scalar()) {
    Tensor out(target, av[0]);
    return t.emit("broadcast", std::move(out), {aid}, [=](Tape& tp, int self) {
      const Tensor& g = tp.grad_const(self);
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i];
      tp.accumulate(aid, Tensor::scalar(acc));
    });
  }
  if (av.rank() == 2 && target.size() == 2) {
    const std::size_t m = target[0], n = target[1];
    if (av.rows() == 1 && av.cols() == n) {  // (1,n) -> (m,n)
      Tensor out(target);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = av[j];
      return t.emit("broadcast", std::move(out), {aid}, [=](Tape& tp, int self) {
        const Tensor& g = tp.grad_const(self);
        Tensor ga(Shape{1, n});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) ga[j] += g.at(i, j);
        tp.accumulate(aid, ga);
      });
    }
    if (av.cols() == 1 && av.rows() == m) {  // (m,1) -> (m,n)
      Tensor out(target);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = av[i];
      return t.emit("broadcast", std::move(out), {aid}, [=](Tape& tp, int self) {
        const Tensor& g = tp.grad_const(self);
        Tensor ga(Shape{m, 1});
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) ga[i] += g.at(i, j);
        tp.accumulate(aid, ga);
      });
    }
  }
  throw ShapeError("broadcast: cannot expand " + shape_str(av.shape()) + " to " +
                   shape_str(target));
}

Var diag_part(Tape& t, Var a) {
  const Tensor& av = t.value(a);
  if (av.rank() != 2 || av.rows() != av.cols())
    throw ShapeError("diag_part: expected square matrix, got " + shape_str(av.shape()));
  const std::size_t n = av.rows();
  Tensor out(Shape{n});
  for (std::size_t i = 0; i < n; ++i) out[i] = av.at(i, i);
  const int aid = a.id;
  return t.emit("diag_part", std::move(out), {aid}, [=](Tape& tp, int self) {
    const Tensor& g = tp.grad_const(self);
    Tensor ga(tp.value(aid).shape());
    for (std::size_t i = 0; i < n; ++i) ga.at(i, i) = g[i];
    tp.accumulate(aid, ga);
  });
}

Var diag_embed(Tape& t, Var v) {
  const Tensor& vv = t.value(v);
  if (vv.rank() != 1) throw ShapeError("diag_embed: expected vector, got " + shape_str(vv.shape()));
  const std::size_t n = vv.size();
  Tensor out(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) out.at(i, i) = vv[i];
  const int vid = v.id;
  return t.emit("diag_embed", std::move(out), {vid}, [=](Tape& tp, int self) {
    const Tensor& g = tp.grad_const(self);
    Tensor gv(Shape{n});
    for (std::size_t i = 0; i < n; ++i) gv[i] = g.at(i, i);
    tp.accumulate(vid, gv);
  });
}

CholVar cholesky(Tape& t, Var a, const JitterPolicy& policy) {
  JitteredChol jc = cholesky_with_jitter(t.value(a), policy);
  const int aid = a.id;
  Var lower = t.emit("cholesky", std::move(jc.lower), {aid}, [=](Tape& tp, int self) {
    const Tensor& L = tp.value(self);
    const Tensor& Lbar = tp.grad_const(self);
    const std::size_t n = L.rows();
    // P = phi(L^T Lbar): lower triangle with halved diagonal
    Tensor P = t_matmul(t_transpose(L), Lbar);
    for (std::size_t i = 0; i < n; ++i) {
      P.at(i, i) *= 0.5;
      for (std::size_t j = i + 1; j < n; ++j) P.at(i, j) = 0.0;
    }
    // Abar = 0.5 * (Y + Y^T) with Y = L^{-T} P L^{-1}
    Tensor X = plain_trisolve(L, P, /*transposed=*/true);
    Tensor Y = t_transpose(plain_trisolve(L, t_transpose(X), /*transposed=*/true));
    Tensor ga(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) ga.at(i, j) = 0.5 * (Y.at(i, j) + Y.at(j, i));
    tp.accumulate(aid, ga);
  });
  return CholVar{lower, jc.jitter};
}

Var tri_solve(Tape& t, Var lower, Var b, bool transposed) {
  Tensor out = plain_trisolve(t.value(lower), t.value(b), transposed);
  const int lid = lower.id, bid = b.id;
  return t.emit("tri_solve", std::move(out), {lid, bid}, [=](Tape& tp, int self) {
    const Tensor& L = tp.value(lid);
    const Tensor& X = tp.value(self);
    const Tensor& Xbar = tp.grad_const(self);
    // For L x = b: bbar = L^{-T} xbar, Lbar = -bbar x^T (lower part).
    // For L^T x = b: bbar = L^{-1} xbar, Lbar = -x bbar^T (lower part).
    Tensor bbar = plain_trisolve(L, Xbar, !transposed);
    const bool vec = X.rank() == 1;
    Tensor lhs = transposed ? X : bbar;
    Tensor rhs = transposed ? bbar : X;
    Tensor lbar;
    if (vec) {
      const std::size_t n = lhs.size();
      lbar = Tensor(Shape{n, n});
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) lbar.at(i, j) = -lhs[i] * rhs[j];
    } else {
      lbar = mask_lower(t_matmul(lhs, t_transpose(rhs)));
      for (std::size_t i = 0; i < lbar.size(); ++i) lbar[i] = -lbar[i];
    }
    tp.accumulate(lid, lbar);
    tp.accumulate(bid, bbar);
  });
}

Var logdet_from_chol(Tape& t, Var lower) {
  const Tensor& L = t.value(lower);
  const std::size_t n = L.rows();
  if (L.cols() != n) throw ShapeError("logdet_from_chol: expected square matrix");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(L.at(i, i) > 0.0))
      throw DomainError("logdet_from_chol: non-positive diagonal at index " + std::to_string(i));
    acc += std::log(L.at(i, i));
  }
  const int lid = lower.id;
  return t.emit("logdet_from_chol", Tensor::scalar(2.0 * acc), {lid}, [=](Tape& tp, int self) {
    const double g = tp.grad_const(self)[0];
    const Tensor& Lv = tp.value(lid);
    Tensor ga(Lv.shape());
    for (std::size_t i = 0; i < n; ++i) ga.at(i, i) = 2.0 * g / Lv.at(i, i);
    tp.accumulate(lid, ga);
  });
}

}  // namespace dkaft::ad
