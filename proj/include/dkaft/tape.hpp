#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dkaft/tensor.hpp"

namespace dkaft::ad {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Records one forward pass as a topologically ordered list of nodes, each
/// carrying its value and a pull rule that routes the node's gradient to its
/// parents. Single writer; a tape lives for one objective evaluation.
class Tape {
public:
  using Pull = std::function<void(Tape&, int)>;

  Var leaf(Tensor value, bool requires_grad);
  Var emit(const char* op, Tensor value, std::vector<int> parents, Pull pull);

  const Tensor& value(Var v) const { return nodes_[check(v.id)].value; }
  const Tensor& value(int id) const { return nodes_[check(id)].value; }
  bool requires_grad(Var v) const { return nodes_[check(v.id)].requires_grad; }

  /// Reverse sweep from a scalar root; each node is pulled exactly once.
  void backward(Var root);

  /// Gradient of the last backward pass; zeros for unreached nodes.
  Tensor grad_of(Var v) const;

  const Tensor& grad_const(int id) const { return nodes_[check(id)].grad; }
  void accumulate(int id, const Tensor& g);

  std::size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until touched by backward
    std::vector<int> parents;
    Pull pull;
    bool requires_grad = false;
  };

  int check(int id) const;
  std::vector<Node> nodes_;
};

// ---- differentiable ops ------------------------------------------------

Var constant(Tape& t, Tensor value);
Var scalar_const(Tape& t, double v);

Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var div(Tape& t, Var a, Var b);
Var neg(Tape& t, Var a);
Var add_scalar(Tape& t, Var a, double c);
Var mul_scalar(Tape& t, Var a, double c);

Var matmul(Tape& t, Var a, Var b);  // (m,k)x(k,n); also (m,k)x(k) and (k)x(k,n)
Var transpose(Tape& t, Var a);

Var exp(Tape& t, Var a);
Var log(Tape& t, Var a);
Var tanh(Tape& t, Var a);
Var sigmoid(Tape& t, Var a);
Var softplus(Tape& t, Var a);
Var square(Tape& t, Var a);
Var sqrt(Tape& t, Var a);
Var clamp_min(Tape& t, Var a, double floor);

/// Elementwise log(1 - Phi(u)); tail-stable.
Var gauss_log_sf(Tape& t, Var u);

Var sum(Tape& t, Var a);
Var sum_axis(Tape& t, Var a, int axis);
Var mean(Tape& t, Var a);
Var dot(Tape& t, Var a, Var b);

Var concat(Tape& t, std::span<const Var> parts);      // 1-D
Var stack_rows(Tape& t, std::span<const Var> rows);   // n x (1-D of length d) -> (n,d)
Var slice(Tape& t, Var a, std::size_t start, std::size_t len);  // 1-D
Var row(Tape& t, Var a, std::size_t i);               // matrix row -> 1-D

Var reshape(Tape& t, Var a, Shape target);
Var broadcast_to(Tape& t, Var a, Shape target);  // rank-0 -> any; (1,n)->(m,n); (n,1)->(n,m)

Var diag_part(Tape& t, Var a);
Var diag_embed(Tape& t, Var v);

struct CholVar {
  Var lower;
  double jitter = 0.0;
};

/// Cholesky of a symmetric matrix with jitter escalation; gradient follows
/// the standard differentiation identity for the factor.
CholVar cholesky(Tape& t, Var a, const JitterPolicy& policy = {});

Var tri_solve(Tape& t, Var lower, Var b, bool transposed = false);
Var logdet_from_chol(Tape& t, Var lower);

}  // namespace dkaft::ad
