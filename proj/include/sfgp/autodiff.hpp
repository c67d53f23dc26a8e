#ifndef SFGP_AUTODIFF_HPP
#define SFGP_AUTODIFF_HPP

#include <functional>
#include <stdexcept>
#include <vector>

#include "sfgp/linalg.hpp"
#include "sfgp/ops.hpp"

namespace sfgp {

class CycleDetected : public std::logic_error {
public:
  explicit CycleDetected(const std::string& what) : std::logic_error(what) {}
};

class Tape;

// Handle to a matrix-valued node on a Tape. Scalars are 1x1 nodes.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const DenseMatrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

/// Dynamically recorded reverse-mode graph over dense blocks.
///
/// Nodes are appended in evaluation order; each node stores its value, the
/// ids of the nodes it reads, and a backward rule that accumulates into the
/// parents' adjoints. A tape is single-owner and is meant to live for one
/// gradient evaluation.
class Tape {
public:
  using Backward = std::function<void(Tape&, int self)>;

  Var variable(DenseMatrix value);
  Var variable(double value) { return variable(DenseMatrix::Constant(1, 1, value)); }
  Var constant(DenseMatrix value);
  Var constant(double value) { return constant(DenseMatrix::Constant(1, 1, value)); }

  Var push(DenseMatrix value, std::vector<int> parents, Backward backward);

  /// Reverse sweep from a 1x1 output seeded with `seed`. Adjoints of every
  /// earlier node are available through adjoint() afterwards.
  void backward(Var output, double seed = 1.0);

  /// Adjoint of a node after backward(); zeros for nodes the output does not reach.
  DenseMatrix adjoint(Var v) const;

  const DenseMatrix& value(int id) const { return nodes_.at(static_cast<size_t>(id)).value; }
  const DenseMatrix& adjoint_ref(int id) const { return nodes_[static_cast<size_t>(id)].adjoint; }
  void accumulate(int id, const DenseMatrix& g);
  int parent(int id, size_t k) const { return nodes_[static_cast<size_t>(id)].parents[k]; }

  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

private:
  struct Node {
    DenseMatrix value;
    DenseMatrix adjoint;
    std::vector<int> parents;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

inline const DenseMatrix& Var::value() const { return tape->value(id); }

// Elementwise ops (1x1 operands broadcast).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var shift(const Var& a, double s);
Var neg(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var reciprocal(const Var& a);

// Structural ops.
Var mm(const Var& a, const Var& b);
Var tr(const Var& a);
Var sum(const Var& a);
Var colsum(const Var& a);
Var rep_rows(const Var& row, Eigen::Index n);
Var rep_cols(const Var& col, Eigen::Index n);
Var symmetrize(const Var& a);

// SPD primitives, each factorizing its input with cholesky_with_fallback.
/// y^T K^{-1} y for a column vector y.
Var quad_inv(const Var& k, const Var& y);
/// log|K|.
Var logdet_spd(const Var& k);
/// K^{-1} B.
Var solve_spd(const Var& k, const Var& b);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

/// Order-2 directional jet: value, first and second derivative along one
/// input coordinate. T is double, DenseMatrix (elementwise jets) or Var.
template <class T>
struct Jet2 {
  T v;
  T d1;
  T d2;
};

template <class T>
Jet2<T> operator+(const Jet2<T>& a, const Jet2<T>& b) {
  return {add(a.v, b.v), add(a.d1, b.d1), add(a.d2, b.d2)};
}

template <class T>
Jet2<T> operator-(const Jet2<T>& a, const Jet2<T>& b) {
  return {sub(a.v, b.v), sub(a.d1, b.d1), sub(a.d2, b.d2)};
}

template <class T>
Jet2<T> operator*(const Jet2<T>& a, const Jet2<T>& b) {
  return {mul(a.v, b.v), add(mul(a.d1, b.v), mul(a.v, b.d1)),
          add(add(mul(a.d2, b.v), mul(a.v, b.d2)), scale(mul(a.d1, b.d1), 2.0))};
}

template <class T>
Jet2<T> scale(const Jet2<T>& a, double s) {
  return {scale(a.v, s), scale(a.d1, s), scale(a.d2, s)};
}

template <class T>
Jet2<T> sin(const Jet2<T>& a) {
  T s = sin(a.v);
  T c = cos(a.v);
  return {s, mul(c, a.d1), sub(mul(c, a.d2), mul(s, mul(a.d1, a.d1)))};
}

template <class T>
Jet2<T> cos(const Jet2<T>& a) {
  T s = sin(a.v);
  T c = cos(a.v);
  return {c, scale(mul(s, a.d1), -1.0), scale(add(mul(s, a.d2), mul(c, mul(a.d1, a.d1))), -1.0)};
}

template <class T>
Jet2<T> exp(const Jet2<T>& a) {
  T e = exp(a.v);
  return {e, mul(e, a.d1), mul(e, add(a.d2, mul(a.d1, a.d1)))};
}

template <class T>
Jet2<T> log(const Jet2<T>& a) {
  T r = reciprocal(a.v);
  T g = mul(a.d1, r);
  return {log(a.v), g, sub(mul(a.d2, r), mul(g, g))};
}

template <class T>
Jet2<T> reciprocal(const Jet2<T>& a) {
  T r = reciprocal(a.v);
  T r2 = mul(r, r);
  return {r, scale(mul(r2, a.d1), -1.0),
          add(scale(mul(r2, a.d2), -1.0), scale(mul(mul(r2, r), mul(a.d1, a.d1)), 2.0))};
}

/// Loss value with its gradient over a flat parameter vector.
struct ValueAndGradient {
  double value = 0.0;
  DenseVector gradient;
};

using DifferentiableLoss = std::function<ValueAndGradient(const DenseVector&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  Eigen::Index worst_index = -1;
  DenseVector analytic;
  DenseVector numeric;
};

/// Compare the analytic gradient against central differences with the given
/// step. Error per parameter is |a - n| / max(|a|, |n|, 1e-12).
GradCheckResult grad_check(const DifferentiableLoss& loss, const DenseVector& params, double step);

}  // namespace sfgp

#endif  // SFGP_AUTODIFF_HPP
