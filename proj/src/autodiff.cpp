#include "sfgp/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace sfgp {

namespace {

// Gradient of a broadcast operand: a 1x1 parent receives the sum.
DenseMatrix reduce_like(const DenseMatrix& parent, const DenseMatrix& g) {
  if (parent.rows() == g.rows() && parent.cols() == g.cols()) return g;
  return DenseMatrix::Constant(1, 1, g.sum());
}

Tape& tape_of(const Var& a, const Var& b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw std::invalid_argument("autodiff: operands live on different tapes");
  }
  return *a.tape;
}

}  // namespace

Var Tape::variable(DenseMatrix value) { return push(std::move(value), {}, nullptr); }

Var Tape::constant(DenseMatrix value) { return push(std::move(value), {}, nullptr); }

Var Tape::push(DenseMatrix value, std::vector<int> parents, Backward backward) {
  nodes_.push_back(Node{std::move(value), DenseMatrix(), std::move(parents), std::move(backward)});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int id, const DenseMatrix& g) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.adjoint.size() == 0) {
    n.adjoint = g;
  } else {
    n.adjoint += g;
  }
}

void Tape::backward(Var output, double seed) {
  if (output.tape != this) throw std::invalid_argument("backward: output not on this tape");
  if (output.rows() != 1 || output.cols() != 1) {
    throw std::invalid_argument("backward: output must be scalar");
  }
  for (auto& n : nodes_) n.adjoint.resize(0, 0);
  nodes_[static_cast<size_t>(output.id)].adjoint = DenseMatrix::Constant(1, 1, seed);

  for (int id = output.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    for (int p : n.parents) {
      if (p < 0 || p >= id) {
        throw CycleDetected("backward: node " + std::to_string(id) + " reads node " +
                            std::to_string(p));
      }
    }
    if (n.adjoint.size() == 0 || !n.backward) continue;
    n.backward(*this, id);
  }
}

DenseMatrix Tape::adjoint(Var v) const {
  const Node& n = nodes_.at(static_cast<size_t>(v.id));
  if (n.adjoint.size() == 0) return DenseMatrix::Zero(n.value.rows(), n.value.cols());
  return n.adjoint;
}

Var add(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return t.push(sfgp::add(a.value(), b.value()), {a.id, b.id}, [](Tape& t, int self) {
    const DenseMatrix& g = t.adjoint_ref(self);
    const int pa = t.parent(self, 0), pb = t.parent(self, 1);
    t.accumulate(pa, reduce_like(t.value(pa), g));
    t.accumulate(pb, reduce_like(t.value(pb), g));
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return t.push(sfgp::sub(a.value(), b.value()), {a.id, b.id}, [](Tape& t, int self) {
    const DenseMatrix& g = t.adjoint_ref(self);
    const int pa = t.parent(self, 0), pb = t.parent(self, 1);
    t.accumulate(pa, reduce_like(t.value(pa), g));
    t.accumulate(pb, reduce_like(t.value(pb), -g));
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return t.push(sfgp::mul(a.value(), b.value()), {a.id, b.id}, [](Tape& t, int self) {
    const DenseMatrix& g = t.adjoint_ref(self);
    const int pa = t.parent(self, 0), pb = t.parent(self, 1);
    const DenseMatrix& va = t.value(pa);
    const DenseMatrix& vb = t.value(pb);
    t.accumulate(pa, reduce_like(va, sfgp::mul(g, vb)));
    t.accumulate(pb, reduce_like(vb, sfgp::mul(g, va)));
  });
}

Var scale(const Var& a, double s) {
  return a.tape->push(s * a.value(), {a.id}, [s](Tape& t, int self) {
    t.accumulate(t.parent(self, 0), s * t.adjoint_ref(self));
  });
}

Var shift(const Var& a, double s) {
  return a.tape->push((a.value().array() + s).matrix(), {a.id}, [](Tape& t, int self) {
    t.accumulate(t.parent(self, 0), t.adjoint_ref(self));
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var sin(const Var& a) {
  return a.tape->push(sfgp::sin(a.value()), {a.id}, [](Tape& t, int self) {
    const int p = t.parent(self, 0);
    t.accumulate(p, t.adjoint_ref(self).cwiseProduct(sfgp::cos(t.value(p))));
  });
}

Var cos(const Var& a) {
  return a.tape->push(sfgp::cos(a.value()), {a.id}, [](Tape& t, int self) {
    const int p = t.parent(self, 0);
    t.accumulate(p, -t.adjoint_ref(self).cwiseProduct(sfgp::sin(t.value(p))));
  });
}

Var exp(const Var& a) {
  return a.tape->push(sfgp::exp(a.value()), {a.id}, [](Tape& t, int self) {
    t.accumulate(t.parent(self, 0), t.adjoint_ref(self).cwiseProduct(t.value(self)));
  });
}

Var log(const Var& a) {
  return a.tape->push(sfgp::log(a.value()), {a.id}, [](Tape& t, int self) {
    const int p = t.parent(self, 0);
    t.accumulate(p, t.adjoint_ref(self).cwiseQuotient(t.value(p)));
  });
}

Var reciprocal(const Var& a) {
  return a.tape->push(sfgp::reciprocal(a.value()), {a.id}, [](Tape& t, int self) {
    const DenseMatrix& r = t.value(self);
    t.accumulate(t.parent(self, 0), -t.adjoint_ref(self).cwiseProduct(r.cwiseProduct(r)));
  });
}

Var mm(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return t.push(sfgp::mm(a.value(), b.value()), {a.id, b.id}, [](Tape& t, int self) {
    const DenseMatrix& g = t.adjoint_ref(self);
    const int pa = t.parent(self, 0), pb = t.parent(self, 1);
    t.accumulate(pa, g * t.value(pb).transpose());
    t.accumulate(pb, t.value(pa).transpose() * g);
  });
}

Var tr(const Var& a) {
  return a.tape->push(a.value().transpose(), {a.id}, [](Tape& t, int self) {
    t.accumulate(t.parent(self, 0), t.adjoint_ref(self).transpose());
  });
}

Var sum(const Var& a) {
  return a.tape->push(sfgp::sum(a.value()), {a.id}, [](Tape& t, int self) {
    const int p = t.parent(self, 0);
    const DenseMatrix& v = t.value(p);
    t.accumulate(p, DenseMatrix::Constant(v.rows(), v.cols(), t.adjoint_ref(self)(0, 0)));
  });
}

Var colsum(const Var& a) {
  return a.tape->push(sfgp::colsum(a.value()), {a.id}, [](Tape& t, int self) {
    const int p = t.parent(self, 0);
    t.accumulate(p, t.adjoint_ref(self).replicate(t.value(p).rows(), 1));
  });
}

Var rep_rows(const Var& row, Eigen::Index n) {
  if (row.rows() != 1) throw DimensionMismatch("rep_rows: expected a row vector");
  return row.tape->push(sfgp::rep_rows(row.value(), n), {row.id}, [](Tape& t, int self) {
    t.accumulate(t.parent(self, 0), t.adjoint_ref(self).colwise().sum());
  });
}

Var rep_cols(const Var& col, Eigen::Index n) {
  if (col.cols() != 1) throw DimensionMismatch("rep_cols: expected a column vector");
  return col.tape->push(sfgp::rep_cols(col.value(), n), {col.id}, [](Tape& t, int self) {
    t.accumulate(t.parent(self, 0), t.adjoint_ref(self).rowwise().sum());
  });
}

Var symmetrize(const Var& a) {
  if (a.rows() != a.cols()) throw DimensionMismatch("symmetrize: matrix is not square");
  return a.tape->push(sfgp::symmetrize(a.value()), {a.id}, [](Tape& t, int self) {
    const DenseMatrix& g = t.adjoint_ref(self);
    t.accumulate(t.parent(self, 0), 0.5 * (g + g.transpose()));
  });
}

Var quad_inv(const Var& k, const Var& y) {
  Tape& t = tape_of(k, y);
  if (y.cols() != 1) throw DimensionMismatch("quad_inv: y must be a column vector");
  const CholeskyFactor f = cholesky_with_fallback(sfgp::symmetrize(k.value()));
  DenseMatrix alpha = solve(f, y.value());
  const double q = y.value().col(0).dot(alpha.col(0));
  return t.push(DenseMatrix::Constant(1, 1, q), {k.id, y.id},
                [alpha = std::move(alpha)](Tape& t, int self) {
                  const double g = t.adjoint_ref(self)(0, 0);
                  t.accumulate(t.parent(self, 0), -g * alpha * alpha.transpose());
                  t.accumulate(t.parent(self, 1), 2.0 * g * alpha);
                });
}

Var logdet_spd(const Var& k) {
  const CholeskyFactor f = cholesky_with_fallback(sfgp::symmetrize(k.value()));
  const double ld = logdet(f);
  return k.tape->push(DenseMatrix::Constant(1, 1, ld), {k.id}, [f](Tape& t, int self) {
    t.accumulate(t.parent(self, 0), t.adjoint_ref(self)(0, 0) * inverse(f));
  });
}

Var solve_spd(const Var& k, const Var& b) {
  Tape& t = tape_of(k, b);
  const CholeskyFactor f = cholesky_with_fallback(sfgp::symmetrize(k.value()));
  return t.push(solve(f, b.value()), {k.id, b.id}, [f](Tape& t, int self) {
    const DenseMatrix gb = solve(f, t.adjoint_ref(self));
    t.accumulate(t.parent(self, 0), -gb * t.value(self).transpose());
    t.accumulate(t.parent(self, 1), gb);
  });
}

GradCheckResult grad_check(const DifferentiableLoss& loss, const DenseVector& params, double step) {
  GradCheckResult out;
  out.analytic = loss(params).gradient;
  out.numeric = DenseVector::Zero(params.size());
  DenseVector p = params;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    p(i) = params(i) + step;
    const double fp = loss(p).value;
    p(i) = params(i) - step;
    const double fm = loss(p).value;
    p(i) = params(i);
    out.numeric(i) = (fp - fm) / (2.0 * step);
    const double a = out.analytic(i), n = out.numeric(i);
    const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-12});
    if (err > out.max_rel_error || out.worst_index < 0) {
      out.max_rel_error = std::max(out.max_rel_error, err);
      out.worst_index = i;
    }
  }
  return out;
}

}  // namespace sfgp
