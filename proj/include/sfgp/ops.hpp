#ifndef SFGP_OPS_HPP
#define SFGP_OPS_HPP

// Elementwise and structural operations shared by the plain (double /
// DenseMatrix) evaluation path and the recorded (Var) path. Model code is
// written once against these names and instantiated for either value type.

#include <cmath>

#include "sfgp/linalg.hpp"

namespace sfgp {

// Scalars.
inline double add(double a, double b) { return a + b; }
inline double sub(double a, double b) { return a - b; }
inline double mul(double a, double b) { return a * b; }
inline double scale(double a, double s) { return a * s; }
inline double sin(double a) { return std::sin(a); }
inline double cos(double a) { return std::cos(a); }
inline double exp(double a) { return std::exp(a); }
inline double log(double a) { return std::log(a); }
inline double reciprocal(double a) { return 1.0 / a; }

namespace detail {
inline bool is_scalar(const DenseMatrix& m) { return m.rows() == 1 && m.cols() == 1; }

inline void check_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch(std::string(op) + ": shape " + std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()));
  }
}
}  // namespace detail

// Dense matrices. Binary elementwise ops broadcast a 1x1 operand.
inline DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
  if (detail::is_scalar(a) && !detail::is_scalar(b)) return (b.array() + a(0, 0)).matrix();
  if (detail::is_scalar(b) && !detail::is_scalar(a)) return (a.array() + b(0, 0)).matrix();
  detail::check_same_shape(a, b, "add");
  return a + b;
}

inline DenseMatrix sub(const DenseMatrix& a, const DenseMatrix& b) {
  if (detail::is_scalar(a) && !detail::is_scalar(b)) return (a(0, 0) - b.array()).matrix();
  if (detail::is_scalar(b) && !detail::is_scalar(a)) return (a.array() - b(0, 0)).matrix();
  detail::check_same_shape(a, b, "sub");
  return a - b;
}

inline DenseMatrix mul(const DenseMatrix& a, const DenseMatrix& b) {
  if (detail::is_scalar(a) && !detail::is_scalar(b)) return a(0, 0) * b;
  if (detail::is_scalar(b) && !detail::is_scalar(a)) return b(0, 0) * a;
  detail::check_same_shape(a, b, "mul");
  return a.cwiseProduct(b);
}

inline DenseMatrix scale(const DenseMatrix& a, double s) { return s * a; }
inline DenseMatrix sin(const DenseMatrix& a) { return a.array().sin().matrix(); }
inline DenseMatrix cos(const DenseMatrix& a) { return a.array().cos().matrix(); }
inline DenseMatrix exp(const DenseMatrix& a) { return a.array().exp().matrix(); }
inline DenseMatrix log(const DenseMatrix& a) { return a.array().log().matrix(); }
inline DenseMatrix reciprocal(const DenseMatrix& a) { return a.array().inverse().matrix(); }

inline DenseMatrix mm(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) throw DimensionMismatch("mm: inner dimensions differ");
  return a * b;
}
inline DenseMatrix tr(const DenseMatrix& a) { return a.transpose(); }
inline DenseMatrix sum(const DenseMatrix& a) { return DenseMatrix::Constant(1, 1, a.sum()); }
inline DenseMatrix colsum(const DenseMatrix& a) { return a.colwise().sum(); }
inline DenseMatrix rep_rows(const DenseMatrix& row, Eigen::Index n) { return row.replicate(n, 1); }
inline DenseMatrix rep_cols(const DenseMatrix& col, Eigen::Index n) { return col.replicate(1, n); }
inline DenseMatrix symmetrize(const DenseMatrix& a) { return 0.5 * (a + a.transpose()); }

// SPD primitives, mirrored by the recorded versions in autodiff.hpp.
inline DenseMatrix quad_inv(const DenseMatrix& k, const DenseMatrix& y) {
  const CholeskyFactor f = cholesky_with_fallback(symmetrize(k));
  return DenseMatrix::Constant(1, 1, y.col(0).dot(solve(f, y).col(0)));
}
inline DenseMatrix logdet_spd(const DenseMatrix& k) {
  return DenseMatrix::Constant(1, 1, logdet(cholesky_with_fallback(symmetrize(k))));
}
inline DenseMatrix solve_spd(const DenseMatrix& k, const DenseMatrix& b) {
  return solve(cholesky_with_fallback(symmetrize(k)), b);
}

}  // namespace sfgp

#endif  // SFGP_OPS_HPP
