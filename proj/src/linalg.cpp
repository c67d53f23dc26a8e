#include "sfgp/linalg.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace sfgp {

double asymmetry(const DenseMatrix& a) {
  if (a.rows() != a.cols()) {
    throw DimensionMismatch("asymmetry: matrix is not square");
  }
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() / scale;
}

CholeskyFactor cholesky(const DenseMatrix& a, double jitter) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw DimensionMismatch("cholesky: expected a nonempty square matrix, got " +
                            std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
  if (!a.allFinite()) {
    throw std::invalid_argument("cholesky: non-finite entry");
  }
  if (jitter < 0.0) {
    throw std::invalid_argument("cholesky: negative jitter");
  }
  if (asymmetry(a) > 1e-9) {
    throw std::invalid_argument("cholesky: matrix is not symmetric");
  }

  DenseMatrix shifted = a;
  shifted.diagonal().array() += jitter;
  Eigen::LLT<DenseMatrix> llt(shifted);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("cholesky: non-positive pivot (dim " + std::to_string(a.rows()) +
                              ", jitter " + std::to_string(jitter) + ")");
  }
  DenseMatrix lower = llt.matrixL();
  if ((lower.diagonal().array() <= 0.0).any() || !lower.allFinite()) {
    throw NotPositiveDefinite("cholesky: degenerate factor");
  }
  return CholeskyFactor(std::move(lower), jitter);
}

double default_jitter(const DenseMatrix& a) {
  const double mean_diag = a.diagonal().mean();
  return 1e-8 * (mean_diag > 0.0 ? mean_diag : 1.0);
}

CholeskyFactor cholesky_with_fallback(const DenseMatrix& a) {
  try {
    return cholesky(a, 0.0);
  } catch (const NotPositiveDefinite&) {
    return cholesky(a, default_jitter(a));
  }
}

DenseMatrix solve(const CholeskyFactor& f, const DenseMatrix& b) {
  if (b.rows() != f.dim()) {
    throw DimensionMismatch("solve: factor dim " + std::to_string(f.dim()) + " vs rhs rows " +
                            std::to_string(b.rows()));
  }
  const auto lower = f.lower().triangularView<Eigen::Lower>();
  DenseMatrix x = lower.solve(b);
  lower.transpose().solveInPlace(x);
  return x;
}

DenseVector solve(const CholeskyFactor& f, const DenseVector& b) {
  DenseMatrix x = solve(f, DenseMatrix(b));
  return x.col(0);
}

double logdet(const CholeskyFactor& f) {
  return 2.0 * f.lower().diagonal().array().log().sum();
}

DenseMatrix inverse(const CholeskyFactor& f) {
  DenseMatrix inv = solve(f, DenseMatrix(DenseMatrix::Identity(f.dim(), f.dim())));
  return 0.5 * (inv + inv.transpose());
}

double min_eigenvalue(const DenseMatrix& a) {
  const DenseMatrix sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(sym, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

}  // namespace sfgp
