#ifndef SFGP_LINALG_HPP
#define SFGP_LINALG_HPP

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace sfgp {

using DenseMatrix = Eigen::MatrixXd;
using DenseVector = Eigen::VectorXd;

class NotPositiveDefinite : public std::runtime_error {
public:
  explicit NotPositiveDefinite(const std::string& what) : std::runtime_error(what) {}
};

class DimensionMismatch : public std::runtime_error {
public:
  explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

// Lower Cholesky factor of (A + jitter*I).
class CholeskyFactor {
public:
  CholeskyFactor() = default;
  CholeskyFactor(DenseMatrix lower, double jitter) : lower_(std::move(lower)), jitter_(jitter) {}

  const DenseMatrix& lower() const { return lower_; }
  Eigen::Index dim() const { return lower_.rows(); }
  double jitter() const { return jitter_; }

  // A + jitter*I rebuilt from the factor.
  DenseMatrix reconstruct() const { return lower_ * lower_.transpose(); }

private:
  DenseMatrix lower_;
  double jitter_ = 0.0;
};

/// Factor A + jitter*I. Throws NotPositiveDefinite when a pivot is not
/// strictly positive, DimensionMismatch when A is not square, and
/// std::invalid_argument when A is not symmetric to 1e-9 relative.
CholeskyFactor cholesky(const DenseMatrix& a, double jitter = 0.0);

/// Try jitter 0 first; on failure retry once with 1e-8 * mean(diag(A)).
CholeskyFactor cholesky_with_fallback(const DenseMatrix& a);

/// Default fallback jitter for a Gram matrix.
double default_jitter(const DenseMatrix& a);

DenseMatrix solve(const CholeskyFactor& f, const DenseMatrix& b);
DenseVector solve(const CholeskyFactor& f, const DenseVector& b);

/// log|A + jitter*I| = 2 * sum(log(diag(L))).
double logdet(const CholeskyFactor& f);

/// (A + jitter*I)^{-1}, symmetric.
DenseMatrix inverse(const CholeskyFactor& f);

/// max |A - A^T| / max(1, max |A|).
double asymmetry(const DenseMatrix& a);

/// Smallest eigenvalue of the symmetric part of A.
double min_eigenvalue(const DenseMatrix& a);

}  // namespace sfgp

#endif  // SFGP_LINALG_HPP
