#ifndef SFGP_KERNELS_HPP
#define SFGP_KERNELS_HPP

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sfgp/autodiff.hpp"
#include "sfgp/featurenet.hpp"
#include "sfgp/linalg.hpp"

namespace sfgp {

class DegenerateGrid : public std::runtime_error {
public:
  explicit DegenerateGrid(const std::string& what) : std::runtime_error(what) {}
};

/// Squared-exponential signal scale and length-scale, stored as logs.
class KernelHyper {
public:
  KernelHyper() = default;
  KernelHyper(double sigma_kappa, double ell) {
    if (!(sigma_kappa > 0.0) || !(ell > 0.0)) {
      throw std::invalid_argument("KernelHyper: sigma_kappa and ell must be > 0");
    }
    log_sigma_kappa = std::log(sigma_kappa);
    log_ell = std::log(ell);
  }

  double sigma_kappa() const { return std::exp(log_sigma_kappa); }
  double ell() const { return std::exp(log_ell); }
  /// 1 / ell^2
  double beta() const { return std::exp(-2.0 * log_ell); }
  double variance() const { return std::exp(2.0 * log_sigma_kappa); }

  double log_sigma_kappa = 0.0;
  double log_ell = 0.0;
};

/// L = sum_i w_i d^2/dx_i^2 with w = (1, 1, 1, -1/c^2).
struct WaveOperatorSpec {
  double c = 343.0;

  std::array<double, 4> weights() const { return {1.0, 1.0, 1.0, -1.0 / (c * c)}; }
};

/// The SIREN feature map as used by the deep kernel.
struct FeatureMap {
  SirenConfig config;
  SirenParams params;
};

/// Derivatives of k(u, v) = s^2 exp(-|d|^2 / (2 ell^2)) with respect to
/// d = u - v. Tensors of order 3 and 4 are dense, row-major over indices.
struct SeDerivatives {
  int dim = 0;
  int order = 0;
  double value = 0.0;
  DenseVector grad;
  DenseMatrix hess;
  std::vector<double> third;
  std::vector<double> fourth;

  double d3(int a, int b, int c) const { return third[static_cast<size_t>((a * dim + b) * dim + c)]; }
  double d4(int a, int b, int c, int e) const {
    return fourth[static_cast<size_t>(((a * dim + b) * dim + c) * dim + e)];
  }
};

SeDerivatives se_feature_derivs(const DenseVector& u, const DenseVector& v, const KernelHyper& hyper,
                                int order);

/// kappa_u(phi(x_i), phi(x_j)).
double deep_kernel(const FeatureMap& fm, const KernelHyper& hyper, const SpacetimePoint& xi,
                   const SpacetimePoint& xj);

/// L applied to the second argument of the deep kernel.
double wave_cross(const FeatureMap& fm, const KernelHyper& hyper, const WaveOperatorSpec& op,
                  const SpacetimePoint& x, const SpacetimePoint& xp);

/// L_x L_x' applied to the deep kernel.
double wave_double(const FeatureMap& fm, const KernelHyper& hyper, const WaveOperatorSpec& op,
                   const SpacetimePoint& x, const SpacetimePoint& xp);

namespace detail {

inline DenseMatrix constant_like(const DenseMatrix&, DenseMatrix m) { return m; }
inline Var constant_like(const Var& like, DenseMatrix m) { return like.tape->constant(std::move(m)); }

}  // namespace detail

// Batched Gram blocks, templated on the evaluation path. Feature matrices
// hold one point per column; s2 and beta are 1x1 values (sigma_kappa^2 and
// 1/ell^2).

/// Squared feature distances between the columns of f1 and f2.
template <class V>
V sq_distances(const V& f1, const V& f2) {
  const Eigen::Index n1 = f1.cols(), n2 = f2.cols();
  V n1v = colsum(mul(f1, f1));
  V n2v = colsum(mul(f2, f2));
  return sub(add(rep_cols(tr(n1v), n2), rep_rows(n2v, n1)), scale(mm(tr(f1), f2), 2.0));
}

/// k(phi_i, phi_j) for all pairs. With `same_set` the diagonal distance is
/// pinned to zero and the result symmetrized.
template <class V>
V gram_uu(const V& f1, const V& f2, const V& s2, const V& beta, bool same_set) {
  V d2 = sq_distances(f1, f2);
  if (same_set) {
    DenseMatrix off = DenseMatrix::Ones(f1.cols(), f1.cols());
    off.diagonal().setZero();
    d2 = symmetrize(mul(d2, detail::constant_like(d2, std::move(off))));
  }
  return mul(s2, exp(scale(mul(beta, d2), -0.5)));
}

/// [K]_{ij} = L_{x'_j} k(x_i, x'_j): measurement features f against
/// collocation jets c.
template <class V>
V gram_uz(const V& f, const JetBundle<V>& c, const V& s2, const V& beta,
          const std::array<double, 4>& w) {
  const Eigen::Index n = f.cols();
  V k = gram_uu(f, c.value, s2, beta, false);
  V beta2 = mul(beta, beta);
  V acc;
  bool first = true;
  for (size_t j = 0; j < 4; ++j) {
    // a' = d . J'_j, s' = d . S'_j with d = phi_i - phi'_q
    V ap = sub(mm(tr(f), c.d1[j]), rep_rows(colsum(mul(c.value, c.d1[j])), n));
    V sp = sub(mm(tr(f), c.d2[j]), rep_rows(colsum(mul(c.value, c.d2[j])), n));
    V jj = rep_rows(colsum(mul(c.d1[j], c.d1[j])), n);
    V term = add(mul(beta2, mul(ap, ap)), mul(beta, sub(sp, jj)));
    term = scale(term, w[j]);
    acc = first ? term : add(acc, term);
    first = false;
  }
  return mul(k, acc);
}

/// [K]_{pq} = L_{x_p} L_{x_q} k(x_p, x_q) over one collocation set.
template <class V>
V gram_zz(const JetBundle<V>& c, const V& s2, const V& beta, const std::array<double, 4>& w) {
  const Eigen::Index m = c.value.cols();
  V k = gram_uu(c.value, c.value, s2, beta, true);
  V b2 = mul(beta, beta);
  V b3 = mul(b2, beta);
  V b4 = mul(b2, b2);

  std::array<V, 4> a, s, ap, sp, jj, jjp;
  for (size_t i = 0; i < 4; ++i) {
    V cj = colsum(mul(c.value, c.d1[i]));
    V cs = colsum(mul(c.value, c.d2[i]));
    V nj = colsum(mul(c.d1[i], c.d1[i]));
    // First-argument quantities vary along rows, second-argument along columns.
    a[i] = sub(rep_cols(tr(cj), m), mm(tr(c.d1[i]), c.value));
    s[i] = sub(rep_cols(tr(cs), m), mm(tr(c.d2[i]), c.value));
    ap[i] = sub(mm(tr(c.value), c.d1[i]), rep_rows(cj, m));
    sp[i] = sub(mm(tr(c.value), c.d2[i]), rep_rows(cs, m));
    jj[i] = rep_cols(tr(nj), m);
    jjp[i] = rep_rows(nj, m);
  }

  V acc;
  bool first = true;
  for (size_t i = 0; i < 4; ++i) {
    V a2 = mul(a[i], a[i]);
    for (size_t j = 0; j < 4; ++j) {
      V jjx = mm(tr(c.d1[i]), c.d1[j]);
      V jsx = mm(tr(c.d1[i]), c.d2[j]);
      V sjx = mm(tr(c.d2[i]), c.d1[j]);
      V ssx = mm(tr(c.d2[i]), c.d2[j]);
      V ap2 = mul(ap[j], ap[j]);
      V aap = mul(a[i], ap[j]);

      // D^4 along (J_i, J_i, J'_j, J'_j)
      V t4 = sub(mul(b4, mul(a2, ap2)),
                 mul(b3, add(add(mul(jj[i], ap2), scale(mul(jjx, aap), 4.0)), mul(jjp[j], a2))));
      t4 = add(t4, mul(b2, add(mul(jj[i], jjp[j]), scale(mul(jjx, jjx), 2.0))));
      // D^3 along (J_i, J_i, S'_j)
      V t3a = add(scale(mul(b3, mul(a2, sp[j])), -1.0),
                  mul(b2, add(mul(jj[i], sp[j]), scale(mul(jsx, a[i]), 2.0))));
      // D^3 along (S_i, J'_j, J'_j)
      V t3b = add(scale(mul(b3, mul(s[i], ap2)), -1.0),
                  mul(b2, add(scale(mul(sjx, ap[j]), 2.0), mul(jjp[j], s[i]))));
      // D^2 along (S_i, S'_j)
      V t2 = sub(mul(b2, mul(s[i], sp[j])), mul(beta, ssx));

      V term = scale(sub(add(sub(t4, t3a), t3b), t2), w[i] * w[j]);
      acc = first ? term : add(acc, term);
      first = false;
    }
  }
  return symmetrize(mul(k, acc));
}

/// Four blocks of the joint (u, z) covariance with noise on the diagonals.
struct JointGram {
  DenseMatrix kuu;
  DenseMatrix kuz;
  DenseMatrix kzu;
  DenseMatrix kzz;

  DenseMatrix full() const;
};

/// Throws DegenerateGrid when X is empty or Kuu + sigma^2 I cannot be
/// factorized even with fallback jitter.
JointGram assemble_joint(const FeatureMap& fm, const KernelHyper& hyper, const WaveOperatorSpec& op,
                         const DenseMatrix& x, const DenseMatrix& xz, double sigma, double sigma_z);

/// Time-domain diffuse-field kernel: the average over a frequency grid of
/// spatial sinc coherence times temporal cosine, scaled by `variance`.
class DiffuseKernel {
public:
  DiffuseKernel(std::vector<double> freqs, double c, double variance = 1.0);

  /// Grid of n equally spaced frequencies on [lo, hi].
  static std::vector<double> linear_grid(double lo, double hi, int n);

  double operator()(const SpacetimePoint& x, const SpacetimePoint& xp) const;
  double eval(const Eigen::Vector4d& x, const Eigen::Vector4d& xp) const;

  /// Gram between two point sets given as 4 x P matrices.
  DenseMatrix gram(const DenseMatrix& x1, const DenseMatrix& x2) const;

  const std::vector<double>& freqs() const { return freqs_; }
  double variance() const { return variance_; }

private:
  double average(double dist, double lag) const;

  std::vector<double> freqs_;
  double c_;
  double variance_;
  bool uniform_ = false;
};

/// Convenience wrapper kept for the single-pair API.
double diffuse_kernel(const SpacetimePoint& x, const SpacetimePoint& xp,
                      const std::vector<double>& freqs, double c);

}  // namespace sfgp

#endif  // SFGP_KERNELS_HPP
