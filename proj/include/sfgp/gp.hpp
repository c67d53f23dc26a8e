#ifndef SFGP_GP_HPP
#define SFGP_GP_HPP

#include <cstdint>
#include <functional>
#include <stdexcept>

#include "sfgp/autodiff.hpp"
#include "sfgp/kernels.hpp"

namespace sfgp {

class SchurNotPD : public std::runtime_error {
public:
  explicit SchurNotPD(const std::string& what) : std::runtime_error(what) {}
};

/// Measurements: points (4 x NM, mic-major then time) and pressures.
struct Dataset {
  DenseMatrix x;
  DenseVector y;

  Eigen::Index size() const { return y.size(); }
  void validate() const;
};

/// Pseudo-observations of the source term; targets are always zero.
struct CollocationSet {
  DenseMatrix x;  // 4 x n

  Eigen::Index size() const { return x.cols(); }
  DenseVector targets() const { return DenseVector::Zero(x.cols()); }
};

/// Axis-aligned spatial box times a time interval.
struct SpacetimeRegion {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Ones();
  double t0 = 0.0;
  double t1 = 1.0;

  static SpacetimeRegion cube(const Eigen::Vector3d& center, double side, double t0, double t1);
  bool contains(const Eigen::Vector4d& x) const;
};

/// Uniform samples over the region. The stream is a pure function of
/// (seed, counter).
CollocationSet sample_collocation(const SpacetimeRegion& region, Eigen::Index n, std::uint64_t seed,
                                  std::uint64_t counter);

/// Deep-kernel GP: feature map, SE hyperparameters and noise levels.
///
/// Flat parameter order: network weights (layer order, row-major, bias
/// after each hidden weight matrix), log ell, log sigma_kappa, then log sigma
/// and log sigma_z when the noise levels are trainable. The output-layer bias
/// shifts every feature equally, leaves the kernel unchanged, and is not
/// part of the trainable vector.
struct DeepKernelModel {
  FeatureMap fm;
  KernelHyper hyper;
  double log_sigma = std::log(1e-2);
  double log_sigma_z = std::log(1e-2);
  WaveOperatorSpec op;
  bool train_noise = false;

  double sigma() const { return std::exp(log_sigma); }
  double sigma_z() const { return std::exp(log_sigma_z); }

  Eigen::Index num_params() const;
  DenseVector flatten() const;
  void unflatten(const DenseVector& flat);
};

/// Negative log marginal likelihood, constant dropped:
/// y^T (K + s^2 I)^{-1} y + log|K + s^2 I|.
double nll_simple(const DeepKernelModel& model, const Dataset& data);

/// Joint (u, z) objective with zero source targets, evaluated through the
/// two Schur complements. Equals nll_simple when the collocation set is empty.
double nll_joint_schur(const DeepKernelModel& model, const Dataset& data,
                       const CollocationSet& colloc);

/// Objective value and gradient over DeepKernelModel::flatten(). With an
/// empty collocation set this is the nll_simple objective.
ValueAndGradient objective_with_gradient(const DeepKernelModel& model, const Dataset& data,
                                         const CollocationSet& colloc);

using GramFn = std::function<DenseMatrix(const DenseMatrix&, const DenseMatrix&)>;

/// K(xhat, X) (K(X, X) + sigma^2 I)^{-1} y.
DenseVector posterior_mean(const GramFn& kernel, double sigma, const Dataset& data,
                           const DenseMatrix& xhat);
/// K(xhat, xhat) - K(xhat, X) (K(X, X) + sigma^2 I)^{-1} K(X, xhat).
DenseMatrix posterior_cov(const GramFn& kernel, double sigma, const Dataset& data,
                          const DenseMatrix& xhat);

DenseVector posterior_mean(const DeepKernelModel& model, const Dataset& data, const DenseMatrix& xhat);
DenseMatrix posterior_cov(const DeepKernelModel& model, const Dataset& data, const DenseMatrix& xhat);

/// Gram function of the deep kernel (features recomputed per call).
GramFn deep_gram(const DeepKernelModel& model);

namespace detail {

inline DenseMatrix eye(const DenseMatrix&, Eigen::Index n) { return DenseMatrix::Identity(n, n); }
inline Var eye(const Var& like, Eigen::Index n) { return like.tape->constant(DenseMatrix::Identity(n, n)); }

}  // namespace detail

/// Hyperparameters in the value type of the evaluation path.
template <class V>
struct ObjectiveInputs {
  V features;          // h x N at measurement points
  JetBundle<V> colloc; // jets at collocation points (unused if empty)
  V s2, beta, noise_u, noise_z;  // 1x1: sigma_kappa^2, 1/ell^2, sigma^2, sigma_z^2
  V y;
  bool has_colloc = false;
};

/// Shared objective body for both evaluation paths.
template <class V>
V joint_objective(const ObjectiveInputs<V>& in, const std::array<double, 4>& w) {
  const Eigen::Index n = in.features.cols();
  V kuu = add(gram_uu(in.features, in.features, in.s2, in.beta, true),
              mul(in.noise_u, detail::eye(in.features, n)));
  if (!in.has_colloc) {
    return add(quad_inv(kuu, in.y), logdet_spd(kuu));
  }
  const Eigen::Index m = in.colloc.value.cols();
  V kuz = gram_uz(in.features, in.colloc, in.s2, in.beta, w);
  V kzu = tr(kuz);
  V kzz = add(gram_zz(in.colloc, in.s2, in.beta, w), mul(in.noise_z, detail::eye(in.features, m)));
  try {
    V su = symmetrize(sub(kuu, mm(kuz, solve_spd(kzz, kzu))));
    V sz = symmetrize(sub(kzz, mm(kzu, solve_spd(kuu, kuz))));
    return add(add(quad_inv(su, in.y), logdet_spd(kuu)), logdet_spd(sz));
  } catch (const NotPositiveDefinite& e) {
    throw SchurNotPD(std::string("joint objective: ") + e.what());
  }
}

}  // namespace sfgp

#endif  // SFGP_GP_HPP
