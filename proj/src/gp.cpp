#include "sfgp/gp.hpp"

#include <random>

namespace sfgp {

void Dataset::validate() const {
  if (x.rows() != 4 || x.cols() != y.size()) {
    throw DimensionMismatch("Dataset: expected 4 x N points and N measurements");
  }
  if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("Dataset: non-finite value");
}

SpacetimeRegion SpacetimeRegion::cube(const Eigen::Vector3d& center, double side, double t0,
                                      double t1) {
  SpacetimeRegion r;
  r.lo = center.array() - 0.5 * side;
  r.hi = center.array() + 0.5 * side;
  r.t0 = t0;
  r.t1 = t1;
  return r;
}

bool SpacetimeRegion::contains(const Eigen::Vector4d& x) const {
  for (int i = 0; i < 3; ++i) {
    if (x(i) < lo(i) || x(i) > hi(i)) return false;
  }
  return x(3) >= t0 && x(3) <= t1;
}

CollocationSet sample_collocation(const SpacetimeRegion& region, Eigen::Index n, std::uint64_t seed,
                                  std::uint64_t counter) {
  if (n < 0) throw std::invalid_argument("sample_collocation: negative count");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32),
                    0xC011u};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CollocationSet c;
  c.x.resize(4, n);
  for (Eigen::Index p = 0; p < n; ++p) {
    for (int i = 0; i < 3; ++i) c.x(i, p) = region.lo(i) + (region.hi(i) - region.lo(i)) * u(rng);
    c.x(3, p) = region.t0 + (region.t1 - region.t0) * u(rng);
  }
  return c;
}

Eigen::Index DeepKernelModel::num_params() const {
  return fm.params.size(false) + 2 + (train_noise ? 2 : 0);
}

DenseVector DeepKernelModel::flatten() const {
  DenseVector flat(num_params());
  const Eigen::Index n = fm.params.size(false);
  flat.head(n) = fm.params.flatten(false);
  flat(n) = hyper.log_ell;
  flat(n + 1) = hyper.log_sigma_kappa;
  if (train_noise) {
    flat(n + 2) = log_sigma;
    flat(n + 3) = log_sigma_z;
  }
  return flat;
}

void DeepKernelModel::unflatten(const DenseVector& flat) {
  if (flat.size() != num_params()) throw DimensionMismatch("DeepKernelModel: flat size mismatch");
  const Eigen::Index n = fm.params.size(false);
  fm.params.unflatten(flat.head(n), false);
  hyper.log_ell = flat(n);
  hyper.log_sigma_kappa = flat(n + 1);
  if (train_noise) {
    log_sigma = flat(n + 2);
    log_sigma_z = flat(n + 3);
  }
}

namespace {

DenseMatrix scalar(double v) { return DenseMatrix::Constant(1, 1, v); }

double dense_objective(const DeepKernelModel& model, const Dataset& data, const CollocationSet* colloc) {
  data.validate();
  ObjectiveInputs<DenseMatrix> in;
  in.features = siren_forward(model.fm.config, model.fm.params, data.x);
  in.s2 = scalar(std::exp(2.0 * model.hyper.log_sigma_kappa));
  in.beta = scalar(std::exp(-2.0 * model.hyper.log_ell));
  in.noise_u = scalar(std::exp(2.0 * model.log_sigma));
  in.noise_z = scalar(std::exp(2.0 * model.log_sigma_z));
  in.y = data.y;
  if (colloc != nullptr && colloc->size() > 0) {
    in.colloc = siren_forward_jets(model.fm.config, model.fm.params, colloc->x);
    in.has_colloc = true;
  }
  return joint_objective(in, model.op.weights())(0, 0);
}

}  // namespace

double nll_simple(const DeepKernelModel& model, const Dataset& data) {
  return dense_objective(model, data, nullptr);
}

double nll_joint_schur(const DeepKernelModel& model, const Dataset& data,
                       const CollocationSet& colloc) {
  return dense_objective(model, data, &colloc);
}

ValueAndGradient objective_with_gradient(const DeepKernelModel& model, const Dataset& data,
                                         const CollocationSet& colloc) {
  data.validate();
  Tape tape;
  const SirenWeights<Var> w = record_weights(tape, model.fm.params);
  const Var log_ell = tape.variable(model.hyper.log_ell);
  const Var log_sk = tape.variable(model.hyper.log_sigma_kappa);
  const Var log_s = tape.variable(model.log_sigma);
  const Var log_sz = tape.variable(model.log_sigma_z);

  ObjectiveInputs<Var> in;
  in.features = siren_record(model.fm.config, w, tape, data.x);
  in.s2 = exp(scale(log_sk, 2.0));
  in.beta = exp(scale(log_ell, -2.0));
  in.noise_u = exp(scale(log_s, 2.0));
  in.noise_z = exp(scale(log_sz, 2.0));
  in.y = tape.constant(data.y);
  if (colloc.size() > 0) {
    in.colloc = siren_record_jets(model.fm.config, w, tape, colloc.x);
    in.has_colloc = true;
  }
  const Var loss = joint_objective(in, model.op.weights());
  tape.backward(loss);

  ValueAndGradient out;
  out.value = loss.scalar();
  out.gradient.resize(model.num_params());
  Eigen::Index k = 0;
  for (size_t l = 0; l < w.weights.size(); ++l) {
    const DenseMatrix gw = tape.adjoint(w.weights[l]);
    for (Eigen::Index i = 0; i < gw.rows(); ++i) {
      for (Eigen::Index j = 0; j < gw.cols(); ++j) out.gradient(k++) = gw(i, j);
    }
    if (l + 1 == w.weights.size()) break;
    const DenseMatrix gb = tape.adjoint(w.biases[l]);
    for (Eigen::Index i = 0; i < gb.rows(); ++i) out.gradient(k++) = gb(i, 0);
  }
  out.gradient(k++) = tape.adjoint(log_ell)(0, 0);
  out.gradient(k++) = tape.adjoint(log_sk)(0, 0);
  if (model.train_noise) {
    out.gradient(k++) = tape.adjoint(log_s)(0, 0);
    out.gradient(k++) = tape.adjoint(log_sz)(0, 0);
  }
  return out;
}

DenseVector posterior_mean(const GramFn& kernel, double sigma, const Dataset& data,
                           const DenseMatrix& xhat) {
  data.validate();
  DenseMatrix k = kernel(data.x, data.x);
  k.diagonal().array() += sigma * sigma;
  const CholeskyFactor f = cholesky_with_fallback(symmetrize(k));
  const DenseVector alpha = solve(f, data.y);
  return kernel(xhat, data.x) * alpha;
}

DenseMatrix posterior_cov(const GramFn& kernel, double sigma, const Dataset& data,
                          const DenseMatrix& xhat) {
  data.validate();
  DenseMatrix k = kernel(data.x, data.x);
  k.diagonal().array() += sigma * sigma;
  const CholeskyFactor f = cholesky_with_fallback(symmetrize(k));
  const DenseMatrix khx = kernel(xhat, data.x);
  // L^{-1} K(X, xhat): cov = Khh - V^T V.
  const DenseMatrix v = f.lower().triangularView<Eigen::Lower>().solve(khx.transpose());
  return symmetrize(kernel(xhat, xhat) - v.transpose() * v);
}

GramFn deep_gram(const DeepKernelModel& model) {
  return [model](const DenseMatrix& x1, const DenseMatrix& x2) {
    const DenseMatrix s2 = scalar(model.hyper.variance());
    const DenseMatrix beta = scalar(model.hyper.beta());
    const DenseMatrix f1 = siren_forward(model.fm.config, model.fm.params, x1);
    if (&x1 == &x2) return gram_uu<DenseMatrix>(f1, f1, s2, beta, true);
    const DenseMatrix f2 = siren_forward(model.fm.config, model.fm.params, x2);
    return gram_uu<DenseMatrix>(f1, f2, s2, beta, false);
  };
}

DenseVector posterior_mean(const DeepKernelModel& model, const Dataset& data, const DenseMatrix& xhat) {
  return posterior_mean(deep_gram(model), model.sigma(), data, xhat);
}

DenseMatrix posterior_cov(const DeepKernelModel& model, const Dataset& data, const DenseMatrix& xhat) {
  return posterior_cov(deep_gram(model), model.sigma(), data, xhat);
}

}  // namespace sfgp
