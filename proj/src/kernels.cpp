#include "sfgp/kernels.hpp"

#include <complex>

namespace sfgp {

SeDerivatives se_feature_derivs(const DenseVector& u, const DenseVector& v, const KernelHyper& hyper,
                                int order) {
  if (u.size() != v.size()) throw DimensionMismatch("se_feature_derivs: u and v differ in length");
  if (order < 0 || order > 4) throw std::invalid_argument("se_feature_derivs: order must be 0..4");

  SeDerivatives out;
  const int n = static_cast<int>(u.size());
  out.dim = n;
  out.order = order;
  const double beta = hyper.beta();
  const DenseVector d = u - v;
  const double k = hyper.variance() * std::exp(-0.5 * beta * d.squaredNorm());
  out.value = k;
  if (order < 1) return out;

  const DenseVector q = beta * d;
  out.grad = -k * q;
  if (order < 2) return out;

  out.hess = k * (q * q.transpose() - beta * DenseMatrix::Identity(n, n));
  if (order < 3) return out;

  auto delta = [](int a, int b) { return a == b ? 1.0 : 0.0; };
  out.third.resize(static_cast<size_t>(n) * n * n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      for (int c = 0; c < n; ++c) {
        const double poly = -q(a) * q(b) * q(c) +
                            beta * (delta(a, b) * q(c) + delta(a, c) * q(b) + delta(b, c) * q(a));
        out.third[static_cast<size_t>((a * n + b) * n + c)] = k * poly;
      }
    }
  }
  if (order < 4) return out;

  out.fourth.resize(static_cast<size_t>(n) * n * n * n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      for (int c = 0; c < n; ++c) {
        for (int e = 0; e < n; ++e) {
          const double pairs = delta(a, b) * q(c) * q(e) + delta(a, c) * q(b) * q(e) +
                               delta(a, e) * q(b) * q(c) + delta(b, c) * q(a) * q(e) +
                               delta(b, e) * q(a) * q(c) + delta(c, e) * q(a) * q(b);
          const double matchings =
              delta(a, b) * delta(c, e) + delta(a, c) * delta(b, e) + delta(a, e) * delta(b, c);
          const double poly = q(a) * q(b) * q(c) * q(e) - beta * pairs + beta * beta * matchings;
          out.fourth[static_cast<size_t>(((a * n + b) * n + c) * n + e)] = k * poly;
        }
      }
    }
  }
  return out;
}

namespace {

DenseMatrix scalar(double v) { return DenseMatrix::Constant(1, 1, v); }

}  // namespace

double deep_kernel(const FeatureMap& fm, const KernelHyper& hyper, const SpacetimePoint& xi,
                   const SpacetimePoint& xj) {
  const DenseVector u = forward(fm.config, fm.params, xi);
  const DenseVector v = forward(fm.config, fm.params, xj);
  return hyper.variance() * std::exp(-0.5 * hyper.beta() * (u - v).squaredNorm());
}

double wave_cross(const FeatureMap& fm, const KernelHyper& hyper, const WaveOperatorSpec& op,
                  const SpacetimePoint& x, const SpacetimePoint& xp) {
  const DenseMatrix f = siren_forward(fm.config, fm.params, to_matrix({x}));
  const auto c = siren_forward_jets(fm.config, fm.params, to_matrix({xp}));
  return gram_uz<DenseMatrix>(f, c, scalar(hyper.variance()), scalar(hyper.beta()), op.weights())(0, 0);
}

double wave_double(const FeatureMap& fm, const KernelHyper& hyper, const WaveOperatorSpec& op,
                   const SpacetimePoint& x, const SpacetimePoint& xp) {
  const auto c = siren_forward_jets(fm.config, fm.params, to_matrix({x, xp}));
  const DenseMatrix k =
      gram_zz<DenseMatrix>(c, scalar(hyper.variance()), scalar(hyper.beta()), op.weights());
  return k(0, 1);
}

DenseMatrix JointGram::full() const {
  const Eigen::Index n = kuu.rows(), m = kzz.rows();
  DenseMatrix out(n + m, n + m);
  out.topLeftCorner(n, n) = kuu;
  if (m > 0) {
    out.topRightCorner(n, m) = kuz;
    out.bottomLeftCorner(m, n) = kzu;
    out.bottomRightCorner(m, m) = kzz;
  }
  return out;
}

JointGram assemble_joint(const FeatureMap& fm, const KernelHyper& hyper, const WaveOperatorSpec& op,
                         const DenseMatrix& x, const DenseMatrix& xz, double sigma, double sigma_z) {
  if (x.cols() == 0) throw DegenerateGrid("assemble_joint: empty measurement grid");
  const DenseMatrix s2 = scalar(hyper.variance());
  const DenseMatrix beta = scalar(hyper.beta());
  const DenseMatrix f = siren_forward(fm.config, fm.params, x);

  JointGram g;
  g.kuu = gram_uu<DenseMatrix>(f, f, s2, beta, true);
  g.kuu.diagonal().array() += sigma * sigma;
  try {
    cholesky_with_fallback(g.kuu);
  } catch (const NotPositiveDefinite& e) {
    throw DegenerateGrid(std::string("assemble_joint: measurement block singular: ") + e.what());
  }

  if (xz.cols() == 0) {
    g.kuz = DenseMatrix(x.cols(), 0);
    g.kzu = DenseMatrix(0, x.cols());
    g.kzz = DenseMatrix(0, 0);
    return g;
  }
  const auto c = siren_forward_jets(fm.config, fm.params, xz);
  g.kuz = gram_uz<DenseMatrix>(f, c, s2, beta, op.weights());
  g.kzu = g.kuz.transpose();
  g.kzz = gram_zz<DenseMatrix>(c, s2, beta, op.weights());
  g.kzz.diagonal().array() += sigma_z * sigma_z;
  return g;
}

DiffuseKernel::DiffuseKernel(std::vector<double> freqs, double c, double variance)
    : freqs_(std::move(freqs)), c_(c), variance_(variance) {
  if (freqs_.empty()) throw std::invalid_argument("DiffuseKernel: empty frequency grid");
  for (double f : freqs_) {
    if (!(f > 0.0)) throw std::invalid_argument("DiffuseKernel: frequencies must be > 0");
  }
  if (!(c_ > 0.0)) throw std::invalid_argument("DiffuseKernel: c must be > 0");
  uniform_ = true;
  if (freqs_.size() > 2) {
    const double step = freqs_[1] - freqs_[0];
    for (size_t m = 2; m < freqs_.size(); ++m) {
      if (std::abs((freqs_[m] - freqs_[m - 1]) - step) > 1e-9 * std::abs(step) + 1e-12) {
        uniform_ = false;
        break;
      }
    }
  }
}

std::vector<double> DiffuseKernel::linear_grid(double lo, double hi, int n) {
  if (n < 1 || !(lo > 0.0) || hi < lo) throw std::invalid_argument("linear_grid: bad range");
  std::vector<double> f(static_cast<size_t>(n));
  for (int m = 0; m < n; ++m) {
    f[static_cast<size_t>(m)] = (n == 1) ? lo : lo + (hi - lo) * m / (n - 1);
  }
  return f;
}

double DiffuseKernel::average(double dist, double lag) const {
  const double k = 2.0 * M_PI * dist / c_;
  const double w = 2.0 * M_PI * lag;
  const size_t n = freqs_.size();
  double acc = 0.0;
  if (!uniform_ || n < 3) {
    for (double f : freqs_) {
      const double a = k * f;
      const double sinc = (std::abs(a) < 1e-12) ? 1.0 : std::sin(a) / a;
      acc += sinc * std::cos(w * f);
    }
    return acc / static_cast<double>(n);
  }
  // Equally spaced grid: advance sin(k f) and cos(w f) by complex rotation,
  // re-anchoring periodically to bound the accumulated phase error.
  const double df = freqs_[1] - freqs_[0];
  const std::complex<double> rk(std::cos(k * df), std::sin(k * df));
  const std::complex<double> rw(std::cos(w * df), std::sin(w * df));
  std::complex<double> zk, zw;
  for (size_t m = 0; m < n; ++m) {
    const double f = freqs_[m];
    if (m % 64 == 0) {
      zk = {std::cos(k * f), std::sin(k * f)};
      zw = {std::cos(w * f), std::sin(w * f)};
    } else {
      zk *= rk;
      zw *= rw;
    }
    const double a = k * f;
    const double sinc = (std::abs(a) < 1e-12) ? 1.0 : zk.imag() / a;
    acc += sinc * zw.real();
  }
  return acc / static_cast<double>(n);
}

double DiffuseKernel::eval(const Eigen::Vector4d& x, const Eigen::Vector4d& xp) const {
  const double dist = (x.head<3>() - xp.head<3>()).norm();
  return variance_ * average(dist, x(3) - xp(3));
}

double DiffuseKernel::operator()(const SpacetimePoint& x, const SpacetimePoint& xp) const {
  return variance_ * average((x.r - xp.r).norm(), x.t - xp.t);
}

DenseMatrix DiffuseKernel::gram(const DenseMatrix& x1, const DenseMatrix& x2) const {
  if (x1.rows() != 4 || x2.rows() != 4) throw DimensionMismatch("DiffuseKernel::gram: expected 4 x P");
  DenseMatrix k(x1.cols(), x2.cols());
  for (Eigen::Index j = 0; j < x2.cols(); ++j) {
    for (Eigen::Index i = 0; i < x1.cols(); ++i) {
      k(i, j) = eval(x1.col(i), x2.col(j));
    }
  }
  return k;
}

double diffuse_kernel(const SpacetimePoint& x, const SpacetimePoint& xp,
                      const std::vector<double>& freqs, double c) {
  return DiffuseKernel(freqs, c)(x, xp);
}

}  // namespace sfgp
