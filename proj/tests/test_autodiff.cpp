#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <numbers>

#include "sfgp/autodiff.hpp"
#include "sfgp/featurenet.hpp"
#include "test_util.hpp"

using namespace sfgp;
using namespace sfgp::testing;

namespace {

void check_jet(const Jet2<double>& j, double v, double d1, double d2, double tol = 1e-15) {
  CHECK(j.v == doctest::Approx(v).epsilon(tol));
  CHECK(std::abs(j.d1 - d1) <= tol);
  CHECK(std::abs(j.d2 - d2) <= tol);
}

}  // namespace

TEST_CASE("jets: truncated Taylor rules") {
  check_jet(sin(Jet2<double>{0.0, 1.0, 0.0}), 0.0, 1.0, 0.0);
  check_jet(Jet2<double>{2.0, 1.0, 0.0} * Jet2<double>{3.0, 0.0, 0.0}, 6.0, 3.0, 0.0);
  check_jet(sin(Jet2<double>{std::numbers::pi / 2, 1.0, 0.0}), 1.0, 0.0, -1.0);
}

TEST_CASE("jets: composition equals the expanded expression") {
  // exp(2 log a) versus a * a, and 1/(1/a) versus a
  const Jet2<double> a{1.7, -0.4, 0.9};
  const Jet2<double> lhs = exp(scale(log(a), 2.0));
  const Jet2<double> rhs = a * a;
  CHECK(std::abs(lhs.v - rhs.v) < 1e-12 * std::abs(rhs.v));
  CHECK(std::abs(lhs.d1 - rhs.d1) < 1e-12 * std::abs(rhs.d1));
  CHECK(std::abs(lhs.d2 - rhs.d2) < 1e-12 * std::abs(rhs.d2));
  const Jet2<double> back = reciprocal(reciprocal(a));
  CHECK(std::abs(back.d2 - a.d2) < 1e-12);

  // sin^2 + cos^2 = 1 carries zero derivatives
  const Jet2<double> one = sin(a) * sin(a) + cos(a) * cos(a);
  CHECK(std::abs(one.v - 1.0) < 1e-15);
  CHECK(std::abs(one.d1) < 1e-15);
  CHECK(std::abs(one.d2) < 1e-14);
}

TEST_CASE("jets agree with a hand derivative of a composite") {
  // f(x) = exp(sin(3x)) at x = 0.2 along dx = 1
  const double x = 0.2;
  const Jet2<double> j = exp(sin(scale(Jet2<double>{x, 1.0, 0.0}, 3.0)));
  const double s = std::sin(3 * x), c = std::cos(3 * x), e = std::exp(s);
  CHECK(j.d1 == doctest::Approx(3 * c * e).epsilon(1e-14));
  CHECK(j.d2 == doctest::Approx(e * (9 * c * c - 9 * s)).epsilon(1e-14));
}

TEST_CASE("backward: scalar rules") {
  Tape t;
  const Var p = t.variable(3.0);
  const Var out = mul(p, p);
  t.backward(out);
  CHECK(t.adjoint(p)(0, 0) == 6.0);

  Tape t2;
  const Var q = t2.variable(0.0);
  t2.backward(sin(q));
  CHECK(t2.adjoint(q)(0, 0) == 1.0);
}

TEST_CASE("backward: unreferenced parameters get exactly zero") {
  Tape t;
  const Var a = t.variable(2.0);
  const Var unused = t.variable(DenseMatrix::Ones(2, 3));
  t.backward(exp(a));
  CHECK(t.adjoint(unused) == DenseMatrix::Zero(2, 3));
}

TEST_CASE("backward: linearity over a combined tape") {
  std::mt19937_64 rng(1);
  const DenseMatrix w0 = random_matrix(3, 3, rng);
  auto f = [](const Var& w) { return sum(sin(mm(w, w))); };
  auto g = [](const Var& w) { return sum(exp(scale(w, 0.3))); };

  Tape tf;
  const Var wf = tf.variable(w0);
  tf.backward(f(wf));
  Tape tg;
  const Var wg = tg.variable(w0);
  tg.backward(g(wg));
  Tape th;
  const Var wh = th.variable(w0);
  th.backward(add(scale(f(wh), 2.5), scale(g(wh), -0.75)));

  const DenseMatrix expected = 2.5 * tf.adjoint(wf) - 0.75 * tg.adjoint(wg);
  const DenseMatrix got = th.adjoint(wh);
  CHECK((got - expected).cwiseAbs().maxCoeff() <= 1e-12 * expected.cwiseAbs().maxCoeff());
}

TEST_CASE("backward: a node reading a later node is rejected") {
  Tape t;
  const Var a = t.variable(1.0);
  const Var b = t.push(DenseMatrix::Constant(1, 1, 2.0), {a.id + 5}, [](Tape&, int) {});
  CHECK_THROWS_AS(t.backward(b), CycleDetected);
  CHECK_THROWS(t.backward(t.variable(DenseMatrix::Ones(2, 2))));
}

TEST_CASE("backward: SPD primitives against finite differences") {
  std::mt19937_64 rng(2);
  const DenseMatrix k0 = random_spd(5, rng);
  const DenseMatrix y = random_matrix(5, 1, rng);
  const DenseMatrix b = random_matrix(5, 2, rng);
  // loss(K) = y^T K^{-1} y + log|K| + sum(K^{-1} B)
  const DifferentiableLoss loss = [&](const DenseVector& p) {
    Tape t;
    const Var k = t.variable(DenseMatrix(p.reshaped(5, 5)));
    const Var ks = symmetrize(k);
    const Var out = add(add(quad_inv(ks, t.constant(y)), logdet_spd(ks)), sum(solve_spd(ks, t.constant(b))));
    t.backward(out);
    return ValueAndGradient{out.scalar(), t.adjoint(k).reshaped()};
  };
  const GradCheckResult r = grad_check(loss, k0.reshaped(), 1e-6);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("grad_check: quadratic loss") {
  DenseMatrix a(3, 3);
  a << 3, 1, 0, 1, 2, 0.5, 0, 0.5, 1;
  const DifferentiableLoss loss = [&](const DenseVector& p) {
    return ValueAndGradient{0.5 * p.dot(a * p), a * p};
  };
  DenseVector p0(3);
  p0 << 0.3, -1.2, 2.0;
  CHECK(grad_check(loss, p0, 1e-4).max_rel_error < 1e-9);
}

TEST_CASE("grad_check: SIREN-only regression loss") {
  std::mt19937_64 rng(3);
  const FeatureMap fm = small_feature_map(4, 3, 8, 2);
  const DenseMatrix x = random_points(12, rng);
  const DenseMatrix target = random_matrix(2, 12, rng);
  const DifferentiableLoss loss = [&](const DenseVector& p) {
    SirenParams params = fm.params;
    params.unflatten(p);
    Tape t;
    const SirenWeights<Var> w = record_weights(t, params);
    const Var r = sub(siren_record(fm.config, w, t, x), t.constant(target));
    const Var out = scale(sum(mul(r, r)), 0.5);
    t.backward(out);
    SirenParams g = params;
    for (size_t l = 0; l < w.weights.size(); ++l) {
      g.weights[l] = t.adjoint(w.weights[l]);
      g.biases[l] = t.adjoint(w.biases[l]);
    }
    return ValueAndGradient{out.scalar(), g.flatten()};
  };
  const GradCheckResult r = grad_check(loss, fm.params.flatten(), 1e-6);
  INFO("worst " << r.worst_index << " analytic " << r.analytic(r.worst_index) << " numeric "
                << r.numeric(r.worst_index));
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("input-derivative losses differentiate through jets") {
  // Parameter gradient of sum(d2 channel) of the network, a forward-over-reverse quantity.
  std::mt19937_64 rng(5);
  const FeatureMap fm = small_feature_map(6, 2, 6, 3);
  const DenseMatrix x = random_points(5, rng);
  const DifferentiableLoss loss = [&](const DenseVector& p) {
    SirenParams params = fm.params;
    params.unflatten(p);
    Tape t;
    const SirenWeights<Var> w = record_weights(t, params);
    const JetBundle<Var> j = siren_record_jets(fm.config, w, t, x);
    const Var out = add(sum(mul(j.d2[0], j.d2[3])), sum(mul(j.d1[1], j.d1[1])));
    t.backward(out);
    SirenParams g = params;
    for (size_t l = 0; l < w.weights.size(); ++l) {
      g.weights[l] = t.adjoint(w.weights[l]);
      g.biases[l] = t.adjoint(w.biases[l]);
    }
    return ValueAndGradient{out.scalar(), g.flatten()};
  };
  DenseVector p0 = fm.params.flatten();
  // The output bias does not enter any derivative channel; drop it from the check.
  const Eigen::Index n = fm.params.size(false);
  const DifferentiableLoss head = [&](const DenseVector& p) {
    DenseVector full = p0;
    full.head(n) = p;
    ValueAndGradient vg = loss(full);
    CHECK(vg.gradient.tail(p0.size() - n).cwiseAbs().maxCoeff() == 0.0);
    vg.gradient = vg.gradient.head(n).eval();
    return vg;
  };
  const GradCheckResult r = grad_check(head, p0.head(n), 1e-6);
  INFO("worst " << r.worst_index);
  CHECK(r.max_rel_error < 1e-5);
}
