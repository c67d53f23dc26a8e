#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <complex>
#include <numbers>
#include <sstream>
#include <unsupported/Eigen/FFT>

#include "sfgp/acoustics.hpp"

using namespace sfgp;

namespace {

// Periodogram power per FFT bin of a real signal.
std::vector<double> power_spectrum(const DenseVector& x) {
  Eigen::FFT<double> fft;
  std::vector<double> in(x.data(), x.data() + x.size());
  std::vector<std::complex<double>> out;
  fft.fwd(out, in);
  std::vector<double> p(out.size());
  for (size_t i = 0; i < out.size(); ++i) p[i] = std::norm(out[i]);
  return p;
}

// Fraction of power in |f| within [lo, hi].
double band_fraction(const DenseVector& x, double fs, double lo, double hi) {
  const auto p = power_spectrum(x);
  const double n = static_cast<double>(p.size());
  double in = 0.0, total = 0.0;
  for (size_t k = 0; k < p.size(); ++k) {
    const double f = std::min<double>(static_cast<double>(k), n - static_cast<double>(k)) * fs / n;
    total += p[k];
    if (f >= lo && f <= hi) in += p[k];
  }
  return in / total;
}

RoomScenario small_scenario() {
  RoomScenario s;
  s.mics = 6;
  s.train_batches = 3;
  s.eval_batches = 1;
  s.eval_points = 5;
  s.max_order = 8;
  s.seed = 3;
  return s;
}

}  // namespace

TEST_CASE("image_sources: direct path, first order, full absorption") {
  RoomScenario s;
  const Eigen::Vector3d mic(4.0, 3.0, 1.5);
  s.max_order = 0;
  auto im = image_sources(s, mic);
  REQUIRE(im.size() == 1);
  CHECK(im[0].position == s.source);
  CHECK(im[0].amplitude == doctest::Approx(1.0 / (4 * std::numbers::pi * (s.source - mic).norm())));

  s.max_order = 1;
  im = image_sources(s, mic);
  REQUIRE(im.size() == 7);
  std::vector<Eigen::Vector3d> expected;
  for (int a = 0; a < 3; ++a) {
    Eigen::Vector3d lo = s.source, hi = s.source;
    lo(a) = -s.source(a);
    hi(a) = 2 * s.room(a) - s.source(a);
    expected.push_back(lo);
    expected.push_back(hi);
  }
  const double beta = std::sqrt(1 - s.alpha);
  int first = 0;
  for (const auto& i : im) {
    if (i.order != 1) continue;
    ++first;
    bool found = false;
    for (const auto& e : expected) found = found || (i.position - e).norm() < 1e-12;
    CHECK(found);
    CHECK(i.amplitude == doctest::Approx(beta / (4 * std::numbers::pi * (i.position - mic).norm())));
  }
  CHECK(first == 6);

  s.alpha = 1.0;
  s.max_order = 4;
  for (const auto& i : image_sources(s, mic)) CHECK((i.order == 0) == (i.amplitude != 0.0));
}

TEST_CASE("add_fractional_impulse: matches the direct windowed sinc") {
  for (double delay : {40.0, 40.37, 55.5, 3.2, 119.99}) {
    DenseVector out = DenseVector::Zero(120);
    add_fractional_impulse(out, delay, 0.7);
    const auto center = static_cast<long>(std::llround(delay));
    double worst = 0.0;
    for (long n = 0; n < 120; ++n) {
      const double u = n - delay;
      double ref = 0.0;
      if (std::abs(n - center) <= 40) {
        const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * u / 41.0));
        const double sc = u == 0.0 ? 1.0 : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
        ref = 0.7 * w * sc;
      }
      worst = std::max(worst, std::abs(out(n) - ref));
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("render_rir: free-field delay and amplitude") {
  RoomScenario s;
  s.alpha = 1.0;
  s.max_order = 0;
  const Eigen::Vector3d mic = s.source + Eigen::Vector3d(3.43, 0.0, 0.0);
  const ImpulseResponse h = render_rir(s, mic);
  Eigen::Index peak;
  h.samples.cwiseAbs().maxCoeff(&peak);
  CHECK(peak == 30);
  CHECK(h.samples(30) == doctest::Approx(1.0 / (4 * std::numbers::pi * 3.43)).epsilon(1e-12));

  // Fractional delay: the band-limited impulse reproduces a sampled sinusoid delay.
  DenseVector a = DenseVector::Zero(200);
  add_fractional_impulse(a, 100.3, 1.0);
  double num = 0.0, den = 0.0;
  for (int n = 0; n < 200; ++n) {
    num += n * a(n);
    den += a(n);
  }
  CHECK(num / den == doctest::Approx(100.3).epsilon(1e-3));
}

TEST_CASE("render_rir: reverberation time of the reference room") {
  RoomScenario s;
  const ImpulseResponse h = render_rir(s, s.array_center);
  const double t60 = schroeder_t60(h);
  INFO("T60 = " << t60);
  CHECK(t60 >= 0.14);
  CHECK(t60 <= 0.26);
  const DenseVector edc = schroeder_curve_db(h);
  for (Eigen::Index i = 1; i < edc.size(); ++i) CHECK(edc(i) <= edc(i - 1));
}

TEST_CASE("render_rir: order truncation has converged") {
  RoomScenario s;
  const Eigen::Vector3d mic(4.1, 2.9, 1.6);
  const double e26 = render_rir(s, mic).samples.squaredNorm();
  s.max_order = 52;
  const double e52 = render_rir(s, mic).samples.squaredNorm();
  CHECK(std::abs(e52 - e26) / e52 < 0.01);
}

TEST_CASE("render_rir: invariant to receiver order, rejects outside receivers") {
  const RoomScenario s = small_scenario();
  Eigen::Matrix3Xd p(3, 2);
  p.col(0) << 4.1, 3.0, 1.4;
  p.col(1) << 3.9, 2.8, 1.7;
  Eigen::Matrix3Xd q(3, 2);
  q.col(0) = p.col(1);
  q.col(1) = p.col(0);
  DenseVector src = synth_source(s, 400, 1);
  const DenseMatrix a = render_field(s, p, src, 100, 50);
  const DenseMatrix b = render_field(s, q, src, 100, 50);
  CHECK(a.row(0) == b.row(1));
  CHECK(a.row(1) == b.row(0));
  CHECK_THROWS_AS(render_rir(s, Eigen::Vector3d(7.0, 1.0, 1.0)), PlacementError);
}

TEST_CASE("synth_source: band occupancy and determinism") {
  const RoomScenario s;
  const DenseVector x = synth_source(s, 1 << 15, 7);
  CHECK(band_fraction(x, s.fs, 50.0, 1000.0) >= 0.95);
  const double out = band_fraction(x, s.fs, 1200.0, 1500.0);
  CHECK(10 * std::log10(out) <= -40.0);
  CHECK(x == synth_source(s, 1 << 15, 7));
  CHECK(x != synth_source(s, 1 << 15, 8));
}

TEST_CASE("bandpass_fir: symmetric and zero-phase filtering keeps alignment") {
  const DenseVector h = bandpass_fir(50, 1000, 3000, 257);
  for (int k = 0; k < 257; ++k) CHECK(h(k) == h(256 - k));
  DenseVector x(600);
  for (int n = 0; n < 600; ++n) x(n) = std::sin(2 * std::numbers::pi * 400.0 * n / 3000.0);
  const DenseVector y = filter_zero_phase(h, x);
  // Away from the edges a passband sinusoid passes unchanged and undelayed.
  CHECK((y.segment(200, 200) - x.segment(200, 200)).cwiseAbs().maxCoeff() < 1e-2);
  CHECK_THROWS_AS(bandpass_fir(50, 1000, 3000, 256), std::invalid_argument);
}

TEST_CASE("simulate: SNR, normalization, shapes, eval positions") {
  RoomScenario s = small_scenario();
  s.mics = 30;
  s.train_batches = 10;
  const Simulation sim = simulate(s);
  CHECK(sim.train.size() == 10);
  CHECK(sim.eval_inputs.size() == 1);
  CHECK(sim.eval_truth.size() == 1);
  CHECK(sim.eval_truth[0].rows() == 5);
  CHECK(sim.eval_truth[0].cols() == 50);
  CHECK(sim.train[0].x.cols() == 30 * 50);
  CHECK(std::abs(measured_snr_db(sim.clean_mics, sim.train) - 40.0) <= 0.5);

  double sq = 0.0, sum = 0.0, n = 0.0;
  for (const DenseMatrix& c : sim.clean_mics) {
    sq += c.squaredNorm();
    sum += c.sum();
    n += static_cast<double>(c.size());
  }
  CHECK(std::sqrt((sq - sum * sum / n) / (n - 1)) == doctest::Approx(1.0).epsilon(1e-10));

  const SpacetimeRegion r = s.array_region();
  for (Eigen::Index p = 0; p < sim.eval_positions.cols(); ++p) {
    Eigen::Vector4d x;
    x << sim.eval_positions.col(p), 0.0;
    CHECK(r.contains(x));
  }
  const DenseMatrix g = sim.eval_grid();
  CHECK(g.cols() == 5 * 50);
  CHECK(g(3, 49) == doctest::Approx(49 / 3000.0));
}

TEST_CASE("simulate: zero source gives pure noise at the configured floor") {
  const RoomScenario s = small_scenario();
  const Simulation sim = simulate(s, DenseVector::Zero(simulation_length(s)));
  CHECK(sim.scale == 1.0);
  CHECK(sim.noise_std == doctest::Approx(1e-2));
  for (const DenseMatrix& c : sim.clean_mics) CHECK(c.isZero(0.0));
  double sq = 0.0, n = 0.0;
  for (const Dataset& d : sim.train) {
    sq += d.y.squaredNorm();
    n += static_cast<double>(d.size());
  }
  CHECK(std::sqrt(sq / n) == doctest::Approx(1e-2).epsilon(0.1));
}

TEST_CASE("render_field is linear in the source") {
  const RoomScenario s = small_scenario();
  const Eigen::Matrix3Xd p = sample_in_cube(s.array_center, s.array_side, 4, 1, 9);
  const DenseVector a = synth_source(s, 600, 1), b = synth_source(s, 600, 2);
  const DenseMatrix fa = render_field(s, p, a, 300, 100);
  const DenseMatrix fb = render_field(s, p, b, 300, 100);
  const DenseMatrix fab = render_field(s, p, a + b, 300, 100);
  CHECK((fab - fa - fb).cwiseAbs().maxCoeff() <= 1e-10 * fab.cwiseAbs().maxCoeff());
}

TEST_CASE("simulate: deterministic, placement checks") {
  const RoomScenario s = small_scenario();
  const Simulation a = simulate(s), b = simulate(s);
  CHECK(a.train[1].y == b.train[1].y);
  CHECK(a.eval_truth[0] == b.eval_truth[0]);
  RoomScenario bad = s;
  bad.array_center = Eigen::Vector3d(5.9, 3.0, 1.5);
  CHECK_THROWS_AS(simulate(bad), PlacementError);
  bad = s;
  bad.source = Eigen::Vector3d(-1.0, 1.0, 1.0);
  CHECK_THROWS_AS(bad.validate(), PlacementError);
  bad = s;
  bad.fs = 1500.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("dataset container round trip is bit-exact") {
  const Simulation sim = simulate(small_scenario());
  std::stringstream ss;
  write_simulation(ss, sim);
  const std::string bytes = ss.str();
  const Simulation back = read_simulation(ss);
  std::stringstream again;
  write_simulation(again, back);
  CHECK(again.str() == bytes);
  CHECK(back.train[2].y == sim.train[2].y);
  CHECK(back.rirs[1] == sim.rirs[1]);
  CHECK(back.scenario.seed == sim.scenario.seed);
  std::stringstream bad("nope");
  CHECK_THROWS(read_simulation(bad));
}

TEST_CASE("diagnostic: rendered field nearly satisfies the wave equation") {
  // Free field, so the spatial stencil never straddles a reflection singularity.
  // Spatial Laplacian by second differences (h = 1 cm); time derivative
  // spectrally from the band-limited samples. Tolerance 5% of |Laplacian|.
  RoomScenario s;
  s.alpha = 1.0;
  s.max_order = 0;
  const double h = 0.01;
  const Eigen::Vector3d x0 = s.array_center;
  Eigen::Matrix3Xd p(3, 7);
  p.col(0) = x0;
  for (int a = 0; a < 3; ++a) {
    p.col(1 + 2 * a) = x0 + h * Eigen::Vector3d::Unit(a);
    p.col(2 + 2 * a) = x0 - h * Eigen::Vector3d::Unit(a);
  }
  const int n = 2048;
  const DenseVector src = synth_source(s, 4 * n, 4);
  const DenseMatrix u = render_field(s, p, src, n, n);
  DenseVector lap = -6.0 * u.row(0).transpose();
  for (int k = 1; k < 7; ++k) lap += u.row(k).transpose();
  lap /= h * h;

  Eigen::FFT<double> fft;
  std::vector<double> in(n);
  for (int i = 0; i < n; ++i) in[static_cast<size_t>(i)] = u(0, i);
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, in);
  for (int k = 0; k < n; ++k) {
    const double f = (k <= n / 2 ? k : k - n) * s.fs / n;
    const double w = 2 * std::numbers::pi * f;
    spec[static_cast<size_t>(k)] *= -w * w;
  }
  std::vector<double> utt;
  fft.inv(utt, spec);
  double res = 0.0, ref = 0.0;
  for (int i = n / 4; i < 3 * n / 4; ++i) {
    const double r = lap(i) - utt[static_cast<size_t>(i)] / (s.c * s.c);
    res += r * r;
    ref += lap(i) * lap(i);
  }
  INFO("relative residual " << std::sqrt(res / ref));
  CHECK(std::sqrt(res / ref) < 0.05);
}
