#include "sfgp/acoustics.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>

namespace sfgp {

namespace {

constexpr double kPi = std::numbers::pi;

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x5EEDu};
  return std::mt19937_64(seq);
}

bool strictly_inside(const Eigen::Vector3d& room, const Eigen::Vector3d& p) {
  return (p.array() > 0.0).all() && (p.array() < room.array()).all();
}

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x); }

// Per-axis image coordinates and reflection counts.
struct AxisImage {
  double coord;
  int reflections;
};

std::vector<AxisImage> axis_images(double source, double length, int max_order) {
  std::vector<AxisImage> out;
  const int n_max = max_order / 2 + 1;
  for (int n = -n_max; n <= n_max; ++n) {
    for (int p = 0; p <= 1; ++p) {
      const int k = std::abs(n - p) + std::abs(n);
      if (k > max_order) continue;
      out.push_back({(1 - 2 * p) * source + 2.0 * n * length, k});
    }
  }
  return out;
}

double max_image_distance(const RoomScenario& s, const Eigen::Vector3d& mic) {
  double d = 0.0;
  for (const ImageSource& im : image_sources(s, mic)) d = std::max(d, (im.position - mic).norm());
  return d;
}

}  // namespace

void RoomScenario::validate() const {
  if ((room.array() <= 0.0).any()) throw std::invalid_argument("scenario: room dimensions must be > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("scenario: alpha must be in [0, 1]");
  if (max_order < 0) throw std::invalid_argument("scenario: max_order must be >= 0");
  if (!(c > 0.0) || !(fs > 0.0)) throw std::invalid_argument("scenario: c and fs must be > 0");
  if (!(band_lo > 0.0 && band_lo < band_hi)) throw std::invalid_argument("scenario: bad source band");
  if (!(fs > 2.0 * band_hi)) throw std::invalid_argument("scenario: fs must exceed twice the band top");
  if (!(array_side > 0.0)) throw std::invalid_argument("scenario: array side must be > 0");
  if (mics < 1 || batch_len < 1 || train_batches < 1 || eval_batches < 0 || eval_points < 0) {
    throw std::invalid_argument("scenario: counts out of range");
  }
  if (source_taps < 3 || source_taps % 2 == 0) {
    throw std::invalid_argument("scenario: source_taps must be odd and >= 3");
  }
  if (!(snr_db > -100.0 && snr_db < 300.0)) throw std::invalid_argument("scenario: snr out of range");
  if (!strictly_inside(room, source)) throw PlacementError("scenario: source outside the room");
  const Eigen::Vector3d half = Eigen::Vector3d::Constant(0.5 * array_side);
  if (!strictly_inside(room, array_center - half) || !strictly_inside(room, array_center + half)) {
    throw PlacementError("scenario: microphone array cube extends outside the room");
  }
}

SpacetimeRegion RoomScenario::array_region() const {
  return SpacetimeRegion::cube(array_center, array_side, 0.0, (batch_len - 1) / fs);
}

std::vector<ImageSource> image_sources(const RoomScenario& s, const Eigen::Vector3d& mic) {
  const double beta = std::sqrt(1.0 - s.alpha);
  const auto ax = axis_images(s.source(0), s.room(0), s.max_order);
  const auto ay = axis_images(s.source(1), s.room(1), s.max_order);
  const auto az = axis_images(s.source(2), s.room(2), s.max_order);
  std::vector<ImageSource> out;
  for (const AxisImage& x : ax) {
    for (const AxisImage& y : ay) {
      if (x.reflections + y.reflections > s.max_order) continue;
      for (const AxisImage& z : az) {
        const int order = x.reflections + y.reflections + z.reflections;
        if (order > s.max_order) continue;
        const Eigen::Vector3d p(x.coord, y.coord, z.coord);
        const double d = (p - mic).norm();
        const double gain = order == 0 ? 1.0 : std::pow(beta, order);
        out.push_back({p, gain / (4.0 * kPi * d), order});
      }
    }
  }
  return out;
}

void add_fractional_impulse(DenseVector& out, double delay, double amplitude) {
  constexpr int half = kFractionalDelayTaps / 2;
  constexpr double window_half = half + 1.0;
  const auto center = static_cast<Eigen::Index>(std::llround(delay));
  // sin(pi u) flips sign per tap; the window cosine advances by a fixed rotation
  const double u0 = static_cast<double>(center - half) - delay;
  double sn = std::sin(kPi * u0);
  const double a = kPi / window_half;
  const double ca = std::cos(a), sa = std::sin(a);
  double wc = std::cos(a * u0), ws = std::sin(a * u0);
  for (Eigen::Index n = center - half; n <= center + half; ++n) {
    const double u = static_cast<double>(n) - delay;
    if (n >= 0 && n < out.size()) {
      const double sinc_u = std::abs(u) < 1e-12 ? 1.0 : sn / (kPi * u);
      out(n) += amplitude * 0.5 * (1.0 + wc) * sinc_u;
    }
    sn = -sn;
    const double next = wc * ca - ws * sa;
    ws = ws * ca + wc * sa;
    wc = next;
  }
}

ImpulseResponse render_rir(const RoomScenario& s, const Eigen::Vector3d& mic) {
  if (!strictly_inside(s.room, mic)) throw PlacementError("render_rir: receiver outside the room");
  const std::vector<ImageSource> images = image_sources(s, mic);
  double dmax = 0.0;
  for (const ImageSource& im : images) dmax = std::max(dmax, (im.position - mic).norm());
  const auto length =
      static_cast<Eigen::Index>(std::ceil(dmax / s.c * s.fs)) + kFractionalDelayTaps / 2 + 2;
  ImpulseResponse h;
  h.fs = s.fs;
  h.samples = DenseVector::Zero(length);
  for (const ImageSource& im : images) {
    if (im.amplitude == 0.0) continue;
    add_fractional_impulse(h.samples, (im.position - mic).norm() / s.c * s.fs, im.amplitude);
  }
  return h;
}

DenseVector schroeder_curve_db(const ImpulseResponse& h) {
  const Eigen::Index n = h.length();
  DenseVector edc(n);
  double acc = 0.0;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    acc += h.samples(i) * h.samples(i);
    edc(i) = acc;
  }
  if (!(acc > 0.0)) throw std::invalid_argument("schroeder: zero impulse response");
  return (10.0 * (edc.array() / acc).log10()).matrix();
}

double schroeder_t60(const ImpulseResponse& h) {
  const DenseVector db = schroeder_curve_db(h);
  Eigen::Index a = 0;
  while (a < db.size() && db(a) > -5.0) ++a;
  Eigen::Index b = a;
  while (b < db.size() && db(b) > -25.0) ++b;
  if (b >= db.size() || b - a < 2) throw std::runtime_error("schroeder: decay does not reach -25 dB");
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  const auto m = static_cast<double>(b - a);
  for (Eigen::Index i = a; i < b; ++i) {
    const double t = static_cast<double>(i) / h.fs;
    st += t;
    sy += db(i);
    stt += t * t;
    sty += t * db(i);
  }
  const double slope = (m * sty - st * sy) / (m * stt - st * st);
  return -60.0 / slope;
}

DenseVector bandpass_fir(double lo, double hi, double fs, int taps) {
  if (taps < 3 || taps % 2 == 0) throw std::invalid_argument("bandpass_fir: odd tap count >= 3");
  if (!(0.0 <= lo && lo < hi && hi <= 0.5 * fs)) throw std::invalid_argument("bandpass_fir: bad band");
  DenseVector h(taps);
  const double mid = 0.5 * (taps - 1);
  for (int k = 0; k < taps; ++k) {
    const double m = k - mid;
    const double ideal = 2.0 * hi / fs * sinc(2.0 * hi / fs * m) - 2.0 * lo / fs * sinc(2.0 * lo / fs * m);
    const double w = 0.54 + 0.46 * std::cos(2.0 * kPi * m / (taps - 1));
    h(k) = ideal * w;
  }
  return h;
}

DenseVector filter_zero_phase(const DenseVector& h, const DenseVector& x) {
  const Eigen::Index k = h.size(), n = x.size(), d = (k - 1) / 2;
  DenseVector out = DenseVector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::Index src = i + d - j;
      if (src >= 0 && src < n) acc += h(j) * x(src);
    }
    out(i) = acc;
  }
  return out;
}

DenseVector synth_source(const RoomScenario& s, Eigen::Index samples, std::uint64_t seed) {
  if (samples < 1) throw std::invalid_argument("synth_source: need at least one sample");
  const DenseVector h = bandpass_fir(s.band_lo, s.band_hi, s.fs, s.source_taps);
  const Eigen::Index k = h.size();
  std::mt19937_64 rng = stream_rng(seed, 1);
  std::normal_distribution<double> g(0.0, 1.0);
  DenseVector white(samples + k - 1);
  for (Eigen::Index i = 0; i < white.size(); ++i) white(i) = g(rng);
  // Full-overlap convolution; the (k - 1) / 2 delay is absorbed by the padding.
  DenseVector out(samples);
  for (Eigen::Index i = 0; i < samples; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) acc += h(j) * white(i + k - 1 - j);
    out(i) = acc;
  }
  return out;
}

namespace {

void convolve_block(const DenseVector& h, const DenseVector& source, Eigen::Index first,
                    Eigen::Index count, DenseMatrix& out, Eigen::Index row) {
  for (Eigen::Index n = 0; n < count; ++n) {
    const Eigen::Index t = first + n;
    const Eigen::Index kmin = std::max<Eigen::Index>(0, t - (source.size() - 1));
    const Eigen::Index kmax = std::min<Eigen::Index>(h.size() - 1, t);
    double acc = 0.0;
    for (Eigen::Index k = kmin; k <= kmax; ++k) acc += h(k) * source(t - k);
    out(row, n) = acc;
  }
}

}  // namespace

DenseMatrix render_field(const RoomScenario& s, const Eigen::Matrix3Xd& positions,
                         const DenseVector& source, Eigen::Index first, Eigen::Index count) {
  DenseMatrix out(positions.cols(), count);
  for (Eigen::Index p = 0; p < positions.cols(); ++p) {
    convolve_block(render_rir(s, positions.col(p)).samples, source, first, count, out, p);
  }
  return out;
}

Eigen::Matrix3Xd sample_in_cube(const Eigen::Vector3d& center, double side, int n, std::uint64_t seed,
                                std::uint64_t stream) {
  std::mt19937_64 rng = stream_rng(seed, stream);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  Eigen::Matrix3Xd p(3, n);
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) p(a, i) = center(a) + side * u(rng);
  }
  return p;
}

DenseMatrix spacetime_grid(const Eigen::Matrix3Xd& positions, int samples, double fs) {
  DenseMatrix x(4, positions.cols() * samples);
  for (Eigen::Index p = 0; p < positions.cols(); ++p) {
    for (int n = 0; n < samples; ++n) {
      const Eigen::Index col = p * samples + n;
      x.block<3, 1>(0, col) = positions.col(p);
      x(3, col) = n / fs;
    }
  }
  return x;
}

DenseVector flatten_signals(const DenseMatrix& signals) {
  DenseVector y(signals.size());
  for (Eigen::Index p = 0; p < signals.rows(); ++p) {
    for (Eigen::Index n = 0; n < signals.cols(); ++n) y(p * signals.cols() + n) = signals(p, n);
  }
  return y;
}

DenseMatrix Simulation::eval_grid() const {
  return spacetime_grid(eval_positions, scenario.batch_len, scenario.fs);
}

Eigen::Index warmup_samples(const RoomScenario& s) {
  const double reach = max_image_distance(s, s.array_center) + 0.5 * std::sqrt(3.0) * s.array_side;
  return static_cast<Eigen::Index>(std::ceil(reach / s.c * s.fs)) + kFractionalDelayTaps / 2 + 2;
}

Eigen::Index simulation_length(const RoomScenario& s) {
  return warmup_samples(s) + static_cast<Eigen::Index>(s.train_batches + s.eval_batches) * s.batch_len;
}

Simulation simulate(const RoomScenario& s) {
  s.validate();
  return simulate(s, synth_source(s, simulation_length(s), s.seed));
}

Simulation simulate(const RoomScenario& s, const DenseVector& source) {
  s.validate();
  if (source.size() < simulation_length(s)) throw std::invalid_argument("simulate: source too short");
  Simulation sim;
  sim.scenario = s;
  sim.mics = sample_in_cube(s.array_center, s.array_side, s.mics, s.seed, 2);
  sim.eval_positions = sample_in_cube(s.array_center, s.array_side, s.eval_points, s.seed, 3);
  for (Eigen::Index m = 0; m < sim.mics.cols(); ++m) sim.rirs.push_back(render_rir(s, sim.mics.col(m)).samples);

  const Eigen::Index warm = warmup_samples(s);
  const int total = s.train_batches + s.eval_batches;
  DenseMatrix mic_field(sim.mics.cols(), static_cast<Eigen::Index>(total) * s.batch_len);
  for (Eigen::Index m = 0; m < sim.mics.cols(); ++m) {
    convolve_block(sim.rirs[static_cast<size_t>(m)], source, warm, mic_field.cols(), mic_field, m);
  }
  const DenseMatrix eval_field = render_field(s, sim.eval_positions, source,
                                              warm + s.train_batches * s.batch_len,
                                              s.eval_batches * s.batch_len);

  const double n = static_cast<double>(mic_field.size());
  const double mean = mic_field.sum() / n;
  const double var = (mic_field.array() - mean).square().sum() / (n - 1.0);
  const bool silent = !(var > 0.0);
  sim.scale = (s.normalize && !silent) ? 1.0 / std::sqrt(var) : 1.0;
  const double rms = std::sqrt((sim.scale * mic_field).squaredNorm() / n);
  const double floor = std::pow(10.0, -s.snr_db / 20.0);
  sim.noise_std = silent ? floor : rms * floor;

  std::mt19937_64 noise_rng = stream_rng(s.seed, 4);
  std::normal_distribution<double> g(0.0, 1.0);
  const DenseMatrix grid = spacetime_grid(sim.mics, s.batch_len, s.fs);
  for (int b = 0; b < total; ++b) {
    DenseMatrix clean = sim.scale * mic_field.middleCols(static_cast<Eigen::Index>(b) * s.batch_len, s.batch_len);
    Dataset d;
    d.x = grid;
    d.y = flatten_signals(clean);
    for (Eigen::Index i = 0; i < d.y.size(); ++i) d.y(i) += sim.noise_std * g(noise_rng);
    sim.clean_mics.push_back(std::move(clean));
    (b < s.train_batches ? sim.train : sim.eval_inputs).push_back(std::move(d));
  }
  for (int b = 0; b < s.eval_batches; ++b) {
    sim.eval_truth.push_back(sim.scale *
                             eval_field.middleCols(static_cast<Eigen::Index>(b) * s.batch_len, s.batch_len));
  }
  return sim;
}

double measured_snr_db(const std::vector<DenseMatrix>& clean, const std::vector<Dataset>& noisy) {
  if (clean.size() < noisy.size()) throw DimensionMismatch("measured_snr_db: batch count");
  double ps = 0.0, pn = 0.0;
  for (size_t b = 0; b < noisy.size(); ++b) {
    const DenseVector c = flatten_signals(clean[b]);
    ps += c.squaredNorm();
    pn += (noisy[b].y - c).squaredNorm();
  }
  return 10.0 * std::log10(ps / pn);
}

namespace {

constexpr char kSimMagic[8] = {'S', 'F', 'G', 'P', 'S', 'I', 'M', '1'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("dataset file: truncated");
  return v;
}

template <class M>
void put_matrix(std::ostream& os, const M& m) {
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
  put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) put<double>(os, m(i, j));
  }
}

DenseMatrix get_matrix(std::istream& is) {
  const auto r = static_cast<Eigen::Index>(get<std::uint64_t>(is));
  const auto c = static_cast<Eigen::Index>(get<std::uint64_t>(is));
  if (r > (1 << 26) || c > (1 << 26)) throw std::runtime_error("dataset file: implausible matrix size");
  DenseMatrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = get<double>(is);
  }
  return m;
}

void put_vec3(std::ostream& os, const Eigen::Vector3d& v) {
  for (int i = 0; i < 3; ++i) put<double>(os, v(i));
}

Eigen::Vector3d get_vec3(std::istream& is) {
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) v(i) = get<double>(is);
  return v;
}

void put_datasets(std::ostream& os, const std::vector<Dataset>& ds) {
  put<std::uint64_t>(os, ds.size());
  for (const Dataset& d : ds) {
    put_matrix(os, d.x);
    put_matrix(os, d.y);
  }
}

std::vector<Dataset> get_datasets(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  std::vector<Dataset> ds;
  for (std::uint64_t i = 0; i < n; ++i) {
    Dataset d;
    d.x = get_matrix(is);
    d.y = get_matrix(is);
    ds.push_back(std::move(d));
  }
  return ds;
}

template <class M>
void put_matrices(std::ostream& os, const std::vector<M>& ms) {
  put<std::uint64_t>(os, ms.size());
  for (const M& m : ms) put_matrix(os, m);
}

std::vector<DenseMatrix> get_matrices(std::istream& is) {
  const auto n = get<std::uint64_t>(is);
  std::vector<DenseMatrix> ms;
  for (std::uint64_t i = 0; i < n; ++i) ms.push_back(get_matrix(is));
  return ms;
}

}  // namespace

void write_simulation(std::ostream& os, const Simulation& sim) {
  const RoomScenario& s = sim.scenario;
  os.write(kSimMagic, sizeof(kSimMagic));
  put_vec3(os, s.room);
  put<double>(os, s.alpha);
  put<std::int32_t>(os, s.max_order);
  put<double>(os, s.c);
  put<double>(os, s.fs);
  put_vec3(os, s.source);
  put_vec3(os, s.array_center);
  put<double>(os, s.array_side);
  put<std::int32_t>(os, s.mics);
  put<std::int32_t>(os, s.batch_len);
  put<std::int32_t>(os, s.train_batches);
  put<std::int32_t>(os, s.eval_batches);
  put<std::int32_t>(os, s.eval_points);
  put<double>(os, s.snr_db);
  put<double>(os, s.band_lo);
  put<double>(os, s.band_hi);
  put<std::int32_t>(os, s.source_taps);
  put<std::uint8_t>(os, s.normalize ? 1 : 0);
  put<std::uint64_t>(os, s.seed);
  put<double>(os, sim.scale);
  put<double>(os, sim.noise_std);
  put_matrix(os, sim.mics);
  put_matrix(os, sim.eval_positions);
  put_datasets(os, sim.train);
  put_datasets(os, sim.eval_inputs);
  put_matrices(os, sim.eval_truth);
  put_matrices(os, sim.clean_mics);
  put_matrices(os, sim.rirs);
}

Simulation read_simulation(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kSimMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("dataset file: bad magic");
  }
  Simulation sim;
  RoomScenario& s = sim.scenario;
  s.room = get_vec3(is);
  s.alpha = get<double>(is);
  s.max_order = get<std::int32_t>(is);
  s.c = get<double>(is);
  s.fs = get<double>(is);
  s.source = get_vec3(is);
  s.array_center = get_vec3(is);
  s.array_side = get<double>(is);
  s.mics = get<std::int32_t>(is);
  s.batch_len = get<std::int32_t>(is);
  s.train_batches = get<std::int32_t>(is);
  s.eval_batches = get<std::int32_t>(is);
  s.eval_points = get<std::int32_t>(is);
  s.snr_db = get<double>(is);
  s.band_lo = get<double>(is);
  s.band_hi = get<double>(is);
  s.source_taps = get<std::int32_t>(is);
  s.normalize = get<std::uint8_t>(is) != 0;
  s.seed = get<std::uint64_t>(is);
  sim.scale = get<double>(is);
  sim.noise_std = get<double>(is);
  sim.mics = get_matrix(is);
  sim.eval_positions = get_matrix(is);
  sim.train = get_datasets(is);
  sim.eval_inputs = get_datasets(is);
  sim.eval_truth = get_matrices(is);
  sim.clean_mics = get_matrices(is);
  for (const DenseMatrix& r : get_matrices(is)) sim.rirs.push_back(r.col(0));
  return sim;
}

void save_simulation(const std::string& path, const Simulation& sim) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("dataset file: cannot open " + path);
  write_simulation(os, sim);
  if (!os) throw std::runtime_error("dataset file: write failed for " + path);
}

Simulation load_simulation(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("dataset file: cannot open " + path);
  return read_simulation(is);
}

}  // namespace sfgp
