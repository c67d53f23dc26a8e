#include "sfgp/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <unsupported/Eigen/FFT>

namespace sfgp {

std::string method_name(Method m, int n_colloc) {
  switch (m) {
    case Method::Diffuse: return "diffuse";
    case Method::DK: return "DK";
    case Method::DKPDE: return "DKPDE" + std::to_string(n_colloc);
  }
  return "unknown";
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Value parsers throw std::invalid_argument; the caller attaches line and key.
double to_double(const std::string& v) {
  size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected a number, got '" + v + "'");
  }
  if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument("expected a number, got '" + v + "'");
  return d;
}

long long to_int(const std::string& v) {
  size_t used = 0;
  long long n = 0;
  try {
    n = std::stoll(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("expected an integer, got '" + v + "'");
  }
  if (used != v.size()) throw std::invalid_argument("expected an integer, got '" + v + "'");
  return n;
}

int to_int32(const std::string& v) {
  const long long n = to_int(v);
  if (n < -2147483647LL || n > 2147483647LL) throw std::invalid_argument("integer out of range");
  return static_cast<int>(n);
}

bool to_bool(const std::string& v) {
  const std::string s = lower(v);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("expected true/false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& v, const std::string& seps) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : v) {
    if (seps.find(ch) != std::string::npos) {
      if (!trim(cur).empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!trim(cur).empty()) out.push_back(trim(cur));
  return out;
}

Eigen::Vector3d to_vec3(const std::string& v) {
  const auto parts = split(v, ", ");
  if (parts.size() != 3) throw std::invalid_argument("expected three numbers, got '" + v + "'");
  return {to_double(parts[0]), to_double(parts[1]), to_double(parts[2])};
}

std::string vec3(const Eigen::Vector3d& v) { return fmt(v(0)) + "," + fmt(v(1)) + "," + fmt(v(2)); }

std::vector<Band> to_bands(const std::string& v) {
  std::vector<Band> out;
  for (const std::string& item : split(v, ",")) {
    const auto dash = item.find('-', 1);
    if (dash == std::string::npos) throw std::invalid_argument("band '" + item + "' is not lo-hi");
    out.push_back({to_double(trim(item.substr(0, dash))), to_double(trim(item.substr(dash + 1)))});
  }
  if (out.empty()) throw std::invalid_argument("no bands given");
  return out;
}

std::string bands_text(const std::vector<Band>& bands) {
  std::string s;
  for (size_t i = 0; i < bands.size(); ++i) {
    if (i) s += ",";
    s += fmt(bands[i].lo) + "-" + fmt(bands[i].hi);
  }
  return s;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define SFGP_DOUBLE(key, member) \
  {key, {[](ExperimentConfig& c, const std::string& v) { c.member = to_double(v); }, \
         [](const ExperimentConfig& c) { return fmt(c.member); }}}
#define SFGP_INT(key, member) \
  {key, {[](ExperimentConfig& c, const std::string& v) { c.member = to_int32(v); }, \
         [](const ExperimentConfig& c) { return std::to_string(c.member); }}}
#define SFGP_LONG(key, member) \
  {key, {[](ExperimentConfig& c, const std::string& v) { c.member = to_int(v); }, \
         [](const ExperimentConfig& c) { return std::to_string(c.member); }}}
#define SFGP_BOOL(key, member) \
  {key, {[](ExperimentConfig& c, const std::string& v) { c.member = to_bool(v); }, \
         [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); }}}
#define SFGP_VEC3(key, member) \
  {key, {[](ExperimentConfig& c, const std::string& v) { c.member = to_vec3(v); }, \
         [](const ExperimentConfig& c) { return vec3(c.member); }}}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      SFGP_VEC3("room", scenario.room),
      SFGP_DOUBLE("alpha", scenario.alpha),
      SFGP_INT("max_order", scenario.max_order),
      SFGP_DOUBLE("c", scenario.c),
      SFGP_DOUBLE("fs", scenario.fs),
      SFGP_VEC3("source", scenario.source),
      SFGP_VEC3("array_center", scenario.array_center),
      SFGP_DOUBLE("array_side", scenario.array_side),
      SFGP_INT("mics", scenario.mics),
      SFGP_INT("batch_len", scenario.batch_len),
      SFGP_INT("train_batches", scenario.train_batches),
      SFGP_INT("eval_batches", scenario.eval_batches),
      SFGP_INT("eval_points", scenario.eval_points),
      SFGP_DOUBLE("snr_db", scenario.snr_db),
      SFGP_DOUBLE("band_lo", scenario.band_lo),
      SFGP_DOUBLE("band_hi", scenario.band_hi),
      SFGP_INT("source_taps", scenario.source_taps),
      SFGP_BOOL("normalize", scenario.normalize),
      SFGP_LONG("epochs", train.epochs),
      SFGP_DOUBLE("lr", train.lr),
      SFGP_DOUBLE("beta1", train.beta1),
      SFGP_DOUBLE("beta2", train.beta2),
      SFGP_DOUBLE("eps", train.eps),
      SFGP_DOUBLE("clip_norm", train.clip_norm),
      SFGP_LONG("checkpoint_interval", train.checkpoint_interval),
      {"batch_strategy",
       {[](ExperimentConfig& c, const std::string& v) {
          const std::string s = lower(v);
          if (s == "single") {
            c.train.batch = BatchStrategy::Single;
          } else if (s == "cycle") {
            c.train.batch = BatchStrategy::Cycle;
          } else {
            throw std::invalid_argument("expected single or cycle, got '" + v + "'");
          }
        },
        [](const ExperimentConfig& c) {
          return std::string(c.train.batch == BatchStrategy::Single ? "single" : "cycle");
        }}},
      SFGP_INT("depth", siren.depth),
      SFGP_INT("hidden", siren.hidden),
      SFGP_INT("out_dim", siren.out_dim),
      SFGP_DOUBLE("omega0", siren.omega0),
      SFGP_DOUBLE("c0", siren.c0),
      {"first_layer",
       {[](ExperimentConfig& c, const std::string& v) {
          const std::string s = lower(v);
          if (s == "inverse_depth") {
            c.siren.first_layer = FirstLayerInit::InverseDepth;
          } else if (s == "inverse_input_dim") {
            c.siren.first_layer = FirstLayerInit::InverseInputDim;
          } else {
            throw std::invalid_argument("expected inverse_depth or inverse_input_dim, got '" + v + "'");
          }
        },
        [](const ExperimentConfig& c) {
          return std::string(c.siren.first_layer == FirstLayerInit::InverseDepth ? "inverse_depth"
                                                                                 : "inverse_input_dim");
        }}},
      {"method",
       {[](ExperimentConfig& c, const std::string& v) { c.method = parse_method(v); },
        [](const ExperimentConfig& c) {
          return std::string(c.method == Method::Diffuse ? "diffuse" : c.method == Method::DK ? "dk" : "dkpde");
        }}},
      SFGP_INT("n_colloc", n_colloc),
      SFGP_INT("realizations", realizations),
      {"seed",
       {[](ExperimentConfig& c, const std::string& v) {
          const long long n = to_int(v);
          if (n < 0) throw std::invalid_argument("seed must be >= 0");
          c.seed = static_cast<std::uint64_t>(n);
        },
        [](const ExperimentConfig& c) { return std::to_string(c.seed); }}},
      {"out",
       {[](ExperimentConfig& c, const std::string& v) { c.out_dir = v; },
        [](const ExperimentConfig& c) { return c.out_dir; }}},
      SFGP_DOUBLE("sigma_init", sigma_init),
      SFGP_DOUBLE("sigma_z_init", sigma_z_init),
      SFGP_BOOL("train_noise", train_noise),
      {"bands",
       {[](ExperimentConfig& c, const std::string& v) { c.bands = to_bands(v); },
        [](const ExperimentConfig& c) { return bands_text(c.bands); }}},
      {"band_filter",
       {[](ExperimentConfig& c, const std::string& v) {
          const std::string s = lower(v);
          if (s == "fir") {
            c.band_filter = BandFilter::Fir;
          } else if (s == "fft") {
            c.band_filter = BandFilter::FftMask;
          } else {
            throw std::invalid_argument("expected fir or fft, got '" + v + "'");
          }
        },
        [](const ExperimentConfig& c) { return std::string(c.band_filter == BandFilter::Fir ? "fir" : "fft"); }}},
      SFGP_INT("band_taps", band_taps),
      SFGP_INT("diffuse_freqs", diffuse_freqs),
      SFGP_DOUBLE("diffuse_sigma", diffuse_sigma),
      SFGP_BOOL("record_timing", record_timing),
  };
  return table;
}

#undef SFGP_DOUBLE
#undef SFGP_INT
#undef SFGP_LONG
#undef SFGP_BOOL
#undef SFGP_VEC3

}  // namespace

Method parse_method(const std::string& s) {
  const std::string m = lower(trim(s));
  if (m == "diffuse") return Method::Diffuse;
  if (m == "dk") return Method::DK;
  if (m == "dkpde") return Method::DKPDE;
  throw std::invalid_argument("unknown method '" + s + "' (diffuse, dk, dkpde)");
}

void ExperimentConfig::validate() const {
  scenario.validate();
  train.validate();
  siren.validate();
  if (realizations < 1) throw std::invalid_argument("config: realizations must be >= 1");
  if (method == Method::DKPDE && n_colloc < 1) throw std::invalid_argument("config: dkpde needs n_colloc > 0");
  if (n_colloc < 0) throw std::invalid_argument("config: n_colloc must be >= 0");
  if (scenario.eval_batches < 1) throw std::invalid_argument("config: need at least one eval batch");
  if (!(sigma_init > 0.0) || !(sigma_z_init > 0.0) || !(diffuse_sigma > 0.0)) {
    throw std::invalid_argument("config: noise levels must be > 0");
  }
  if (diffuse_freqs < 1) throw std::invalid_argument("config: diffuse_freqs must be >= 1");
  if (band_taps < 3 || band_taps % 2 == 0) throw std::invalid_argument("config: band_taps must be odd >= 3");
  for (size_t i = 0; i < bands.size(); ++i) {
    if (!(bands[i].lo >= 0.0 && bands[i].lo < bands[i].hi && bands[i].hi <= 0.5 * scenario.fs)) {
      throw std::invalid_argument("config: band edges must satisfy 0 <= lo < hi <= fs/2");
    }
    if (i > 0 && bands[i].lo < bands[i - 1].hi) {
      throw std::invalid_argument("config: bands must be increasing and non-overlapping");
    }
  }
}

std::string ExperimentConfig::canonical() const {
  std::string s;
  for (const auto& [key, f] : fields()) s += key + " = " + f.get(*this) + "\n";
  return s;
}

std::uint64_t ExperimentConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig c;
  std::istringstream is(text);
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError(line, body, "expected key = value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto it = fields().find(key);
    if (it == fields().end()) throw ParseError(line, key, "unknown key");
    if (value.empty()) throw ParseError(line, key, "missing value");
    try {
      it->second.set(c, value);
    } catch (const std::invalid_argument& e) {
      throw ParseError(line, key, e.what());
    }
  }
  try {
    c.validate();
  } catch (const std::exception& e) {
    throw ParseError(line, "<config>", e.what());
  }
  return c;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read config " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

double nmse_db(const DenseMatrix& truth, const DenseMatrix& estimate) {
  return nmse_db(std::vector<DenseMatrix>{truth}, std::vector<DenseMatrix>{estimate});
}

double nmse_db(const std::vector<DenseMatrix>& truth, const std::vector<DenseMatrix>& estimate) {
  if (truth.size() != estimate.size()) throw DimensionMismatch("nmse: batch count mismatch");
  double err = 0.0, ref = 0.0;
  for (size_t b = 0; b < truth.size(); ++b) {
    if (truth[b].rows() != estimate[b].rows() || truth[b].cols() != estimate[b].cols()) {
      throw DimensionMismatch("nmse: signal shape mismatch");
    }
    err += (truth[b] - estimate[b]).squaredNorm();
    ref += truth[b].squaredNorm();
  }
  if (!(ref > 0.0)) throw ZeroReference("nmse: reference signal is all zero");
  if (err == 0.0) return kNmseFloorDb;
  return std::max(kNmseFloorDb, 10.0 * std::log10(err / ref));
}

DenseMatrix band_filter_rows(const DenseMatrix& signals, const Band& band, double fs, BandFilter kind,
                             int taps) {
  DenseMatrix out(signals.rows(), signals.cols());
  if (kind == BandFilter::Fir) {
    const DenseVector h = bandpass_fir(band.lo, band.hi, fs, taps);
    for (Eigen::Index r = 0; r < signals.rows(); ++r) {
      out.row(r) = filter_zero_phase(h, signals.row(r).transpose()).transpose();
    }
    return out;
  }
  const Eigen::Index n = signals.cols();
  Eigen::FFT<double> fft;
  std::vector<double> in(static_cast<size_t>(n)), back;
  std::vector<std::complex<double>> spec;
  const bool top = band.hi >= 0.5 * fs;
  for (Eigen::Index r = 0; r < signals.rows(); ++r) {
    for (Eigen::Index i = 0; i < n; ++i) in[static_cast<size_t>(i)] = signals(r, i);
    fft.fwd(spec, in);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double f = static_cast<double>(std::min(k, n - k)) * fs / static_cast<double>(n);
      const bool keep = f >= band.lo && (f < band.hi || (top && f <= band.hi));
      if (!keep) spec[static_cast<size_t>(k)] = 0.0;
    }
    fft.inv(back, spec);
    for (Eigen::Index i = 0; i < n; ++i) out(r, i) = back[static_cast<size_t>(i)];
  }
  return out;
}

std::vector<BandResult> band_nmse(const std::vector<DenseMatrix>& truth,
                                  const std::vector<DenseMatrix>& estimate, const std::vector<Band>& bands,
                                  double fs, BandFilter kind, int taps) {
  std::vector<BandResult> out;
  for (const Band& b : bands) {
    if (!(b.lo >= 0.0 && b.lo < b.hi && b.hi <= 0.5 * fs)) {
      throw std::invalid_argument("band_nmse: band outside [0, fs/2]");
    }
    std::vector<DenseMatrix> ft, fe;
    for (size_t i = 0; i < truth.size(); ++i) {
      ft.push_back(band_filter_rows(truth[i], b, fs, kind, taps));
      fe.push_back(band_filter_rows(estimate[i], b, fs, kind, taps));
    }
    out.push_back({b, nmse_db(ft, fe)});
  }
  return out;
}

RoomScenario realization_scenario(const ExperimentConfig& c, int realization) {
  RoomScenario s = c.scenario;
  s.seed = realization_seed(c, realization);
  return s;
}

std::uint64_t realization_seed(const ExperimentConfig& c, int realization) {
  return c.seed * 1000003ULL + static_cast<std::uint64_t>(realization);
}

SirenConfig normalized_siren(const ExperimentConfig& c) {
  SirenConfig s = c.siren;
  s.normalization = InputNormalization::for_region(c.scenario.array_center, 0.5 * c.scenario.array_side,
                                                   c.scenario.batch_seconds());
  return s;
}

DeepKernelModel initial_model(const ExperimentConfig& c, const Simulation& sim, int realization) {
  DeepKernelModel m = make_model(normalized_siren(c), realization_seed(c, realization), pooled_std(sim.train));
  m.log_sigma = std::log(c.sigma_init);
  m.log_sigma_z = std::log(c.sigma_z_init);
  m.op.c = c.scenario.c;
  m.train_noise = c.train_noise;
  return m;
}

TrainState fit(const ExperimentConfig& c, const Simulation& sim, DeepKernelModel& model, int realization,
               const std::string& checkpoint_path) {
  if (c.method == Method::Diffuse) return {};
  TrainConfig t = c.train;
  t.seed = realization_seed(c, realization);
  t.n_colloc = c.method == Method::DKPDE ? c.n_colloc : 0;
  t.colloc_region = sim.scenario.array_region();
  t.checkpoint_path = checkpoint_path;
  return train(model, sim.train, t);
}

std::vector<DenseMatrix> predict(const ExperimentConfig& c, const Simulation& sim,
                                 const DeepKernelModel* model) {
  GramFn kernel;
  double sigma = 0.0;
  if (c.method == Method::Diffuse) {
    const double sd = pooled_std(sim.train);
    const DiffuseKernel k(DiffuseKernel::linear_grid(c.scenario.band_lo, c.scenario.band_hi, c.diffuse_freqs),
                          c.scenario.c, sd * sd);
    kernel = [k](const DenseMatrix& a, const DenseMatrix& b) { return k.gram(a, b); };
    sigma = c.diffuse_sigma;
  } else {
    if (model == nullptr) throw std::invalid_argument("predict: a trained model is required");
    kernel = deep_gram(*model);
    sigma = model->sigma();
  }
  const DenseMatrix grid = sim.eval_grid();
  const Eigen::Index p = sim.eval_positions.cols(), n = sim.scenario.batch_len;
  std::vector<DenseMatrix> out;
  for (const Dataset& d : sim.eval_inputs) {
    const DenseVector mean = posterior_mean(kernel, sigma, d, grid);
    DenseMatrix sig(p, n);
    for (Eigen::Index i = 0; i < p; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) sig(i, j) = mean(i * n + j);
    }
    out.push_back(std::move(sig));
  }
  return out;
}

std::vector<ReportRow> score(const ExperimentConfig& c, const Simulation& sim,
                             const std::vector<DenseMatrix>& estimate, int realization, double seconds) {
  const std::string name = method_name(c.method, c.n_colloc);
  const double t = c.record_timing ? seconds : 0.0;
  std::vector<ReportRow> rows;
  rows.push_back({realization, name, 0.0, 0.5 * c.scenario.fs, nmse_db(sim.eval_truth, estimate), t});
  for (const BandResult& b :
       band_nmse(sim.eval_truth, estimate, c.bands, c.scenario.fs, c.band_filter, c.band_taps)) {
    rows.push_back({realization, name, b.band.lo, b.band.hi, b.nmse_db, t});
  }
  return rows;
}

GradientReport gradcheck_tiny(const RoomScenario& s, std::uint64_t seed) {
  const SpacetimeRegion region = s.array_region();
  DeepKernelModel m;
  m.fm.config.depth = 2;
  m.fm.config.hidden = 8;
  m.fm.config.out_dim = 8;
  m.fm.config.normalization = InputNormalization::for_region(s.array_center, 0.5 * s.array_side, s.batch_seconds());
  m.fm.params = init_siren(m.fm.config, seed);
  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (auto& b : m.fm.params.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = u(rng);
  }
  m.hyper = KernelHyper(1.0, 3.0);
  m.log_sigma = std::log(0.1);
  m.op.c = s.c;
  m.train_noise = true;
  Dataset d;
  d.x = sample_collocation(region, 10, seed, 1).x;
  std::normal_distribution<double> g(0.0, 1.0);
  d.y.resize(10);
  for (Eigen::Index i = 0; i < 10; ++i) d.y(i) = g(rng);
  const CollocationSet c = sample_collocation(region, 4, seed, 2);
  // Put sigma_z on the scale of the operator block so its gradient is not lost
  // next to the data term.
  const JointGram j = assemble_joint(m.fm, m.hyper, m.op, d.x, c.x, m.sigma(), 0.0);
  m.log_sigma_z = 0.5 * std::log(j.kzz.diagonal().mean());
  return validate_gradients(m, d, c);
}

void write_rows_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
  os << "realization,method,band_lo,band_hi,nmse_db,seconds\n";
  for (const ReportRow& r : rows) {
    os << (r.realization < 0 ? std::string("mean") : std::to_string(r.realization)) << ',' << r.method << ','
       << fmt(r.band_lo) << ',' << fmt(r.band_hi) << ',' << fmt(r.nmse_db) << ',' << fmt(r.seconds) << '\n';
  }
}

std::vector<ReportRow> aggregate_rows(const std::vector<ReportRow>& rows) {
  std::vector<ReportRow> out;
  std::vector<int> counts;
  for (const ReportRow& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const ReportRow& a) {
      return a.method == r.method && a.band_lo == r.band_lo && a.band_hi == r.band_hi;
    });
    if (it == out.end()) {
      out.push_back({-1, r.method, r.band_lo, r.band_hi, 0.0, 0.0});
      counts.push_back(0);
      it = out.end() - 1;
    }
    const auto i = static_cast<size_t>(it - out.begin());
    it->nmse_db += r.nmse_db;
    it->seconds += r.seconds;
    counts[i] += 1;
  }
  for (size_t i = 0; i < out.size(); ++i) {
    out[i].nmse_db /= counts[i];
    out[i].seconds /= counts[i];
  }
  return out;
}

void write_report_text(std::ostream& os, const ExperimentConfig& c, const EvalReport& r) {
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(r.config_hash));
  os << "config_hash " << hash << "\n";
  os << "method " << method_name(c.method, c.n_colloc) << "\n";
  os << "realizations " << c.realizations << "\n";
  os << "optimizer_steps " << r.optimizer_steps << "\n";
  os << "nmse pooling: one ratio over all evaluation positions, samples and held-out batches per "
        "realization, converted to dB, then averaged over realizations\n";
  os << "full band rows use band_lo = 0 and band_hi = fs/2 (no filtering)\n";
  os << "band filter " << (c.band_filter == BandFilter::Fir ? "fir" : "fft") << " taps " << c.band_taps << "\n";
  os << "measurements normalized to unit std: " << (c.scenario.normalize ? "yes" : "no") << "\n";
  os << "gradient clipping: " << (c.train.clip_norm > 0.0 ? fmt(c.train.clip_norm) : std::string("off")) << "\n";
  os << "\nmean nmse_db\n";
  for (const ReportRow& a : r.aggregate) {
    os << a.method << " [" << fmt(a.band_lo) << ", " << fmt(a.band_hi) << "] " << fmt(a.nmse_db) << "\n";
  }
  os << "\nconfig\n" << c.canonical();
}

EvalReport run(const ExperimentConfig& c, const ProgressFn& progress) {
  c.validate();
  const auto t0 = std::chrono::steady_clock::now();
  EvalReport report;
  report.config_hash = c.hash();
  for (int r = 0; r < c.realizations; ++r) {
    const auto tr = std::chrono::steady_clock::now();
    std::vector<DenseMatrix> est;
    try {
      const Simulation sim = simulate(realization_scenario(c, r));
      if (c.method == Method::Diffuse) {
        est = predict(c, sim, nullptr);
      } else {
        DeepKernelModel model = initial_model(c, sim, r);
        const TrainState s = fit(c, sim, model, r);
        report.optimizer_steps += s.step;
        est = predict(c, sim, &model);
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - tr).count();
      const auto rows = score(c, sim, est, r, secs);
      report.rows.insert(report.rows.end(), rows.begin(), rows.end());
      if (progress) {
        progress("realization " + std::to_string(r) + " " + rows.front().method + " nmse_db " +
                 fmt(rows.front().nmse_db));
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("realization " + std::to_string(r) + ": " + e.what());
    }
  }
  report.aggregate = aggregate_rows(report.rows);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::filesystem::create_directories(c.out_dir);
  const std::filesystem::path dir(c.out_dir);
  {
    std::ofstream os(dir / "results.csv");
    write_rows_csv(os, report.rows);
    if (!os) throw std::runtime_error("cannot write results.csv in " + c.out_dir);
  }
  {
    std::ofstream os(dir / "summary.csv");
    write_rows_csv(os, report.aggregate);
  }
  {
    std::ofstream os(dir / "report.txt");
    write_report_text(os, c, report);
  }
  return report;
}

}  // namespace sfgp
