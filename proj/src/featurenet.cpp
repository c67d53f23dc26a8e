#include "sfgp/featurenet.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>

namespace sfgp {

DenseMatrix to_matrix(const std::vector<SpacetimePoint>& points) {
  DenseMatrix x(4, static_cast<Eigen::Index>(points.size()));
  for (size_t p = 0; p < points.size(); ++p) {
    const auto c = static_cast<Eigen::Index>(p);
    x.block<3, 1>(0, c) = points[p].r;
    x(3, c) = points[p].t;
  }
  return x;
}

InputNormalization InputNormalization::for_region(const Eigen::Vector3d& center,
                                                  double half_extent, double time_span) {
  if (half_extent <= 0.0 || time_span <= 0.0) {
    throw std::invalid_argument("normalization: extents must be positive");
  }
  InputNormalization n;
  for (int i = 0; i < 3; ++i) {
    n.scale[static_cast<size_t>(i)] = 1.0 / half_extent;
    n.offset[static_cast<size_t>(i)] = -center(i) / half_extent;
  }
  n.scale[3] = 2.0 / time_span;
  n.offset[3] = -1.0;
  return n;
}

void SirenConfig::validate() const {
  if (depth < 2) throw std::invalid_argument("siren: depth must be >= 2");
  if (hidden < 1 || out_dim < 1) throw std::invalid_argument("siren: widths must be >= 1");
  if (!(omega0 > 0.0)) throw std::invalid_argument("siren: omega0 must be > 0");
}

double SirenConfig::first_layer_bound() const {
  return first_layer == FirstLayerInit::InverseDepth ? 1.0 / depth : 1.0 / 4.0;
}

double SirenConfig::deep_layer_bound() const {
  return std::sqrt(c0 / (omega0 * omega0 * hidden));
}

Eigen::Index SirenParams::size(bool with_output_bias) const {
  Eigen::Index n = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    n += weights[l].size();
    if (with_output_bias || l + 1 < weights.size()) n += biases[l].size();
  }
  return n;
}

DenseVector SirenParams::flatten(bool with_output_bias) const {
  DenseVector flat(size(with_output_bias));
  Eigen::Index k = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    for (Eigen::Index i = 0; i < weights[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < weights[l].cols(); ++j) flat(k++) = weights[l](i, j);
    }
    if (!with_output_bias && l + 1 == weights.size()) break;
    for (Eigen::Index i = 0; i < biases[l].size(); ++i) flat(k++) = biases[l](i);
  }
  return flat;
}

void SirenParams::unflatten(const DenseVector& flat, bool with_output_bias) {
  if (flat.size() != size(with_output_bias)) {
    throw DimensionMismatch("siren: flat parameter size mismatch");
  }
  Eigen::Index k = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    for (Eigen::Index i = 0; i < weights[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < weights[l].cols(); ++j) weights[l](i, j) = flat(k++);
    }
    if (!with_output_bias && l + 1 == weights.size()) break;
    for (Eigen::Index i = 0; i < biases[l].size(); ++i) biases[l](i) = flat(k++);
  }
}

SirenParams init_siren(const SirenConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  SirenParams p;
  for (int l = 0; l < config.depth; ++l) {
    const int in = (l == 0) ? 4 : config.hidden;
    const int out = (l + 1 == config.depth) ? config.out_dim : config.hidden;
    const double bound = (l == 0) ? config.first_layer_bound() : config.deep_layer_bound();
    std::uniform_real_distribution<double> u(-bound, bound);
    DenseMatrix w(out, in);
    for (int i = 0; i < out; ++i) {
      for (int j = 0; j < in; ++j) w(i, j) = u(rng);
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(DenseVector::Zero(out));
  }
  return p;
}

SirenWeights<DenseMatrix> dense_weights(const SirenParams& params) {
  SirenWeights<DenseMatrix> w;
  for (size_t l = 0; l < params.weights.size(); ++l) {
    w.weights.push_back(params.weights[l]);
    w.biases.push_back(params.biases[l]);
  }
  return w;
}

SirenWeights<Var> record_weights(Tape& tape, const SirenParams& params) {
  SirenWeights<Var> w;
  for (size_t l = 0; l < params.weights.size(); ++l) {
    w.weights.push_back(tape.variable(params.weights[l]));
    w.biases.push_back(tape.variable(DenseMatrix(params.biases[l])));
  }
  return w;
}

DenseMatrix normalize_inputs(const InputNormalization& norm, const DenseMatrix& x) {
  if (x.rows() != 4) throw DimensionMismatch("normalize_inputs: expected 4 x P points");
  DenseMatrix xn(4, x.cols());
  for (int i = 0; i < 4; ++i) {
    const auto k = static_cast<size_t>(i);
    xn.row(i) = (x.row(i).array() * norm.scale[k] + norm.offset[k]).matrix();
  }
  return xn;
}

DenseMatrix input_direction(const InputNormalization& norm, int coordinate, Eigen::Index points) {
  DenseMatrix d = DenseMatrix::Zero(4, points);
  d.row(coordinate).setConstant(norm.scale[static_cast<size_t>(coordinate)]);
  return d;
}

DenseMatrix siren_forward(const SirenConfig& config, const SirenParams& params, const DenseMatrix& x) {
  return siren_eval(dense_weights(params), normalize_inputs(config.normalization, x), config.omega0);
}

JetBundle<DenseMatrix> siren_forward_jets(const SirenConfig& config, const SirenParams& params,
                                          const DenseMatrix& x) {
  const Eigen::Index p = x.cols();
  std::array<DenseMatrix, 4> dir;
  for (int i = 0; i < 4; ++i) dir[static_cast<size_t>(i)] = input_direction(config.normalization, i, p);
  return siren_eval_jets(dense_weights(params), normalize_inputs(config.normalization, x), dir,
                         DenseMatrix(DenseMatrix::Zero(4, p)), config.omega0);
}

DenseVector forward(const SirenConfig& config, const SirenParams& params, const SpacetimePoint& x) {
  return siren_forward(config, params, to_matrix({x})).col(0);
}

std::vector<Jet2<double>> forward_jet(const SirenConfig& config, const SirenParams& params,
                                      const SpacetimePoint& x, int coordinate) {
  if (coordinate < 0 || coordinate > 3) throw std::out_of_range("forward_jet: coordinate must be 0..3");
  const auto j = siren_forward_jets(config, params, to_matrix({x}));
  const auto c = static_cast<size_t>(coordinate);
  std::vector<Jet2<double>> out(static_cast<size_t>(j.value.rows()));
  for (Eigen::Index a = 0; a < j.value.rows(); ++a) {
    out[static_cast<size_t>(a)] = {j.value(a, 0), j.d1[c](a, 0), j.d2[c](a, 0)};
  }
  return out;
}

Var siren_record(const SirenConfig& config, const SirenWeights<Var>& w, Tape& tape,
                 const DenseMatrix& x) {
  return siren_eval(w, tape.constant(normalize_inputs(config.normalization, x)), config.omega0);
}

JetBundle<Var> siren_record_jets(const SirenConfig& config, const SirenWeights<Var>& w, Tape& tape,
                                 const DenseMatrix& x) {
  const Eigen::Index p = x.cols();
  std::array<Var, 4> dir;
  for (int i = 0; i < 4; ++i) {
    dir[static_cast<size_t>(i)] = tape.constant(input_direction(config.normalization, i, p));
  }
  return siren_eval_jets(w, tape.constant(normalize_inputs(config.normalization, x)), dir,
                         tape.constant(DenseMatrix::Zero(4, p)), config.omega0);
}

std::pair<SirenConfig, SirenParams> fold_normalization(const SirenConfig& config,
                                                       const SirenParams& params) {
  SirenConfig folded_config = config;
  folded_config.normalization = InputNormalization::identity();
  SirenParams folded = params;
  Eigen::Vector4d scale, offset;
  for (int i = 0; i < 4; ++i) {
    scale(i) = config.normalization.scale[static_cast<size_t>(i)];
    offset(i) = config.normalization.offset[static_cast<size_t>(i)];
  }
  // omega0 * W (s .* x + o) + b = omega0 * (W diag(s)) x + (b + omega0 * W o)
  folded.weights[0] = params.weights[0] * scale.asDiagonal();
  folded.biases[0] = params.biases[0] + config.omega0 * params.weights[0] * offset;
  return {folded_config, folded};
}

namespace {

constexpr char kSirenMagic[8] = {'S', 'F', 'G', 'P', 'N', 'E', 'T', '1'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void write_siren(std::ostream& os, const SirenConfig& config, const SirenParams& params) {
  os.write(kSirenMagic, sizeof(kSirenMagic));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(config.depth));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(config.hidden));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(config.out_dim));
  put<std::uint32_t>(os, config.first_layer == FirstLayerInit::InverseDepth ? 0U : 1U);
  put<double>(os, config.omega0);
  put<double>(os, config.c0);
  for (double s : config.normalization.scale) put<double>(os, s);
  for (double o : config.normalization.offset) put<double>(os, o);
  for (size_t l = 0; l < params.weights.size(); ++l) {
    const DenseMatrix& w = params.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) put<double>(os, w(i, j));
    }
    for (Eigen::Index i = 0; i < params.biases[l].size(); ++i) put<double>(os, params.biases[l](i));
  }
}

std::pair<SirenConfig, SirenParams> read_siren(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kSirenMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("checkpoint: bad network magic");
  }
  SirenConfig c;
  c.depth = static_cast<int>(get<std::uint32_t>(is));
  c.hidden = static_cast<int>(get<std::uint32_t>(is));
  c.out_dim = static_cast<int>(get<std::uint32_t>(is));
  c.first_layer = get<std::uint32_t>(is) == 0U ? FirstLayerInit::InverseDepth
                                                : FirstLayerInit::InverseInputDim;
  c.omega0 = get<double>(is);
  c.c0 = get<double>(is);
  for (double& s : c.normalization.scale) s = get<double>(is);
  for (double& o : c.normalization.offset) o = get<double>(is);
  c.validate();
  SirenParams p = init_siren(c, 0);
  for (size_t l = 0; l < p.weights.size(); ++l) {
    DenseMatrix& w = p.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = get<double>(is);
    }
    for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) p.biases[l](i) = get<double>(is);
  }
  return {c, p};
}

}  // namespace sfgp
