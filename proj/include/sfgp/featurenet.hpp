#ifndef SFGP_FEATURENET_HPP
#define SFGP_FEATURENET_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sfgp/autodiff.hpp"
#include "sfgp/linalg.hpp"

namespace sfgp {

/// Position (m) and time (s).
struct SpacetimePoint {
  Eigen::Vector3d r = Eigen::Vector3d::Zero();
  double t = 0.0;
};

/// Points as a 4 x P matrix, rows (x, y, z, t).
DenseMatrix to_matrix(const std::vector<SpacetimePoint>& points);

/// Fixed affine pre-layer: normalized_i = scale_i * x_i + offset_i.
struct InputNormalization {
  std::array<double, 4> scale{1.0, 1.0, 1.0, 1.0};
  std::array<double, 4> offset{0.0, 0.0, 0.0, 0.0};

  static InputNormalization identity() { return {}; }
  /// Positions to (r - center) / half_extent, time to 2t/span - 1.
  static InputNormalization for_region(const Eigen::Vector3d& center, double half_extent,
                                       double time_span);
};

enum class FirstLayerInit { InverseDepth, InverseInputDim };

struct SirenConfig {
  int depth = 5;
  int hidden = 100;
  int out_dim = 100;
  double omega0 = 30.0;
  double c0 = 6.0;
  FirstLayerInit first_layer = FirstLayerInit::InverseDepth;
  InputNormalization normalization;

  void validate() const;
  double first_layer_bound() const;
  double deep_layer_bound() const;
};

/// Layer weights (out x in) and biases, input layer first.
struct SirenParams {
  std::vector<DenseMatrix> weights;
  std::vector<DenseVector> biases;

  /// Parameter count; the output-layer bias is left out when
  /// `with_output_bias` is false.
  Eigen::Index size(bool with_output_bias = true) const;
  DenseVector flatten(bool with_output_bias = true) const;
  void unflatten(const DenseVector& flat, bool with_output_bias = true);
};

SirenParams init_siren(const SirenConfig& config, std::uint64_t seed);

/// Value channel plus d1/d2 channels for each of the 4 input coordinates.
template <class V>
struct JetBundle {
  V value;
  std::array<V, 4> d1;
  std::array<V, 4> d2;
};

/// Weights in the value type of the evaluation path (DenseMatrix or Var).
template <class V>
struct SirenWeights {
  std::vector<V> weights;
  std::vector<V> biases;  // column vectors
};

SirenWeights<DenseMatrix> dense_weights(const SirenParams& params);
SirenWeights<Var> record_weights(Tape& tape, const SirenParams& params);

/// Normalized inputs (4 x P) from physical points.
DenseMatrix normalize_inputs(const InputNormalization& norm, const DenseMatrix& x);

/// Jet seed for coordinate i: row i holds the normalization scale.
DenseMatrix input_direction(const InputNormalization& norm, int coordinate, Eigen::Index points);

/// Hidden layers sin(omega0 * W a + b); last layer omega0 * W a + b.
template <class V>
V siren_eval(const SirenWeights<V>& w, const V& xn, double omega0) {
  const Eigen::Index p = xn.cols();
  V a = xn;
  const size_t depth = w.weights.size();
  for (size_t l = 0; l < depth; ++l) {
    V z = add(scale(mm(w.weights[l], a), omega0), rep_cols(w.biases[l], p));
    a = (l + 1 < depth) ? sin(z) : z;
  }
  return a;
}

/// Same value computation as siren_eval, with the order-2 jets along every
/// input coordinate carried alongside. `direction[i]` is the jet seed from
/// input_direction.
template <class V>
JetBundle<V> siren_eval_jets(const SirenWeights<V>& w, const V& xn,
                             const std::array<V, 4>& direction, const V& zero_input,
                             double omega0) {
  const Eigen::Index p = xn.cols();
  JetBundle<V> j{xn, direction, {zero_input, zero_input, zero_input, zero_input}};
  const size_t depth = w.weights.size();
  for (size_t l = 0; l < depth; ++l) {
    V z = add(scale(mm(w.weights[l], j.value), omega0), rep_cols(w.biases[l], p));
    std::array<V, 4> z1, z2;
    for (int i = 0; i < 4; ++i) {
      z1[i] = scale(mm(w.weights[l], j.d1[i]), omega0);
      z2[i] = scale(mm(w.weights[l], j.d2[i]), omega0);
    }
    if (l + 1 < depth) {
      V s = sin(z);
      V c = cos(z);
      j.value = s;
      for (int i = 0; i < 4; ++i) {
        j.d1[i] = mul(c, z1[i]);
        j.d2[i] = sub(mul(c, z2[i]), mul(s, mul(z1[i], z1[i])));
      }
    } else {
      j.value = z;
      j.d1 = z1;
      j.d2 = z2;
    }
  }
  return j;
}

/// Features of physical points (4 x P) as an out_dim x P matrix.
DenseMatrix siren_forward(const SirenConfig& config, const SirenParams& params, const DenseMatrix& x);

/// Features and all four coordinate jets for physical points.
JetBundle<DenseMatrix> siren_forward_jets(const SirenConfig& config, const SirenParams& params,
                                          const DenseMatrix& x);

/// Features of a single point.
DenseVector forward(const SirenConfig& config, const SirenParams& params, const SpacetimePoint& x);

/// Per-feature jets of a single point along physical coordinate i (0..3).
std::vector<Jet2<double>> forward_jet(const SirenConfig& config, const SirenParams& params,
                                      const SpacetimePoint& x, int coordinate);

/// Recorded variants used inside differentiable objectives.
Var siren_record(const SirenConfig& config, const SirenWeights<Var>& w, Tape& tape,
                 const DenseMatrix& x);
JetBundle<Var> siren_record_jets(const SirenConfig& config, const SirenWeights<Var>& w, Tape& tape,
                                 const DenseMatrix& x);

/// Folds the normalization into the first layer so the same network acts
/// directly on physical coordinates (returned config has identity normalization).
std::pair<SirenConfig, SirenParams> fold_normalization(const SirenConfig& config,
                                                       const SirenParams& params);

/// Binary checkpoint: see README for the byte layout.
void write_siren(std::ostream& os, const SirenConfig& config, const SirenParams& params);
std::pair<SirenConfig, SirenParams> read_siren(std::istream& is);

}  // namespace sfgp

#endif  // SFGP_FEATURENET_HPP
