#ifndef SFGP_ACOUSTICS_HPP
#define SFGP_ACOUSTICS_HPP

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfgp/gp.hpp"

namespace sfgp {

class PlacementError : public std::runtime_error {
public:
  explicit PlacementError(const std::string& what) : std::runtime_error(what) {}
};

/// Shoebox room, source and microphone-array setup. Positions in meters,
/// room corner at the origin.
struct RoomScenario {
  Eigen::Vector3d room{6.0, 5.0, 3.0};
  double alpha = 0.55;  // energy absorption, all six walls
  int max_order = 26;
  double c = 343.0;
  double fs = 3000.0;
  Eigen::Vector3d source{1.0, 2.0, 1.5};
  Eigen::Vector3d array_center{4.0, 3.0, 1.5};
  double array_side = 0.5;
  int mics = 30;
  int batch_len = 50;     // samples per batch
  int train_batches = 10;
  int eval_batches = 1;   // held out, following the training batches in time
  int eval_points = 100;
  double snr_db = 40.0;
  double band_lo = 50.0;
  double band_hi = 1000.0;
  int source_taps = 257;
  bool normalize = true;  // scale so the clean mic signals have unit std
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument for inconsistent values and PlacementError
  /// when the source or the array cube is not strictly inside the room.
  void validate() const;
  double batch_seconds() const { return batch_len / fs; }
  SpacetimeRegion array_region() const;
};

struct ImageSource {
  Eigen::Vector3d position;
  double amplitude;  // beta^order / (4 pi distance)
  int order;
};

/// All images with total reflection order <= max_order, beta = sqrt(1 - alpha).
std::vector<ImageSource> image_sources(const RoomScenario& s, const Eigen::Vector3d& mic);

struct ImpulseResponse {
  DenseVector samples;
  double fs = 0.0;

  Eigen::Index length() const { return samples.size(); }
};

/// Each image adds an 81-tap Hann-windowed sinc centered at distance/c*fs
/// (taps before sample 0 are dropped).
ImpulseResponse render_rir(const RoomScenario& s, const Eigen::Vector3d& mic);

constexpr int kFractionalDelayTaps = 81;

/// Adds amplitude * windowed sinc centered at `delay` samples into `out`.
void add_fractional_impulse(DenseVector& out, double delay, double amplitude);

/// Energy decay curve in dB (0 at t = 0).
DenseVector schroeder_curve_db(const ImpulseResponse& h);

/// T60 by a linear fit of the decay curve between -5 and -25 dB, times 3.
double schroeder_t60(const ImpulseResponse& h);

/// Linear-phase windowed-sinc bandpass (Hamming), odd tap count.
DenseVector bandpass_fir(double lo, double hi, double fs, int taps);

/// Filter with the FIR group delay removed: out[n] = sum_k h[k] x[n + (K-1)/2 - k],
/// zero outside the input.
DenseVector filter_zero_phase(const DenseVector& h, const DenseVector& x);

/// Band-limited Gaussian noise of `samples` length: unit-variance white noise
/// through bandpass_fir, group delay compensated.
DenseVector synth_source(const RoomScenario& s, Eigen::Index samples, std::uint64_t seed);

/// Samples [first, first + count) of rir * source for every receiver.
/// Receivers are columns of `positions` (3 x P); result is P x count.
DenseMatrix render_field(const RoomScenario& s, const Eigen::Matrix3Xd& positions,
                         const DenseVector& source, Eigen::Index first, Eigen::Index count);

/// Uniform points in the array cube.
Eigen::Matrix3Xd sample_in_cube(const Eigen::Vector3d& center, double side, int n, std::uint64_t seed,
                                std::uint64_t stream);

/// Space-time inputs for P receivers and N samples at local times n/fs,
/// receiver-major (index p * N + n).
DenseMatrix spacetime_grid(const Eigen::Matrix3Xd& positions, int samples, double fs);

/// Flattens a P x N signal matrix in the spacetime_grid order.
DenseVector flatten_signals(const DenseMatrix& signals);

struct Simulation {
  RoomScenario scenario;
  Eigen::Matrix3Xd mics;
  Eigen::Matrix3Xd eval_positions;
  std::vector<Dataset> train;        // noisy mic batches
  std::vector<Dataset> eval_inputs;  // noisy mic data of the held-out batches
  std::vector<DenseMatrix> eval_truth;  // clean eval signals, eval_points x batch_len
  std::vector<DenseMatrix> clean_mics;  // clean mic signals per batch (train then eval), M x N
  std::vector<DenseVector> rirs;     // per microphone
  double scale = 1.0;      // applied to every rendered signal
  double noise_std = 0.0;

  /// Evaluation inputs (4 x P*N), shared by all held-out batches.
  DenseMatrix eval_grid() const;
};

/// Full scenario: draws the source signal, microphone and evaluation
/// positions from the scenario seed, renders, normalizes and adds noise.
Simulation simulate(const RoomScenario& s);

/// Same with an explicit source signal (length >= simulation_length(s)).
Simulation simulate(const RoomScenario& s, const DenseVector& source);

/// Source samples needed by simulate().
Eigen::Index simulation_length(const RoomScenario& s);

/// Samples skipped before the first batch so every batch sees the full RIR.
Eigen::Index warmup_samples(const RoomScenario& s);

/// 10 log10(clean power / noise power) pooled over the given batches.
double measured_snr_db(const std::vector<DenseMatrix>& clean, const std::vector<Dataset>& noisy);

/// Binary container, see README for the layout. Round trip is bit-exact.
void write_simulation(std::ostream& os, const Simulation& sim);
Simulation read_simulation(std::istream& is);
void save_simulation(const std::string& path, const Simulation& sim);
Simulation load_simulation(const std::string& path);

}  // namespace sfgp

#endif  // SFGP_ACOUSTICS_HPP
