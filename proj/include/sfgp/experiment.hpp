#ifndef SFGP_EXPERIMENT_HPP
#define SFGP_EXPERIMENT_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sfgp/acoustics.hpp"
#include "sfgp/trainer.hpp"

namespace sfgp {

class ParseError : public std::runtime_error {
public:
  ParseError(int line, const std::string& key, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ", key '" + key + "': " + what),
        line(line),
        key(key) {}
  int line;
  std::string key;
};

class ZeroReference : public std::invalid_argument {
public:
  explicit ZeroReference(const std::string& what) : std::invalid_argument(what) {}
};

enum class Method { Diffuse, DK, DKPDE };
enum class BandFilter { Fir, FftMask };

std::string method_name(Method m, int n_colloc);  // "diffuse", "DK", "DKPDE10", ...
Method parse_method(const std::string& s);        // diffuse | dk | dkpde (any case)

struct Band {
  double lo;
  double hi;
};

struct ExperimentConfig {
  RoomScenario scenario;
  TrainConfig train;
  SirenConfig siren;
  Method method = Method::DKPDE;
  int n_colloc = 10;
  int realizations = 10;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  double sigma_init = 1e-2;    // GP noise std (normalized units)
  double sigma_z_init = 1e-2;
  bool train_noise = false;
  std::vector<Band> bands{{50, 200}, {200, 400}, {400, 700}, {700, 1000}};
  BandFilter band_filter = BandFilter::Fir;
  int band_taps = 129;
  int diffuse_freqs = 1025;
  double diffuse_sigma = 1e-2;
  bool record_timing = false;  // seconds column is 0 unless set

  void validate() const;
  /// Canonical key = value listing of every setting, sorted by key.
  std::string canonical() const;
  /// FNV-1a 64 of canonical().
  std::uint64_t hash() const;
};

/// key = value lines, '#' starts a comment. Unknown keys and malformed
/// values raise ParseError with the line and key.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);

/// 10 log10(|u - u_hat|^2 / |u|^2) pooled over every entry, floored at -120 dB.
double nmse_db(const DenseMatrix& truth, const DenseMatrix& estimate);
double nmse_db(const std::vector<DenseMatrix>& truth, const std::vector<DenseMatrix>& estimate);

constexpr double kNmseFloorDb = -120.0;

/// Filters every row (one signal per row) to the band.
DenseMatrix band_filter_rows(const DenseMatrix& signals, const Band& band, double fs, BandFilter kind,
                             int taps);

struct BandResult {
  Band band;
  double nmse_db;
};

/// Per-band NMSE with identical filters applied to truth and estimate.
std::vector<BandResult> band_nmse(const std::vector<DenseMatrix>& truth,
                                  const std::vector<DenseMatrix>& estimate, const std::vector<Band>& bands,
                                  double fs, BandFilter kind, int taps);

struct ReportRow {
  int realization;  // -1 on aggregate rows
  std::string method;
  double band_lo;   // full-band rows: 0 and fs/2
  double band_hi;
  double nmse_db;
  double seconds;
};

struct EvalReport {
  std::vector<ReportRow> rows;       // per realization, full band first
  std::vector<ReportRow> aggregate;  // mean over realizations
  std::uint64_t config_hash = 0;
  long optimizer_steps = 0;
  double seconds = 0.0;
};

/// Realization-specific scenario and seeds.
RoomScenario realization_scenario(const ExperimentConfig& c, int realization);
std::uint64_t realization_seed(const ExperimentConfig& c, int realization);

/// SIREN configuration with the input normalization for the array region.
SirenConfig normalized_siren(const ExperimentConfig& c);

/// Untrained model for a simulation (ell = 1, sigma_kappa = std(Y)).
DeepKernelModel initial_model(const ExperimentConfig& c, const Simulation& sim, int realization);

/// Trains per the configured method (no-op for diffuse; returns an empty state).
TrainState fit(const ExperimentConfig& c, const Simulation& sim, DeepKernelModel& model, int realization,
               const std::string& checkpoint_path = {});

/// Posterior means at the evaluation grid, one eval_points x batch_len matrix
/// per held-out batch. `model` is ignored for the diffuse method.
std::vector<DenseMatrix> predict(const ExperimentConfig& c, const Simulation& sim,
                                 const DeepKernelModel* model);

/// Full-band and per-band rows for one realization.
std::vector<ReportRow> score(const ExperimentConfig& c, const Simulation& sim,
                             const std::vector<DenseMatrix>& estimate, int realization, double seconds);

using ProgressFn = std::function<void(const std::string&)>;

/// Simulate, fit, predict and score every realization, then write
/// results.csv, summary.csv and report.txt to out_dir.
EvalReport run(const ExperimentConfig& c, const ProgressFn& progress = {});

/// Finite-difference check of both objectives on a 2-layer, width-8 network
/// with 10 measurements and 4 collocation points drawn in the array region.
GradientReport gradcheck_tiny(const RoomScenario& s, std::uint64_t seed);

void write_rows_csv(std::ostream& os, const std::vector<ReportRow>& rows);
std::vector<ReportRow> aggregate_rows(const std::vector<ReportRow>& rows);
void write_report_text(std::ostream& os, const ExperimentConfig& c, const EvalReport& r);

}  // namespace sfgp

#endif  // SFGP_EXPERIMENT_HPP
