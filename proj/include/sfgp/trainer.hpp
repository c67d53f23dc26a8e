#ifndef SFGP_TRAINER_HPP
#define SFGP_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfgp/gp.hpp"

namespace sfgp {

class NonFiniteGradient : public std::runtime_error {
public:
  NonFiniteGradient(Eigen::Index index, long step)
      : std::runtime_error("non-finite gradient at parameter " + std::to_string(index) + ", step " +
                           std::to_string(step)),
        index(index),
        step(step) {}
  Eigen::Index index;
  long step;
};

/// A factorization or evaluation failure inside train(), tagged with the step.
class TrainingError : public std::runtime_error {
public:
  TrainingError(long step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step(step) {}
  long step;
};

enum class BatchStrategy { Single, Cycle };

struct TrainConfig {
  long epochs = 20000;  // gradient steps
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int n_colloc = 0;  // 0: DK objective
  BatchStrategy batch = BatchStrategy::Cycle;
  std::uint64_t seed = 0;
  double clip_norm = 0.0;  // gradient-norm clipping, 0 = off
  long checkpoint_interval = 0;
  std::string checkpoint_path;  // written every checkpoint_interval steps and at the end
  SpacetimeRegion colloc_region;

  void validate() const;
};

struct TrainState {
  DenseVector params;
  DenseVector m;
  DenseVector v;
  long step = 0;
  std::vector<double> losses;   // objective at the pre-step parameters
  std::vector<double> seconds;  // cumulative wall time after each step

  static TrainState start(const DenseVector& params);
};

/// One bias-corrected Adam update. Throws NonFiniteGradient (state untouched)
/// if any gradient entry is NaN or infinite.
void adam_step(TrainState& state, const DenseVector& gradient, const TrainConfig& config);

/// Called after every step.
using StepObserver = std::function<void(const TrainState&)>;

/// Runs config.epochs steps from the model's current parameters and leaves
/// the trained parameters in `model`. With n_colloc > 0 a fresh collocation set
/// is drawn each step from (seed, step).
TrainState train(DeepKernelModel& model, const std::vector<Dataset>& batches, const TrainConfig& config,
                 const StepObserver& observer = {});

/// Continues from a restored state (same flat layout as the model).
TrainState train(DeepKernelModel& model, const std::vector<Dataset>& batches, const TrainConfig& config,
                 TrainState state, const StepObserver& observer = {});

/// Standard model setup: SIREN init from `seed`, ell = 1, sigma_kappa = std(Y).
DeepKernelModel make_model(const SirenConfig& siren, std::uint64_t seed, double y_std);

/// Sample standard deviation of all measurements in the batches.
double pooled_std(const std::vector<Dataset>& batches);

/// CSV: step,loss,seconds
void write_loss_csv(std::ostream& os, const TrainState& state);

/// Binary checkpoint: network (featurenet format), hyperparameters, Adam state.
void write_checkpoint(std::ostream& os, const DeepKernelModel& model, const TrainState& state);
void save_checkpoint(const std::string& path, const DeepKernelModel& model, const TrainState& state);
std::pair<DeepKernelModel, TrainState> read_checkpoint(std::istream& is);
std::pair<DeepKernelModel, TrainState> load_checkpoint(const std::string& path);

struct GradientReport {
  double dk_max_rel_error = 0.0;
  double dkpde_max_rel_error = 0.0;
  Eigen::Index dk_worst = -1;
  Eigen::Index dkpde_worst = -1;
  Eigen::Index num_params = 0;
};

/// Finite-difference check of both objectives at the model's parameters.
GradientReport validate_gradients(const DeepKernelModel& model, const Dataset& data,
                                  const CollocationSet& colloc, double step = 1e-6);

}  // namespace sfgp

#endif  // SFGP_TRAINER_HPP
