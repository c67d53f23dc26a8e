#include "sfgp/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace sfgp {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("train: learning rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("train: adam betas must lie in (0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("train: adam eps must be > 0");
  if (epochs < 0 || n_colloc < 0 || checkpoint_interval < 0) {
    throw std::invalid_argument("train: counts must be >= 0");
  }
  if (clip_norm < 0.0) throw std::invalid_argument("train: clip_norm must be >= 0");
}

TrainState TrainState::start(const DenseVector& params) {
  TrainState s;
  s.params = params;
  s.m = DenseVector::Zero(params.size());
  s.v = DenseVector::Zero(params.size());
  return s;
}

void adam_step(TrainState& state, const DenseVector& gradient, const TrainConfig& config) {
  if (gradient.size() != state.params.size()) throw DimensionMismatch("adam_step: gradient size");
  for (Eigen::Index i = 0; i < gradient.size(); ++i) {
    if (!std::isfinite(gradient(i))) throw NonFiniteGradient(i, state.step);
  }
  DenseVector g = gradient;
  if (config.clip_norm > 0.0) {
    const double n = g.norm();
    if (n > config.clip_norm) g *= config.clip_norm / n;
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * g;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * g.cwiseProduct(g);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  state.params.array() -=
      config.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.eps);
}

TrainState train(DeepKernelModel& model, const std::vector<Dataset>& batches, const TrainConfig& config,
                 const StepObserver& observer) {
  return train(model, batches, config, TrainState::start(model.flatten()), observer);
}

TrainState train(DeepKernelModel& model, const std::vector<Dataset>& batches, const TrainConfig& config,
                 TrainState state, const StepObserver& observer) {
  config.validate();
  if (batches.empty()) throw std::invalid_argument("train: no data batches");
  for (const Dataset& b : batches) b.validate();
  if (state.params.size() != model.num_params()) throw DimensionMismatch("train: state/model size");

  const auto t0 = std::chrono::steady_clock::now();
  const double offset = state.seconds.empty() ? 0.0 : state.seconds.back();
  const CollocationSet none{DenseMatrix(4, 0)};
  const long end = state.step + config.epochs;
  while (state.step < end) {
    const long step = state.step;
    const size_t bi = config.batch == BatchStrategy::Cycle
                          ? static_cast<size_t>(step) % batches.size()
                          : 0;
    model.unflatten(state.params);
    ValueAndGradient vg;
    try {
      if (config.n_colloc > 0) {
        const CollocationSet c = sample_collocation(config.colloc_region, config.n_colloc, config.seed,
                                                    static_cast<std::uint64_t>(step));
        vg = objective_with_gradient(model, batches[bi], c);
      } else {
        vg = objective_with_gradient(model, batches[bi], none);
      }
    } catch (const std::exception& e) {
      throw TrainingError(step, e.what());
    }
    adam_step(state, vg.gradient, config);
    state.losses.push_back(vg.value);
    state.seconds.push_back(
        offset + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    model.unflatten(state.params);
    if (observer) observer(state);
    if (config.checkpoint_interval > 0 && !config.checkpoint_path.empty() &&
        state.step % config.checkpoint_interval == 0) {
      save_checkpoint(config.checkpoint_path, model, state);
    }
  }
  model.unflatten(state.params);
  if (!config.checkpoint_path.empty()) save_checkpoint(config.checkpoint_path, model, state);
  return state;
}

DeepKernelModel make_model(const SirenConfig& siren, std::uint64_t seed, double y_std) {
  if (!(y_std > 0.0)) throw std::invalid_argument("make_model: measurement std must be > 0");
  DeepKernelModel m;
  m.fm.config = siren;
  m.fm.params = init_siren(siren, seed);
  m.hyper = KernelHyper(y_std, 1.0);
  return m;
}

double pooled_std(const std::vector<Dataset>& batches) {
  double s = 0.0, s2 = 0.0;
  Eigen::Index n = 0;
  for (const Dataset& b : batches) {
    s += b.y.sum();
    s2 += b.y.squaredNorm();
    n += b.size();
  }
  if (n < 2) throw std::invalid_argument("pooled_std: need at least two measurements");
  const double mean = s / static_cast<double>(n);
  return std::sqrt(std::max(0.0, (s2 - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1)));
}

void write_loss_csv(std::ostream& os, const TrainState& state) {
  os << "step,loss,seconds\n";
  os << std::setprecision(17);
  for (size_t i = 0; i < state.losses.size(); ++i) {
    const long step = state.step - static_cast<long>(state.losses.size()) + static_cast<long>(i);
    os << step << ',' << state.losses[i] << ',' << state.seconds[i] << '\n';
  }
}

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'F', 'G', 'P', 'C', 'K', 'P', '1'};

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

void put_vector(std::ostream& os, const DenseVector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(os, v(i));
}

DenseVector get_vector(std::istream& is, Eigen::Index n) {
  DenseVector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = get<double>(is);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& os, const DeepKernelModel& model, const TrainState& state) {
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_siren(os, model.fm.config, model.fm.params);
  put<double>(os, model.hyper.log_ell);
  put<double>(os, model.hyper.log_sigma_kappa);
  put<double>(os, model.log_sigma);
  put<double>(os, model.log_sigma_z);
  put<double>(os, model.op.c);
  put<std::uint8_t>(os, model.train_noise ? 1 : 0);
  put<std::int64_t>(os, state.step);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(state.m.size()));
  put_vector(os, state.m);
  put_vector(os, state.v);
}

void save_checkpoint(const std::string& path, const DeepKernelModel& model, const TrainState& state) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  write_checkpoint(os, model, state);
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::pair<DeepKernelModel, TrainState> read_checkpoint(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  DeepKernelModel m;
  std::tie(m.fm.config, m.fm.params) = read_siren(is);
  m.hyper.log_ell = get<double>(is);
  m.hyper.log_sigma_kappa = get<double>(is);
  m.log_sigma = get<double>(is);
  m.log_sigma_z = get<double>(is);
  m.op.c = get<double>(is);
  m.train_noise = get<std::uint8_t>(is) != 0;
  TrainState s;
  s.step = static_cast<long>(get<std::int64_t>(is));
  const auto n = static_cast<Eigen::Index>(get<std::uint64_t>(is));
  if (n != m.num_params()) throw std::runtime_error("checkpoint: Adam state size mismatch");
  s.params = m.flatten();
  s.m = get_vector(is, n);
  s.v = get_vector(is, n);
  return {m, s};
}

std::pair<DeepKernelModel, TrainState> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  return read_checkpoint(is);
}

GradientReport validate_gradients(const DeepKernelModel& model, const Dataset& data,
                                  const CollocationSet& colloc, double step) {
  GradientReport r;
  r.num_params = model.num_params();
  auto check = [&](const CollocationSet& c, double& err, Eigen::Index& worst) {
    const DifferentiableLoss loss = [&](const DenseVector& p) {
      DeepKernelModel m = model;
      m.unflatten(p);
      return objective_with_gradient(m, data, c);
    };
    const GradCheckResult g = grad_check(loss, model.flatten(), step);
    err = g.max_rel_error;
    worst = g.worst_index;
  };
  check(CollocationSet{DenseMatrix(4, 0)}, r.dk_max_rel_error, r.dk_worst);
  check(colloc, r.dkpde_max_rel_error, r.dkpde_worst);
  return r;
}

}  // namespace sfgp
