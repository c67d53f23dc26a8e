// Command-line front end: simulate, train, evaluate, run, gradcheck.
//
// Failures print one line to stderr,
//   error kind=<kind> [key=<key> line=<n>] message="<text>"
// and exit nonzero (2 for usage/config problems, 3 for runtime failures,
// 4 when gradcheck exceeds its tolerance).

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "sfgp/experiment.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> method;
  std::optional<int> colloc;
  std::optional<int> realizations;
  bool quiet = false;
};

std::string quoted(const std::string& s) {
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') q += '\\';
    q += ch == '\n' ? ' ' : ch;
  }
  return q + "\"";
}

int fail(const std::string& kind, const std::string& message, int code, const std::string& extra = {}) {
  std::cerr << "error kind=" << kind << extra << " message=" << quoted(message) << std::endl;
  return code;
}

sfgp::ExperimentConfig load(const Options& o) {
  sfgp::ExperimentConfig c = o.config.empty() ? sfgp::parse_config_text("") : sfgp::parse_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  if (o.method) c.method = sfgp::parse_method(*o.method);
  if (o.colloc) c.n_colloc = *o.colloc;
  if (o.realizations) c.realizations = *o.realizations;
  c.validate();
  return c;
}

fs::path sim_path(const sfgp::ExperimentConfig& c, int r) {
  return fs::path(c.out_dir) / ("sim_" + std::to_string(r) + ".bin");
}

fs::path model_path(const sfgp::ExperimentConfig& c, int r) {
  return fs::path(c.out_dir) / ("model_" + sfgp::method_name(c.method, c.n_colloc) + "_" + std::to_string(r) + ".ckpt");
}

// A saved simulation is used when present so train/evaluate see the same data
// as a previous `simulate`; otherwise it is regenerated from the seed.
sfgp::Simulation simulation_for(const sfgp::ExperimentConfig& c, int r) {
  const fs::path p = sim_path(c, r);
  if (fs::exists(p)) return sfgp::load_simulation(p.string());
  return sfgp::simulate(sfgp::realization_scenario(c, r));
}

void say(const Options& o, const std::string& line) {
  if (!o.quiet) std::cout << line << std::endl;
}

int cmd_simulate(const Options& o) {
  const sfgp::ExperimentConfig c = load(o);
  fs::create_directories(c.out_dir);
  for (int r = 0; r < c.realizations; ++r) {
    const sfgp::Simulation sim = sfgp::simulate(sfgp::realization_scenario(c, r));
    sfgp::save_simulation(sim_path(c, r).string(), sim);
    std::vector<sfgp::Dataset> all = sim.train;
    all.insert(all.end(), sim.eval_inputs.begin(), sim.eval_inputs.end());
    const double t60 = sfgp::schroeder_t60({sim.rirs.front(), sim.scenario.fs});
    say(o, "realization " + std::to_string(r) + " wrote " + sim_path(c, r).string() + " snr_db " +
               std::to_string(sfgp::measured_snr_db(sim.clean_mics, all)) + " t60 " + std::to_string(t60));
  }
  return 0;
}

int cmd_train(const Options& o) {
  const sfgp::ExperimentConfig c = load(o);
  if (c.method == sfgp::Method::Diffuse) {
    return fail("usage", "the diffuse method has nothing to train; use evaluate or run", 2);
  }
  fs::create_directories(c.out_dir);
  for (int r = 0; r < c.realizations; ++r) {
    const sfgp::Simulation sim = simulation_for(c, r);
    sfgp::DeepKernelModel model = sfgp::initial_model(c, sim, r);
    const sfgp::TrainState s = sfgp::fit(c, sim, model, r, model_path(c, r).string());
    const fs::path loss = fs::path(c.out_dir) /
                          ("loss_" + sfgp::method_name(c.method, c.n_colloc) + "_" + std::to_string(r) + ".csv");
    std::ofstream os(loss);
    sfgp::write_loss_csv(os, s);
    say(o, "realization " + std::to_string(r) + " steps " + std::to_string(s.step) + " final_loss " +
               (s.losses.empty() ? std::string("nan") : std::to_string(s.losses.back())) + " checkpoint " +
               model_path(c, r).string());
  }
  return 0;
}

int cmd_evaluate(const Options& o) {
  const sfgp::ExperimentConfig c = load(o);
  std::vector<sfgp::ReportRow> rows;
  for (int r = 0; r < c.realizations; ++r) {
    const sfgp::Simulation sim = simulation_for(c, r);
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<sfgp::DenseMatrix> est;
    if (c.method == sfgp::Method::Diffuse) {
      est = sfgp::predict(c, sim, nullptr);
    } else {
      const fs::path p = model_path(c, r);
      if (!fs::exists(p)) throw std::runtime_error("missing checkpoint " + p.string() + " (run train first)");
      const auto [model, state] = sfgp::load_checkpoint(p.string());
      est = sfgp::predict(c, sim, &model);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto part = sfgp::score(c, sim, est, r, secs);
    rows.insert(rows.end(), part.begin(), part.end());
    say(o, "realization " + std::to_string(r) + " " + part.front().method + " nmse_db " +
               std::to_string(part.front().nmse_db));
  }
  fs::create_directories(c.out_dir);
  std::ofstream os(fs::path(c.out_dir) / "results.csv");
  sfgp::write_rows_csv(os, rows);
  std::ofstream agg(fs::path(c.out_dir) / "summary.csv");
  sfgp::write_rows_csv(agg, sfgp::aggregate_rows(rows));
  return 0;
}

int cmd_run(const Options& o) {
  const sfgp::ExperimentConfig c = load(o);
  const sfgp::EvalReport r = sfgp::run(c, [&](const std::string& line) { say(o, line); });
  for (const sfgp::ReportRow& a : r.aggregate) {
    say(o, "mean " + a.method + " [" + std::to_string(a.band_lo) + ", " + std::to_string(a.band_hi) + "] " +
               std::to_string(a.nmse_db) + " dB");
  }
  say(o, "wrote " + (fs::path(c.out_dir) / "results.csv").string());
  return 0;
}

int cmd_gradcheck(const Options& o) {
  const sfgp::ExperimentConfig c = load(o);
  const sfgp::GradientReport r = sfgp::gradcheck_tiny(c.scenario, c.seed);
  std::cout << "params " << r.num_params << " dk_max_rel_error " << r.dk_max_rel_error
            << " dkpde_max_rel_error " << r.dkpde_max_rel_error << std::endl;
  if (r.dk_max_rel_error < 1e-5 && r.dkpde_max_rel_error < 1e-5) return 0;
  return fail("gradcheck", "finite-difference mismatch above 1e-5", 4);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep-kernel GP sound-field estimation experiments"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value config file (defaults when omitted)");
    sub->add_option("--seed", o.seed, "base seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--method", o.method, "diffuse | dk | dkpde");
    sub->add_option("--colloc", o.colloc, "collocation points per step (dkpde)");
    sub->add_option("--realizations", o.realizations, "number of realizations");
    sub->add_flag("--quiet", o.quiet, "only errors");
  };
  struct Verb {
    const char* name;
    const char* help;
    int (*fn)(const Options&);
  };
  const Verb verbs[] = {
      {"simulate", "render the scenario and save sim_<r>.bin", cmd_simulate},
      {"train", "fit the deep kernel and save checkpoints", cmd_train},
      {"evaluate", "score saved checkpoints (or the diffuse baseline)", cmd_evaluate},
      {"run", "simulate, train and evaluate every realization", cmd_run},
      {"gradcheck", "finite-difference check of both objectives", cmd_gradcheck},
  };
  int (*chosen)(const Options&) = nullptr;
  for (const Verb& v : verbs) {
    CLI::App* sub = app.add_subcommand(v.name, v.help);
    common(sub);
    auto fn = v.fn;
    sub->callback([&chosen, fn] { chosen = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    return chosen(o);
  } catch (const sfgp::ParseError& e) {
    return fail("config", e.what(), 2, " key=" + e.key + " line=" + std::to_string(e.line));
  } catch (const sfgp::PlacementError& e) {
    return fail("placement", e.what(), 2);
  } catch (const std::invalid_argument& e) {
    return fail("invalid_argument", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 3);
  }
}
