// Command line front end: dataset generation, training, substructured
// solves and the end-to-end case studies.

#include "msdtn/errors.hpp"
#include "msdtn/experiments.hpp"
#include "msdtn/io.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace msdtn;

namespace {

struct Options
{
  std::string              case_name = "pme1d";
  std::string              config;
  std::vector<std::string> set;
  long                     ns = 0;
  long                     seed = -1;
  std::string              loss;
  long                     epochs = -1;
  bool                     centers = false;
  std::string              out;
  int                      threads = 0;
  bool                     timings = false;
  bool                     dump_mesh = false;
  std::string              backend = "exact";
  std::string              model;
  std::string              data;
};

void add_common(CLI::App *cmd, Options &o, bool with_case)
{
  if (with_case) cmd->add_option("--case", o.case_name, "Case preset: pme1d, plap1d or pme2d");
  cmd->add_option("--config", o.config, "key = value config file (replaces the preset)");
  cmd->add_option("--set", o.set, "Override one config key, key=value (repeatable)");
  cmd->add_option("--ns", o.ns, "Number of training samples, m^d or m^d + (m-1)^d");
  cmd->add_option("--seed", o.seed, "Training seed");
  cmd->add_option("--loss", o.loss, "Loss weights c0,c1,cmon");
  cmd->add_option("--epochs", o.epochs, "Training epochs");
  cmd->add_flag("--centers", o.centers, "Add cell centers to the training grid");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--threads", o.threads, "Worker threads for sampling and training");
  cmd->add_flag("--timings", o.timings, "Write wall-clock timings (trace column and timings.csv)");
  cmd->add_flag("--dump-mesh", o.dump_mesh, "Write mesh_vertices.csv and mesh_elements.csv");
}

CaseConfig resolve(const Options &o)
{
  CaseConfig cfg = o.config.empty() ? case_preset(o.case_name) : load_config(o.config);
  for (const std::string &kv : o.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_option(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.ns > 0) cfg.ns = o.ns;
  if (o.centers) cfg.centers = true;
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  if (o.epochs >= 0) cfg.loss.epochs = o.epochs;
  if (o.threads > 0) cfg.threads = o.threads;
  if (o.timings) cfg.timings = true;
  if (!o.loss.empty()) {
    std::istringstream  in(o.loss);
    std::string         w;
    std::vector<double> c;
    while (std::getline(in, w, ',')) {
      try {
        c.push_back(std::stod(w));
      } catch (const std::exception &) {
        throw ConfigError("--loss expects three numbers c0,c1,cmon");
      }
    }
    if (c.size() != 3) throw ConfigError("--loss expects three numbers c0,c1,cmon");
    cfg.loss.c0   = c[0];
    cfg.loss.c1   = c[1];
    cfg.loss.cmon = c[2];
  }
  cfg.out_dir = !o.out.empty() ? o.out : (cfg.out_dir.empty() ? "out/" + cfg.case_name : cfg.out_dir);
  validate(cfg);
  return cfg;
}

std::string in_out(const CaseConfig &cfg, const std::string &name)
{
  fs::create_directories(cfg.out_dir);
  return (fs::path(cfg.out_dir) / name).string();
}

void maybe_dump_mesh(const Options &o, const CaseSetup &setup)
{
  if (!o.dump_mesh) return;
  std::ofstream v(in_out(setup.cfg, "mesh_vertices.csv"), std::ios::binary);
  std::ofstream e(in_out(setup.cfg, "mesh_elements.csv"), std::ios::binary);
  dump_mesh_csv(setup.mesh, v, e);
}

SurrogateModel load_for(const CaseSetup &setup, const std::string &path)
{
  LoadedModel m = load_model(path, setup.local_dim(), problem_hash(setup.cfg));
  for (const auto &w : m.warnings) std::cerr << "warning: " << w << "\n";
  return std::move(m.model);
}

void print_report(const ErrorReport &r)
{
  std::cout << "interpolation_error " << format_number(r.interpolation_error) << "\n"
            << "solution_error " << format_number(r.solution_error) << "\n"
            << "coarse_error " << format_number(r.coarse_error) << "\n"
            << "surrogate_fine_error " << format_number(r.surrogate_fine_error) << "\n"
            << "iterations exact/surrogate/warmstart " << r.iterations_exact << "/" << r.iterations_surrogate
            << "/" << r.iterations_warmstart << "\n";
}

int exit_code(std::exception_ptr e)
{
  try {
    std::rethrow_exception(e);
  } catch (const StageError &s) {
    return exit_code(s.cause);
  } catch (const ConfigError &) {
    return 2;
  } catch (const NonConvergence &) {
    return 3;
  } catch (const TrainingDivergence &) {
    return 4;
  } catch (...) {
    return 1;
  }
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"Multiscale substructuring with learned Dirichlet-to-Neumann maps"};
  app.require_subcommand(1);
  Options o;

  auto *gen = app.add_subcommand("generate-data", "Sample the exact coarse DtN map and write dataset.csv");
  add_common(gen, o, true);

  auto *trn = app.add_subcommand("train", "Train the surrogate and write model.json");
  add_common(trn, o, true);
  trn->add_option("--data", o.data, "Dataset CSV (default: generate)");

  auto *slv = app.add_subcommand("solve", "Solve the coarse substructured problem");
  add_common(slv, o, true);
  slv->add_option("--backend", o.backend, "exact, surrogate or warmstart")
    ->check(CLI::IsMember({"exact", "surrogate", "warmstart"}));
  slv->add_option("--model", o.model, "Model JSON for the surrogate and warmstart backends");

  auto *evl = app.add_subcommand("evaluate", "Error report of a trained model");
  add_common(evl, o, true);
  evl->add_option("--model", o.model, "Model JSON")->required();

  auto *rep = app.add_subcommand("reproduce", "Run a case study end to end");
  add_common(rep, o, false);
  rep->add_option("case", o.case_name, "pme1d, plap1d or pme2d")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const CaseConfig cfg = resolve(o);

    if (gen->parsed()) {
      CaseSetup setup(cfg);
      maybe_dump_mesh(o, setup);
      const DtNSampleSet data = case_dataset(setup, training_samples(cfg, setup.local_dim()));
      write_dataset(data, in_out(cfg, "dataset.csv"));
      std::cout << "wrote " << data.size() << " samples to " << in_out(cfg, "dataset.csv") << "\n";
    } else if (trn->parsed()) {
      CaseSetup          setup(cfg);
      maybe_dump_mesh(o, setup);
      const DtNSampleSet data = o.data.empty() ? case_dataset(setup, training_samples(cfg, setup.local_dim()))
                                               : read_dataset(o.data);
      if (data.dim() != setup.local_dim()) throw ConfigError("dataset dimension does not match the case");
      if (data.provenance.problem_hash != problem_hash(cfg)) {
        std::cerr << "warning: dataset was generated for problem " << data.provenance.problem_hash
                  << ", current problem is " << problem_hash(cfg) << "\n";
      }
      TrainReport          tr;
      const SurrogateModel model = case_train(setup, data, &tr);
      save_model(model, in_out(cfg, "model.json"));
      for (size_t l = 0; l < tr.components.size(); ++l) {
        std::cout << "component " << l << ": loss " << format_number(tr.components[l].initial.total) << " -> "
                  << format_number(tr.components[l].final.total) << "\n";
      }
    } else if (slv->parsed()) {
      CaseSetup setup(cfg);
      maybe_dump_mesh(o, setup);
      const SolveBackend backend = parse_backend(o.backend);
      SurrogateModel     model;
      if (backend != SolveBackend::Exact) {
        if (o.model.empty()) throw ConfigError("--model is required for the " + o.backend + " backend");
        model = load_for(setup, o.model);
      }
      const Eigen::VectorXd ref = coarse_reference(setup);
      const BackendRun      run = solve_case(setup, backend, &model, ref);
      write_trace_csv(in_out(cfg, "trace_" + o.backend + ".csv"), run.trace, cfg.timings);
      write_profile_csv(in_out(cfg, "profile_" + o.backend + ".csv"), setup.mesh, {"u"}, {run.field});
      std::cout << "newton iterations " << run.trace.iterations() << ", final residual "
                << format_number(run.trace.residual_norm.back()) << "\n";
    } else if (evl->parsed()) {
      CaseSetup            setup(cfg);
      maybe_dump_mesh(o, setup);
      const SurrogateModel model = load_for(setup, o.model);
      print_report(run_case(cfg, &model, &std::cerr));
    } else if (rep->parsed()) {
      if (o.dump_mesh) {
        CaseSetup setup(cfg);
        maybe_dump_mesh(o, setup);
      }
      print_report(run_case(cfg, nullptr, &std::cerr));
    }
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(std::current_exception());
  }
  return 0;
}
