#include "msdtn/experiments.hpp"
#include "msdtn/errors.hpp"
#include "msdtn/io.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

namespace msdtn {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string trim(const std::string &s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string &key, const std::string &v)
{
  size_t pos = 0;
  double x   = 0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception &) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) throw ConfigError("option " + key + ": '" + v + "' is not a number");
  return x;
}

long to_long(const std::string &key, const std::string &v)
{
  size_t pos = 0;
  long   x   = 0;
  try {
    x = std::stol(v, &pos);
  } catch (const std::exception &) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) throw ConfigError("option " + key + ": '" + v + "' is not an integer");
  return x;
}

bool to_bool(const std::string &key, const std::string &v)
{
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("option " + key + ": '" + v + "' is not a boolean");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

struct Option
{
  const char                                                  *key;
  std::function<void(CaseConfig &, const std::string &)>       set;
  std::function<std::string(const CaseConfig &)>              get;
};

template <typename T> Option real(const char *key, T CaseConfig::*m)
{
  return {key, [key, m](CaseConfig &c, const std::string &v) { c.*m = to_double(key, v); },
          [m](const CaseConfig &c) { return format_number(c.*m); }};
}

template <typename T> Option integer(const char *key, T CaseConfig::*m)
{
  return {key, [key, m](CaseConfig &c, const std::string &v) { c.*m = static_cast<T>(to_long(key, v)); },
          [m](const CaseConfig &c) { return std::to_string(c.*m); }};
}

Option boolean(const char *key, bool CaseConfig::*m)
{
  return {key, [key, m](CaseConfig &c, const std::string &v) { c.*m = to_bool(key, v); },
          [m](const CaseConfig &c) { return from_bool(c.*m); }};
}

Option text(const char *key, std::string CaseConfig::*m)
{
  return {key, [m](CaseConfig &c, const std::string &v) { c.*m = v; }, [m](const CaseConfig &c) { return c.*m; }};
}

template <typename T> Option loss_real(const char *key, T LossConfig::*m)
{
  return {key, [key, m](CaseConfig &c, const std::string &v) { c.loss.*m = to_double(key, v); },
          [m](const CaseConfig &c) { return format_number(c.loss.*m); }};
}

template <typename T> Option loss_integer(const char *key, T LossConfig::*m)
{
  return {key, [key, m](CaseConfig &c, const std::string &v) { c.loss.*m = static_cast<T>(to_long(key, v)); },
          [m](const CaseConfig &c) { return std::to_string(c.loss.*m); }};
}

const std::vector<Option> &options()
{
  static const std::vector<Option> table = {
    text("case", &CaseConfig::case_name),
    integer("dim", &CaseConfig::dim),
    integer("subdomains", &CaseConfig::subdomains),
    integer("cells", &CaseConfig::cells),
    text("flux", &CaseConfig::flux),
    real("exponent", &CaseConfig::exponent),
    real("reaction", &CaseConfig::reaction),
    text("coefficient", &CaseConfig::coefficient),
    boolean("periodize", &CaseConfig::periodize),
    real("u_left", &CaseConfig::u_left),
    real("u_right", &CaseConfig::u_right),
    real("u_scale", &CaseConfig::u_scale),
    integer("ns", &CaseConfig::ns),
    boolean("centers", &CaseConfig::centers),
    {"hidden",
     [](CaseConfig &c, const std::string &v) {
       c.hidden.clear();
       std::istringstream in(v);
       std::string        w;
       while (std::getline(in, w, ',')) c.hidden.push_back(static_cast<int>(to_long("hidden", trim(w))));
     },
     [](const CaseConfig &c) {
       std::string s;
       for (size_t k = 0; k < c.hidden.size(); ++k) s += (k ? "," : "") + std::to_string(c.hidden[k]);
       return s;
     }},
    loss_real("c0", &LossConfig::c0),
    loss_real("c1", &LossConfig::c1),
    loss_real("cmon", &LossConfig::cmon),
    {"monotonicity",
     [](CaseConfig &c, const std::string &v) {
       if (v == "full_sign") c.loss.variant = MonotonicityVariant::FullSign;
       else if (v == "diagonal_only") c.loss.variant = MonotonicityVariant::DiagonalOnly;
       else throw ConfigError("option monotonicity: expected full_sign or diagonal_only");
     },
     [](const CaseConfig &c) {
       return std::string(c.loss.variant == MonotonicityVariant::FullSign ? "full_sign" : "diagonal_only");
     }},
    {"quadrature",
     [](CaseConfig &c, const std::string &v) {
       if (v == "grid") c.loss.quadrature = MonotonicityQuadrature::Grid;
       else if (v == "monte_carlo") c.loss.quadrature = MonotonicityQuadrature::MonteCarlo;
       else throw ConfigError("option quadrature: expected grid or monte_carlo");
     },
     [](const CaseConfig &c) {
       return std::string(c.loss.quadrature == MonotonicityQuadrature::Grid ? "grid" : "monte_carlo");
     }},
    loss_integer("grid_points", &LossConfig::grid_points),
    loss_integer("mc_points", &LossConfig::mc_points),
    loss_real("u_min", &LossConfig::u_min),
    loss_real("u_max", &LossConfig::u_max),
    loss_real("learning_rate", &LossConfig::learning_rate),
    loss_integer("epochs", &LossConfig::epochs),
    {"seed", [](CaseConfig &c, const std::string &v) { c.seed = static_cast<std::uint64_t>(to_long("seed", v)); },
     [](const CaseConfig &c) { return std::to_string(c.seed); }},
    integer("train_subdomain", &CaseConfig::train_subdomain),
    integer("eval_points", &CaseConfig::eval_points),
    boolean("eval_centers", &CaseConfig::eval_centers),
    real("local_tol", &CaseConfig::local_tol),
    real("exact_tol", &CaseConfig::exact_tol),
    real("surrogate_tol", &CaseConfig::surrogate_tol),
    real("reference_tol", &CaseConfig::reference_tol),
    integer("max_iter", &CaseConfig::max_iter),
    real("target_error", &CaseConfig::target_error),
    integer("threads", &CaseConfig::threads),
    text("out_dir", &CaseConfig::out_dir),
    boolean("timings", &CaseConfig::timings),
  };
  return table;
}

/// Runs fn, wrapping any failure in a StageError naming the stage.
template <typename Fn> auto stage(const std::string &name, Fn &&fn) -> decltype(fn())
{
  try {
    return fn();
  } catch (const StageError &) {
    throw;
  } catch (const std::exception &e) {
    throw StageError(name, std::current_exception(), e.what());
  }
}

std::function<double(const Eigen::VectorXd &)> distance_to(const Eigen::VectorXd &reference)
{
  if (reference.size() == 0) return {};
  const double scale = reference.norm() > 0 ? reference.norm() : 1.0;
  return [reference, scale](const Eigen::VectorXd &g) { return (g - reference).norm() / scale; };
}

BackendRun finish(CaseSetup &setup, SubstructuredSolution sol, std::chrono::steady_clock::time_point t0)
{
  BackendRun run;
  run.g       = std::move(sol.g);
  run.trace   = std::move(sol.trace);
  run.seconds = seconds_since(t0);
  run.field   = reconstruct_coarse(setup.problem, setup.mesh, setup.dofs, setup.basis, run.g, setup.local_config());
  return run;
}

BackendRun solve_exact(CaseSetup &setup, const Eigen::VectorXd &initial, const Eigen::VectorXd &reference)
{
  const auto     t0  = std::chrono::steady_clock::now();
  SkeletonSystem sys = SkeletonSystem::coarse(setup.problem, setup.partition, setup.mesh, setup.dofs, setup.basis,
                                              setup.local_config());
  return finish(setup,
                solve_substructured(sys, setup.outer_config(setup.cfg.exact_tol), initial, distance_to(reference)),
                t0);
}

BackendRun solve_surrogate(CaseSetup &setup, const SurrogateModel &model, const Eigen::VectorXd &reference)
{
  const auto     t0  = std::chrono::steady_clock::now();
  SkeletonSystem sys = SkeletonSystem::surrogate(
    setup.problem, setup.partition, SurrogateRegistry::shared(std::make_shared<const SurrogateModel>(model)));
  const NewtonConfig ncfg = setup.outer_config(setup.cfg.surrogate_tol);
  try {
    return finish(setup, solve_substructured(sys, ncfg, {}, distance_to(reference)), t0);
  } catch (const NonConvergence &) {
    // Near g = 0 the learned map is only as accurate as the training noise
    // while the exact map is degenerate; restart from the harmonic guess.
  }
  const Eigen::VectorXd guess = coarse_samples(setup.partition, setup.mesh, harmonic_extension(setup.problem, setup.mesh));
  BackendRun run = finish(setup, solve_substructured(sys, ncfg, guess, distance_to(reference)), t0);
  run.restarted  = true;
  return run;
}

} // namespace

CaseConfig case_preset(const std::string &name)
{
  CaseConfig c;
  c.case_name = name;
  if (name == "pme1d" || name == "plap1d") {
    c.dim              = 1;
    c.subdomains       = 5;
    c.cells            = 40;
    c.coefficient      = "osc1d";
    c.u_left           = 4.0;
    c.u_right          = 0.0;
    c.ns               = 9;
    c.hidden           = {64, 64};
    c.loss.c0          = 1.0;
    c.loss.c1          = 0.1;
    c.loss.cmon        = 4.0;
    c.loss.variant     = MonotonicityVariant::FullSign;
    c.loss.quadrature  = MonotonicityQuadrature::Grid;
    c.loss.grid_points = 40;
    c.loss.u_min       = 0.0;
    c.loss.u_max       = 4.0;
    c.eval_points      = 20;
    c.eval_centers     = false;
    if (name == "pme1d") {
      c.flux     = "pme";
      c.exponent = 4.0;
      c.reaction = 20.0;
    } else {
      c.flux     = "plap";
      c.exponent = 2.0;
      c.reaction = 5.0;
    }
  } else if (name == "pme2d") {
    c.dim             = 2;
    c.subdomains      = 5;
    c.cells           = 18;
    c.flux            = "pme";
    c.exponent        = 4.0;
    c.reaction        = 1.0;
    c.coefficient     = "osc2d";
    c.periodize       = true;
    c.u_scale         = 1.2;
    c.ns              = 81;
    c.hidden          = {20, 20};
    c.loss.c0         = 1.0;
    c.loss.c1         = 0.1;
    c.loss.cmon       = 10.0;
    c.loss.variant    = MonotonicityVariant::DiagonalOnly;
    c.loss.quadrature = MonotonicityQuadrature::MonteCarlo;
    c.loss.mc_points  = 200;
    c.loss.u_min      = 0.0;
    c.loss.u_max      = 1.2;
    c.eval_points     = 4;
    c.eval_centers    = true;
  } else {
    throw ConfigError("unknown case '" + name + "' (expected pme1d, plap1d or pme2d)");
  }
  return c;
}

void set_option(CaseConfig &cfg, const std::string &key, const std::string &value)
{
  for (const Option &o : options()) {
    if (key == o.key) {
      o.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown option '" + key + "'");
}

CaseConfig parse_config(std::istream &in)
{
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string                                      line;
  int                                              lineno = 0;
  std::string                                      preset = "pme1d";
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key == "case") preset = value;
    else pairs.emplace_back(key, value);
  }
  CaseConfig cfg = case_preset(preset);
  for (const auto &[k, v] : pairs) set_option(cfg, k, v);
  return cfg;
}

CaseConfig load_config(const std::string &path)
{
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  return parse_config(f);
}

std::string to_config_string(const CaseConfig &cfg)
{
  std::string s;
  for (const Option &o : options()) s += std::string(o.key) + " = " + o.get(cfg) + "\n";
  return s;
}

void validate(const CaseConfig &cfg)
{
  if (cfg.dim != 1 && cfg.dim != 2) throw ConfigError("dim must be 1 or 2");
  if (cfg.subdomains < 1) throw ConfigError("subdomains must be positive");
  if (cfg.cells < 2) throw ConfigError("cells must be at least 2");
  if (cfg.flux != "pme" && cfg.flux != "plap") throw ConfigError("flux must be pme or plap");
  if (cfg.coefficient != "osc1d" && cfg.coefficient != "osc2d" && cfg.coefficient != "const") {
    throw ConfigError("coefficient must be osc1d, osc2d or const");
  }
  if (cfg.hidden.empty()) throw ConfigError("hidden must list at least one layer width");
  for (int w : cfg.hidden)
    if (w < 1) throw ConfigError("layer widths must be positive");
  if (cfg.loss.c0 < 0 || cfg.loss.c1 < 0 || cfg.loss.cmon < 0) throw ConfigError("loss weights must be non-negative");
  if (cfg.loss.grid_points < 1 || cfg.loss.mc_points < 1) throw ConfigError("quadrature sizes must be positive");
  if (!(cfg.loss.u_max > cfg.loss.u_min)) throw ConfigError("u_max must exceed u_min");
  if (cfg.loss.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (cfg.train_subdomain < 0 || cfg.train_subdomain >= cfg.subdomains * (cfg.dim == 2 ? cfg.subdomains : 1)) {
    throw ConfigError("train_subdomain out of range");
  }
  if (cfg.eval_points < (cfg.eval_centers ? 1 : 2)) throw ConfigError("eval_points too small");
  if (!(cfg.local_tol > 0 && cfg.exact_tol > 0 && cfg.surrogate_tol > 0 && cfg.reference_tol > 0)) {
    throw ConfigError("tolerances must be positive");
  }
  if (cfg.max_iter < 1) throw ConfigError("max_iter must be positive");
  if (cfg.threads < 1) throw ConfigError("threads must be positive");
  sample_layout(cfg.ns, cfg.dim == 1 ? 2 : 4, cfg.centers);
}

Problem make_problem(const CaseConfig &cfg)
{
  Problem p;
  p.name     = cfg.case_name;
  p.dim      = cfg.dim;
  p.reaction = cfg.reaction;
  if (cfg.flux == "pme") p.flux = PorousMedia{cfg.exponent};
  else if (cfg.flux == "plap") p.flux = PLaplace{cfg.exponent};
  else throw ConfigError("flux must be pme or plap");

  if (cfg.coefficient == "osc1d") p.coefficient = oscillating_coefficient_1d();
  else if (cfg.coefficient == "osc2d") p.coefficient = oscillating_coefficient_2d(cfg.periodize ? 1.0 / cfg.subdomains : 0.0);
  else if (cfg.coefficient == "const") p.coefficient = constant_coefficient(1.0);
  else throw ConfigError("coefficient must be osc1d, osc2d or const");

  if (cfg.dim == 1) {
    const double l = cfg.u_left, r = cfg.u_right;
    p.boundary     = [l, r](const Eigen::Vector2d &x) { return x.x() < 0.5 ? l : r; };
  } else {
    const double s = cfg.u_scale;
    p.boundary     = [s](const Eigen::Vector2d &x) { return std::max(s * (x.x() + x.y() - 1.0), 0.0); };
  }
  validate(p);
  return p;
}

std::string problem_hash(const CaseConfig &cfg)
{
  // Only settings that change the local Dirichlet-to-Neumann map.
  std::ostringstream s;
  s << "dim=" << cfg.dim << ";subdomains=" << cfg.subdomains << ";cells=" << cfg.cells << ";flux=" << cfg.flux
    << ";exponent=" << format_number(cfg.exponent) << ";reaction=" << format_number(cfg.reaction)
    << ";coefficient=" << cfg.coefficient << ";periodize=" << cfg.periodize
    << ";train_subdomain=" << cfg.train_subdomain << ";local_tol=" << format_number(cfg.local_tol);
  return fnv1a64(s.str());
}

std::pair<int, bool> sample_layout(long ns, int d, bool force_centers)
{
  auto power = [d](long m) {
    long p = 1;
    for (int k = 0; k < d; ++k) p *= m;
    return p;
  };
  for (long m = 2; power(m - 1) <= ns; ++m) {
    if (!force_centers && power(m) == ns) return {static_cast<int>(m), false};
    if (power(m) + power(m - 1) == ns) return {static_cast<int>(m), true};
  }
  throw ConfigError("ns = " + std::to_string(ns) + " is not of the form m^" + std::to_string(d) +
                    (force_centers ? " + (m-1)^" + std::to_string(d) : std::string()) + " with m >= 2");
}

CaseSetup::CaseSetup(const CaseConfig &c) : cfg(c)
{
  validate(cfg);
  problem   = make_problem(cfg);
  partition = build_partition(cfg.dim, cfg.subdomains);
  mesh      = build_fine_mesh(partition, cfg.cells);
  dofs      = build_dof_map(mesh);
  basis     = build_coarse_basis(partition, mesh, dofs);
}

LocalSolverConfig CaseSetup::local_config() const
{
  LocalSolverConfig c;
  c.newton.tol = cfg.local_tol;
  return c;
}

NewtonConfig CaseSetup::outer_config(double tol) const
{
  NewtonConfig c;
  c.tol      = tol;
  c.max_iter = cfg.max_iter;
  return c;
}

double error_l2(const Eigen::VectorXd &a, const Eigen::VectorXd &b, const FineMesh &mesh)
{
  if (a.size() != mesh.num_vertices() || b.size() != mesh.num_vertices()) {
    throw Error("fields do not match the mesh");
  }
  const Eigen::VectorXd m   = lumped_mass(mesh);
  const double          den = m.dot(b.cwiseAbs2());
  if (!(den > 0)) throw Error("reference field has zero norm; relative error undefined");
  return std::sqrt(m.dot((a - b).cwiseAbs2()) / den);
}

Eigen::MatrixXd training_samples(const CaseConfig &cfg, int d)
{
  const auto [m, centers] = sample_layout(cfg.ns, d, cfg.centers);
  return sample_grid(d, m, cfg.loss.u_min, cfg.loss.u_max, centers);
}

Eigen::MatrixXd evaluation_samples(const CaseConfig &cfg, int d)
{
  return cfg.eval_centers ? cell_centers(d, cfg.eval_points, cfg.loss.u_min, cfg.loss.u_max)
                          : sample_grid(d, cfg.eval_points, cfg.loss.u_min, cfg.loss.u_max);
}

DatasetProvenance dataset_provenance(const CaseSetup &setup)
{
  DatasetProvenance p;
  p.problem             = setup.cfg.case_name;
  p.problem_hash        = problem_hash(setup.cfg);
  p.cells_per_subdomain = setup.cfg.cells;
  p.solver_tol          = setup.cfg.local_tol;
  p.subdomain           = setup.cfg.train_subdomain;
  p.u_min               = setup.cfg.loss.u_min;
  p.u_max               = setup.cfg.loss.u_max;
  return p;
}

DtNSampleSet case_dataset(const CaseSetup &setup, const Eigen::MatrixXd &samples)
{
  const Index           i = setup.cfg.train_subdomain;
  const SubdomainSolver solver(setup.problem, setup.mesh, setup.dofs, i);
  return generate_dataset(solver, setup.basis.local.at(i), samples, setup.local_config(), dataset_provenance(setup),
                          setup.cfg.threads);
}

SurrogateModel case_train(const CaseSetup &setup, const DtNSampleSet &data, TrainReport *report)
{
  LossConfig loss = setup.cfg.loss;
  loss.seed       = setup.cfg.seed;
  SurrogateModel model = train(data, Architecture{setup.cfg.hidden}, loss, report, setup.cfg.threads);
  model.provenance_hash = problem_hash(setup.cfg);
  return model;
}

SolveBackend parse_backend(const std::string &name)
{
  if (name == "exact") return SolveBackend::Exact;
  if (name == "surrogate") return SolveBackend::Surrogate;
  if (name == "warmstart") return SolveBackend::WarmStart;
  throw ConfigError("unknown backend '" + name + "' (expected exact, surrogate or warmstart)");
}

Eigen::VectorXd coarse_reference(CaseSetup &setup)
{
  SkeletonSystem sys = SkeletonSystem::coarse(setup.problem, setup.partition, setup.mesh, setup.dofs, setup.basis,
                                              setup.local_config());
  return solve_substructured(sys, setup.outer_config(setup.cfg.reference_tol)).g;
}

BackendRun solve_case(CaseSetup &setup, SolveBackend backend, const SurrogateModel *model,
                      const Eigen::VectorXd &reference)
{
  if (backend != SolveBackend::Exact && !model) throw ConfigError("this backend needs a surrogate model");
  switch (backend) {
  case SolveBackend::Exact: return solve_exact(setup, {}, reference);
  case SolveBackend::Surrogate: return solve_surrogate(setup, *model, reference);
  case SolveBackend::WarmStart: {
    const BackendRun s = solve_surrogate(setup, *model, reference);
    BackendRun       w = solve_exact(setup, s.g, reference);
    w.seconds += s.seconds;
    return w;
  }
  }
  throw ConfigError("unknown backend");
}

int iterations_to(const NewtonTrace &trace, double target)
{
  for (size_t k = 0; k < trace.error.size(); ++k)
    if (trace.error[k] <= target) return static_cast<int>(k);
  return -1;
}

ErrorReport run_case(const CaseConfig &cfg, const SurrogateModel *given, std::ostream *log)
{
  auto note = [log](const std::string &s) {
    if (log) *log << s << std::endl;
  };
  ErrorReport rep;
  namespace fs = std::filesystem;
  const bool write = !cfg.out_dir.empty();
  auto       path  = [&](const std::string &name) { return (fs::path(cfg.out_dir) / name).string(); };

  auto setup = stage("setup", [&] { return std::make_unique<CaseSetup>(cfg); });
  const int d = setup->local_dim();
  if (write) {
    stage("output", [&] {
      fs::create_directories(cfg.out_dir);
      std::ofstream f(path("config.txt"), std::ios::binary);
      f << to_config_string(cfg);
      if (!f) throw Error("cannot write " + path("config.txt"));
    });
  }

  SurrogateModel model;
  if (given) {
    model = *given;
    if (model.input_dim() != d) throw ConfigError("model input dimension does not match the case");
  } else {
    auto t0 = std::chrono::steady_clock::now();
    const DtNSampleSet data = stage("dataset", [&] { return case_dataset(*setup, training_samples(cfg, d)); });
    rep.timings.dataset     = seconds_since(t0);
    note("dataset: " + std::to_string(data.size()) + " samples");
    if (write) stage("output", [&] { write_dataset(data, path("dataset.csv")); });

    t0 = std::chrono::steady_clock::now();
    TrainReport tr;
    model             = stage("train", [&] { return case_train(*setup, data, &tr); });
    rep.timings.train = seconds_since(t0);
    for (size_t l = 0; l < tr.components.size(); ++l) {
      note("train: component " + std::to_string(l) + " loss " + format_number(tr.components[l].initial.total) +
           " -> " + format_number(tr.components[l].final.total));
    }
    if (write) stage("output", [&] { save_model(model, path("model.json")); });
  }

  rep.interpolation_error = stage("interpolation", [&] {
    const DtNSampleSet audit = case_dataset(*setup, evaluation_samples(cfg, d));
    return interpolation_error(model, audit.inputs, audit.values);
  });
  note("interpolation error: " + format_number(rep.interpolation_error));

  auto t0 = std::chrono::steady_clock::now();
  const Eigen::VectorXd ref = stage("reference", [&] { return coarse_reference(*setup); });
  rep.timings.reference     = seconds_since(t0);

  const BackendRun exact = stage("solve exact", [&] { return solve_case(*setup, SolveBackend::Exact, &model, ref); });
  const BackendRun surr =
    stage("solve surrogate", [&] { return solve_case(*setup, SolveBackend::Surrogate, &model, ref); });
  const BackendRun warm = stage("solve warmstart", [&] { return solve_exact(*setup, surr.g, ref); });
  rep.timings.exact     = exact.seconds;
  rep.timings.surrogate = surr.seconds;
  rep.timings.warmstart = warm.seconds;

  t0 = std::chrono::steady_clock::now();
  const Eigen::VectorXd fine =
    stage("monolithic", [&] { return solve_monolithic(setup->problem, setup->mesh, setup->dofs, setup->outer_config(cfg.exact_tol)); });
  rep.timings.monolithic = seconds_since(t0);

  rep.iterations_exact     = exact.trace.iterations();
  rep.iterations_surrogate = surr.trace.iterations();
  rep.surrogate_restarted  = surr.restarted;
  if (surr.restarted) note("surrogate solve from zero failed; restarted from the harmonic guess");
  rep.iterations_warmstart = warm.trace.iterations();
  rep.to_target_exact      = iterations_to(exact.trace, cfg.target_error);
  rep.to_target_warmstart  = iterations_to(warm.trace, cfg.target_error);
  stage("metrics", [&] {
    rep.solution_error = error_l2(surr.field, exact.field, setup->mesh);
    rep.coarse_error   = error_l2(exact.field, fine, setup->mesh);
    rep.surrogate_fine_error = error_l2(surr.field, fine, setup->mesh);
  });
  note("solution error (surrogate vs exact coarse): " + format_number(rep.solution_error));
  note("newton iterations exact/surrogate/warmstart: " + std::to_string(rep.iterations_exact) + "/" +
       std::to_string(rep.iterations_surrogate) + "/" + std::to_string(rep.iterations_warmstart));

  if (write) {
    stage("output", [&] {
      write_profile_csv(path("profile.csv"), setup->mesh, {"u_coarse", "u_surrogate", "u_fine"},
                        {exact.field, surr.field, fine});
      write_trace_csv(path("trace_exact.csv"), exact.trace, cfg.timings);
      write_trace_csv(path("trace_surrogate.csv"), surr.trace, cfg.timings);
      write_trace_csv(path("trace_warmstart.csv"), warm.trace, cfg.timings);
      write_report_csv(path("errors.csv"), cfg, rep);
      if (cfg.timings) {
        std::ofstream f(path("timings.csv"), std::ios::binary);
        const auto   &t = rep.timings;
        f << "stage,seconds\n"
          << "dataset," << format_number(t.dataset) << "\ntrain," << format_number(t.train) << "\nreference,"
          << format_number(t.reference) << "\nexact," << format_number(t.exact) << "\nsurrogate,"
          << format_number(t.surrogate) << "\nwarmstart," << format_number(t.warmstart) << "\nmonolithic,"
          << format_number(t.monolithic) << "\n";
      }
    });
  }
  return rep;
}

void write_profile_csv(const std::string &path, const FineMesh &mesh, const std::vector<std::string> &names,
                       const std::vector<Eigen::VectorXd> &fields)
{
  if (names.size() != fields.size()) throw Error("profile names and fields differ in number");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << (mesh.dim == 1 ? "x" : "x,y");
  for (const auto &n : names) f << ',' << n;
  f << '\n';
  const Index n = mesh.cells_per_axis() + 1;
  for (Index k = 0; k < n; ++k) {
    const Index v = mesh.dim == 1 ? k : k * n + k; // lexicographic, x fastest
    f << format_number(mesh.vertices(0, v));
    if (mesh.dim == 2) f << ',' << format_number(mesh.vertices(1, v));
    for (const auto &u : fields) f << ',' << format_number(u[v]);
    f << '\n';
  }
}

void write_report_csv(const std::string &path, const CaseConfig &cfg, const ErrorReport &r)
{
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  f << "metric,value\n"
    << "ns," << cfg.ns << "\n"
    << "seed," << cfg.seed << "\n"
    << "interpolation_error," << format_number(r.interpolation_error) << "\n"
    << "solution_error," << format_number(r.solution_error) << "\n"
    << "coarse_error," << format_number(r.coarse_error) << "\n"
    << "surrogate_fine_error," << format_number(r.surrogate_fine_error) << "\n"
    << "iterations_exact," << r.iterations_exact << "\n"
    << "iterations_surrogate," << r.iterations_surrogate << "\n"
    << "iterations_warmstart," << r.iterations_warmstart << "\n"
    << "surrogate_restarted," << (r.surrogate_restarted ? 1 : 0) << "\n"
    << "to_target_exact," << r.to_target_exact << "\n"
    << "to_target_warmstart," << r.to_target_warmstart << "\n"
    << "target_error," << format_number(cfg.target_error) << "\n"
    << "reference_tol," << format_number(cfg.reference_tol) << "\n";
}

} // namespace msdtn
