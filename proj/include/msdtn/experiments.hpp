#pragma once

#include "msdtn/dtn.hpp"
#include "msdtn/fem.hpp"
#include "msdtn/mesh.hpp"
#include "msdtn/substructure.hpp"
#include "msdtn/surrogate.hpp"

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace msdtn {

/// Flat key=value description of one study. `case_preset` gives the
/// defaults of pme1d, plap1d and pme2d.
struct CaseConfig
{
  std::string case_name = "pme1d";
  int         dim       = 1;
  int         subdomains = 5; // per axis
  int         cells      = 40; // per subdomain and axis

  std::string flux        = "pme"; // pme | plap
  double      exponent    = 4.0;
  double      reaction    = 20.0;
  std::string coefficient = "osc1d"; // osc1d | osc2d | const
  bool        periodize   = true;    // osc2d: evaluate in subdomain-local coordinates
  double      u_left = 4.0, u_right = 0.0; // 1D Dirichlet data
  double      u_scale = 1.2;               // 2D Dirichlet data max(u_scale (x + y - 1), 0)

  long             ns      = 9;     // training samples; m^d, or m^d + (m-1)^d with centers
  bool             centers = false;
  std::vector<int> hidden{64, 64};
  LossConfig       loss;
  std::uint64_t    seed            = 0;
  int              train_subdomain = 0;

  int  eval_points  = 20; // per axis of the interpolation audit grid
  bool eval_centers = false;

  double local_tol     = 1e-10;
  double exact_tol     = 1e-10;
  double surrogate_tol = 1e-8;
  double reference_tol = 1e-12;
  int    max_iter      = 50;
  double target_error  = 1e-5; // warm-start bookkeeping

  int         threads = 1;
  std::string out_dir;
  bool        timings = false;
};

CaseConfig case_preset(const std::string &name);

/// Throws ConfigError for unknown keys or malformed values.
void set_option(CaseConfig &cfg, const std::string &key, const std::string &value);

/// Lines "key = value"; '#' starts a comment. A `case` key, wherever it
/// appears, selects the preset the remaining keys modify.
CaseConfig parse_config(std::istream &in);
CaseConfig load_config(const std::string &path);

/// Canonical key=value dump; parse_config(to_config_string(c)) == c.
std::string to_config_string(const CaseConfig &cfg);

/// Throws ConfigError for inconsistent settings.
void validate(const CaseConfig &cfg);

Problem     make_problem(const CaseConfig &cfg);
std::string problem_hash(const CaseConfig &cfg);

/// Grid size m and the center flag realizing cfg.ns in dimension d.
std::pair<int, bool> sample_layout(long ns, int d, bool force_centers);

/// Geometry and discretization of one case. Not movable: the systems built
/// on it keep pointers into it.
struct CaseSetup
{
  explicit CaseSetup(const CaseConfig &cfg);
  CaseSetup(const CaseSetup &)            = delete;
  CaseSetup &operator=(const CaseSetup &) = delete;

  CaseConfig      cfg;
  Problem         problem;
  CoarsePartition partition;
  FineMesh        mesh;
  DofMap          dofs;
  CoarseBasis     basis;

  int               local_dim() const { return static_cast<int>(partition.local_coarse_nodes(0).size()); }
  LocalSolverConfig local_config() const;
  NewtonConfig      outer_config(double tol) const;
};

/// Relative lumped-mass L2 norm |a - b| / |b|.
double error_l2(const Eigen::VectorXd &a, const Eigen::VectorXd &b, const FineMesh &mesh);

Eigen::MatrixXd   training_samples(const CaseConfig &cfg, int d);
Eigen::MatrixXd   evaluation_samples(const CaseConfig &cfg, int d);
DatasetProvenance dataset_provenance(const CaseSetup &setup);
DtNSampleSet      case_dataset(const CaseSetup &setup, const Eigen::MatrixXd &samples);
SurrogateModel    case_train(const CaseSetup &setup, const DtNSampleSet &data, TrainReport *report = nullptr);

enum class SolveBackend
{
  Exact,
  Surrogate,
  WarmStart
};

SolveBackend parse_backend(const std::string &name);

struct BackendRun
{
  Eigen::VectorXd g;     // coarse skeleton vector
  NewtonTrace     trace; // error column: relative Euclidean distance to the reference
  Eigen::VectorXd field; // reconstructed fine field
  double          seconds = 0;
  bool            restarted = false; // surrogate: the solve from zero failed and was restarted
};

/// Exact coarse solution at reference_tol, used as the error reference.
Eigen::VectorXd coarse_reference(CaseSetup &setup);

/// Warm start: surrogate solve from zero, then exact solve from that
/// result; the returned trace is the exact phase. A surrogate solve from
/// zero that fails is restarted from the coarse samples of
/// harmonic_extension.
BackendRun solve_case(CaseSetup &setup, SolveBackend backend, const SurrogateModel *model,
                      const Eigen::VectorXd &reference);

/// First trace index whose error is <= target, or -1.
int iterations_to(const NewtonTrace &trace, double target);

struct ErrorReport
{
  double interpolation_error = 0; // relative L2 over the audit grid
  double solution_error      = 0; // surrogate vs exact coarse, lumped L2 over the domain
  double coarse_error        = 0; // exact coarse vs monolithic fine
  double surrogate_fine_error = 0; // surrogate vs monolithic fine
  int    iterations_exact     = 0;
  int    iterations_surrogate = 0;
  int    iterations_warmstart = 0;
  int    to_target_exact      = -1; // iterations until error <= target_error
  int    to_target_warmstart  = -1;
  bool   surrogate_restarted  = false; // see solve_case

  struct Timings
  {
    double dataset = 0, train = 0, reference = 0, exact = 0, surrogate = 0, warmstart = 0, monolithic = 0;
  } timings;
};

/// mesh -> dataset -> train (unless `model` is given) -> exact, surrogate
/// and warm-start solves -> reconstruction -> metrics. With a non-empty
/// cfg.out_dir the CSV artifacts are written there. Stage failures are
/// rethrown as StageError naming the stage, with the original exception as
/// its cause.
ErrorReport run_case(const CaseConfig &cfg, const SurrogateModel *model = nullptr, std::ostream *log = nullptr);

/// 1D: all vertices; 2D: vertices on the diagonal y = x.
void write_profile_csv(const std::string &path, const FineMesh &mesh, const std::vector<std::string> &names,
                       const std::vector<Eigen::VectorXd> &fields);

void write_report_csv(const std::string &path, const CaseConfig &cfg, const ErrorReport &report);

} // namespace msdtn
