// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: acceptance --cli <path to msdtn> [--only 1,4,...]

#include "msdtn/dtn.hpp"
#include "msdtn/experiments.hpp"
#include "msdtn/io.hpp"
#include "msdtn/substructure.hpp"
#include "msdtn/surrogate.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <unistd.h>

namespace fs = std::filesystem;
using namespace msdtn;

namespace {

struct Verdict
{
  bool        pass = false;
  std::string detail;
};

std::string fmt(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Fine substructured solve from zero vs the monolithic solve.
Verdict substructuring_oracle()
{
  Verdict v{true, ""};
  for (const char *name : {"pme1d", "plap1d", "pme2d"}) {
    const auto t0 = std::chrono::steady_clock::now();
    CaseSetup  s(case_preset(name));
    const LocalSolverConfig local = s.local_config();
    SkeletonSystem          sys   = SkeletonSystem::fine(s.problem, s.mesh, s.dofs, local);
    const SubstructuredSolution sol = solve_substructured(sys, s.outer_config(1e-12));
    const Eigen::VectorXd u   = reconstruct(s.problem, s.mesh, s.dofs, sol.g, local);
    const Eigen::VectorXd ref = solve_monolithic(s.problem, s.mesh, s.dofs, s.outer_config(1e-12));
    const double          err = error_l2(u, ref, s.mesh);
    const double          sec = seconds_since(t0);
    v.pass = v.pass && err <= 1e-8 && sec <= 30.0;
    v.detail += std::string(v.detail.empty() ? "" : "; ") + name + " err " + fmt(err) + " in " + fmt(sec) + " s";
  }
  return v;
}

// Largest |A - B| / max(|B|, floor * max|B|) over all entries.
double componentwise_error(const Eigen::MatrixXd &A, const Eigen::MatrixXd &B, double floor)
{
  const double scale = floor * B.cwiseAbs().maxCoeff();
  return ((A - B).cwiseAbs().array() / B.cwiseAbs().array().max(scale)).maxCoeff();
}

// 2. Schur-complement Jacobians vs central differences.
Verdict dtn_derivatives()
{
  LocalSolverConfig tight;
  tight.newton.tol = 1e-14;
  double worst_fine = 0, worst_coarse = 0;
  for (const char *name : {"pme1d", "plap1d", "pme2d"}) {
    CaseSetup                              s(case_preset(name));
    const double                           umax = s.cfg.loss.u_max;
    std::mt19937_64                        rng(12345);
    std::uniform_real_distribution<double> U(0.1 * umax, umax);
    const Index                            i = s.partition.num_subdomains() / 2;
    const SubdomainSolver                  solver(s.problem, s.mesh, s.dofs, i);
    const Eigen::MatrixXd                 &phi = s.basis.local[static_cast<size_t>(i)];
    for (int trial = 0; trial < 10; ++trial) {
      // Fine map at a random smooth trace: coarse interpolant plus a small perturbation.
      Eigen::VectorXd c(phi.cols());
      for (Index k = 0; k < c.size(); ++k) c[k] = U(rng);
      Eigen::VectorXd g = phi * c;
      for (Index k = 0; k < g.size(); ++k) g[k] *= 1.0 + 0.05 * (U(rng) / umax - 0.5);

      // Fourth-order central differences.
      auto fd = [&](const Eigen::VectorXd &x, auto &&map) {
        Eigen::MatrixXd J(map(x).size(), x.size());
        for (Index k = 0; k < x.size(); ++k) {
          const double h     = 1e-5 * (1.0 + std::abs(x[k]));
          auto         shift = [&](double t) {
            Eigen::VectorXd y = x;
            y[k] += t;
            return map(y);
          };
          J.col(k) = (8 * (shift(h) - shift(-h)) - (shift(2 * h) - shift(-2 * h))) / (12 * h);
        }
        return J;
      };

      const DtNResult rf = solver.dtn(g, tight, true);
      const Eigen::MatrixXd Jf =
        fd(g, [&](const Eigen::VectorXd &x) { return solver.dtn(x, tight, false, &rf.interior_state).flux; });
      worst_fine = std::max(worst_fine, componentwise_error(Jf, *rf.jacobian, 1e-6));

      const DtNResult rc = solver.dtn_coarse(phi, c, tight, true);
      const Eigen::MatrixXd Jc = fd(
        c, [&](const Eigen::VectorXd &x) { return solver.dtn_coarse(phi, x, tight, false, &rc.interior_state).flux; });
      worst_coarse = std::max(worst_coarse, componentwise_error(Jc, *rc.jacobian, 1e-6));
    }
  }
  return {worst_fine <= 1e-5 && worst_coarse <= 1e-5,
          "max rel error fine " + fmt(worst_fine) + ", coarse " + fmt(worst_coarse)};
}

// 3. Sign structure of the coarse 1D porous-media DtN Jacobian.
Verdict sign_structure()
{
  CaseSetup s(case_preset("pme1d"));
  double    min_diag = INFINITY, max_off = -INFINITY;
  for (Index i = 0; i < s.partition.num_subdomains(); ++i) {
    const SubdomainSolver  solver(s.problem, s.mesh, s.dofs, i);
    const Eigen::MatrixXd &phi = s.basis.local[static_cast<size_t>(i)];
    for (int a = 0; a < 10; ++a) {
      for (int b = 0; b < 10; ++b) {
        const Eigen::Vector2d v(0.1 + 3.9 * a / 9.0, 0.1 + 3.9 * b / 9.0);
        const Eigen::MatrixXd J = *solver.dtn_coarse(phi, v, s.local_config(), true).jacobian;
        min_diag                = std::min({min_diag, J(0, 0), J(1, 1)});
        max_off                 = std::max({max_off, J(0, 1), J(1, 0)});
      }
    }
  }
  return {min_diag > 0 && max_off <= 1e-10, "min diagonal " + fmt(min_diag) + ", max off-diagonal " + fmt(max_off)};
}

// Training runs shared by criteria 6 and 7.
double interpolation_error_1d(long ns, double c1, double cmon)
{
  CaseConfig cfg = case_preset("pme1d");
  cfg.ns         = ns;
  cfg.loss.c1    = c1;
  cfg.loss.cmon  = cmon;
  CaseSetup            s(cfg);
  const int            d     = s.local_dim();
  const DtNSampleSet   data  = case_dataset(s, training_samples(cfg, d));
  const SurrogateModel model = case_train(s, data);
  const DtNSampleSet   audit = case_dataset(s, evaluation_samples(cfg, d));
  return interpolation_error(model, audit.inputs, audit.values);
}

std::map<long, double> &full_loss_errors()
{
  static std::map<long, double> errors;
  if (errors.empty()) {
    for (long ns : {4L, 9L, 16L, 25L}) errors[ns] = interpolation_error_1d(ns, 0.1, 4.0);
  }
  return errors;
}

// Pipeline runs shared by criteria 4 and 5.
std::map<long, ErrorReport> &pme2d_reports()
{
  static std::map<long, ErrorReport> reports;
  if (reports.empty()) {
    for (long ns : {16L, 81L, 256L, 625L}) {
      CaseConfig cfg = case_preset("pme2d");
      cfg.ns         = ns;
      cfg.out_dir.clear();
      reports[ns] = run_case(cfg);
    }
  }
  return reports;
}

// 4. Surrogate solution errors for pme2d.
Verdict pme2d_error_bands()
{
  const std::map<long, double> target{{16, 0.33}, {81, 0.08}, {256, 0.04}, {625, 0.03}};
  auto                        &reports = pme2d_reports();
  Verdict                      v{true, ""};
  double                       prev = INFINITY;
  for (const auto &[ns, t] : target) {
    const ErrorReport &r = reports.at(ns);
    const double       e = r.solution_error;
    v.pass               = v.pass && e >= t / 2 && e <= 2 * t && e < prev;
    prev                 = e;
    v.detail += std::string(v.detail.empty() ? "" : ", ") + "ns=" + std::to_string(ns) + " " + fmt(e) + " (band " +
                fmt(t / 2) + ".." + fmt(2 * t) + (r.surrogate_restarted ? ", restarted" : "") +
                "; vs fine " + fmt(r.surrogate_fine_error) + ")";
  }
  return v;
}

// 5. Warm start from the ns = 3^4 surrogate.
Verdict warm_start()
{
  const ErrorReport &r = pme2d_reports().at(81);
  if (r.to_target_exact <= 0 || r.to_target_warmstart < 0) {
    return {false, "target error not reached (zero init " + std::to_string(r.to_target_exact) + ", warm " +
                     std::to_string(r.to_target_warmstart) + ")"};
  }
  const double ratio = static_cast<double>(r.to_target_warmstart) / r.to_target_exact;
  return {ratio <= 0.5, "iterations to 1e-5: zero init " + std::to_string(r.to_target_exact) + ", warm start " +
                          std::to_string(r.to_target_warmstart) + ", ratio " + fmt(ratio)};
}

// 6. Derivative information in the loss.
Verdict sobolev_benefit()
{
  const double full  = full_loss_errors().at(9);
  const double value = interpolation_error_1d(9, 0.0, 0.0);
  return {full <= 0.5 * value,
          "full loss " + fmt(full) + ", value only " + fmt(value) + ", ratio " + fmt(full / value)};
}

// 7. Saturation level of the 1D interpolation error.
Verdict saturation()
{
  double      best = INFINITY;
  std::string detail;
  for (const auto &[ns, e] : full_loss_errors()) {
    best = std::min(best, e);
    detail += "ns=" + std::to_string(ns) + " " + fmt(e) + ", ";
  }
  return {best >= std::pow(10.0, -4.5) && best <= std::pow(10.0, -2.5), detail + "best " + fmt(best)};
}

// 8. Loss gradients vs central differences along random parameter slices.
Verdict loss_gradients()
{
  double worst = 0;
  for (int d : {2, 4}) {
    std::mt19937_64 rng(99 + d);
    SurrogateNet    net(d, {8, 6});
    net.initialize(rng);
    net.input_shift = Eigen::VectorXd::Constant(d, 0.5);
    net.input_scale = Eigen::VectorXd::Constant(d, 1.7);
    net.output_shift = 0.3;
    net.output_scale = 1.4;

    std::uniform_real_distribution<double> U(0.0, 1.0);
    ComponentData                          cd;
    cd.component = 1;
    cd.inputs.resize(d, 7);
    cd.values.resize(7);
    cd.gradients.resize(d, 7);
    for (Index c = 0; c < 7; ++c) {
      for (Index r = 0; r < d; ++r) {
        cd.inputs(r, c)    = U(rng);
        cd.gradients(r, c) = U(rng) - 0.5;
      }
      cd.values[c] = U(rng);
    }
    Eigen::MatrixXd mon(d, 40);
    for (Index c = 0; c < mon.cols(); ++c)
      for (Index r = 0; r < d; ++r) mon(r, c) = U(rng);

    for (int term = 0; term < 3; ++term) {
      LossConfig cfg;
      cfg.c0      = term == 0 ? 1.0 : 0.0;
      cfg.c1      = term == 1 ? 1.0 : 0.0;
      cfg.cmon    = term == 2 ? 1.0 : 0.0;
      cfg.variant = d == 2 ? MonotonicityVariant::FullSign : MonotonicityVariant::DiagonalOnly;
      const Eigen::VectorXd theta = net.parameters();
      Eigen::VectorXd       grad;
      loss<double>(net, cd, mon, 0.025, cfg, &grad);
      for (int slice = 0; slice < 5; ++slice) {
        Eigen::VectorXd dir(theta.size());
        for (Index k = 0; k < dir.size(); ++k) dir[k] = U(rng) - 0.5;
        auto along = [&](double t) {
          SurrogateNet n = net;
          n.set_parameters(theta + t * dir);
          return loss<double>(n, cd, mon, 0.025, cfg, nullptr).total;
        };
        const double h     = 1e-6;
        const double fd    = (along(h) - along(-h)) / (2 * h);
        const double exact = grad.dot(dir);
        worst              = std::max(worst, std::abs(fd - exact) / std::max(std::abs(exact), 1e-12));
      }
    }
  }
  return {worst <= 1e-5, "max relative slice error " + fmt(worst)};
}

// 9. Two serial CLI runs with the same seed give identical CSV files.
Verdict reproducibility(const std::string &cli)
{
  if (cli.empty()) return {false, "path to the msdtn binary not given (--cli)"};
  const fs::path root = fs::temp_directory_path() / ("msdtn_repro_" + std::to_string(::getpid()));
  fs::remove_all(root);
  for (const char *run : {"a", "b"}) {
    const std::string cmd = "\"" + cli + "\" reproduce pme1d --seed 7 --out \"" + (root / run).string() + "\" > \"" +
                            (root.string() + "_" + run + ".log") + "\" 2>&1";
    fs::create_directories(root);
    if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + cmd};
  }
  auto slurp = [](const fs::path &p) {
    std::ifstream     f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  int                   compared = 0;
  std::set<std::string> names;
  for (const auto &e : fs::directory_iterator(root / "a")) names.insert(e.path().filename().string());
  for (const auto &e : fs::directory_iterator(root / "b")) names.insert(e.path().filename().string());
  for (const std::string &n : names) {
    if (fs::path(n).extension() != ".csv") continue;
    if (!fs::exists(root / "a" / n) || !fs::exists(root / "b" / n)) return {false, n + " missing in one run"};
    if (slurp(root / "a" / n) != slurp(root / "b" / n)) return {false, n + " differs"};
    ++compared;
  }
  fs::remove_all(root);
  fs::remove(root.string() + "_a.log");
  fs::remove(root.string() + "_b.log");
  return {compared > 0, std::to_string(compared) + " CSV files identical"};
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App         app{"Acceptance criteria"};
  std::string      cli;
  std::vector<int> only;
  app.add_option("--cli", cli, "Path to the msdtn binary (criterion 9)");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
    {1, substructuring_oracle},
    {2, dtn_derivatives},
    {3, sign_structure},
    {4, pme2d_error_bands},
    {5, warm_start},
    {6, sobolev_benefit},
    {7, saturation},
    {8, loss_gradients},
    {9, [&] { return reproducibility(cli); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  bool                all = true;
  for (const auto &[id, run] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict    v;
    try {
      v = run();
    } catch (const std::exception &e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    all = all && v.pass;
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << " (" << v.detail << ") [" << fmt(seconds_since(t0))
              << " s]" << std::endl;
  }
  return all ? 0 : 1;
}
