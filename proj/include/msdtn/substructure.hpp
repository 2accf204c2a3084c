#pragma once

#include "msdtn/dtn.hpp"
#include "msdtn/mesh.hpp"
#include "msdtn/newton.hpp"
#include "msdtn/surrogate.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <vector>

namespace msdtn {

enum class Level
{
  Fine,  // unknowns are the fine skeleton vertices
  Coarse // unknowns are the coarse nodes
};

enum class Backend
{
  Exact,
  Surrogate
};

struct SkeletonEvaluation
{
  Eigen::VectorXd residual; // on the unknown set
  Eigen::MatrixXd jacobian; // unknown x unknown, empty unless requested
};

/// Skeleton residual sum_i E_i^T DtN_i(E_i g) restricted to the unknown set.
///
/// Skeleton vectors always carry every skeleton entry; entries on the outer
/// boundary are fixed to the nodal interpolant of the Dirichlet data. The
/// exact backends keep the last interior state of each subdomain as the
/// initial guess for the next local solve. The surrogate backend throws
/// EvaluationError for inputs more than 5% outside its training box. Mesh,
/// dof map and basis must outlive the system.
class SkeletonSystem
{
public:
  static SkeletonSystem fine(const Problem &problem, const FineMesh &mesh, const DofMap &dofs,
                             const LocalSolverConfig &cfg = {});

  static SkeletonSystem coarse(const Problem &problem, const CoarsePartition &partition, const FineMesh &mesh,
                               const DofMap &dofs, const CoarseBasis &basis, const LocalSolverConfig &cfg = {});

  static SkeletonSystem surrogate(const Problem &problem, const CoarsePartition &partition,
                                  SurrogateRegistry registry);

  Level   level() const { return level_; }
  Backend backend() const { return backend_; }

  Index                  size() const { return size_; } // full skeleton length
  const IndexList       &unknowns() const { return unknowns_; }
  const IndexList       &fixed() const { return fixed_; }
  const Eigen::VectorXd &dirichlet() const { return dirichlet_; } // one entry per fixed() index

  /// Copy of g with the fixed entries overwritten by the Dirichlet values.
  Eigen::VectorXd with_dirichlet(Eigen::VectorXd g) const;
  Eigen::VectorXd expand(const Eigen::VectorXd &unknown_values) const;

  SkeletonEvaluation evaluate(const Eigen::VectorXd &g, bool want_jacobian);

  void reset_warm_start();

private:
  SkeletonSystem() = default;
  void set_boundary(const std::vector<bool> &is_fixed, const std::function<double(Index)> &value);

  Level                    level_   = Level::Fine;
  Backend                  backend_ = Backend::Exact;
  Index                    size_    = 0;
  IndexList                unknowns_, fixed_;
  Eigen::VectorXd          dirichlet_;
  std::vector<Restriction> gather_;

  LocalSolverConfig                 cfg_;
  std::vector<SubdomainSolver>      solvers_;
  const CoarseBasis                *basis_ = nullptr;
  std::vector<Eigen::VectorXd>      warm_;
  std::optional<SurrogateRegistry>  registry_;
};

struct SubstructuredSolution
{
  Eigen::VectorXd g; // full skeleton vector
  NewtonTrace     trace;
};

/// Damped Newton on the skeleton residual. `initial` is a full skeleton
/// vector (empty means zero); its fixed entries are replaced by the Dirichlet
/// values. `error` receives full skeleton vectors. On failure a NewtonFailure
/// is thrown whose outcome holds the last full skeleton iterate.
SubstructuredSolution solve_substructured(SkeletonSystem &system, const NewtonConfig &cfg,
                                          const Eigen::VectorXd &initial = {},
                                          const std::function<double(const Eigen::VectorXd &)> &error = {});

/// Global field whose skeleton trace is g and whose subdomain interiors
/// solve the local Dirichlet problems.
Eigen::VectorXd reconstruct(const Problem &problem, const FineMesh &mesh, const DofMap &dofs,
                            const Eigen::VectorXd &g_fine, const LocalSolverConfig &cfg = {});

Eigen::VectorXd reconstruct_coarse(const Problem &problem, const FineMesh &mesh, const DofMap &dofs,
                                   const CoarseBasis &basis, const Eigen::VectorXd &g_coarse,
                                   const LocalSolverConfig &cfg = {});

/// Global field equal to the Dirichlet data on the outer boundary and
/// K-harmonic inside; for porous-media fluxes the extension is taken in the
/// Kirchhoff variable |u|^{p-1} u and mapped back.
Eigen::VectorXd harmonic_extension(const Problem &problem, const FineMesh &mesh);

/// Values of a global vertex field at the coarse nodes.
Eigen::VectorXd coarse_samples(const CoarsePartition &partition, const FineMesh &mesh, const Eigen::VectorXd &field);

/// Newton on the assembled global residual with Dirichlet vertices fixed,
/// started from harmonic_extension.
Eigen::VectorXd solve_monolithic(const Problem &problem, const FineMesh &mesh, const DofMap &dofs,
                                 const NewtonConfig &cfg = {}, NewtonTrace *trace = nullptr);

} // namespace msdtn
