#pragma once

#include "msdtn/fem.hpp"
#include "msdtn/mesh.hpp"
#include "msdtn/newton.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <memory>
#include <optional>

namespace msdtn {

struct LocalSolverConfig
{
  NewtonConfig newton{.tol = 1e-10, .max_iter = 100, .min_iter = 1}; // one step polishes warm starts
};

struct DtNResult
{
  Eigen::VectorXd                flux;
  std::optional<Eigen::MatrixXd> jacobian;
  Eigen::VectorXd                interior_state;
  int                            iterations = 0;
};

/// Interior/boundary blocks of a subdomain Jacobian.
struct JacobianBlocks
{
  Eigen::SparseMatrix<double> ii, ib, bi, bb;
};

/// Local Dirichlet solver and discrete DtN map of one subdomain.
///
/// The interior unknowns solve F_I(u_I, g) = 0; the DtN map returns the
/// boundary part F_B(u_I, g) of the local residual, i.e. the net outward
/// flux absorbed at each boundary vertex.
class SubdomainSolver
{
public:
  SubdomainSolver(const Problem &problem, const FineMesh &mesh, const DofMap &dofs, Index i);

  Index                num_interior() const { return sub_->interior_in_closure.target_size(); }
  Index                num_boundary() const { return sub_->boundary_in_closure.target_size(); }
  const LocalOperator &op() const { return op_; }
  const SubdomainDofs &dofs() const { return *sub_; }

  Eigen::VectorXd assemble(const Eigen::Ref<const Eigen::VectorXd> &interior,
                           const Eigen::Ref<const Eigen::VectorXd> &boundary) const;

  JacobianBlocks blocks(const Eigen::Ref<const Eigen::VectorXd> &u_closure) const;

  /// K-harmonic extension of g into the interior, taken in the Kirchhoff
  /// variable for porous-media fluxes. Default initial guess of solve_local.
  Eigen::VectorXd initial_guess(const Eigen::Ref<const Eigen::VectorXd> &g) const;

  /// Throws NonConvergence / SingularJacobian.
  Eigen::VectorXd solve_local(const Eigen::Ref<const Eigen::VectorXd> &g, const LocalSolverConfig &cfg,
                              const Eigen::VectorXd *initial = nullptr, int *iterations = nullptr) const;

  DtNResult dtn(const Eigen::Ref<const Eigen::VectorXd> &g, const LocalSolverConfig &cfg, bool want_jacobian,
                const Eigen::VectorXd *initial = nullptr) const;

  /// Coarse map v -> Phi_i^T DtN(Phi_i v) with Jacobian Phi_i^T DtN' Phi_i.
  DtNResult dtn_coarse(const Eigen::MatrixXd &phi_local, const Eigen::Ref<const Eigen::VectorXd> &v,
                       const LocalSolverConfig &cfg, bool want_jacobian,
                       const Eigen::VectorXd *initial = nullptr) const;

  using SparseLU = Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>;

private:
  JacobianBlocks split(const Eigen::SparseMatrix<double> &J) const;

  const SubdomainDofs *sub_;
  LocalOperator        op_;
  double               kirchhoff_ = 0; // porous-media exponent, 0 for p-Laplace
  std::shared_ptr<const SparseLU> extension_lu_;
  Eigen::SparseMatrix<double>     extension_ib_;
  std::vector<Index>   interior_pos_; // closure position -> interior slot or -1
  std::vector<Index>   boundary_pos_; // closure position -> boundary slot or -1
};

Eigen::VectorXd solve_local(const Problem &problem, const FineMesh &mesh, const DofMap &dofs, Index i,
                            const Eigen::Ref<const Eigen::VectorXd> &g, const LocalSolverConfig &cfg = {});

DtNResult dtn_fine(const Problem &problem, const FineMesh &mesh, const DofMap &dofs, Index i,
                   const Eigen::Ref<const Eigen::VectorXd> &g, const LocalSolverConfig &cfg = {},
                   bool want_jacobian = false);

DtNResult dtn_coarse(const Problem &problem, const FineMesh &mesh, const DofMap &dofs, const CoarseBasis &basis,
                     Index i, const Eigen::Ref<const Eigen::VectorXd> &v, const LocalSolverConfig &cfg = {},
                     bool want_jacobian = false);

} // namespace msdtn
