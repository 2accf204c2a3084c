#include "msdtn/dtn.hpp"
#include "msdtn/errors.hpp"

#include <Eigen/SparseLU>

namespace msdtn {

namespace {

using SparseLU = SubdomainSolver::SparseLU;

void factorize(SparseLU &lu, const Eigen::SparseMatrix<double> &A, bool analyze = true)
{
  if (analyze) lu.analyzePattern(A);
  lu.factorize(A);
  if (lu.info() != Eigen::Success) {
    throw SingularJacobian("interior Jacobian factorization failed: " + lu.lastErrorMessage());
  }
}

struct InteriorNewton
{
  const SubdomainSolver &solver;
  const Eigen::VectorXd &g;
  SparseLU               lu;
  bool                   analyzed = false; // the Jacobian pattern does not change

  Eigen::VectorXd residual(const Eigen::VectorXd &x)
  {
    return solver.dofs().interior_in_closure.restrict(solver.op().residual(solver.assemble(x, g)));
  }

  Eigen::VectorXd step(const Eigen::VectorXd &x, const Eigen::VectorXd &r)
  {
    factorize(lu, solver.blocks(solver.assemble(x, g)).ii, !analyzed);
    analyzed = true;
    Eigen::VectorXd dx = lu.solve(-r);
    if (!dx.allFinite()) {
      throw SingularJacobian("interior Newton step is not finite");
    }
    return dx;
  }
};

} // namespace

SubdomainSolver::SubdomainSolver(const Problem &problem, const FineMesh &mesh, const DofMap &dofs, Index i)
  : sub_(&dofs.subdomains.at(i)), op_(LocalOperator::subdomain(problem, mesh, dofs, i))
{
  interior_pos_.assign(op_.size(), -1);
  boundary_pos_.assign(op_.size(), -1);
  const IndexList &in = sub_->interior_in_closure.indices();
  const IndexList &bd = sub_->boundary_in_closure.indices();
  for (size_t k = 0; k < in.size(); ++k) interior_pos_[in[k]] = static_cast<Index>(k);
  for (size_t k = 0; k < bd.size(); ++k) boundary_pos_[bd[k]] = static_cast<Index>(k);

  if (const auto *pm = std::get_if<PorousMedia>(&problem.flux)) kirchhoff_ = pm->exponent;
  if (num_interior() > 0) {
    JacobianBlocks A = split(op_.stiffness());
    auto           lu = std::make_shared<SparseLU>();
    factorize(*lu, A.ii);
    extension_lu_ = std::move(lu);
    extension_ib_ = std::move(A.ib);
  }
}

Eigen::VectorXd SubdomainSolver::initial_guess(const Eigen::Ref<const Eigen::VectorXd> &g) const
{
  if (num_interior() == 0) return Eigen::VectorXd();
  const double    p = kirchhoff_;
  Eigen::VectorXd w = p > 0 ? g.unaryExpr([p](double x) { return kirchhoff_potential(x, p); }).eval() : g.eval();
  Eigen::VectorXd x = extension_lu_->solve(-(extension_ib_ * w));
  if (p > 0) x = x.unaryExpr([p](double y) { return std::copysign(std::pow(std::abs(y), 1.0 / p), y); });
  return x;
}

Eigen::VectorXd SubdomainSolver::assemble(const Eigen::Ref<const Eigen::VectorXd> &interior,
                                          const Eigen::Ref<const Eigen::VectorXd> &boundary) const
{
  Eigen::VectorXd u = Eigen::VectorXd::Zero(op_.size());
  sub_->interior_in_closure.extend_add(interior, u);
  sub_->boundary_in_closure.extend_add(boundary, u);
  return u;
}

JacobianBlocks SubdomainSolver::blocks(const Eigen::Ref<const Eigen::VectorXd> &u_closure) const
{
  return split(op_.jacobian(u_closure));
}

JacobianBlocks SubdomainSolver::split(const Eigen::SparseMatrix<double> &J) const
{
  using T                             = Eigen::Triplet<double>;
  std::vector<T> ii, ib, bi, bb;
  for (Index c = 0; c < J.outerSize(); ++c) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(J, c); it; ++it) {
      const Index ri = interior_pos_[it.row()], ci = interior_pos_[it.col()];
      const Index rb = boundary_pos_[it.row()], cb = boundary_pos_[it.col()];
      if (ri >= 0 && ci >= 0) ii.emplace_back(ri, ci, it.value());
      else if (ri >= 0) ib.emplace_back(ri, cb, it.value());
      else if (ci >= 0) bi.emplace_back(rb, ci, it.value());
      else bb.emplace_back(rb, cb, it.value());
    }
  }
  const Index    nI = num_interior(), nB = num_boundary();
  JacobianBlocks out;
  out.ii.resize(nI, nI);
  out.ib.resize(nI, nB);
  out.bi.resize(nB, nI);
  out.bb.resize(nB, nB);
  out.ii.setFromTriplets(ii.begin(), ii.end());
  out.ib.setFromTriplets(ib.begin(), ib.end());
  out.bi.setFromTriplets(bi.begin(), bi.end());
  out.bb.setFromTriplets(bb.begin(), bb.end());
  return out;
}

Eigen::VectorXd SubdomainSolver::solve_local(const Eigen::Ref<const Eigen::VectorXd> &g, const LocalSolverConfig &cfg,
                                             const Eigen::VectorXd *initial, int *iterations) const
{
  if (g.size() != num_boundary()) {
    throw Error("boundary data has wrong size");
  }
  if (!g.allFinite()) {
    throw EvaluationError("non-finite boundary data");
  }
  if (num_interior() == 0) {
    if (iterations) *iterations = 0;
    return Eigen::VectorXd();
  }
  Eigen::VectorXd x0 = (initial && initial->size() == num_interior()) ? *initial : initial_guess(g);
  const Eigen::VectorXd gg = g;
  InteriorNewton        sys{*this, gg, {}};
  NewtonOutcome         out = damped_newton(sys, std::move(x0), cfg.newton);
  if (iterations) *iterations = out.trace.iterations();
  return std::move(out.x);
}

DtNResult SubdomainSolver::dtn(const Eigen::Ref<const Eigen::VectorXd> &g, const LocalSolverConfig &cfg,
                               bool want_jacobian, const Eigen::VectorXd *initial) const
{
  DtNResult res;
  res.interior_state      = solve_local(g, cfg, initial, &res.iterations);
  const Eigen::VectorXd u = assemble(res.interior_state, g);
  res.flux                = sub_->boundary_in_closure.restrict(op_.residual(u));
  if (want_jacobian) {
    const JacobianBlocks A = blocks(u);
    Eigen::MatrixXd      S = Eigen::MatrixXd(A.bb);
    if (num_interior() > 0) {
      SparseLU lu;
      factorize(lu, A.ii);
      const Eigen::MatrixXd X = lu.solve(Eigen::MatrixXd(A.ib));
      S -= A.bi * X;
    }
    res.jacobian = std::move(S);
  }
  return res;
}

DtNResult SubdomainSolver::dtn_coarse(const Eigen::MatrixXd &phi_local, const Eigen::Ref<const Eigen::VectorXd> &v,
                                      const LocalSolverConfig &cfg, bool want_jacobian,
                                      const Eigen::VectorXd *initial) const
{
  if (v.size() != phi_local.cols()) {
    throw Error("coarse vector has wrong size");
  }
  DtNResult res = dtn(phi_local * v, cfg, want_jacobian, initial);
  res.flux      = phi_local.transpose() * res.flux;
  if (res.jacobian) {
    res.jacobian = (phi_local.transpose() * (*res.jacobian) * phi_local).eval();
  }
  return res;
}

Eigen::VectorXd solve_local(const Problem &problem, const FineMesh &mesh, const DofMap &dofs, Index i,
                            const Eigen::Ref<const Eigen::VectorXd> &g, const LocalSolverConfig &cfg)
{
  return SubdomainSolver(problem, mesh, dofs, i).solve_local(g, cfg);
}

DtNResult dtn_fine(const Problem &problem, const FineMesh &mesh, const DofMap &dofs, Index i,
                   const Eigen::Ref<const Eigen::VectorXd> &g, const LocalSolverConfig &cfg, bool want_jacobian)
{
  return SubdomainSolver(problem, mesh, dofs, i).dtn(g, cfg, want_jacobian);
}

DtNResult dtn_coarse(const Problem &problem, const FineMesh &mesh, const DofMap &dofs, const CoarseBasis &basis,
                     Index i, const Eigen::Ref<const Eigen::VectorXd> &v, const LocalSolverConfig &cfg,
                     bool want_jacobian)
{
  return SubdomainSolver(problem, mesh, dofs, i).dtn_coarse(basis.local.at(i), v, cfg, want_jacobian);
}

} // namespace msdtn
