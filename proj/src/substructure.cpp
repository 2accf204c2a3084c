#include "msdtn/substructure.hpp"
#include "msdtn/errors.hpp"

#include <Eigen/SparseLU>

#include <numeric>

namespace msdtn {

namespace {

Eigen::Vector2d point_of(const Eigen::MatrixXd &coords, Index k)
{
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  x.head(coords.rows()) = coords.col(k);
  return x;
}

struct SkeletonNewton
{
  SkeletonSystem &system;

  Eigen::VectorXd residual(const Eigen::VectorXd &x) { return system.evaluate(system.expand(x), false).residual; }

  Eigen::VectorXd step(const Eigen::VectorXd &x, const Eigen::VectorXd &r)
  {
    const SkeletonEvaluation ev = system.evaluate(system.expand(x), true);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(ev.jacobian);
    Eigen::VectorXd dx = lu.solve(-r);
    if (!dx.allFinite() || !(lu.rcond() > 1e-15)) {
      throw SingularJacobian("skeleton Jacobian is singular");
    }
    return dx;
  }
};

struct MonolithicNewton
{
  const Problem        &problem;
  const FineMesh       &mesh;
  const DofMap         &dofs;
  const IndexList      &free;
  const Eigen::VectorXd base; // Dirichlet values on boundary vertices, zero elsewhere

  Eigen::VectorXd full(const Eigen::VectorXd &x) const
  {
    Eigen::VectorXd u = base;
    u(free)           = x;
    return u;
  }

  Eigen::VectorXd residual(const Eigen::VectorXd &x) { return global_residual(problem, mesh, dofs, full(x))(free); }

  Eigen::VectorXd step(const Eigen::VectorXd &x, const Eigen::VectorXd &r)
  {
    const Eigen::SparseMatrix<double> J = global_jacobian(problem, mesh, dofs, full(x));
    const Restriction                 R(mesh.num_vertices(), free);
    const Eigen::SparseMatrix<double> P  = R.matrix().cast<double>();
    const Eigen::SparseMatrix<double> Jf = P * J * P.transpose();
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu(Jf);
    if (lu.info() != Eigen::Success) throw SingularJacobian("global Jacobian factorization failed");
    return lu.solve(-r);
  }
};

} // namespace

void SkeletonSystem::set_boundary(const std::vector<bool> &is_fixed, const std::function<double(Index)> &value)
{
  size_ = static_cast<Index>(is_fixed.size());
  for (Index k = 0; k < size_; ++k) (is_fixed[k] ? fixed_ : unknowns_).push_back(k);
  dirichlet_.resize(static_cast<Index>(fixed_.size()));
  for (size_t k = 0; k < fixed_.size(); ++k) dirichlet_[static_cast<Index>(k)] = value(fixed_[k]);
}

SkeletonSystem SkeletonSystem::fine(const Problem &problem, const FineMesh &mesh, const DofMap &dofs,
                                    const LocalSolverConfig &cfg)
{
  validate(problem);
  SkeletonSystem s;
  s.level_   = Level::Fine;
  s.backend_ = Backend::Exact;
  s.cfg_     = cfg;
  std::vector<bool> is_fixed(dofs.skeleton.size(), false);
  for (Index k : dofs.skeleton_fixed) is_fixed[k] = true;
  s.set_boundary(is_fixed, [&](Index k) { return problem.boundary(point_of(mesh.vertices, dofs.skeleton[k])); });
  for (Index i = 0; i < static_cast<Index>(dofs.subdomains.size()); ++i) {
    s.solvers_.emplace_back(problem, mesh, dofs, i);
    s.gather_.push_back(dofs.subdomains[i].boundary_in_skeleton);
  }
  s.warm_.resize(s.solvers_.size());
  return s;
}

SkeletonSystem SkeletonSystem::coarse(const Problem &problem, const CoarsePartition &partition, const FineMesh &mesh,
                                      const DofMap &dofs, const CoarseBasis &basis, const LocalSolverConfig &cfg)
{
  validate(problem);
  SkeletonSystem s;
  s.level_   = Level::Coarse;
  s.backend_ = Backend::Exact;
  s.cfg_     = cfg;
  s.basis_   = &basis;
  s.set_boundary(partition.coarse_on_boundary,
                 [&](Index k) { return problem.boundary(point_of(partition.coarse_nodes, k)); });
  for (Index i = 0; i < partition.num_subdomains(); ++i) {
    s.solvers_.emplace_back(problem, mesh, dofs, i);
    s.gather_.push_back(basis.local_nodes[i]);
  }
  s.warm_.resize(s.solvers_.size());
  return s;
}

SkeletonSystem SkeletonSystem::surrogate(const Problem &problem, const CoarsePartition &partition,
                                         SurrogateRegistry registry)
{
  SkeletonSystem s;
  s.level_    = Level::Coarse;
  s.backend_  = Backend::Surrogate;
  s.registry_ = std::move(registry);
  s.set_boundary(partition.coarse_on_boundary,
                 [&](Index k) { return problem.boundary(point_of(partition.coarse_nodes, k)); });
  for (Index i = 0; i < partition.num_subdomains(); ++i) {
    s.gather_.emplace_back(partition.num_coarse_nodes(), partition.local_coarse_nodes(i));
    const SurrogateModel &m = s.registry_->at(i);
    if (m.input_dim() != s.gather_.back().target_size()) {
      throw ConfigError("surrogate input dimension does not match the number of local coarse nodes");
    }
  }
  return s;
}

Eigen::VectorXd SkeletonSystem::with_dirichlet(Eigen::VectorXd g) const
{
  if (g.size() != size_) throw Error("skeleton vector has wrong size");
  g(fixed_) = dirichlet_;
  return g;
}

Eigen::VectorXd SkeletonSystem::expand(const Eigen::VectorXd &unknown_values) const
{
  Eigen::VectorXd g = Eigen::VectorXd::Zero(size_);
  g(unknowns_)      = unknown_values;
  g(fixed_)         = dirichlet_;
  return g;
}

void SkeletonSystem::reset_warm_start()
{
  for (auto &w : warm_) w.resize(0);
}

SkeletonEvaluation SkeletonSystem::evaluate(const Eigen::VectorXd &g, bool want_jacobian)
{
  if (g.size() != size_) throw Error("skeleton vector has wrong size");
  Eigen::VectorXd F = Eigen::VectorXd::Zero(size_);
  Eigen::MatrixXd J;
  if (want_jacobian) J = Eigen::MatrixXd::Zero(size_, size_);

  for (size_t i = 0; i < gather_.size(); ++i) {
    const Restriction    &E = gather_[i];
    const Eigen::VectorXd v = E.restrict(g);
    Eigen::VectorXd       flux;
    Eigen::MatrixXd       jac;
    if (backend_ == Backend::Surrogate) {
      const SurrogateModel &model = registry_->at(static_cast<Index>(i));
      const double          slack = 0.05 * (model.loss.u_max - model.loss.u_min);
      if (v.minCoeff() < model.loss.u_min - slack || v.maxCoeff() > model.loss.u_max + slack) {
        throw EvaluationError("surrogate input outside the training box");
      }
      auto [f, Jl] = model.evaluate(v);
      flux         = std::move(f);
      jac          = std::move(Jl);
    } else {
      const Eigen::VectorXd *init = warm_[i].size() > 0 ? &warm_[i] : nullptr;
      DtNResult r = level_ == Level::Fine ? solvers_[i].dtn(v, cfg_, want_jacobian, init)
                                          : solvers_[i].dtn_coarse(basis_->local[i], v, cfg_, want_jacobian, init);
      warm_[i] = std::move(r.interior_state);
      flux     = std::move(r.flux);
      if (r.jacobian) jac = std::move(*r.jacobian);
    }
    E.extend_add(flux, F);
    if (want_jacobian) {
      const IndexList &idx = E.indices();
      J(idx, idx) += jac;
    }
  }
  SkeletonEvaluation out;
  out.residual = F(unknowns_);
  if (want_jacobian) out.jacobian = J(unknowns_, unknowns_);
  return out;
}

SubstructuredSolution solve_substructured(SkeletonSystem &system, const NewtonConfig &cfg,
                                          const Eigen::VectorXd &initial,
                                          const std::function<double(const Eigen::VectorXd &)> &error)
{
  Eigen::VectorXd g0 = initial.size() == 0 ? Eigen::VectorXd::Zero(system.size()) : initial;
  g0                 = system.with_dirichlet(std::move(g0));
  if (!g0.allFinite()) throw EvaluationError("non-finite initial guess");

  std::function<double(const Eigen::VectorXd &)> err;
  if (error) err = [&](const Eigen::VectorXd &x) { return error(system.expand(x)); };

  SkeletonNewton newton{system};
  try {
    NewtonOutcome out = damped_newton(newton, g0(system.unknowns()), cfg, err);
    return {system.expand(out.x), std::move(out.trace)};
  } catch (NewtonFailure &f) {
    f.outcome.x = system.expand(f.outcome.x);
    throw;
  }
}

Eigen::VectorXd reconstruct(const Problem &problem, const FineMesh &mesh, const DofMap &dofs,
                            const Eigen::VectorXd &g_fine, const LocalSolverConfig &cfg)
{
  if (g_fine.size() != static_cast<Index>(dofs.skeleton.size())) throw Error("skeleton vector has wrong size");
  Eigen::VectorXd u = Eigen::VectorXd::Zero(mesh.num_vertices());
  u(dofs.skeleton)  = g_fine;
  for (Index i = 0; i < static_cast<Index>(dofs.subdomains.size()); ++i) {
    const SubdomainSolver solver(problem, mesh, dofs, i);
    const SubdomainDofs  &sd = dofs.subdomains[i];
    u(sd.interior)           = solver.solve_local(sd.boundary_in_skeleton.restrict(g_fine), cfg);
  }
  return u;
}

Eigen::VectorXd reconstruct_coarse(const Problem &problem, const FineMesh &mesh, const DofMap &dofs,
                                   const CoarseBasis &basis, const Eigen::VectorXd &g_coarse,
                                   const LocalSolverConfig &cfg)
{
  if (g_coarse.size() != basis.phi.cols()) throw Error("coarse vector has wrong size");
  return reconstruct(problem, mesh, dofs, basis.phi * g_coarse, cfg);
}

Eigen::VectorXd harmonic_extension(const Problem &problem, const FineMesh &mesh)
{
  const IndexList free = region_indices(mesh, Region::Interior);
  Eigen::VectorXd w    = Eigen::VectorXd::Zero(mesh.num_vertices());
  for (Index v : region_indices(mesh, Region::Boundary)) w[v] = problem.boundary(point_of(mesh.vertices, v));
  const double p = std::holds_alternative<PorousMedia>(problem.flux) ? std::get<PorousMedia>(problem.flux).exponent
                                                                      : 0.0;
  if (p > 0) w = w.unaryExpr([p](double x) { return kirchhoff_potential(x, p); }).eval();

  IndexList all_elements(static_cast<size_t>(mesh.num_elements()));
  IndexList all_vertices(static_cast<size_t>(mesh.num_vertices()));
  std::iota(all_elements.begin(), all_elements.end(), Index{0});
  std::iota(all_vertices.begin(), all_vertices.end(), Index{0});
  const LocalOperator               global(problem, mesh, all_elements, all_vertices);
  const Eigen::SparseMatrix<double> A = global.stiffness();
  const Eigen::SparseMatrix<double> P = Restriction(mesh.num_vertices(), free).matrix().cast<double>();
  const Eigen::SparseMatrix<double> Aff = P * A * P.transpose();
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu(Aff);
  if (lu.info() != Eigen::Success) throw SingularJacobian("stiffness factorization failed");
  const Eigen::VectorXd rhs = -(P * (A * w));
  const Eigen::VectorXd wf  = lu.solve(rhs);
  w(free)                   = wf;
  if (p > 0) w = w.unaryExpr([p](double y) { return std::copysign(std::pow(std::abs(y), 1.0 / p), y); }).eval();
  return w;
}

Eigen::VectorXd coarse_samples(const CoarsePartition &partition, const FineMesh &mesh, const Eigen::VectorXd &field)
{
  if (field.size() != mesh.num_vertices()) throw Error("field has wrong size");
  const Index     n = mesh.cells_per_axis();
  Eigen::VectorXd out(partition.num_coarse_nodes());
  for (Index k = 0; k < out.size(); ++k) {
    const Index ix = std::lround(partition.coarse_nodes(0, k) * static_cast<double>(n));
    const Index iy = mesh.dim == 2 ? std::lround(partition.coarse_nodes(1, k) * static_cast<double>(n)) : 0;
    out[k]         = field[ix + iy * (n + 1)];
  }
  return out;
}

Eigen::VectorXd solve_monolithic(const Problem &problem, const FineMesh &mesh, const DofMap &dofs,
                                 const NewtonConfig &cfg, NewtonTrace *trace)
{
  validate(problem);
  const IndexList free = region_indices(mesh, Region::Interior);
  Eigen::VectorXd base = Eigen::VectorXd::Zero(mesh.num_vertices());
  for (Index v : region_indices(mesh, Region::Boundary)) base[v] = problem.boundary(point_of(mesh.vertices, v));
  MonolithicNewton sys{problem, mesh, dofs, free, base};

  NewtonOutcome out = damped_newton(sys, harmonic_extension(problem, mesh)(free), cfg);
  if (trace) *trace = out.trace;
  return sys.full(out.x);
}

} // namespace msdtn
