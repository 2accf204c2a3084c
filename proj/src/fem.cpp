#include "msdtn/fem.hpp"
#include "msdtn/errors.hpp"

#include <cmath>
#include <numbers>
#include <unordered_map>

namespace msdtn {

CoefficientField constant_coefficient(double value)
{
  return {"constant(" + std::to_string(value) + ")", [value](const Eigen::Vector2d &) { return value; }};
}

CoefficientField oscillating_coefficient_1d()
{
  using std::numbers::pi;
  return {"oscillating_1d", [](const Eigen::Vector2d &x) {
            return 1e-2 + 0.5 * (1.0 + std::sin(10.0 * pi * x.x() + pi / 4.0));
          }};
}

CoefficientField oscillating_coefficient_2d(double cell)
{
  using std::numbers::pi;
  return {"oscillating_2d(cell=" + std::to_string(cell) + ")", [cell](const Eigen::Vector2d &p) {
            Eigen::Vector2d x = p;
            if (cell > 0) {
              x -= cell * (x / cell).array().floor().matrix();
            }
            return 1e-2 + 0.5 * (1.0 + std::sin(10.0 * x.x() + pi / 2.0) * std::sin(5.0 * x.y() + pi / 2.0));
          }};
}

void validate(const Problem &problem)
{
  if (problem.dim != 1 && problem.dim != 2) {
    throw ConfigError("problem dimension must be 1 or 2");
  }
  if (!(problem.reaction >= 0.0)) {
    throw ConfigError("reaction coefficient must be non-negative");
  }
  std::visit(
    [](const auto &f) {
      using T = std::decay_t<decltype(f)>;
      if constexpr (std::is_same_v<T, PorousMedia>) {
        if (!(f.exponent > 1.0)) throw ConfigError("porous-media exponent must exceed 1");
      } else {
        if (!(f.exponent > 0.0)) throw ConfigError("p-Laplace exponent must be positive");
      }
    },
    problem.flux);
}

double eval_coefficient(const Problem &problem, const Eigen::Vector2d &point)
{
  return problem.coefficient(point);
}

LocalOperator::LocalOperator(const Problem &problem, const FineMesh &mesh, const IndexList &elements, IndexList dofs)
  : nv_(mesh.dim + 1), reaction_(problem.reaction), flux_(problem.flux), dofs_(std::move(dofs))
{
  std::unordered_map<Index, int> local;
  local.reserve(dofs_.size());
  for (size_t k = 0; k < dofs_.size(); ++k) {
    local.emplace(dofs_[k], static_cast<int>(k));
  }
  mass_ = Eigen::VectorXd::Zero(size());
  elements_.reserve(elements.size());

  for (Index e : elements) {
    Element el;
    Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
    double          measure  = 0;
    for (int k = 0; k < nv_; ++k) {
      const Index g = mesh.elements(k, e);
      auto        it = local.find(g);
      if (it == local.end()) {
        throw Error("element vertex outside the operator's dof set");
      }
      el.v[k] = it->second;
      centroid.head(mesh.dim) += mesh.vertices.col(g);
    }
    centroid /= nv_;
    if (mesh.dim == 1) {
      const double h = mesh.vertices(0, mesh.elements(1, e)) - mesh.vertices(0, mesh.elements(0, e));
      measure        = h;
      el.grad(0, 0)  = -1.0 / h;
      el.grad(0, 1)  = 1.0 / h;
    } else {
      const Eigen::Vector2d x0 = mesh.vertices.col(mesh.elements(0, e));
      Eigen::Matrix2d       B;
      B.col(0) = mesh.vertices.col(mesh.elements(1, e)) - x0;
      B.col(1) = mesh.vertices.col(mesh.elements(2, e)) - x0;
      measure  = 0.5 * std::abs(B.determinant());
      const Eigen::Matrix2d Binv = B.inverse(); // rows: gradients of barycentrics 1, 2
      el.grad.col(1)             = Binv.row(0).transpose();
      el.grad.col(2)             = Binv.row(1).transpose();
      el.grad.col(0)             = -el.grad.col(1) - el.grad.col(2);
    }
    if (!(measure > 0)) {
      throw Error("degenerate element");
    }
    const double K = problem.coefficient(centroid);
    el.weight      = K * measure;
    el.stiffness   = el.weight * el.grad.transpose() * el.grad;
    for (int k = 0; k < nv_; ++k) {
      mass_[el.v[k]] += measure / nv_;
    }
    elements_.push_back(el);
  }
}

LocalOperator LocalOperator::subdomain(const Problem &problem, const FineMesh &mesh, const DofMap &dofs, Index i)
{
  return LocalOperator(problem, mesh, mesh.subdomain_elements.at(i), dofs.subdomains.at(i).closure);
}

void LocalOperator::check_input(const Eigen::Ref<const Eigen::VectorXd> &u) const
{
  if (u.size() != size()) {
    throw Error("local state has wrong size");
  }
  if (!u.allFinite()) {
    throw EvaluationError("non-finite state passed to residual evaluation");
  }
}

Eigen::VectorXd LocalOperator::residual(const Eigen::Ref<const Eigen::VectorXd> &u) const
{
  check_input(u);
  Eigen::VectorXd r = reaction_ * mass_.cwiseProduct(u);

  if (const auto *pm = std::get_if<PorousMedia>(&flux_)) {
    Eigen::VectorXd w = u.unaryExpr([p = pm->exponent](double x) { return kirchhoff_potential(x, p); });
    for (const Element &el : elements_) {
      for (int l = 0; l < nv_; ++l) {
        double s = 0;
        for (int k = 0; k < nv_; ++k) s += el.stiffness(l, k) * w[el.v[k]];
        r[el.v[l]] += s;
      }
    }
  } else {
    const double p = std::get<PLaplace>(flux_).exponent;
    for (const Element &el : elements_) {
      Eigen::Vector2d g = Eigen::Vector2d::Zero();
      for (int k = 0; k < nv_; ++k) g += el.grad.col(k) * u[el.v[k]];
      const double    s    = g.norm();
      Eigen::Vector2d flux = s > 0 ? Eigen::Vector2d(std::pow(s, p) * g) : Eigen::Vector2d::Zero();
      for (int l = 0; l < nv_; ++l) r[el.v[l]] += el.weight * el.grad.col(l).dot(flux);
    }
  }
  if (!r.allFinite()) {
    throw EvaluationError("residual evaluation produced non-finite values");
  }
  return r;
}

Eigen::SparseMatrix<double> LocalOperator::jacobian(const Eigen::Ref<const Eigen::VectorXd> &u) const
{
  check_input(u);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(elements_.size() * nv_ * nv_ + size());
  for (Index l = 0; l < size(); ++l) {
    t.emplace_back(l, l, reaction_ * mass_[l]);
  }

  if (const auto *pm = std::get_if<PorousMedia>(&flux_)) {
    const double p = pm->exponent;
    for (const Element &el : elements_) {
      for (int k = 0; k < nv_; ++k) {
        const double dw = kirchhoff_derivative(u[el.v[k]], p);
        for (int l = 0; l < nv_; ++l) t.emplace_back(el.v[l], el.v[k], el.stiffness(l, k) * dw);
      }
    }
  } else {
    const double p = std::get<PLaplace>(flux_).exponent;
    for (const Element &el : elements_) {
      Eigen::Vector2d g = Eigen::Vector2d::Zero();
      for (int k = 0; k < nv_; ++k) g += el.grad.col(k) * u[el.v[k]];
      const double    s = g.norm();
      Eigen::Matrix2d T = Eigen::Matrix2d::Zero(); // tangent vanishes at zero gradient for p > 0
      if (s > 0) T = std::pow(s, p) * Eigen::Matrix2d::Identity() + p * std::pow(s, p - 2.0) * g * g.transpose();
      // zero entries are kept so the sparsity pattern does not depend on u
      const Eigen::Matrix<double, 3, 3> A = el.weight * el.grad.transpose() * T * el.grad;
      for (int l = 0; l < nv_; ++l)
        for (int k = 0; k < nv_; ++k) t.emplace_back(el.v[l], el.v[k], A(l, k));
    }
  }
  Eigen::SparseMatrix<double> J(size(), size());
  J.setFromTriplets(t.begin(), t.end());
  return J;
}

Eigen::SparseMatrix<double> LocalOperator::stiffness() const
{
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(elements_.size() * nv_ * nv_);
  for (const Element &el : elements_)
    for (int l = 0; l < nv_; ++l)
      for (int k = 0; k < nv_; ++k) t.emplace_back(el.v[l], el.v[k], el.stiffness(l, k));
  Eigen::SparseMatrix<double> A(size(), size());
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

Eigen::VectorXd local_residual(const Problem &problem, const FineMesh &mesh, const DofMap &dofs, Index i,
                               const Eigen::Ref<const Eigen::VectorXd> &u_local)
{
  return LocalOperator::subdomain(problem, mesh, dofs, i).residual(u_local);
}

Eigen::SparseMatrix<double> local_jacobian(const Problem &problem, const FineMesh &mesh, const DofMap &dofs,
                                           Index i, const Eigen::Ref<const Eigen::VectorXd> &u_local)
{
  return LocalOperator::subdomain(problem, mesh, dofs, i).jacobian(u_local);
}

Eigen::VectorXd global_residual(const Problem &problem, const FineMesh &mesh, const DofMap &dofs,
                                const Eigen::Ref<const Eigen::VectorXd> &u)
{
  Eigen::VectorXd F = Eigen::VectorXd::Zero(mesh.num_vertices());
  for (Index i = 0; i < static_cast<Index>(dofs.subdomains.size()); ++i) {
    const LocalOperator op = LocalOperator::subdomain(problem, mesh, dofs, i);
    const Restriction   R(mesh.num_vertices(), op.dofs());
    R.extend_add(op.residual(R.restrict(u)), F);
  }
  return F;
}

Eigen::SparseMatrix<double> global_jacobian(const Problem &problem, const FineMesh &mesh, const DofMap &dofs,
                                            const Eigen::Ref<const Eigen::VectorXd> &u)
{
  std::vector<Eigen::Triplet<double>> t;
  for (Index i = 0; i < static_cast<Index>(dofs.subdomains.size()); ++i) {
    const LocalOperator op   = LocalOperator::subdomain(problem, mesh, dofs, i);
    const IndexList    &glob = op.dofs();
    const Eigen::SparseMatrix<double> J = op.jacobian(u(glob));
    for (Index c = 0; c < J.outerSize(); ++c) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(J, c); it; ++it) {
        t.emplace_back(glob[it.row()], glob[it.col()], it.value());
      }
    }
  }
  Eigen::SparseMatrix<double> J(mesh.num_vertices(), mesh.num_vertices());
  J.setFromTriplets(t.begin(), t.end());
  return J;
}

Eigen::VectorXd lumped_mass(const FineMesh &mesh)
{
  Eigen::VectorXd m  = Eigen::VectorXd::Zero(mesh.num_vertices());
  const int       nv = mesh.dim + 1;
  for (Index e = 0; e < mesh.num_elements(); ++e) {
    double measure;
    if (mesh.dim == 1) {
      measure = mesh.vertices(0, mesh.elements(1, e)) - mesh.vertices(0, mesh.elements(0, e));
    } else {
      Eigen::Matrix2d B;
      B.col(0) = mesh.vertices.col(mesh.elements(1, e)) - mesh.vertices.col(mesh.elements(0, e));
      B.col(1) = mesh.vertices.col(mesh.elements(2, e)) - mesh.vertices.col(mesh.elements(0, e));
      measure  = 0.5 * std::abs(B.determinant());
    }
    for (int k = 0; k < nv; ++k) m[mesh.elements(k, e)] += measure / nv;
  }
  return m;
}

} // namespace msdtn
