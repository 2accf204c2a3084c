#pragma once

#include "msdtn/mesh.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <variant>

namespace msdtn {

/// Flux K grad(|u|^{p-1} u): degenerate diffusion of porous-media type.
struct PorousMedia
{
  double exponent = 4.0;
};

/// Flux K |grad u|^p grad u.
struct PLaplace
{
  double exponent = 2.0;
};

using FluxModel = std::variant<PorousMedia, PLaplace>;

struct CoefficientField
{
  std::string                                   name;
  std::function<double(const Eigen::Vector2d &)> eval;

  double operator()(const Eigen::Vector2d &x) const { return eval(x); }
};

CoefficientField constant_coefficient(double value);

/// 1e-2 + (1 + sin(10 pi x + pi/4)) / 2
CoefficientField oscillating_coefficient_1d();

/// 1e-2 + (1 + sin(10 x + pi/2) sin(5 y + pi/2)) / 2. With cell > 0 the
/// field is evaluated in cell-local coordinates (x mod cell, y mod cell),
/// so every cell of that size sees the same coefficient.
CoefficientField oscillating_coefficient_2d(double cell = 0.0);

/// a u - div(K F(u, grad u)) = 0 with Dirichlet data u_D.
struct Problem
{
  std::string                                   name = "custom";
  int                                           dim  = 1;
  double                                        reaction = 1.0;
  CoefficientField                              coefficient = constant_coefficient(1.0);
  FluxModel                                     flux;
  std::function<double(const Eigen::Vector2d &)> boundary = [](const Eigen::Vector2d &) { return 0.0; };
};

/// Throws ConfigError for a negative reaction coefficient or an exponent
/// outside the admissible range of the flux model.
void validate(const Problem &problem);

double eval_coefficient(const Problem &problem, const Eigen::Vector2d &point);

/// Sign-preserving porous-media potential |u|^{p-1} u and its derivative.
inline double kirchhoff_potential(double u, double p) { return std::copysign(std::pow(std::abs(u), p), u); }
inline double kirchhoff_derivative(double u, double p) { return p * std::pow(std::abs(u), p - 1.0); }

/// Mass-lumped P1 "Neumann residual" restricted to a set of elements.
///
/// Vectors are indexed by `dofs()` (ascending global vertex numbers). Every
/// component l is r_l = a m_l u_l + sum_e K_e |e| grad(flux) . grad(eta_l).
class LocalOperator
{
public:
  LocalOperator(const Problem &problem, const FineMesh &mesh, const IndexList &elements, IndexList dofs);

  /// Operator of subdomain i with its closure dofs.
  static LocalOperator subdomain(const Problem &problem, const FineMesh &mesh, const DofMap &dofs, Index i);

  Index                  size() const { return static_cast<Index>(dofs_.size()); }
  const IndexList       &dofs() const { return dofs_; }
  const Eigen::VectorXd &lumped_mass() const { return mass_; }

  Eigen::VectorXd             residual(const Eigen::Ref<const Eigen::VectorXd> &u) const;
  /// Sparsity pattern is independent of u.
  Eigen::SparseMatrix<double> jacobian(const Eigen::Ref<const Eigen::VectorXd> &u) const;
  /// Linear part sum_e K_e |e| G^T G.
  Eigen::SparseMatrix<double> stiffness() const;

private:
  struct Element
  {
    std::array<int, 3>         v{}; // local dof ids
    Eigen::Matrix<double, 2, 3> grad = Eigen::Matrix<double, 2, 3>::Zero();
    Eigen::Matrix3d            stiffness = Eigen::Matrix3d::Zero(); // K |e| G^T G
    double                     weight = 0;                           // K |e|
  };

  void check_input(const Eigen::Ref<const Eigen::VectorXd> &u) const;

  int                  nv_ = 2;
  double               reaction_ = 0;
  FluxModel            flux_;
  IndexList            dofs_;
  Eigen::VectorXd      mass_;
  std::vector<Element> elements_;
};

Eigen::VectorXd local_residual(const Problem &problem, const FineMesh &mesh, const DofMap &dofs, Index i,
                               const Eigen::Ref<const Eigen::VectorXd> &u_local);

Eigen::SparseMatrix<double> local_jacobian(const Problem &problem, const FineMesh &mesh, const DofMap &dofs,
                                           Index i, const Eigen::Ref<const Eigen::VectorXd> &u_local);

/// Sum over subdomains of the extended local residuals.
Eigen::VectorXd global_residual(const Problem &problem, const FineMesh &mesh, const DofMap &dofs,
                                const Eigen::Ref<const Eigen::VectorXd> &u);

Eigen::SparseMatrix<double> global_jacobian(const Problem &problem, const FineMesh &mesh, const DofMap &dofs,
                                            const Eigen::Ref<const Eigen::VectorXd> &u);

/// Lumped P1 mass of the whole mesh, one weight per vertex.
Eigen::VectorXd lumped_mass(const FineMesh &mesh);

} // namespace msdtn
