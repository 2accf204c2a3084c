#include "msdtn/errors.hpp"
#include "msdtn/substructure.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>

using namespace msdtn;

namespace {

struct Fixture
{
  CoarsePartition partition;
  FineMesh        mesh;
  DofMap          dofs;
  CoarseBasis     basis;
  Problem         problem;

  Fixture(int dim, int n, int cells, FluxModel flux, CoefficientField K, double a)
    : partition(build_partition(dim, n)), mesh(build_fine_mesh(partition, cells)), dofs(build_dof_map(mesh)),
      basis(build_coarse_basis(partition, mesh, dofs))
  {
    problem.dim         = dim;
    problem.flux        = flux;
    problem.coefficient = std::move(K);
    problem.reaction    = a;
    if (dim == 1) {
      problem.boundary = [](const Eigen::Vector2d &x) { return x.x() < 0.5 ? 4.0 : 0.0; };
    } else {
      problem.boundary = [](const Eigen::Vector2d &x) { return std::max(1.2 * (x.x() + x.y() - 1), 0.0); };
    }
  }
};

LocalSolverConfig tight()
{
  LocalSolverConfig c;
  c.newton.tol = 1e-13;
  return c;
}

Eigen::VectorXd skeleton_trace(const DofMap &dofs, const Eigen::VectorXd &field)
{
  return field(dofs.skeleton);
}

} // namespace

TEST_CASE("Dirichlet entries are fixed and unknowns are the rest")
{
  const Fixture  f(2, 3, 3, PLaplace{2.0}, oscillating_coefficient_2d(), 1.0);
  SkeletonSystem s = SkeletonSystem::fine(f.problem, f.mesh, f.dofs);
  CHECK(s.level() == Level::Fine);
  CHECK(static_cast<size_t>(s.size()) == f.dofs.skeleton.size());
  CHECK(s.unknowns().size() + s.fixed().size() == f.dofs.skeleton.size());
  REQUIRE(s.dirichlet().size() == static_cast<Index>(s.fixed().size()));
  for (size_t j = 0; j < s.fixed().size(); ++j) {
    const Index v = f.dofs.skeleton[static_cast<size_t>(s.fixed()[j])];
    CHECK(s.dirichlet()[static_cast<Index>(j)] == f.problem.boundary(f.mesh.vertices.col(v)));
  }
  const Eigen::VectorXd g = s.with_dirichlet(Eigen::VectorXd::Constant(static_cast<Index>(f.dofs.skeleton.size()), -7));
  CHECK((g(s.fixed()) - s.dirichlet()).norm() == 0.0);
  CHECK((g(s.unknowns()).array() == -7.0).all());
  const Eigen::VectorXd e = s.expand(Eigen::VectorXd::Constant(static_cast<Index>(s.unknowns().size()), 2.5));
  CHECK((e(s.unknowns()).array() == 2.5).all());
  CHECK((e(s.fixed()) - s.dirichlet()).norm() == 0.0);

  SkeletonSystem c = SkeletonSystem::coarse(f.problem, f.partition, f.mesh, f.dofs, f.basis);
  CHECK(static_cast<Index>(c.unknowns().size()) == f.partition.num_interior_coarse_nodes());
}

TEST_CASE("skeleton residual equals the global residual of the glued field")
{
  const std::vector<FluxModel> fluxes{PorousMedia{4.0}, PLaplace{2.0}};
  for (int dim : {1, 2}) {
    for (const FluxModel &flux : fluxes) {
      const Fixture   f(dim, 3, dim == 1 ? 6 : 3, flux,
                        dim == 1 ? oscillating_coefficient_1d() : oscillating_coefficient_2d(), 5.0);
      SkeletonSystem  s = SkeletonSystem::fine(f.problem, f.mesh, f.dofs, tight());
      Eigen::VectorXd g(static_cast<Index>(f.dofs.skeleton.size()));
      for (Index k = 0; k < g.size(); ++k) g[k] = 0.5 + 0.3 * std::sin(1.7 * static_cast<double>(k));
      g = s.with_dirichlet(g);
      const SkeletonEvaluation ev = s.evaluate(g, false);
      const Eigen::VectorXd    u  = reconstruct(f.problem, f.mesh, f.dofs, g, tight());
      CHECK((skeleton_trace(f.dofs, u) - g).norm() == 0.0);
      const Eigen::VectorXd r = global_residual(f.problem, f.mesh, f.dofs, u);
      IndexList             verts;
      for (Index k : s.unknowns()) verts.push_back(f.dofs.skeleton[static_cast<size_t>(k)]);
      CHECK((r(verts) - ev.residual).lpNorm<Eigen::Infinity>() <= 1e-10 * (1 + r.lpNorm<Eigen::Infinity>()));
      IndexList inside;
      for (Index v = 0; v < f.mesh.num_vertices(); ++v)
        if (f.mesh.flags[static_cast<size_t>(v)] == VertexFlag::Interior) inside.push_back(v);
      CHECK(r(inside).lpNorm<Eigen::Infinity>() <= 1e-9);
    }
  }
}

TEST_CASE("skeleton Jacobians match central differences")
{
  for (int dim : {1, 2}) {
    const Fixture f(dim, 3, dim == 1 ? 6 : 3, PorousMedia{4.0},
                    dim == 1 ? oscillating_coefficient_1d() : oscillating_coefficient_2d(), 5.0);
    for (Level level : {Level::Fine, Level::Coarse}) {
      SkeletonSystem s = level == Level::Fine ? SkeletonSystem::fine(f.problem, f.mesh, f.dofs, tight())
                                              : SkeletonSystem::coarse(f.problem, f.partition, f.mesh, f.dofs,
                                                                       f.basis, tight());
      const Index     n = static_cast<Index>(s.unknowns().size());
      Eigen::VectorXd x(n);
      for (Index k = 0; k < x.size(); ++k) x[k] = 1.0 + 0.4 * std::cos(static_cast<double>(k));
      const Eigen::MatrixXd J = s.evaluate(s.expand(x), true).jacobian;
      REQUIRE(J.rows() == n);
      Eigen::MatrixXd fd(n, n);
      for (Index k = 0; k < x.size(); ++k) {
        const double    h  = 1e-5;
        Eigen::VectorXd xp = x, xm = x;
        xp[k] += h;
        xm[k] -= h;
        fd.col(k) = (s.evaluate(s.expand(xp), false).residual - s.evaluate(s.expand(xm), false).residual) / (2 * h);
      }
      CHECK((fd - J).lpNorm<Eigen::Infinity>() <= 1e-6 * J.lpNorm<Eigen::Infinity>());
    }
  }
}

TEST_CASE("fine substructured solve reproduces the monolithic solution")
{
  for (int dim : {1, 2}) {
    const Fixture f(dim, 3, dim == 1 ? 8 : 3, PorousMedia{4.0},
                    dim == 1 ? oscillating_coefficient_1d() : oscillating_coefficient_2d(), dim == 1 ? 20.0 : 1.0);
    NewtonConfig  cfg;
    cfg.tol = 1e-12;
    const Eigen::VectorXd mono = solve_monolithic(f.problem, f.mesh, f.dofs, cfg);
    CHECK(global_residual(f.problem, f.mesh, f.dofs, mono)(region_indices(f.mesh, Region::Interior))
            .lpNorm<Eigen::Infinity>() <= 1e-11);

    SkeletonSystem              s   = SkeletonSystem::fine(f.problem, f.mesh, f.dofs, tight());
    const SubstructuredSolution sol = solve_substructured(s, cfg);
    CHECK((sol.g - skeleton_trace(f.dofs, mono)).lpNorm<Eigen::Infinity>() <= 1e-9);
    const Eigen::VectorXd u = reconstruct(f.problem, f.mesh, f.dofs, sol.g, tight());
    CHECK((u - mono).lpNorm<Eigen::Infinity>() <= 1e-9);
  }
}

TEST_CASE("1D coarse solve is exact")
{
  // In 1D the coarse skeleton is the whole skeleton.
  const Fixture f(1, 5, 8, PorousMedia{4.0}, oscillating_coefficient_1d(), 20.0);
  NewtonConfig  cfg;
  cfg.tol = 1e-12;
  const Eigen::VectorXd       mono = solve_monolithic(f.problem, f.mesh, f.dofs, cfg);
  SkeletonSystem              s    = SkeletonSystem::coarse(f.problem, f.partition, f.mesh, f.dofs, f.basis, tight());
  const SubstructuredSolution sol  = solve_substructured(s, cfg);
  const Eigen::VectorXd       u    = reconstruct_coarse(f.problem, f.mesh, f.dofs, f.basis, sol.g, tight());
  CHECK((u - mono).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("error functional is recorded per iterate")
{
  const Fixture  f(1, 5, 8, PLaplace{2.0}, oscillating_coefficient_1d(), 20.0);
  SkeletonSystem s = SkeletonSystem::fine(f.problem, f.mesh, f.dofs);
  int            calls = 0;
  const SubstructuredSolution sol = solve_substructured(s, NewtonConfig{}, {}, [&](const Eigen::VectorXd &g) {
    ++calls;
    CHECK(g.size() == static_cast<Index>(f.dofs.skeleton.size()));
    return g.norm();
  });
  CHECK(sol.trace.error.size() == sol.trace.residual_norm.size());
  CHECK(calls == static_cast<int>(sol.trace.error.size()));
  CHECK(sol.trace.error.back() == doctest::Approx(sol.g.norm()));
}

TEST_CASE("harmonic extension: boundary data, maximum principle, affine reproduction")
{
  for (int dim : {1, 2}) {
    Fixture f(dim, 3, 4, PorousMedia{4.0}, dim == 1 ? oscillating_coefficient_1d() : oscillating_coefficient_2d(), 1.0);
    const Eigen::VectorXd u = harmonic_extension(f.problem, f.mesh);
    double                lo = 1e300, hi = -1e300;
    for (Index v : region_indices(f.mesh, Region::Boundary)) {
      const double b = f.problem.boundary(f.mesh.vertices.col(v));
      CHECK(u[v] == doctest::Approx(b).epsilon(1e-12));
      lo = std::min(lo, b);
      hi = std::max(hi, b);
    }
    CHECK(u.minCoeff() >= lo - 1e-12);
    CHECK(u.maxCoeff() <= hi + 1e-12);

    // Constant K and affine data in the Kirchhoff variable are reproduced.
    f.problem.coefficient = constant_coefficient(0.3);
    f.problem.boundary    = [](const Eigen::Vector2d &x) { return std::pow(1 + x.x() + 2 * x.y(), 0.25); };
    const Eigen::VectorXd a = harmonic_extension(f.problem, f.mesh);
    for (Index v = 0; v < a.size(); ++v) {
      const Eigen::Vector2d x = f.mesh.vertices.col(v);
      const double          y = dim == 2 ? x.y() : 0.0;
      CHECK(a[v] == doctest::Approx(std::pow(1 + x.x() + 2 * y, 0.25)).epsilon(1e-10));
    }
  }
}

TEST_CASE("coarse samples pick the field at the coarse nodes")
{
  const Fixture   f(2, 3, 4, PLaplace{2.0}, oscillating_coefficient_2d(), 1.0);
  Eigen::VectorXd field(f.mesh.num_vertices());
  for (Index v = 0; v < field.size(); ++v) field[v] = f.mesh.vertices(0, v) + 10 * f.mesh.vertices(1, v);
  const Eigen::VectorXd c = coarse_samples(f.partition, f.mesh, field);
  REQUIRE(c.size() == f.partition.num_coarse_nodes());
  for (Index k = 0; k < c.size(); ++k) {
    CHECK(c[k] == doctest::Approx(f.partition.coarse_nodes(0, k) + 10 * f.partition.coarse_nodes(1, k)));
  }
}

TEST_CASE("surrogate backend: gluing of component networks and the training box")
{
  const Fixture f(1, 5, 8, PorousMedia{4.0}, oscillating_coefficient_1d(), 20.0);

  // Component l returns u_l exactly: one relu^2 unit of (u_l + 1) gives
  // (u_l + 1)^2, minus u_l^2 from a second unit and minus one from the bias.
  auto model = std::make_shared<SurrogateModel>();
  for (int l = 0; l < 2; ++l) {
    SurrogateNet net(2, {2});
    net.layers[0].weight << (l == 0 ? 1 : 0), (l == 1 ? 1 : 0), (l == 0 ? 1 : 0), (l == 1 ? 1 : 0);
    net.layers[0].bias << 1, 0;
    net.layers[1].weight << 0.5, -0.5;
    net.layers[1].bias << -0.5;
    model->components.push_back(net);
  }
  model->loss.u_min = 0;
  model->loss.u_max = 4;
  const auto [val, jac] = model->evaluate(Eigen::Vector2d(0.7, 1.9));
  REQUIRE(val[0] == doctest::Approx(0.7));
  REQUIRE(val[1] == doctest::Approx(1.9));
  CHECK((jac - Eigen::Matrix2d::Identity()).norm() < 1e-12);

  SkeletonSystem s = SkeletonSystem::surrogate(f.problem, f.partition, SurrogateRegistry::shared(model));
  CHECK(s.level() == Level::Coarse);
  CHECK(s.backend() == Backend::Surrogate);
  REQUIRE(s.unknowns().size() == 4);
  Eigen::VectorXd g = s.expand(Eigen::Vector4d(1.0, 2.0, 3.0, 0.5));
  // Node k collects u_k from its left subdomain and u_k from its right one.
  const SkeletonEvaluation ev = s.evaluate(g, true);
  CHECK((ev.residual - 2 * Eigen::Vector4d(1.0, 2.0, 3.0, 0.5)).norm() < 1e-12);
  CHECK((ev.jacobian - 2 * Eigen::Matrix4d::Identity()).norm() < 1e-12);

  CHECK_NOTHROW(s.evaluate(s.expand(Eigen::Vector4d(4.15, 1, 1, -0.15)), false));
  CHECK_THROWS_AS(s.evaluate(s.expand(Eigen::Vector4d(4.3, 1, 1, 1)), false), EvaluationError);
  CHECK_THROWS_AS(s.evaluate(s.expand(Eigen::Vector4d(1, 1, -0.3, 1)), false), EvaluationError);
}
