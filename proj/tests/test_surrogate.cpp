#include "msdtn/errors.hpp"
#include "msdtn/surrogate.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace msdtn;

namespace {

SurrogateNet random_net(int d, const std::vector<int> &hidden, unsigned seed)
{
  std::mt19937_64 rng(seed);
  SurrogateNet    net(d, hidden);
  net.initialize(rng);
  std::uniform_real_distribution<double> U(-1, 1);
  for (int k = 0; k < d; ++k) {
    net.input_shift[k] = U(rng);
    net.input_scale[k] = 1.5 + U(rng);
  }
  net.output_shift = 0.3;
  net.output_scale = 2.0;
  return net;
}

Eigen::MatrixXd random_points(int d, Index n, unsigned seed, double lo = -1, double hi = 2)
{
  std::mt19937_64                        rng(seed);
  std::uniform_real_distribution<double> U(lo, hi);
  Eigen::MatrixXd                        p(d, n);
  for (Index c = 0; c < n; ++c)
    for (Index r = 0; r < d; ++r) p(r, c) = U(rng);
  return p;
}

// Component l reproduces u_l: 0.5 (u_l + 1)^2 - 0.5 u_l^2 - 0.5 for u_l >= 0.
SurrogateNet identity_component(int d, int l)
{
  SurrogateNet net(d, {2});
  net.layers[0].weight.setZero();
  net.layers[0].weight(0, l) = 1;
  net.layers[0].weight(1, l) = 1;
  net.layers[0].bias << 1, 0;
  net.layers[1].weight << 0.5, -0.5;
  net.layers[1].bias << -0.5;
  return net;
}

DtNSampleSet synthetic_dataset(int d, int m)
{
  // f_l(u) = u_l^3 - 0.2 sum_{k != l} u_k
  DtNSampleSet set;
  set.inputs    = sample_grid(d, m, 0.0, 2.0);
  const Index n = set.inputs.cols();
  set.values    = Eigen::MatrixXd(d, n);
  set.jacobians = Eigen::MatrixXd(d * d, n);
  for (Index s = 0; s < n; ++s) {
    const Eigen::VectorXd u = set.inputs.col(s);
    for (int l = 0; l < d; ++l) {
      set.values(l, s) = std::pow(u[l], 3) - 0.2 * (u.sum() - u[l]);
      for (int k = 0; k < d; ++k) set.jacobians(l * d + k, s) = k == l ? 3 * u[l] * u[l] : -0.2;
    }
  }
  set.provenance.problem_hash = "0123456789abcdef";
  set.provenance.u_min        = 0;
  set.provenance.u_max        = 2;
  return set;
}

} // namespace

TEST_CASE("hand-computed forward pass")
{
  SurrogateNet net(2, {2});
  net.layers[0].weight = Eigen::Matrix2d::Identity();
  net.layers[0].bias.setZero();
  net.layers[1].weight << 1, 1;
  net.layers[1].bias << 0;
  const auto [y, g] = net.value_and_gradient(Eigen::Vector2d(2, -1));
  CHECK(y == 4.0);
  CHECK(g[0] == 4.0);
  CHECK(g[1] == 0.0);

  net.output_shift = 1;
  net.output_scale = 3;
  net.input_shift  = Eigen::Vector2d(1, 0);
  net.input_scale  = Eigen::Vector2d(0.5, 1);
  // x = (1.5, -1): y = 1 + 3 * 2.25, dy/du_0 = 3 * 2 * 1.5 * 0.5
  const auto [y2, g2] = net.value_and_gradient(Eigen::Vector2d(4, -1));
  CHECK(y2 == doctest::Approx(7.75));
  CHECK(g2[0] == doctest::Approx(4.5));
  CHECK(g2[1] == 0.0);
}

TEST_CASE("input gradient matches central differences and batches agree")
{
  for (int d : {1, 2, 4}) {
    const SurrogateNet    net = random_net(d, {7, 5}, 10 + d);
    const Eigen::MatrixXd U   = random_points(d, 12, 3);
    const auto            t   = net.forward(U);
    REQUIRE(t.gradient.rows() == d);
    for (Index b = 0; b < U.cols(); ++b) {
      const Eigen::VectorXd u = U.col(b);
      const auto [y, g]       = net.value_and_gradient(u);
      CHECK(y == doctest::Approx(t.value[b]).epsilon(1e-13));
      CHECK((g - t.gradient.col(b)).norm() <= 1e-12 * (1 + g.norm()));
      for (int k = 0; k < d; ++k) {
        const double    h  = 1e-6;
        Eigen::VectorXd up = u, um = u;
        up[k] += h;
        um[k] -= h;
        CHECK((net.value(up) - net.value(um)) / (2 * h) == doctest::Approx(g[k]).epsilon(1e-6).scale(1));
      }
    }
  }
}

TEST_CASE("parameter vector round trip")
{
  SurrogateNet          net   = random_net(3, {4, 6}, 1);
  const Eigen::VectorXd theta = net.parameters();
  CHECK(theta.size() == net.num_parameters());
  CHECK(net.num_parameters() == (4 * 3 + 4) + (6 * 4 + 6) + (1 * 6 + 1));
  net.set_parameters(Eigen::VectorXd::Zero(theta.size()));
  CHECK(net.value(Eigen::Vector3d(1, 2, 3)) == doctest::Approx(0.3));
  net.set_parameters(theta);
  CHECK(net.parameters() == theta);
  CHECK(net.hidden_widths() == std::vector<int>{4, 6});
  CHECK_THROWS_AS(net.set_parameters(Eigen::VectorXd::Zero(3)), Error);
  CHECK_THROWS_AS(net.value(Eigen::Vector2d(1, 2)), Error);
}

TEST_CASE("loss gradient matches central differences for each term")
{
  for (int d : {2, 4}) {
    const MonotonicityVariant variant = d == 2 ? MonotonicityVariant::FullSign : MonotonicityVariant::DiagonalOnly;
    SurrogateNet              net     = random_net(d, {6, 5}, 20 + d);
    ComponentData             data;
    data.component = 1;
    data.inputs    = random_points(d, 9, 4);
    data.values    = Eigen::VectorXd::LinSpaced(9, -1, 2);
    data.gradients = random_points(d, 9, 5);
    const Eigen::MatrixXd mon = random_points(d, 30, 6);

    for (int term = 0; term < 3; ++term) {
      LossConfig cfg;
      cfg.variant = variant;
      cfg.c0      = term == 0 ? 1.0 : 0.0;
      cfg.c1      = term == 1 ? 0.7 : 0.0;
      cfg.cmon    = term == 2 ? 3.0 : 0.0;
      Eigen::VectorXd         grad;
      LossTapes<double>       tapes;
      const LossValue         L     = loss<double>(net, data, mon, 0.05, cfg, &grad, &tapes);
      const Eigen::VectorXd   theta = net.parameters();
      REQUIRE(L.total > 0);

      std::mt19937_64 rng(term);
      std::normal_distribution<double> N;
      for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd dir(theta.size());
        for (Index k = 0; k < dir.size(); ++k) dir[k] = N(rng);
        dir.normalize();
        const double h = 1e-6;
        SurrogateNet p = net, m = net;
        p.set_parameters(theta + h * dir);
        m.set_parameters(theta - h * dir);
        const double fd = (loss<double>(p, data, mon, 0.05, cfg, nullptr).total -
                           loss<double>(m, data, mon, 0.05, cfg, nullptr).total) /
                          (2 * h);
        CHECK(std::abs(fd - grad.dot(dir)) <= 1e-5 * (std::abs(fd) + grad.norm() * 1e-3));
      }
    }
  }
}

TEST_CASE("monotonicity gradient on active columns equals the full reverse pass")
{
  const int             d = 3, l = 0;
  const SurrogateNet    net = random_net(d, {8, 8}, 42);
  const Eigen::MatrixXd cloud = random_points(d, 400, 9);
  const auto            t = net.forward(cloud);
  IndexList             active, inactive;
  for (Index b = 0; b < cloud.cols(); ++b) (t.gradient(l, b) < 0 ? active : inactive).push_back(b);
  REQUIRE(active.size() >= 20);
  REQUIRE(inactive.size() >= 20);

  LossConfig cfg;
  cfg.c0      = 0;
  cfg.c1      = 0;
  cfg.cmon    = 1;
  cfg.variant = MonotonicityVariant::DiagonalOnly;
  ComponentData data;
  data.component = l;
  data.inputs    = Eigen::MatrixXd(d, 0);

  // Few active columns take the subset path, many take the masked full pass.
  for (auto [na, ni] : {std::pair<size_t, size_t>{3, 20}, std::pair<size_t, size_t>{20, 3}}) {
    IndexList cols(active.begin(), active.begin() + static_cast<long>(na));
    cols.insert(cols.end(), inactive.begin(), inactive.begin() + static_cast<long>(ni));
    const Eigen::MatrixXd P = cloud(Eigen::all, cols);

    Eigen::VectorXd grad;
    loss<double>(net, data, P, 0.5, cfg, &grad);

    const auto      tp   = net.forward(P);
    Eigen::MatrixXd gbar = Eigen::MatrixXd::Zero(d, P.cols());
    for (Index b = 0; b < P.cols(); ++b) gbar(l, b) = 2 * 0.5 * std::min(tp.gradient(l, b), 0.0);
    Eigen::VectorXd ref = Eigen::VectorXd::Zero(net.num_parameters());
    net.backward(tp, Eigen::VectorXd::Zero(P.cols()), gbar, ref);
    CHECK((grad - ref).norm() <= 1e-13 * ref.norm());
  }
}

TEST_CASE("loss vanishes on an exact interpolant")
{
  const int    d = 3;
  ComponentData data;
  data.component = 2;
  data.inputs    = random_points(d, 10, 1, 0, 3);
  data.values    = data.inputs.row(2).transpose();
  data.gradients = Eigen::MatrixXd::Zero(d, 10);
  data.gradients.row(2).setOnes();
  LossConfig cfg;
  cfg.cmon = 0;
  const LossValue L = loss<double>(identity_component(d, 2), data, Eigen::MatrixXd(d, 0), 0.0, cfg, nullptr);
  CHECK(L.total == doctest::Approx(0).scale(1e-20));

  // The identity has a positive diagonal and zero off-diagonals: no penalty.
  cfg.cmon = 5;
  const LossValue M = loss<double>(identity_component(d, 2), data, random_points(d, 50, 2, 0, 3), 0.1, cfg, nullptr);
  CHECK(M.monotonicity == 0.0);
}

TEST_CASE("monotonicity integrand")
{
  Eigen::MatrixXd G(2, 3);
  G << -1, 2, 0.5,
        3, -4, 0;
  const Eigen::VectorXd full = monotonicity_integrand<double>(G, 0, MonotonicityVariant::FullSign);
  const Eigen::VectorXd diag = monotonicity_integrand<double>(G, 0, MonotonicityVariant::DiagonalOnly);
  CHECK(full[0] == 1 + 9);
  CHECK(full[1] == 0);
  CHECK(full[2] == 0);
  CHECK(diag[0] == 1);
  CHECK(diag[1] == 0);
}

TEST_CASE("sample grids")
{
  const Eigen::MatrixXd g = sample_grid(2, 3, 0.0, 1.0);
  REQUIRE(g.cols() == 9);
  CHECK(g.col(0) == Eigen::Vector2d(0, 0));
  CHECK(g.col(1) == Eigen::Vector2d(0, 0.5));
  CHECK(g.col(3) == Eigen::Vector2d(0.5, 0));
  CHECK(g.col(8) == Eigen::Vector2d(1, 1));

  const Eigen::MatrixXd c = sample_grid(2, 3, 0.0, 1.0, true);
  REQUIRE(c.cols() == 13);
  CHECK(c.col(9) == Eigen::Vector2d(0.25, 0.25));
  CHECK(c.col(12) == Eigen::Vector2d(0.75, 0.75));

  CHECK(sample_grid(4, 5, 0, 4).cols() == 625);
  const Eigen::MatrixXd cc = cell_centers(1, 4, 0.0, 4.0);
  CHECK(cc == Eigen::RowVector4d(0.5, 1.5, 2.5, 3.5));
  CHECK_THROWS_AS(sample_grid(2, 1, 0, 1), ConfigError);
  CHECK_THROWS_AS(sample_grid(0, 3, 0, 1), ConfigError);
}

TEST_CASE("dataset layout")
{
  const DtNSampleSet set = synthetic_dataset(2, 3);
  CHECK_NOTHROW(set.validate());
  const Eigen::MatrixXd J = set.jacobian(4); // u = (1, 1)
  CHECK(J(0, 0) == 3.0);
  CHECK(J(0, 1) == -0.2);
  CHECK(J(1, 0) == -0.2);
  const ComponentData c = set.component(1);
  CHECK(c.values[4] == doctest::Approx(0.8));
  CHECK(c.gradients.col(4) == Eigen::Vector2d(-0.2, 3.0));
  CHECK_THROWS_AS(set.component(2), Error);

  DtNSampleSet bad = set;
  bad.values(0, 0) = NAN;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = set;
  bad.jacobians.conservativeResize(3, Eigen::NoChange);
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("training is deterministic and reduces the loss")
{
  const DtNSampleSet set = synthetic_dataset(2, 4);
  LossConfig         cfg;
  cfg.epochs      = 300;
  cfg.u_min       = 0;
  cfg.u_max       = 2;
  cfg.grid_points = 8;
  cfg.seed        = 11;
  const Architecture arch{{16, 16}};

  TrainReport          r1;
  const SurrogateModel a = train(set, arch, cfg, &r1);
  const SurrogateModel b = train(set, arch, cfg);
  REQUIRE(a.components.size() == 2);
  for (int l = 0; l < 2; ++l) {
    CHECK(a.components[l].parameters() == b.components[l].parameters());
    CHECK(r1.components[l].steps == 300);
    CHECK(r1.components[l].final.total < 0.5 * r1.components[l].initial.total);
  }
  CHECK(a.provenance_hash == "0123456789abcdef");

  cfg.seed               = 12;
  const SurrogateModel c = train(set, arch, cfg);
  CHECK(a.components[0].parameters() != c.components[0].parameters());

  cfg.seed       = 11;
  cfg.quadrature = MonotonicityQuadrature::MonteCarlo;
  cfg.mc_points  = 16;
  cfg.epochs     = 20;
  const SurrogateModel m1 = train(set, arch, cfg);
  const SurrogateModel m2 = train(set, arch, cfg, nullptr, 2);
  CHECK(m1.components[1].parameters() == m2.components[1].parameters());
}

TEST_CASE("training rejects bad settings")
{
  const DtNSampleSet set = synthetic_dataset(1, 3);
  LossConfig         cfg;
  cfg.epochs = 1;
  cfg.c1     = -1;
  CHECK_THROWS_AS(train_component(set, 0, {}, cfg), ConfigError);
  cfg.c1    = 0.1;
  cfg.u_max = cfg.u_min;
  CHECK_THROWS_AS(train_component(set, 0, {}, cfg), ConfigError);
  cfg.u_max = 4;
  cfg.learning_rate = 1e12;
  cfg.epochs        = 200;
  CHECK_THROWS_AS(train_component(set, 0, {}, cfg), TrainingDivergence);
}

TEST_CASE("interpolation error and model evaluation")
{
  SurrogateModel model;
  for (int l = 0; l < 2; ++l) model.components.push_back(identity_component(2, l));
  const Eigen::MatrixXd P = random_points(2, 15, 3, 0.1, 3);
  CHECK(interpolation_error(model, P, P) < 1e-15);
  CHECK(interpolation_error(model, P, 2 * P) == doctest::Approx(0.5));
  CHECK_THROWS_AS(interpolation_error(model, P, Eigen::MatrixXd::Zero(2, 15)), Error);

  const auto [f, J] = model.evaluate(Eigen::Vector2d(0.5, 2));
  CHECK(f == Eigen::Vector2d(0.5, 2));
  CHECK((J - Eigen::Matrix2d::Identity()).norm() == 0.0);

  CHECK_THROWS_AS(SurrogateRegistry::per_subdomain({}).at(0), Error);
}
