#include "msdtn/surrogate.hpp"
#include "msdtn/errors.hpp"

#include <cmath>
#include <sstream>
#include <thread>

namespace msdtn {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream)
{
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z               = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z               = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename Fn> void parallel_for(Index n, int threads, Fn &&fn)
{
  if (threads <= 1 || n <= 1) {
    for (Index s = 0; s < n; ++s) fn(s);
    return;
  }
  const Index              workers = std::min<Index>(threads, n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (Index w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (Index s = w; s < n; s += workers) fn(s);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto &t : pool) t.join();
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
}

} // namespace

Eigen::MatrixXd sample_grid(int d, int m, double lo, double hi, bool centers)
{
  if (d < 1) throw ConfigError("sample dimension must be positive");
  if (m < 2) throw ConfigError("need at least two samples per axis");
  const Eigen::VectorXd axis = Eigen::VectorXd::LinSpaced(m, lo, hi);
  Index                 n    = 1;
  for (int k = 0; k < d; ++k) n *= m;
  Eigen::MatrixXd pts(d, n);
  for (Index s = 0; s < n; ++s) {
    Index r = s;
    for (int k = d - 1; k >= 0; --k) { // last coordinate fastest
      pts(k, s) = axis[r % m];
      r /= m;
    }
  }
  if (!centers) return pts;
  const Eigen::MatrixXd c = cell_centers(d, m - 1, lo, hi);
  Eigen::MatrixXd       all(d, n + c.cols());
  all << pts, c;
  return all;
}

Eigen::MatrixXd cell_centers(int d, int m, double lo, double hi)
{
  if (m < 1) throw ConfigError("need at least one cell per axis");
  const double h = (hi - lo) / m;
  Index        n = 1;
  for (int k = 0; k < d; ++k) n *= m;
  Eigen::MatrixXd pts(d, n);
  for (Index s = 0; s < n; ++s) {
    Index r = s;
    for (int k = d - 1; k >= 0; --k) {
      pts(k, s) = lo + (static_cast<double>(r % m) + 0.5) * h;
      r /= m;
    }
  }
  return pts;
}

Eigen::MatrixXd DtNSampleSet::jacobian(Index s) const
{
  const int d = dim();
  return jacobians.col(s).reshaped(d, d).transpose(); // stored row-major
}

ComponentData DtNSampleSet::component(int l) const
{
  const int d = dim();
  if (l < 0 || l >= d) throw Error("component index out of range");
  ComponentData c;
  c.component = l;
  c.inputs    = inputs;
  c.values    = values.row(l).transpose();
  c.gradients = jacobians.middleRows(static_cast<Index>(l) * d, d);
  return c;
}

void DtNSampleSet::validate() const
{
  const int d = dim();
  if (values.rows() != d || jacobians.rows() != d * d || values.cols() != size() || jacobians.cols() != size()) {
    throw Error("dataset arrays have inconsistent shapes");
  }
  if (!inputs.allFinite() || !values.allFinite() || !jacobians.allFinite()) {
    throw Error("dataset contains non-finite entries");
  }
}

DtNSampleSet generate_dataset(const SubdomainSolver &solver, const Eigen::MatrixXd &phi_local,
                              const Eigen::MatrixXd &samples, const LocalSolverConfig &cfg,
                              DatasetProvenance provenance, int threads)
{
  const Index d = samples.rows(), n = samples.cols();
  if (d != phi_local.cols()) throw Error("sample dimension does not match the coarse basis");
  DtNSampleSet set;
  set.inputs     = samples;
  set.values     = Eigen::MatrixXd(d, n);
  set.jacobians  = Eigen::MatrixXd(d * d, n);
  set.provenance = std::move(provenance);
  parallel_for(n, threads, [&](Index s) {
    try {
      const DtNResult r = solver.dtn_coarse(phi_local, samples.col(s), cfg, true);
      set.values.col(s) = r.flux;
      const Eigen::MatrixXd Jt = r.jacobian->transpose();
      set.jacobians.col(s) = Jt.reshaped();
    } catch (const Error &e) {
      std::ostringstream msg;
      msg << "DtN evaluation failed for sample " << s << " (" << samples.col(s).transpose() << "): " << e.what();
      throw Error(msg.str());
    }
  });
  set.validate();
  return set;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> SurrogateModel::evaluate(const Eigen::VectorXd &u) const
{
  const int       d = input_dim();
  Eigen::VectorXd f(d);
  Eigen::MatrixXd J(d, d);
  for (int l = 0; l < d; ++l) {
    auto [v, g] = components[l].value_and_gradient(u);
    f[l]        = v;
    J.row(l)    = g.transpose();
  }
  return {f, J};
}

SurrogateRegistry SurrogateRegistry::shared(std::shared_ptr<const SurrogateModel> model)
{
  SurrogateRegistry r;
  r.shared_ = std::move(model);
  return r;
}

SurrogateRegistry SurrogateRegistry::per_subdomain(std::vector<std::shared_ptr<const SurrogateModel>> models)
{
  SurrogateRegistry r;
  r.per_subdomain_ = std::move(models);
  return r;
}

const SurrogateModel &SurrogateRegistry::at(Index subdomain) const
{
  if (shared_) return *shared_;
  if (subdomain < 0 || subdomain >= static_cast<Index>(per_subdomain_.size()) || !per_subdomain_[subdomain]) {
    throw Error("no surrogate registered for subdomain " + std::to_string(subdomain));
  }
  return *per_subdomain_[subdomain];
}

SurrogateNet train_component(const DtNSampleSet &data, int component, const Architecture &arch,
                             const LossConfig &cfg, ComponentReport *report)
{
  if (data.size() == 0) throw ConfigError("cannot train on an empty dataset");
  if (cfg.c0 < 0 || cfg.c1 < 0 || cfg.cmon < 0) throw ConfigError("loss weights must be non-negative");
  if (!(cfg.u_max > cfg.u_min)) throw ConfigError("training box is empty");
  const int           d = data.dim();
  const ComponentData cd = data.component(component);

  std::mt19937_64 init_rng(mix_seed(cfg.seed, 2 * static_cast<std::uint64_t>(component)));
  std::mt19937_64 mc_rng(mix_seed(cfg.seed, 2 * static_cast<std::uint64_t>(component) + 1));

  SurrogateNet net(d, arch.hidden);
  net.initialize(init_rng);
  net.input_shift = Eigen::VectorXd::Constant(d, 0.5 * (cfg.u_min + cfg.u_max));
  net.input_scale = Eigen::VectorXd::Constant(d, 2.0 / (cfg.u_max - cfg.u_min));
  const double mean = cd.values.mean();
  const double rms  = std::sqrt((cd.values.array() - mean).square().mean());
  net.output_shift  = mean;
  net.output_scale  = rms > 0 ? rms : 1.0;

  const double volume = std::pow(cfg.u_max - cfg.u_min, d);
  Eigen::MatrixXd mon;
  if (cfg.cmon > 0 && cfg.quadrature == MonotonicityQuadrature::Grid) {
    mon = cell_centers(d, cfg.grid_points, cfg.u_min, cfg.u_max);
  }
  std::uniform_real_distribution<double> box(cfg.u_min, cfg.u_max);
  auto draw_mc = [&] {
    Eigen::MatrixXd p(d, cfg.mc_points);
    for (Index c = 0; c < p.cols(); ++c)
      for (Index r = 0; r < d; ++r) p(r, c) = box(mc_rng);
    return p;
  };

  Eigen::VectorXd theta = net.parameters();
  Eigen::VectorXd m     = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd v     = Eigen::VectorXd::Zero(theta.size());
  Eigen::VectorXd grad;
  LossTapes<double> tapes;
  double          b1t = 1.0, b2t = 1.0;
  ComponentReport rep;

  for (long step = 0; step < cfg.epochs; ++step) {
    if (cfg.cmon > 0 && cfg.quadrature == MonotonicityQuadrature::MonteCarlo) mon = draw_mc();
    const double    w = mon.cols() > 0 ? volume / static_cast<double>(mon.cols()) : 0.0;
    const LossValue L = loss<double>(net, cd, mon, w, cfg, &grad, &tapes);
    if (!std::isfinite(L.total) || !grad.allFinite()) {
      throw TrainingDivergence("non-finite training loss for component " + std::to_string(component), step);
    }
    if (step == 0) rep.initial = L;
    b1t *= cfg.beta1;
    b2t *= cfg.beta2;
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
    theta.array() -= cfg.learning_rate * (m.array() / (1.0 - b1t)) /
                     ((v.array() / (1.0 - b2t)).sqrt() + cfg.epsilon);
    net.set_parameters(theta);
    rep.steps = step + 1;
  }

  if (cfg.cmon > 0 && cfg.quadrature == MonotonicityQuadrature::MonteCarlo) mon = draw_mc();
  const double w = mon.cols() > 0 ? volume / static_cast<double>(mon.cols()) : 0.0;
  rep.final      = loss<double>(net, cd, mon, w, cfg, nullptr);
  if (cfg.epochs == 0) rep.initial = rep.final;
  if (!std::isfinite(rep.final.total)) {
    throw TrainingDivergence("non-finite final loss for component " + std::to_string(component), cfg.epochs);
  }
  if (report) *report = rep;
  return net;
}

SurrogateModel train(const DtNSampleSet &data, const Architecture &arch, const LossConfig &cfg, TrainReport *report,
                     int threads)
{
  data.validate();
  const int      d = data.dim();
  SurrogateModel model;
  model.loss            = cfg;
  model.provenance_hash = data.provenance.problem_hash;
  model.components.resize(d);
  std::vector<ComponentReport> reps(d);
  parallel_for(d, threads, [&](Index l) {
    model.components[l] = train_component(data, static_cast<int>(l), arch, cfg, &reps[l]);
  });
  if (report) report->components = std::move(reps);
  return model;
}

double interpolation_error(const SurrogateModel &model, const Eigen::MatrixXd &points,
                           const Eigen::MatrixXd &reference_values)
{
  double num = 0, den = 0;
  for (int l = 0; l < model.input_dim(); ++l) {
    const Eigen::VectorXd y = model.components[l].forward(points).value;
    num += (y - reference_values.row(l).transpose()).squaredNorm();
    den += reference_values.row(l).squaredNorm();
  }
  if (den == 0) throw Error("reference values vanish; relative error undefined");
  return std::sqrt(num / den);
}

} // namespace msdtn
