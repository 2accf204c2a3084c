#pragma once

#include "msdtn/dtn.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace msdtn {

/// Scalar-valued fully connected network with relu^2 hidden layers and a
/// linear output, evaluated together with its gradient w.r.t. the input.
///
/// Inputs are mapped affinely, x = (u - input_shift) .* input_scale, and the
/// raw output y is reported as output_shift + output_scale * y. The affine
/// maps are fixed at training time and are not trainable parameters.
template <typename Scalar> class Mlp
{
public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Layer
  {
    Matrix weight;
    Vector bias;
  };

  /// Forward values kept for the reverse pass. Per hidden layer j the
  /// value path and the d input tangents are stored side by side:
  /// pre[j] = [z, dz/dx_1, ..., dz/dx_d] and post[j] = [a, da/dx_1, ...],
  /// each block having one column per batch entry. A tape can be reused
  /// across calls of the same batch size without reallocation.
  struct Tape
  {
    Index               batch = 0;
    Matrix              x;        // normalized input, d x B
    std::vector<Matrix> pre;      // w_j x (1+d)B
    std::vector<Matrix> post;     // w_j x (1+d)B
    Matrix              out;      // 1 x (1+d)B, raw output and its tangents
    Vector              value;    // physical output, one per column
    Matrix              gradient; // physical input gradient, d x B
    mutable std::vector<Matrix> adjoint; // reverse-pass scratch, w_j x (1+d)B
  };

  Mlp() = default;

  Mlp(int input_dim, const std::vector<int> &hidden)
  {
    if (input_dim < 1 || hidden.empty()) {
      throw Error("network needs a positive input dimension and at least one hidden layer");
    }
    int fan_in = input_dim;
    for (int w : hidden) {
      layers.push_back({Matrix::Zero(w, fan_in), Vector::Zero(w)});
      fan_in = w;
    }
    layers.push_back({Matrix::Zero(1, fan_in), Vector::Zero(1)});
    input_shift = Vector::Zero(input_dim);
    input_scale = Vector::Ones(input_dim);
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  template <typename Rng> void initialize(Rng &rng)
  {
    for (Layer &L : layers) {
      const double                           bound = 1.0 / std::sqrt(static_cast<double>(L.weight.cols()));
      std::uniform_real_distribution<double> U(-bound, bound);
      for (Index c = 0; c < L.weight.cols(); ++c)
        for (Index r = 0; r < L.weight.rows(); ++r) L.weight(r, c) = Scalar(U(rng));
      for (Index r = 0; r < L.bias.size(); ++r) L.bias[r] = Scalar(U(rng));
    }
  }

  int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }

  std::vector<int> hidden_widths() const
  {
    std::vector<int> w;
    for (size_t j = 0; j + 1 < layers.size(); ++j) w.push_back(static_cast<int>(layers[j].weight.rows()));
    return w;
  }

  Index num_parameters() const
  {
    Index n = 0;
    for (const Layer &L : layers) n += L.weight.size() + L.bias.size();
    return n;
  }

  Vector parameters() const
  {
    Vector theta(num_parameters());
    Index  o = 0;
    for (const Layer &L : layers) {
      theta.segment(o, L.weight.size()) = L.weight.reshaped();
      o += L.weight.size();
      theta.segment(o, L.bias.size()) = L.bias;
      o += L.bias.size();
    }
    return theta;
  }

  void set_parameters(const Vector &theta)
  {
    if (theta.size() != num_parameters()) throw Error("parameter vector has wrong size");
    Index o = 0;
    for (Layer &L : layers) {
      L.weight.reshaped() = theta.segment(o, L.weight.size());
      o += L.weight.size();
      L.bias = theta.segment(o, L.bias.size());
      o += L.bias.size();
    }
  }

  /// Batched forward pass over the columns of U (d x B).
  Tape forward(const Matrix &U) const
  {
    Tape t;
    forward(U, t);
    return t;
  }

  void forward(const Matrix &U, Tape &t) const
  {
    const int   d = input_dim();
    const Index B = U.cols();
    if (U.rows() != d) throw Error("network input has wrong dimension");
    const size_t nh = layers.size() - 1;
    t.batch         = B;
    t.x             = (U.colwise() - input_shift).array().colwise() * input_scale.array();
    t.pre.resize(nh);
    t.post.resize(nh);
    t.adjoint.resize(nh);

    for (size_t j = 0; j < nh; ++j) {
      const Layer &L = layers[j];
      Matrix      &P = t.pre[j];
      P.resize(L.weight.rows(), (1 + d) * B);
      if (j == 0) {
        P.leftCols(B).noalias() = L.weight * t.x;
        for (int k = 0; k < d; ++k) P.middleCols((1 + k) * B, B).colwise() = L.weight.col(k);
      } else {
        P.noalias() = L.weight * t.post[j - 1];
      }
      P.leftCols(B).colwise() += L.bias;

      Matrix &A = t.post[j];
      A.resize(P.rows(), P.cols());
      for (Index b = 0; b < B; ++b) {
        for (Index r = 0; r < P.rows(); ++r) {
          const Scalar z  = P(r, b);
          const bool   on = z > Scalar(0);
          A(r, b)         = on ? z * z : Scalar(0);
          for (int k = 0; k < d; ++k) {
            const Index c = (1 + k) * B + b;
            A(r, c)       = on ? Scalar(2) * z * P(r, c) : Scalar(0);
          }
        }
      }
    }
    const Layer &out = layers.back();
    t.out.noalias()  = out.weight * t.post[nh - 1];
    t.value          = ((t.out.leftCols(B).array() + out.bias[0]) * output_scale + output_shift).transpose().matrix();
    t.gradient.resize(d, B);
    for (int k = 0; k < d; ++k) t.gradient.row(k) = t.out.middleCols((1 + k) * B, B) * (output_scale * input_scale[k]);
  }

  /// Accumulates into grad the parameter gradient of sum_b ybar_b y_b +
  /// sum_{k,b} gbar_kb g_kb, with y and g the physical outputs of `t`.
  void backward(const Tape &t, const Vector &ybar, const Matrix &gbar, Vector &grad) const
  {
    const int    d  = input_dim();
    const Index  B  = t.batch;
    const size_t nh = layers.size() - 1;
    if (grad.size() != num_parameters()) grad = Vector::Zero(num_parameters());

    std::vector<Index> offset(layers.size());
    Index              o = 0;
    for (size_t j = 0; j < layers.size(); ++j) {
      offset[j] = o;
      o += layers[j].weight.size() + layers[j].bias.size();
    }
    auto Wbar = [&](size_t j) {
      return Eigen::Map<Matrix>(grad.data() + offset[j], layers[j].weight.rows(), layers[j].weight.cols());
    };
    auto bbar = [&](size_t j) {
      return Eigen::Map<Vector>(grad.data() + offset[j] + layers[j].weight.size(), layers[j].bias.size());
    };

    // Output layer: adjoint of t.out.
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> rbar((1 + d) * B);
    rbar.head(B) = ybar.transpose() * output_scale;
    for (int k = 0; k < d; ++k) rbar.segment((1 + k) * B, B) = gbar.row(k) * (output_scale * input_scale[k]);
    const Layer &out = layers.back();
    Wbar(nh).noalias() += rbar * t.post[nh - 1].transpose();
    bbar(nh)[0] += rbar.head(B).sum();
    t.adjoint[nh - 1].noalias() = out.weight.transpose() * rbar;

    for (size_t jj = nh; jj-- > 0;) {
      const Layer  &L = layers[jj];
      const Matrix &P = t.pre[jj];
      Matrix       &H = t.adjoint[jj]; // adjoint of post, turned into the adjoint of pre in place
      for (Index b = 0; b < B; ++b) {
        for (Index r = 0; r < P.rows(); ++r) {
          const Scalar z = P(r, b);
          if (z > Scalar(0)) {
            Scalar acc = z * H(r, b);
            for (int k = 0; k < d; ++k) {
              const Index c = (1 + k) * B + b;
              acc += P(r, c) * H(r, c);
              H(r, c) *= Scalar(2) * z;
            }
            H(r, b) = Scalar(2) * acc;
          } else {
            H(r, b) = Scalar(0);
            for (int k = 0; k < d; ++k) H(r, (1 + k) * B + b) = Scalar(0);
          }
        }
      }
      bbar(jj) += H.leftCols(B).rowwise().sum();
      if (jj == 0) {
        Wbar(0).noalias() += H.leftCols(B) * t.x.transpose();
        for (int k = 0; k < d; ++k) Wbar(0).col(k) += H.middleCols((1 + k) * B, B).rowwise().sum();
      } else {
        Wbar(jj).noalias() += H * t.post[jj - 1].transpose();
        t.adjoint[jj - 1].noalias() = L.weight.transpose() * H;
      }
    }
  }

  Scalar value(const Vector &u) const { return forward(u).value[0]; }

  std::pair<Scalar, Vector> value_and_gradient(const Vector &u) const
  {
    Tape t = forward(u);
    return {t.value[0], t.gradient.col(0)};
  }

  std::vector<Layer> layers; // hidden layers followed by the 1 x width output layer
  Vector             input_shift;
  Vector             input_scale;
  Scalar             output_shift = Scalar(0);
  Scalar             output_scale = Scalar(1);
};

using SurrogateNet = Mlp<double>;

enum class MonotonicityVariant
{
  FullSign,    // penalize negative diagonal and positive off-diagonal derivatives
  DiagonalOnly // penalize negative diagonal derivative only
};

enum class MonotonicityQuadrature
{
  Grid,      // cell centers of a regular grid
  MonteCarlo // fresh uniform points at every step
};

struct LossConfig
{
  double                 c0   = 1.0;
  double                 c1   = 0.1;
  double                 cmon = 4.0;
  MonotonicityVariant    variant    = MonotonicityVariant::FullSign;
  MonotonicityQuadrature quadrature = MonotonicityQuadrature::Grid;
  int                    grid_points = 40;  // per axis
  int                    mc_points   = 200; // per step
  double                 u_min = 0.0;
  double                 u_max = 4.0;

  double        learning_rate = 1e-3;
  long          epochs        = 20000;
  double        beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  std::uint64_t seed = 0;
};

struct LossValue
{
  double total = 0, value = 0, derivative = 0, monotonicity = 0;
};

/// Training targets of one output component l.
struct ComponentData
{
  Eigen::MatrixXd inputs;    // d x n
  Eigen::VectorXd values;    // n
  Eigen::MatrixXd gradients; // d x n, row k = d f_l / d u_k
  int             component = 0;
};

/// Per-point monotonicity integrand for component l at the columns of U.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> monotonicity_integrand(const typename Mlp<Scalar>::Matrix &G, int l,
                                                                MonotonicityVariant variant)
{
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(G.cols());
  for (Index b = 0; b < G.cols(); ++b) {
    Scalar s = std::min(G(l, b), Scalar(0));
    Scalar v = s * s;
    if (variant == MonotonicityVariant::FullSign) {
      for (Index k = 0; k < G.rows(); ++k) {
        if (k == l) continue;
        const Scalar p = std::max(G(k, b), Scalar(0));
        v += p * p;
      }
    }
    out[b] = v;
  }
  return out;
}

/// Forward tapes reused by repeated loss evaluations.
template <typename Scalar> struct LossTapes
{
  typename Mlp<Scalar>::Tape data, mon, mon_active;
};

/// Value/derivative/monotonicity loss and, if grad != nullptr, its exact
/// gradient w.r.t. the network parameters. `mon_points` are quadrature nodes
/// in the training box carrying equal weight `mon_weight`.
template <typename Scalar>
LossValue loss(const Mlp<Scalar> &net, const ComponentData &data, const typename Mlp<Scalar>::Matrix &mon_points,
               Scalar mon_weight, const LossConfig &cfg, typename Mlp<Scalar>::Vector *grad,
               LossTapes<Scalar> *tapes = nullptr)
{
  LossTapes<Scalar> local;
  if (!tapes) tapes = &local;
  using Matrix   = typename Mlp<Scalar>::Matrix;
  using Vector   = typename Mlp<Scalar>::Vector;
  const int l    = data.component;
  const Scalar n = Scalar(data.inputs.cols());
  LossValue out;
  if (grad) *grad = Vector::Zero(net.num_parameters());

  if (data.inputs.cols() > 0 && (cfg.c0 > 0 || cfg.c1 > 0)) {
    auto &t = tapes->data;
    net.forward(data.inputs.template cast<Scalar>(), t);
    const Vector ev = t.value - data.values.template cast<Scalar>();
    const Matrix eg = t.gradient - data.gradients.template cast<Scalar>();
    out.value       = static_cast<double>(ev.squaredNorm() / n);
    out.derivative  = static_cast<double>(eg.squaredNorm() / n);
    if (grad) {
      net.backward(t, (Scalar(2 * cfg.c0) / n) * ev, (Scalar(2 * cfg.c1) / n) * eg, *grad);
    }
  }
  if (cfg.cmon > 0 && mon_points.cols() > 0) {
    auto &t = tapes->mon;
    net.forward(mon_points, t);
    const Matrix &G = t.gradient;
    out.monotonicity = static_cast<double>(mon_weight * monotonicity_integrand<Scalar>(G, l, cfg.variant).sum());
    if (grad) {
      // Points with an inactive penalty contribute nothing; the reverse pass
      // runs on the active columns only.
      const Scalar       f = Scalar(2 * cfg.cmon) * mon_weight;
      std::vector<Index> active;
      for (Index b = 0; b < G.cols(); ++b) {
        bool on = G(l, b) < Scalar(0);
        if (cfg.variant == MonotonicityVariant::FullSign) {
          for (Index k = 0; k < G.rows(); ++k) on = on || (k != l && G(k, b) > Scalar(0));
        }
        if (on) active.push_back(b);
      }
      if (!active.empty()) {
        const Index na = static_cast<Index>(active.size());
        Matrix      gbar(G.rows(), na);
        for (Index c = 0; c < na; ++c) {
          const Index b = active[c];
          for (Index k = 0; k < G.rows(); ++k) {
            gbar(k, c) = k == l ? f * std::min(G(k, b), Scalar(0))
                         : cfg.variant == MonotonicityVariant::FullSign ? f * std::max(G(k, b), Scalar(0))
                                                                        : Scalar(0);
          }
        }
        if (2 * na < G.cols()) {
          net.forward(mon_points(Eigen::all, active), tapes->mon_active);
          net.backward(tapes->mon_active, Vector::Zero(na), gbar, *grad);
        } else {
          Matrix full = Matrix::Zero(G.rows(), G.cols());
          full(Eigen::all, active) = gbar;
          net.backward(t, Vector::Zero(G.cols()), full, *grad);
        }
      }
    }
  }
  out.total = cfg.c0 * out.value + cfg.c1 * out.derivative + cfg.cmon * out.monotonicity;
  return out;
}

/// Tensor grid with m equally spaced values per axis in [lo, hi]; with
/// `centers`, the (m-1)^d cell centers are appended. Returns d x n.
Eigen::MatrixXd sample_grid(int d, int m, double lo, double hi, bool centers = false);

/// Cell centers of a regular m^d grid over [lo, hi]^d.
Eigen::MatrixXd cell_centers(int d, int m, double lo, double hi);

struct DatasetProvenance
{
  std::string problem_hash;
  std::string problem;
  int         cells_per_subdomain = 0;
  double      solver_tol          = 0;
  Index       subdomain           = 0;
  double      u_min = 0, u_max = 0;
};

struct DtNSampleSet
{
  Eigen::MatrixXd   inputs;    // d x n
  Eigen::MatrixXd   values;    // d x n
  Eigen::MatrixXd   jacobians; // d*d x n, entry (l*d + k) = d f_l / d u_k
  DatasetProvenance provenance;

  int             dim() const { return static_cast<int>(inputs.rows()); }
  Index           size() const { return inputs.cols(); }
  Eigen::MatrixXd jacobian(Index s) const;
  ComponentData   component(int l) const;
  void            validate() const;
};

/// Exact coarse DtN values and Jacobians at the columns of `samples`.
/// Samples are independent; `threads > 1` splits them across workers.
DtNSampleSet generate_dataset(const SubdomainSolver &solver, const Eigen::MatrixXd &phi_local,
                              const Eigen::MatrixXd &samples, const LocalSolverConfig &cfg,
                              DatasetProvenance provenance = {}, int threads = 1);

struct Architecture
{
  std::vector<int> hidden{64, 64};
};

/// One network per output component.
struct SurrogateModel
{
  std::vector<SurrogateNet> components;
  LossConfig                loss;
  std::string               provenance_hash;

  int input_dim() const { return components.empty() ? 0 : components.front().input_dim(); }

  /// Values (d) and Jacobian (d x d, row l = gradient of component l).
  std::pair<Eigen::VectorXd, Eigen::MatrixXd> evaluate(const Eigen::VectorXd &u) const;
};

/// Maps subdomains to surrogate models; one shared model or one per subdomain.
class SurrogateRegistry
{
public:
  static SurrogateRegistry shared(std::shared_ptr<const SurrogateModel> model);
  static SurrogateRegistry per_subdomain(std::vector<std::shared_ptr<const SurrogateModel>> models);

  const SurrogateModel &at(Index subdomain) const;

private:
  std::shared_ptr<const SurrogateModel>              shared_;
  std::vector<std::shared_ptr<const SurrogateModel>> per_subdomain_;
};

struct ComponentReport
{
  LossValue initial, final;
  long      steps = 0;
};

struct TrainReport
{
  std::vector<ComponentReport> components;
};

/// Adam on the full batch. Deterministic for a fixed seed.
SurrogateNet train_component(const DtNSampleSet &data, int component, const Architecture &arch,
                             const LossConfig &cfg, ComponentReport *report = nullptr);

SurrogateModel train(const DtNSampleSet &data, const Architecture &arch, const LossConfig &cfg,
                     TrainReport *report = nullptr, int threads = 1);

/// Relative L2 error of the surrogate against reference values at the
/// columns of `points` (all components pooled).
double interpolation_error(const SurrogateModel &model, const Eigen::MatrixXd &points,
                           const Eigen::MatrixXd &reference_values);

} // namespace msdtn
