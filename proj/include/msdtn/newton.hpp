#pragma once

#include "msdtn/errors.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace msdtn {

struct NewtonConfig
{
  double tol           = 1e-10; // on the max-norm of the residual
  int    max_iter      = 50;
  int    min_iter      = 0; // steps taken even when the initial residual is below tol
  double armijo        = 1e-4;
  double backtrack     = 0.5;
  int    max_halvings  = 30;
  /// A full step below step_tol * (1 + |x|_inf) counts as converged: the
  /// residual has reached its round-off floor.
  double step_tol      = 1e-10;
};

struct NewtonTrace
{
  std::vector<double> residual_norm;
  std::vector<double> step_norm;
  std::vector<double> error; // empty unless an error functional was supplied
  std::vector<double> seconds;

  int iterations() const { return static_cast<int>(residual_norm.size()) - 1; }
};

struct NewtonOutcome
{
  Eigen::VectorXd x;
  NewtonTrace     trace;
  bool            converged = false;
};

/// Newton failure carrying the trace and the last iterate.
struct NewtonFailure : NonConvergence
{
  NewtonFailure(const std::string &what, NewtonOutcome outcome)
    : NonConvergence(what, outcome.trace.iterations(),
                     outcome.trace.residual_norm.empty() ? NAN : outcome.trace.residual_norm.back()),
      outcome(std::move(outcome))
  {}
  NewtonOutcome outcome;
};

/// Damped Newton with Armijo backtracking on the Euclidean residual norm.
///
/// `system` provides
///   Eigen::VectorXd residual(const Eigen::VectorXd &x)
///   Eigen::VectorXd step(const Eigen::VectorXd &x, const Eigen::VectorXd &r)  // -J(x)^{-1} r
/// and is free to cache factorizations between the two calls. A trial point
/// whose residual throws msdtn::Error is rejected like a failed Armijo test.
template <typename System>
NewtonOutcome damped_newton(System &system, Eigen::VectorXd x, const NewtonConfig &cfg,
                            const std::function<double(const Eigen::VectorXd &)> &error = {})
{
  using clock      = std::chrono::steady_clock;
  const auto start = clock::now();
  auto elapsed     = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

  NewtonOutcome out;
  Eigen::VectorXd r  = system.residual(x);
  double          nr = r.template lpNorm<Eigen::Infinity>();
  auto record = [&](double step) {
    out.trace.residual_norm.push_back(nr);
    out.trace.step_norm.push_back(step);
    if (error) out.trace.error.push_back(error(x));
    out.trace.seconds.push_back(elapsed());
  };
  record(0.0);

  for (int it = 0; it < cfg.max_iter; ++it) {
    if (nr <= cfg.tol && it >= cfg.min_iter) {
      out.converged = true;
      break;
    }
    const Eigen::VectorXd dx    = system.step(x, r);
    const double          r2    = r.norm();
    const double          dnorm = dx.template lpNorm<Eigen::Infinity>();
    const bool            tiny  = dnorm <= cfg.step_tol * (1.0 + x.template lpNorm<Eigen::Infinity>());
    double                t     = 1.0;
    bool                  found = false;
    Eigen::VectorXd       xt, rt;
    for (int h = 0; h <= cfg.max_halvings; ++h) {
      xt = x + t * dx;
      try {
        rt = system.residual(xt);
      } catch (const Error &) { // trial point outside the evaluable region
        t *= cfg.backtrack;
        continue;
      }
      if (rt.allFinite() && rt.norm() <= (1.0 - cfg.armijo * t) * r2) {
        found = true;
        break;
      }
      if (tiny) break; // round-off floor: shorter steps cannot help
      t *= cfg.backtrack;
    }
    if (!found) {
      if (tiny) {
        out.converged = true;
        break;
      }
      out.x = x;
      throw NewtonFailure("line search failed", std::move(out));
    }
    x  = std::move(xt);
    r  = std::move(rt);
    nr = r.template lpNorm<Eigen::Infinity>();
    record(t * dnorm);
    if (tiny && t == 1.0) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged && nr <= cfg.tol && out.trace.iterations() >= cfg.min_iter) {
    out.converged = true;
  }
  out.x = std::move(x);
  if (!out.converged) {
    throw NewtonFailure("Newton did not converge", std::move(out));
  }
  return out;
}

} // namespace msdtn
