#pragma once

#include <cstdio>
#include <exception>
#include <stdexcept>
#include <string>

namespace msdtn {

struct Error : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error
{
  using Error::Error;
};

/// Non-finite input or intermediate value during a residual evaluation.
struct EvaluationError : Error
{
  using Error::Error;
};

struct SingularJacobian : Error
{
  using Error::Error;
};

struct NonConvergence : Error
{
  NonConvergence(const std::string &what, int iterations, double residual)
    : Error(what + " (iterations=" + std::to_string(iterations) + ", residual=" + format_residual(residual) + ")"),
      iterations(iterations), residual(residual)
  {}
  int    iterations;
  double residual;

private:
  static std::string format_residual(double r)
  {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", r);
    return buf;
  }
};

struct TrainingDivergence : Error
{
  TrainingDivergence(const std::string &what, long step)
    : Error(what + " at step " + std::to_string(step)), step(step)
  {}
  long step;
};

/// Failure inside a named pipeline stage; `cause` is the original exception.
struct StageError : Error
{
  StageError(const std::string &stage, std::exception_ptr cause, const std::string &what)
    : Error(stage + ": " + what), stage(stage), cause(std::move(cause))
  {}
  std::string        stage;
  std::exception_ptr cause;
};

} // namespace msdtn
