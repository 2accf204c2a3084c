#pragma once

#include "msdtn/newton.hpp"
#include "msdtn/surrogate.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace msdtn {

/// Round-trip decimal form ("%.17g").
std::string format_number(double v);

/// FNV-1a 64-bit hash as 16 lowercase hex digits.
std::string fnv1a64(const std::string &text);

void           save_model(const SurrogateModel &model, const std::string &path);
std::string    model_to_json(const SurrogateModel &model);
SurrogateModel model_from_json(const std::string &text);

struct LoadedModel
{
  SurrogateModel           model;
  std::vector<std::string> warnings;
};

/// Throws ConfigError for malformed files and for an input dimension other
/// than `expected_input_dim` (ignored when negative). A provenance hash that
/// differs from a non-empty `expected_hash` is recorded as a warning.
LoadedModel load_model(const std::string &path, int expected_input_dim = -1, const std::string &expected_hash = {});

/// Columns u_1..u_d, f_1..f_d, J_11..J_dd (row-major). The metadata goes to
/// `<csv_path>.json`.
void         write_dataset(const DtNSampleSet &set, const std::string &csv_path);
DtNSampleSet read_dataset(const std::string &csv_path);

/// Columns iteration, residual_norm, error_vs_reference[, seconds].
void write_trace_csv(std::ostream &out, const NewtonTrace &trace, bool with_seconds);
void write_trace_csv(const std::string &path, const NewtonTrace &trace, bool with_seconds);

} // namespace msdtn
