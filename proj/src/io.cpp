#include "msdtn/io.hpp"
#include "msdtn/errors.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace msdtn {

namespace {

using json = nlohmann::ordered_json;

std::ofstream open_out(const std::string &path)
{
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path + " for writing");
  return f;
}

std::string slurp(const std::string &path)
{
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

const char *to_string(MonotonicityVariant v) { return v == MonotonicityVariant::FullSign ? "full_sign" : "diagonal_only"; }
const char *to_string(MonotonicityQuadrature q) { return q == MonotonicityQuadrature::Grid ? "grid" : "monte_carlo"; }

json loss_json(const LossConfig &c)
{
  return {{"c0", c.c0},
          {"c1", c.c1},
          {"cmon", c.cmon},
          {"variant", to_string(c.variant)},
          {"quadrature", to_string(c.quadrature)},
          {"grid_points", c.grid_points},
          {"mc_points", c.mc_points},
          {"u_min", c.u_min},
          {"u_max", c.u_max},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"seed", c.seed}};
}

LossConfig loss_from_json(const json &j)
{
  LossConfig c;
  c.c0            = j.at("c0").get<double>();
  c.c1            = j.at("c1").get<double>();
  c.cmon          = j.at("cmon").get<double>();
  const auto var  = j.at("variant").get<std::string>();
  const auto quad = j.at("quadrature").get<std::string>();
  if (var != "full_sign" && var != "diagonal_only") throw ConfigError("unknown monotonicity variant " + var);
  if (quad != "grid" && quad != "monte_carlo") throw ConfigError("unknown monotonicity quadrature " + quad);
  c.variant       = var == "full_sign" ? MonotonicityVariant::FullSign : MonotonicityVariant::DiagonalOnly;
  c.quadrature    = quad == "grid" ? MonotonicityQuadrature::Grid : MonotonicityQuadrature::MonteCarlo;
  c.grid_points   = j.at("grid_points").get<int>();
  c.mc_points     = j.at("mc_points").get<int>();
  c.u_min         = j.at("u_min").get<double>();
  c.u_max         = j.at("u_max").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs        = j.at("epochs").get<long>();
  c.beta1         = j.at("beta1").get<double>();
  c.beta2         = j.at("beta2").get<double>();
  c.epsilon       = j.at("epsilon").get<double>();
  c.seed          = j.at("seed").get<std::uint64_t>();
  return c;
}

std::vector<double> to_vec(const Eigen::VectorXd &v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vec(const json &j, Index expected)
{
  const auto v = j.get<std::vector<double>>();
  if (static_cast<Index>(v.size()) != expected) throw ConfigError("array has wrong length");
  return Eigen::Map<const Eigen::VectorXd>(v.data(), expected);
}

std::string column_name(char prefix, int l, int k, int d)
{
  std::string s = std::string(1, prefix) + "_" + std::to_string(l + 1);
  if (k >= 0) s += (d < 10 ? "" : "_") + std::to_string(k + 1);
  return s;
}

} // namespace

std::string format_number(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fnv1a64(const std::string &text)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string model_to_json(const SurrogateModel &model)
{
  if (model.components.empty()) throw Error("cannot save an empty model");
  json comps = json::array();
  for (const SurrogateNet &net : model.components) {
    json layers = json::array();
    for (const auto &L : net.layers) {
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> W = L.weight;
      layers.push_back({{"rows", W.rows()},
                        {"cols", W.cols()},
                        {"weight", std::vector<double>(W.data(), W.data() + W.size())},
                        {"bias", to_vec(L.bias)}});
    }
    comps.push_back({{"input_shift", to_vec(net.input_shift)},
                     {"input_scale", to_vec(net.input_scale)},
                     {"output_shift", net.output_shift},
                     {"output_scale", net.output_scale},
                     {"layers", layers}});
  }
  json j = {{"format", "msdtn-surrogate"},
            {"version", 1},
            {"input_dim", model.input_dim()},
            {"hidden", model.components.front().hidden_widths()},
            {"activation", "relu2"},
            {"loss", loss_json(model.loss)},
            {"provenance_hash", model.provenance_hash},
            {"components", comps}};
  return j.dump(1);
}

SurrogateModel model_from_json(const std::string &text)
{
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != "msdtn-surrogate") throw ConfigError("not a surrogate model file");
    if (j.at("activation").get<std::string>() != "relu2") throw ConfigError("unsupported activation");
    const int              d      = j.at("input_dim").get<int>();
    const std::vector<int> hidden = j.at("hidden").get<std::vector<int>>();
    SurrogateModel         model;
    model.loss            = loss_from_json(j.at("loss"));
    model.provenance_hash = j.at("provenance_hash").get<std::string>();
    const json &comps     = j.at("components");
    if (static_cast<int>(comps.size()) != d) throw ConfigError("model must have one network per input");
    for (const json &c : comps) {
      SurrogateNet net(d, hidden);
      const json  &layers = c.at("layers");
      if (layers.size() != net.layers.size()) throw ConfigError("layer count does not match the architecture");
      for (size_t k = 0; k < layers.size(); ++k) {
        auto       &L = net.layers[k];
        const json &l = layers[k];
        if (l.at("rows").get<Index>() != L.weight.rows() || l.at("cols").get<Index>() != L.weight.cols()) {
          throw ConfigError("layer shape does not match the architecture");
        }
        const Eigen::VectorXd w = from_vec(l.at("weight"), L.weight.size());
        L.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          w.data(), L.weight.rows(), L.weight.cols());
        L.bias = from_vec(l.at("bias"), L.bias.size());
      }
      net.input_shift  = from_vec(c.at("input_shift"), d);
      net.input_scale  = from_vec(c.at("input_scale"), d);
      net.output_shift = c.at("output_shift").get<double>();
      net.output_scale = c.at("output_scale").get<double>();
      model.components.push_back(std::move(net));
    }
    return model;
  } catch (const json::exception &e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  } catch (const ConfigError &e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  } catch (const Error &e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  }
}

void save_model(const SurrogateModel &model, const std::string &path)
{
  auto f = open_out(path);
  f << model_to_json(model) << '\n';
  if (!f) throw Error("failed writing " + path);
}

LoadedModel load_model(const std::string &path, int expected_input_dim, const std::string &expected_hash)
{
  LoadedModel out;
  out.model = model_from_json(slurp(path));
  if (expected_input_dim >= 0 && out.model.input_dim() != expected_input_dim) {
    throw ConfigError("model " + path + " has input_dim " + std::to_string(out.model.input_dim()) + ", expected " +
                      std::to_string(expected_input_dim));
  }
  if (!expected_hash.empty() && out.model.provenance_hash != expected_hash) {
    out.warnings.push_back("model " + path + " was trained for problem " + out.model.provenance_hash +
                           ", current problem is " + expected_hash);
  }
  return out;
}

void write_dataset(const DtNSampleSet &set, const std::string &csv_path)
{
  set.validate();
  const int d = set.dim();
  auto      f = open_out(csv_path);
  std::vector<std::string> cols;
  for (int l = 0; l < d; ++l) cols.push_back(column_name('u', l, -1, d));
  for (int l = 0; l < d; ++l) cols.push_back(column_name('f', l, -1, d));
  for (int l = 0; l < d; ++l)
    for (int k = 0; k < d; ++k) cols.push_back(column_name('J', l, k, d));
  for (size_t c = 0; c < cols.size(); ++c) f << (c ? "," : "") << cols[c];
  f << '\n';
  for (Index s = 0; s < set.size(); ++s) {
    for (int l = 0; l < d; ++l) f << (l ? "," : "") << format_number(set.inputs(l, s));
    for (int l = 0; l < d; ++l) f << ',' << format_number(set.values(l, s));
    for (int r = 0; r < d * d; ++r) f << ',' << format_number(set.jacobians(r, s));
    f << '\n';
  }
  const DatasetProvenance &p = set.provenance;
  json meta = {{"dim", d},
               {"samples", set.size()},
               {"columns", cols},
               {"problem", p.problem},
               {"problem_hash", p.problem_hash},
               {"cells_per_subdomain", p.cells_per_subdomain},
               {"solver_tol", p.solver_tol},
               {"subdomain", p.subdomain},
               {"u_min", p.u_min},
               {"u_max", p.u_max}};
  auto m = open_out(csv_path + ".json");
  m << meta.dump(1) << '\n';
}

DtNSampleSet read_dataset(const std::string &csv_path)
{
  DtNSampleSet set;
  int          d = 0;
  Index        n = 0;
  try {
    const json meta = json::parse(slurp(csv_path + ".json"));
    d               = meta.at("dim").get<int>();
    n               = meta.at("samples").get<Index>();
    DatasetProvenance &p = set.provenance;
    p.problem             = meta.at("problem").get<std::string>();
    p.problem_hash        = meta.at("problem_hash").get<std::string>();
    p.cells_per_subdomain = meta.at("cells_per_subdomain").get<int>();
    p.solver_tol          = meta.at("solver_tol").get<double>();
    p.subdomain           = meta.at("subdomain").get<Index>();
    p.u_min               = meta.at("u_min").get<double>();
    p.u_max               = meta.at("u_max").get<double>();
  } catch (const json::exception &e) {
    throw ConfigError(std::string("malformed dataset metadata: ") + e.what());
  }
  if (d < 1 || n < 0) throw ConfigError("malformed dataset metadata");
  set.inputs.resize(d, n);
  set.values.resize(d, n);
  set.jacobians.resize(d * d, n);

  std::istringstream in(slurp(csv_path));
  std::string        line;
  std::getline(in, line); // header
  Index s = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (s >= n) throw ConfigError("dataset has more rows than its metadata states");
    std::istringstream row(line);
    std::string        cell;
    std::vector<double> v;
    while (std::getline(row, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception &) {
        throw ConfigError("dataset row " + std::to_string(s + 1) + " has a malformed entry");
      }
    }
    if (static_cast<int>(v.size()) != 2 * d + d * d) {
      throw ConfigError("dataset row " + std::to_string(s + 1) + " has the wrong number of columns");
    }
    for (int l = 0; l < d; ++l) set.inputs(l, s) = v[l];
    for (int l = 0; l < d; ++l) set.values(l, s) = v[d + l];
    for (int r = 0; r < d * d; ++r) set.jacobians(r, s) = v[2 * d + r];
    ++s;
  }
  if (s != n) throw ConfigError("dataset has fewer rows than its metadata states");
  set.validate();
  return set;
}

void write_trace_csv(std::ostream &out, const NewtonTrace &trace, bool with_seconds)
{
  out << "iteration,residual_norm,error_vs_reference";
  if (with_seconds) out << ",seconds";
  out << '\n';
  for (size_t k = 0; k < trace.residual_norm.size(); ++k) {
    out << k << ',' << format_number(trace.residual_norm[k]) << ',';
    if (k < trace.error.size()) out << format_number(trace.error[k]);
    if (with_seconds) out << ',' << (k < trace.seconds.size() ? format_number(trace.seconds[k]) : "");
    out << '\n';
  }
}

void write_trace_csv(const std::string &path, const NewtonTrace &trace, bool with_seconds)
{
  auto f = open_out(path);
  write_trace_csv(f, trace, with_seconds);
}

} // namespace msdtn
