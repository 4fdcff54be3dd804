#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "critlab/errors.hpp"
#include "critlab/flow.hpp"
#include "critlab/io.hpp"
#include "critlab/loci.hpp"
#include "critlab/network.hpp"
#include "critlab/spectral.hpp"

namespace critlab {

using json = nlohmann::json;

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"verify-star", "verify-core", "spectrum", "fiber", "flow", "dims"};
  return names;
}

namespace detail {

/// Reads one JSON object, tracking consumed keys so leftovers can be rejected.
class ConfigReader {
 public:
  ConfigReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  const std::string& path() const { return path_; }
  std::string at(const std::string& key) const { return path_ + "/" + key; }

  bool present(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!present(key)) return fallback;
    return convert<T>(j_.at(key), at(key));
  }

  template <class T>
  T require(const std::string& key) {
    seen_.insert(key);
    if (!present(key)) fail(at(key), "required key is missing");
    return convert<T>(j_.at(key), at(key));
  }

  template <class T>
  std::optional<T> optional(const std::string& key) {
    seen_.insert(key);
    if (!present(key)) return std::nullopt;
    return convert<T>(j_.at(key), at(key));
  }

  ConfigReader child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return {present(key) ? j_.at(key) : empty, at(key)};
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) fail(at(item.key()), "unknown key");
    }
  }

  [[noreturn]] static void fail(const std::string& path, const std::string& message) {
    throw ConfigError((path.empty() ? std::string("/") : path) + ": " + message);
  }

  template <class T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(path, "expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(path, "expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        fail(path, "expected a non-negative integer");
      }
      return v.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(path, "expected an integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(path, "expected a number");
      return v.get<T>();
    } else {
      if (!v.is_array()) fail(path, "expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(convert<typename T::value_type>(v[i], path + "/" + std::to_string(i)));
      }
      return out;
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void check_positive(double v, const std::string& path) {
  if (!(v > 0.0)) ConfigReader::fail(path, "must be > 0");
}

inline void check_at_least(long v, long lo, const std::string& path) {
  if (v < lo) ConfigReader::fail(path, "must be >= " + std::to_string(lo));
}

}  // namespace detail

struct NetworkConfig {
  std::vector<int> widths;
  std::string activation = "tanh";
};

/// Dataset source; file datasets are read at parse time and echoed inline.
struct DatasetConfig {
  bool random = false;
  int n = 0;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> targets;
  std::string origin;
};

struct TolerancesConfig {
  double tau_zero = kDefaultTauZero;
  std::optional<double> tau_rank;
  double tol_g = 1e-8;
};

struct LocusConfig {
  std::string kind = "core";
  std::vector<int> indices;
};

struct VerifyConfig {
  std::vector<int> indices;  ///< star: the k to check (empty = all); core: one index set (empty = all pairs)
  int samples = 100;
  double scale = 1.0;
  double gradient_threshold = 1e-8;
  double eigen_tolerance = 1e-6;
  double zero_tolerance = 1e-8;
};

struct PointConfig {
  std::string source = "random";  ///< random | locus | explicit | zero
  std::uint64_t seed = 0;
  double scale = 1.0;
  std::vector<double> values;
  LocusConfig locus;
};

struct FiberConfig {
  int probes = 20;
  int descent_samples = 50;
  double epsilon = 1e-3;
  double fit_tolerance = 1e-9;
  double endpoint_tolerance = 1e-18;
};

struct StepConfig {
  double h0 = 1e-2;
  double h_min = 1e-8;
  double h_max = 100.0;
  long max_steps = 1'000'000;
  double divergence_radius = 1e6;
  double rtol = 1e-8;
  double atol = 1e-10;
};

struct NearLocusConfig {
  LocusConfig locus;
  int runs = 4;
  double perturbation = 1e-2;
};

struct BasinConfig {
  std::vector<double> lower;
  std::vector<double> upper;
  std::optional<std::vector<double>> target_point;
  int target_coordinate = 0;
  double target_value = 0.0;
  double tolerance = 1e-4;
  int samples = 10000;
  std::optional<double> expect_fraction;
  double expect_sigmas = 3.0;
  std::optional<double> expect_min;
  std::optional<double> expect_max;
};

struct FlowConfig {
  std::string mode = "analytic";  ///< analytic | network
  std::string function = "x3_plus_y3";
  std::vector<std::vector<double>> starts;
  int runs = 4;
  std::vector<double> init_scales = {1.0, 1e-3, 1e-7};
  std::optional<NearLocusConfig> near_locus;
  std::optional<BasinConfig> basin;
  StepConfig step;
};

struct DimsConfig {
  int depth = 4;
  int a = 2;
  int b = 1;
  int n = 2;
  int m_min = 3;
  int m_max = 10;
};

struct OptionsConfig {
  bool falsify = false;
  bool emit_basis = false;
};

/// A validated run configuration for one command.
struct RunConfig {
  std::string command;
  std::optional<NetworkConfig> network;
  std::optional<DatasetConfig> dataset;
  std::uint64_t seed = 0;
  int hessian_cap = 2000;
  TolerancesConfig tolerances;
  VerifyConfig verify;
  PointConfig point;
  FiberConfig fiber;
  FlowConfig flow;
  DimsConfig dims;
  OptionsConfig options;

  NetworkShape shape() const {
    if (!network) throw ConfigError("/network: required key is missing");
    return NetworkShape(network->widths);
  }
  Activation activation() const { return Activation::parse(network ? network->activation : "tanh"); }
  Dataset data() const;
};

namespace detail {

inline bool uses_network(const std::string& command, const json& j) {
  if (command == "dims") return false;
  if (command == "flow") {
    const auto it = j.find("flow");
    if (it == j.end() || !it->is_object()) return false;
    const auto mode = it->find("mode");
    return mode != it->end() && *mode == "network";
  }
  return true;
}

inline MatrixXd sample_matrix(const std::vector<std::vector<double>>& rows, const std::string& path) {
  if (rows.empty()) ConfigReader::fail(path, "needs at least one sample");
  const std::size_t dim = rows.front().size();
  MatrixXd m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].size() != dim || dim == 0) ConfigReader::fail(path, "rows must be non-empty with equal lengths");
    for (std::size_t r = 0; r < dim; ++r) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[k][r];
  }
  return m;
}

inline std::vector<std::vector<double>> sample_rows(const MatrixXd& m) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index k = 0; k < m.cols(); ++k) out[static_cast<std::size_t>(k)] = {m.col(k).begin(), m.col(k).end()};
  return out;
}

inline LocusConfig read_locus(ConfigReader r, const std::string& fallback_kind) {
  LocusConfig l;
  l.kind = r.get<std::string>("kind", fallback_kind);
  if (l.kind != "star" && l.kind != "core") ConfigReader::fail(r.at("kind"), "must be 'star' or 'core'");
  l.indices = r.get<std::vector<int>>("indices", {});
  r.finish();
  return l;
}

inline json locus_json(const LocusConfig& l) { return {{"kind", l.kind}, {"indices", l.indices}}; }

inline StepConfig read_step(ConfigReader r) {
  StepConfig s;
  s.h0 = r.get("h0", s.h0);
  s.h_min = r.get("h_min", s.h_min);
  s.h_max = r.get("h_max", s.h_max);
  s.max_steps = r.get("max_steps", s.max_steps);
  s.divergence_radius = r.get("divergence_radius", s.divergence_radius);
  s.rtol = r.get("rtol", s.rtol);
  s.atol = r.get("atol", s.atol);
  r.finish();
  check_positive(s.h0, r.at("h0"));
  check_positive(s.h_min, r.at("h_min"));
  check_positive(s.h_max, r.at("h_max"));
  check_at_least(s.max_steps, 1, r.at("max_steps"));
  check_positive(s.divergence_radius, r.at("divergence_radius"));
  check_positive(s.rtol, r.at("rtol"));
  check_positive(s.atol, r.at("atol"));
  if (s.h_min > s.h0 || s.h0 > s.h_max) ConfigReader::fail(r.path(), "need h_min <= h0 <= h_max");
  return s;
}

inline BasinConfig read_basin(ConfigReader r) {
  BasinConfig b;
  b.lower = r.require<std::vector<double>>("lower");
  b.upper = r.require<std::vector<double>>("upper");
  if (b.lower.size() != b.upper.size() || b.lower.empty()) {
    ConfigReader::fail(r.at("upper"), "lower and upper must be non-empty and equally long");
  }
  for (std::size_t i = 0; i < b.lower.size(); ++i) {
    if (!(b.lower[i] < b.upper[i])) ConfigReader::fail(r.at("upper"), "need lower < upper in every coordinate");
  }
  ConfigReader target = r.child("target");
  b.target_point = target.optional<std::vector<double>>("point");
  if (target.present("hyperplane")) {
    if (b.target_point) ConfigReader::fail(target.path(), "give either 'point' or 'hyperplane'");
    ConfigReader plane = target.child("hyperplane");
    b.target_coordinate = plane.require<int>("coordinate");
    b.target_value = plane.get("value", 0.0);
    plane.finish();
    if (b.target_coordinate < 0 || b.target_coordinate >= static_cast<int>(b.lower.size())) {
      ConfigReader::fail(plane.at("coordinate"), "outside the box dimension");
    }
  } else {
    target.child("hyperplane");
    if (!b.target_point) ConfigReader::fail(target.path(), "needs 'point' or 'hyperplane'");
    if (b.target_point->size() != b.lower.size()) ConfigReader::fail(target.at("point"), "dimension differs from the box");
  }
  target.finish();
  b.tolerance = r.get("tolerance", b.tolerance);
  check_positive(b.tolerance, r.at("tolerance"));
  b.samples = r.get("samples", b.samples);
  check_at_least(b.samples, 100, r.at("samples"));
  ConfigReader expect = r.child("expect");
  b.expect_fraction = expect.optional<double>("fraction");
  b.expect_sigmas = expect.get("sigmas", b.expect_sigmas);
  b.expect_min = expect.optional<double>("min");
  b.expect_max = expect.optional<double>("max");
  expect.finish();
  r.finish();
  return b;
}

}  // namespace detail

inline Dataset RunConfig::data() const {
  if (!dataset) throw ConfigError("/dataset: required key is missing");
  if (dataset->random) {
    const NetworkShape s = shape();
    return random_dataset(s.input_dim(), s.output_dim(), dataset->n, dataset->seed);
  }
  return {detail::sample_matrix(dataset->inputs, "/dataset/inputs"),
          detail::sample_matrix(dataset->targets, "/dataset/targets")};
}

/// Validates `j` for `command`, materializing every default.
///
/// Dataset paths are read relative to `base_dir` and replaced by their
/// contents, so the normalized config is self-contained.
inline RunConfig parse_config(const std::string& command, const json& j,
                              const std::filesystem::path& base_dir = {}) {
  using detail::ConfigReader;
  const auto& names = command_names();
  if (std::find(names.begin(), names.end(), command) == names.end()) {
    throw ArgumentError("unknown command '" + command + "'");
  }
  ConfigReader root(j, "");
  RunConfig c;
  c.command = command;
  const bool net = detail::uses_network(command, j);
  const bool verify = command == "verify-star" || command == "verify-core";
  const bool pointed = command == "spectrum" || command == "fiber";

  if (net) {
    ConfigReader r = root.child("network");
    NetworkConfig n;
    n.widths = r.require<std::vector<int>>("widths");
    n.activation = r.get<std::string>("activation", n.activation);
    r.finish();
    try {
      NetworkShape check(n.widths);
      Activation::parse(n.activation);
    } catch (const Error& e) {
      ConfigReader::fail(r.path(), e.what());
    }
    c.network = n;

    ConfigReader d = root.child("dataset");
    DatasetConfig ds;
    if (d.present("random")) {
      ConfigReader rr = d.child("random");
      ds.random = true;
      ds.n = rr.require<int>("n");
      ds.seed = rr.get<std::uint64_t>("seed", 0);
      rr.finish();
      detail::check_at_least(ds.n, 1, rr.at("n"));
    } else if (d.present("path")) {
      const std::string path = d.require<std::string>("path");
      const std::string format = d.get<std::string>("format", "");
      std::filesystem::path full(path);
      if (full.is_relative() && !base_dir.empty()) full = base_dir / full;
      const Dataset loaded = load_dataset(full.string(), format);
      ds.inputs = detail::sample_rows(loaded.inputs());
      ds.targets = detail::sample_rows(loaded.targets());
      ds.origin = path;
    } else {
      ds.inputs = d.require<std::vector<std::vector<double>>>("inputs");
      ds.targets = d.require<std::vector<std::vector<double>>>("targets");
      ds.origin = d.get<std::string>("origin", "");
      if (ds.inputs.size() != ds.targets.size()) ConfigReader::fail(d.at("targets"), "needs one row per input");
    }
    d.finish();
    c.dataset = ds;
    try {
      c.data().check_compatible(c.shape());
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      ConfigReader::fail(d.path(), e.what());
    }

    c.seed = root.get<std::uint64_t>("seed", 0);
    c.hessian_cap = root.get("hessian_cap", c.hessian_cap);
    detail::check_at_least(c.hessian_cap, 1, root.at("hessian_cap"));
    ConfigReader t = root.child("tolerances");
    c.tolerances.tau_zero = t.get("tau_zero", c.tolerances.tau_zero);
    c.tolerances.tau_rank = t.optional<double>("tau_rank");
    c.tolerances.tol_g = t.get("tol_g", c.tolerances.tol_g);
    t.finish();
    detail::check_positive(c.tolerances.tau_zero, t.at("tau_zero"));
    if (c.tolerances.tau_rank) detail::check_positive(*c.tolerances.tau_rank, t.at("tau_rank"));
    detail::check_positive(c.tolerances.tol_g, t.at("tol_g"));
  }

  if (verify) {
    ConfigReader r = root.child("verify");
    c.verify.indices = r.get<std::vector<int>>("indices", {});
    c.verify.samples = r.get("samples", c.verify.samples);
    c.verify.scale = r.get("scale", c.verify.scale);
    c.verify.gradient_threshold = r.get("gradient_threshold", c.verify.gradient_threshold);
    c.verify.eigen_tolerance = r.get("eigen_tolerance", c.verify.eigen_tolerance);
    c.verify.zero_tolerance = r.get("zero_tolerance", c.verify.zero_tolerance);
    r.finish();
    detail::check_at_least(c.verify.samples, 1, r.at("samples"));
    if (!(c.verify.scale >= 0.0)) ConfigReader::fail(r.at("scale"), "must be >= 0");
    detail::check_positive(c.verify.gradient_threshold, r.at("gradient_threshold"));
    detail::check_positive(c.verify.eigen_tolerance, r.at("eigen_tolerance"));
    detail::check_positive(c.verify.zero_tolerance, r.at("zero_tolerance"));
  }

  if (pointed) {
    ConfigReader r = root.child("point");
    c.point.source = r.get<std::string>("source", c.point.source);
    c.point.seed = r.get<std::uint64_t>("seed", c.point.seed);
    c.point.scale = r.get("scale", c.point.scale);
    c.point.values = r.get<std::vector<double>>("values", {});
    c.point.locus = detail::read_locus(r.child("locus"), "core");
    r.finish();
    const auto& s = c.point.source;
    if (s != "random" && s != "locus" && s != "explicit" && s != "zero") {
      ConfigReader::fail(r.at("source"), "must be random, locus, explicit or zero");
    }
    if (!(c.point.scale >= 0.0)) ConfigReader::fail(r.at("scale"), "must be >= 0");
    if (s == "explicit" && static_cast<int>(c.point.values.size()) != c.shape().param_count()) {
      ConfigReader::fail(r.at("values"), "needs " + std::to_string(c.shape().param_count()) + " parameters");
    }
    if (s == "locus") {
      if (c.point.locus.indices.empty()) ConfigReader::fail(r.at("locus") + "/indices", "needs at least one index");
      try {
        make_locus(c.shape(), c.data(),
                   c.point.locus.kind == "star" ? LocusKind::star(c.point.locus.indices.front())
                                                : LocusKind::core(c.point.locus.indices));
        if (c.point.locus.kind == "star" && c.point.locus.indices.size() != 1) {
          throw ArgumentError("star locus takes exactly one index");
        }
      } catch (const Error& e) {
        ConfigReader::fail(r.at("locus"), e.what());
      }
    }
  }

  if (command == "fiber") {
    ConfigReader r = root.child("fiber");
    c.fiber.probes = r.get("probes", c.fiber.probes);
    c.fiber.descent_samples = r.get("descent_samples", c.fiber.descent_samples);
    c.fiber.epsilon = r.get("epsilon", c.fiber.epsilon);
    c.fiber.fit_tolerance = r.get("fit_tolerance", c.fiber.fit_tolerance);
    c.fiber.endpoint_tolerance = r.get("endpoint_tolerance", c.fiber.endpoint_tolerance);
    r.finish();
    detail::check_at_least(c.fiber.probes, 1, r.at("probes"));
    detail::check_at_least(c.fiber.descent_samples, 3, r.at("descent_samples"));
    detail::check_positive(c.fiber.epsilon, r.at("epsilon"));
    detail::check_positive(c.fiber.fit_tolerance, r.at("fit_tolerance"));
    detail::check_positive(c.fiber.endpoint_tolerance, r.at("endpoint_tolerance"));
  }

  if (command == "flow") {
    ConfigReader r = root.child("flow");
    auto& f = c.flow;
    f.mode = r.get<std::string>("mode", f.mode);
    if (f.mode != "analytic" && f.mode != "network") ConfigReader::fail(r.at("mode"), "must be analytic or network");
    f.step = detail::read_step(r.child("step"));
    if (f.mode == "analytic") {
      f.function = r.get<std::string>("function", f.function);
      int arity = 0;
      try {
        arity = analytic_function(f.function).arity;
      } catch (const Error& e) {
        ConfigReader::fail(r.at("function"), e.what());
      }
      f.starts = r.get<std::vector<std::vector<double>>>("starts", {});
      for (std::size_t i = 0; i < f.starts.size(); ++i) {
        if (static_cast<int>(f.starts[i].size()) != arity) {
          ConfigReader::fail(r.at("starts") + "/" + std::to_string(i), "needs " + std::to_string(arity) + " values");
        }
      }
      if (r.present("basin")) {
        f.basin = detail::read_basin(r.child("basin"));
        if (static_cast<int>(f.basin->lower.size()) != arity) {
          ConfigReader::fail(r.at("basin") + "/lower", "box dimension differs from the function arity");
        }
      } else {
        r.child("basin");
      }
      if (f.starts.empty() && !f.basin) ConfigReader::fail(r.path(), "analytic flow needs 'starts' or 'basin'");
    } else {
      f.runs = r.get("runs", f.runs);
      detail::check_at_least(f.runs, 0, r.at("runs"));
      f.init_scales = r.get("init_scales", f.init_scales);
      for (std::size_t i = 0; i < f.init_scales.size(); ++i) {
        detail::check_positive(f.init_scales[i], r.at("init_scales") + "/" + std::to_string(i));
      }
      if (r.present("near_locus")) {
        ConfigReader nl = r.child("near_locus");
        NearLocusConfig near;
        near.locus = detail::read_locus(nl.child("locus"), "core");
        near.runs = nl.get("runs", near.runs);
        near.perturbation = nl.get("perturbation", near.perturbation);
        nl.finish();
        detail::check_at_least(near.runs, 1, nl.at("runs"));
        if (!(near.perturbation >= 0.0)) ConfigReader::fail(nl.at("perturbation"), "must be >= 0");
        try {
          make_locus(c.shape(), c.data(),
                     near.locus.kind == "star" && !near.locus.indices.empty()
                         ? LocusKind::star(near.locus.indices.front())
                         : LocusKind::core(near.locus.indices));
        } catch (const Error& e) {
          ConfigReader::fail(nl.at("locus"), e.what());
        }
        f.near_locus = near;
      } else {
        r.child("near_locus");
      }
      if (f.runs * static_cast<int>(f.init_scales.size()) == 0 && !f.near_locus) {
        ConfigReader::fail(r.path(), "network flow needs runs with init_scales or a near_locus block");
      }
    }
    r.finish();
  }

  if (command == "dims") {
    ConfigReader r = root.child("dims");
    auto& d = c.dims;
    d.depth = r.get("depth", d.depth);
    d.a = r.get("a", d.a);
    d.b = r.get("b", d.b);
    d.n = r.get("n", d.n);
    d.m_min = r.get("m_min", d.m_min);
    d.m_max = r.get("m_max", d.m_max);
    r.finish();
    detail::check_at_least(d.depth, 2, r.at("depth"));
    detail::check_at_least(d.a, 1, r.at("a"));
    detail::check_at_least(d.b, 1, r.at("b"));
    detail::check_at_least(d.n, 1, r.at("n"));
    detail::check_at_least(d.m_min, 1, r.at("m_min"));
    detail::check_at_least(d.m_max, d.m_min, r.at("m_max"));
  }

  ConfigReader o = root.child("options");
  c.options.falsify = o.get("falsify", false);
  c.options.emit_basis = o.get("emit_basis", false);
  o.finish();
  root.finish();
  return c;
}

/// The normalized config: every default explicit, only keys the command reads.
inline json to_json(const RunConfig& c) {
  json j = json::object();
  if (c.network) {
    j["network"] = {{"widths", c.network->widths}, {"activation", c.network->activation}};
  }
  if (c.dataset) {
    if (c.dataset->random) {
      j["dataset"] = {{"random", {{"n", c.dataset->n}, {"seed", c.dataset->seed}}}};
    } else {
      j["dataset"] = {{"inputs", c.dataset->inputs}, {"targets", c.dataset->targets}};
      if (!c.dataset->origin.empty()) j["dataset"]["origin"] = c.dataset->origin;
    }
    j["seed"] = c.seed;
    j["hessian_cap"] = c.hessian_cap;
    j["tolerances"] = {{"tau_zero", c.tolerances.tau_zero},
                       {"tau_rank", c.tolerances.tau_rank ? json(*c.tolerances.tau_rank) : json(nullptr)},
                       {"tol_g", c.tolerances.tol_g}};
  }
  if (c.command == "verify-star" || c.command == "verify-core") {
    const auto& v = c.verify;
    j["verify"] = {{"indices", v.indices},
                   {"samples", v.samples},
                   {"scale", v.scale},
                   {"gradient_threshold", v.gradient_threshold},
                   {"eigen_tolerance", v.eigen_tolerance},
                   {"zero_tolerance", v.zero_tolerance}};
  }
  if (c.command == "spectrum" || c.command == "fiber") {
    j["point"] = {{"source", c.point.source},
                  {"seed", c.point.seed},
                  {"scale", c.point.scale},
                  {"values", c.point.values},
                  {"locus", detail::locus_json(c.point.locus)}};
  }
  if (c.command == "fiber") {
    j["fiber"] = {{"probes", c.fiber.probes},
                  {"descent_samples", c.fiber.descent_samples},
                  {"epsilon", c.fiber.epsilon},
                  {"fit_tolerance", c.fiber.fit_tolerance},
                  {"endpoint_tolerance", c.fiber.endpoint_tolerance}};
  }
  if (c.command == "flow") {
    const auto& f = c.flow;
    const auto& s = f.step;
    json flow = {{"mode", f.mode},
                 {"step",
                  {{"h0", s.h0},
                   {"h_min", s.h_min},
                   {"h_max", s.h_max},
                   {"max_steps", s.max_steps},
                   {"divergence_radius", s.divergence_radius},
                   {"rtol", s.rtol},
                   {"atol", s.atol}}}};
    if (f.mode == "analytic") {
      flow["function"] = f.function;
      flow["starts"] = f.starts;
      if (f.basin) {
        const auto& b = *f.basin;
        json target = b.target_point ? json{{"point", *b.target_point}}
                                     : json{{"hyperplane", {{"coordinate", b.target_coordinate}, {"value", b.target_value}}}};
        auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
        flow["basin"] = {{"lower", b.lower},
                         {"upper", b.upper},
                         {"target", target},
                         {"tolerance", b.tolerance},
                         {"samples", b.samples},
                         {"expect",
                          {{"fraction", opt(b.expect_fraction)},
                           {"sigmas", b.expect_sigmas},
                           {"min", opt(b.expect_min)},
                           {"max", opt(b.expect_max)}}}};
      } else {
        flow["basin"] = nullptr;
      }
    } else {
      flow["runs"] = f.runs;
      flow["init_scales"] = f.init_scales;
      flow["near_locus"] = f.near_locus ? json{{"locus", detail::locus_json(f.near_locus->locus)},
                                               {"runs", f.near_locus->runs},
                                               {"perturbation", f.near_locus->perturbation}}
                                        : json(nullptr);
    }
    j["flow"] = flow;
  }
  if (c.command == "dims") {
    const auto& d = c.dims;
    j["dims"] = {{"depth", d.depth}, {"a", d.a}, {"b", d.b}, {"n", d.n}, {"m_min", d.m_min}, {"m_max", d.m_max}};
  }
  j["options"] = {{"falsify", c.options.falsify}, {"emit_basis", c.options.emit_basis}};
  return j;
}

inline json normalize_config(const std::string& command, const json& j, const std::filesystem::path& base_dir = {}) {
  return to_json(parse_config(command, j, base_dir));
}

}  // namespace critlab
