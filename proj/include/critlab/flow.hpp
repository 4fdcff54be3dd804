#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "critlab/deriv.hpp"
#include "critlab/loci.hpp"
#include "critlab/network.hpp"
#include "critlab/parallel.hpp"
#include "critlab/spectral.hpp"

namespace critlab {

/// Closed-form test function with exact gradient and Hessian.
struct AnalyticFunction {
  std::string name;
  std::string formula;
  int arity = 0;
  std::function<double(const VectorXd&)> value;
  std::function<VectorXd(const VectorXd&)> gradient;
  std::function<MatrixXd(const VectorXd&)> hessian;
};

inline const std::vector<AnalyticFunction>& analytic_catalog() {
  static const std::vector<AnalyticFunction> catalog = [] {
    std::vector<AnalyticFunction> c;
    c.push_back({"x3_plus_y3", "x^3 + y^3", 2,
                 [](const VectorXd& v) { return v[0] * v[0] * v[0] + v[1] * v[1] * v[1]; },
                 [](const VectorXd& v) { return VectorXd{{3 * v[0] * v[0], 3 * v[1] * v[1]}}; },
                 [](const VectorXd& v) { return MatrixXd{{6 * v[0], 0.0}, {0.0, 6 * v[1]}}; }});
    c.push_back({"x2_minus_y2", "x^2 - y^2", 2, [](const VectorXd& v) { return v[0] * v[0] - v[1] * v[1]; },
                 [](const VectorXd& v) { return VectorXd{{2 * v[0], -2 * v[1]}}; },
                 [](const VectorXd&) { return MatrixXd{{2.0, 0.0}, {0.0, -2.0}}; }});
    // Two variables, y does not enter: the whole line {x = 0} is critical.
    c.push_back({"x2", "x^2", 2, [](const VectorXd& v) { return v[0] * v[0]; },
                 [](const VectorXd& v) { return VectorXd{{2 * v[0], 0.0}}; },
                 [](const VectorXd&) { return MatrixXd{{2.0, 0.0}, {0.0, 0.0}}; }});
    c.push_back({"x4_5x3_6x2", "x^4 + 5x^3 + 6x^2", 1,
                 [](const VectorXd& v) {
                   const double x = v[0];
                   return x * x * x * x + 5 * x * x * x + 6 * x * x;
                 },
                 [](const VectorXd& v) {
                   const double x = v[0];
                   return VectorXd{{4 * x * x * x + 15 * x * x + 12 * x}};
                 },
                 [](const VectorXd& v) {
                   const double x = v[0];
                   return MatrixXd{{12 * x * x + 30 * x + 12}};
                 }});
    c.push_back({"5x4_5x2_x", "5x^4 - 5x^2 + x", 1,
                 [](const VectorXd& v) {
                   const double x = v[0];
                   return 5 * x * x * x * x - 5 * x * x + x;
                 },
                 [](const VectorXd& v) {
                   const double x = v[0];
                   return VectorXd{{20 * x * x * x - 10 * x + 1}};
                 },
                 [](const VectorXd& v) {
                   const double x = v[0];
                   return MatrixXd{{60 * x * x - 10}};
                 }});
    return c;
  }();
  return catalog;
}

inline const AnalyticFunction& analytic_function(std::string_view name) {
  for (const auto& f : analytic_catalog()) {
    if (f.name == name) return f;
  }
  throw ArgumentError("unknown analytic function '" + std::string(name) + "'");
}

/// Value and gradient of whatever the flow descends.
struct Objective {
  std::function<double(const VectorXd&)> value;
  std::function<VectorXd(const VectorXd&)> gradient;
};

inline Objective make_objective(const AnalyticFunction& f) { return {f.value, f.gradient}; }

inline Objective make_objective(const NetworkShape& shape, const Dataset& data, const Activation& act) {
  data.check_compatible(shape);
  return {[=](const VectorXd& v) { return loss(ParamVector(shape, v), data, act); },
          [=](const VectorXd& v) { return gradient(ParamVector(shape, v), data, act); }};
}

enum class FlowStatus { ConvergedCritical, Diverged, StepLimit };
enum class LocusTag { GlobalMin, Star, Core, Other };

inline std::string to_string(FlowStatus s) {
  switch (s) {
    case FlowStatus::ConvergedCritical: return "converged-critical";
    case FlowStatus::Diverged: return "diverged";
    case FlowStatus::StepLimit: return "step-limit";
  }
  return "?";
}

inline std::string to_string(LocusTag t) {
  switch (t) {
    case LocusTag::GlobalMin: return "global-min";
    case LocusTag::Star: return "star";
    case LocusTag::Core: return "core";
    case LocusTag::Other: return "other";
  }
  return "?";
}

struct TracePoint {
  int step = 0;
  double t = 0.0;
  double value = 0.0;
  double grad_norm = 0.0;
  const VectorXd* state = nullptr;
};

struct FlowOptions {
  double h0 = 1e-2;
  double h_min = 1e-8;
  double h_max = 100.0;
  double tol_g = 1e-8;
  long max_steps = 1'000'000;
  double divergence_radius = 1e6;
  double rtol = 1e-8;   ///< local error tolerance, relative to max(1, ‖x‖_∞)
  double atol = 1e-10;  ///< local error tolerance, absolute
  /// Increases of f up to this many ulps of max(1, |f|) count as roundoff, not as increases.
  double roundoff_ulps = 4.0;
  std::function<void(const TracePoint&)> trace;
};

struct FlowResult {
  VectorXd initial;
  VectorXd terminal;
  double terminal_value = 0.0;
  double terminal_grad_norm = 0.0;
  double time = 0.0;
  long steps = 0;     ///< accepted steps
  long rejected = 0;
  FlowStatus status = FlowStatus::StepLimit;
  std::optional<LocusTag> tag;
  bool monotone = true;  ///< no accepted step increased the objective beyond roundoff
};

/// Integrates ẋ = −∇f(x) with classical RK4.
///
/// Each step is taken once with h and twice with h/2; the difference is the
/// local error estimate. A step is rejected (h halved) when the estimate
/// exceeds atol + rtol·max(1, ‖x‖_∞) or when f would increase. Accepted steps
/// keep the two-half-step result and may double h up to h_max.
inline FlowResult integrate_flow(const Objective& f, const VectorXd& x0, const FlowOptions& options = {}) {
  if (!(options.tol_g > 0.0)) throw ArgumentError("tol_g must be > 0");
  FlowResult r;
  r.initial = x0;
  VectorXd x = x0;
  double fx = f.value(x);
  VectorXd g = f.gradient(x);
  double h = options.h0;

  auto finite = [](const VectorXd& v) { return v.allFinite(); };
  auto rk4 = [&](const VectorXd& start, const VectorXd& g0, double step, VectorXd& out) {
    const VectorXd k1 = -g0;
    const VectorXd k2 = -f.gradient(start + 0.5 * step * k1);
    const VectorXd k3 = -f.gradient(start + 0.5 * step * k2);
    const VectorXd k4 = -f.gradient(start + step * k3);
    out = start + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    return finite(out);
  };
  auto emit = [&] {
    if (options.trace) options.trace({static_cast<int>(r.steps), r.time, fx, g.norm(), &x});
  };
  emit();

  while (true) {
    if (!finite(x) || !std::isfinite(fx) || x.lpNorm<Eigen::Infinity>() > options.divergence_radius) {
      r.status = FlowStatus::Diverged;
      break;
    }
    if (!finite(g)) {
      r.status = FlowStatus::Diverged;
      break;
    }
    if (g.norm() <= options.tol_g) {
      r.status = FlowStatus::ConvergedCritical;
      break;
    }
    if (r.steps >= options.max_steps) {
      r.status = FlowStatus::StepLimit;
      break;
    }

    VectorXd full, mid, half;
    bool ok = rk4(x, g, h, full);
    if (ok) ok = rk4(x, g, 0.5 * h, mid);
    if (ok) ok = rk4(mid, f.gradient(mid), 0.5 * h, half);
    const bool at_floor = 0.5 * h < options.h_min;
    if (!ok) {
      if (!at_floor) {
        h *= 0.5;
        ++r.rejected;
        continue;
      }
      r.status = FlowStatus::Diverged;
      break;
    }
    const double err = (full - half).lpNorm<Eigen::Infinity>();
    const double tol = options.atol + options.rtol * std::max(1.0, x.lpNorm<Eigen::Infinity>());
    if (err > tol && !at_floor) {
      h *= 0.5;
      ++r.rejected;
      continue;
    }
    const double f_new = f.value(half);
    const double slack = options.roundoff_ulps * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(fx));
    if (!(f_new <= fx + slack)) {
      if (half.lpNorm<Eigen::Infinity>() > options.divergence_radius || !std::isfinite(f_new)) {
        x = half;
        fx = f_new;
        r.status = FlowStatus::Diverged;
        break;
      }
      if (at_floor) {
        // Stalled: f cannot be decreased at the smallest admissible step.
        r.status = FlowStatus::StepLimit;
        break;
      }
      h *= 0.5;
      ++r.rejected;
      continue;
    }
    if (f_new > fx + slack) r.monotone = false;
    x = std::move(half);
    fx = f_new;
    g = f.gradient(x);
    r.time += h;
    ++r.steps;
    emit();
    if (err < tol / 32.0) h = std::min(2.0 * h, options.h_max);
  }

  r.terminal = x;
  r.terminal_value = fx;
  r.terminal_grad_norm = g.norm();
  return r;
}

/// Axis-aligned sampling region.
struct Box {
  VectorXd lower;
  VectorXd upper;
};

using TerminalPredicate = std::function<bool(const VectorXd&)>;

inline TerminalPredicate near_point(VectorXd point, double tolerance = 1e-4) {
  return [point = std::move(point), tolerance](const VectorXd& x) { return (x - point).norm() <= tolerance; };
}

/// Hyperplane {x : x[coordinate] = value}.
inline TerminalPredicate near_hyperplane(int coordinate, double value, double tolerance = 1e-4) {
  return [=](const VectorXd& x) { return std::abs(x[coordinate] - value) <= tolerance; };
}

struct BasinReport {
  int samples = 0;
  int hits = 0;
  int converged = 0;
  int diverged = 0;
  int step_limit = 0;
  double fraction = 0.0;
  double stderr_ = 0.0;  ///< binomial standard error sqrt(f(1−f)/N)
};

/// Monte-Carlo fraction of uniform draws from `box` whose flow converges into `target`.
inline BasinReport basin_fraction(const Objective& f, const Box& box, const TerminalPredicate& target, int samples,
                                  std::uint64_t seed, const FlowOptions& options = {}, int jobs = 1) {
  if (samples < 100) throw ArgumentError("basin estimate needs at least 100 samples");
  if (box.lower.size() != box.upper.size()) throw ShapeError("box bounds differ in dimension");
  std::vector<FlowStatus> status(static_cast<std::size_t>(samples));
  std::vector<char> hit(static_cast<std::size_t>(samples), 0);
  FlowOptions quiet = options;
  quiet.trace = nullptr;
  parallel_for(samples, jobs, [&](int s) {
    auto gen = rng_stream(seed, static_cast<std::uint64_t>(s));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    VectorXd x0(box.lower.size());
    for (Eigen::Index i = 0; i < x0.size(); ++i) x0[i] = box.lower[i] + (box.upper[i] - box.lower[i]) * unit(gen);
    const FlowResult res = integrate_flow(f, x0, quiet);
    status[s] = res.status;
    hit[s] = res.status == FlowStatus::ConvergedCritical && target(res.terminal);
  });
  BasinReport r;
  r.samples = samples;
  for (int s = 0; s < samples; ++s) {
    r.hits += hit[s];
    r.converged += status[s] == FlowStatus::ConvergedCritical;
    r.diverged += status[s] == FlowStatus::Diverged;
    r.step_limit += status[s] == FlowStatus::StepLimit;
  }
  r.fraction = static_cast<double>(r.hits) / samples;
  r.stderr_ = std::sqrt(r.fraction * (1.0 - r.fraction) / samples);
  return r;
}

struct ClassifyOptions {
  double global_min_loss = 1e-12;
  double locus_tolerance = 1e-6;  ///< mask residual bound
  ZeroEigOptions zero_eig;
};

struct TerminalClass {
  LocusTag tag = LocusTag::Other;
  double loss = 0.0;
  std::string locus;      ///< e.g. "C_2,3" when tagged star/core
  double residual = 0.0;  ///< mask residual of that locus
  std::optional<ZeroEigReport> zero_eig;
};

/// Tags a converged flow endpoint: global-min, the nearest core or star locus, or other.
inline TerminalClass classify_terminal(const ParamVector& p, const Dataset& data, const Activation& act,
                                       const ClassifyOptions& options = {}) {
  const NetworkShape& shape = p.shape();
  TerminalClass c;
  c.loss = loss(p, data, act);
  if (c.loss <= options.global_min_loss) {
    c.tag = LocusTag::GlobalMin;
    return c;
  }
  const int depth = shape.depth();
  auto consider = [&](const LocusKind& kind, LocusTag tag) {
    const LocusSpec spec = make_locus(shape, data, kind);
    const double res = spec.residual(p);
    if (res <= options.locus_tolerance && (c.locus.empty() || res < c.residual)) {
      c.tag = tag;
      c.locus = spec.label();
      c.residual = res;
    }
  };
  for (int i = 1; i <= depth - 1; ++i) {
    for (int j = i + 1; j <= depth - 1; ++j) consider(LocusKind::core({i, j}), LocusTag::Core);
  }
  if (c.locus.empty()) {
    for (int k = 1; k <= depth - 1; ++k) consider(LocusKind::star(k), LocusTag::Star);
  }
  if (c.locus.empty()) {
    c.tag = LocusTag::Other;
  }
  try {
    c.zero_eig = zero_eig_bound_check(p, data, act, options.zero_eig);
  } catch (const NotCriticalError&) {
    c.zero_eig.reset();
  }
  return c;
}

}  // namespace critlab
