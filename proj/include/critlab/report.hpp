#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "critlab/config.hpp"
#include "critlab/deriv.hpp"
#include "critlab/fiber.hpp"
#include "critlab/flow.hpp"
#include "critlab/loci.hpp"
#include "critlab/spectral.hpp"

namespace critlab {

inline constexpr const char* kVersion = "0.1.0";

/// Process-level knobs that never change numeric results.
struct RunContext {
  int jobs = 1;
  std::ostream* trace = nullptr;  ///< flow trajectories as CSV when set
};

struct Report {
  std::string command;
  json config;
  json results = json::object();
  json checks = json::array();
  json negative_controls = json::array();
  bool pass = true;
  double wall_clock_seconds = 0.0;

  void check(const std::string& name, bool ok, json detail = json::object()) {
    detail["name"] = name;
    detail["pass"] = ok;
    checks.push_back(std::move(detail));
    pass = pass && ok;
  }

  /// A control that must fail; `failed` says whether it did.
  void control(const std::string& name, bool failed, json detail = json::object()) {
    detail["name"] = name;
    detail["expected"] = "fail";
    detail["failed_as_expected"] = failed;
    negative_controls.push_back(std::move(detail));
    pass = pass && failed;
  }

  json to_json() const {
    return {{"tool", "critlab"},
            {"version", kVersion},
            {"command", command},
            {"config", config},
            {"results", results},
            {"checks", checks},
            {"negative_controls", negative_controls},
            {"pass", pass},
            {"wall_clock_seconds", wall_clock_seconds}};
  }
};

namespace detail {

inline json vec_json(const VectorXd& v) { return std::vector<double>(v.begin(), v.end()); }

inline json matrix_columns_json(const MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(vec_json(m.col(c)));
  return out;
}

inline SpectrumOptions spectrum_options(const RunConfig& c) {
  SpectrumOptions s;
  s.tau_zero = c.tolerances.tau_zero;
  return s;
}

inline ZeroEigOptions zero_eig_options(const RunConfig& c, const RunContext& ctx) {
  ZeroEigOptions z;
  z.spectrum = spectrum_options(c);
  z.tau_rank = c.tolerances.tau_rank;
  z.jobs = ctx.jobs;
  return z;
}

inline json spectrum_json(const HessianSpectrum& s) {
  return {{"eigenvalues", vec_json(s.eigenvalues)},
          {"zero_count", s.zero_count},
          {"positive_count", s.positive_count},
          {"negative_count", s.negative_count},
          {"tau_zero", s.tau_zero},
          {"threshold", s.threshold}};
}

inline json zero_eig_json(const ZeroEigReport& z) {
  return {{"grad_inf", z.grad_inf},
          {"spectrum", spectrum_json(z.spectrum)},
          {"rank_phi", z.rank_phi},
          {"rank_phi_hat", z.rank_phi_hat},
          {"bound_r", z.bound_r},
          {"bound_r_hat", z.bound_r_hat},
          {"uniform_bound", z.uniform_bound},
          {"satisfied", z.satisfied},
          {"satisfied_r", z.satisfied_r},
          {"satisfied_uniform", z.satisfied_uniform}};
}

inline LocusKind locus_kind(const LocusConfig& l) {
  return l.kind == "star" ? LocusKind::star(l.indices.at(0)) : LocusKind::core(l.indices);
}

inline void require_hessian_fits(const RunConfig& c, const NetworkShape& shape) {
  if (shape.param_count() > c.hessian_cap) {
    throw CapacityError("network has " + std::to_string(shape.param_count()) + " parameters, hessian_cap is " +
                        std::to_string(c.hessian_cap));
  }
}

inline ParamVector config_point(const RunConfig& c, const NetworkShape& shape, const Dataset& data) {
  const auto& pt = c.point;
  if (pt.source == "zero") return ParamVector(shape);
  if (pt.source == "explicit") {
    return ParamVector(shape, Eigen::Map<const VectorXd>(pt.values.data(), static_cast<Eigen::Index>(pt.values.size())));
  }
  if (pt.source == "locus") {
    return sample_locus(make_locus(shape, data, locus_kind(pt.locus)), 1, pt.seed, pt.scale).front();
  }
  return random_params(shape, pt.seed, pt.scale);
}

inline json point_json(const ParamVector& p, const Dataset& data, const Activation& act) {
  return {{"parameters", vec_json(p.data())}, {"loss", loss(p, data, act)}};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// verify-star / verify-core
// ---------------------------------------------------------------------------

inline Report cmd_verify_star(const RunConfig& c, const RunContext& ctx = {}) {
  const NetworkShape shape = c.shape();
  const Dataset data = c.data();
  const Activation act = c.activation();
  Report rep;
  std::vector<int> ks = c.verify.indices;
  if (ks.empty()) {
    for (int k = 1; k <= shape.depth() - 1; ++k) ks.push_back(k);
  }
  StarOptions opt;
  opt.scale = c.verify.scale;
  opt.threshold = c.verify.gradient_threshold;
  opt.jobs = ctx.jobs;
  json loci = json::array();
  for (int k : ks) {
    const LocusSpec spec = make_locus(shape, data, LocusKind::star(k));
    const StarReport r = verify_star(shape, data, act, k, c.verify.samples, c.seed + static_cast<std::uint64_t>(k), opt);
    loci.push_back({{"locus", spec.label()},
                    {"k", k},
                    {"dimension", spec.free_count()},
                    {"samples", r.samples},
                    {"max_grad_inf", r.max_grad_inf},
                    {"worst_sample", r.worst_sample},
                    {"output_bias_grad_inf", r.output_bias_grad_inf},
                    {"warnings", spec.warnings()}});
    rep.check("critical on " + spec.label(), r.pass,
              {{"value", r.max_grad_inf}, {"threshold", opt.threshold}});
  }
  rep.results["loci"] = loci;

  if (c.options.falsify) {
    StarOptions sum = opt;
    sum.bias_target = BiasTarget::Sum;
    for (int k : ks) {
      const StarReport r =
          verify_star(shape, data, act, k, c.verify.samples, c.seed + static_cast<std::uint64_t>(k), sum);
      rep.control("sum-target output bias on S_" + std::to_string(k), !r.pass,
                  {{"max_grad_inf", r.max_grad_inf}, {"threshold", opt.threshold}, {"n", data.size()}});
    }
  }
  return rep;
}

inline Report cmd_verify_core(const RunConfig& c, const RunContext& ctx = {}) {
  const NetworkShape shape = c.shape();
  const Dataset data = c.data();
  const Activation act = c.activation();
  detail::require_hessian_fits(c, shape);
  Report rep;
  std::vector<std::vector<int>> sets;
  if (!c.verify.indices.empty()) {
    sets.push_back(c.verify.indices);
  } else {
    for (int i = 1; i <= shape.depth() - 1; ++i) {
      for (int j = i + 1; j <= shape.depth() - 1; ++j) sets.push_back({i, j});
    }
  }
  CoreOptions opt;
  opt.scale = c.verify.scale;
  opt.eigen_tolerance = c.verify.eigen_tolerance;
  opt.zero_tolerance = c.verify.zero_tolerance;
  opt.jobs = ctx.jobs;
  json loci = json::array();
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const LocusSpec spec = make_locus(shape, data, LocusKind::core(sets[s]));
    const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(s);
    const CoreReport r = verify_core(shape, data, act, sets[s], c.verify.samples, seed, opt);
    int failures = 0;
    double worst_other = 0.0;
    double min_eig = 0.0;
    double worst_top = 0.0;
    for (std::size_t t = 0; t < r.samples.size(); ++t) {
      const auto& cs = r.samples[t];
      failures += !cs.pass;
      worst_other = std::max(worst_other, cs.max_abs_other);
      min_eig = t == 0 ? cs.min_eigenvalue : std::min(min_eig, cs.min_eigenvalue);
      worst_top = std::max(worst_top, (cs.top_eigenvalues.array() - r.expected_eigenvalue).abs().maxCoeff());
    }
    loci.push_back({{"locus", spec.label()},
                    {"indices", r.indices},
                    {"dimension", spec.free_count()},
                    {"samples", static_cast<int>(r.samples.size())},
                    {"expected_eigenvalue", r.expected_eigenvalue},
                    {"expected_copies", r.expected_copies},
                    {"max_top_deviation", worst_top},
                    {"max_abs_other", worst_other},
                    {"min_eigenvalue", min_eig},
                    {"failed_samples", failures},
                    {"warnings", spec.warnings()}});
    rep.check("output-bias spectrum on " + spec.label(), r.pass,
              {{"failed_samples", failures},
               {"max_top_deviation", worst_top},
               {"max_abs_other", worst_other},
               {"eigen_tolerance", opt.eigen_tolerance},
               {"zero_tolerance", opt.zero_tolerance}});
  }
  rep.results["loci"] = loci;

  if (c.options.falsify) {
    // Off the mean the gradient in b_ℓ is nonzero; check criticality, which the spectrum alone does not test.
    for (std::size_t s = 0; s < sets.size(); ++s) {
      const LocusSpec spec = make_locus(shape, data, LocusKind::core(sets[s]), BiasTarget::Sum);
      const auto pts = sample_locus(spec, 1, c.seed + static_cast<std::uint64_t>(s), opt.scale);
      const double g = gradient(pts.front(), data, act).cwiseAbs().maxCoeff();
      rep.control("sum-target output bias on " + spec.label(), g > c.verify.gradient_threshold,
                  {{"grad_inf", g}, {"threshold", c.verify.gradient_threshold}});
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

inline Report cmd_spectrum(const RunConfig& c, const RunContext& ctx = {}) {
  const NetworkShape shape = c.shape();
  const Dataset data = c.data();
  const Activation act = c.activation();
  detail::require_hessian_fits(c, shape);
  Report rep;
  const ParamVector p = detail::config_point(c, shape, data);
  const VectorXd g = gradient(p, data, act);
  HessianOptions hopt;
  hopt.cap = c.hessian_cap;
  hopt.jobs = ctx.jobs;
  const MatrixXd h = hessian(p, data, act, hopt);
  const HessianSpectrum s = spectrum(h, detail::spectrum_options(c));
  const double grad_inf = g.cwiseAbs().maxCoeff();
  rep.results["point"] = detail::point_json(p, data, act);
  rep.results["grad_inf"] = grad_inf;
  rep.results["spectrum"] = detail::spectrum_json(s);
  const bool critical = grad_inf <= ZeroEigOptions{}.gradient_tolerance;
  rep.results["critical"] = critical;
  rep.check("hessian finite", h.allFinite());
  if (critical) {
    const ZeroEigReport z = zero_eig_bound_check(p, data, act, detail::zero_eig_options(c, ctx));
    rep.results["zero_eig"] = detail::zero_eig_json(z);
    rep.check("zero count >= (m+1-rank Phi_hat) b", z.satisfied,
              {{"zero_count", z.spectrum.zero_count}, {"bound", z.bound_r_hat}});
    if (shape.last_hidden_width() > data.size()) {
      rep.check("zero count >= (m+1-n) b", z.satisfied_uniform,
                {{"zero_count", z.spectrum.zero_count}, {"bound", z.uniform_bound}});
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// fiber
// ---------------------------------------------------------------------------

inline Report cmd_fiber(const RunConfig& c, const RunContext& ctx = {}) {
  const NetworkShape shape = c.shape();
  const Dataset data = c.data();
  const Activation act = c.activation();
  const auto tau = c.tolerances.tau_rank;
  Report rep;
  const ParamVector p = detail::config_point(c, shape, data);
  const FiberQuadratic fq = build_fiber(p, data, act);
  const FiberMinimum fmin = fiber_minimize(fq, tau);
  const int r = rank_of(fq.features(), tau).rank;
  const int r_hat = fmin.rank_hat;
  const int b = fq.outputs();
  const int null_expected = (fq.feature_dim() - r_hat) * b;
  rep.results["point"] = detail::point_json(p, data, act);
  rep.results["rank_phi"] = r;
  rep.results["rank_phi_hat"] = r_hat;
  rep.results["fiber_dimension"] = fq.dimension();
  rep.results["null_dimension"] = static_cast<int>(fmin.null_basis.cols());
  rep.results["fiber_min_loss"] = fmin.loss;

  // Quadratic form against the network loss at the point and at a random layer.
  const double lp = loss(p, data, act);
  const double quad_at_p = fq.quadratic_value(fq.coordinates(fq.final_layer()));
  auto gen = rng_stream(c.point.seed, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd z(fq.dimension());
  for (auto& v : z) v = normal(gen);
  const double lz = loss(fq.with_final_layer(fq.layer_from(z)), data, act);
  const double quad_err = std::max(std::abs(quad_at_p - lp) / std::max(1.0, std::abs(lp)),
                                   std::abs(fq.quadratic_value(z) - lz) / std::max(1.0, std::abs(lz)));
  rep.results["quadratic_rel_error"] = quad_err;
  rep.check("quadratic form matches loss", quad_err <= 1e-12, {{"value", quad_err}, {"threshold", 1e-12}});

  const MatrixXd hf = fq.hessian();
  if (shape.param_count() <= c.hessian_cap) {
    HessianOptions hopt;
    hopt.cap = c.hessian_cap;
    hopt.jobs = ctx.jobs;
    const MatrixXd h = hessian(p, data, act, hopt);
    double err = 0.0;
    for (int i = 0; i < fq.dimension(); ++i) {
      for (int j = 0; j < fq.dimension(); ++j) {
        err = std::max(err, std::abs(h(fq.parameter_index(i), fq.parameter_index(j)) - hf(i, j)));
      }
    }
    rep.results["kronecker_error"] = err;
    rep.check("final-layer hessian block is 2(G x I)", err <= 1e-10, {{"value", err}, {"threshold", 1e-10}});
  }
  const int rank_hf = rank_of(hf).rank;
  rep.results["rank_hessian_fiber"] = rank_hf;
  rep.check("rank H_F = m_l rank Phi_hat", rank_hf == b * r_hat, {{"value", rank_hf}, {"expected", b * r_hat}});
  rep.check("null dimension = (m+1-rank Phi_hat) m_l", fmin.null_basis.cols() == null_expected,
            {{"value", static_cast<int>(fmin.null_basis.cols())}, {"expected", null_expected}});
  const int rank_weights = rank_of(fq.weight_hessian()).rank;
  rep.results["rank_weight_hessian"] = rank_weights;
  rep.check("bias-frozen rank <= m_l rank Phi", rank_weights <= b * r, {{"value", rank_weights}, {"bound", b * r}});

  if (r_hat == data.size()) {
    DescentOptions dopt;
    dopt.samples = c.fiber.descent_samples;
    dopt.tau_rank = tau;
    dopt.fit_tolerance = c.fiber.fit_tolerance;
    dopt.endpoint_tolerance = c.fiber.endpoint_tolerance;
    try {
      const DescentLine line = descent_line(p, data, act, dopt);
      rep.results["descent_line"] = {{"losses", line.losses},
                                     {"fit", {line.fit_c0, line.fit_c1, line.fit_c2}},
                                     {"fit_residual", line.fit_residual},
                                     {"strictly_decreasing", line.strictly_decreasing},
                                     {"fit_slope_negative", line.fit_slope_negative},
                                     {"endpoint_loss", line.endpoint_loss}};
      rep.check("descent line reaches a global minimum", line.pass,
                {{"endpoint_loss", line.endpoint_loss}, {"fit_residual", line.fit_residual}});
    } catch (const DegenerateLineError& e) {
      rep.results["descent_line"] = {{"skipped", e.what()}};
    }
  }

  const double grad_inf = gradient(p, data, act).cwiseAbs().maxCoeff();
  rep.results["grad_inf"] = grad_inf;
  if (grad_inf <= WitnessOptions{}.gradient_tolerance) {
    WitnessOptions wopt;
    wopt.probes = c.fiber.probes;
    wopt.seed = c.point.seed;
    wopt.tau_rank = tau;
    const LevelSetWitness w = level_set_witness(p, data, act, wopt);
    json wj = {{"dimension", w.dimension},
               {"dimension_r_form", w.dimension_r_form},
               {"reported_dimension", w.reported_dimension},
               {"full_slice_constant", w.full_slice_constant},
               {"max_delta", w.max_delta},
               {"tolerance", w.tolerance}};
    if (c.options.emit_basis) wj["basis"] = detail::matrix_columns_json(w.basis);
    rep.results["level_set_witness"] = wj;
    rep.check("loss constant on the level-set witness", w.pass, {{"max_delta", w.max_delta}, {"tolerance", w.tolerance}});

    if (shape.last_hidden_width() > data.size() && shape.param_count() <= c.hessian_cap) {
      NonIsolationOptions nopt;
      nopt.tau_rank = tau;
      nopt.jobs = ctx.jobs;
      try {
        const NonIsolationWitness n = nonisolation_witness(p, data, act, c.fiber.epsilon, nopt);
        json nj = {{"distance", n.distance},
                   {"delta_loss", n.delta_loss},
                   {"tolerance", n.tolerance},
                   {"min_eigenvalue", n.min_eigenvalue},
                   {"falsified", n.falsified}};
        if (c.options.emit_basis) nj["q"] = detail::vec_json(n.q);
        rep.results["nonisolation"] = nj;
        rep.check("nearby point with equal loss", n.pass && !n.falsified,
                  {{"delta_loss", n.delta_loss}, {"distance", n.distance}, {"falsified", n.falsified}});
      } catch (const PreconditionError& e) {
        rep.results["nonisolation"] = {{"skipped", e.what()}};
      }
    }
  }

  if (c.options.falsify) {
    // Zero last hidden weights give identical feature columns, so rank Φ̂ = 1 < n.
    ParamVector q = p;
    q.weights(shape.depth() - 1).setZero();
    bool refused = false;
    std::string message;
    try {
      descent_line(q, data, act, DescentOptions{c.fiber.descent_samples, tau});
    } catch (const PreconditionError& e) {
      refused = true;
      message = e.what();
    } catch (const DegenerateLineError& e) {
      message = e.what();
    }
    rep.control("descent line on a rank-deficient slice", refused && data.size() >= 2, {{"message", message}});
  }
  return rep;
}

// ---------------------------------------------------------------------------
// flow
// ---------------------------------------------------------------------------

namespace detail {

inline FlowOptions flow_options(const StepConfig& s, double tol_g) {
  FlowOptions o;
  o.h0 = s.h0;
  o.h_min = s.h_min;
  o.h_max = s.h_max;
  o.max_steps = s.max_steps;
  o.divergence_radius = s.divergence_radius;
  o.rtol = s.rtol;
  o.atol = s.atol;
  o.tol_g = tol_g;
  return o;
}

inline void attach_trace(FlowOptions& o, const RunContext& ctx, int run) {
  if (!ctx.trace) return;
  std::ostream* out = ctx.trace;
  o.trace = [out, run](const TracePoint& tp) {
    *out << run << ',' << tp.step << ',' << tp.t << ',' << tp.value << ',' << tp.grad_norm << '\n';
  };
}

inline json flow_json(const FlowResult& r) {
  return {{"initial", vec_json(r.initial)},
          {"terminal_value", r.terminal_value},
          {"terminal_grad_norm", r.terminal_grad_norm},
          {"time", r.time},
          {"steps", r.steps},
          {"rejected", r.rejected},
          {"status", to_string(r.status)},
          {"monotone", r.monotone}};
}

}  // namespace detail

inline Report cmd_flow(const RunConfig& c, const RunContext& ctx = {}) {
  Report rep;
  const auto& f = c.flow;
  if (ctx.trace) *ctx.trace << "run,step,t,f,grad_norm\n";

  if (f.mode == "analytic") {
    const AnalyticFunction& fn = analytic_function(f.function);
    const Objective obj = make_objective(fn);
    const FlowOptions base = detail::flow_options(f.step, c.tolerances.tol_g);
    rep.results["function"] = {{"name", fn.name}, {"formula", fn.formula}};
    json runs = json::array();
    bool monotone = true;
    for (std::size_t i = 0; i < f.starts.size(); ++i) {
      FlowOptions o = base;
      detail::attach_trace(o, ctx, static_cast<int>(i));
      const VectorXd x0 = Eigen::Map<const VectorXd>(f.starts[i].data(), fn.arity);
      const FlowResult r = integrate_flow(obj, x0, o);
      json rj = detail::flow_json(r);
      rj["terminal"] = detail::vec_json(r.terminal);
      runs.push_back(rj);
      monotone = monotone && r.monotone;
    }
    rep.results["runs"] = runs;
    if (!f.starts.empty()) rep.check("objective non-increasing on every trajectory", monotone);

    if (f.basin) {
      const auto& b = *f.basin;
      Box box{Eigen::Map<const VectorXd>(b.lower.data(), fn.arity), Eigen::Map<const VectorXd>(b.upper.data(), fn.arity)};
      const TerminalPredicate target =
          b.target_point ? near_point(Eigen::Map<const VectorXd>(b.target_point->data(), fn.arity), b.tolerance)
                         : near_hyperplane(b.target_coordinate, b.target_value, b.tolerance);
      const BasinReport br = basin_fraction(obj, box, target, b.samples, c.seed, base, ctx.jobs);
      rep.results["basin"] = {{"samples", br.samples},
                              {"hits", br.hits},
                              {"converged", br.converged},
                              {"diverged", br.diverged},
                              {"step_limit", br.step_limit},
                              {"fraction", br.fraction},
                              {"stderr", br.stderr_}};
      if (b.expect_fraction) {
        const double dev = std::abs(br.fraction - *b.expect_fraction);
        const double allowed = b.expect_sigmas * br.stderr_;
        rep.check("basin fraction within stderr band", dev <= allowed,
                  {{"value", br.fraction}, {"expected", *b.expect_fraction}, {"allowed", allowed}});
      }
      if (b.expect_min) {
        rep.check("basin fraction >= min", br.fraction >= *b.expect_min, {{"value", br.fraction}, {"min", *b.expect_min}});
      }
      if (b.expect_max) {
        rep.check("basin fraction <= max", br.fraction <= *b.expect_max, {{"value", br.fraction}, {"max", *b.expect_max}});
      }
    }
    return rep;
  }

  const NetworkShape shape = c.shape();
  const Dataset data = c.data();
  const Activation act = c.activation();
  detail::require_hessian_fits(c, shape);
  const Objective obj = make_objective(shape, data, act);
  const FlowOptions base = detail::flow_options(f.step, c.tolerances.tol_g);
  ClassifyOptions copt;
  copt.zero_eig = detail::zero_eig_options(c, ctx);

  std::vector<std::pair<std::string, VectorXd>> starts;
  for (std::size_t s = 0; s < f.init_scales.size(); ++s) {
    for (int i = 0; i < f.runs; ++i) {
      const std::uint64_t seed = splitmix64(c.seed + 1000003ULL * s) + static_cast<std::uint64_t>(i);
      std::ostringstream label;
      label << "random scale " << f.init_scales[s];
      starts.emplace_back(label.str(), random_params(shape, seed, f.init_scales[s]).data());
    }
  }
  if (f.near_locus) {
    const auto& nl = *f.near_locus;
    const LocusSpec spec = make_locus(shape, data, detail::locus_kind(nl.locus));
    const auto points = sample_locus(spec, nl.runs, splitmix64(c.seed ^ 0x5eedULL));
    for (int i = 0; i < nl.runs; ++i) {
      const VectorXd noise = random_params(shape, splitmix64(c.seed) + 7919ULL * (i + 1), 1.0).data();
      starts.emplace_back("near " + spec.label(), points[i].data() + nl.perturbation * noise);
    }
  }

  const bool very_wide = shape.last_hidden_width() > data.size();
  json runs = json::array();
  bool monotone = true;
  bool bound_ok = true;
  int non_global = 0;
  bool reprojected_ok = true;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    FlowOptions o = base;
    detail::attach_trace(o, ctx, static_cast<int>(i));
    const FlowResult r = integrate_flow(obj, starts[i].second, o);
    monotone = monotone && r.monotone;
    json rj = detail::flow_json(r);
    rj.erase("initial");
    rj["start"] = starts[i].first;
    if (r.status == FlowStatus::ConvergedCritical) {
      const ParamVector pt(shape, r.terminal);
      const TerminalClass tc = classify_terminal(pt, data, act, copt);
      rj["tag"] = to_string(tc.tag);
      rj["loss"] = tc.loss;
      if (!tc.locus.empty()) {
        rj["locus"] = tc.locus;
        rj["locus_residual"] = tc.residual;
        // The exact projection onto the tagged mask must itself be critical.
        LocusKind kind = LocusKind::star(1);
        kind.type = tc.tag == LocusTag::Core ? LocusType::Core : LocusType::Star;
        kind.indices.clear();
        std::stringstream digits(tc.locus.substr(2));
        std::string tok;
        while (std::getline(digits, tok, ',')) kind.indices.push_back(std::stoi(tok));
        const ParamVector proj = make_locus(shape, data, kind).project(pt);
        const double g = gradient(proj, data, act).cwiseAbs().maxCoeff();
        rj["projected_grad_inf"] = g;
        reprojected_ok = reprojected_ok && g <= 1e-8;
      }
      if (tc.zero_eig) rj["zero_eig"] = detail::zero_eig_json(*tc.zero_eig);
      if (tc.tag != LocusTag::GlobalMin && tc.zero_eig) {
        ++non_global;
        if (very_wide) bound_ok = bound_ok && tc.zero_eig->satisfied_uniform;
      }
    }
    if (c.options.emit_basis) rj["terminal"] = detail::vec_json(r.terminal);
    runs.push_back(rj);
  }
  rep.results["runs"] = runs;
  rep.results["non_global_terminals"] = non_global;
  rep.results["very_wide"] = very_wide;
  rep.check("objective non-increasing on every trajectory", monotone);
  rep.check("projected star/core terminals are critical", reprojected_ok);
  if (very_wide) {
    rep.check("zero count >= (m+1-n) b at every non-global terminal", bound_ok,
              {{"non_global_terminals", non_global},
               {"bound", (shape.last_hidden_width() + 1 - data.size()) * shape.output_dim()}});
  }
  return rep;
}

// ---------------------------------------------------------------------------
// dims
// ---------------------------------------------------------------------------

struct DimsRow {
  int m = 0;
  DimensionReport report;
  std::string note;
};

inline std::vector<DimsRow> dims_rows(const DimsConfig& d) {
  std::vector<DimsRow> rows;
  for (int m = d.m_min; m <= d.m_max; ++m) {
    std::vector<int> widths(static_cast<std::size_t>(d.depth + 1), m);
    widths.front() = d.a;
    widths.back() = d.b;
    DimsRow row{m, dimensions(NetworkShape(widths), d.n), ""};
    if (m == d.n) row.note = "boundary: m = n, bound (m+1-n)b = b";
    if (m < d.n) row.note = "m < n: width hypothesis fails, bound not applicable";
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string dims_csv(const std::vector<DimsRow>& rows) {
  std::ostringstream out;
  out << "m,d,dim_M,dim_S_max,dim_S_closed_form,dim_C,dim_C_closed_form,zero_eig_C_closed_form,zero_eig_C,"
         "zero_eig_M,bound_other,star_discrepancy,core_discrepancy,dim_M_minus_dim_S\n";
  auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); };
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << row.m << ',' << r.param_count << ',' << r.global_min_dim << ',' << r.star_max << ','
        << opt(r.star_closed_form) << ',' << opt(r.core_max) << ',' << opt(r.core_closed_form) << ','
        << r.core_zero_eigs_closed_form << ',' << r.core_zero_eigs << ',' << r.global_min_zero_eigs << ','
        << r.other_zero_eigs_bound << ',' << (r.star_discrepancy() ? 1 : 0) << ','
        << (r.core_discrepancy() ? 1 : 0) << ','
        << (r.star_closed_form ? std::to_string(r.global_min_dim - *r.star_closed_form) : std::string()) << '\n';
  }
  return out.str();
}

inline Report cmd_dims(const RunConfig& c, const RunContext& = {}) {
  Report rep;
  const auto rows = dims_rows(c.dims);
  json table = json::array();
  bool closed_forms_agree = true;
  std::optional<int> prev_gap;
  for (const auto& row : rows) {
    const auto& r = row.report;
    auto opt = [](const std::optional<int>& v) { return v ? json(*v) : json(nullptr); };
    json star = json::object();
    for (const auto& [k, v] : r.star) star[std::to_string(k)] = v;
    json core = json::object();
    for (const auto& [ij, v] : r.core) core[std::to_string(ij.first) + "," + std::to_string(ij.second)] = v;
    json j = {{"m", row.m},
              {"d", r.param_count},
              {"dim_M", r.global_min_dim},
              {"dim_S_per_k", star},
              {"dim_S_max", r.star_max},
              {"dim_S_closed_form", opt(r.star_closed_form)},
              {"dim_C_per_pair", core},
              {"dim_C", opt(r.core_max)},
              {"dim_C_closed_form", opt(r.core_closed_form)},
              {"zero_eig_C_closed_form", r.core_zero_eigs_closed_form},
              {"zero_eig_C", r.core_zero_eigs},
              {"zero_eig_M", r.global_min_zero_eigs},
              {"bound_other", r.other_zero_eigs_bound},
              {"star_discrepancy", r.star_discrepancy()},
              {"core_discrepancy", r.core_discrepancy()}};
    if (r.star_closed_form) {
      const int gap = r.global_min_dim - *r.star_closed_form;
      j["dim_M_minus_dim_S"] = gap;
      j["gap_increment"] = prev_gap ? json(gap - *prev_gap) : json(nullptr);
      prev_gap = gap;
    }
    if (!row.note.empty()) j["note"] = row.note;
    table.push_back(j);
    closed_forms_agree = closed_forms_agree && r.param_count_closed_form == r.param_count &&
                         r.global_min_closed_form == r.global_min_dim;
  }
  rep.results["rows"] = table;
  rep.check("closed forms for d and dim(M) match coordinate counts", closed_forms_agree);
  return rep;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

inline Report run_command(const RunConfig& c, const RunContext& ctx = {}) {
  const auto start = std::chrono::steady_clock::now();
  Report rep;
  if (c.command == "verify-star") rep = cmd_verify_star(c, ctx);
  else if (c.command == "verify-core") rep = cmd_verify_core(c, ctx);
  else if (c.command == "spectrum") rep = cmd_spectrum(c, ctx);
  else if (c.command == "fiber") rep = cmd_fiber(c, ctx);
  else if (c.command == "flow") rep = cmd_flow(c, ctx);
  else if (c.command == "dims") rep = cmd_dims(c, ctx);
  else throw ArgumentError("unknown command '" + c.command + "'");
  rep.command = c.command;
  rep.config = to_json(c);
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

/// Accepts a plain config or a previous report, whose embedded config is used.
inline json extract_config(const json& document) {
  if (document.is_object() && document.contains("tool") && document.contains("config")) {
    return document.at("config");
  }
  return document;
}

}  // namespace critlab
