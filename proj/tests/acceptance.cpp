#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "critlab/fiber.hpp"
#include "critlab/flow.hpp"
#include "critlab/report.hpp"

using namespace critlab;

namespace {

struct Case {
  NetworkShape shape;
  Dataset data;
};

Dataset d0() {
  MatrixXd x(2, 2);
  x << 1, 0, 0, 1;
  MatrixXd y(1, 2);
  y << 1, 3;
  return {x, y};
}

NetworkShape net(std::vector<int> widths) { return NetworkShape(std::move(widths)); }

Case make_case(std::vector<int> widths, int n, std::uint64_t seed) {
  NetworkShape shape = net(std::move(widths));
  if (n == 2 && shape.input_dim() == 2 && shape.output_dim() == 1) return {shape, d0()};
  return {shape, random_dataset(shape.input_dim(), shape.output_dim(), n, seed)};
}

std::string label(const NetworkShape& s, int n) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < s.widths().size(); ++i) out << (i ? "," : "") << s.widths()[i];
  out << ") n=" << n;
  return out.str();
}

int jobs() { return std::max(1, static_cast<int>(std::thread::hardware_concurrency())); }

double entrywise_relative_error(const MatrixXd& a, const MatrixXd& b) {
  return ((a - b).cwiseAbs().array() / b.cwiseAbs().array().max(1.0)).maxCoeff();
}

struct Outcome {
  bool pass = true;
  std::string detail;
  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

const Activation kTanh;

Outcome star_criticality() {
  Outcome o;
  double worst = 0.0;
  int sampled = 0;
  for (const auto& widths : {std::vector<int>{2, 3, 3, 3, 1}, {2, 4, 4, 4, 4, 2}, {3, 5, 5, 1}}) {
    for (int n : {2, 5}) {
      const Case c = make_case(widths, n, 100 + n);
      for (int k = 1; k <= c.shape.depth() - 1; ++k) {
        const StarReport r = verify_star(c.shape, c.data, kTanh, k, 100, 17 * k + n, {.jobs = jobs()});
        sampled += r.samples;
        worst = std::max(worst, r.max_grad_inf);
        if (!r.pass) o.fail(label(c.shape, n) + " S_" + std::to_string(k) + " max|grad| " + std::to_string(r.max_grad_inf));
        StarOptions sum;
        sum.bias_target = BiasTarget::Sum;
        const StarReport control = verify_star(c.shape, c.data, kTanh, k, 10, 5 * k + n, sum);
        if (control.pass) o.fail(label(c.shape, n) + " S_" + std::to_string(k) + " sum-bias control did not fail");
      }
    }
  }
  if (o.pass) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%d star points, max |grad|_inf %.2e <= 1e-8; sum-bias controls fail", sampled, worst);
    o.detail = buf;
  }
  return o;
}

Outcome core_spectrum() {
  Outcome o;
  int sampled = 0;
  double worst_top = 0.0;
  double worst_other = 0.0;
  for (const auto& widths : {std::vector<int>{2, 3, 3, 3, 1}, {2, 4, 4, 4, 4, 2}}) {
    for (int n : {2, 5}) {
      const Case c = make_case(widths, n, 200 + n);
      const int depth = c.shape.depth();
      for (int i = 1; i <= depth - 1; ++i) {
        for (int j = i + 1; j <= depth - 1; ++j) {
          const CoreReport r = verify_core(c.shape, c.data, kTanh, {i, j}, 50, 31 * i + j + n, {.jobs = jobs()});
          for (const auto& s : r.samples) {
            ++sampled;
            worst_top = std::max(worst_top, (s.top_eigenvalues.array() - r.expected_eigenvalue).abs().maxCoeff());
            worst_other = std::max(worst_other, s.max_abs_other);
            if (s.min_eigenvalue < -1e-8) o.fail(label(c.shape, n) + " negative eigenvalue");
          }
          if (!r.pass) o.fail(label(c.shape, n) + " C_" + std::to_string(i) + "," + std::to_string(j) + " spectrum mismatch");
        }
      }
    }
  }
  if (o.pass) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%d core points, m_out eigenvalues within %.1e of 2n, others |l| <= %.1e",
                  sampled, worst_top, worst_other);
    o.detail = buf;
  }
  return o;
}

Outcome derivative_exactness() {
  Outcome o;
  double g_err = 0.0;
  double h_err = 0.0;
  const std::vector<Case> cases = {make_case({2, 3, 3, 3, 1}, 2, 0), make_case({3, 5, 5, 1}, 5, 301),
                                   make_case({2, 4, 4, 4, 4, 2}, 5, 302), make_case({2, 3, 2}, 3, 303)};
  for (int s = 0; s < 100; ++s) {
    const Case& c = cases[static_cast<std::size_t>(s) % cases.size()];
    const ParamVector p = random_params(c.shape, 1000 + s);
    g_err = std::max(g_err, max_relative_error(gradient(p, c.data, kTanh), fd_gradient(p, c.data, kTanh)));
    h_err = std::max(h_err, entrywise_relative_error(hessian(p, c.data, kTanh), fd_hessian(p, c.data, kTanh)));
  }
  if (g_err > 1e-6) o.fail("gradient rel. error " + std::to_string(g_err));
  if (h_err > 1e-5) o.fail("Hessian rel. error " + std::to_string(h_err));
  char buf[160];
  std::snprintf(buf, sizeof buf, "100 points, gradient rel. error %.2e <= 1e-6, Hessian %.2e <= 1e-5", g_err, h_err);
  if (o.pass) o.detail = buf;
  return o;
}

Outcome fiber_structure() {
  Outcome o;
  double q_err = 0.0;
  double h_err = 0.0;
  const std::vector<Case> cases = {make_case({2, 3, 3, 3, 1}, 2, 0), make_case({3, 5, 5, 1}, 5, 401),
                                   make_case({2, 4, 4, 4, 4, 2}, 2, 402), make_case({2, 3, 2}, 6, 403)};
  for (int s = 0; s < 100; ++s) {
    const Case& c = cases[static_cast<std::size_t>(s) % cases.size()];
    const ParamVector p = random_params(c.shape, 2000 + s);
    const FiberQuadratic fq = build_fiber(p, c.data, kTanh);
    const ParamVector probe_params = random_params(c.shape, 3000 + s);
    for (const MatrixXd& w : {fq.final_layer(), fq.final_layer(probe_params)}) {
      const double truth = loss(fq.with_final_layer(w), c.data, kTanh);
      q_err = std::max(q_err, std::abs(fq.quadratic_value(fq.coordinates(w)) - truth) / std::max(truth, 1e-300));
    }
    const MatrixXd full = hessian(p, c.data, kTanh);
    MatrixXd block(fq.dimension(), fq.dimension());
    for (int r = 0; r < fq.dimension(); ++r) {
      for (int q = 0; q < fq.dimension(); ++q) block(r, q) = full(fq.parameter_index(r), fq.parameter_index(q));
    }
    h_err = std::max(h_err, (block - fq.hessian()).cwiseAbs().maxCoeff());
    const int rank_hat = rank_of(fq.augmented()).rank;
    const int expected_null = (fq.feature_dim() - rank_hat) * fq.outputs();
    const int null_dim = fq.dimension() - rank_of(fq.hessian()).rank;
    const int basis_dim = static_cast<int>(fiber_minimize(fq).null_basis.cols());
    if (null_dim != expected_null || basis_dim != expected_null) {
      o.fail("slice " + std::to_string(s) + " null dimension " + std::to_string(null_dim) + " expected " +
             std::to_string(expected_null));
    }
  }
  if (q_err > 1e-12) o.fail("quadratic rel. error " + std::to_string(q_err));
  if (h_err > 1e-10) o.fail("H_F error " + std::to_string(h_err));
  char buf[200];
  std::snprintf(buf, sizeof buf, "100 slices, quadratic rel. error %.2e <= 1e-12, H_F error %.2e <= 1e-10, null dims exact",
                q_err, h_err);
  if (o.pass) o.detail = buf;
  return o;
}

Outcome uniform_zero_eig_bound() {
  Outcome o;
  int terminals = 0;
  int non_global = 0;
  int min_margin = std::numeric_limits<int>::max();
  const std::vector<Case> cases = {make_case({2, 3, 3, 3, 1}, 2, 0), make_case({2, 4, 4, 1}, 3, 501),
                                   make_case({3, 5, 5, 1}, 4, 502), make_case({2, 4, 4, 4, 2}, 2, 503)};
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const Case& c = cases[ci];
    const Objective obj = make_objective(c.shape, c.data, kTanh);
    std::vector<ParamVector> starts;
    for (double scale : {1.0, 1e-3, 1e-7}) {
      for (int i = 0; i < 6; ++i) starts.push_back(random_params(c.shape, 5000 + 100 * ci + 10 * i + (scale < 1 ? 1 : 0) + (scale < 1e-3 ? 1 : 0), scale));
    }
    for (int i = 0; i < 4; ++i) {
      ParamVector p = sample_locus(make_locus(c.shape, c.data, LocusKind::core({1, 2})), 1, 6000 + 10 * ci + i).front();
      const ParamVector noise = random_params(c.shape, 7000 + 10 * ci + i, 1e-2);
      starts.emplace_back(c.shape, p.data() + noise.data());
    }
    std::vector<FlowResult> results(starts.size());
    parallel_for(static_cast<int>(starts.size()), jobs(),
                 [&](int i) { results[i] = integrate_flow(obj, starts[i].data()); });
    for (const FlowResult& r : results) {
      if (r.status != FlowStatus::ConvergedCritical) continue;
      ++terminals;
      const TerminalClass tc = classify_terminal(ParamVector(c.shape, r.terminal), c.data, kTanh);
      if (tc.tag == LocusTag::GlobalMin) continue;
      ++non_global;
      if (!tc.zero_eig) {
        o.fail(label(c.shape, c.data.size()) + " converged terminal failed the criticality check");
        continue;
      }
      min_margin = std::min(min_margin, tc.zero_eig->spectrum.zero_count - tc.zero_eig->uniform_bound);
      if (!tc.zero_eig->satisfied_uniform) {
        o.fail(label(c.shape, c.data.size()) + " zero_count " + std::to_string(tc.zero_eig->spectrum.zero_count) +
               " < bound " + std::to_string(tc.zero_eig->uniform_bound));
      }
    }
  }
  if (non_global == 0) o.fail("no non-global critical terminal reached");
  if (o.pass) {
    o.detail = std::to_string(terminals) + " converged terminals, " + std::to_string(non_global) +
               " non-global, all zero_count >= (m+1-n)b (min margin " + std::to_string(min_margin) + ")";
  }
  return o;
}

Outcome descent_lines() {
  Outcome o;
  double fit = 0.0;
  double endpoint = 0.0;
  const std::vector<Case> cases = {make_case({2, 3, 3, 3, 1}, 2, 0), make_case({3, 5, 5, 1}, 5, 601),
                                   make_case({2, 4, 4, 4, 4, 2}, 4, 602)};
  for (int s = 0; s < 50; ++s) {
    const Case& c = cases[static_cast<std::size_t>(s) % cases.size()];
    const ParamVector p = random_params(c.shape, 8000 + s);
    const DescentLine line = descent_line(p, c.data, kTanh);
    fit = std::max(fit, line.fit_residual);
    endpoint = std::max(endpoint, line.endpoint_loss);
    if (!line.strictly_decreasing) o.fail("line " + std::to_string(s) + " not strictly decreasing");
    if (!line.pass) o.fail("line " + std::to_string(s) + " failed");
  }
  if (fit > 1e-9) o.fail("fit residual " + std::to_string(fit));
  if (endpoint > 1e-18) o.fail("endpoint loss " + std::to_string(endpoint));
  char buf[200];
  std::snprintf(buf, sizeof buf, "50 lines strictly decreasing, fit residual %.2e <= 1e-9, endpoint loss %.2e <= 1e-18",
                fit, endpoint);
  if (o.pass) o.detail = buf;
  return o;
}

Outcome measure_zero_sampling() {
  Outcome o;
  std::ostringstream detail;
  const std::vector<Case> cases = {make_case({2, 3, 3, 3, 1}, 2, 0), make_case({3, 5, 5, 1}, 5, 701)};
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const Case& c = cases[i];
    const FullRankReport r = full_rank_fraction(c.shape, c.data, kTanh, 1000, 900 + i, 1.0, std::nullopt, jobs());
    if (r.full_rank < 999) o.fail(label(c.shape, c.data.size()) + " full rank in " + std::to_string(r.full_rank) + "/1000");
    detail << (i ? ", " : "") << label(c.shape, c.data.size()) << ' ' << r.full_rank << "/1000";
  }
  if (o.pass) o.detail = detail.str() + " draws full rank";
  return o;
}

Outcome basin_fractions() {
  Outcome o;
  const Box box{VectorXd::Constant(2, -1.0), VectorXd::Constant(2, 1.0)};
  const BasinReport cubic = basin_fraction(make_objective(analytic_function("x3_plus_y3")), box,
                                           near_point(VectorXd::Zero(2)), 10000, 81, {}, jobs());
  const BasinReport square = basin_fraction(make_objective(analytic_function("x2")), box, near_hyperplane(0, 0.0),
                                            10000, 82, {}, jobs());
  const BasinReport saddle = basin_fraction(make_objective(analytic_function("x2_minus_y2")), box,
                                            near_point(VectorXd::Zero(2)), 10000, 83, {}, jobs());
  if (std::abs(cubic.fraction - 0.25) > 3 * cubic.stderr_) o.fail("x^3+y^3 fraction " + std::to_string(cubic.fraction));
  if (square.fraction != 1.0) o.fail("x^2 fraction " + std::to_string(square.fraction));
  if (saddle.fraction > 0.01) o.fail("x^2-y^2 fraction " + std::to_string(saddle.fraction));
  char buf[200];
  std::snprintf(buf, sizeof buf, "x^3+y^3 %.4f +- %.4f (|f-0.25| <= 3 se), x^2 %.4f, x^2-y^2 %.4f", cubic.fraction,
                cubic.stderr_, square.fraction, saddle.fraction);
  if (o.pass) o.detail = buf;
  return o;
}

Outcome dimension_table() {
  Outcome o;
  const auto rows = dims_rows(DimsConfig{.depth = 4, .a = 2, .b = 1, .n = 2, .m_min = 3, .m_max = 3});
  const DimensionReport& r = rows.front().report;
  auto expect = [&](const char* name, int got, int want) {
    if (got != want) o.fail(std::string(name) + " = " + std::to_string(got) + ", expected " + std::to_string(want));
  };
  expect("d", r.param_count, 37);
  expect("dim(M)", r.global_min_dim, 35);
  expect("dim(C)", r.core_max.value_or(-1), 9);
  expect("closed-form dim(S)", r.star_closed_form.value_or(-1), 18);
  expect("mask-max dim(S)", r.star_max, 21);
  if (!r.star_discrepancy()) o.fail("discrepancy flag not set");
  if (o.pass) o.detail = "d 37, dim(M) 35, dim(C) 9, dim(S) closed form 18, mask max 21, discrepancy flagged";
  return o;
}

Outcome determinism() {
  Outcome o;
  const std::filesystem::path dir = CRITLAB_TEST_DATA;
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"verify-star", "star.json"}, {"verify-core", "core.json"}, {"spectrum", "spectrum.json"},
      {"fiber", "fiber.json"},      {"flow", "flow_analytic.json"}, {"flow", "flow_network.json"},
      {"dims", "dims.json"}};
  for (const auto& [command, file] : runs) {
    std::ifstream in(dir / file);
    const json raw = json::parse(in);
    RunContext ctx;
    ctx.jobs = jobs();
    json first = run_command(parse_config(command, raw, dir), ctx).to_json();
    json second = run_command(parse_config(command, extract_config(first), dir), ctx).to_json();
    first.erase("wall_clock_seconds");
    second.erase("wall_clock_seconds");
    if (first.dump(2) != second.dump(2)) o.fail(command + " (" + file + ") re-run differs");
  }
  if (o.pass) o.detail = std::to_string(runs.size()) + " reports re-run from embedded config byte-identical";
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"star criticality", star_criticality},
      {"core spectrum", core_spectrum},
      {"derivative exactness", derivative_exactness},
      {"fiber structure", fiber_structure},
      {"uniform zero-eigenvalue bound", uniform_zero_eig_bound},
      {"descent lines", descent_lines},
      {"measure-zero sampling", measure_zero_sampling},
      {"basin fractions", basin_fractions},
      {"dimension table", dimension_table},
      {"determinism", determinism}};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& [name, fn] = criteria[i];
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    failures += o.pass ? 0 : 1;
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", i + 1, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
