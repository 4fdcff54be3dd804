#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "critlab/deriv.hpp"
#include "critlab/loci.hpp"
#include "critlab/network.hpp"
#include "critlab/parallel.hpp"

namespace critlab {

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition
// ---------------------------------------------------------------------------

struct EigenDecomposition {
  VectorXd values;   ///< ascending
  MatrixXd vectors;  ///< column i pairs with values[i]
  int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for dense symmetric matrices.
///
/// Sweeps until the off-diagonal Frobenius norm drops below
/// `off_tolerance`·‖A‖_F. The input is symmetrized first. Jacobi keeps small
/// eigenvalues accurate relative to ‖A‖, which the zero counts rely on.
inline EigenDecomposition jacobi_eigen(const MatrixXd& input, double off_tolerance = 1e-14,
                                       int max_sweeps = 100) {
  if (input.rows() != input.cols()) throw ShapeError("eigensolver needs a square matrix");
  if (!input.allFinite()) throw NumericError("matrix has non-finite entries");
  const Eigen::Index n = input.rows();
  MatrixXd a = 0.5 * (input + input.transpose());
  MatrixXd v = MatrixXd::Identity(n, n);
  const double target = off_tolerance * a.norm();

  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (i != j) s += a(i, j) * a(i, j);
      }
    }
    return std::sqrt(s);
  };

  int sweeps = 0;
  while (sweeps < max_sweeps && off_norm() > target) {
    ++sweeps;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = a(p, k) = c * akp - s * akq;
          a(k, q) = a(q, k) = s * akp + c * akq;
        }
        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return a(i, i) < a(j, j); });
  EigenDecomposition out{VectorXd(n), MatrixXd(n, n), sweeps};
  for (Eigen::Index r = 0; r < n; ++r) {
    out.values[r] = a(order[r], order[r]);
    out.vectors.col(r) = v.col(order[r]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectrum classification and numerical rank
// ---------------------------------------------------------------------------

inline constexpr double kDefaultTauZero = 1e-7;

struct SpectrumOptions {
  double tau_zero = kDefaultTauZero;  ///< relative to max(1, spectral radius)
  double floor = 1e-12;               ///< absolute lower bound on the zero threshold
};

struct HessianSpectrum {
  VectorXd eigenvalues;  ///< ascending
  int zero_count = 0;
  int positive_count = 0;
  int negative_count = 0;
  double tau_zero = 0.0;
  double threshold = 0.0;  ///< absolute |λ| cut actually applied

  int size() const { return static_cast<int>(eigenvalues.size()); }
  double min() const { return eigenvalues.size() ? eigenvalues[0] : 0.0; }
  double max() const { return eigenvalues.size() ? eigenvalues[eigenvalues.size() - 1] : 0.0; }
};

/// Classifies eigenvalues of a sorted spectrum: |λ| ≤ max(τ·max(1, ρ), floor) is zero.
inline HessianSpectrum classify_spectrum(VectorXd eigenvalues, const SpectrumOptions& options = {}) {
  HessianSpectrum s;
  s.eigenvalues = std::move(eigenvalues);
  s.tau_zero = options.tau_zero;
  const double radius = s.eigenvalues.size() ? s.eigenvalues.cwiseAbs().maxCoeff() : 0.0;
  s.threshold = std::max(options.tau_zero * std::max(1.0, radius), options.floor);
  for (Eigen::Index i = 0; i < s.eigenvalues.size(); ++i) {
    const double lambda = s.eigenvalues[i];
    if (std::abs(lambda) <= s.threshold) {
      ++s.zero_count;
    } else if (lambda > 0) {
      ++s.positive_count;
    } else {
      ++s.negative_count;
    }
  }
  return s;
}

inline HessianSpectrum spectrum(const MatrixXd& h, const SpectrumOptions& options = {}) {
  return classify_spectrum(jacobi_eigen(h).values, options);
}

struct RankResult {
  VectorXd singular_values;  ///< descending
  int rank = 0;
  double tau_rank = 0.0;
};

/// Default relative rank tolerance max(rows, cols)·ε.
inline double default_tau_rank(const MatrixXd& m) {
  return static_cast<double>(std::max(m.rows(), m.cols())) * std::numeric_limits<double>::epsilon();
}

/// rank = #{σ_i > τ·σ_max}.
inline RankResult rank_of(const MatrixXd& m, std::optional<double> tau_rank = std::nullopt) {
  RankResult r;
  r.tau_rank = tau_rank.value_or(default_tau_rank(m));
  if (m.size() == 0) return r;
  if (!m.allFinite()) throw NumericError("matrix has non-finite entries");
  r.singular_values = Eigen::JacobiSVD<MatrixXd>(m).singularValues();
  const double cut = r.tau_rank * r.singular_values[0];
  for (Eigen::Index i = 0; i < r.singular_values.size(); ++i) {
    if (r.singular_values[i] > cut) ++r.rank;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Theorem verifiers
// ---------------------------------------------------------------------------

struct StarOptions {
  double scale = 1.0;
  BiasTarget bias_target = BiasTarget::Mean;
  double threshold = 1e-8;  ///< pass iff max ‖∇L‖_∞ ≤ threshold
  int jobs = 1;
};

struct StarReport {
  int k = 0;
  int samples = 0;
  double max_grad_inf = 0.0;
  int worst_sample = 0;
  /// ‖∂L/∂b_ℓ‖_∞ at the worst sample; the only coordinate that can move.
  double output_bias_grad_inf = 0.0;
  bool pass = false;
};

/// Samples S_k and checks that every draw is a critical point of L.
inline StarReport verify_star(const NetworkShape& shape, const Dataset& data, const Activation& act, int k,
                              int count, std::uint64_t seed, const StarOptions& options = {}) {
  if (shape.depth() < 3) {
    throw HypothesisError("star-locus criticality needs depth >= 3, got " + std::to_string(shape.depth()));
  }
  const LocusSpec spec = make_locus(shape, data, LocusKind::star(k), options.bias_target);
  const auto points = sample_locus(spec, count, seed, options.scale);
  std::vector<VectorXd> grads(points.size());
  parallel_for(count, options.jobs, [&](int s) { grads[s] = gradient(points[s], data, act); });

  StarReport r;
  r.k = k;
  r.samples = count;
  for (int s = 0; s < count; ++s) {
    const double g = grads[s].cwiseAbs().maxCoeff();
    if (s == 0 || g > r.max_grad_inf) {
      r.max_grad_inf = g;
      r.worst_sample = s;
    }
  }
  r.output_bias_grad_inf =
      grads[r.worst_sample].segment(shape.bias_offset(shape.depth()), shape.output_dim()).cwiseAbs().maxCoeff();
  r.pass = r.max_grad_inf <= options.threshold;
  return r;
}

struct CoreOptions {
  double scale = 1.0;
  BiasTarget bias_target = BiasTarget::Mean;
  double eigen_tolerance = 1e-6;  ///< distance of the output-bias eigenvalues from 2n
  double zero_tolerance = 1e-8;   ///< |λ| bound for every other eigenvalue
  int jobs = 1;
};

struct CoreSample {
  VectorXd top_eigenvalues;  ///< the m_ℓ largest, ascending
  int near_2n_count = 0;
  int zero_count = 0;
  double max_abs_other = 0.0;
  double min_eigenvalue = 0.0;
  bool pass = false;
};

struct CoreReport {
  std::vector<int> indices;
  double expected_eigenvalue = 0.0;  ///< 2n
  int expected_copies = 0;           ///< m_ℓ
  std::vector<CoreSample> samples;
  bool pass = false;
};

inline CoreSample classify_core_spectrum(const VectorXd& eigenvalues, double expected, int copies,
                                         const CoreOptions& options) {
  CoreSample c;
  const Eigen::Index d = eigenvalues.size();
  c.top_eigenvalues = eigenvalues.tail(std::min<Eigen::Index>(copies, d));
  c.min_eigenvalue = d ? eigenvalues[0] : 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double lambda = eigenvalues[i];
    if (std::abs(lambda - expected) <= options.eigen_tolerance) {
      ++c.near_2n_count;
    } else {
      c.max_abs_other = std::max(c.max_abs_other, std::abs(lambda));
      if (std::abs(lambda) <= options.zero_tolerance) ++c.zero_count;
    }
  }
  c.pass = c.near_2n_count == copies && c.zero_count == d - copies && c.min_eigenvalue >= -options.zero_tolerance;
  return c;
}

/// Samples C_{k_1..k_m} and checks the Hessian spectrum at every draw:
/// m_ℓ eigenvalues at 2n, all others zero.
inline CoreReport verify_core(const NetworkShape& shape, const Dataset& data, const Activation& act,
                              const std::vector<int>& indices, int count, std::uint64_t seed,
                              const CoreOptions& options = {}) {
  if (shape.depth() < 4) {
    throw HypothesisError("core-locus degeneracy needs depth >= 4, got " + std::to_string(shape.depth()));
  }
  if (indices.size() < 2) throw ArgumentError("core locus needs at least two indices");
  const LocusSpec spec = make_locus(shape, data, LocusKind::core(indices), options.bias_target);
  const auto points = sample_locus(spec, count, seed, options.scale);

  CoreReport r;
  r.indices = spec.indices();
  r.expected_eigenvalue = 2.0 * data.size();
  r.expected_copies = shape.output_dim();
  r.samples.resize(points.size());
  parallel_for(count, options.jobs, [&](int s) {
    const VectorXd values = jacobi_eigen(hessian(points[s], data, act)).values;
    r.samples[s] = classify_core_spectrum(values, r.expected_eigenvalue, r.expected_copies, options);
  });
  r.pass = std::all_of(r.samples.begin(), r.samples.end(), [](const CoreSample& c) { return c.pass; });
  return r;
}

struct ZeroEigOptions {
  SpectrumOptions spectrum;
  std::optional<double> tau_rank;
  double gradient_tolerance = 1e-6;
  int jobs = 1;
};

struct ZeroEigReport {
  double grad_inf = 0.0;
  HessianSpectrum spectrum;
  int rank_phi = 0;      ///< r = rank Φ
  int rank_phi_hat = 0;  ///< r̂ = rank Φ̂
  int bound_r = 0;       ///< (m_{ℓ-1} + 1 − r)·m_ℓ
  int bound_r_hat = 0;   ///< (m_{ℓ-1} + 1 − r̂)·m_ℓ
  int uniform_bound = 0; ///< (m_{ℓ-1} + 1 − n)·m_ℓ
  bool satisfied = false;          ///< zero_count ≥ bound_r_hat
  bool satisfied_r = false;        ///< zero_count ≥ bound_r
  bool satisfied_uniform = false;  ///< zero_count ≥ uniform_bound
};

/// Zero-eigenvalue count at a critical point against the level-set bounds.
inline ZeroEigReport zero_eig_bound_check(const ParamVector& p, const Dataset& data, const Activation& act,
                                          const ZeroEigOptions& options = {}) {
  ZeroEigReport r;
  r.grad_inf = gradient(p, data, act).cwiseAbs().maxCoeff();
  if (r.grad_inf > options.gradient_tolerance) {
    throw NotCriticalError("not a critical point: max |dL| = " + std::to_string(r.grad_inf));
  }
  HessianOptions hopt;
  hopt.jobs = options.jobs;
  SpectrumOptions sopt = options.spectrum;
  sopt.floor = std::max(sopt.floor, std::max(1, data.size()) * 1e-12);
  r.spectrum = spectrum(hessian(p, data, act, hopt), sopt);

  const PhiMatrix phi = phi_matrix(p, data, act);
  r.rank_phi = rank_of(phi.features, options.tau_rank).rank;
  r.rank_phi_hat = rank_of(phi.augmented, options.tau_rank).rank;
  const int m = p.shape().last_hidden_width();
  const int b = p.shape().output_dim();
  r.bound_r = (m + 1 - r.rank_phi) * b;
  r.bound_r_hat = (m + 1 - r.rank_phi_hat) * b;
  r.uniform_bound = (m + 1 - data.size()) * b;
  r.satisfied = r.spectrum.zero_count >= r.bound_r_hat;
  r.satisfied_r = r.spectrum.zero_count >= r.bound_r;
  r.satisfied_uniform = r.spectrum.zero_count >= r.uniform_bound;
  return r;
}

struct FullRankReport {
  int draws = 0;
  int full_rank = 0;      ///< draws with rank Φ̂ = min(n, m_{ℓ-1} + 1)
  int expected_rank = 0;
  double fraction = 0.0;
};

/// Monte-Carlo frequency of full-rank Φ̂ over random hidden parameters.
inline FullRankReport full_rank_fraction(const NetworkShape& shape, const Dataset& data, const Activation& act,
                                         int draws, std::uint64_t seed, double scale = 1.0,
                                         std::optional<double> tau_rank = std::nullopt, int jobs = 1) {
  data.check_compatible(shape);
  if (!data.inputs_distinct()) {
    throw PreconditionError("full-rank sampling assumes pairwise distinct inputs");
  }
  if (draws < 1) throw ArgumentError("draw count must be >= 1");
  FullRankReport r;
  r.draws = draws;
  r.expected_rank = std::min(data.size(), shape.last_hidden_width() + 1);
  std::vector<int> ranks(static_cast<std::size_t>(draws));
  parallel_for(draws, jobs, [&](int s) {
    const ParamVector p = random_params(shape, splitmix64(seed) + static_cast<std::uint64_t>(s), scale);
    ranks[s] = rank_of(phi_matrix(p, data, act).augmented, tau_rank).rank;
  });
  r.full_rank = static_cast<int>(std::count(ranks.begin(), ranks.end(), r.expected_rank));
  r.fraction = static_cast<double>(r.full_rank) / draws;
  return r;
}

}  // namespace critlab
