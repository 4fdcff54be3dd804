#pragma once

#include <Eigen/SVD>

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "critlab/deriv.hpp"
#include "critlab/network.hpp"
#include "critlab/spectral.hpp"

namespace critlab {

/// L restricted to the fiber through p: all layers but the last held fixed.
///
/// With W = [M_ℓ | b_ℓ] (m_ℓ × (m_{ℓ-1}+1)) the loss on the fiber is
/// ‖W Φ̂ − Y‖²_F. Fiber coordinates are z = vec(W) column-major, so
/// z[k·m_ℓ + j] = W(j, k) and the Hessian is exactly 2(Φ̂Φ̂ᵀ ⊗ I_{m_ℓ}).
class FiberQuadratic {
 public:
  FiberQuadratic(ParamVector point, PhiMatrix phi, MatrixXd targets)
      : point_(std::move(point)), phi_(std::move(phi)), targets_(std::move(targets)) {
    gram_ = phi_.augmented * phi_.augmented.transpose();
  }

  const ParamVector& point() const { return point_; }
  const NetworkShape& shape() const { return point_.shape(); }
  const MatrixXd& features() const { return phi_.features; }
  const MatrixXd& augmented() const { return phi_.augmented; }
  const MatrixXd& gram() const { return gram_; }
  const MatrixXd& targets() const { return targets_; }
  int feature_dim() const { return static_cast<int>(phi_.augmented.rows()); }
  int outputs() const { return static_cast<int>(targets_.rows()); }
  int dimension() const { return feature_dim() * outputs(); }

  MatrixXd final_layer(const ParamVector& p) const {
    const int depth = shape().depth();
    MatrixXd w(outputs(), feature_dim());
    w.leftCols(feature_dim() - 1) = p.weights(depth);
    w.col(feature_dim() - 1) = p.bias(depth);
    return w;
  }
  MatrixXd final_layer() const { return final_layer(point_); }

  VectorXd coordinates(const MatrixXd& layer) const { return Eigen::Map<const VectorXd>(layer.data(), layer.size()); }
  MatrixXd layer_from(const VectorXd& z) const { return Eigen::Map<const MatrixXd>(z.data(), outputs(), feature_dim()); }

  /// Parameter-vector index of fiber coordinate z[index].
  int parameter_index(int index) const {
    const int k = index / outputs();
    const int j = index % outputs();
    const int depth = shape().depth();
    if (k == feature_dim() - 1) return shape().bias_offset(depth) + j;
    return shape().weight_offset(depth) + j * (feature_dim() - 1) + k;
  }

  ParamVector with_final_layer(const MatrixXd& layer) const {
    ParamVector p = point_;
    const int depth = shape().depth();
    p.weights(depth) = layer.leftCols(feature_dim() - 1);
    p.bias(depth) = layer.col(feature_dim() - 1);
    return p;
  }

  /// Lifts a fiber-coordinate vector into parameter space.
  VectorXd to_parameters(const VectorXd& z) const {
    VectorXd out = VectorXd::Zero(shape().param_count());
    for (int t = 0; t < dimension(); ++t) out[parameter_index(t)] = z[t];
    return out;
  }

  double value(const MatrixXd& layer) const { return (layer * phi_.augmented - targets_).squaredNorm(); }

  /// zᵀ(G ⊗ I)z − 2 vec(YΦ̂ᵀ)ᵀz + ‖Y‖², evaluated term by term.
  double quadratic_value(const VectorXd& z) const {
    const VectorXd linear = linear_term();
    return z.dot(kron_gram() * z) + linear.dot(z) + targets_.squaredNorm();
  }

  VectorXd gradient(const VectorXd& z) const { return 2.0 * kron_gram() * z + linear_term(); }

  /// 2(G ⊗ I_{m_ℓ}) in fiber coordinates.
  MatrixXd hessian() const { return 2.0 * kron(gram_); }

  /// Hessian over the M_ℓ coordinates only, b_ℓ frozen: 2(ΦΦᵀ ⊗ I_{m_ℓ}).
  MatrixXd weight_hessian() const { return 2.0 * kron(phi_.features * phi_.features.transpose()); }

 private:
  MatrixXd kron(const MatrixXd& g) const {
    const int b = outputs();
    MatrixXd out = MatrixXd::Zero(g.rows() * b, g.cols() * b);
    for (Eigen::Index k = 0; k < g.rows(); ++k) {
      for (Eigen::Index l = 0; l < g.cols(); ++l) {
        for (int j = 0; j < b; ++j) out(k * b + j, l * b + j) = g(k, l);
      }
    }
    return out;
  }
  MatrixXd kron_gram() const { return kron(gram_); }
  VectorXd linear_term() const {
    const MatrixXd cross = targets_ * phi_.augmented.transpose();
    return -2.0 * Eigen::Map<const VectorXd>(cross.data(), cross.size());
  }

  ParamVector point_;
  PhiMatrix phi_;
  MatrixXd targets_;
  MatrixXd gram_;
};

inline FiberQuadratic build_fiber(const ParamVector& p, const Dataset& data, const Activation& act) {
  return {p, phi_matrix(p, data, act), data.targets()};
}

struct FiberMinimum {
  MatrixXd layer;        ///< minimum-norm minimizer W*
  VectorXd coordinates;  ///< vec(W*)
  double loss = 0.0;
  int rank_hat = 0;      ///< rank Φ̂
  MatrixXd left_null;    ///< orthonormal basis of {u : uᵀΦ̂ = 0}
  MatrixXd null_basis;   ///< orthonormal columns in fiber coordinates spanning null(H_F)
};

/// Minimum-norm least squares over the final layer via the SVD pseudoinverse.
inline FiberMinimum fiber_minimize(const FiberQuadratic& fq, std::optional<double> tau_rank = std::nullopt) {
  const MatrixXd& phi_hat = fq.augmented();
  Eigen::JacobiSVD<MatrixXd> svd(phi_hat, Eigen::ComputeFullU | Eigen::ComputeThinV);
  const VectorXd& sv = svd.singularValues();
  const double tau = tau_rank.value_or(default_tau_rank(phi_hat));
  FiberMinimum out;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv[i] > tau * sv[0]) ++out.rank_hat;
  }
  const int r = out.rank_hat;
  const MatrixXd& u = svd.matrixU();
  const MatrixXd& v = svd.matrixV();
  MatrixXd pinv = MatrixXd::Zero(phi_hat.cols(), phi_hat.rows());
  for (int i = 0; i < r; ++i) pinv += v.col(i) * (u.col(i).transpose() / sv[i]);
  out.layer = fq.targets() * pinv;
  out.coordinates = fq.coordinates(out.layer);
  out.loss = fq.value(out.layer);

  const int b = fq.outputs();
  const int left_null = fq.feature_dim() - r;
  out.left_null = u.rightCols(left_null);
  out.null_basis = MatrixXd::Zero(fq.dimension(), left_null * b);
  for (int t = 0; t < left_null; ++t) {
    for (int j = 0; j < b; ++j) {
      for (int k = 0; k < fq.feature_dim(); ++k) out.null_basis(k * b + j, t * b + j) = u(k, r + t);
    }
  }
  return out;
}

struct DescentOptions {
  int samples = 50;
  std::optional<double> tau_rank;
  double fit_tolerance = 1e-9;
  double endpoint_tolerance = 1e-18;
};

/// Straight segment in the fiber from p to its nearest global minimizer.
struct DescentLine {
  ParamVector start;
  ParamVector end;
  std::vector<double> t;
  std::vector<double> losses;
  double fit_c0 = 0.0, fit_c1 = 0.0, fit_c2 = 0.0;  ///< L(t) ≈ c0 + c1 t + c2 t²
  double fit_residual = 0.0;                          ///< ‖L − fit‖ / ‖L‖
  bool strictly_decreasing = false;
  bool fit_slope_negative = false;
  double endpoint_loss = 0.0;
  bool pass = false;
};

inline DescentLine descent_line(const ParamVector& p, const Dataset& data, const Activation& act,
                                const DescentOptions& options = {}) {
  if (options.samples < 3) throw ArgumentError("descent line needs at least three samples");
  const FiberQuadratic fq = build_fiber(p, data, act);
  const FiberMinimum fmin = fiber_minimize(fq, options.tau_rank);
  if (fmin.rank_hat != data.size()) {
    throw PreconditionError("descent line needs full-rank features: rank(Phi_hat) = " +
                            std::to_string(fmin.rank_hat) + " < n = " + std::to_string(data.size()));
  }
  // Nearest minimizer: keep the left-null component of the current layer.
  const MatrixXd& null_u = fmin.left_null;
  const MatrixXd w0 = fq.final_layer();
  const MatrixXd w1 = fmin.layer + (w0 - fmin.layer) * null_u * null_u.transpose();
  if ((w0 - w1).norm() <= 1e-12 * std::max(1.0, w0.norm())) {
    throw DegenerateLineError("point is already a fiber minimizer");
  }

  DescentLine line{.start = p, .end = fq.with_final_layer(w1), .t = {}, .losses = {}};
  const int count = options.samples;
  for (int s = 0; s < count; ++s) {
    const double t = static_cast<double>(s) / (count - 1);
    line.t.push_back(t);
    line.losses.push_back(loss(fq.with_final_layer(w0 + t * (w1 - w0)), data, act));
  }
  line.endpoint_loss = line.losses.back();
  line.strictly_decreasing = true;
  for (int s = 1; s < count; ++s) {
    if (!(line.losses[s] < line.losses[s - 1])) line.strictly_decreasing = false;
  }

  MatrixXd design(count, 3);
  VectorXd values(count);
  for (int s = 0; s < count; ++s) {
    design(s, 0) = 1.0;
    design(s, 1) = line.t[s];
    design(s, 2) = line.t[s] * line.t[s];
    values[s] = line.losses[s];
  }
  const VectorXd coef = design.colPivHouseholderQr().solve(values);
  line.fit_c0 = coef[0];
  line.fit_c1 = coef[1];
  line.fit_c2 = coef[2];
  line.fit_residual = (design * coef - values).norm() / std::max(values.norm(), 1e-300);
  // dL/dt = c1 + 2 c2 t must be negative on [0, 1); it reaches 0 at the minimizer.
  const double slope_slack = 1e-9 * std::max(1.0, std::abs(coef[1]));
  line.fit_slope_negative = coef[1] < 0 && coef[1] + 2.0 * coef[2] <= slope_slack;
  line.pass = line.strictly_decreasing && line.fit_slope_negative && line.fit_residual <= options.fit_tolerance &&
              line.endpoint_loss <= options.endpoint_tolerance;
  return line;
}

struct WitnessOptions {
  int probes = 20;
  std::uint64_t seed = 0;
  double probe_scale = 1.0;
  double gradient_tolerance = 1e-6;
  double relative_tolerance = 1e-9;  ///< |ΔL| ≤ tol·max(1, L(p))
  std::optional<double> tau_rank;
};

struct LevelSetWitness {
  int dimension = 0;          ///< (m_{ℓ-1} + 1 − r̂)·m_ℓ
  int dimension_r_form = 0;   ///< (m_{ℓ-1} + 1 − r)·m_ℓ, informational
  int rank_phi = 0;
  int rank_phi_hat = 0;
  MatrixXd basis;             ///< d × dimension, orthonormal, parameter coordinates
  double base_loss = 0.0;
  double max_delta = 0.0;
  double tolerance = 0.0;
  bool full_slice_constant = false;  ///< L constant on the whole fiber
  int reported_dimension = 0;        ///< full fiber dimension when constant there
  bool pass = false;
};

/// Linear subspace through a critical point on which L is constant.
inline LevelSetWitness level_set_witness(const ParamVector& p, const Dataset& data, const Activation& act,
                                         const WitnessOptions& options = {}) {
  const double grad_inf = gradient(p, data, act).cwiseAbs().maxCoeff();
  if (grad_inf > options.gradient_tolerance) {
    throw NotCriticalError("not a critical point: max |dL| = " + std::to_string(grad_inf));
  }
  const FiberQuadratic fq = build_fiber(p, data, act);
  const FiberMinimum fmin = fiber_minimize(fq, options.tau_rank);

  LevelSetWitness w;
  w.rank_phi_hat = fmin.rank_hat;
  w.rank_phi = rank_of(fq.features(), options.tau_rank).rank;
  w.dimension = static_cast<int>(fmin.null_basis.cols());
  w.dimension_r_form = (fq.feature_dim() - w.rank_phi) * fq.outputs();
  w.basis = MatrixXd(p.size(), w.dimension);
  for (int c = 0; c < w.dimension; ++c) w.basis.col(c) = fq.to_parameters(fmin.null_basis.col(c));
  w.base_loss = loss(p, data, act);
  w.tolerance = options.relative_tolerance * std::max(1.0, w.base_loss);

  auto gen = rng_stream(options.seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto probe_delta = [&](const VectorXd& direction) {
    const ParamVector q(p.shape(), p.data() + direction);
    return std::abs(loss(q, data, act) - w.base_loss);
  };
  if (w.dimension > 0) {
    for (int s = 0; s < options.probes; ++s) {
      VectorXd c(w.dimension);
      for (auto& x : c) x = options.probe_scale * normal(gen);
      w.max_delta = std::max(w.max_delta, probe_delta(w.basis * c));
    }
  }
  w.full_slice_constant = true;
  for (int s = 0; s < options.probes; ++s) {
    VectorXd z(fq.dimension());
    for (auto& x : z) x = options.probe_scale * normal(gen);
    if (probe_delta(fq.to_parameters(z)) > w.tolerance) {
      w.full_slice_constant = false;
      break;
    }
  }
  w.reported_dimension = w.full_slice_constant ? fq.dimension() : w.dimension;
  w.pass = w.max_delta <= w.tolerance;
  return w;
}

struct NonIsolationOptions {
  double gradient_tolerance = 1e-6;
  double min_eigenvalue = -1e-8;     ///< local-minimum screen
  double relative_tolerance = 1e-10;  ///< |L(q) − L(p)| ≤ tol·max(1, L(p))
  std::optional<double> tau_rank;
  int jobs = 1;
};

struct NonIsolationWitness {
  VectorXd q;
  double distance = 0.0;
  double delta_loss = 0.0;
  double tolerance = 0.0;
  double grad_inf = 0.0;
  double min_eigenvalue = 0.0;
  /// No flat direction exists; under the width hypothesis this would contradict the level-set bound.
  bool falsified = false;
  bool pass = false;
};

/// A point q ≠ p within ε of a local-minimum candidate p with L(q) = L(p).
inline NonIsolationWitness nonisolation_witness(const ParamVector& p, const Dataset& data, const Activation& act,
                                                double epsilon, const NonIsolationOptions& options = {}) {
  if (!(epsilon > 0.0)) throw ArgumentError("epsilon must be > 0");
  const int m = p.shape().last_hidden_width();
  if (m <= data.size()) {
    throw PreconditionError("non-isolation needs last hidden width > n: " + std::to_string(m) +
                            " <= " + std::to_string(data.size()));
  }
  NonIsolationWitness w;
  w.grad_inf = gradient(p, data, act).cwiseAbs().maxCoeff();
  if (w.grad_inf > options.gradient_tolerance) {
    throw NotCriticalError("not a critical point: max |dL| = " + std::to_string(w.grad_inf));
  }
  HessianOptions hopt;
  hopt.jobs = options.jobs;
  w.min_eigenvalue = jacobi_eigen(hessian(p, data, act, hopt)).values[0];
  if (w.min_eigenvalue < options.min_eigenvalue) {
    throw PreconditionError("not a local-minimum candidate: min eigenvalue " + std::to_string(w.min_eigenvalue));
  }
  const FiberQuadratic fq = build_fiber(p, data, act);
  const FiberMinimum fmin = fiber_minimize(fq, options.tau_rank);
  const double base = loss(p, data, act);
  w.tolerance = options.relative_tolerance * std::max(1.0, base);
  if (fmin.null_basis.cols() == 0) {
    w.falsified = true;
    w.q = p.data();
    return w;
  }
  const VectorXd direction = fq.to_parameters(fmin.null_basis.col(0));
  w.q = p.data() + 0.5 * epsilon * direction;
  w.distance = (w.q - p.data()).norm();
  w.delta_loss = std::abs(loss(ParamVector(p.shape(), w.q), data, act) - base);
  w.pass = w.distance > 0.0 && w.distance <= epsilon && w.delta_loss <= w.tolerance;
  return w;
}

}  // namespace critlab
