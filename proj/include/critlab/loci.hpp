#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "critlab/network.hpp"

namespace critlab {

enum class LocusType { Star, Core };

/// Which value the output bias is pinned to on a locus.
///
/// Mean is the critical choice. Sum reproduces the literal Σ_α y_α display
/// and exists only as a negative control: it is not critical for n ≥ 2.
enum class BiasTarget { Mean, Sum };

/// Star(k) zeroes M_k; Core(k_1 < ... < k_m) zeroes every listed M_{k_t}.
struct LocusKind {
  LocusType type = LocusType::Star;
  std::vector<int> indices;

  static LocusKind star(int k) { return {LocusType::Star, {k}}; }
  static LocusKind core(std::vector<int> indices) { return {LocusType::Core, std::move(indices)}; }
};

/// A linear subspace S_k or C_{k_1..k_m} of parameter space as a mask.
///
/// Fixed coordinates: M_ℓ = 0, M_{k_t} = 0 for every index, b_{k_1} = ... =
/// b_{ℓ-1} = 0 and b_ℓ = ȳ. Everything else is free.
class LocusSpec {
 public:
  LocusSpec(NetworkShape shape, LocusKind kind, VectorXd output_bias, BiasTarget target)
      : shape_(std::move(shape)),
        kind_(std::move(kind)),
        target_(target),
        base_(shape_),
        fixed_(static_cast<std::size_t>(shape_.param_count()), false) {
    const int depth = shape_.depth();
    auto& idx = kind_.indices;
    if (idx.empty()) throw ArgumentError("locus needs at least one index");
    if (kind_.type == LocusType::Star && idx.size() != 1) {
      throw ArgumentError("star locus takes exactly one index");
    }
    std::sort(idx.begin(), idx.end());
    for (std::size_t t = 0; t < idx.size(); ++t) {
      if (idx[t] < 1 || idx[t] > depth - 1) {
        throw ArgumentError("locus index " + std::to_string(idx[t]) + " outside [1, " +
                            std::to_string(depth - 1) + "]");
      }
      if (t > 0 && idx[t] == idx[t - 1]) {
        throw ArgumentError("duplicate locus index " + std::to_string(idx[t]));
      }
    }
    if (output_bias.size() != shape_.output_dim()) throw ShapeError("output bias has the wrong dimension");

    auto fix_range = [&](int begin, int count) {
      for (int c = begin; c < begin + count; ++c) fixed_[static_cast<std::size_t>(c)] = true;
    };
    fix_range(shape_.weight_offset(depth), shape_.width(depth) * shape_.width(depth - 1));
    fix_range(shape_.bias_offset(depth), shape_.width(depth));
    for (int k : idx) fix_range(shape_.weight_offset(k), shape_.width(k) * shape_.width(k - 1));
    for (int j = idx.front(); j <= depth - 1; ++j) fix_range(shape_.bias_offset(j), shape_.width(j));
    base_.bias(depth) = output_bias;

    const int needed = kind_.type == LocusType::Star ? 3 : 4;
    if (depth < needed || (kind_.type == LocusType::Core && idx.size() < 2)) {
      guaranteed_ = false;
      warnings_.push_back(kind_.type == LocusType::Star
                              ? "depth < 3: criticality of the star locus is not guaranteed"
                              : "core locus needs depth >= 4 and two indices for the degeneracy guarantee");
    }
  }

  LocusType type() const { return kind_.type; }
  const LocusKind& kind() const { return kind_; }
  const std::vector<int>& indices() const { return kind_.indices; }
  const NetworkShape& shape() const { return shape_; }
  BiasTarget bias_target() const { return target_; }
  VectorXd output_bias() const { return base_.bias(shape_.depth()); }
  const ParamVector& base_point() const { return base_; }
  const std::vector<bool>& fixed_mask() const { return fixed_; }
  bool guaranteed() const { return guaranteed_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  std::vector<int> free_coordinates() const {
    std::vector<int> out;
    for (std::size_t c = 0; c < fixed_.size(); ++c) {
      if (!fixed_[c]) out.push_back(static_cast<int>(c));
    }
    return out;
  }
  int free_count() const { return static_cast<int>(std::count(fixed_.begin(), fixed_.end(), false)); }

  /// d − ((m_{ℓ-1}+1)m_ℓ + Σ_t m_{k_t-1}m_{k_t} + Σ_{j=k_1}^{ℓ-1} m_j).
  int analytic_dimension() const {
    const int depth = shape_.depth();
    int removed = (shape_.width(depth - 1) + 1) * shape_.width(depth);
    for (int k : kind_.indices) removed += shape_.width(k - 1) * shape_.width(k);
    for (int j = kind_.indices.front(); j <= depth - 1; ++j) removed += shape_.width(j);
    return shape_.param_count() - removed;
  }

  ParamVector embed(const VectorXd& free_values) const {
    const auto free = free_coordinates();
    if (free_values.size() != static_cast<Eigen::Index>(free.size())) {
      throw ShapeError("locus has " + std::to_string(free.size()) + " free coordinates, got " +
                       std::to_string(free_values.size()));
    }
    ParamVector p = base_;
    for (std::size_t t = 0; t < free.size(); ++t) p[free[t]] = free_values[static_cast<Eigen::Index>(t)];
    return p;
  }

  /// Euclidean norm of p − base over the fixed coordinates.
  double residual(const ParamVector& p) const {
    check_shape(p);
    double sq = 0.0;
    for (std::size_t c = 0; c < fixed_.size(); ++c) {
      if (fixed_[c]) {
        const double diff = p[static_cast<int>(c)] - base_[static_cast<int>(c)];
        sq += diff * diff;
      }
    }
    return std::sqrt(sq);
  }

  /// Nearest point of the locus: fixed coordinates overwritten.
  ParamVector project(const ParamVector& p) const {
    check_shape(p);
    ParamVector out = p;
    for (std::size_t c = 0; c < fixed_.size(); ++c) {
      if (fixed_[c]) out[static_cast<int>(c)] = base_[static_cast<int>(c)];
    }
    return out;
  }

  std::string label() const {
    std::string s = kind_.type == LocusType::Star ? "S_" : "C_";
    for (std::size_t t = 0; t < kind_.indices.size(); ++t) {
      if (t > 0) s += ",";
      s += std::to_string(kind_.indices[t]);
    }
    return s;
  }

 private:
  void check_shape(const ParamVector& p) const {
    if (!(p.shape() == shape_)) throw ShapeError("parameter vector belongs to a different network");
  }

  NetworkShape shape_;
  LocusKind kind_;
  BiasTarget target_;
  ParamVector base_;
  std::vector<bool> fixed_;
  bool guaranteed_ = true;
  std::vector<std::string> warnings_;
};

inline LocusSpec make_locus(const NetworkShape& shape, const Dataset& data, const LocusKind& kind,
                            BiasTarget target = BiasTarget::Mean) {
  data.check_compatible(shape);
  return {shape, kind, target == BiasTarget::Mean ? data.target_mean() : data.target_sum(), target};
}

/// Draws with free coordinates i.i.d. normal(0, scale²); draw i uses its own stream.
inline std::vector<ParamVector> sample_locus(const LocusSpec& spec, int count, std::uint64_t seed,
                                             double scale = 1.0) {
  if (count < 1) throw ArgumentError("sample count must be >= 1");
  if (!(scale >= 0.0)) throw ArgumentError("sample scale must be >= 0");
  const int free = spec.free_count();
  std::vector<ParamVector> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int s = 0; s < count; ++s) {
    auto gen = rng_stream(seed, static_cast<std::uint64_t>(s));
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd values(free);
    for (int t = 0; t < free; ++t) values[t] = scale * normal(gen);
    out.push_back(spec.embed(values));
  }
  return out;
}

/// Closed-form and mask-counted dimensions for one network and sample count.
struct DimensionReport {
  int param_count = 0;
  int samples = 0;
  std::map<int, int> star;                  ///< k → dim S_k (mask count)
  int star_max = 0;
  std::map<std::pair<int, int>, int> core;  ///< (i, j) → dim C_{i,j}
  std::optional<int> core_max;
  int global_min_dim = 0;  ///< d − b·n

  // Uniform-hidden-width closed forms; empty when widths differ.
  std::optional<int> param_count_closed_form;
  std::optional<int> star_closed_form;
  std::optional<int> core_closed_form;
  std::optional<int> global_min_closed_form;

  // Zero-eigenvalue table.
  int core_zero_eigs_closed_form = 0;  ///< d − 1
  int core_zero_eigs = 0;              ///< d − m_ℓ; one 2n eigenvalue per output
  int global_min_zero_eigs = 0;        ///< d − b·n
  int other_zero_eigs_bound = 0;       ///< (m_{ℓ-1} + 1 − n)·m_ℓ

  /// Closed-form star dimension disagrees with the mask maximum.
  bool star_discrepancy() const { return star_closed_form && *star_closed_form != star_max; }
  /// Same for the core locus; the closed form misses C_{1,3}-type pairs once m² > (a+1)m.
  bool core_discrepancy() const { return core_closed_form && core_max && *core_closed_form != *core_max; }
};

inline DimensionReport dimensions(const NetworkShape& shape, int n) {
  if (n < 1) throw ArgumentError("sample count must be >= 1");
  const int depth = shape.depth();
  const int a = shape.input_dim();
  const int b = shape.output_dim();
  const VectorXd zero_bias = VectorXd::Zero(b);

  DimensionReport r;
  r.param_count = shape.param_count();
  r.samples = n;
  for (int k = 1; k <= depth - 1; ++k) {
    const LocusSpec spec(shape, LocusKind::star(k), zero_bias, BiasTarget::Mean);
    r.star[k] = spec.free_count();
    r.star_max = std::max(r.star_max, r.star[k]);
  }
  for (int i = 1; i <= depth - 1; ++i) {
    for (int j = i + 1; j <= depth - 1; ++j) {
      const LocusSpec spec(shape, LocusKind::core({i, j}), zero_bias, BiasTarget::Mean);
      r.core[{i, j}] = spec.free_count();
      r.core_max = std::max(r.core_max.value_or(0), spec.free_count());
    }
  }
  r.global_min_dim = r.param_count - b * n;

  if (shape.uniform_hidden()) {
    const int m = shape.width(1);
    const int l = depth;
    r.param_count_closed_form = (l - 2) * m * m + (l + a + b - 1) * m + b;
    r.star_closed_form = (l - 3) * m * m + (a + 1) * m;
    if (l >= 4) r.core_closed_form = (l - 4) * m * m + (a + 1) * m;
    r.global_min_closed_form = (l - 2) * m * m + (a + b + l - 1) * m + b * (1 - n);
  }

  r.core_zero_eigs_closed_form = r.param_count - 1;
  r.core_zero_eigs = r.param_count - b;
  r.global_min_zero_eigs = r.param_count - b * n;
  r.other_zero_eigs_bound = (shape.last_hidden_width() + 1 - n) * b;
  return r;
}

}  // namespace critlab
