#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "critlab/dual.hpp"
#include "critlab/errors.hpp"
#include "critlab/rng.hpp"

namespace critlab {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Layer widths m_0..m_ℓ of a fully connected feedforward network.
///
/// Layers are numbered 1..ℓ; layer i is the affine map R^{m_{i-1}} → R^{m_i}
/// and owns (m_{i-1}+1)·m_i parameters. Parameters are stored layer-major,
/// each block holding M_i row-major followed by b_i.
class NetworkShape {
 public:
  explicit NetworkShape(std::vector<int> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 3) {
      throw ShapeError("network needs depth >= 2 (at least three widths), got " +
                       std::to_string(widths_.size()) + " widths");
    }
    for (std::size_t i = 0; i < widths_.size(); ++i) {
      if (widths_[i] < 1) {
        throw ShapeError("width m_" + std::to_string(i) + " must be >= 1");
      }
    }
    offsets_.assign(widths_.size() + 1, 0);
    for (int i = 1; i <= depth(); ++i) {
      offsets_[i + 1] = offsets_[i] + layer_size(i);
    }
  }

  int depth() const { return static_cast<int>(widths_.size()) - 1; }
  int width(int i) const { return widths_.at(static_cast<std::size_t>(i)); }
  const std::vector<int>& widths() const { return widths_; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  int last_hidden_width() const { return width(depth() - 1); }

  int layer_size(int i) const {
    check_layer(i);
    return (width(i - 1) + 1) * width(i);
  }
  int layer_offset(int i) const {
    check_layer(i);
    return offsets_[i];
  }
  int weight_offset(int i) const { return layer_offset(i); }
  int bias_offset(int i) const { return layer_offset(i) + width(i) * width(i - 1); }
  int param_count() const { return offsets_.back(); }

  /// True when every hidden layer has the same width.
  bool uniform_hidden() const {
    for (int i = 2; i < depth(); ++i) {
      if (width(i) != width(1)) return false;
    }
    return true;
  }

  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;

 private:
  void check_layer(int i) const {
    if (i < 1 || i > depth()) {
      throw ArgumentError("layer index " + std::to_string(i) + " outside [1, " +
                          std::to_string(depth()) + "]");
    }
  }

  std::vector<int> widths_;
  std::vector<int> offsets_;
};

/// One affine layer x ↦ Mx + b, materialized.
struct Layer {
  MatrixXd weights;
  VectorXd bias;
};

/// Flat parameter vector with a per-layer (M_i, b_i) view.
class ParamVector {
 public:
  explicit ParamVector(NetworkShape shape)
      : shape_(std::move(shape)), data_(VectorXd::Zero(shape_.param_count())) {}

  ParamVector(NetworkShape shape, VectorXd data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.param_count()) {
      throw ShapeError("parameter vector has length " + std::to_string(data_.size()) +
                       ", shape needs " + std::to_string(shape_.param_count()));
    }
  }

  static ParamVector from_layers(const NetworkShape& shape, const std::vector<Layer>& layers) {
    if (static_cast<int>(layers.size()) != shape.depth()) {
      throw ShapeError("expected " + std::to_string(shape.depth()) + " layers");
    }
    ParamVector p(shape);
    for (int i = 1; i <= shape.depth(); ++i) {
      const Layer& layer = layers[static_cast<std::size_t>(i - 1)];
      if (layer.weights.rows() != shape.width(i) || layer.weights.cols() != shape.width(i - 1) ||
          layer.bias.size() != shape.width(i)) {
        throw ShapeError("layer " + std::to_string(i) + " has the wrong dimensions");
      }
      p.weights(i) = layer.weights;
      p.bias(i) = layer.bias;
    }
    return p;
  }

  const NetworkShape& shape() const { return shape_; }
  const VectorXd& data() const { return data_; }
  VectorXd& data() { return data_; }
  int size() const { return static_cast<int>(data_.size()); }
  double operator[](int k) const { return data_[k]; }
  double& operator[](int k) { return data_[k]; }

  Eigen::Map<const RowMatrixXd> weights(int i) const {
    return {data_.data() + shape_.weight_offset(i), shape_.width(i), shape_.width(i - 1)};
  }
  Eigen::Map<RowMatrixXd> weights(int i) {
    return {data_.data() + shape_.weight_offset(i), shape_.width(i), shape_.width(i - 1)};
  }
  Eigen::Map<const VectorXd> bias(int i) const {
    return {data_.data() + shape_.bias_offset(i), shape_.width(i)};
  }
  Eigen::Map<VectorXd> bias(int i) { return {data_.data() + shape_.bias_offset(i), shape_.width(i)}; }

  std::vector<Layer> layers() const {
    std::vector<Layer> out;
    out.reserve(static_cast<std::size_t>(shape_.depth()));
    for (int i = 1; i <= shape_.depth(); ++i) {
      out.push_back({weights(i), bias(i)});
    }
    return out;
  }

 private:
  NetworkShape shape_;
  VectorXd data_;
};

/// Parameters drawn i.i.d. normal(0, scale²).
inline ParamVector random_params(const NetworkShape& shape, std::uint64_t seed, double scale = 1.0) {
  auto gen = rng_stream(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamVector p(shape);
  for (int k = 0; k < p.size(); ++k) p[k] = scale * normal(gen);
  return p;
}

enum class ActivationKind { Tanh, CenteredSigmoid, Identity };

/// Smooth activation with σ(0) = 0.
class Activation {
 public:
  constexpr Activation() = default;
  constexpr explicit Activation(ActivationKind kind) : kind_(kind) {}

  static Activation parse(std::string_view name) {
    if (name == "tanh") return Activation(ActivationKind::Tanh);
    if (name == "centered_sigmoid") return Activation(ActivationKind::CenteredSigmoid);
    if (name == "identity") return Activation(ActivationKind::Identity);
    throw ArgumentError("unknown activation '" + std::string(name) + "'");
  }

  constexpr ActivationKind kind() const { return kind_; }

  std::string name() const {
    switch (kind_) {
      case ActivationKind::Tanh: return "tanh";
      case ActivationKind::CenteredSigmoid: return "centered_sigmoid";
      case ActivationKind::Identity: return "identity";
    }
    return "?";
  }

  double value(double t) const {
    switch (kind_) {
      case ActivationKind::Tanh: return std::tanh(t);
      case ActivationKind::CenteredSigmoid: return logistic(t) - 0.5;
      case ActivationKind::Identity: return t;
    }
    return 0.0;
  }

  double derivative(double t) const {
    switch (kind_) {
      case ActivationKind::Tanh: {
        const double th = std::tanh(t);
        return 1.0 - th * th;
      }
      case ActivationKind::CenteredSigmoid: {
        const double s = logistic(t);
        return s * (1.0 - s);
      }
      case ActivationKind::Identity: return 1.0;
    }
    return 0.0;
  }

  double second_derivative(double t) const {
    switch (kind_) {
      case ActivationKind::Tanh: {
        const double th = std::tanh(t);
        return -2.0 * th * (1.0 - th * th);
      }
      case ActivationKind::CenteredSigmoid: {
        const double s = logistic(t);
        return s * (1.0 - s) * (1.0 - 2.0 * s);
      }
      case ActivationKind::Identity: return 0.0;
    }
    return 0.0;
  }

  // Scalar-generic evaluation for the derivative code.
  double apply(double t) const { return value(t); }
  Dual apply(const Dual& t) const { return {value(t.v), derivative(t.v) * t.d}; }
  double apply_derivative(double t) const { return derivative(t); }
  Dual apply_derivative(const Dual& t) const { return {derivative(t.v), second_derivative(t.v) * t.d}; }

  friend constexpr bool operator==(Activation, Activation) = default;

 private:
  static double logistic(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
  }

  ActivationKind kind_ = ActivationKind::Tanh;
};

/// n input/target pairs stored column-wise.
class Dataset {
 public:
  Dataset(MatrixXd inputs, MatrixXd targets) : inputs_(std::move(inputs)), targets_(std::move(targets)) {
    if (inputs_.cols() < 1) throw ShapeError("dataset needs at least one sample");
    if (inputs_.cols() != targets_.cols()) {
      throw ShapeError("dataset has " + std::to_string(inputs_.cols()) + " inputs but " +
                       std::to_string(targets_.cols()) + " targets");
    }
    if (inputs_.rows() < 1 || targets_.rows() < 1) throw ShapeError("dataset dimensions must be >= 1");
  }

  int size() const { return static_cast<int>(inputs_.cols()); }
  int input_dim() const { return static_cast<int>(inputs_.rows()); }
  int output_dim() const { return static_cast<int>(targets_.rows()); }
  const MatrixXd& inputs() const { return inputs_; }
  const MatrixXd& targets() const { return targets_; }
  auto input(int k) const { return inputs_.col(k); }
  auto target(int k) const { return targets_.col(k); }

  VectorXd target_mean() const { return targets_.rowwise().mean(); }
  VectorXd target_sum() const { return targets_.rowwise().sum(); }

  bool inputs_distinct() const {
    for (int i = 0; i < size(); ++i) {
      for (int j = i + 1; j < size(); ++j) {
        if (inputs_.col(i) == inputs_.col(j)) return false;
      }
    }
    return true;
  }

  void check_compatible(const NetworkShape& shape) const {
    if (input_dim() != shape.input_dim() || output_dim() != shape.output_dim()) {
      throw ShapeError("dataset is " + std::to_string(input_dim()) + " -> " + std::to_string(output_dim()) +
                       " but network is " + std::to_string(shape.input_dim()) + " -> " +
                       std::to_string(shape.output_dim()));
    }
  }

 private:
  MatrixXd inputs_;
  MatrixXd targets_;
};

/// Inputs and targets i.i.d. normal(0, 1); inputs are distinct almost surely.
inline Dataset random_dataset(int input_dim, int output_dim, int n, std::uint64_t seed) {
  if (n < 1) throw ArgumentError("dataset size must be >= 1");
  auto gen = rng_stream(seed, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd x(input_dim, n);
  MatrixXd y(output_dim, n);
  for (int k = 0; k < n; ++k) {
    for (int r = 0; r < input_dim; ++r) x(r, k) = normal(gen);
    for (int r = 0; r < output_dim; ++r) y(r, k) = normal(gen);
  }
  return {std::move(x), std::move(y)};
}

namespace detail {

inline void check_input(const NetworkShape& shape, Eigen::Index dim) {
  if (dim != shape.input_dim()) {
    throw ShapeError("input has dimension " + std::to_string(dim) + ", network expects " +
                     std::to_string(shape.input_dim()));
  }
}

inline VectorXd hidden_output(const ParamVector& p, int layers, const Eigen::Ref<const VectorXd>& x,
                              const Activation& act) {
  VectorXd h = x;
  for (int i = 1; i <= layers; ++i) {
    h = (p.weights(i) * h + p.bias(i)).unaryExpr([&](double t) { return act.value(t); });
  }
  return h;
}

}  // namespace detail

/// f_p(x) = A_ℓ ∘ σ ∘ A_{ℓ-1} ∘ ... ∘ σ ∘ A_1 (x).
inline VectorXd forward(const ParamVector& p, const Eigen::Ref<const VectorXd>& x, const Activation& act) {
  const NetworkShape& shape = p.shape();
  detail::check_input(shape, x.size());
  const int depth = shape.depth();
  const VectorXd h = detail::hidden_output(p, depth - 1, x, act);
  return p.weights(depth) * h + p.bias(depth);
}

/// L(p) = Σ_k ‖f_p(x_k) − y_k‖², no averaging.
inline double loss(const ParamVector& p, const Dataset& data, const Activation& act) {
  data.check_compatible(p.shape());
  double total = 0.0;
  for (int k = 0; k < data.size(); ++k) {
    total += (forward(p, data.input(k), act) - data.target(k)).squaredNorm();
  }
  return total;
}

/// φ_i(x) = σ ∘ A_i ∘ ... ∘ σ ∘ A_1 (x), reading only layers 1..i of `p`.
inline VectorXd phi(const ParamVector& p, int i, const Eigen::Ref<const VectorXd>& x, const Activation& act) {
  const NetworkShape& shape = p.shape();
  if (i < 1 || i > shape.depth() - 1) {
    throw ArgumentError("phi layer index " + std::to_string(i) + " outside [1, " +
                        std::to_string(shape.depth() - 1) + "]");
  }
  detail::check_input(shape, x.size());
  return detail::hidden_output(p, i, x, act);
}

/// Last-hidden-layer features over a dataset.
struct PhiMatrix {
  MatrixXd features;   ///< m_{ℓ-1} × n; column α is φ_{ℓ-1}(x_α)
  MatrixXd augmented;  ///< (m_{ℓ-1}+1) × n; features with a ones row appended
};

inline PhiMatrix phi_matrix(const ParamVector& p, const Dataset& data, const Activation& act) {
  data.check_compatible(p.shape());
  const int m = p.shape().last_hidden_width();
  const int last = p.shape().depth() - 1;
  PhiMatrix out{MatrixXd(m, data.size()), MatrixXd(m + 1, data.size())};
  for (int k = 0; k < data.size(); ++k) {
    out.features.col(k) = phi(p, last, data.input(k), act);
  }
  out.augmented.topRows(m) = out.features;
  out.augmented.row(m).setOnes();
  return out;
}

}  // namespace critlab
