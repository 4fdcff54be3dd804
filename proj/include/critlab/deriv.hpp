#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "critlab/dual.hpp"
#include "critlab/network.hpp"
#include "critlab/parallel.hpp"

namespace critlab {

namespace detail {

/// Reverse-mode ∇L, generic over the parameter scalar type.
template <class T>
std::vector<T> loss_gradient(const NetworkShape& shape, const std::vector<T>& params, const Dataset& data,
                             const Activation& act) {
  const int depth = shape.depth();
  std::vector<T> grad(params.size(), T(0.0));
  std::vector<std::vector<T>> pre(static_cast<std::size_t>(depth + 1));
  std::vector<std::vector<T>> post(static_cast<std::size_t>(depth + 1));

  for (int alpha = 0; alpha < data.size(); ++alpha) {
    post[0].assign(static_cast<std::size_t>(shape.input_dim()), T(0.0));
    for (int c = 0; c < shape.input_dim(); ++c) post[0][c] = T(data.inputs()(c, alpha));

    for (int i = 1; i <= depth; ++i) {
      const int rows = shape.width(i);
      const int cols = shape.width(i - 1);
      const int w0 = shape.weight_offset(i);
      const int b0 = shape.bias_offset(i);
      auto& z = pre[i];
      z.assign(static_cast<std::size_t>(rows), T(0.0));
      for (int r = 0; r < rows; ++r) {
        T acc = params[b0 + r];
        for (int c = 0; c < cols; ++c) acc += params[w0 + r * cols + c] * post[i - 1][c];
        if (!is_finite(acc)) {
          throw NumericError("non-finite pre-activation in layer " + std::to_string(i));
        }
        z[r] = acc;
      }
      if (i < depth) {
        post[i].resize(static_cast<std::size_t>(rows));
        for (int r = 0; r < rows; ++r) post[i][r] = act.apply(z[r]);
      }
    }

    std::vector<T> delta(static_cast<std::size_t>(shape.output_dim()));
    for (int r = 0; r < shape.output_dim(); ++r) {
      delta[r] = T(2.0) * (pre[depth][r] - T(data.targets()(r, alpha)));
    }
    for (int i = depth; i >= 1; --i) {
      const int rows = shape.width(i);
      const int cols = shape.width(i - 1);
      const int w0 = shape.weight_offset(i);
      const int b0 = shape.bias_offset(i);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) grad[w0 + r * cols + c] += delta[r] * post[i - 1][c];
        grad[b0 + r] += delta[r];
      }
      if (i == 1) break;
      std::vector<T> next(static_cast<std::size_t>(cols), T(0.0));
      for (int c = 0; c < cols; ++c) {
        T acc(0.0);
        for (int r = 0; r < rows; ++r) acc += params[w0 + r * cols + c] * delta[r];
        next[c] = acc * act.apply_derivative(pre[i - 1][c]);
      }
      delta = std::move(next);
    }
  }
  return grad;
}

}  // namespace detail

/// Exact ∇L(p) by reverse-mode accumulation.
inline VectorXd gradient(const ParamVector& p, const Dataset& data, const Activation& act) {
  data.check_compatible(p.shape());
  const std::vector<double> params(p.data().data(), p.data().data() + p.size());
  const auto g = detail::loss_gradient(p.shape(), params, data, act);
  return Eigen::Map<const VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

struct HessianOptions {
  int cap = 2000;  ///< largest parameter count allowed for dense storage
  int jobs = 1;
};

/// Exact Hessian without the final symmetrization.
///
/// Column j is the tangent of the reverse-mode gradient along e_j.
inline MatrixXd hessian_unsymmetrized(const ParamVector& p, const Dataset& data, const Activation& act,
                                      const HessianOptions& options = {}) {
  data.check_compatible(p.shape());
  const int d = p.size();
  if (d > options.cap) {
    throw CapacityError("Hessian of " + std::to_string(d) + " parameters exceeds cap " +
                        std::to_string(options.cap));
  }
  MatrixXd h(d, d);
  parallel_for(d, options.jobs, [&](int j) {
    std::vector<Dual> params(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) params[k] = Dual(p[k], k == j ? 1.0 : 0.0);
    const auto g = detail::loss_gradient(p.shape(), params, data, act);
    for (int k = 0; k < d; ++k) h(k, j) = g[k].d;
  });
  return h;
}

/// Exact, symmetrized Hessian of L at p.
inline MatrixXd hessian(const ParamVector& p, const Dataset& data, const Activation& act,
                        const HessianOptions& options = {}) {
  const MatrixXd h = hessian_unsymmetrized(p, data, act, options);
  return 0.5 * (h + h.transpose());
}

// Finite differences. These only ever call the scalar objective, never the
// analytic derivative code above.

namespace detail {

inline double fd_step(double base, double x) {
  const double h = base * std::max(1.0, std::abs(x));
  volatile double shifted = x + h;  // make the step exactly representable
  return shifted - x;
}

}  // namespace detail

/// Central-difference gradient; default relative step cbrt(eps).
template <class F>
VectorXd fd_gradient(F&& f, const VectorXd& x, std::optional<double> step = std::nullopt) {
  const double base = step.value_or(std::cbrt(std::numeric_limits<double>::epsilon()));
  if (!(base > 0.0)) throw ArgumentError("finite-difference step must be > 0");
  VectorXd g(x.size());
  VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = detail::fd_step(base, x[i]);
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Central-difference Hessian with one Richardson step, (4D(h/2) − D(h))/3;
/// default relative step eps^(1/5).
template <class F>
MatrixXd fd_hessian(F&& f, const VectorXd& x, std::optional<double> step = std::nullopt) {
  const double base = step.value_or(std::pow(std::numeric_limits<double>::epsilon(), 0.2));
  if (!(base > 0.0)) throw ArgumentError("finite-difference step must be > 0");
  const Eigen::Index d = x.size();
  VectorXd probe = x;
  const double center = f(x);
  auto stencil = [&](double scale) {
    VectorXd h(d);
    for (Eigen::Index i = 0; i < d; ++i) h[i] = detail::fd_step(scale * base, x[i]);
    MatrixXd out(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      probe[i] = x[i] + h[i];
      const double up = f(probe);
      probe[i] = x[i] - h[i];
      const double down = f(probe);
      probe[i] = x[i];
      out(i, i) = (up - 2.0 * center + down) / (h[i] * h[i]);
      for (Eigen::Index j = i + 1; j < d; ++j) {
        auto eval = [&](double si, double sj) {
          probe[i] = x[i] + si * h[i];
          probe[j] = x[j] + sj * h[j];
          const double v = f(probe);
          probe[i] = x[i];
          probe[j] = x[j];
          return v;
        };
        const double v = (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) / (4.0 * h[i] * h[j]);
        out(i, j) = v;
        out(j, i) = v;
      }
    }
    return out;
  };
  const MatrixXd coarse = stencil(1.0);
  const MatrixXd fine = stencil(0.5);
  return (4.0 * fine - coarse) / 3.0;
}

inline VectorXd fd_gradient(const ParamVector& p, const Dataset& data, const Activation& act,
                            std::optional<double> step = std::nullopt) {
  const NetworkShape& shape = p.shape();
  return fd_gradient([&](const VectorXd& v) { return loss(ParamVector(shape, v), data, act); }, p.data(), step);
}

inline MatrixXd fd_hessian(const ParamVector& p, const Dataset& data, const Activation& act,
                           std::optional<double> step = std::nullopt) {
  const NetworkShape& shape = p.shape();
  return fd_hessian([&](const VectorXd& v) { return loss(ParamVector(shape, v), data, act); }, p.data(), step);
}

/// max |a − b| / max(1, max |b|), the error measure used for derivative checks.
template <class A, class B>
double max_relative_error(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace critlab
