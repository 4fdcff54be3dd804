#pragma once

#include <Eigen/QR>

#include <cmath>
#include <random>
#include <vector>

#include "critlab/network.hpp"

namespace testing_support {

using critlab::Dataset;
using critlab::MatrixXd;
using critlab::NetworkShape;
using critlab::VectorXd;

inline NetworkShape net_r() { return NetworkShape({2, 3, 3, 3, 1}); }

/// {(1,0) -> 1, (0,1) -> 3}
inline Dataset d0() { return {MatrixXd{{1, 0}, {0, 1}}, MatrixXd{{1, 3}}}; }

inline double tanh_or_identity(double t, bool identity) { return identity ? t : std::tanh(t); }

/// Plain-loop network evaluation straight from the flat parameter layout.
inline std::vector<double> loop_forward(const std::vector<int>& widths, const std::vector<double>& theta,
                                        const std::vector<double>& x, bool identity = false) {
  std::vector<double> h = x;
  std::size_t at = 0;
  const std::size_t layers = widths.size() - 1;
  for (std::size_t i = 1; i <= layers; ++i) {
    const int rows = widths[i];
    const int cols = widths[i - 1];
    std::vector<double> next(static_cast<std::size_t>(rows), 0.0);
    for (int r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int c = 0; c < cols; ++c) s += theta[at + static_cast<std::size_t>(r * cols + c)] * h[static_cast<std::size_t>(c)];
      next[static_cast<std::size_t>(r)] = s;
    }
    at += static_cast<std::size_t>(rows * cols);
    for (int r = 0; r < rows; ++r) next[static_cast<std::size_t>(r)] += theta[at + static_cast<std::size_t>(r)];
    at += static_cast<std::size_t>(rows);
    if (i < layers) {
      for (auto& v : next) v = tanh_or_identity(v, identity);
    }
    h = std::move(next);
  }
  return h;
}

inline double loop_loss(const std::vector<int>& widths, const std::vector<double>& theta, const Dataset& data) {
  double total = 0.0;
  for (int k = 0; k < data.size(); ++k) {
    std::vector<double> x(data.input(k).begin(), data.input(k).end());
    const auto out = loop_forward(widths, theta, x);
    for (std::size_t j = 0; j < out.size(); ++j) {
      const double e = out[j] - data.target(k)[static_cast<Eigen::Index>(j)];
      total += e * e;
    }
  }
  return total;
}

inline std::vector<double> as_vector(const VectorXd& v) { return {v.begin(), v.end()}; }

inline MatrixXd random_orthogonal(int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd a(n, n);
  for (int i = 0; i < a.size(); ++i) a.data()[i] = normal(gen);
  Eigen::HouseholderQR<MatrixXd> qr(a);
  return qr.householderQ() * MatrixXd::Identity(n, n);
}

inline MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd a(rows, cols);
  for (int i = 0; i < a.size(); ++i) a.data()[i] = normal(gen);
  return a;
}

}  // namespace testing_support
