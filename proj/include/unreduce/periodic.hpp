#pragma once

/**
 * @file
 * @brief Functions on the uniform periodic grid s_i = i / N of the circle:
 * finite-difference derivative, band-limited interpolation and the flow map
 * of a vector field nu(s) d/ds.
 */

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

#include "unreduce/error.hpp"

namespace unreduce {

namespace detail {

/// Solves the cyclic tridiagonal system with constant bands (a, b, a) for
/// every row of `r` (Sherman-Morrison correction of the Thomas algorithm).
inline Eigen::MatrixXd solve_cyclic_tridiagonal(double a, double b, const Eigen::MatrixXd& r) {
  const Eigen::Index n = r.cols();
  const double gamma = -b;
  Eigen::VectorXd diag = Eigen::VectorXd::Constant(n, b);
  diag(0) = b - gamma;
  diag(n - 1) = b - a * a / gamma;

  // Thomas forward sweep coefficients, shared by both right-hand sides.
  Eigen::VectorXd cp(n);
  Eigen::VectorXd denom(n);
  denom(0) = diag(0);
  cp(0) = a / denom(0);
  for (Eigen::Index i = 1; i < n; ++i) {
    denom(i) = diag(i) - a * cp(i - 1);
    cp(i) = a / denom(i);
  }
  auto thomas = [&](Eigen::MatrixXd rhs) {
    rhs.col(0) /= denom(0);
    for (Eigen::Index i = 1; i < n; ++i) rhs.col(i) = (rhs.col(i) - a * rhs.col(i - 1)) / denom(i);
    for (Eigen::Index i = n - 2; i >= 0; --i) rhs.col(i) -= cp(i) * rhs.col(i + 1);
    return rhs;
  };

  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(1, n);
  u(0, 0) = gamma;
  u(0, n - 1) = a;
  const Eigen::MatrixXd z = thomas(u);
  Eigen::MatrixXd x = thomas(r);
  const double zden = 1.0 + z(0, 0) + a * z(0, n - 1) / gamma;
  const Eigen::VectorXd fact = (x.col(0) + a * x.col(n - 1) / gamma) / zden;
  x -= fact * z;
  return x;
}

}  // namespace detail

/// Fourth-order compact central difference d/ds on the periodic grid with
/// spacing 1/N, applied to each row of `f` (one sample per column):
///   f'_{i-1} / 4 + f'_i + f'_{i+1} / 4 = 3 N (f_{i+1} - f_{i-1}) / 4.
/// The operator is a circulant antisymmetric matrix.
inline Eigen::MatrixXd periodic_derivative(const Eigen::MatrixXd& f) {
  const Eigen::Index n = f.cols();
  if (n < 4) throw Error(Errc::InvalidArgument, "periodic_derivative needs at least 4 samples");
  const double scale = 0.75 * static_cast<double>(n);
  Eigen::MatrixXd rhs(f.rows(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    rhs.col(i) = scale * (f.col((i + 1) % n) - f.col((i + n - 1) % n));
  }
  return detail::solve_cyclic_tridiagonal(0.25, 1.0, rhs);
}

inline Eigen::VectorXd periodic_derivative(const Eigen::VectorXd& f) {
  return periodic_derivative(Eigen::MatrixXd(f.transpose())).transpose();
}

/// Fourier (band-limited) derivative d/ds on the periodic grid, applied to
/// each row of `f`: the exact derivative of the trigonometric interpolant at
/// the nodes, with the Nyquist mode of even N differentiated to zero.
/// Applied as the circulant matrix
///   D_ij = pi (-1)^(i-j) cot(pi (i-j) / N)   (N even)
///   D_ij = pi (-1)^(i-j) csc(pi (i-j) / N)   (N odd),
/// which is antisymmetric.
inline const Eigen::MatrixXd& spectral_matrix(Eigen::Index n) {
  thread_local Eigen::MatrixXd cached;
  if (cached.rows() == n) return cached;
  cached.setZero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index k = (i - j + n) % n;
      if (k == 0) continue;
      const double x = std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      const double sign = k % 2 == 0 ? 1.0 : -1.0;
      cached(i, j) = std::numbers::pi * sign * (n % 2 == 0 ? std::cos(x) / std::sin(x) : 1.0 / std::sin(x));
    }
  }
  return cached;
}

inline Eigen::MatrixXd spectral_derivative(const Eigen::MatrixXd& f) {
  const Eigen::Index n = f.cols();
  if (n < 2) throw Error(Errc::InvalidArgument, "spectral_derivative needs at least 2 samples");
  return f * spectral_matrix(n).transpose();
}

inline Eigen::VectorXd spectral_derivative(const Eigen::VectorXd& f) {
  return spectral_derivative(Eigen::MatrixXd(f.transpose())).transpose();
}

/// Trigonometric interpolant of uniformly sampled periodic data, one channel
/// per row. For even N the Nyquist mode is carried by cos(pi N s) alone.
class TrigInterpolant {
 public:
  explicit TrigInterpolant(const Eigen::MatrixXd& samples)
      : n_(samples.cols()), half_(samples.cols() / 2) {
    if (n_ < 1) throw Error(Errc::InvalidArgument, "empty sample set");
    const Eigen::Index channels = samples.rows();
    cos_.setZero(channels, half_ + 1);
    sin_.setZero(channels, half_ + 1);
    const double two_pi_over_n = 2.0 * std::numbers::pi / static_cast<double>(n_);
    for (Eigen::Index k = 0; k <= half_; ++k) {
      for (Eigen::Index j = 0; j < n_; ++j) {
        const double arg = two_pi_over_n * static_cast<double>((k * j) % n_);
        cos_.col(k) += samples.col(j) * std::cos(arg);
        sin_.col(k) += samples.col(j) * std::sin(arg);
      }
      const bool nyquist = (n_ % 2 == 0) && k == half_;
      const double w = (k == 0 || nyquist) ? 1.0 / static_cast<double>(n_)
                                           : 2.0 / static_cast<double>(n_);
      cos_.col(k) *= w;
      sin_.col(k) *= nyquist || k == 0 ? 0.0 : w;
    }
  }

  Eigen::Index channels() const { return cos_.rows(); }

  /// Value at an arbitrary (unwrapped) parameter s.
  Eigen::VectorXd operator()(double s) const { return evaluate(s, false); }

  /// d/ds at an arbitrary parameter s.
  Eigen::VectorXd derivative(double s) const { return evaluate(s, true); }

 private:
  Eigen::VectorXd evaluate(double s, bool derivative) const {
    Eigen::VectorXd out = derivative ? Eigen::VectorXd::Zero(channels()) : Eigen::VectorXd(cos_.col(0));
    const double base = 2.0 * std::numbers::pi * s;
    for (Eigen::Index k = 1; k <= half_; ++k) {
      const double kk = static_cast<double>(k);
      const double c = std::cos(kk * base);
      const double sn = std::sin(kk * base);
      if (derivative) {
        const double f = 2.0 * std::numbers::pi * kk;
        out += f * (sin_.col(k) * c - cos_.col(k) * sn);
      } else {
        out += cos_.col(k) * c + sin_.col(k) * sn;
      }
    }
    return out;
  }

  Eigen::Index n_;
  Eigen::Index half_;
  Eigen::MatrixXd cos_;
  Eigen::MatrixXd sin_;
};

/// Diffeomorphism of the circle sampled at a set of starting points: unwrapped
/// images `position` and their derivative with respect to the starting point.
struct CircleMap {
  Eigen::VectorXd position;
  Eigen::VectorXd jacobian;
};

/// Samples of the time-t flow of nu d/ds at every step of a fixed-step
/// classical Runge-Kutta integration, starting from `starts`. The field is
/// evaluated between grid nodes by band-limited interpolation.
/// Throws FlowNotDiffeomorphic if the map stops being orientation preserving.
inline std::vector<CircleMap> flow_s1_samples(const Eigen::VectorXd& nu, const Eigen::VectorXd& starts,
                                              double t, int steps) {
  if (steps < 1) throw Error(Errc::InvalidArgument, "steps must be positive");
  if (!nu.allFinite()) throw Error(Errc::InvalidArgument, "non-finite vector field");
  const TrigInterpolant field(nu.transpose());
  const Eigen::Index m = starts.size();
  const double h = t / steps;

  // y = (positions, jacobians); d/dt position = nu(position), d/dt J = nu'(position) J.
  auto rhs = [&](const Eigen::VectorXd& y) {
    Eigen::VectorXd dy(2 * m);
    for (Eigen::Index i = 0; i < m; ++i) {
      dy(i) = field(y(i))(0);
      dy(m + i) = field.derivative(y(i))(0) * y(m + i);
    }
    return dy;
  };

  Eigen::VectorXd y(2 * m);
  y << starts, Eigen::VectorXd::Ones(m);
  std::vector<CircleMap> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  auto record = [&](int step) {
    CircleMap map{y.head(m), y.tail(m)};
    if (!map.position.allFinite() || (map.jacobian.array() <= 0.0).any()) {
      throw Error(Errc::FlowNotDiffeomorphic, "circle map lost monotonicity at step " + std::to_string(step));
    }
    out.push_back(std::move(map));
  };
  record(0);
  for (int k = 1; k <= steps; ++k) {
    const Eigen::VectorXd k1 = rhs(y);
    const Eigen::VectorXd k2 = rhs(y + 0.5 * h * k1);
    const Eigen::VectorXd k3 = rhs(y + 0.5 * h * k2);
    const Eigen::VectorXd k4 = rhs(y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    record(k);
  }
  return out;
}

/// Uniform grid s_i = i / n.
inline Eigen::VectorXd periodic_grid(Eigen::Index n) {
  return Eigen::VectorXd::LinSpaced(n, 0.0, static_cast<double>(n - 1) / static_cast<double>(n));
}

/// Time-t flow map of nu d/ds evaluated at the grid nodes of nu.
/// Additionally checks that node images keep their cyclic order.
inline CircleMap exp_flow_s1(const Eigen::VectorXd& nu, double t, int steps = 400) {
  const Eigen::Index n = nu.size();
  CircleMap map = flow_s1_samples(nu, periodic_grid(n), t, steps).back();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double next = i + 1 < n ? map.position(i + 1) : map.position(0) + 1.0;
    if (!(next > map.position(i))) {
      throw Error(Errc::FlowNotDiffeomorphic, "node images out of order");
    }
  }
  return map;
}

}  // namespace unreduce
