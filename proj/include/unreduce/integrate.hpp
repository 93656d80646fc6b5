#pragma once

/**
 * @file
 * @brief Fixed-step classical Runge-Kutta integration on [0, t_end] with
 * per-sample diagnostic recorders.
 *
 * A state type must provide `State + State`, `double * State` and a free
 * `all_finite(const State&)` found by argument-dependent lookup.
 */

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "unreduce/error.hpp"

namespace unreduce {

/// Scalar diagnostic evaluated on every recorded sample.
template <class State>
struct Recorder {
  std::string name;
  std::function<double(const State&)> measure;
};

template <class State>
struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
  std::vector<std::string> diagnostic_names;
  /// diagnostics[k][j] is recorder j evaluated on states[k].
  std::vector<std::vector<double>> diagnostics;

  std::size_t size() const { return states.size(); }
  int steps() const { return static_cast<int>(states.size()) - 1; }
  double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
  const State& front() const { return states.front(); }
  const State& back() const { return states.back(); }

  /// Column of one recorded diagnostic, or empty if `name` was not recorded.
  std::vector<double> diagnostic(const std::string& name) const {
    std::vector<double> out;
    for (std::size_t j = 0; j < diagnostic_names.size(); ++j) {
      if (diagnostic_names[j] != name) continue;
      out.reserve(diagnostics.size());
      for (const auto& row : diagnostics) out.push_back(row[j]);
    }
    return out;
  }
};

inline bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }
inline bool all_finite(double v) { return std::isfinite(v); }

/// One classical Runge-Kutta step of size h.
template <class State, class Rhs>
State rk4_step(Rhs& rhs, const State& y, double h) {
  const State k1 = rhs(y);
  const State k2 = rhs(State(y + (0.5 * h) * k1));
  const State k3 = rhs(State(y + (0.5 * h) * k2));
  const State k4 = rhs(State(y + h * k3));
  return State(y + (h / 6.0) * State(State(k1 + 2.0 * k2) + State(2.0 * k3 + k4)));
}

/// Classical fourth-order Runge-Kutta with `steps` uniform steps on [0, t_end].
/// Throws NonFiniteState naming the first step whose state is not finite.
template <class State, class Rhs>
Trajectory<State> integrate(Rhs&& rhs, const State& y0, int steps,
                            std::type_identity_t<std::span<const Recorder<State>>> recorders = {},
                            double t_end = 1.0) {
  if (steps < 1) throw Error(Errc::InvalidArgument, "steps must be positive");
  if (!all_finite(y0)) throw Error(Errc::NonFiniteState, "initial state is not finite");

  Trajectory<State> traj;
  traj.times.reserve(static_cast<std::size_t>(steps) + 1);
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  for (const auto& r : recorders) traj.diagnostic_names.push_back(r.name);

  auto record = [&](double t, const State& y) {
    traj.times.push_back(t);
    traj.states.push_back(y);
    if (recorders.empty()) return;
    std::vector<double> row;
    row.reserve(recorders.size());
    for (const auto& r : recorders) row.push_back(r.measure(y));
    traj.diagnostics.push_back(std::move(row));
  };

  const double h = t_end / static_cast<double>(steps);
  State y = y0;
  record(0.0, y);
  for (int k = 1; k <= steps; ++k) {
    y = rk4_step(rhs, y, h);
    if (!all_finite(y)) {
      throw Error(Errc::NonFiniteState, "state became non-finite at step " + std::to_string(k));
    }
    // Last sample is pinned to t_end so that times.back() is exact.
    record(k == steps ? t_end : h * static_cast<double>(k), y);
  }
  return traj;
}

/// Second-order central difference of uniformly spaced samples at index k.
template <class State>
State central_difference(const std::vector<State>& s, std::size_t k, double dt) {
  return State((0.5 / dt) * State(s[k + 1] + (-1.0) * s[k - 1]));
}

/// Fourth-order five-point central difference at index k (2 <= k < size - 2).
template <class State>
State five_point_difference(const std::vector<State>& s, std::size_t k, double dt) {
  const State near = State(s[k + 1] + (-1.0) * s[k - 1]);
  const State far = State(s[k + 2] + (-1.0) * s[k - 2]);
  return State((1.0 / (12.0 * dt)) * State(8.0 * near + (-1.0) * far));
}

/// Trapezoidal integral of a uniformly sampled scalar.
inline double trapezoid(const std::vector<double>& values, double dt) {
  if (values.size() < 2) return 0.0;
  double sum = 0.5 * (values.front() + values.back());
  for (std::size_t k = 1; k + 1 < values.size(); ++k) sum += values[k];
  return sum * dt;
}

/// Largest |f(t) - f(0)| over the samples.
inline double max_drift(const std::vector<double>& values) {
  double out = 0.0;
  for (double v : values) out = std::max(out, std::abs(v - values.front()));
  return out;
}

/// Integrates without recording intermediate samples; returns the final state.
template <class State, class Rhs>
State integrate_endpoint(Rhs&& rhs, const State& y0, int steps, double t_end = 1.0) {
  if (steps < 1) throw Error(Errc::InvalidArgument, "steps must be positive");
  const double h = t_end / static_cast<double>(steps);
  State y = y0;
  for (int k = 1; k <= steps; ++k) {
    y = rk4_step(rhs, y, h);
    if (!all_finite(y)) {
      throw Error(Errc::NonFiniteState, "state became non-finite at step " + std::to_string(k));
    }
  }
  return y;
}

}  // namespace unreduce
