#pragma once

/**
 * @file
 * @brief Rigid-body geodesics on SO(3) whose endpoint is fixed only up to a
 * rotation about the body z axis.
 *
 * Original system: Q' = w Q, P' = -w^T P with the angular velocity w solved
 * from A w = J_G(Q, P), A w = hat(I vee(w)).
 *
 * Reparameterised system with relabelling velocity theta * zw (zw is
 * z_generator()):
 *   Qbar' = wbar Qbar + theta Qbar zw,  Pbar' = -wbar^T Pbar - theta Pbar zw^T.
 * A solution maps back to the original system through
 *   Q(t) = Qbar(t) R(theta t),  P(t) = Pbar(t) R(theta t)
 * with R the right-handed z rotation, so Qbar(1) = Q1 gives Q(1) = Q1 R(theta).
 */

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "unreduce/error.hpp"
#include "unreduce/integrate.hpp"
#include "unreduce/lie.hpp"
#include "unreduce/shoot.hpp"

namespace unreduce::so3 {

/// Phase-space point (Q, P); P is an unconstrained 3x3 covector.
struct State {
  Mat3 rot = Mat3::Identity();
  Mat3 mom = Mat3::Zero();
};

inline State operator+(const State& a, const State& b) { return {a.rot + b.rot, a.mom + b.mom}; }
inline State operator*(double s, const State& a) { return {s * a.rot, s * a.mom}; }
inline bool all_finite(const State& s) { return s.rot.allFinite() && s.mom.allFinite(); }

/// Symmetric positive-definite inertia acting on vee coordinates.
class Inertia {
 public:
  Inertia() : Inertia(Mat3::Identity()) {}

  /// Throws SingularInertia unless `m` is symmetric to 1e-12 with positive eigenvalues.
  explicit Inertia(const Mat3& m) : m_(m) {
    if (!m.allFinite() || (m - m.transpose()).norm() > 1e-12) {
      throw Error(Errc::SingularInertia, "inertia is not symmetric");
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(m);
    if (!(eig.eigenvalues().minCoeff() > 0.0)) {
      throw Error(Errc::SingularInertia, "inertia is not positive definite");
    }
    inverse_ = m.inverse();
  }

  const Mat3& matrix() const { return m_; }

  /// A w = hat(I vee(w)).
  Mat3 apply(const Mat3& omega) const { return hat(m_ * vee(omega)); }
  /// Inverse of apply on antisymmetric matrices.
  Mat3 solve(const Mat3& mu) const { return hat(inverse_ * vee(mu)); }

 private:
  Mat3 m_;
  Mat3 inverse_;
};

struct Problem {
  RotationMatrix q0;
  RotationMatrix q1;
  Inertia inertia;
};

/// Solver unknowns: the x, y components of the initial body-frame angular
/// momentum (z is zero, which is the vanishing right momentum) and theta.
struct Unknowns {
  Eigen::Vector2d pi0 = Eigen::Vector2d::Zero();
  double theta = 0.0;

  Eigen::VectorXd to_vector() const { return Eigen::Vector3d(pi0.x(), pi0.y(), theta); }
  static Unknowns from_vector(const Eigen::VectorXd& x) {
    if (x.size() != 3) throw Error(Errc::DimensionMismatch, "SO(3) unknowns have 3 components");
    return {Eigen::Vector2d(x(0), x(1)), x(2)};
  }
};

struct SolveOptions {
  int steps = 400;
  LmOptions lm;
};

using Result = ShootingResult<State, Unknowns>;

inline Mat3 angular_velocity(const State& s, const Inertia& inertia) {
  return inertia.solve(momentum_left_so3(s.rot, s.mom));
}

/// Kinetic energy 1/2 <w, A w> under the trace pairing.
inline double energy(const State& s, const Inertia& inertia) {
  const Mat3 omega = angular_velocity(s, inertia);
  return 0.5 * pairing(omega, inertia.apply(omega));
}

inline State rhs_original(const State& s, const Inertia& inertia) {
  const Mat3 omega = angular_velocity(s, inertia);
  return {omega * s.rot, -omega.transpose() * s.mom};
}

inline State rhs_reparam(const State& s, const Inertia& inertia, double theta) {
  const Mat3 omega = angular_velocity(s, inertia);
  const Mat3& w = z_generator();
  return {omega * s.rot + theta * s.rot * w, -omega.transpose() * s.mom - theta * s.mom * w.transpose()};
}

/// Initial state with body-frame momentum (pi0, 0), so that J_G = hat(q0 (pi0, 0))
/// and the z right momentum vanishes.
inline State initial_state(const Mat3& q0, const Eigen::Vector2d& pi0) {
  const Vec3 spatial = q0 * Vec3(pi0.x(), pi0.y(), 0.0);
  return {q0, -hat(spatial).matrix() * q0};
}

/// Euclidean projection of the rotation block onto SO(3) (polar factor).
/// Not applied by any solver; available for long integrations.
inline State project_orthogonal(const State& s) {
  const Eigen::JacobiSVD<Mat3> svd(s.rot, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return {svd.matrixU() * d * svd.matrixV().transpose(), s.mom};
}

inline double orthogonality_defect(const Mat3& q) { return (q.transpose() * q - Mat3::Identity()).norm(); }

inline std::vector<Recorder<State>> recorders(const Inertia& inertia) {
  return {
      {"J_H", [](const State& s) { return momentum_right_z(s.rot, s.mom); }},
      {"energy", [inertia](const State& s) { return energy(s, inertia); }},
      {"orthogonality", [](const State& s) { return orthogonality_defect(s.rot); }},
  };
}

inline Trajectory<State> integrate_original(const State& y0, const Inertia& inertia, int steps) {
  const auto rec = recorders(inertia);
  return integrate([&](const State& s) { return rhs_original(s, inertia); }, y0, steps, rec);
}

inline Trajectory<State> integrate_reparam(const State& y0, const Inertia& inertia, double theta, int steps) {
  const auto rec = recorders(inertia);
  return integrate([&](const State& s) { return rhs_reparam(s, inertia, theta); }, y0, steps, rec);
}

/// Maps a reparameterised trajectory to the original system; recomputes the
/// diagnostics on the mapped states.
inline Trajectory<State> reconstruct(const Trajectory<State>& bar, double theta, const Inertia& inertia) {
  Trajectory<State> out;
  out.times = bar.times;
  out.states.reserve(bar.size());
  const auto rec = recorders(inertia);
  for (const auto& r : rec) out.diagnostic_names.push_back(r.name);
  for (std::size_t k = 0; k < bar.size(); ++k) {
    const Mat3 r = z_rotation(theta * bar.times[k]);
    State s{bar.states[k].rot * r, bar.states[k].mom * r};
    std::vector<double> row;
    for (const auto& rc : rec) row.push_back(rc.measure(s));
    out.diagnostics.push_back(std::move(row));
    out.states.push_back(s);
  }
  return out;
}

/// ||d/dt(A w) + ad*_w(A w)||_F at every sample that has two neighbours on
/// each side, using the five-point derivative. Entry j belongs to sample j + 2.
inline std::vector<double> euler_poincare_residual(const Trajectory<State>& traj, const Inertia& inertia) {
  if (traj.size() < 5) throw Error(Errc::InvalidArgument, "Euler-Poincare residual needs at least 5 samples");
  std::vector<Mat3> momentum;
  std::vector<Mat3> omega;
  momentum.reserve(traj.size());
  omega.reserve(traj.size());
  for (const auto& s : traj.states) {
    omega.push_back(angular_velocity(s, inertia));
    momentum.push_back(inertia.apply(omega.back()));
  }
  const double dt = traj.dt();
  std::vector<double> out;
  for (std::size_t k = 2; k + 2 < traj.size(); ++k) {
    const Mat3 dm = five_point_difference(momentum, k, dt);
    out.push_back((dm + ad_star(omega[k], momentum[k])).norm());
  }
  return out;
}

/// Max-norm of the central-difference time derivative of the samples minus
/// rhs_original, at every interior sample. Entry j belongs to sample j + 1.
inline std::vector<double> equivalence_residual(const Trajectory<State>& traj, const Inertia& inertia) {
  if (traj.size() < 3) throw Error(Errc::InvalidArgument, "equivalence residual needs at least 3 samples");
  const double dt = traj.dt();
  std::vector<double> out;
  for (std::size_t k = 1; k + 1 < traj.size(); ++k) {
    const State fd = central_difference(traj.states, k, dt);
    const State f = rhs_original(traj.states[k], inertia);
    out.push_back(std::max((fd.rot - f.rot).cwiseAbs().maxCoeff(), (fd.mom - f.mom).cwiseAbs().maxCoeff()));
  }
  return out;
}

inline double max_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
}

/// Tolerances of the verification report.
struct Tolerances {
  double noether = 1e-8;
  double vanishing = 1e-8;
  double energy = 1e-8;
  double orthogonality = 1e-9;
  double euler_poincare = 1e-4;
  double equivalence = 1e-4;
};

/// Invariant checks on a trajectory of the original system. The Noether
/// check uses all three components of the right momentum vee(Q^T P), which
/// is conserved because the energy only depends on P Q^T.
inline ConservationReport conservation_report(const Trajectory<State>& traj, const Inertia& inertia,
                                              const Tolerances& tol = {}) {
  double right_drift = 0.0;
  double vanishing = 0.0;
  double orth = 0.0;
  const Vec3 right0 = momentum_right_full(traj.front().rot, traj.front().mom);
  std::vector<double> energies;
  energies.reserve(traj.size());
  for (const auto& s : traj.states) {
    right_drift = std::max(right_drift, (momentum_right_full(s.rot, s.mom) - right0).cwiseAbs().maxCoeff());
    vanishing = std::max(vanishing, std::abs(momentum_right_z(s.rot, s.mom)));
    orth = std::max(orth, orthogonality_defect(s.rot));
    energies.push_back(energy(s, inertia));
  }
  ConservationReport report{
      {"noether_drift", right_drift, tol.noether},
      {"vanishing_momentum", vanishing, tol.vanishing},
      {"energy_drift", max_drift(energies), tol.energy},
      {"orthogonality", orth, tol.orthogonality},
  };
  if (traj.size() >= 5) {
    report.push_back({"euler_poincare", max_of(euler_poincare_residual(traj, inertia)), tol.euler_poincare});
  }
  if (traj.size() >= 3) {
    report.push_back({"equivalence", max_of(equivalence_residual(traj, inertia)), tol.equivalence});
  }
  return report;
}

/// Endpoint mismatch vee(log(Qbar(1)^T Q1)).
inline Vec3 endpoint_residual(const Mat3& qbar1, const Mat3& q1) {
  return vee(log_so3(RotationMatrix::unchecked(qbar1.transpose() * q1)));
}

/// Rotation about z minimising the bi-invariant distance from q0 to q1 R(theta).
inline double nearest_orbit_angle(const Mat3& q0, const Mat3& q1) {
  const Mat3 a = q0.transpose() * q1;
  return std::atan2(a(0, 1) - a(1, 0), a(0, 0) + a(1, 1));
}

/// Default start: theta from the bi-invariant nearest orbit point, pi0 from the
/// one-parameter subgroup joining q0 to q1 R(theta), which is exact for I = Id.
inline Unknowns default_start(const Problem& problem) {
  Unknowns start;
  try {
    const double theta = nearest_orbit_angle(problem.q0, problem.q1);
    const Mat3 target = problem.q1.matrix() * z_rotation(theta).matrix();
    const Vec3 omega = vee(log_so3(RotationMatrix::unchecked(target * problem.q0.matrix().transpose())));
    const Vec3 body = problem.q0.matrix().transpose() * (problem.inertia.matrix() * omega);
    start.pi0 = body.head<2>();
    start.theta = theta;
  } catch (const Error&) {
    start = Unknowns{};
  }
  return start;
}

inline Eigen::VectorXd shooting_residual(const Problem& problem, const Eigen::VectorXd& x, int steps) {
  const Unknowns u = Unknowns::from_vector(x);
  const State end = integrate_endpoint(
      [&](const State& s) { return rhs_reparam(s, problem.inertia, u.theta); },
      initial_state(problem.q0, u.pi0), steps);
  return endpoint_residual(end.rot, problem.q1);
}

/// Reparameterised shooting solve. Throws NoConvergence if the endpoint
/// residual does not reach opts.lm.tol and AngleNearPi if the start lies
/// outside the log chart.
inline Result solve(const Problem& problem, const SolveOptions& opts = {}, const Unknowns* start = nullptr) {
  const Unknowns x0 = start ? *start : default_start(problem);
  const ResidualFn residual = [&](const Eigen::VectorXd& x) { return shooting_residual(problem, x, opts.steps); };
  const LmResult lm = solve_lm(residual, x0.to_vector(), opts.lm);
  require_converged(lm, "SO(3) shooting");

  Result result;
  result.unknowns = lm.x;
  result.params = Unknowns::from_vector(lm.x);
  result.residual_norm = lm.report.residual_norm;
  result.iterations = lm.report.iterations;
  result.solver = lm.report;
  result.reparameterised = integrate_reparam(initial_state(problem.q0, result.params.pi0), problem.inertia,
                                             result.params.theta, opts.steps);
  result.reconstructed = reconstruct(result.reparameterised, result.params.theta, problem.inertia);
  result.cost = trapezoid(result.reconstructed.diagnostic("energy"), result.reconstructed.dt());
  result.diagnostics = conservation_report(result.reconstructed, problem.inertia);
  return result;
}

/// Row-major flattening of a state: 9 rotation entries then 9 momentum entries.
inline std::array<double, 18> flatten(const State& s) {
  std::array<double, 18> out{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      out[static_cast<std::size_t>(3 * i + j)] = s.rot(i, j);
      out[static_cast<std::size_t>(9 + 3 * i + j)] = s.mom(i, j);
    }
  }
  return out;
}

inline State unflatten(const double* v) {
  State s;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      s.rot(i, j) = v[3 * i + j];
      s.mom(i, j) = v[9 + 3 * i + j];
    }
  }
  return s;
}

}  // namespace unreduce::so3
