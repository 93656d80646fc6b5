#pragma once

/**
 * @file
 * @brief Docking geodesics on SE(3) with the terminal orientation free about
 * the body z axis.
 *
 * A configuration q = (Q, r) is the 4x4 matrix [[Q, r], [0, 1]]; its covector
 * (P, p) pairs with tangent vectors by the trace pairing. The velocity
 * xi = (w, v) acts on the left, q' = xi q, and the energy is the quadratic
 * form with variational derivatives
 *   dE/dw = A w + v b^T - b v^T,   dE/dv = c v + 2 w b,
 *   E(w, v) = 1/2 <w, A w> + <v b^T - b v^T, w> + c/2 |v|^2,
 * where A w = hat(I vee(w)). The velocity is recovered from the left momentum
 * map of the cotangent lift:
 *   dE/dw = -skew(P Q^T + p r^T),  dE/dv = -p,
 * and the state evolves by Q' = w Q, r' = w r + v, P' = -w^T P, p' = -w^T p.
 *
 * The reparameterised system adds alpha Qbar zw to Qbar' and
 * -alpha Pbar zw^T to Pbar'; reconstruction multiplies Qbar and Pbar on the
 * right by the z rotation R(alpha t) and leaves r, p unchanged.
 */

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "unreduce/error.hpp"
#include "unreduce/integrate.hpp"
#include "unreduce/lie.hpp"
#include "unreduce/shoot.hpp"
#include "unreduce/so3.hpp"

namespace unreduce::se3 {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat4 = Eigen::Matrix4d;

struct Element {
  RotationMatrix rot;
  Vec3 trans = Vec3::Zero();

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rot.matrix();
    m.topRightCorner<3, 1>() = trans;
    return m;
  }
};

/// Phase-space point (Q, r, P, p).
struct State {
  Mat3 rot = Mat3::Identity();
  Vec3 trans = Vec3::Zero();
  Mat3 rot_mom = Mat3::Zero();
  Vec3 trans_mom = Vec3::Zero();
};

inline State operator+(const State& a, const State& b) {
  return {a.rot + b.rot, a.trans + b.trans, a.rot_mom + b.rot_mom, a.trans_mom + b.trans_mom};
}
inline State operator*(double s, const State& a) {
  return {s * a.rot, s * a.trans, s * a.rot_mom, s * a.trans_mom};
}
inline bool all_finite(const State& s) {
  return s.rot.allFinite() && s.trans.allFinite() && s.rot_mom.allFinite() && s.trans_mom.allFinite();
}

struct Velocity {
  Mat3 ang = Mat3::Zero();
  Vec3 lin = Vec3::Zero();
};

/// Momentum (dE/dw, dE/dv) paired with a velocity.
struct Momentum {
  Mat3 ang = Mat3::Zero();
  Vec3 lin = Vec3::Zero();
};

inline Momentum variational_derivatives(const Mat3& omega, const Vec3& v, const Mat3& inertia, const Vec3& b,
                                        double c) {
  return {hat(inertia * vee(omega)).matrix() + v * b.transpose() - b * v.transpose(), c * v + 2.0 * omega * b};
}

/// Block metric (I, b, c). Positive definiteness is checked on the 6x6 Gram
/// matrix G with E(w, v) = 1/2 x^T G x, x = (vee(w), v).
class Metric {
 public:
  Metric() : Metric(Mat3::Identity(), Vec3::Zero(), 1.0) {}

  /// Throws SingularMetric unless I is symmetric, c > 0 and G is positive definite.
  Metric(const Mat3& inertia, const Vec3& b, double c) : inertia_(inertia), b_(b), c_(c) {
    if (!inertia.allFinite() || !b.allFinite() || !std::isfinite(c) || (inertia - inertia.transpose()).norm() > 1e-12) {
      throw Error(Errc::SingularMetric, "metric inertia block is not symmetric");
    }
    if (!(c > 0.0)) throw Error(Errc::SingularMetric, "metric scalar c must be positive");
    for (int j = 0; j < 6; ++j) {
      const Vec6 e = Vec6::Unit(j);
      const Momentum m = derivatives(hat(e.head<3>()), e.tail<3>());
      solve_matrix_.col(j) << vee(m.ang), m.lin;
    }
    Vec6 weights;
    weights << 2.0, 2.0, 2.0, 1.0, 1.0, 1.0;
    gram_ = weights.asDiagonal() * solve_matrix_;
    const Eigen::SelfAdjointEigenSolver<Mat6> eig(0.5 * (gram_ + gram_.transpose()));
    if (!(eig.eigenvalues().minCoeff() > 0.0)) {
      throw Error(Errc::SingularMetric, "metric Gram matrix is not positive definite");
    }
    inverse_ = solve_matrix_.inverse();
  }

  const Mat3& inertia() const { return inertia_; }
  const Vec3& coupling() const { return b_; }
  double scalar() const { return c_; }
  const Mat6& gram() const { return gram_; }

  Momentum derivatives(const Mat3& omega, const Vec3& v) const {
    return variational_derivatives(omega, v, inertia_, b_, c_);
  }

  double energy(const Mat3& omega, const Vec3& v) const {
    return 0.5 * pairing(omega, hat(inertia_ * vee(omega)).matrix()) +
           pairing(Mat3(v * b_.transpose() - b_ * v.transpose()), omega) + 0.5 * c_ * v.squaredNorm();
  }

  /// Velocity whose variational derivatives equal `m` (m.ang antisymmetric).
  Velocity velocity(const Momentum& m) const {
    Vec6 rhs;
    rhs << vee(m.ang), m.lin;
    const Vec6 x = inverse_ * rhs;
    return {hat(x.head<3>()), x.tail<3>()};
  }

 private:
  Mat3 inertia_;
  Vec3 b_;
  double c_;
  Mat6 solve_matrix_;
  Mat6 gram_;
  Mat6 inverse_;
};

struct Problem {
  Element q0;
  Element q1;
  Metric metric;
};

/// Solver unknowns: body-frame rotational momentum (x, y), translational
/// momentum p(0) and the relabelling rate alpha.
struct Unknowns {
  Eigen::Vector2d pi0 = Eigen::Vector2d::Zero();
  Vec3 p0 = Vec3::Zero();
  double alpha = 0.0;

  Eigen::VectorXd to_vector() const {
    Eigen::VectorXd x(6);
    x << pi0, p0, alpha;
    return x;
  }
  static Unknowns from_vector(const Eigen::VectorXd& x) {
    if (x.size() != 6) throw Error(Errc::DimensionMismatch, "SE(3) unknowns have 6 components");
    return {x.head<2>(), x.segment<3>(2), x(5)};
  }
};

struct SolveOptions {
  int steps = 400;
  LmOptions lm;
};

using Result = ShootingResult<State, Unknowns>;

/// Left momentum map of the cotangent lift: (-skew(P Q^T + p r^T), -p).
inline Momentum momentum_left(const State& s) {
  return {Antisym3::skew_part(-(s.rot_mom * s.rot.transpose() + s.trans_mom * s.trans.transpose())).matrix(),
          -s.trans_mom};
}

inline Velocity velocity(const State& s, const Metric& metric) { return metric.velocity(momentum_left(s)); }

inline double energy(const State& s, const Metric& metric) {
  const Velocity xi = velocity(s, metric);
  return metric.energy(xi.ang, xi.lin);
}

inline State rhs_original(const State& s, const Metric& metric) {
  const Velocity xi = velocity(s, metric);
  return {xi.ang * s.rot, xi.ang * s.trans + xi.lin, -xi.ang.transpose() * s.rot_mom,
          -xi.ang.transpose() * s.trans_mom};
}

inline State rhs_reparam(const State& s, const Metric& metric, double alpha) {
  State d = rhs_original(s, metric);
  const Mat3& w = z_generator();
  d.rot += alpha * s.rot * w;
  d.rot_mom -= alpha * s.rot_mom * w.transpose();
  return d;
}

/// Right momenta vee(Q^T P) and Q^T p; conserved because the energy is
/// invariant under right multiplication.
inline Vec6 momentum_right_full(const State& s) {
  Vec6 out;
  out << unreduce::momentum_right_full(s.rot, s.rot_mom), s.rot.transpose() * s.trans_mom;
  return out;
}

/// Initial state: P(0) = -hat(Q0 (pi, 0)) Q0 has vanishing z right momentum.
inline State initial_state(const Element& q0, const Eigen::Vector2d& pi0, const Vec3& p0) {
  const so3::State rot = so3::initial_state(q0.rot, pi0);
  return {rot.rot, q0.trans, rot.mom, p0};
}

/// Initial state with unconstrained body-frame rotational momentum.
inline State initial_state_free(const Element& q0, const Vec3& pi0, const Vec3& p0) {
  const Mat3& q = q0.rot;
  return {q, q0.trans, -hat(q * pi0).matrix() * q, p0};
}

inline std::vector<Recorder<State>> recorders(const Metric& metric) {
  return {
      {"J_H", [](const State& s) { return momentum_right_z(s.rot, s.rot_mom); }},
      {"energy", [metric](const State& s) { return energy(s, metric); }},
      {"orthogonality", [](const State& s) { return so3::orthogonality_defect(s.rot); }},
  };
}

inline Trajectory<State> integrate_original(const State& y0, const Metric& metric, int steps) {
  const auto rec = recorders(metric);
  return integrate([&](const State& s) { return rhs_original(s, metric); }, y0, steps, rec);
}

inline Trajectory<State> integrate_reparam(const State& y0, const Metric& metric, double alpha, int steps) {
  const auto rec = recorders(metric);
  return integrate([&](const State& s) { return rhs_reparam(s, metric, alpha); }, y0, steps, rec);
}

inline Trajectory<State> reconstruct(const Trajectory<State>& bar, double alpha, const Metric& metric) {
  Trajectory<State> out;
  out.times = bar.times;
  const auto rec = recorders(metric);
  for (const auto& r : rec) out.diagnostic_names.push_back(r.name);
  for (std::size_t k = 0; k < bar.size(); ++k) {
    const Mat3 r = z_rotation(alpha * bar.times[k]);
    const State& b = bar.states[k];
    State s{b.rot * r, b.trans, b.rot_mom * r, b.trans_mom};
    std::vector<double> row;
    for (const auto& rc : rec) row.push_back(rc.measure(s));
    out.diagnostics.push_back(std::move(row));
    out.states.push_back(s);
  }
  return out;
}

/// Coadjoint action on se(3)^* in 4x4 form: the part of xi^T mu - mu xi^T
/// that pairs with se(3) (antisymmetric top-left block, top-right column).
inline Mat4 ad_star_se3(const Mat4& xi, const Mat4& mu) {
  const Mat4 full = ad_star(xi, mu);
  Mat4 out = Mat4::Zero();
  out.topLeftCorner<3, 3>() = Antisym3::skew_part(full.topLeftCorner<3, 3>()).matrix();
  out.topRightCorner<3, 1>() = full.topRightCorner<3, 1>();
  return out;
}

inline Mat4 as_matrix(const Mat3& ang, const Vec3& lin) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<3, 3>() = ang;
  m.topRightCorner<3, 1>() = lin;
  return m;
}

/// ||d/dt(dE/dxi) + ad*_xi(dE/dxi)||_F per sample with two neighbours on each
/// side (five-point derivative). Entry j belongs to sample j + 2.
inline std::vector<double> euler_poincare_residual(const Trajectory<State>& traj, const Metric& metric) {
  if (traj.size() < 5) throw Error(Errc::InvalidArgument, "Euler-Poincare residual needs at least 5 samples");
  std::vector<Mat4> mu;
  std::vector<Mat4> xi;
  for (const auto& s : traj.states) {
    const Velocity v = velocity(s, metric);
    const Momentum m = metric.derivatives(v.ang, v.lin);
    xi.push_back(as_matrix(v.ang, v.lin));
    mu.push_back(as_matrix(m.ang, m.lin));
  }
  const double dt = traj.dt();
  std::vector<double> out;
  for (std::size_t k = 2; k + 2 < traj.size(); ++k) {
    out.push_back((five_point_difference(mu, k, dt) + ad_star_se3(xi[k], mu[k])).norm());
  }
  return out;
}

/// Max-norm of central-difference derivative minus rhs_original per interior sample.
inline std::vector<double> equivalence_residual(const Trajectory<State>& traj, const Metric& metric) {
  if (traj.size() < 3) throw Error(Errc::InvalidArgument, "equivalence residual needs at least 3 samples");
  const double dt = traj.dt();
  std::vector<double> out;
  for (std::size_t k = 1; k + 1 < traj.size(); ++k) {
    const State fd = central_difference(traj.states, k, dt);
    const State f = rhs_original(traj.states[k], metric);
    out.push_back(std::max({(fd.rot - f.rot).cwiseAbs().maxCoeff(), (fd.trans - f.trans).cwiseAbs().maxCoeff(),
                            (fd.rot_mom - f.rot_mom).cwiseAbs().maxCoeff(),
                            (fd.trans_mom - f.trans_mom).cwiseAbs().maxCoeff()}));
  }
  return out;
}

using Tolerances = so3::Tolerances;

inline ConservationReport conservation_report(const Trajectory<State>& traj, const Metric& metric,
                                              const Tolerances& tol = {}) {
  double right_drift = 0.0;
  double vanishing = 0.0;
  double orth = 0.0;
  const Vec6 right0 = momentum_right_full(traj.front());
  std::vector<double> energies;
  for (const auto& s : traj.states) {
    right_drift = std::max(right_drift, (momentum_right_full(s) - right0).cwiseAbs().maxCoeff());
    vanishing = std::max(vanishing, std::abs(momentum_right_z(s.rot, s.rot_mom)));
    orth = std::max(orth, so3::orthogonality_defect(s.rot));
    energies.push_back(energy(s, metric));
  }
  ConservationReport report{
      {"noether_drift", right_drift, tol.noether},
      {"vanishing_momentum", vanishing, tol.vanishing},
      {"energy_drift", max_drift(energies), tol.energy},
      {"orthogonality", orth, tol.orthogonality},
  };
  if (traj.size() >= 5) {
    report.push_back({"euler_poincare", so3::max_of(euler_poincare_residual(traj, metric)), tol.euler_poincare});
  }
  if (traj.size() >= 3) {
    report.push_back({"equivalence", so3::max_of(equivalence_residual(traj, metric)), tol.equivalence});
  }
  return report;
}

inline Vec6 endpoint_residual(const State& end, const Element& target) {
  Vec6 r;
  r << so3::endpoint_residual(end.rot, target.rot), end.trans - target.trans;
  return r;
}

/// Body-frame rotational momentum and p(0) of the constant velocity that
/// joins q0 to q1, with the translation guessed from the midpoint of the chord.
inline Vec6 fixed_endpoint_start(const Element& q0, const Element& q1, const Metric& metric) {
  const Vec3 omega = vee(log_so3(RotationMatrix::unchecked(q1.rot.matrix() * q0.rot.matrix().transpose())));
  const Vec3 v = (q1.trans - q0.trans) - 0.5 * omega.cross(q0.trans + q1.trans);
  const Momentum m = metric.derivatives(hat(omega), v);
  const Vec3 p0 = -m.lin;
  const Vec3 s = vee(m.ang + Antisym3::skew_part(p0 * q0.trans.transpose()).matrix());
  Vec6 out;
  out << q0.rot.matrix().transpose() * s, p0;
  return out;
}

/// Start from the constant velocity that joins q0 to the bi-invariant nearest
/// orbit point.
inline Unknowns default_start(const Problem& problem) {
  Unknowns start;
  try {
    const double alpha = so3::nearest_orbit_angle(problem.q0.rot, problem.q1.rot);
    const Element target{RotationMatrix::unchecked(problem.q1.rot.matrix() * z_rotation(alpha).matrix()),
                         problem.q1.trans};
    const Vec6 x = fixed_endpoint_start(problem.q0, target, problem.metric);
    start.pi0 = x.head<2>();
    start.p0 = x.tail<3>();
    start.alpha = alpha;
  } catch (const Error&) {
    start = Unknowns{};
  }
  return start;
}

inline Eigen::VectorXd shooting_residual(const Problem& problem, const Eigen::VectorXd& x, int steps) {
  const Unknowns u = Unknowns::from_vector(x);
  const State end = integrate_endpoint([&](const State& s) { return rhs_reparam(s, problem.metric, u.alpha); },
                                       initial_state(problem.q0, u.pi0, u.p0), steps);
  return endpoint_residual(end, problem.q1);
}

/// Reparameterised shooting solve for (pi0, p0, alpha).
inline Result solve(const Problem& problem, const SolveOptions& opts = {}, const Unknowns* start = nullptr) {
  const Unknowns x0 = start ? *start : default_start(problem);
  const ResidualFn residual = [&](const Eigen::VectorXd& x) { return shooting_residual(problem, x, opts.steps); };
  const LmResult lm = solve_lm(residual, x0.to_vector(), opts.lm);
  require_converged(lm, "SE(3) shooting");

  Result result;
  result.unknowns = lm.x;
  result.params = Unknowns::from_vector(lm.x);
  result.residual_norm = lm.report.residual_norm;
  result.iterations = lm.report.iterations;
  result.solver = lm.report;
  result.reparameterised = integrate_reparam(initial_state(problem.q0, result.params.pi0, result.params.p0),
                                             problem.metric, result.params.alpha, opts.steps);
  result.reconstructed = reconstruct(result.reparameterised, result.params.alpha, problem.metric);
  result.cost = trapezoid(result.reconstructed.diagnostic("energy"), result.reconstructed.dt());
  result.diagnostics = conservation_report(result.reconstructed, problem.metric);
  return result;
}

/// Fixed-endpoint solve without the symmetry: unknowns are the full body-frame
/// rotational momentum and p(0). Returns the solved unknowns (6) and the cost.
struct FixedEndpointResult {
  Vec6 unknowns;
  double cost = 0.0;
  LmReport solver;
};

inline FixedEndpointResult solve_fixed_endpoint(const Element& q0, const Element& q1, const Metric& metric,
                                                const Vec6& start, const SolveOptions& opts = {}) {
  auto state0 = [&](const Eigen::VectorXd& x) {
    return initial_state_free(q0, x.head<3>(), x.tail<3>());
  };
  const ResidualFn residual = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const State end = integrate_endpoint([&](const State& s) { return rhs_original(s, metric); }, state0(x),
                                         opts.steps);
    return endpoint_residual(end, q1);
  };
  const LmResult lm = solve_lm(residual, start, opts.lm);
  require_converged(lm, "SE(3) fixed-endpoint shooting");
  FixedEndpointResult out;
  out.unknowns = lm.x;
  out.cost = energy(state0(lm.x), metric);
  out.solver = lm.report;
  return out;
}

/// Row-major flattening: Q (9), r (3), P (9), p (3).
inline std::array<double, 24> flatten(const State& s) {
  std::array<double, 24> out{};
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      out[static_cast<std::size_t>(3 * i + j)] = s.rot(i, j);
      out[static_cast<std::size_t>(12 + 3 * i + j)] = s.rot_mom(i, j);
    }
    out[static_cast<std::size_t>(9 + i)] = s.trans(i);
    out[static_cast<std::size_t>(21 + i)] = s.trans_mom(i);
  }
  return out;
}

inline State unflatten(const double* v) {
  State s;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      s.rot(i, j) = v[3 * i + j];
      s.rot_mom(i, j) = v[12 + 3 * i + j];
    }
    s.trans(i) = v[9 + i];
    s.trans_mom(i) = v[21 + i];
  }
  return s;
}

}  // namespace unreduce::se3
