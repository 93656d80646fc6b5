#pragma once

/**
 * @file
 * @brief Matching of closed planar curves under a Gaussian kernel metric,
 * with the parameterisation of the target left free.
 *
 * A curve is sampled at s_i = i / N. With ds = 1 / N the velocity generated
 * by momenta p_j on the nodes q_j is
 *   u(x) = sum_j K(x, q_j) p_j ds,   K(x, y) = exp(-|x - y|^2 / (2 sigma^2)),
 * and the kernel Hamiltonian is H = 1/2 sum_ij K(q_i, q_j) p_i . p_j ds^2.
 * Original system: q_i' = u(q_i), p_i' = -grad u(q_i)^T p_i.
 *
 * Reparameterised system with a relabelling field nu on the circle:
 *   qbar' = u(qbar) + nu D qbar,   pbar' = -grad u^T pbar + D(nu pbar),
 * where D is the Fourier derivative on the grid. Solutions map back through
 * q(s, t) = qbar(phi(s, t), t), p(s, t) = pbar(phi(s, t), t) phi_s(s, t)
 * with phi(., t) the time-t flow of -nu.
 */

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "unreduce/error.hpp"
#include "unreduce/integrate.hpp"
#include "unreduce/periodic.hpp"
#include "unreduce/shoot.hpp"

namespace unreduce::curves {

using Points = Eigen::Matrix2Xd;
using Vec2 = Eigen::Vector2d;

struct GaussianKernel {
  double sigma = 1.0;

  GaussianKernel() = default;
  /// Throws InvalidArgument unless sigma is finite and positive.
  explicit GaussianKernel(double s) : sigma(s) {
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(Errc::InvalidArgument, "kernel width sigma must be positive");
  }

  double operator()(const Vec2& x, const Vec2& y) const {
    return std::exp(-(x - y).squaredNorm() / (2.0 * sigma * sigma));
  }
  /// Gradient in the first argument.
  Vec2 gradient(const Vec2& x, const Vec2& y) const { return -(x - y) / (sigma * sigma) * (*this)(x, y); }
};

namespace detail {

inline double orient(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

inline bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double o1 = orient(a, b, c);
  const double o2 = orient(a, b, d);
  const double o3 = orient(c, d, a);
  const double o4 = orient(c, d, b);
  if (((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) && ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0))) return true;
  auto on_segment = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return std::min(p.x(), q.x()) <= r.x() && r.x() <= std::max(p.x(), q.x()) && std::min(p.y(), q.y()) <= r.y() &&
           r.y() <= std::max(p.y(), q.y());
  };
  return (o1 == 0 && on_segment(a, b, c)) || (o2 == 0 && on_segment(a, b, d)) ||
         (o3 == 0 && on_segment(c, d, a)) || (o4 == 0 && on_segment(c, d, b));
}

}  // namespace detail

/// True when no two non-adjacent edges of the closed polygon meet.
inline bool is_simple(const Points& q) {
  const Eigen::Index n = q.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec2 a = q.col(i);
    const Vec2 b = q.col((i + 1) % n);
    if ((a - b).norm() == 0.0) return false;
    for (Eigen::Index j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;
      if (detail::segments_intersect(a, b, q.col(j), q.col((j + 1) % n))) return false;
    }
  }
  return true;
}

/// Closed planar curve sampled on the uniform periodic grid.
class DiscreteCurve {
 public:
  static constexpr Eigen::Index kMinNodes = 8;

  /// Throws InvalidArgument for fewer than 8 nodes, non-finite points or a
  /// self-intersecting polygon.
  explicit DiscreteCurve(Points points) : points_(std::move(points)) {
    if (points_.cols() < kMinNodes) throw Error(Errc::InvalidArgument, "a curve needs at least 8 nodes");
    if (!points_.allFinite()) throw Error(Errc::InvalidArgument, "curve has non-finite points");
    if (!is_simple(points_)) throw Error(Errc::InvalidArgument, "curve is not simple");
  }

  const Points& points() const { return points_; }
  Eigen::Index size() const { return points_.cols(); }

 private:
  Points points_;
};

struct State {
  Points q;
  Points p;
};

inline State operator+(const State& a, const State& b) { return {a.q + b.q, a.p + b.p}; }
inline State operator*(double s, const State& a) { return {s * a.q, s * a.p}; }
inline bool all_finite(const State& s) { return s.q.allFinite() && s.p.allFinite(); }

inline double spacing(Eigen::Index n) { return 1.0 / static_cast<double>(n); }

inline Eigen::MatrixXd gram(const Points& q, const GaussianKernel& kernel) {
  const Eigen::Index n = q.cols();
  Eigen::MatrixXd k(n, n);
  const double scale = -0.5 / (kernel.sigma * kernel.sigma);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      k(i, j) = k(j, i) = std::exp(scale * (q.col(i) - q.col(j)).squaredNorm());
    }
  }
  return k;
}

inline Vec2 velocity_field(const Points& q, const Points& p, const GaussianKernel& kernel, const Vec2& x) {
  Vec2 u = Vec2::Zero();
  for (Eigen::Index j = 0; j < q.cols(); ++j) u += kernel(x, q.col(j)) * p.col(j);
  return u * spacing(q.cols());
}

/// u at every node.
inline Points velocities(const Points& q, const Points& p, const GaussianKernel& kernel) {
  return p * gram(q, kernel) * spacing(q.cols());
}

inline double hamiltonian(const Points& q, const Points& p, const GaussianKernel& kernel) {
  const double ds = spacing(q.cols());
  return 0.5 * (p.transpose() * p).cwiseProduct(gram(q, kernel)).sum() * ds * ds;
}

inline double hamiltonian(const State& s, const GaussianKernel& kernel) { return hamiltonian(s.q, s.p, kernel); }

/// u and -grad u^T p at the nodes, sharing one kernel evaluation per pair.
inline State kernel_flow(const Points& q, const Points& p, const GaussianKernel& kernel) {
  const Eigen::Index n = q.cols();
  const double ds = spacing(n);
  const double inv_s2 = 1.0 / (kernel.sigma * kernel.sigma);
  Eigen::ArrayXd k(n * (n - 1) / 2);
  for (Eigen::Index i = 0, idx = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j, ++idx) k(idx) = -0.5 * inv_s2 * (q.col(i) - q.col(j)).squaredNorm();
  }
  k = k.exp();
  Points u = p;
  Points dp = Points::Zero(2, n);
  for (Eigen::Index i = 0, idx = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j, ++idx) {
      const double kij = k(idx);
      u.col(i) += kij * p.col(j);
      u.col(j) += kij * p.col(i);
      const Vec2 f = (q.col(i) - q.col(j)) * (inv_s2 * kij * p.col(i).dot(p.col(j)));
      dp.col(i) += f;
      dp.col(j) -= f;
    }
  }
  return {u * ds, dp * ds};
}

inline State rhs_original(const State& s, const GaussianKernel& kernel) { return kernel_flow(s.q, s.p, kernel); }

inline State rhs_reparam(const State& s, const GaussianKernel& kernel, const Eigen::VectorXd& nu) {
  if (nu.size() != s.q.cols()) throw Error(Errc::DimensionMismatch, "relabelling field has the wrong length");
  State d = kernel_flow(s.q, s.p, kernel);
  const auto row_nu = nu.transpose().array();
  d.q.array() += spectral_derivative(Eigen::MatrixXd(s.q)).array().rowwise() * row_nu;
  Eigen::MatrixXd nu_p = s.p;
  nu_p.array().rowwise() *= row_nu;
  d.p += spectral_derivative(nu_p);
  return d;
}

/// J_S = p . D q per node.
inline Eigen::VectorXd tangential_momentum(const Points& q, const Points& p) {
  return p.cwiseProduct(spectral_derivative(Eigen::MatrixXd(q))).colwise().sum().transpose();
}

/// Unit normals rotate(D q, +90 degrees) / |D q|. Throws InvalidArgument on
/// a degenerate tangent.
inline Points normals(const Points& q) {
  const Eigen::MatrixXd t = spectral_derivative(Eigen::MatrixXd(q));
  Points n(2, q.cols());
  for (Eigen::Index i = 0; i < q.cols(); ++i) {
    const double len = t.col(i).norm();
    if (!(len >= 1e-12)) throw Error(Errc::InvalidArgument, "degenerate tangent at node " + std::to_string(i));
    n.col(i) = Vec2(-t(1, i), t(0, i)) / len;
  }
  return n;
}

/// Linear momentum sum p ds and angular momentum sum q x p ds of the left
/// Euclidean action.
inline Eigen::Vector3d left_momentum(const State& s) {
  const double ds = spacing(s.q.cols());
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (Eigen::Index i = 0; i < s.q.cols(); ++i) {
    out.head<2>() += s.p.col(i);
    out(2) += s.q(0, i) * s.p(1, i) - s.q(1, i) * s.p(0, i);
  }
  return out * ds;
}

inline std::vector<Recorder<State>> recorders(const GaussianKernel& kernel) {
  return {
      {"J_S_max", [](const State& s) { return tangential_momentum(s.q, s.p).cwiseAbs().maxCoeff(); }},
      {"energy", [kernel](const State& s) { return hamiltonian(s, kernel); }},
  };
}

/// Energy only; for landmark sets too small for the periodic derivative.
inline std::vector<Recorder<State>> landmark_recorders(const GaussianKernel& kernel) {
  return {{"energy", [kernel](const State& s) { return hamiltonian(s, kernel); }}};
}

inline Trajectory<State> integrate_original(const State& y0, const GaussianKernel& kernel, int steps) {
  const auto rec = y0.q.cols() >= 4 ? recorders(kernel) : landmark_recorders(kernel);
  return integrate([&](const State& s) { return rhs_original(s, kernel); }, y0, steps, rec);
}

inline Trajectory<State> integrate_reparam(const State& y0, const GaussianKernel& kernel, const Eigen::VectorXd& nu,
                                           int steps) {
  const auto rec = recorders(kernel);
  return integrate([&](const State& s) { return rhs_reparam(s, kernel, nu); }, y0, steps, rec);
}

/// Maps a reparameterised trajectory to the original system. The flow of -nu
/// is integrated with the same step count as the trajectory; node values of
/// qbar, pbar are evaluated off the grid by trigonometric interpolation.
/// Throws FlowNotDiffeomorphic if the relabelling map degenerates.
inline Trajectory<State> reconstruct(const Trajectory<State>& bar, const Eigen::VectorXd& nu,
                                     const GaussianKernel& kernel) {
  if (bar.size() < 2) throw Error(Errc::InvalidArgument, "reconstruction needs at least 2 samples");
  const Eigen::Index n = bar.front().q.cols();
  if (nu.size() != n) throw Error(Errc::DimensionMismatch, "relabelling field has the wrong length");
  const auto maps = flow_s1_samples(-nu, periodic_grid(n), bar.times.back(), bar.steps());

  Trajectory<State> out;
  out.times = bar.times;
  const auto rec = recorders(kernel);
  for (const auto& r : rec) out.diagnostic_names.push_back(r.name);
  for (std::size_t k = 0; k < bar.size(); ++k) {
    Eigen::MatrixXd channels(4, n);
    channels << bar.states[k].q, bar.states[k].p;
    const TrigInterpolant interp(channels);
    State s{Points(2, n), Points(2, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd v = interp(maps[k].position(i));
      s.q.col(i) = v.head<2>();
      s.p.col(i) = v.tail<2>() * maps[k].jacobian(i);
    }
    std::vector<double> row;
    for (const auto& rc : rec) row.push_back(rc.measure(s));
    out.diagnostics.push_back(std::move(row));
    out.states.push_back(std::move(s));
  }
  return out;
}

/// Polynomial test fields of degree <= 2 used for the weak Euler-Poincare
/// residual: gamma(x) = monomial(x) e_c, as values and Jacobians.
namespace detail {

struct TestField {
  int px;
  int py;
  int component;
};

inline std::vector<TestField> test_fields() {
  std::vector<TestField> out;
  for (int deg = 0; deg <= 2; ++deg) {
    for (int px = deg; px >= 0; --px) {
      for (int c = 0; c < 2; ++c) out.push_back({px, deg - px, c});
    }
  }
  return out;
}

inline double ipow(double x, int k) { return k == 0 ? 1.0 : (k == 1 ? x : x * x); }

}  // namespace detail

/// Weak form of the Euler-Poincare equation for the singular momentum
/// m = sum_i p_i delta(x - q_i) ds: for each polynomial test field gamma,
///   d/dt <m, gamma> - <m, grad gamma u - grad u gamma> = 0.
/// Returns, per sample with two neighbours on each side, the largest absolute
/// residual over the test fields (five-point derivative). The fields are
/// evaluated in coordinates centred on the initial centroid.
inline std::vector<double> euler_poincare_residual(const Trajectory<State>& traj, const GaussianKernel& kernel) {
  if (traj.size() < 5) throw Error(Errc::InvalidArgument, "Euler-Poincare residual needs at least 5 samples");
  const auto fields = detail::test_fields();
  const Vec2 centre = traj.front().q.rowwise().mean();
  const std::size_t nf = fields.size();
  const double dt = traj.dt();

  std::vector<Eigen::VectorXd> pairing(traj.size(), Eigen::VectorXd(nf));
  std::vector<Eigen::VectorXd> bracket(traj.size(), Eigen::VectorXd(nf));
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const State& s = traj.states[k];
    const Eigen::Index n = s.q.cols();
    const double ds = spacing(n);
    const Eigen::MatrixXd kmat = gram(s.q, kernel);
    const Points u = s.p * kmat * ds;
    // grad u at node i: sum_j p_j grad_x K(q_i, q_j)^T ds.
    std::vector<Eigen::Matrix2d> grad_u(static_cast<std::size_t>(n), Eigen::Matrix2d::Zero());
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const Vec2 g = -(s.q.col(i) - s.q.col(j)) / (kernel.sigma * kernel.sigma) * kmat(i, j);
        grad_u[static_cast<std::size_t>(i)] += s.p.col(j) * g.transpose() * ds;
      }
    }
    for (std::size_t f = 0; f < nf; ++f) {
      const auto& tf = fields[f];
      double m_gamma = 0.0;
      double m_bracket = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double x = s.q(0, i) - centre.x();
        const double y = s.q(1, i) - centre.y();
        const double mono = detail::ipow(x, tf.px) * detail::ipow(y, tf.py);
        const Vec2 dmono(tf.px == 0 ? 0.0 : tf.px * detail::ipow(x, tf.px - 1) * detail::ipow(y, tf.py),
                         tf.py == 0 ? 0.0 : tf.py * detail::ipow(x, tf.px) * detail::ipow(y, tf.py - 1));
        Vec2 gamma = Vec2::Zero();
        gamma(tf.component) = mono;
        Eigen::Matrix2d grad_gamma = Eigen::Matrix2d::Zero();
        grad_gamma.row(tf.component) = dmono.transpose();
        const Vec2 lie = grad_gamma * u.col(i) - grad_u[static_cast<std::size_t>(i)] * gamma;
        m_gamma += s.p.col(i).dot(gamma);
        m_bracket += s.p.col(i).dot(lie);
      }
      pairing[k](static_cast<Eigen::Index>(f)) = m_gamma * ds;
      bracket[k](static_cast<Eigen::Index>(f)) = m_bracket * ds;
    }
  }
  std::vector<double> out;
  for (std::size_t k = 2; k + 2 < traj.size(); ++k) {
    const Eigen::VectorXd d = five_point_difference(pairing, k, dt);
    out.push_back((d - bracket[k]).cwiseAbs().maxCoeff());
  }
  return out;
}

/// Max-norm of central-difference derivative minus rhs_original per interior sample.
inline std::vector<double> equivalence_residual(const Trajectory<State>& traj, const GaussianKernel& kernel) {
  if (traj.size() < 3) throw Error(Errc::InvalidArgument, "equivalence residual needs at least 3 samples");
  const double dt = traj.dt();
  std::vector<double> out;
  for (std::size_t k = 1; k + 1 < traj.size(); ++k) {
    const State fd = central_difference(traj.states, k, dt);
    const State f = rhs_original(traj.states[k], kernel);
    out.push_back(std::max((fd.q - f.q).cwiseAbs().maxCoeff(), (fd.p - f.p).cwiseAbs().maxCoeff()));
  }
  return out;
}

struct Tolerances {
  double noether = 1e-5;        ///< per-node J_S drift
  double left_momentum = 1e-8;  ///< drift of linear and angular momentum
  double vanishing = 1e-5;
  double energy = 1e-8;
  double euler_poincare = 1e-4;
  double equivalence = 1e-4;
};

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// Invariant checks on a trajectory of the original curve system.
inline ConservationReport conservation_report(const Trajectory<State>& traj, const GaussianKernel& kernel,
                                              const Tolerances& tol = {}) {
  const Eigen::VectorXd js0 = tangential_momentum(traj.front().q, traj.front().p);
  const Eigen::Vector3d left0 = left_momentum(traj.front());
  double js_drift = 0.0;
  double js_max = 0.0;
  double left_drift = 0.0;
  std::vector<double> energies;
  for (const auto& s : traj.states) {
    const Eigen::VectorXd js = tangential_momentum(s.q, s.p);
    js_drift = std::max(js_drift, (js - js0).cwiseAbs().maxCoeff());
    js_max = std::max(js_max, js.cwiseAbs().maxCoeff());
    left_drift = std::max(left_drift, (left_momentum(s) - left0).cwiseAbs().maxCoeff());
    energies.push_back(hamiltonian(s, kernel));
  }
  ConservationReport report{
      {"noether_drift", js_drift, tol.noether},
      {"noether_left_momentum", left_drift, tol.left_momentum},
      {"vanishing_momentum", js_max, tol.vanishing},
      {"energy_drift", max_drift(energies), tol.energy},
  };
  if (traj.size() >= 5) {
    report.push_back({"euler_poincare", max_abs(euler_poincare_residual(traj, kernel)), tol.euler_poincare});
  }
  if (traj.size() >= 3) {
    report.push_back({"equivalence", max_abs(equivalence_residual(traj, kernel)), tol.equivalence});
  }
  return report;
}

enum class NuBasis { Nodewise, Fourier };

struct MatchOptions {
  int steps = 400;
  LmOptions lm{.tol = 1e-6, .damping_form = LmDamping::Levenberg};
  NuBasis basis = NuBasis::Nodewise;
  int fourier_modes = 0;  ///< M for the Fourier basis; 0 selects N / 4
};

/// Solved shape signal and relabelling field.
struct MatchParams {
  Eigen::VectorXd amplitude;  ///< |pbar_i(0)| signed along the unit normal
  Eigen::VectorXd nu;
};

using Result = ShootingResult<State, MatchParams>;

/// Basis matrix mapping relabelling coordinates to nodal values of nu.
inline Eigen::MatrixXd nu_basis(Eigen::Index n, const MatchOptions& opts) {
  if (opts.basis == NuBasis::Nodewise) return Eigen::MatrixXd::Identity(n, n);
  const Eigen::Index m = opts.fourier_modes > 0 ? opts.fourier_modes : n / 4;
  if (2 * m + 1 > n) throw Error(Errc::InvalidArgument, "too many Fourier modes for the grid");
  const Eigen::VectorXd s = periodic_grid(n);
  Eigen::MatrixXd b(n, 2 * m + 1);
  b.col(0).setOnes();
  for (Eigen::Index k = 1; k <= m; ++k) {
    const Eigen::ArrayXd arg = 2.0 * std::numbers::pi * static_cast<double>(k) * s.array();
    b.col(2 * k - 1) = arg.cos().matrix();
    b.col(2 * k) = arg.sin().matrix();
  }
  return b;
}

/// Constant relabelling c minimising sum_i |q_A(s_i + c) - q_B(s_i)|^2 over a
/// grid of 8N shifts, followed by golden-section refinement.
inline double best_constant_shift(const Points& qa, const Points& qb) {
  const Eigen::Index n = qa.cols();
  const TrigInterpolant interp{Eigen::MatrixXd(qa)};
  const Eigen::VectorXd s = periodic_grid(n);
  auto misfit = [&](double c) {
    double e = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) e += (interp(s(i) + c) - qb.col(i)).squaredNorm();
    return e;
  };
  const int samples = static_cast<int>(8 * n);
  double best = 0.0;
  double best_val = misfit(0.0);
  for (int j = 1; j < samples; ++j) {
    const double c = static_cast<double>(j) / samples - (2 * j >= samples ? 1.0 : 0.0);
    const double val = misfit(c);
    if (val < best_val) {
      best_val = val;
      best = c;
    }
  }
  double lo = best - 1.0 / samples;
  double hi = best + 1.0 / samples;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo);
  double x2 = lo + g * (hi - lo);
  double f1 = misfit(x1);
  double f2 = misfit(x2);
  for (int it = 0; it < 60; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = misfit(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = misfit(x2);
    }
  }
  return 0.5 * (lo + hi);
}

/// Shooting problem in solver coordinates: x = (sigma * amplitudes, nu coefficients).
class MatchingProblem {
 public:
  MatchingProblem(const DiscreteCurve& templ, const DiscreteCurve& target, const GaussianKernel& kernel,
                  const MatchOptions& opts)
      : qa_(templ.points()), qb_(target.points()), kernel_(kernel), opts_(opts) {
    if (templ.size() != target.size()) {
      throw Error(Errc::DimensionMismatch, "template and target must have the same number of nodes");
    }
    normals_ = normals(qa_);
    basis_ = nu_basis(qa_.cols(), opts_);
  }

  Eigen::Index nodes() const { return qa_.cols(); }
  Eigen::Index unknowns() const { return nodes() + basis_.cols(); }

  MatchParams params(const Eigen::VectorXd& x) const {
    if (x.size() != unknowns()) throw Error(Errc::DimensionMismatch, "wrong number of matching unknowns");
    return {x.head(nodes()) / kernel_.sigma, basis_ * x.tail(basis_.cols())};
  }

  State initial_state(const MatchParams& m) const {
    Points p = normals_;
    p.array().rowwise() *= m.amplitude.transpose().array();
    return {qa_, p};
  }

  Eigen::VectorXd residual(const Eigen::VectorXd& x) const {
    const MatchParams m = params(x);
    const State end = integrate_endpoint([&](const State& s) { return rhs_reparam(s, kernel_, m.nu); },
                                         initial_state(m), opts_.steps);
    return (end.q - qb_).reshaped();
  }

  /// Zero momentum and the best constant relabelling, projected on the basis.
  Eigen::VectorXd default_start() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(unknowns());
    const double c = best_constant_shift(qa_, qb_);
    x.tail(basis_.cols()) = basis_.colPivHouseholderQr().solve(Eigen::VectorXd::Constant(nodes(), c));
    return x;
  }

  const GaussianKernel& kernel() const { return kernel_; }
  const MatchOptions& options() const { return opts_; }

 private:
  Points qa_;
  Points qb_;
  GaussianKernel kernel_;
  MatchOptions opts_;
  Points normals_;
  Eigen::MatrixXd basis_;
};

/// Endpoint qbar(1) of the reparameterised system started from `templ` with
/// normal momentum amplitudes and relabelling field `m`. A target produced
/// this way is reachable exactly by the discrete system.
inline Points forward_endpoint(const DiscreteCurve& templ, const GaussianKernel& kernel, const MatchParams& m,
                               int steps) {
  const Eigen::Index n = templ.size();
  if (m.amplitude.size() != n || m.nu.size() != n) {
    throw Error(Errc::DimensionMismatch, "amplitude and relabelling field must have one value per node");
  }
  Points p = normals(templ.points());
  p.array().rowwise() *= m.amplitude.transpose().array();
  return integrate_endpoint([&](const State& s) { return rhs_reparam(s, kernel, m.nu); }, State{templ.points(), p},
                            steps)
      .q;
}

/// Reparameterised matching of `templ` onto `target`. The cost is the time
/// integral of the kernel Hamiltonian. Throws NoConvergence,
/// FlowNotDiffeomorphic or DimensionMismatch.
inline Result solve_matching(const DiscreteCurve& templ, const DiscreteCurve& target, const GaussianKernel& kernel,
                             const MatchOptions& opts = {}, const Eigen::VectorXd* start = nullptr) {
  const MatchingProblem problem(templ, target, kernel, opts);
  const Eigen::VectorXd x0 = start ? *start : problem.default_start();
  const ResidualFn residual = [&](const Eigen::VectorXd& x) { return problem.residual(x); };
  const LmResult lm = solve_lm(residual, x0, opts.lm);
  require_converged(lm, "curve matching");

  Result result;
  result.unknowns = lm.x;
  result.params = problem.params(lm.x);
  result.residual_norm = lm.report.residual_norm;
  result.iterations = lm.report.iterations;
  result.solver = lm.report;
  result.reparameterised =
      integrate_reparam(problem.initial_state(result.params), kernel, result.params.nu, opts.steps);
  result.reconstructed = reconstruct(result.reparameterised, result.params.nu, kernel);
  result.cost = trapezoid(result.reparameterised.diagnostic("energy"), result.reparameterised.dt());
  result.diagnostics = conservation_report(result.reconstructed, kernel);
  return result;
}

/// Fixed-endpoint landmark shooting for the unknown initial momenta, with the
/// same ds = 1 / N weighting. The default start is the straight-line momentum
/// (q1 - q0) / ds, which is exact for a single landmark.
struct LandmarkResult {
  Points p0;
  double cost = 0.0;
  Trajectory<State> trajectory;
  LmReport solver;
};

inline LandmarkResult solve_landmarks(const Points& q0, const Points& q1, const GaussianKernel& kernel,
                                      const MatchOptions& opts = {}, const Points* start = nullptr) {
  if (q0.cols() != q1.cols()) throw Error(Errc::DimensionMismatch, "landmark sets differ in size");
  const double ds = spacing(q0.cols());
  const ResidualFn residual = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const Points p = x.reshaped(2, q0.cols());
    const State end =
        integrate_endpoint([&](const State& s) { return rhs_original(s, kernel); }, State{q0, p}, opts.steps);
    return (end.q - q1).reshaped();
  };
  const Points guess = start ? *start : Points((q1 - q0) / ds);
  const LmResult lm = solve_lm(residual, guess.reshaped(), opts.lm);
  require_converged(lm, "landmark shooting");
  LandmarkResult out;
  out.p0 = lm.x.reshaped(2, q0.cols());
  out.solver = lm.report;
  out.trajectory = integrate_original(State{q0, out.p0}, kernel, opts.steps);
  out.cost = trapezoid(out.trajectory.diagnostic("energy"), out.trajectory.dt());
  return out;
}

/// Resamples a closed polygon to n nodes equally spaced in arclength, starting
/// at its first vertex.
inline Points resample_arclength(const Points& q, Eigen::Index n) {
  const Eigen::Index m = q.cols();
  if (m < 2 || n < 1) throw Error(Errc::InvalidArgument, "resampling needs a polygon and a positive count");
  std::vector<double> cumulative(static_cast<std::size_t>(m) + 1, 0.0);
  for (Eigen::Index i = 0; i < m; ++i) {
    cumulative[static_cast<std::size_t>(i) + 1] =
        cumulative[static_cast<std::size_t>(i)] + (q.col((i + 1) % m) - q.col(i)).norm();
  }
  const double total = cumulative.back();
  if (!(total > 0.0)) throw Error(Errc::InvalidArgument, "polygon has zero length");
  Points out(2, n);
  std::size_t seg = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const double target = total * static_cast<double>(k) / static_cast<double>(n);
    while (seg + 1 < cumulative.size() - 1 && cumulative[seg + 1] <= target) ++seg;
    const double len = cumulative[seg + 1] - cumulative[seg];
    const double f = len > 0.0 ? (target - cumulative[seg]) / len : 0.0;
    const auto i = static_cast<Eigen::Index>(seg);
    out.col(k) = (1.0 - f) * q.col(i) + f * q.col((i + 1) % m);
  }
  return out;
}

/// Reads x,y rows without a header.
inline Points read_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidArgument, "cannot open curve file " + path);
  std::vector<Vec2> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double x = 0.0;
    double y = 0.0;
    std::string extra;
    if (!(row >> x >> y) || (row >> extra)) {
      throw Error(Errc::InvalidArgument, path + ":" + std::to_string(lineno) + ": expected two numbers");
    }
    rows.emplace_back(x, y);
  }
  Points out(2, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = rows[i];
  return out;
}

inline void write_curve_csv(const std::string& path, const Points& q) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::InvalidArgument, "cannot write curve file " + path);
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < q.cols(); ++i) out << q(0, i) << ',' << q(1, i) << '\n';
}

/// Circle of radius r about c, counter-clockwise, first node on the +x axis.
inline Points circle(Eigen::Index n, double r, const Vec2& c = Vec2::Zero()) {
  Points q(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    q.col(i) = c + r * Vec2(std::cos(a), std::sin(a));
  }
  return q;
}

}  // namespace unreduce::curves
