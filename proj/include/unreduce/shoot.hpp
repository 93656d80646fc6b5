#pragma once

/**
 * @file
 * @brief Damped Gauss-Newton (Levenberg-Marquardt) root finding for shooting
 * residuals with central finite-difference Jacobians.
 */

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "unreduce/error.hpp"
#include "unreduce/integrate.hpp"

namespace unreduce {

/// Map from R^m to R^n. Must be reentrant when Jacobian columns run on
/// several threads.
using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Marquardt scales the damping by diag(J^T J); Levenberg damps every
/// direction equally, by lambda max(diag(J^T J)).
enum class LmDamping { Marquardt, Levenberg };

struct LmOptions {
  double tol = 1e-8;        ///< success when ||residual||_2 <= tol
  int max_iter = 100;
  double fd_step = 1e-6;    ///< relative central-difference step
  double damping = 1e-3;    ///< initial damping parameter lambda
  unsigned threads = 1;     ///< worker threads for Jacobian columns
  LmDamping damping_form = LmDamping::Marquardt;
};

struct LmIteration {
  int iteration = 0;
  double residual_norm = 0.0;  ///< after the iteration
  double damping = 0.0;        ///< damping of the accepted (or last tried) step
  int rejected = 0;            ///< trial steps rejected before acceptance
  bool accepted = false;
};

enum class LmStatus { Converged, NoConvergence };

struct LmReport {
  LmStatus status = LmStatus::NoConvergence;
  int iterations = 0;
  int evaluations = 0;
  double initial_norm = 0.0;
  double residual_norm = 0.0;
  std::string message;
  std::vector<LmIteration> log;
};

struct LmResult {
  Eigen::VectorXd x;
  Eigen::VectorXd residual;
  LmReport report;

  bool converged() const { return report.status == LmStatus::Converged; }
};

/// Central-difference Jacobian with step h_j = step * max(1, |x_j|).
/// Columns are split across `threads` workers; each column is computed by the
/// same arithmetic regardless of the split, so results are bit-identical.
inline Eigen::MatrixXd fd_jacobian(const ResidualFn& residual, const Eigen::VectorXd& x, double step,
                                   unsigned threads = 1, Eigen::Index rows = -1) {
  if (!(step > 0.0)) throw Error(Errc::InvalidArgument, "finite-difference step must be positive");
  const Eigen::Index m = x.size();
  if (rows < 0) rows = residual(x).size();
  Eigen::MatrixXd jac(rows, m);

  auto column = [&](Eigen::Index j) {
    const double h = step * std::max(1.0, std::abs(x(j)));
    Eigen::VectorXd xp = x;
    Eigen::VectorXd xm = x;
    xp(j) += h;
    xm(j) -= h;
    const Eigen::VectorXd rp = residual(xp);
    const Eigen::VectorXd rm = residual(xm);
    if (rp.size() != rows || rm.size() != rows) {
      throw Error(Errc::DimensionMismatch, "residual changed length");
    }
    jac.col(j) = (rp - rm) / (xp(j) - xm(j));
    if (!jac.col(j).allFinite()) {
      throw Error(Errc::NonFiniteResidual, "Jacobian column " + std::to_string(j) + " is not finite");
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(m)));
  if (workers == 1) {
    for (Eigen::Index j = 0; j < m; ++j) column(j);
    return jac;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (Eigen::Index j = w; j < m; j += workers) column(j);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return jac;
}

/// Levenberg-Marquardt on ||residual(x)||^2.
/// Damping is divided by 10 after an accepted step and multiplied by 10 after
/// a rejected one; trial points where the residual throws a library Error or
/// is not finite count as rejections. Accepted steps strictly decrease the
/// residual norm.
///
/// Never throws NoConvergence itself: the status is reported in the result so
/// callers can inspect the iteration log. Throws NonFiniteResidual if the
/// residual at x0 is not finite.
inline LmResult solve_lm(const ResidualFn& residual, const Eigen::VectorXd& x0, const LmOptions& opts = {}) {
  LmResult out;
  out.x = x0;
  out.residual = residual(x0);
  LmReport& rep = out.report;
  rep.evaluations = 1;
  if (!out.residual.allFinite()) throw Error(Errc::NonFiniteResidual, "residual at the initial point is not finite");
  if (out.residual.size() < x0.size()) {
    throw Error(Errc::DimensionMismatch, "fewer residuals than unknowns");
  }

  double norm = out.residual.norm();
  rep.initial_norm = norm;
  double lambda = opts.damping;
  const Eigen::Index n = x0.size();

  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    if (norm <= opts.tol) break;
    const Eigen::MatrixXd jac = fd_jacobian(residual, out.x, opts.fd_step, opts.threads, out.residual.size());
    rep.evaluations += 2 * static_cast<int>(n);
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * out.residual;
    Eigen::VectorXd scale = jtj.diagonal();
    if (opts.damping_form == LmDamping::Levenberg) {
      scale.setConstant(std::max(1e-300, scale.maxCoeff()));
    } else {
      scale = scale.cwiseMax(1e-12 * std::max(1.0, scale.maxCoeff()));
    }

    LmIteration entry;
    entry.iteration = iter;
    while (lambda < 1e16) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * scale;
      const Eigen::VectorXd delta = a.ldlt().solve(-grad);
      const Eigen::VectorXd trial = out.x + delta;
      Eigen::VectorXd r_trial;
      bool ok = delta.allFinite();
      if (ok) {
        try {
          r_trial = residual(trial);
          ++rep.evaluations;
          ok = r_trial.allFinite();
        } catch (const Error&) {
          ok = false;
        }
      }
      entry.damping = lambda;
      if (ok && r_trial.norm() < norm) {
        out.x = trial;
        out.residual = r_trial;
        norm = r_trial.norm();
        entry.accepted = true;
        lambda = std::max(lambda / 10.0, 1e-15);
        break;
      }
      ++entry.rejected;
      lambda *= 10.0;
    }
    entry.residual_norm = norm;
    rep.log.push_back(entry);
    rep.iterations = iter;
    if (!entry.accepted) {
      rep.message = "damping exceeded 1e16 without a decreasing step";
      break;
    }
  }

  rep.residual_norm = norm;
  if (norm <= opts.tol) {
    rep.status = LmStatus::Converged;
    rep.message = "converged";
  } else {
    rep.status = LmStatus::NoConvergence;
    if (rep.message.empty()) rep.message = "maximum iterations reached";
  }
  return out;
}

/// One named invariant check: measured value against its tolerance.
struct Check {
  std::string name;
  double value = 0.0;
  double tolerance = 0.0;

  bool pass() const { return std::isfinite(value) && value <= tolerance; }
};

using ConservationReport = std::vector<Check>;

inline bool all_pass(const ConservationReport& report) {
  return std::all_of(report.begin(), report.end(), [](const Check& c) { return c.pass(); });
}

/// Outcome of a reparameterised shooting solve. `Params` is the typed view
/// of `unknowns` (initial momentum coordinates plus symmetry generator).
template <class State, class Params>
struct ShootingResult {
  Eigen::VectorXd unknowns;
  Params params;
  double residual_norm = 0.0;
  double cost = 0.0;
  int iterations = 0;
  Trajectory<State> reparameterised;
  Trajectory<State> reconstructed;
  ConservationReport diagnostics;
  LmReport solver;
};

/// Throws NoConvergence with the solver message unless `result` converged.
inline void require_converged(const LmResult& result, const std::string& what) {
  if (!result.converged()) {
    throw Error(Errc::NoConvergence, what + ": " + result.report.message + " (residual " +
                                         std::to_string(result.report.residual_norm) + ")");
  }
}

}  // namespace unreduce
