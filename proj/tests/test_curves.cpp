#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>

#include "unreduce/curves.hpp"

using namespace unreduce;
using namespace unreduce::curves;
using std::numbers::pi;

namespace {

// Smooth closed curve and momentum built from a few fixed Fourier modes, so
// that the same continuum data is sampled at every N.
Points smooth_curve(Eigen::Index n) {
  const Eigen::VectorXd s = periodic_grid(n);
  Points q(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = 2 * pi * s(i);
    const double r = 1.0 + 0.15 * std::cos(2 * a) - 0.08 * std::sin(3 * a);
    q.col(i) = Vec2(0.2 + r * std::cos(a), -0.1 + 0.9 * r * std::sin(a));
  }
  return q;
}

Eigen::VectorXd smooth_amplitude(Eigen::Index n) {
  const Eigen::ArrayXd a = 2 * pi * periodic_grid(n).array();
  return (0.3 + 0.1 * a.cos() - 0.05 * (2 * a).sin()).matrix();
}

State normal_state(Eigen::Index n) {
  const Points q = smooth_curve(n);
  Points p = normals(q);
  p.array().rowwise() *= smooth_amplitude(n).transpose().array();
  return {q, p};
}

Eigen::VectorXd smooth_nu(Eigen::Index n) {
  const Eigen::ArrayXd a = 2 * pi * periodic_grid(n).array();
  return (0.05 + 0.03 * a.sin() + 0.01 * (2 * a).cos()).matrix();
}

MatchParams planted(Eigen::Index n, double scale = 1.0) {
  const Eigen::ArrayXd a = 2 * pi * periodic_grid(n).array();
  return {(scale * (0.3 + 0.15 * (2 * a).cos())).matrix(), (0.05 + 0.03 * a.sin()).matrix()};
}

State random_state(std::mt19937& rng, Eigen::Index n) {
  std::normal_distribution<double> g;
  State s{Points(2, n), Points(2, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    s.q.col(i) = Vec2(g(rng), g(rng));
    s.p.col(i) = Vec2(g(rng), g(rng));
  }
  return s;
}

Points roll(const Points& q, Eigen::Index k) {
  const Eigen::Index n = q.cols();
  Points out(2, n);
  for (Eigen::Index i = 0; i < n; ++i) out.col(i) = q.col((i + k) % n);
  return out;
}

double max_diff(const Points& a, const Points& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST(GaussianKernel, RejectsNonPositiveWidth) {
  EXPECT_THROW(GaussianKernel(0.0), Error);
  EXPECT_THROW(GaussianKernel(-0.5), Error);
  EXPECT_THROW(GaussianKernel(std::nan("")), Error);
  EXPECT_DOUBLE_EQ(GaussianKernel(0.5)(Vec2(0, 0), Vec2(0.5, 0)), std::exp(-0.5));
}

TEST(VelocityField, ZeroMomentumAndSingleLandmark) {
  std::mt19937 rng(1);
  State s = random_state(rng, 10);
  s.p.setZero();
  EXPECT_EQ(velocity_field(s.q, s.p, GaussianKernel(0.7), Vec2(0.3, 0.1)), Vec2::Zero());

  Points q(2, 1);
  q << 0.4, -0.2;
  Points p(2, 1);
  p << 1.0, 0.0;
  EXPECT_LT((velocity_field(q, p, GaussianKernel(0.7), q.col(0)) - Vec2(spacing(1), 0.0)).norm(), 1e-15);
}

TEST(VelocityField, ReflectionSymmetry) {
  std::mt19937 rng(2);
  const GaussianKernel k(0.6);
  Eigen::Matrix2d reflect;
  reflect << 1, 0, 0, -1;
  for (int trial = 0; trial < 10; ++trial) {
    const State s = random_state(rng, 12);
    const Vec2 x = s.q.col(0) + Vec2(0.1, 0.2);
    const Vec2 u = velocity_field(s.q, s.p, k, x);
    const Vec2 ur = velocity_field(reflect * s.q, reflect * s.p, k, reflect * x);
    EXPECT_LT((reflect * u - ur).norm(), 1e-14);
  }
}

TEST(RhsOriginal, MatchesHamiltonianGradient) {
  std::mt19937 rng(3);
  const GaussianKernel k(0.8);
  for (int trial = 0; trial < 5; ++trial) {
    const State s = random_state(rng, 9);
    const double ds = spacing(9);
    const State f = rhs_original(s, k);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < 9; ++i) {
      for (int c = 0; c < 2; ++c) {
        State a = s;
        State b = s;
        a.p(c, i) += h;
        b.p(c, i) -= h;
        const double dh_dp = (hamiltonian(a, k) - hamiltonian(b, k)) / (2 * h);
        a = s;
        b = s;
        a.q(c, i) += h;
        b.q(c, i) -= h;
        const double dh_dq = (hamiltonian(a, k) - hamiltonian(b, k)) / (2 * h);
        EXPECT_LE(std::abs(f.q(c, i) - dh_dp / ds), 1e-6 * std::max(1.0, std::abs(f.q(c, i))));
        EXPECT_LE(std::abs(f.p(c, i) + dh_dq / ds), 1e-6 * std::max(1.0, std::abs(f.p(c, i))));
      }
    }
  }
}

TEST(RhsOriginal, SingleLandmarkMovesStraight) {
  State s{Points(2, 1), Points(2, 1)};
  s.q << 0.3, 0.4;
  s.p << 0.5, -1.0;
  const auto traj = integrate_original(s, GaussianKernel(0.5), 400);
  EXPECT_EQ(rhs_original(s, GaussianKernel(0.5)).p, Points::Zero(2, 1));
  EXPECT_LT(max_diff(traj.back().q, s.q + s.p), 1e-13);
}

TEST(RhsOriginal, DistantLandmarksAreIndependent) {
  const GaussianKernel k(0.2);
  State s{Points(2, 2), Points(2, 2)};
  s.q << 0.0, 3.0, 0.0, 0.0;
  s.p << 0.4, -0.2, 0.6, 0.8;
  const auto traj = integrate_original(s, k, 400);
  const double ds = spacing(2);
  EXPECT_LT(max_diff(traj.back().q, s.q + s.p * ds), 1e-8);
  EXPECT_LT(max_diff(traj.back().p, s.p), 1e-8);
}

TEST(RhsOriginal, HamiltonianConserved) {
  const auto traj = integrate_original(normal_state(32), GaussianKernel(0.5), 400);
  EXPECT_LE(max_drift(traj.diagnostic("energy")), 1e-8);
}

TEST(Gram, PositiveDefinite) {
  for (double sigma : {0.1, 0.25, 0.5}) {
    const Eigen::MatrixXd g = gram(circle(32, 1.0), GaussianKernel(sigma));
    EXPECT_LT((g - g.transpose()).norm(), 1e-15);
    EXPECT_EQ(g.llt().info(), Eigen::Success) << "sigma " << sigma;
  }
}

TEST(RhsReparam, ZeroFieldMatchesOriginal) {
  std::mt19937 rng(4);
  const State s = random_state(rng, 16);
  const GaussianKernel k(0.7);
  const State a = rhs_original(s, k);
  const State b = rhs_reparam(s, k, Eigen::VectorXd::Zero(16));
  EXPECT_EQ(a.q, b.q);
  EXPECT_EQ(a.p, b.p);
  EXPECT_THROW(rhs_reparam(s, k, Eigen::VectorXd::Zero(15)), Error);
}

TEST(RhsReparam, PureAdvection) {
  const Eigen::Index n = 64;
  const Points q0 = smooth_curve(n);
  const double c = 0.3;
  const auto traj = integrate_reparam({q0, Points::Zero(2, n)}, GaussianKernel(0.5), Eigen::VectorXd::Constant(n, c),
                                      400);
  const TrigInterpolant exact{Eigen::MatrixXd(q0)};
  const Eigen::VectorXd s = periodic_grid(n);
  double err = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) err = std::max(err, (traj.back().q.col(i) - exact(s(i) + c)).norm());
  EXPECT_LE(err, 1e-8);
  EXPECT_EQ(traj.back().p, Points::Zero(2, n));
}

TEST(RhsReparam, TangentialMomentumConserved) {
  auto drift = [](Eigen::Index n) {
    const auto traj = integrate_reparam(normal_state(n), GaussianKernel(0.5), smooth_nu(n), 400);
    return max_drift(traj.diagnostic("J_S_max"));
  };
  const double d16 = drift(16);
  const double d64 = drift(64);
  EXPECT_LE(d64, 1e-6);
  EXPECT_LT(d64, d16);
}

TEST(TangentialMomentum, NormalRadialAndTangential) {
  const State s = normal_state(32);
  EXPECT_LT(tangential_momentum(s.q, s.p).cwiseAbs().maxCoeff(), 1e-12);

  const double r = 1.3;
  const Points q = circle(64, r);
  EXPECT_LT(tangential_momentum(q, q).cwiseAbs().maxCoeff(), 1e-12);

  const double m = 0.7;
  Points tangential(2, 64);
  for (Eigen::Index i = 0; i < 64; ++i) tangential.col(i) = m * Vec2(-q(1, i), q(0, i)) / r;
  const Eigen::VectorXd js = tangential_momentum(q, tangential);
  EXPECT_LT((js.array() - m * 2 * pi * r).abs().maxCoeff(), 1e-12 * m * 2 * pi * r);
}

TEST(Normals, RejectDegenerateTangent) {
  EXPECT_THROW(normals(Points::Zero(2, 8)), Error);
  const Points n = normals(circle(16, 2.0));
  for (Eigen::Index i = 0; i < 16; ++i) EXPECT_NEAR(n.col(i).dot(circle(16, 1.0).col(i)), -1.0, 1e-12);
}

TEST(Reconstruct, ZeroFieldIsIdentity) {
  const Eigen::Index n = 32;
  const GaussianKernel k(0.5);
  const auto bar = integrate_reparam(normal_state(n), k, Eigen::VectorXd::Zero(n), 100);
  const auto rec = reconstruct(bar, Eigen::VectorXd::Zero(n), k);
  for (std::size_t j = 0; j < bar.size(); j += 10) {
    EXPECT_LT(max_diff(rec.states[j].q, bar.states[j].q), 1e-12);
    EXPECT_LT(max_diff(rec.states[j].p, bar.states[j].p), 1e-12);
  }
}

TEST(Reconstruct, ConstantFieldUndoesShift) {
  const Eigen::Index n = 32;
  const GaussianKernel k(0.5);
  const Points q0 = circle(n, 1.0);
  const double c = 3.0 / n;
  const auto bar = integrate_reparam({q0, Points::Zero(2, n)}, k, Eigen::VectorXd::Constant(n, c), 200);
  EXPECT_LT(max_diff(bar.back().q, roll(q0, 3)), 1e-10);
  const auto rec = reconstruct(bar, Eigen::VectorXd::Constant(n, c), k);
  for (const auto& s : rec.states) EXPECT_LT(max_diff(s.q, q0), 1e-10);
}

TEST(Reconstruct, SatisfiesOriginalEquations) {
  const Eigen::Index n = 32;
  const GaussianKernel k(0.5);
  const DiscreteCurve templ(circle(n, 1.0));
  const MatchParams m = planted(n);
  State y0{templ.points(), normals(templ.points())};
  y0.p.array().rowwise() *= m.amplitude.transpose().array();
  auto residual = [&](int steps) {
    const auto rec = reconstruct(integrate_reparam(y0, k, m.nu, steps), m.nu, k);
    return max_abs(equivalence_residual(rec, k));
  };
  const double r100 = residual(100);
  const double r200 = residual(200);
  EXPECT_LE(residual(400), 1e-4);
  EXPECT_GT(r100 / r200, 3.5);
  EXPECT_LT(r100 / r200, 4.5);

  const auto bar = integrate_reparam(y0, k, m.nu, 400);
  EXPECT_GE(max_abs(equivalence_residual(bar, k)), 1e-2);
}

TEST(Reconstruct, ConservationReportPasses) {
  const Eigen::Index n = 64;
  const GaussianKernel k(0.5);
  const auto rec = reconstruct(integrate_reparam(normal_state(n), k, smooth_nu(n), 400), smooth_nu(n), k);
  for (const auto& c : conservation_report(rec, k)) EXPECT_TRUE(c.pass()) << c.name << " = " << c.value;
}

TEST(EulerPoincare, OriginalTrajectoryAndNegativeControl) {
  const GaussianKernel k(0.5);
  const State y0{normal_state(32).q, 4.0 * normal_state(32).p};
  auto residual = [&](int steps) { return max_abs(euler_poincare_residual(integrate_original(y0, k, steps), k)); };
  EXPECT_LE(residual(400), 1e-4);
  const double ratio = residual(50) / residual(100);
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);

  const auto wrong = integrate(
      [&](const State& s) {
        State d = rhs_original(s, k);
        d.p += 0.5 * s.p;
        return d;
      },
      y0, 400);
  EXPECT_GE(max_abs(euler_poincare_residual(wrong, k)), 1e-2);
}

TEST(BestConstantShift, RecoversNodeShift) {
  const Points q = smooth_curve(32);
  EXPECT_NEAR(best_constant_shift(q, roll(q, 5)), 5.0 / 32, 1e-9);
  EXPECT_NEAR(best_constant_shift(q, roll(q, 30)), -2.0 / 32, 1e-9);
  EXPECT_NEAR(best_constant_shift(q, q), 0.0, 1e-9);
}

TEST(SolveMatching, IdentityTarget) {
  const DiscreteCurve c(smooth_curve(32));
  const Result r = solve_matching(c, c, GaussianKernel(0.5));
  EXPECT_LT(r.params.amplitude.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(r.params.nu.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(r.cost, 1e-20);
}

TEST(SolveMatching, PureRelabelling) {
  const Eigen::Index n = 32;
  const Points q = circle(n, 1.0);
  const Result r = solve_matching(DiscreteCurve(q), DiscreteCurve(roll(q, 3)), GaussianKernel(0.5));
  EXPECT_LE(r.cost, 1e-8);
  EXPECT_LE((r.params.nu.array() - 3.0 / n).abs().maxCoeff(), 1e-3);
  EXPECT_LE((r.reparameterised.back().q - roll(q, 3)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SolveMatching, ConcentricCircles) {
  const Eigen::Index n = 32;
  const Result r = solve_matching(DiscreteCurve(circle(n, 1.0)), DiscreteCurve(circle(n, 1.2)), GaussianKernel(0.5));
  EXPECT_LE(r.residual_norm, 1e-6);
  // The unit normal points inward on a counter-clockwise curve.
  const double mean = r.params.amplitude.mean();
  EXPECT_LT(mean, 0.0);
  EXPECT_LE((r.params.amplitude.array() - mean).abs().maxCoeff(), 0.01 * std::abs(mean));
  EXPECT_LE(r.reconstructed.diagnostic("J_S_max").back(), 1e-5);
  for (const auto& c : r.diagnostics) EXPECT_TRUE(c.pass()) << c.name << " = " << c.value;
}

TEST(SolveMatching, RecoversPlantedSolution) {
  const Eigen::Index n = 32;
  const GaussianKernel k(0.5);
  const DiscreteCurve templ(circle(n, 1.0));
  const MatchParams truth = planted(n, 4.0);
  const Result r = solve_matching(templ, DiscreteCurve(forward_endpoint(templ, k, truth, 400)), k);
  EXPECT_LE((r.params.amplitude - truth.amplitude).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_LE((r.params.nu - truth.nu).cwiseAbs().maxCoeff(), 1e-4);
  for (const auto& c : r.diagnostics) EXPECT_TRUE(c.pass()) << c.name << " = " << c.value;
  const double r400 = max_abs(equivalence_residual(r.reconstructed, k));
  const auto coarse = reconstruct(integrate_reparam(r.reparameterised.front(), k, r.params.nu, 200), r.params.nu, k);
  const double ratio = max_abs(equivalence_residual(coarse, k)) / r400;
  EXPECT_GT(ratio, 3.5);
  EXPECT_LT(ratio, 4.5);
}

TEST(SolveMatching, RotationInvariantCost) {
  const Eigen::Index n = 16;
  const GaussianKernel k(0.5);
  const DiscreteCurve templ(smooth_curve(n));
  const Points qb = forward_endpoint(templ, k, planted(n), 400);
  const Result r0 = solve_matching(templ, DiscreteCurve(qb), k);
  const Eigen::Matrix2d rot = Eigen::Rotation2Dd(0.7).toRotationMatrix();
  const Result r1 = solve_matching(DiscreteCurve(rot * templ.points()), DiscreteCurve(rot * qb), k);
  EXPECT_NEAR(r1.cost, r0.cost, 1e-6);
}

TEST(SolveMatching, TranslationEquivariant) {
  const Eigen::Index n = 16;
  const GaussianKernel k(0.5);
  const DiscreteCurve templ(smooth_curve(n));
  const Points qb = forward_endpoint(templ, k, planted(n), 400);
  const Vec2 d(0.5, -1.0);
  const Result r0 = solve_matching(templ, DiscreteCurve(qb), k);
  const Result r1 = solve_matching(DiscreteCurve(templ.points().colwise() + d), DiscreteCurve(qb.colwise() + d), k);
  EXPECT_LT((r1.unknowns - r0.unknowns).cwiseAbs().maxCoeff(), 1e-6);
  for (std::size_t j = 0; j < r0.reconstructed.size(); j += 40) {
    EXPECT_LT(max_diff(r1.reconstructed.states[j].q, r0.reconstructed.states[j].q.colwise() + d), 1e-6);
  }
}

TEST(ForwardEndpoint, RejectsWrongLengths) {
  const DiscreteCurve templ(circle(16, 1.0));
  EXPECT_THROW(forward_endpoint(templ, GaussianKernel(0.5), planted(15), 10), Error);
}

TEST(SolveMatching, MismatchedSizes) {
  try {
    solve_matching(DiscreteCurve(circle(16, 1.0)), DiscreteCurve(circle(32, 1.0)), GaussianKernel(0.5));
    FAIL() << "expected DimensionMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DimensionMismatch);
  }
}

TEST(NuBasis, FourierColumns) {
  MatchOptions opts;
  opts.basis = NuBasis::Fourier;
  EXPECT_EQ(nu_basis(32, opts).cols(), 17);
  opts.fourier_modes = 20;
  EXPECT_THROW(nu_basis(32, opts), Error);
}

TEST(Landmarks, SingleLandmarkStraightLine) {
  Points q0(2, 1);
  q0 << 0.0, 0.0;
  Points q1(2, 1);
  q1 << 1.0, 0.5;
  const LandmarkResult r = solve_landmarks(q0, q1, GaussianKernel(0.5));
  EXPECT_LT(max_diff(r.p0, q1 - q0), 1e-12);
  EXPECT_NEAR(r.cost, 0.5 * 1.25, 1e-12);
}

TEST(Landmarks, PairConverges) {
  Points q0(2, 2);
  q0 << 0.0, 1.0, 0.0, 0.0;
  Points q1(2, 2);
  q1 << 0.2, 1.1, 0.5, -0.3;
  const LandmarkResult r = solve_landmarks(q0, q1, GaussianKernel(0.6));
  EXPECT_LT(max_diff(r.trajectory.back().q, q1), 1e-6);
}

TEST(DiscreteCurve, Validation) {
  EXPECT_THROW(DiscreteCurve(circle(7, 1.0)), Error);
  Points bad = circle(8, 1.0);
  bad(0, 3) = std::nan("");
  EXPECT_THROW(DiscreteCurve{bad}, Error);
  Points bowtie(2, 8);
  bowtie << 0, 1, 2, 2, 1, 0, -1, -1, 0, 1, 0, 1, 0, 1, 0, 1;
  EXPECT_FALSE(is_simple(bowtie));
  EXPECT_THROW(DiscreteCurve{bowtie}, Error);
  EXPECT_NO_THROW(DiscreteCurve(smooth_curve(8)));
}

TEST(Resample, EquallySpacedOnSquare) {
  Points square(2, 4);
  square << 0, 1, 1, 0, 0, 0, 1, 1;
  const Points r = resample_arclength(square, 8);
  for (Eigen::Index i = 0; i < 8; ++i) EXPECT_NEAR((r.col((i + 1) % 8) - r.col(i)).norm(), 0.5, 1e-12);
  EXPECT_LT((r.col(1) - Vec2(0.5, 0.0)).norm(), 1e-15);
}

TEST(CurveCsv, RoundTripIsExact) {
  const auto path = std::filesystem::temp_directory_path() / "unreduce_curve_roundtrip.csv";
  const Points q = smooth_curve(24);
  write_curve_csv(path.string(), q);
  EXPECT_EQ(read_curve_csv(path.string()), q);
  {
    std::ofstream out(path);
    out << "1,2\n3\n";
  }
  EXPECT_THROW(read_curve_csv(path.string()), Error);
  std::filesystem::remove(path);
  EXPECT_THROW(read_curve_csv(path.string()), Error);
}
