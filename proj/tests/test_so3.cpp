#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "unreduce/so3.hpp"

using namespace unreduce;
using so3::Inertia;
using so3::State;

namespace {

const Inertia kBody(Vec3(1.0, 1.7, 2.6).asDiagonal());

Mat3 random_rotation(std::mt19937& rng, double max_angle = std::numbers::pi * 0.8) {
  std::normal_distribution<double> n;
  const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
  return exp_so3(hat(std::uniform_real_distribution<double>(0.0, max_angle)(rng) * axis));
}

Mat3 random_matrix(std::mt19937& rng, double scale = 1.0) {
  std::normal_distribution<double> n;
  Mat3 m;
  for (int i = 0; i < 9; ++i) m(i) = scale * n(rng);
  return m;
}

double orbit_grid_minimum(const Mat3& q1, int points = 2000) {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < points; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / points;
    const Mat3 x = q1 * z_rotation(theta).matrix();
    best = std::min(best, 0.5 * log_so3(RotationMatrix::unchecked(x)).matrix().squaredNorm());
  }
  return best;
}

double wrap(double a) { return std::remainder(a, 2.0 * std::numbers::pi); }

}  // namespace

TEST(Inertia, ValidatesSpd) {
  EXPECT_THROW(Inertia(Mat3(Vec3(1, -1, 1).asDiagonal())), Error);
  Mat3 asym = Mat3::Identity();
  asym(0, 1) = 0.1;
  EXPECT_THROW(Inertia{asym}, Error);
  try {
    Inertia(Mat3::Zero());
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SingularInertia);
  }
  const Vec3 w(0.3, -0.2, 0.9);
  EXPECT_LT((vee(kBody.solve(kBody.apply(hat(w)))) - w).norm(), 1e-15);
}

TEST(RhsOriginal, ZeroMomentumIsStatic) {
  const State d = so3::rhs_original({Mat3::Identity(), Mat3::Zero()}, kBody);
  EXPECT_EQ(d.rot, Mat3::Zero());
  EXPECT_EQ(d.mom, Mat3::Zero());
}

TEST(RhsOriginal, VelocitySolvesMomentumBalance) {
  std::mt19937 rng(11);
  const State s{random_rotation(rng), random_matrix(rng)};
  const Mat3 omega = so3::angular_velocity(s, kBody);
  EXPECT_LT((omega + omega.transpose()).norm(), 1e-15);
  const Mat3 balance = kBody.apply(omega) + 0.5 * (s.mom * s.rot.transpose() - s.rot * s.mom.transpose());
  EXPECT_LT(balance.norm(), 1e-14);
}

TEST(RhsOriginal, OneParameterSubgroup) {
  std::mt19937 rng(12);
  const Mat3 q0 = random_rotation(rng);
  const Inertia id;
  const State y0{q0, Mat3(-hat(Vec3::UnitZ()).matrix() * q0)};
  ASSERT_LT((so3::angular_velocity(y0, id) - hat(Vec3::UnitZ()).matrix()).norm(), 1e-15);
  const auto traj = so3::integrate_original(y0, id, 400);
  for (std::size_t k = 0; k < traj.size(); k += 50) {
    const Mat3 exact = exp_so3(hat(traj.times[k] * Vec3::UnitZ())).matrix() * q0;
    EXPECT_LT((traj.states[k].rot - exact).norm(), 1e-8);
  }
}

TEST(RhsOriginal, EnergyConservedWithFourthOrderDrift) {
  const State y0{Mat3::Identity(), hat(Vec3(1.2, -0.8, 0.9)).matrix()};
  auto drift = [&](int steps) { return max_drift(so3::integrate_original(y0, kBody, steps).diagnostic("energy")); };
  EXPECT_LE(drift(400), 1e-8);
  const double ratio = drift(25) / drift(50);
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
}

TEST(RhsOriginal, OrthogonalityDrift) {
  const State y0{Mat3::Identity(), hat(Vec3(1.2, -0.8, 0.9)).matrix()};
  const auto orth = so3::integrate_original(y0, kBody, 400).diagnostic("orthogonality");
  EXPECT_LE(*std::max_element(orth.begin(), orth.end()), 1e-9);
}

TEST(RhsReparam, ReducesToOriginalAtZeroTheta) {
  std::mt19937 rng(13);
  for (int k = 0; k < 20; ++k) {
    const State s{random_rotation(rng), random_matrix(rng)};
    const State a = so3::rhs_original(s, kBody);
    const State b = so3::rhs_reparam(s, kBody, 0.0);
    EXPECT_EQ(a.rot, b.rot);
    EXPECT_EQ(a.mom, b.mom);
  }
}

TEST(RhsReparam, PureRelabellingFlow) {
  std::mt19937 rng(14);
  const Mat3 q0 = random_rotation(rng);
  const double c = 0.8;
  const auto traj = so3::integrate_reparam({q0, Mat3::Zero()}, kBody, c, 400);
  for (std::size_t k = 0; k < traj.size(); k += 40) {
    const Mat3 exact = q0 * exp_so3(Antisym3(c * traj.times[k] * z_generator())).matrix();
    EXPECT_LT((traj.states[k].rot - exact).norm(), 1e-12);
  }
}

TEST(RhsReparam, RightMomentumConserved) {
  std::mt19937 rng(15);
  for (int k = 0; k < 20; ++k) {
    const State y0{random_rotation(rng), random_matrix(rng)};
    const double theta = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
    const auto jh = so3::integrate_reparam(y0, kBody, theta, 400).diagnostic("J_H");
    EXPECT_LE(max_drift(jh), 1e-8);
  }
}

TEST(Reconstruct, IdentityAtZeroThetaAndInvariantPairing) {
  std::mt19937 rng(16);
  const State y0{random_rotation(rng), random_matrix(rng)};
  const auto bar0 = so3::integrate_reparam(y0, kBody, 0.0, 50);
  const auto rec0 = so3::reconstruct(bar0, 0.0, kBody);
  for (std::size_t k = 0; k < bar0.size(); ++k) EXPECT_EQ(rec0.states[k].rot, bar0.states[k].rot);

  const auto bar = so3::integrate_reparam(y0, kBody, 1.3, 50);
  const auto rec = so3::reconstruct(bar, 1.3, kBody);
  for (std::size_t k = 0; k < bar.size(); ++k) {
    const Mat3 a = rec.states[k].mom * rec.states[k].rot.transpose();
    const Mat3 b = bar.states[k].mom * bar.states[k].rot.transpose();
    EXPECT_LT((a - b).norm(), 1e-12);
  }
}

TEST(Reconstruct, SatisfiesOriginalSystem) {
  std::mt19937 rng(17);
  const State y0 = so3::initial_state(random_rotation(rng), Eigen::Vector2d(0.9, -1.1));
  auto residual = [&](int steps) {
    const auto bar = so3::integrate_reparam(y0, kBody, 1.4, steps);
    return so3::max_of(so3::equivalence_residual(so3::reconstruct(bar, 1.4, kBody), kBody));
  };
  const double r400 = residual(400);
  const double r800 = residual(800);
  EXPECT_LE(r400, 1e-4);
  EXPECT_GT(r400 / r800, 3.5);
  EXPECT_LT(r400 / r800, 4.5);

  // The unreconstructed trajectory is not a solution of the original system.
  const auto bar = so3::integrate_reparam(y0, kBody, 1.4, 400);
  EXPECT_GT(so3::max_of(so3::equivalence_residual(bar, kBody)), 1e-2);
}

TEST(InitialState, VanishingRightMomentum) {
  std::mt19937 rng(18);
  const Mat3 q0 = random_rotation(rng);
  const State s = so3::initial_state(q0, Eigen::Vector2d(0.4, -2.0));
  EXPECT_LT(std::abs(momentum_right_z(s.rot, s.mom)), 1e-14);
  EXPECT_LT((vee(momentum_left_so3(s.rot, s.mom)) - q0 * Vec3(0.4, -2.0, 0.0)).norm(), 1e-14);
}

TEST(Solve, IdentityMatching) {
  std::mt19937 rng(19);
  const RotationMatrix q0(random_rotation(rng));
  const so3::Result r = so3::solve({q0, q0, kBody});
  EXPECT_LT(r.params.pi0.norm(), 1e-12);
  EXPECT_LT(std::abs(r.params.theta), 1e-12);
  EXPECT_LT(r.cost, 1e-20);
}

TEST(Solve, OrbitGridOracle) {
  const RotationMatrix q1(exp_so3(hat(0.7 * Vec3::UnitX())).matrix() * exp_so3(hat(1.1 * Vec3::UnitZ())).matrix());
  const so3::Result r = so3::solve({RotationMatrix(), q1, Inertia()});
  EXPECT_NEAR(r.cost, orbit_grid_minimum(q1), 1e-4);
  EXPECT_LE(r.residual_norm, 1e-8);
}

TEST(Solve, ReconstructedEndpointOnOrbit) {
  std::mt19937 rng(20);
  const so3::Problem problem{RotationMatrix(random_rotation(rng)), RotationMatrix(random_rotation(rng)), kBody};
  const so3::Result r = so3::solve(problem);
  const Mat3 expected = problem.q1.matrix() * z_rotation(r.params.theta).matrix();
  EXPECT_LT((r.reconstructed.back().rot - expected).norm(), 1e-7);
  EXPECT_LT((r.reparameterised.back().rot - problem.q1.matrix()).norm(), 1e-7);
}

TEST(Solve, VanishingMomentumAndDiagnostics) {
  std::mt19937 rng(21);
  for (int k = 0; k < 3; ++k) {
    const so3::Problem problem{RotationMatrix(random_rotation(rng)), RotationMatrix(random_rotation(rng, 2.0)),
                               kBody};
    const so3::Result r = so3::solve(problem);
    for (double j : r.reconstructed.diagnostic("J_H")) EXPECT_LE(std::abs(j), 1e-8);
    for (const auto& c : r.diagnostics) EXPECT_TRUE(c.pass()) << c.name << " = " << c.value;
  }
}

TEST(Solve, OrbitInvariance) {
  std::mt19937 rng(22);
  const so3::Problem base{RotationMatrix(random_rotation(rng)), RotationMatrix(random_rotation(rng, 2.0)), kBody};
  const so3::Result r0 = so3::solve(base);
  for (double phi : {0.4, -1.3, 2.2}) {
    so3::Problem shifted = base;
    shifted.q1 = RotationMatrix::unchecked(base.q1.matrix() * z_rotation(phi).matrix());
    const so3::Result r = so3::solve(shifted);
    EXPECT_NEAR(r.cost, r0.cost, 1e-8);
    EXPECT_NEAR(wrap(r.params.theta - (r0.params.theta - phi)), 0.0, 1e-6);
  }
}

TEST(EulerPoincare, ConstantVelocityIsExact) {
  const State y0{Mat3::Identity(), Mat3(-hat(Vec3(0.3, 0.4, -0.2)).matrix())};
  const auto traj = so3::integrate_original(y0, Inertia(), 100);
  EXPECT_LE(so3::max_of(so3::euler_poincare_residual(traj, Inertia())), 1e-12);
}

TEST(EulerPoincare, SolvedGeodesicFourthOrder) {
  std::mt19937 rng(23);
  const State y0 = so3::initial_state(random_rotation(rng), Eigen::Vector2d(1.5, -0.7));
  auto residual = [&](int steps) {
    return so3::max_of(so3::euler_poincare_residual(so3::integrate_original(y0, kBody, steps), kBody));
  };
  EXPECT_LE(residual(400), 1e-4);
  const double ratio = residual(50) / residual(100);
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
}

TEST(EulerPoincare, PerturbedVelocityNegativeControl) {
  const State y0 = so3::initial_state(Mat3::Identity(), Eigen::Vector2d(1.5, -0.7));
  const Mat3 drift = hat(Vec3(0.2, 0.0, 0.1));
  auto rhs = [&](const State& s) {
    const Mat3 omega = so3::angular_velocity(s, kBody) + drift;
    return State{omega * s.rot, -omega.transpose() * s.mom};
  };
  const auto traj = integrate(rhs, y0, 400);
  EXPECT_GE(so3::max_of(so3::euler_poincare_residual(traj, kBody)), 1e-2);
}

TEST(Flatten, RoundTrip) {
  std::mt19937 rng(24);
  const State s{random_rotation(rng), random_matrix(rng)};
  const auto flat = so3::flatten(s);
  const State back = so3::unflatten(flat.data());
  EXPECT_EQ(back.rot, s.rot);
  EXPECT_EQ(back.mom, s.mom);
}
