#include <relayflow/dynamics.hpp>

#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "systems.hpp"

using namespace relayflow;

namespace {

// Affine field A x + b as expressions.
VectorField linear_field(const Matrix& A, const Eigen::VectorXd& b) {
  const int n = static_cast<int>(A.rows());
  std::vector<Expression> comps;
  for (int i = 0; i < n; ++i) {
    Expression e = Expression::constant(b[i], n);
    for (int j = 0; j < n; ++j) e = e + Expression::constant(A(i, j), n) * Expression::variable(j + 1, n);
    comps.push_back(e);
  }
  return VectorField(comps);
}

Matrix spiral() { return (Matrix(2, 2) << -0.5, -1.0, 1.0, -0.5).finished(); }

}  // namespace

TEST(Dynamics, LinearFlowMatchesMatrixExponential) {
  const std::vector<Matrix> cases = {
      spiral(),
      (Matrix(2, 2) << 0.0, -1.0, 1.0, 0.0).finished(),
      (Matrix(2, 2) << 0.3, 0.0, 0.0, -0.7).finished(),
      (Matrix(3, 3) << -0.2, 1.0, 0.0, -1.0, -0.2, 0.5, 0.0, 0.1, -1.0).finished(),
  };
  for (const Matrix& A : cases) {
    const int n = static_cast<int>(A.rows());
    const Flow flow(linear_field(A, Eigen::VectorXd::Zero(n)), 4.0);
    const Point x0 = Point::LinSpaced(n, 0.7, -0.4);
    for (double t : {0.0, 0.1, 0.5, 1.0, 2.0, 3.3, 4.0}) {
      const Point exact = (Matrix(A * t)).exp() * x0;
      EXPECT_LT((flow_map(flow, t, x0) - exact).norm(), 1e-8) << "t = " << t;
    }
  }
}

TEST(Dynamics, DenseOutputMatchesMatrixExponential) {
  const Matrix A = spiral();
  const Flow flow(linear_field(A, Eigen::VectorXd::Zero(2)), 4.0);
  const Point x0 = testsys::pt(1.0, 0.5);
  const Trajectory traj = integrate_trajectory(flow, 4.0, x0);
  for (int k = 0; k <= 400; ++k) {
    const double t = 0.01 * k;
    EXPECT_LT((traj.at(t) - Matrix(A * t).exp() * x0).norm(), 1e-8) << t;
  }
}

TEST(Dynamics, JacobianMatchesMatrixExponential) {
  const Matrix A = spiral();
  const Flow flow(linear_field(A, (Eigen::VectorXd(2) << 0.5, -0.5).finished()), 4.0);
  for (double t : {0.5, 2.0, -1.5}) {
    const Matrix J = flow_jacobian(flow, t, testsys::pt(0.2, 0.1));
    EXPECT_LT((J - Matrix(A * t).exp()).norm(), 1e-8) << t;
  }
}

TEST(Dynamics, JacobianMatchesFiniteDifferencesOnNonlinearField) {
  const Flow flow(VectorField({parse("x2", 2), parse("-sin(x1) - 0.1*x2", 2)}), 3.0);
  const Point x = testsys::pt(0.8, -0.3);
  const Matrix J = flow_jacobian(flow, 2.5, x);
  for (int j = 0; j < 2; ++j) {
    const double h = 1e-6;
    Point xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const Point col = (flow_map(flow, 2.5, xp) - flow_map(flow, 2.5, xm)) / (2 * h);
    EXPECT_LT((col - J.col(j)).norm(), 1e-6);
  }
}

// Group property and backward consistency on random probes.
TEST(Dynamics, GroupAndBackwardProperties) {
  const testsys::RelaySystem b = testsys::system_b();
  const Flow& flow = b.flow(1);
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> coord(-2.0, 2.0), time(0.0, 4.0);
  const double tol = 10 * 1e-8;
  for (int probe = 0; probe < 100; ++probe) {
    const Point x = testsys::pt(coord(gen), coord(gen));
    const double s = time(gen), t = time(gen);
    const Point composed = flow_map(flow, t, flow_map(flow, s, x));
    const Point direct = flow_map(flow, s + t, x);
    EXPECT_LT((composed - direct).norm(), tol * std::max(1.0, x.norm()));
    const Point back = flow_map(flow, -t, flow_map(flow, t, x));
    EXPECT_LT((back - x).norm(), tol * std::max(1.0, x.norm()));
  }
}

TEST(Dynamics, RotationPreservesRadius) {
  const RelaySystem rotor = testsys::rotor();
  const Flow& flow = rotor.flow(1);
  const Point x = testsys::pt(1.3, 0.0);
  const Trajectory traj = integrate_trajectory(flow, 2 * std::numbers::pi, x);
  for (const auto& st : traj.steps()) EXPECT_NEAR(st.y1.norm(), 1.3, 1e-9);
  EXPECT_LT((traj.final_state() - x).norm(), 1e-9);
  const Point quarter = flow_map(flow, std::numbers::pi / 2, testsys::pt(1.0, 0.0));
  EXPECT_NEAR(quarter[0], 0.0, 1e-10);
  EXPECT_NEAR(quarter[1], 1.0, 1e-10);
}

TEST(Dynamics, BackwardTrajectorySpan) {
  const RelaySystem rotor = testsys::rotor();
  const Flow& flow = rotor.flow(1);
  const Trajectory traj = integrate_trajectory(flow, -1.0, testsys::pt(1.0, 0.0));
  EXPECT_DOUBLE_EQ(traj.end(), -1.0);
  const Point y = traj.at(-0.5);
  EXPECT_NEAR(y[0], std::cos(0.5), 1e-10);
  EXPECT_NEAR(y[1], -std::sin(0.5), 1e-10);
  EXPECT_THROW(traj.at(0.5), OutOfSpan);
  EXPECT_THROW(traj.at(-1.5), OutOfSpan);
}

TEST(Dynamics, TimeCapAndDimensionChecks) {
  const RelaySystem rotor = testsys::rotor();
  const Flow& flow = rotor.flow(1);
  EXPECT_THROW(flow_map(flow, 11 * std::numbers::pi, testsys::pt(1.0, 0.0)), IntegrationError);
  EXPECT_THROW(flow_map(flow, 1.0, Point::Zero(3)), std::invalid_argument);
  EXPECT_EQ(flow_map(flow, 0.0, testsys::pt(1.0, 2.0)), testsys::pt(1.0, 2.0));
}

TEST(Dynamics, BlowUpReportsIntegrationError) {
  const Flow flow(VectorField({parse("x1^2", 2), parse("0", 2)}), 5.0);
  EXPECT_THROW(flow_map(flow, 2.0, testsys::pt(1.0, 0.0)), IntegrationError);
}
