#include <gtest/gtest.h>

#include <cmath>

#include "submhe/errors.hpp"
#include "submhe/mhe_core.hpp"
#include "submhe/solver.hpp"
#include "test_support.hpp"

using namespace submhe;
using namespace submhe::testing;

namespace {

LtiSystem scalar_system(double a, double b, double c) {
  LtiSystem s;
  s.A = MatrixXd::Constant(1, 1, a);
  s.B = MatrixXd::Constant(1, 1, b);
  s.C = MatrixXd::Constant(1, 1, c);
  s.x_box = s.u_box = s.y_box = s.w1_box = s.w2_box = Box::unbounded(1);
  return s;
}

IossCertificate unit_weights(Index nx, Index ny, double eta) {
  return IossCertificate{MatrixXd::Identity(nx, nx), MatrixXd::Identity(nx + ny, nx + ny),
                         MatrixXd::Identity(ny, ny), eta};
}

// Cost of a trajectory written out stage by stage.
double trajectory_cost(const MheProblem& p, const IossCertificate& c, const std::vector<VectorXd>& x,
                       const std::vector<VectorXd>& w, const std::vector<VectorXd>& yhat) {
  const int h = p.horizon;
  double cost = 2 * std::pow(c.eta, h) * (x[0] - p.x_prior).dot(c.P * (x[0] - p.x_prior));
  for (int i = 0; i < h; ++i) {
    const double d = std::pow(c.eta, h - 1 - i);
    const VectorXd r = yhat[size_t(i)] - p.y_window[size_t(i)];
    cost += d * (2 * w[size_t(i)].dot(c.Q * w[size_t(i)]) + r.dot(c.R * r));
  }
  return cost;
}

}  // namespace

TEST(ComputeWeight, PriorOnlyAtZeroHorizon) {
  const IossCertificate c = unit_weights(3, 1, 0.8);
  EXPECT_EQ(compute_weight(0, c), 2.0 * MatrixXd::Identity(3, 3));
}

TEST(ComputeWeight, OneStepScalar) {
  const IossCertificate c = unit_weights(1, 1, 0.8);
  MatrixXd expected = MatrixXd::Zero(4, 4);
  expected.diagonal() << 1.6, 2, 2, 1;
  EXPECT_LT((compute_weight(1, c) - expected).norm(), 1e-15);
}

TEST(ComputeWeight, ExampleMaxEigenvalueIsBlockMax) {
  const IossCertificate c = example_certificate();
  const MatrixXd H = compute_weight(5, c);
  const double lp = Eigen::SelfAdjointEigenSolver<MatrixXd>(c.P).eigenvalues().maxCoeff();
  double expected = 2 * std::pow(0.8, 5) * lp;
  for (int j = 0; j < 5; ++j) expected = std::max({expected, 2 * std::pow(0.8, j), std::pow(0.8, j)});
  EXPECT_NEAR(Eigen::SelfAdjointEigenSolver<MatrixXd>(H).eigenvalues().maxCoeff(), expected, 1e-12);
  EXPECT_NEAR(max_eigenvalue(H), expected, 1e-12);
}

TEST(BuildProblem, WindowLengthMismatch) {
  const LtiSystem s = example_system();
  const IossCertificate c = example_certificate();
  try {
    build_problem(s, c, VectorXd::Zero(4), {VectorXd::Zero(2)}, {}, 5, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "WindowLengthMismatch");
  }
}

TEST(BuildProblem, PriorOnlyOptimumIsPrior) {
  const LtiSystem s = example_system();
  const IossCertificate c = example_certificate();
  const VectorXd prior = (VectorXd(4) << 7, -7, 3, -5).finished();
  const MheProblem p = build_problem(s, c, prior, {}, {}, 5, 0);
  EXPECT_EQ(p.nz(), 4);
  const OracleResult o = solve_oracle(p, 1e-12);
  EXPECT_LT((o.z_star.z - prior).norm(), 1e-10);
}

TEST(BuildProblem, CollapsedDisturbanceBoxes) {
  LtiSystem s = scalar_system(1.0, 0.0, 1.0);
  s.w1_box = s.w2_box = Box{VectorXd::Zero(1), VectorXd::Zero(1)};
  const IossCertificate c = unit_weights(1, 1, 0.8);
  const MheProblem p = build_problem(s, c, VectorXd::Constant(1, 2.0), {VectorXd::Zero(1)},
                                     {VectorXd::Constant(1, 1.0)}, 5, 1);
  // Free variables: x0 and w = [w1; w2]; the boxes pin w to zero.
  EXPECT_EQ(p.nv(), 3);
  const OracleResult o = solve_oracle(p, 1e-12);
  EXPECT_NEAR(o.z_star.z[1], 0.0, 1e-15);
  EXPECT_NEAR(o.z_star.z[2], 0.0, 1e-15);
  EXPECT_NEAR(o.z_star.z[3], o.z_star.z[0], 1e-14);  // y = c x0
}

TEST(BuildProblem, ReferenceLayout) {
  const LtiSystem s = example_system();
  const IossCertificate c = example_certificate();
  const VectorXd prior = VectorXd::LinSpaced(4, 1, 4);
  std::vector<VectorXd> u{VectorXd::Zero(2), VectorXd::Zero(2)}, y{VectorXd::Constant(1, 5), VectorXd::Constant(1, 6)};
  const MheProblem p = build_problem(s, c, prior, u, y, 5, 2);
  VectorXd expected = VectorXd::Zero(4 + 2 * 6);
  expected.head(4) = prior;
  expected[4 + 5] = 5;
  expected[4 + 6 + 5] = 6;
  EXPECT_EQ(p.reference, expected);
}

TEST(BuildProblem, LiftReproducesDynamicsAndCost) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const RandomInstance r = random_instance(rng, 6, 5);
    const MheProblem& p = r.problem;
    const Dims& d = p.dims;
    const VectorXd v = p.boxes.project(rng.uniform_vector(p.nv(), -3, 3));
    const VectorXd z = p.lift_point(v);
    // Forward simulation written independently of the lift.
    std::vector<VectorXd> x{v.head(d.nx)}, w, yhat;
    for (int i = 0; i < p.horizon; ++i) {
      w.push_back(v.segment(d.nx + i * d.nw(), d.nw()));
      yhat.push_back(r.sys.C * x.back() + w.back().tail(d.ny));
      x.push_back(r.sys.A * x.back() + r.sys.B * p.u_window[size_t(i)] + w.back().head(d.nx));
    }
    EXPECT_LT((z.head(d.nx) - x[0]).norm(), 1e-12);
    for (int i = 0; i < p.horizon; ++i) {
      EXPECT_LT((z.segment(d.z_offset_w(i), d.nw()) - w[size_t(i)]).norm(), 1e-12);
      EXPECT_LT((z.segment(d.z_offset_y(i), d.ny) - yhat[size_t(i)]).norm(), 1e-12 * (1 + yhat[size_t(i)].norm()));
    }
    const auto states = extract_estimate(p, z);
    for (size_t i = 0; i < states.size(); ++i) EXPECT_LT((states[i] - x[i]).norm(), 1e-12 * (1 + x[i].norm()));
    const double expected = trajectory_cost(p, r.cert, x, w, yhat);
    EXPECT_NEAR(p.cost(z), expected, 1e-10 * (1 + std::abs(expected)));
    // Strong convexity of the reduced problem.
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<MatrixXd>(p.reduced_hessian()).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(BuildProblem, TrueTrajectoryFeasibleAndBoundsOptimum) {
  const LtiSystem s = example_system();
  const IossCertificate c = example_certificate();
  Rng rng(30);
  const int M = 5, t = 8;
  std::vector<VectorXd> x{rng.uniform_vector(4, -5, 5)}, u, y, w;
  for (int i = 0; i < t; ++i) {
    w.push_back(rng.uniform_in(s.w_box()));
    u.push_back(rng.uniform_vector(2, -1, 1));
    y.push_back(s.C * x.back() + w.back().tail(1));
    x.push_back(s.A * x.back() + s.B * u.back() + w.back().head(4));
  }
  const std::vector<VectorXd> uw(u.end() - M, u.end()), yw(y.end() - M, y.end());
  const VectorXd prior = x[size_t(t - M)] + rng.uniform_vector(4, -1, 1);
  const MheProblem p = build_problem(s, c, prior, uw, yw, M, t);
  VectorXd v(p.nv());
  v.head(4) = x[size_t(t - M)];
  for (int i = 0; i < M; ++i) v.segment(4 + 5 * i, 5) = w[size_t(t - M + i)];
  EXPECT_TRUE(p.boxes.contains(v));
  const VectorXd z_true = p.lift_point(v);
  EXPECT_LT((extract_estimate(p, z_true).back() - x[size_t(t)]).norm(), 1e-12);
  const OracleResult o = solve_oracle(p, 1e-12);
  EXPECT_LE(p.cost(o.z_star.z), p.cost(z_true) + 1e-12);
}

TEST(SigmaLift, PadsDuringGrowthAndIsIdentityAfter) {
  const Dims d{4, 1, 2};
  Rng rng(2);
  const VectorXd z0 = rng.normal_vector(4);
  const VectorXd z1 = sigma_lift(z0, 1, 5, d);
  EXPECT_EQ(z1.size(), 4 + 6);
  EXPECT_EQ(z1.head(4), z0);
  EXPECT_TRUE(z1.tail(6).isZero(0.0));
  EXPECT_EQ(z1.norm(), z0.norm());
  const VectorXd full = rng.normal_vector(d.nz(5));
  EXPECT_EQ(sigma_lift(full, 6, 5, d), full);
  EXPECT_EQ(sigma_lift(full, 9, 5, d), full);
  EXPECT_THROW(sigma_lift(z0, 3, 5, d), Error);
}

TEST(ShiftWindow, Lengths) {
  const int M = 5;
  std::vector<VectorXd> seq;
  seq = shift_window(seq, VectorXd::Constant(1, 0), 0, M);
  EXPECT_EQ(seq.size(), 1u);
  seq = shift_window(seq, VectorXd::Constant(1, 1), 1, M);
  seq = shift_window(seq, VectorXd::Constant(1, 2), 2, M);
  EXPECT_EQ(seq.size(), 3u);
  for (int t = 3; t <= 8; ++t) {
    seq = shift_window(seq, VectorXd::Constant(1, t), t, M);
    EXPECT_EQ(int(seq.size()), std::min(M, t + 1));
    EXPECT_EQ(seq.back()[0], t);
  }
  EXPECT_EQ(seq.front()[0], 4);
}

TEST(ExtractEstimate, HandSimulation) {
  const LtiSystem s = scalar_system(2.0, 0.0, 1.0);
  const IossCertificate c = unit_weights(1, 1, 0.8);
  const MheProblem p = build_problem(s, c, VectorXd::Zero(1), {VectorXd::Zero(1), VectorXd::Zero(1)},
                                     {VectorXd::Zero(1), VectorXd::Zero(1)}, 5, 2);
  VectorXd v = VectorXd::Zero(p.nv());
  v[0] = 1.0;
  const auto states = extract_estimate(p, p.lift_point(v));
  ASSERT_EQ(states.size(), 3u);
  EXPECT_EQ(states[0][0], 1.0);
  EXPECT_EQ(states[1][0], 2.0);
  EXPECT_EQ(states[2][0], 4.0);

  const LtiSystem id = scalar_system(1.0, 0.0, 1.0);
  const MheProblem q = build_problem(id, c, VectorXd::Zero(1), {VectorXd::Ones(1)}, {VectorXd::Zero(1)}, 5, 1);
  VectorXd vq = VectorXd::Zero(q.nv());
  vq[0] = 3.0;
  for (const auto& x : extract_estimate(q, q.lift_point(vq))) EXPECT_EQ(x[0], 3.0);
}

TEST(ResidualSigma, ZeroAfterHorizon) {
  const LtiSystem s = example_system();
  const auto r = residual_sigma(6, 5, compute_weight(5, example_certificate()), s, 0.8);
  EXPECT_EQ(r.raw, 0.0);
  EXPECT_EQ(r.clamped, 0.0);
  EXPECT_FALSE(r.was_clamped);
}

TEST(ResidualSigma, EtaOneDropsWeightTerm) {
  const LtiSystem s = example_system();
  const auto r = residual_sigma(2, 5, compute_weight(2, example_certificate()), s, 1.0);
  const double expected = Eigen::JacobiSVD<MatrixXd>(s.A).singularValues()[0] +
                          Eigen::JacobiSVD<MatrixXd>(s.B).singularValues()[0] + std::sqrt(0.99) + 2.0;
  EXPECT_NEAR(r.raw, expected, 1e-12);
}

TEST(ResidualSigma, ExampleValueAndClamp) {
  const LtiSystem s = example_system();
  const MatrixXd H3 = compute_weight(3, example_certificate());
  const double h = Eigen::SelfAdjointEigenSolver<MatrixXd>(H3).eigenvalues().maxCoeff();
  const double expected = (1 - 1 / 0.8) * h + Eigen::JacobiSVD<MatrixXd>(s.A).singularValues()[0] +
                          Eigen::JacobiSVD<MatrixXd>(s.B).singularValues()[0] + std::sqrt(0.99) + 2.0;
  const auto r = residual_sigma(3, 5, H3, s, 0.8);
  EXPECT_NEAR(r.raw, expected, 1e-12);
  EXPECT_TRUE(std::isfinite(r.raw));
  EXPECT_EQ(r.was_clamped, expected < 0);
  EXPECT_GE(r.clamped, 0.0);
  // A small eta drives the raw value negative and triggers the clamp.
  const auto neg = residual_sigma(3, 5, H3, s, 0.1);
  EXPECT_LT(neg.raw, 0.0);
  EXPECT_TRUE(neg.was_clamped);
  EXPECT_EQ(neg.clamped, 0.0);
}
