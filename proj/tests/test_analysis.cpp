#include <gtest/gtest.h>

#include <cmath>

#include "submhe/analysis.hpp"
#include "submhe/errors.hpp"
#include "test_support.hpp"

using namespace submhe;
using namespace submhe::testing;

namespace {

AnalysisParams quoted_scalars(int M, double eta) {
  AnalysisParams p;
  p.L_Phi = 5.32;
  p.L_pi = 2.65;
  p.gamma13_slope = 28.8;
  p.eta = eta;
  p.M = M;
  p.phi_base = 0.98;
  p.norm_C = std::sqrt(0.99);
  p.bar_H = 2.0;
  p.lambda_H_P = 2.0 / 0.149;
  p.lambda_P_P = 0.676 / 0.149;
  p.lambda_Q_P = 1.0 / 0.149;
  return p;
}

// Appendix constants written term by term.
struct Reference {
  double C1, C2, C3, Ce, Cw, Ceps;
};

Reference reference_constants(int K, const AnalysisParams& p) {
  const double f = std::pow(p.phi_base, K), M = p.M, rho = std::pow(6.0, 1.0 / M) * p.eta;
  const double L = p.L_Phi, Lp = p.L_pi, HP = p.lambda_H_P, PP = p.lambda_P_P, QP = p.lambda_Q_P;
  Reference r;
  r.C1 = 2 * f * L * (1 + M * (p.norm_C + Lp));
  r.C2 = 2 * f * L * (1 + M * Lp);
  r.C3 = 2 * f * L * M;
  double sum = 0;
  for (int i = 1; i <= p.M - 1; ++i) sum += std::pow(std::sqrt(rho), -1.0 - i);
  r.Ce = 2 * std::sqrt(3 * PP * HP) * f * L * (std::pow(std::sqrt(rho), -M) + Lp * std::pow(std::sqrt(rho), -1.0)) +
         4 * std::sqrt(3 * PP * HP) * f * L * Lp * sum + std::sqrt(6 * PP) +
         2 * std::sqrt(3 * PP * HP) * f * L * (Lp + 1) * std::pow(std::sqrt(rho), -M - 1);
  r.Cw = std::sqrt(2 * HP) * r.C3 + std::sqrt(6 * QP) / (1 - std::sqrt(rho)) +
         4 * std::sqrt(3 * HP * QP) * f * L * (Lp * M + 1) / (1 - std::sqrt(rho));
  const double srM = std::sqrt(std::pow(rho, M));
  r.Ceps = std::sqrt(2 * HP) * f + std::sqrt(2 * HP) / (1 - srM) + 4 * HP * f * L * (Lp * M + 1) / (1 - srM);
  return r;
}

AnalysisParams random_params(Rng& rng) {
  AnalysisParams p;
  p.eta = rng.uniform(0.05, 0.9);
  p.M = minimal_horizon(p.eta) + int(rng.next() % 5);
  p.L_Phi = rng.uniform(1.01, 8.0);
  p.L_pi = rng.uniform(0.0, 4.0);
  p.gamma13_slope = rng.uniform(0.0, 40.0);
  p.phi_base = rng.uniform(0.3, 0.99);
  p.norm_C = rng.uniform(0.1, 3.0);
  p.bar_H = rng.uniform(0.5, 3.0);
  p.lambda_H_P = rng.uniform(0.5, 20.0);
  p.lambda_P_P = rng.uniform(1.0, 10.0);
  p.lambda_Q_P = rng.uniform(0.5, 20.0);
  return p;
}

}  // namespace

TEST(Rho, PassingExample) { EXPECT_NEAR(compute_rho(0.5, 5), std::pow(6.0, 0.2) * 0.5, 1e-12); }

TEST(Rho, ViolationReportsMinimalHorizon) {
  try {
    compute_rho(0.8, 5);
    FAIL();
  } catch (const ContractionViolated& e) {
    EXPECT_EQ(e.kind(), "ContractionViolated");
    EXPECT_NEAR(e.rho(), std::pow(6.0, 0.2) * 0.8, 1e-12);
    // ln 6 / ln 1.25 = 8.03, so M = 9.
    EXPECT_EQ(e.minimal_horizon(), 9);
  }
  EXPECT_LT(compute_rho(0.8, 9), 1.0);
  EXPECT_THROW(compute_rho(0.8, 8), ContractionViolated);
}

TEST(Rho, VanishesWithEta) {
  EXPECT_EQ(compute_rho(0.0, 3), 0.0);
  EXPECT_LT(compute_rho(1e-9, 3), 1e-8);
}

TEST(Rho, MinimalHorizonIsTight) {
  for (double eta : {0.1, 0.3, 0.5, 0.7, 0.8, 0.9, 0.95}) {
    const int m = minimal_horizon(eta);
    EXPECT_LT(std::pow(6.0, 1.0 / m) * eta, 1.0);
    if (m > 1) EXPECT_GE(std::pow(6.0, 1.0 / (m - 1)) * eta, 1.0);
    EXPECT_GT(m, std::log(6.0) / std::log(1.0 / eta));
  }
}

TEST(AppendixConstants, MatchReferenceEvaluation) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const AnalysisParams p = random_params(rng);
    const int K = 1 + int(rng.next() % 300);
    const AppendixConstants c = appendix_constants(K, p);
    const Reference r = reference_constants(K, p);
    EXPECT_NEAR(c.C1, r.C1, 1e-12 * (1 + r.C1));
    EXPECT_NEAR(c.C2, r.C2, 1e-12 * (1 + r.C2));
    EXPECT_NEAR(c.C3, r.C3, 1e-12 * (1 + r.C3));
    EXPECT_NEAR(c.C_e, r.Ce, 1e-10 * r.Ce);
    EXPECT_NEAR(c.C_w, r.Cw, 1e-10 * r.Cw);
    EXPECT_NEAR(c.C_eps, r.Ceps, 1e-10 * r.Ceps);
  }
}

TEST(AppendixConstants, QuotedScalarsC1) {
  AnalysisParams p = quoted_scalars(5, 0.5);
  const AppendixConstants c = appendix_constants(652, p);
  EXPECT_NEAR(c.C1, 2 * std::pow(0.98, 652) * 5.32 * (1 + 5 * (std::sqrt(0.99) + 2.65)), 1e-15);
  EXPECT_NEAR(std::sqrt(0.99), 0.99499, 1e-5);
}

TEST(AppendixConstants, LargeKLimits) {
  AnalysisParams p = quoted_scalars(10, 0.8);
  const double rho = compute_rho(0.8, 10);
  const AppendixConstants c = appendix_constants(100000, p);
  EXPECT_EQ(c.C1, 0.0);
  EXPECT_EQ(c.C2, 0.0);
  EXPECT_EQ(c.C3, 0.0);
  EXPECT_NEAR(c.C_e, std::sqrt(6 * p.lambda_P_P), 1e-12);
  EXPECT_NEAR(c.C_eps, std::sqrt(2 * p.lambda_H_P) / (1 - std::sqrt(std::pow(rho, 10))), 1e-9);
  EXPECT_NEAR(c.C_w, std::sqrt(6 * p.lambda_Q_P) / (1 - std::sqrt(rho)), 1e-9);
}

TEST(AppendixConstants, SingleStepHorizonHasEmptySum) {
  AnalysisParams p = quoted_scalars(1, 0.1);
  const Reference r = reference_constants(3, p);
  EXPECT_NEAR(appendix_constants(3, p).C_e, r.Ce, 1e-12 * r.Ce);
  // With M = 1 the L_pi-sum term is absent: C_e is affine in L_pi with the
  // coefficient of the remaining two terms only.
  const double f = std::pow(0.98, 3), sr = std::sqrt(compute_rho(0.1, 1)), a = std::sqrt(3 * p.lambda_P_P * p.lambda_H_P);
  const double slope = 2 * a * f * p.L_Phi * (1 / sr) + 2 * a * f * p.L_Phi * std::pow(sr, -2.0);
  AnalysisParams q = p;
  q.L_pi += 1.0;
  EXPECT_NEAR(appendix_constants(3, q).C_e - appendix_constants(3, p).C_e, slope, 1e-9 * slope);
}

TEST(AppendixConstants, RequireContraction) { EXPECT_THROW(appendix_constants(10, quoted_scalars(5, 0.8)), ContractionViolated); }

TEST(GainSlopes, DefinitionsAndLimits) {
  AnalysisParams p = quoted_scalars(10, 0.8);
  const int K = 40;
  const GainSlopes s = gain_slopes(K, p);
  const AppendixConstants c = appendix_constants(K, p);
  const double f = std::pow(0.98, K);
  EXPECT_NEAR(s.g21, c.C1 / (1 - f), 1e-12 * s.g21);
  EXPECT_NEAR(s.g23, c.C2 / (1 - f), 1e-12 * s.g23);
  EXPECT_NEAR(s.g2w, c.C3 / (1 - f), 1e-12 * s.g2w);
  EXPECT_NEAR(s.g2s, f * p.L_Phi / (1 - f), 1e-12 * s.g2s);
  EXPECT_NEAR(s.g31, std::sqrt(2 * p.lambda_H_P) * c.C1, 1e-12 * s.g31);
  EXPECT_EQ(s.g32, c.C_eps);
  EXPECT_EQ(s.g3w, c.C_w);
  EXPECT_NEAR(s.g3s, std::sqrt(2 * p.lambda_H_P) * f * p.L_Phi, 1e-12 * s.g3s);
  EXPECT_EQ(s.beta2_base, f);
  EXPECT_EQ(s.beta3_coeff, c.C_e);
  EXPECT_NEAR(s.beta3_base, std::sqrt(compute_rho(0.8, 10)), 1e-15);

  const GainSlopes inf = gain_slopes(200000, p);
  EXPECT_EQ(inf.g21, 0.0);
  EXPECT_EQ(inf.g23, 0.0);
  EXPECT_EQ(inf.g2w, 0.0);
  EXPECT_EQ(inf.g2s, 0.0);
  EXPECT_EQ(inf.g31, 0.0);
  EXPECT_EQ(inf.g3s, 0.0);
  EXPECT_GT(inf.g32, 0.0);
}

TEST(GainSlopes, UnitExample) {
  // C1 = 1, q = 0.5, K = 1 gives gamma_21 = 2: pick L_Phi, M, |C|, L_pi so C1 = 1.
  AnalysisParams p = quoted_scalars(1, 0.1);
  p.phi_base = 0.5;
  p.norm_C = 0.0;
  p.L_pi = 0.0;
  p.L_Phi = 1.0 / (2 * 0.5 * 1);  // C1 = 2 phi L_Phi (1 + 0) = 1
  EXPECT_NEAR(appendix_constants(1, p).C1, 1.0, 1e-15);
  EXPECT_NEAR(gain_slopes(1, p).g21, 2.0, 1e-15);
}

TEST(GainSlopes, NonincreasingInK) {
  const AnalysisParams p = quoted_scalars(10, 0.8);
  double prev = gain_slopes(1, p).g21;
  for (int K = 2; K <= 200; ++K) {
    const GainSlopes s = gain_slopes(K, p);
    EXPECT_LE(s.g21, prev);
    prev = s.g21;
    for (double v : {s.g21, s.g23, s.g2w, s.g2s, s.g31, s.g32, s.g3w, s.g3s}) EXPECT_GE(v, 0.0);
  }
}

TEST(SmallGain, LargeKPassesAllThree) {
  const SmallGainVerdict v = small_gain_check(100000, quoted_scalars(10, 0.8));
  EXPECT_TRUE(v.all);
  EXPECT_EQ(v.margins[0], 1.0);
}

TEST(SmallGain, BoundaryProductFails) {
  // Exact arithmetic: phi = 0.125, C1 = 2 * 0.125 * 2 * 1 = 0.5,
  // gamma_31 = sqrt(2 * 0.5) * 0.5 = 0.5, gamma13 * gamma_31 = 2 * 0.5 = 1.
  AnalysisParams p = quoted_scalars(1, 0.1);
  p.phi_base = 0.125;
  p.L_Phi = 2.0;
  p.norm_C = 0.0;
  p.L_pi = 0.0;
  p.lambda_H_P = 0.5;
  p.gamma13_slope = 2.0;
  const SmallGainVerdict v = small_gain_check(1, p);
  EXPECT_EQ(v.products[0], 1.0);
  EXPECT_EQ(v.margins[0], 0.0);
  EXPECT_FALSE(v.pass[0]);
  EXPECT_FALSE(v.all);
}

TEST(SmallGain, ProductsFollowDefinitions) {
  const AnalysisParams p = quoted_scalars(10, 0.8);
  const GainSlopes s = gain_slopes(500, p);
  const SmallGainVerdict v = small_gain_check(500, p);
  EXPECT_DOUBLE_EQ(v.products[0], 28.8 * s.g31);
  EXPECT_DOUBLE_EQ(v.products[1], s.g23 * s.g32);
  EXPECT_DOUBLE_EQ(v.products[2], 28.8 * s.g32 * s.g21);
}

TEST(MinIterations, FirstPassingKAndPredecessorFails) {
  Rng rng(41);
  for (int trial = 0; trial < 25; ++trial) {
    const AnalysisParams p = random_params(rng);
    const GainLedger l = min_iterations(p, 200000);
    EXPECT_TRUE(small_gain_check(l.K, p).all);
    if (l.K > 1) EXPECT_FALSE(small_gain_check(l.K - 1, p).all);
    EXPECT_TRUE(l.verdict.all);
  }
}

TEST(MinIterations, ImmediatePass) {
  AnalysisParams p = quoted_scalars(1, 0.01);
  p.gamma13_slope = 0.0;
  p.phi_base = 1e-6;
  p.lambda_H_P = p.lambda_P_P = p.lambda_Q_P = 0.01;
  EXPECT_EQ(min_iterations(p, 10).K, 1);
}

TEST(MinIterations, FloorTooLargeNotFound) {
  // Condition (21) has a K-independent factor gamma13 * C_eps; the
  // (1 - phi)^-1 in gamma_21 keeps products above 1 for a tiny cap.
  AnalysisParams p = quoted_scalars(10, 0.8);
  try {
    min_iterations(p, 50);
    FAIL();
  } catch (const NotFoundBelowCap& e) {
    EXPECT_EQ(e.kind(), "NotFoundBelowCap");
    EXPECT_GE(e.best_K(), 1);
    EXPECT_LE(e.best_K(), 50);
    EXPECT_LT(e.best_margin(), 0.0);
  }
}

TEST(MinIterations, QuotedScalarsGiveFiniteKOfPaperOrder) {
  const LtiSystem s = example_system();
  const IossCertificate c = example_certificate();
  const int M = 10;
  const ModelScalars ms = compute_model_scalars(s, c, M);
  const AnalysisParams p = derive_params(ms, c, M, 5.32, 2.65, 28.8, 0.98);
  const GainLedger l = min_iterations(p, 100000);
  EXPECT_GT(l.K, 100);
  EXPECT_LT(l.K, 6520);
}

TEST(Ledger, Deterministic) {
  const AnalysisParams p = quoted_scalars(10, 0.8);
  EXPECT_EQ(to_json(make_ledger(700, p)).dump(), to_json(make_ledger(700, p)).dump());
}

TEST(Params, Validation) {
  AnalysisParams p = quoted_scalars(10, 0.8);
  EXPECT_NO_THROW(validate_params(p));
  p.L_Phi = 1.0;
  EXPECT_THROW(validate_params(p), Error);
  p = quoted_scalars(10, 0.8);
  p.phi_base = 1.0;
  EXPECT_THROW(validate_params(p), Error);
  p = quoted_scalars(10, 0.8);
  p.lambda_Q_P = 0.0;
  EXPECT_THROW(validate_params(p), Error);
}

TEST(ModelScalars, BarHScansAllHorizons) {
  const IossCertificate c = example_certificate();
  const ModelScalars ms = compute_model_scalars(example_system(), c, 5);
  double expected = 0;
  for (int h = 0; h <= 5; ++h)
    expected = std::max(expected, Eigen::SelfAdjointEigenSolver<MatrixXd>(compute_weight(h, c)).eigenvalues().maxCoeff());
  EXPECT_NEAR(ms.bar_H, expected, 1e-12);
  EXPECT_EQ(ms.rate_by_horizon.size(), 6u);
  const Eigen::SelfAdjointEigenSolver<MatrixXd> pe(c.P);
  const AnalysisParams p = derive_params(ms, c, 5, 5.32, 2.65, 28.8);
  EXPECT_NEAR(p.lambda_H_P, expected / pe.eigenvalues().minCoeff(), 1e-10);
  EXPECT_NEAR(p.lambda_P_P, pe.eigenvalues().maxCoeff() / pe.eigenvalues().minCoeff(), 1e-10);
  EXPECT_NEAR(p.lambda_Q_P, 1.0 / pe.eigenvalues().minCoeff(), 1e-10);
  EXPECT_NEAR(p.norm_C, std::sqrt(0.99), 1e-14);
  EXPECT_EQ(p.phi_base, ms.rate_max);
}
