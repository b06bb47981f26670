#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "submhe/linalg.hpp"
#include "submhe/model.hpp"

namespace submhe {

/// Saturated linear state feedback u = clamp(-gain x, u_box).
struct FeedbackLaw {
  MatrixXd gain;
  Box u_box;
  std::optional<double> declared_lipschitz;
};

VectorXd evaluate(const FeedbackLaw& law, const VectorXd& x_hat);

/// Infinite-horizon discrete LQR gain via Riccati fixed-point iteration.
MatrixXd lqr_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& state_weight,
                  const MatrixXd& input_weight, int max_iterations = 100000, double tol = 1e-12);

struct LipschitzEstimate {
  double sampled = 0.0;
  double analytic = 0.0;  // largest singular value of the gain
  double value = 0.0;     // max of the two
};

LipschitzEstimate estimate_lipschitz(const FeedbackLaw& law, const Box& domain, int n_samples,
                                     std::uint64_t seed);

struct ClosedLoopGainEstimate {
  double slope = 0.0;
  bool heuristic = true;
  std::vector<double> magnitudes;
  std::vector<double> tail_sup;  // per magnitude, max over trials
};

/// Linear envelope of the state response to injected estimation errors:
/// x+ = A x + B pi(x + e), x0 = 0, w = 0, |e_t| = m. Returns
/// max_m sup_tail |x| / m. Throws DivergentTrajectory.
ClosedLoopGainEstimate estimate_closed_loop_gain(const LtiSystem& sys, const FeedbackLaw& law,
                                                 int horizon, const std::vector<double>& magnitudes,
                                                 std::uint64_t seed, int trials_per_magnitude = 8);

/// Nominal loop from random x0 with |x0| = radius must fall below 1e-6
/// within `horizon` steps. Throws StabilityAssumptionViolated.
void smoke_test_stability(const LtiSystem& sys, const FeedbackLaw& law, double radius, int horizon,
                          int trials, std::uint64_t seed);

}  // namespace submhe
