#include "submhe/controller.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "submhe/errors.hpp"
#include "submhe/rng.hpp"

namespace submhe {

VectorXd evaluate(const FeedbackLaw& law, const VectorXd& x_hat) {
  if (x_hat.size() != law.gain.cols()) throw dimension_mismatch("controller input");
  if (law.u_box.size() != law.gain.rows()) throw dimension_mismatch("controller saturation box");
  return law.u_box.project(-law.gain * x_hat);
}

MatrixXd lqr_gain(const MatrixXd& A, const MatrixXd& B, const MatrixXd& state_weight,
                  const MatrixXd& input_weight, int max_iterations, double tol) {
  MatrixXd X = state_weight;
  for (int k = 0; k < max_iterations; ++k) {
    const MatrixXd S = input_weight + B.transpose() * X * B;
    const MatrixXd K = S.ldlt().solve(B.transpose() * X * A);
    const MatrixXd next = symmetrize(state_weight + A.transpose() * X * (A - B * K));
    const double change = (next - X).cwiseAbs().maxCoeff();
    X = next;
    if (change <= tol * (1.0 + X.cwiseAbs().maxCoeff())) break;
  }
  return (input_weight + B.transpose() * X * B).ldlt().solve(B.transpose() * X * A);
}

LipschitzEstimate estimate_lipschitz(const FeedbackLaw& law, const Box& domain, int n_samples,
                                     std::uint64_t seed) {
  if (n_samples < 2) throw Error(error_kind::kInvalidParams, "need at least two samples");
  Rng rng(seed);
  LipschitzEstimate est;
  for (int i = 0; i < n_samples; ++i) {
    const VectorXd x = rng.uniform_in(domain);
    const VectorXd y = rng.uniform_in(domain);
    const double dx = (x - y).norm();
    if (dx == 0.0) continue;
    est.sampled = std::max(est.sampled, (evaluate(law, x) - evaluate(law, y)).norm() / dx);
  }
  est.analytic = spectral_norm(law.gain);
  est.value = std::max(est.sampled, est.analytic);
  return est;
}

ClosedLoopGainEstimate estimate_closed_loop_gain(const LtiSystem& sys, const FeedbackLaw& law,
                                                 int horizon, const std::vector<double>& magnitudes,
                                                 std::uint64_t seed, int trials_per_magnitude) {
  Rng rng(seed);
  ClosedLoopGainEstimate est;
  const int tail_start = horizon / 2;
  for (double m : magnitudes) {
    double tail = 0.0;
    for (int trial = 0; trial < trials_per_magnitude; ++trial) {
      VectorXd x = VectorXd::Zero(sys.nx());
      for (int t = 0; t < horizon; ++t) {
        const VectorXd e = m * rng.unit_vector(sys.nx());
        x = sys.A * x + sys.B * evaluate(law, x + e);
        const double nx = x.norm();
        if (!std::isfinite(nx) || nx > 1e12)
          throw Error(error_kind::kDivergentTrajectory,
                      "closed loop diverged under injected error of magnitude " + std::to_string(m));
        if (t >= tail_start) tail = std::max(tail, nx);
      }
    }
    est.magnitudes.push_back(m);
    est.tail_sup.push_back(tail);
    if (m > 0.0) est.slope = std::max(est.slope, tail / m);
  }
  return est;
}

void smoke_test_stability(const LtiSystem& sys, const FeedbackLaw& law, double radius, int horizon,
                          int trials, std::uint64_t seed) {
  Rng rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    VectorXd x = radius * rng.unit_vector(sys.nx());
    int t = 0;
    for (; t < horizon && x.norm() >= 1e-6; ++t) {
      x = sys.A * x + sys.B * evaluate(law, x);
      if (!x.allFinite()) break;
    }
    if (!(x.norm() < 1e-6))
      throw Error(error_kind::kStabilityAssumptionViolated,
                  "nominal closed loop did not decay below 1e-6 within " + std::to_string(horizon) +
                      " steps (trial " + std::to_string(trial) + ", |x| = " +
                      std::to_string(x.norm()) + ")");
  }
}

}  // namespace submhe
