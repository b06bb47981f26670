#pragma once

#include <optional>
#include <vector>

#include "submhe/linalg.hpp"
#include "submhe/mhe_core.hpp"

namespace submhe {

/// Componentwise clamp onto `boxes`.
VectorXd project_box(const VectorXd& v, const Box& boxes);

struct BoxQpResult {
  VectorXd x;
  int cycles = 0;
  double kkt_residual = 0.0;
};

/// Primal active-set method for min 0.5 x^T H x + g^T x, lower <= x <= upper,
/// H symmetric positive definite. Blocking and release choices take the most
/// violated bound first and break ties by index. `start` (clamped) seeds the
/// iterate and the initial working set.
BoxQpResult solve_box_qp(const MatrixXd& H, const VectorXd& g, const Box& box, double tol,
                         const VectorXd* start = nullptr, int max_cycles = -1);

/// |x - clamp(x - grad)|_inf, zero exactly at a KKT point.
double box_kkt_residual(const MatrixXd& H, const VectorXd& g, const Box& box, const VectorXd& x);

struct ContractionRate {
  double step = 0.0;   // alpha = 1 / L
  double base = 0.0;   // q = 1 - mu / L
  double lipschitz = 0.0;
  double strong_convexity = 0.0;
};

/// Step and linear rate of the projected-gradient map. L and mu are the
/// extreme eigenvalues of the reduced Hessian 2 lift^T W lift measured in the
/// metric lift^T lift, so the rate holds for distances in z.
ContractionRate contraction_rate(const MheProblem& problem);

struct SolveOptions {
  /// When set, the distance of every iterate to this point is recorded.
  std::optional<VectorXd> reference_optimum;
  double projection_tol = 1e-13;
};

struct SolveReport {
  CondensedPoint z_K;
  int iterations = 0;
  double step_size = 0.0;
  double contraction_base = 0.0;
  /// Lifted starting point (the z-metric projection of z0).
  VectorXd z_start;
  std::vector<double> costs;
  std::vector<double> per_iteration_distances;
};

/// Exactly K projected-gradient iterations from z0. z0 is first mapped to
/// the closest feasible lifted point; each iteration is a gradient step
/// followed by the projection onto the feasible set, both in the z metric.
SolveReport solve_fixed_iters(const MheProblem& problem, const CondensedPoint& z0, int K,
                              const SolveOptions& options = {});

struct OracleResult {
  CondensedPoint z_star;
  double kkt_residual = 0.0;
  int cycles = 0;
};

/// High-accuracy optimum of the step problem (active-set on the reduced QP).
OracleResult solve_oracle(const MheProblem& problem, double tol);

}  // namespace submhe
