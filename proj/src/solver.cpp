#include "submhe/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "submhe/errors.hpp"

namespace submhe {

namespace {

enum class Bound : unsigned char { kFree, kLower, kUpper };

VectorXd solve_free(const MatrixXd& H, const VectorXd& rhs, const std::vector<Index>& free) {
  const Index nf = static_cast<Index>(free.size());
  MatrixXd hff(nf, nf);
  VectorXd b(nf);
  for (Index i = 0; i < nf; ++i) {
    b[i] = rhs[free[i]];
    for (Index j = 0; j < nf; ++j) hff(i, j) = H(free[i], free[j]);
  }
  Eigen::LLT<MatrixXd> llt(hff);
  if (llt.info() == Eigen::Success) return llt.solve(b);
  return hff.ldlt().solve(b);
}

}  // namespace

VectorXd project_box(const VectorXd& v, const Box& boxes) { return boxes.project(v); }

double box_kkt_residual(const MatrixXd& H, const VectorXd& g, const Box& box, const VectorXd& x) {
  const VectorXd grad = H * x + g;
  return (x - box.project(x - grad)).lpNorm<Eigen::Infinity>();
}

BoxQpResult solve_box_qp(const MatrixXd& H, const VectorXd& g, const Box& box, double tol,
                         const VectorXd* start, int max_cycles) {
  const Index n = g.size();
  if (H.rows() != n || H.cols() != n || box.size() != n) throw dimension_mismatch("box QP operands");
  if (max_cycles < 0) max_cycles = static_cast<int>(20 * n + 100);

  VectorXd x = start ? box.project(*start) : box.project(VectorXd::Zero(n));
  std::vector<Bound> state(static_cast<size_t>(n), Bound::kFree);
  for (Index i = 0; i < n; ++i) {
    if (x[i] == box.lower[i] && std::isfinite(box.lower[i])) state[i] = Bound::kLower;
    else if (x[i] == box.upper[i] && std::isfinite(box.upper[i])) state[i] = Bound::kUpper;
  }
  const double h_scale = H.cwiseAbs().rowwise().sum().maxCoeff();
  bool refined = false;

  BoxQpResult result;
  for (int cycle = 0; cycle < max_cycles; ++cycle) {
    result.cycles = cycle + 1;
    std::vector<Index> free;
    for (Index i = 0; i < n; ++i)
      if (state[i] == Bound::kFree) free.push_back(i);

    if (!free.empty()) {
      // Target for the free block with fixed variables held at their bounds.
      VectorXd fixed_part = x;
      for (Index i : free) fixed_part[i] = 0.0;
      const VectorXd rhs = -(g + H * fixed_part);
      const VectorXd target = solve_free(H, rhs, free);

      double step = 1.0;
      Index blocking = -1;
      Bound blocking_side = Bound::kFree;
      double blocking_excess = -1.0;
      for (Index k = 0; k < static_cast<Index>(free.size()); ++k) {
        const Index i = free[k];
        const double d = target[k] - x[i];
        double ratio = std::numeric_limits<double>::infinity();
        Bound side = Bound::kFree;
        double excess = 0.0;
        if (d < 0.0 && std::isfinite(box.lower[i]) && target[k] < box.lower[i]) {
          ratio = (box.lower[i] - x[i]) / d;
          side = Bound::kLower;
          excess = box.lower[i] - target[k];
        } else if (d > 0.0 && std::isfinite(box.upper[i]) && target[k] > box.upper[i]) {
          ratio = (box.upper[i] - x[i]) / d;
          side = Bound::kUpper;
          excess = target[k] - box.upper[i];
        }
        if (side == Bound::kFree) continue;
        ratio = std::max(0.0, ratio);
        if (ratio < step || (ratio == step && excess > blocking_excess)) {
          step = ratio;
          blocking = i;
          blocking_side = side;
          blocking_excess = excess;
        }
      }

      for (Index k = 0; k < static_cast<Index>(free.size()); ++k) {
        const Index i = free[k];
        x[i] = blocking < 0 ? target[k] : x[i] + step * (target[k] - x[i]);
      }
      if (blocking >= 0) {
        x[blocking] = blocking_side == Bound::kLower ? box.lower[blocking] : box.upper[blocking];
        state[blocking] = blocking_side;
        x = box.project(x);
        continue;
      }
    }

    // Working-set optimum reached: check multiplier signs of fixed variables.
    const VectorXd grad = H * x + g;
    Index release = -1;
    const double noise = 64.0 * std::numeric_limits<double>::epsilon() *
                         (h_scale * x.lpNorm<Eigen::Infinity>() + g.lpNorm<Eigen::Infinity>());
    double worst = std::max(1e-3 * tol, noise);
    for (Index i = 0; i < n; ++i) {
      double violation = 0.0;
      if (state[i] == Bound::kLower) violation = -grad[i];
      else if (state[i] == Bound::kUpper) violation = grad[i];
      if (violation > worst) {
        worst = violation;
        release = i;
      }
    }
    if (release < 0) {
      x = box.project(x);
      result.x = x;
      result.kkt_residual = box_kkt_residual(H, g, box, x);
      if (result.kkt_residual <= tol || refined) return result;
      // Rounding left a residual above tol: one refinement pass from here.
      refined = true;
      for (Index i = 0; i < n; ++i) state[i] = Bound::kFree;
      for (Index i = 0; i < n; ++i) {
        if (x[i] == box.lower[i] && grad[i] > 0.0) state[i] = Bound::kLower;
        else if (x[i] == box.upper[i] && grad[i] < 0.0) state[i] = Bound::kUpper;
      }
      continue;
    }
    state[release] = Bound::kFree;
  }
  throw Error(error_kind::kMaxCyclesExceeded,
              "active-set method exceeded " + std::to_string(max_cycles) + " cycles");
}

ContractionRate contraction_rate(const MheProblem& problem) {
  const MatrixXd metric = problem.lift.transpose() * problem.lift;
  const auto [mu, L] = generalized_extremes(problem.reduced_hessian(), metric);
  if (!(mu > 0.0) || !(L > 0.0))
    throw Error(error_kind::kDegenerateHessian,
                "reduced Hessian is not positive definite (mu = " + std::to_string(mu) + ")");
  ContractionRate rate;
  rate.lipschitz = L;
  rate.strong_convexity = mu;
  rate.step = 1.0 / L;
  rate.base = std::clamp(1.0 - mu / L, 0.0, 1.0);
  return rate;
}

SolveReport solve_fixed_iters(const MheProblem& problem, const CondensedPoint& z0, int K,
                              const SolveOptions& options) {
  if (K < 0) throw Error(error_kind::kInvalidParams, "iteration count must be nonnegative");
  if (z0.z.size() != problem.nz())
    throw dimension_mismatch("warm start has " + std::to_string(z0.z.size()) + " entries, problem has " +
                             std::to_string(problem.nz()));
  const ContractionRate rate = contraction_rate(problem);
  const MatrixXd metric = symmetrize(problem.lift.transpose() * problem.lift);
  const MatrixXd hessian = problem.reduced_hessian();
  const VectorXd lin = 2.0 * problem.lift.transpose() * (problem.weight * (problem.offset - problem.reference));

  SolveReport report;
  report.iterations = K;
  report.step_size = rate.step;
  report.contraction_base = rate.base;

  // Closest feasible point to z0: min |lift v + offset - z0|^2 over the box.
  const VectorXd start_guess = free_coordinates(problem, z0.z);
  VectorXd v = solve_box_qp(metric, -problem.lift.transpose() * (z0.z - problem.offset),
                            problem.boxes, options.projection_tol, &start_guess)
                   .x;
  report.z_start = problem.lift_point(v);

  auto record = [&](const VectorXd& vv) {
    const VectorXd z = problem.lift_point(vv);
    report.costs.push_back(problem.cost(z));
    if (options.reference_optimum)
      report.per_iteration_distances.push_back((z - *options.reference_optimum).norm());
  };
  record(v);

  for (int k = 0; k < K; ++k) {
    const VectorXd grad = hessian * v + lin;
    // argmin_{v' in box} |v' - (v - alpha metric^{-1} grad)|_metric^2
    const VectorXd g = -(metric * v - rate.step * grad);
    v = solve_box_qp(metric, g, problem.boxes, options.projection_tol, &v).x;
    if (!v.allFinite())
      throw Error(error_kind::kNonfiniteIterate, "iterate " + std::to_string(k + 1) + " is not finite");
    record(v);
  }

  report.z_K = CondensedPoint{problem.lift_point(v), v};
  return report;
}

OracleResult solve_oracle(const MheProblem& problem, double tol) {
  if (!(tol > 0.0)) throw Error(error_kind::kInvalidParams, "oracle tolerance must be positive");
  const MatrixXd hessian = symmetrize(problem.reduced_hessian());
  const VectorXd lin = 2.0 * problem.lift.transpose() * (problem.weight * (problem.offset - problem.reference));
  const BoxQpResult qp = solve_box_qp(hessian, lin, problem.boxes, tol);
  OracleResult out;
  out.z_star = CondensedPoint{problem.lift_point(qp.x), qp.x};
  out.kkt_residual = qp.kkt_residual;
  out.cycles = qp.cycles;
  return out;
}

}  // namespace submhe
