#pragma once

#include <optional>
#include <vector>

#include "submhe/linalg.hpp"
#include "submhe/model.hpp"

namespace submhe {

/// Block sizes of the condensed problem at a given effective horizon.
///
/// z = [x_{t-Mt}; w_{t-Mt}; y_{t-Mt}; ...; w_{t-1}; y_{t-1}] where each w is
/// the augmented disturbance [w1; w2] and each y the estimated output.
/// The free variables are v = [x_{t-Mt}; w_{t-Mt}; ...; w_{t-1}].
struct Dims {
  Index nx = 0;
  Index ny = 0;
  Index nu = 0;

  static Dims of(const LtiSystem& sys) { return Dims{sys.nx(), sys.ny(), sys.nu()}; }

  Index nw() const { return nx + ny; }
  Index stage() const { return nw() + ny; }
  Index nz(int horizon) const { return nx + horizon * stage(); }
  Index nv(int horizon) const { return nx + horizon * nw(); }
  Index z_offset_w(int i) const { return nx + i * stage(); }
  Index z_offset_y(int i) const { return z_offset_w(i) + nw(); }
  Index v_offset_w(int i) const { return nx + i * nw(); }
};

/// One step's condensed estimation problem: minimize |z - reference|_weight^2
/// over z = lift * v + offset with v inside `boxes`.
struct MheProblem {
  int t = 0;
  int horizon = 0;  // M_t = min(M, t)
  Dims dims;
  MatrixXd weight;
  VectorXd reference;
  MatrixXd lift;
  VectorXd offset;
  Box boxes;
  VectorXd x_prior;
  std::vector<VectorXd> u_window;
  std::vector<VectorXd> y_window;
  MatrixXd A;
  MatrixXd B;

  Index nz() const { return lift.rows(); }
  Index nv() const { return lift.cols(); }

  VectorXd lift_point(const VectorXd& v) const { return lift * v + offset; }
  double cost(const VectorXd& z) const {
    const VectorXd r = z - reference;
    return r.dot(weight * r);
  }
  double cost_free(const VectorXd& v) const { return cost(lift_point(v)); }
  /// Gradient of cost_free.
  VectorXd gradient(const VectorXd& v) const {
    return 2.0 * lift.transpose() * (weight * (lift_point(v) - reference));
  }
  /// Hessian of cost_free, 2 lift^T weight lift.
  MatrixXd reduced_hessian() const { return 2.0 * lift.transpose() * weight * lift; }
};

struct CondensedPoint {
  VectorXd z;
  std::optional<VectorXd> v;
};

/// blkdiag(2 eta^Mt P, 2 eta^(Mt-1) Q, eta^(Mt-1) R, ..., 2 Q, R).
MatrixXd compute_weight(int horizon, const IossCertificate& cert);

MheProblem build_problem(const LtiSystem& sys, const IossCertificate& cert, const VectorXd& x_prior,
                         const std::vector<VectorXd>& u_window,
                         const std::vector<VectorXd>& y_window, int M, int t);

/// Warm start for step t from the K-iterate of step t-1: zero-pads one stage
/// while the window is still growing, identity afterwards.
VectorXd sigma_lift(const VectorXd& z_prev, int t, int M, const Dims& dims);

/// Append `item`; keep at most M entries (the oldest is discarded).
std::vector<VectorXd> shift_window(std::vector<VectorXd> seq, const VectorXd& item, int t, int M);

/// States x_{t-Mt|t}, ..., x_{t|t} reconstructed from z.
std::vector<VectorXd> extract_estimate(const MheProblem& problem, const VectorXd& z);

/// Estimated outputs stored in z, one per window stage.
std::vector<VectorXd> extract_outputs(const MheProblem& problem, const VectorXd& z);
/// Estimated augmented disturbances stored in z, one per window stage.
std::vector<VectorXd> extract_disturbances(const MheProblem& problem, const VectorXd& z);

/// Free-variable coordinates read directly from the blocks of z.
VectorXd free_coordinates(const MheProblem& problem, const VectorXd& z);

struct ResidualSigma {
  double raw = 0.0;
  double clamped = 0.0;
  bool was_clamped = false;
};

/// (1 - 1/eta) |H_t| + |A| + |B| + |C| + 2 for t <= M, 0 afterwards.
/// Negative values are clamped to zero and flagged.
ResidualSigma residual_sigma(int t, int M, const MatrixXd& weight, const LtiSystem& sys, double eta);

/// True when some reconstructed state (after the first) or output leaves its
/// box. Those sets are not enforced by the condensed problem.
bool violates_state_or_output_box(const MheProblem& problem, const LtiSystem& sys,
                                  const VectorXd& z);

}  // namespace submhe
