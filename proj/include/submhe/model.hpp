#pragma once

#include <optional>

#include "submhe/linalg.hpp"

namespace submhe {

/// x+ = A x + B u + w1,  y = C x + w2, with box constraint sets.
struct LtiSystem {
  MatrixXd A;
  MatrixXd B;
  MatrixXd C;
  Box x_box;
  Box u_box;
  Box y_box;
  Box w1_box;
  Box w2_box;

  Index nx() const { return A.rows(); }
  Index nu() const { return B.cols(); }
  Index ny() const { return C.rows(); }
  /// Augmented disturbance dimension, n_x + n_y.
  Index nw() const { return nx() + ny(); }

  /// Box on the augmented disturbance [w1; w2].
  Box w_box() const { return Box::stack({w1_box, w2_box}); }
};

/// Quadratic incremental IOSS certificate: W(x, x') = |x - x'|_P^2 with
/// dissipation rate eta and supply weights Q (on [w1; w2]) and R (on y).
struct IossCertificate {
  MatrixXd P;
  MatrixXd Q;
  MatrixXd R;
  double eta = 0.0;
  double tol = 1e-8;
};

struct AugmentedDisturbance {
  VectorXd w1;
  VectorXd w2;

  VectorXd stacked() const {
    VectorXd w(w1.size() + w2.size());
    w << w1, w2;
    return w;
  }
};

/// Throws DimensionMismatch or BoxExcludesOrigin; returns `sys` unchanged.
const LtiSystem& validate_system(const LtiSystem& sys);

struct LmiReport {
  bool pass = false;
  double max_eigenvalue = 0.0;
  double tol = 0.0;
  double min_eigenvalue_P = 0.0;
  double min_eigenvalue_Q = 0.0;
  double min_eigenvalue_R = 0.0;
  bool eta_in_range = false;
};

/// The 2x2 block dissipation matrix in P. Negative semidefiniteness is
/// equivalent to the one-step decrease of W along any pair of trajectories.
MatrixXd ioss_lmi_matrix(const LtiSystem& sys, const IossCertificate& cert);

LmiReport verify_ioss_lmi(const LtiSystem& sys, const IossCertificate& cert);

struct CertificateSearchOptions {
  int budget = 5000;
  double tol = 1e-8;
  /// Eigenvalue floor for P, relative to lambda_min(Q).
  double floor = 1e-6;
  /// Cuts aim at lambda_max = -margin * lambda_min(Q).
  double margin = 1e-4;
};

/// Eigenvalue-cut search for P with (Q, R, eta) fixed. Throws NotFound when
/// the budget is exhausted.
IossCertificate find_certificate(const LtiSystem& sys, const MatrixXd& Q, const MatrixXd& R,
                                 double eta, const CertificateSearchOptions& options = {});

/// |x - x'|_P^2.
double w_delta(const IossCertificate& cert, const VectorXd& x, const VectorXd& x_other);

/// |v|_W^2 for a symmetric weight W.
inline double weighted_sq_norm(const VectorXd& v, const MatrixXd& w) { return v.dot(w * v); }

}  // namespace submhe
