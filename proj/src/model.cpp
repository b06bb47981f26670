#include "submhe/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "submhe/errors.hpp"

namespace submhe {

namespace {

void check_box(const Box& box, Index expected, const char* name) {
  if (box.lower.size() != expected || box.upper.size() != expected)
    throw dimension_mismatch(std::string(name) + " has " + std::to_string(box.size()) +
                             " coordinates, expected " + std::to_string(expected));
  for (Index i = 0; i < expected; ++i) {
    if (box.lower[i] > box.upper[i])
      throw Error(error_kind::kBoxExcludesOrigin,
                  std::string(name) + " has an empty interval at coordinate " + std::to_string(i));
  }
  if (!box.contains_origin())
    throw Error(error_kind::kBoxExcludesOrigin, std::string(name) + " does not contain the origin");
}

void check_certificate_shape(const LtiSystem& sys, const IossCertificate& cert) {
  const Index nx = sys.nx(), ny = sys.ny();
  if (cert.P.rows() != nx || cert.P.cols() != nx) throw dimension_mismatch("P must be n_x square");
  if (cert.Q.rows() != nx + ny || cert.Q.cols() != nx + ny)
    throw dimension_mismatch("Q must be (n_x + n_y) square");
  if (cert.R.rows() != ny || cert.R.cols() != ny) throw dimension_mismatch("R must be n_y square");
}

}  // namespace

const LtiSystem& validate_system(const LtiSystem& sys) {
  if (sys.A.rows() != sys.A.cols()) throw dimension_mismatch("A is not square");
  if (sys.A.rows() == 0) throw dimension_mismatch("empty state");
  if (sys.B.rows() != sys.A.rows()) throw dimension_mismatch("B rows differ from n_x");
  if (sys.C.cols() != sys.A.rows()) throw dimension_mismatch("C columns differ from n_x");
  check_box(sys.x_box, sys.nx(), "x_box");
  check_box(sys.u_box, sys.nu(), "u_box");
  check_box(sys.y_box, sys.ny(), "y_box");
  check_box(sys.w1_box, sys.nx(), "w1_box");
  check_box(sys.w2_box, sys.ny(), "w2_box");
  return sys;
}

MatrixXd ioss_lmi_matrix(const LtiSystem& sys, const IossCertificate& cert) {
  check_certificate_shape(sys, cert);
  const Index nx = sys.nx(), ny = sys.ny(), nw = sys.nw();
  MatrixXd b_bar = MatrixXd::Zero(nx, nw);
  b_bar.leftCols(nx).setIdentity();
  MatrixXd d_bar = MatrixXd::Zero(ny, nw);
  d_bar.rightCols(ny).setIdentity();

  const MatrixXd& A = sys.A;
  const MatrixXd& C = sys.C;
  MatrixXd lmi(nx + nw, nx + nw);
  lmi.topLeftCorner(nx, nx) = A.transpose() * cert.P * A - cert.eta * cert.P - C.transpose() * cert.R * C;
  lmi.topRightCorner(nx, nw) = A.transpose() * cert.P * b_bar - C.transpose() * cert.R * d_bar;
  lmi.bottomLeftCorner(nw, nx) = lmi.topRightCorner(nx, nw).transpose();
  lmi.bottomRightCorner(nw, nw) =
      b_bar.transpose() * cert.P * b_bar - cert.Q - d_bar.transpose() * cert.R * d_bar;
  return symmetrize(lmi);
}

LmiReport verify_ioss_lmi(const LtiSystem& sys, const IossCertificate& cert) {
  LmiReport report;
  report.tol = cert.tol;
  report.max_eigenvalue = max_eigenvalue(ioss_lmi_matrix(sys, cert));
  report.min_eigenvalue_P = min_eigenvalue(cert.P);
  report.min_eigenvalue_Q = min_eigenvalue(cert.Q);
  report.min_eigenvalue_R = min_eigenvalue(cert.R);
  report.eta_in_range = cert.eta >= 0.0 && cert.eta < 1.0;
  const bool spd = report.min_eigenvalue_P > 0.0 && report.min_eigenvalue_Q > 0.0 &&
                   report.min_eigenvalue_R > 0.0;
  report.pass = spd && report.eta_in_range && report.max_eigenvalue <= cert.tol;
  return report;
}

IossCertificate find_certificate(const LtiSystem& sys, const MatrixXd& Q, const MatrixXd& R,
                                 double eta, const CertificateSearchOptions& options) {
  const Index nx = sys.nx();
  IossCertificate cert{MatrixXd::Identity(nx, nx), symmetrize(Q), symmetrize(R), eta, options.tol};
  check_certificate_shape(sys, cert);
  const double q_min = min_eigenvalue(cert.Q);
  if (q_min <= 0.0 || min_eigenvalue(cert.R) <= 0.0)
    throw Error(error_kind::kNotFound, "Q and R must be positive definite");
  const double floor = options.floor * q_min;
  const double target = -options.margin * q_min;

  // P <= Q restricted to the w1 block is necessary, so start well inside it.
  cert.P *= 0.5 * q_min;

  for (int iter = 0; iter <= options.budget; ++iter) {
    const auto eig = jacobi_eigen(ioss_lmi_matrix(sys, cert));
    const double lambda = eig.values[eig.values.size() - 1];
    if (lambda <= options.tol && verify_ioss_lmi(sys, cert).pass) return cert;
    if (iter == options.budget) break;

    // Direction of steepest increase of v^T F(P) v in P: s s^T - eta a a^T.
    const VectorXd v = eig.vectors.col(eig.vectors.cols() - 1);
    const VectorXd a = v.head(nx);
    const VectorXd s = sys.A * a + v.segment(nx, nx);
    const MatrixXd direction = s * s.transpose() - eta * a * a.transpose();
    const double dir_sq = direction.squaredNorm();
    if (dir_sq <= 0.0) break;
    cert.P -= ((lambda - target) / dir_sq) * direction;

    // Back onto {P >= floor * I}.
    auto p_eig = jacobi_eigen(cert.P);
    p_eig.values = p_eig.values.cwiseMax(floor);
    cert.P = symmetrize(p_eig.vectors * p_eig.values.asDiagonal() * p_eig.vectors.transpose());
  }
  throw Error(error_kind::kNotFound,
              "no certificate found within " + std::to_string(options.budget) + " iterations");
}

double w_delta(const IossCertificate& cert, const VectorXd& x, const VectorXd& x_other) {
  if (x.size() != cert.P.rows() || x_other.size() != cert.P.rows())
    throw dimension_mismatch("w_delta arguments must have n_x entries");
  const VectorXd d = x - x_other;
  return d.dot(cert.P * d);
}

}  // namespace submhe
