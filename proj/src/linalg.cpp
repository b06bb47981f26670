#include "submhe/linalg.hpp"

#include <Eigen/Jacobi>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "submhe/errors.hpp"

namespace submhe {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

Box Box::unbounded(Index n) {
  return Box{VectorXd::Constant(n, -kInf), VectorXd::Constant(n, kInf)};
}

Box Box::symmetric(Index n, double radius) {
  return Box{VectorXd::Constant(n, -radius), VectorXd::Constant(n, radius)};
}

Box Box::stack(const std::vector<Box>& parts) {
  Index n = 0;
  for (const auto& p : parts) n += p.size();
  Box out{VectorXd(n), VectorXd(n)};
  Index offset = 0;
  for (const auto& p : parts) {
    out.lower.segment(offset, p.size()) = p.lower;
    out.upper.segment(offset, p.size()) = p.upper;
    offset += p.size();
  }
  return out;
}

bool Box::contains(const VectorXd& v, double tol) const {
  if (v.size() != size()) return false;
  for (Index i = 0; i < v.size(); ++i) {
    if (v[i] < lower[i] - tol || v[i] > upper[i] + tol) return false;
  }
  return true;
}

bool Box::contains_origin() const { return contains(VectorXd::Zero(size())); }

bool Box::bounded() const { return lower.allFinite() && upper.allFinite(); }

VectorXd Box::project(const VectorXd& v) const {
  if (v.size() != size()) throw dimension_mismatch("box projection");
  return v.cwiseMax(lower).cwiseMin(upper);
}

SymmetricEigen jacobi_eigen(const MatrixXd& s, int max_sweeps) {
  if (s.rows() != s.cols()) throw dimension_mismatch("eigensolver needs a square matrix");
  const Index n = s.rows();
  MatrixXd a = symmetrize(s);
  MatrixXd v = MatrixXd::Identity(n, n);
  const double scale = a.norm();
  const double threshold = std::numeric_limits<double>::epsilon() * scale;

  for (int sweep = 0; sweep < max_sweeps && scale > 0.0; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= threshold) break;

    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) <= std::numeric_limits<double>::min()) continue;
        Eigen::JacobiRotation<double> rot;
        rot.makeJacobi(a, p, q);
        a.applyOnTheLeft(p, q, rot.adjoint());
        a.applyOnTheRight(p, q, rot);
        v.applyOnTheRight(p, q, rot);
        a(p, q) = 0.0;
        a(q, p) = 0.0;
      }
    }
  }

  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index i, Index j) { return a(i, i) < a(j, j); });
  SymmetricEigen out{VectorXd(n), MatrixXd(n, n)};
  for (Index k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

double max_eigenvalue(const MatrixXd& s) {
  if (s.size() == 0) return 0.0;
  return jacobi_eigen(s).values.maxCoeff();
}

double min_eigenvalue(const MatrixXd& s) {
  if (s.size() == 0) return 0.0;
  return jacobi_eigen(s).values.minCoeff();
}

double spectral_norm(const MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  const MatrixXd gram = m.rows() <= m.cols() ? MatrixXd(m * m.transpose())
                                             : MatrixXd(m.transpose() * m);
  return std::sqrt(std::max(0.0, max_eigenvalue(gram)));
}

std::pair<double, double> generalized_extremes(const MatrixXd& s, const MatrixXd& g) {
  if (s.rows() != g.rows() || s.cols() != g.cols())
    throw dimension_mismatch("generalized eigenproblem operands");
  Eigen::LLT<MatrixXd> llt(symmetrize(g));
  if (llt.info() != Eigen::Success)
    throw Error(error_kind::kDegenerateHessian, "metric matrix is not positive definite");
  const MatrixXd l = llt.matrixL();
  // l^{-1} s l^{-T}
  MatrixXd tmp = l.triangularView<Eigen::Lower>().solve(symmetrize(s));
  MatrixXd reduced = l.triangularView<Eigen::Lower>().solve(tmp.transpose());
  const auto eig = jacobi_eigen(reduced);
  return {eig.values.minCoeff(), eig.values.maxCoeff()};
}

MatrixXd block_diag(const std::vector<MatrixXd>& blocks) {
  Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  MatrixXd out = MatrixXd::Zero(rows, cols);
  Index r = 0, c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

}  // namespace submhe
