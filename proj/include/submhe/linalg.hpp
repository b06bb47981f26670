#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

namespace submhe {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Axis-aligned box; sides may be +-infinity.
struct Box {
  VectorXd lower;
  VectorXd upper;

  static Box unbounded(Index n);
  static Box symmetric(Index n, double radius);
  static Box stack(const std::vector<Box>& parts);

  Index size() const { return lower.size(); }
  bool contains(const VectorXd& v, double tol = 0.0) const;
  bool contains_origin() const;
  bool bounded() const;
  VectorXd project(const VectorXd& v) const;
};

struct SymmetricEigen {
  VectorXd values;   // ascending
  MatrixXd vectors;  // columns match `values`
};

/// Cyclic Jacobi eigensolver for symmetric matrices. Only the symmetric part
/// of `s` is used. Deterministic: fixed sweep order, no randomness.
SymmetricEigen jacobi_eigen(const MatrixXd& s, int max_sweeps = 100);

double max_eigenvalue(const MatrixXd& s);
double min_eigenvalue(const MatrixXd& s);

/// Largest singular value.
double spectral_norm(const MatrixXd& m);

/// Extreme eigenvalues (min, max) of the pencil s v = lambda g v, g SPD.
std::pair<double, double> generalized_extremes(const MatrixXd& s, const MatrixXd& g);

MatrixXd block_diag(const std::vector<MatrixXd>& blocks);

inline MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

}  // namespace submhe
