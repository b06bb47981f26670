#include "submhe/rng.hpp"

#include <cmath>

#include "submhe/errors.hpp"

namespace submhe {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

VectorXd Rng::uniform_in(const Box& box) {
  if (!box.bounded()) throw Error(error_kind::kUnboundedSampleBox, "cannot sample an unbounded box");
  VectorXd out(box.size());
  for (Index i = 0; i < box.size(); ++i) out[i] = uniform(box.lower[i], box.upper[i]);
  return out;
}

VectorXd Rng::uniform_vector(Index n, double lo, double hi) {
  VectorXd out(n);
  for (Index i = 0; i < n; ++i) out[i] = uniform(lo, hi);
  return out;
}

VectorXd Rng::normal_vector(Index n) {
  VectorXd out(n);
  for (Index i = 0; i < n; ++i) out[i] = normal();
  return out;
}

VectorXd Rng::unit_vector(Index n) {
  VectorXd v = normal_vector(n);
  const double norm = v.norm();
  if (norm == 0.0) {
    v.setZero();
    v[0] = 1.0;
    return v;
  }
  return v / norm;
}

}  // namespace submhe
