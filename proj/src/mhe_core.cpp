#include "submhe/mhe_core.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "submhe/errors.hpp"

namespace submhe {

MatrixXd compute_weight(int horizon, const IossCertificate& cert) {
  std::vector<MatrixXd> blocks;
  blocks.reserve(static_cast<size_t>(2 * horizon + 1));
  blocks.push_back(2.0 * std::pow(cert.eta, horizon) * cert.P);
  for (int i = 1; i <= horizon; ++i) {
    const double discount = std::pow(cert.eta, horizon - i);
    blocks.push_back(2.0 * discount * cert.Q);
    blocks.push_back(discount * cert.R);
  }
  return block_diag(blocks);
}

MheProblem build_problem(const LtiSystem& sys, const IossCertificate& cert, const VectorXd& x_prior,
                         const std::vector<VectorXd>& u_window,
                         const std::vector<VectorXd>& y_window, int M, int t) {
  if (t < 0 || M < 0) throw Error(error_kind::kWindowLengthMismatch, "negative time or horizon");
  const int horizon = std::min(M, t);
  if (static_cast<int>(u_window.size()) != horizon || static_cast<int>(y_window.size()) != horizon)
    throw Error(error_kind::kWindowLengthMismatch,
                "windows must hold min(M, t) = " + std::to_string(horizon) + " entries (got " +
                    std::to_string(u_window.size()) + " inputs, " +
                    std::to_string(y_window.size()) + " outputs)");
  const Dims dims = Dims::of(sys);
  if (x_prior.size() != dims.nx) throw dimension_mismatch("prior must have n_x entries");
  for (const auto& u : u_window)
    if (u.size() != dims.nu) throw dimension_mismatch("input window entry");
  for (const auto& y : y_window)
    if (y.size() != dims.ny) throw dimension_mismatch("output window entry");

  MheProblem p;
  p.t = t;
  p.horizon = horizon;
  p.dims = dims;
  p.weight = compute_weight(horizon, cert);
  p.x_prior = x_prior;
  p.u_window = u_window;
  p.y_window = y_window;
  p.A = sys.A;
  p.B = sys.B;

  const Index nz = dims.nz(horizon), nv = dims.nv(horizon);
  const Index nx = dims.nx, ny = dims.ny, nw = dims.nw();

  p.reference = VectorXd::Zero(nz);
  p.reference.head(nx) = x_prior;
  for (int i = 0; i < horizon; ++i) p.reference.segment(dims.z_offset_y(i), ny) = y_window[i];

  // Forward substitution: x_i = state_map * v + state_offset.
  p.lift = MatrixXd::Zero(nz, nv);
  p.offset = VectorXd::Zero(nz);
  MatrixXd state_map = MatrixXd::Zero(nx, nv);
  state_map.leftCols(nx).setIdentity();
  VectorXd state_offset = VectorXd::Zero(nx);
  p.lift.topRows(nx) = state_map;
  for (int i = 0; i < horizon; ++i) {
    const Index zw = dims.z_offset_w(i), zy = dims.z_offset_y(i), vw = dims.v_offset_w(i);
    p.lift.block(zw, vw, nw, nw).setIdentity();
    p.lift.middleRows(zy, ny) = sys.C * state_map;
    p.lift.block(zy, vw + nx, ny, ny) += MatrixXd::Identity(ny, ny);
    p.offset.segment(zy, ny) = sys.C * state_offset;

    state_map = sys.A * state_map;
    state_map.block(0, vw, nx, nx) += MatrixXd::Identity(nx, nx);
    state_offset = sys.A * state_offset + sys.B * u_window[i];
  }

  std::vector<Box> parts{sys.x_box};
  for (int i = 0; i < horizon; ++i) {
    parts.push_back(sys.w1_box);
    parts.push_back(sys.w2_box);
  }
  p.boxes = Box::stack(parts);
  return p;
}

VectorXd sigma_lift(const VectorXd& z_prev, int t, int M, const Dims& dims) {
  if (t < 1) throw dimension_mismatch("warm start needs t >= 1");
  const int prev_horizon = std::min(M, t - 1);
  if (z_prev.size() != dims.nz(prev_horizon))
    throw dimension_mismatch("previous iterate has " + std::to_string(z_prev.size()) +
                             " entries, expected " + std::to_string(dims.nz(prev_horizon)));
  if (t - 1 >= M) return z_prev;
  VectorXd out = VectorXd::Zero(dims.nz(prev_horizon + 1));
  out.head(z_prev.size()) = z_prev;
  return out;
}

std::vector<VectorXd> shift_window(std::vector<VectorXd> seq, const VectorXd& item, int t, int M) {
  (void)t;
  seq.push_back(item);
  while (static_cast<int>(seq.size()) > M) seq.erase(seq.begin());
  return seq;
}

VectorXd free_coordinates(const MheProblem& problem, const VectorXd& z) {
  if (z.size() != problem.nz()) throw dimension_mismatch("z does not match the problem");
  const Dims& d = problem.dims;
  VectorXd v(problem.nv());
  v.head(d.nx) = z.head(d.nx);
  for (int i = 0; i < problem.horizon; ++i)
    v.segment(d.v_offset_w(i), d.nw()) = z.segment(d.z_offset_w(i), d.nw());
  return v;
}

std::vector<VectorXd> extract_estimate(const MheProblem& problem, const VectorXd& z) {
  if (z.size() != problem.nz()) throw dimension_mismatch("z does not match the problem");
  const Dims& d = problem.dims;
  std::vector<VectorXd> states;
  states.reserve(static_cast<size_t>(problem.horizon + 1));
  VectorXd x = z.head(d.nx);
  states.push_back(x);
  for (int i = 0; i < problem.horizon; ++i) {
    x = problem.A * x + problem.B * problem.u_window[i] + z.segment(d.z_offset_w(i), d.nx);
    states.push_back(x);
  }
  return states;
}

std::vector<VectorXd> extract_outputs(const MheProblem& problem, const VectorXd& z) {
  if (z.size() != problem.nz()) throw dimension_mismatch("z does not match the problem");
  std::vector<VectorXd> out;
  for (int i = 0; i < problem.horizon; ++i)
    out.push_back(z.segment(problem.dims.z_offset_y(i), problem.dims.ny));
  return out;
}

std::vector<VectorXd> extract_disturbances(const MheProblem& problem, const VectorXd& z) {
  if (z.size() != problem.nz()) throw dimension_mismatch("z does not match the problem");
  std::vector<VectorXd> out;
  for (int i = 0; i < problem.horizon; ++i)
    out.push_back(z.segment(problem.dims.z_offset_w(i), problem.dims.nw()));
  return out;
}

ResidualSigma residual_sigma(int t, int M, const MatrixXd& weight, const LtiSystem& sys,
                             double eta) {
  ResidualSigma s;
  if (t > M) return s;
  const double coefficient =
      eta > 0.0 ? 1.0 - 1.0 / eta : -std::numeric_limits<double>::infinity();
  const double weight_norm = max_eigenvalue(weight);
  const double first = weight_norm == 0.0 ? 0.0 : coefficient * weight_norm;
  s.raw = first + spectral_norm(sys.A) + spectral_norm(sys.B) + spectral_norm(sys.C) + 2.0;
  s.was_clamped = s.raw < 0.0;
  s.clamped = s.was_clamped ? 0.0 : s.raw;
  return s;
}

bool violates_state_or_output_box(const MheProblem& problem, const LtiSystem& sys,
                                  const VectorXd& z) {
  const auto states = extract_estimate(problem, z);
  for (size_t i = 1; i < states.size(); ++i)
    if (!sys.x_box.contains(states[i], 1e-12)) return true;
  for (const auto& y : extract_outputs(problem, z))
    if (!sys.y_box.contains(y, 1e-12)) return true;
  return false;
}

}  // namespace submhe
