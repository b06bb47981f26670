#include "submhe/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <string>

#include "submhe/errors.hpp"
#include "submhe/rng.hpp"
#include "submhe/solver.hpp"

namespace submhe {

namespace {

bool within(double lhs, double rhs, double rel, double abs) {
  return lhs <= rhs + rel * std::abs(rhs) + abs;
}

MonitorCheck check(double lhs, double rhs, double rel, double abs) {
  return MonitorCheck{within(lhs, rhs, rel, abs) ? Verdict::Pass : Verdict::Fail, lhs, rhs};
}

void require_size(const VectorXd& v, Index n, const std::string& what) {
  if (v.size() != n)
    throw dimension_mismatch(what + " has " + std::to_string(v.size()) + " entries, expected " +
                             std::to_string(n));
}

// Sampling box for the probe: the constraint box cut down to [-scale, scale].
Box clipped(const Box& box, double scale) {
  Box out = box;
  for (Index i = 0; i < box.size(); ++i) {
    out.lower[i] = std::max(box.lower[i], -scale);
    out.upper[i] = std::min(box.upper[i], scale);
  }
  return out;
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Skipped: return "skip";
  }
  return "skip";
}

void validate_scenario(const ScenarioConfig& cfg) {
  validate_system(cfg.sys);
  const Index nx = cfg.sys.nx(), ny = cfg.sys.ny(), nu = cfg.sys.nu();
  if (cfg.steps < 1) throw Error(error_kind::kInvalidParams, "steps must be at least 1");
  if (cfg.K < 0) throw Error(error_kind::kInvalidParams, "K must be nonnegative");
  if (cfg.M < 1) throw Error(error_kind::kInvalidParams, "M must be at least 1");
  if (!(cfg.oracle_tol > 0.0)) throw Error(error_kind::kInvalidParams, "oracle tolerance must be positive");
  require_size(cfg.x0, nx, "x0");
  require_size(cfg.x_prior0, nx, "x_prior0");
  require_size(cfg.z0_0, nx, "z0_0");
  if (cfg.law.gain.rows() != nu || cfg.law.gain.cols() != nx)
    throw dimension_mismatch("feedback gain must be n_u x n_x");
  if (cfg.law.u_box.size() != nu) throw dimension_mismatch("input box");
  if (cfg.disturbance.w1_box.size() != nx || cfg.disturbance.w2_box.size() != ny)
    throw dimension_mismatch("disturbance sampling boxes");
  if (cfg.cert.P.rows() != nx || cfg.cert.Q.rows() != nx + ny || cfg.cert.R.rows() != ny)
    throw dimension_mismatch("certificate weights");
  if (cfg.analysis) validate_params(*cfg.analysis);
}

std::vector<AugmentedDisturbance> sample_disturbance(std::uint64_t seed, const Box& w1_box,
                                                     const Box& w2_box, int steps) {
  if (!w1_box.bounded() || !w2_box.bounded())
    throw Error(error_kind::kUnboundedSampleBox, "disturbance boxes must be bounded to sample");
  Rng rng(seed);
  std::vector<AugmentedDisturbance> out;
  out.reserve(static_cast<size_t>(std::max(steps, 0)));
  for (int t = 0; t < steps; ++t) {
    AugmentedDisturbance w;
    w.w1 = rng.uniform_in(w1_box);
    w.w2 = rng.uniform_in(w2_box);
    out.push_back(std::move(w));
  }
  return out;
}

VerdictCounts TrajectoryLog::counts(MonitorCheck TrajectoryRow::*which) const {
  VerdictCounts c;
  for (const auto& row : rows) {
    switch ((row.*which).verdict) {
      case Verdict::Pass: ++c.pass; break;
      case Verdict::Fail: ++c.fail; break;
      case Verdict::Skipped: ++c.skipped; break;
    }
  }
  return c;
}

TrajectoryLog run_closed_loop(const ScenarioConfig& cfg) {
  validate_scenario(cfg);
  const LtiSystem& sys = cfg.sys;
  const Dims dims = Dims::of(sys);

  TrajectoryLog log;
  log.config_hash = cfg.config_hash;
  log.prng = std::string(Rng::kAlgorithm);
  log.seed = cfg.disturbance.seed;
  log.nx = dims.nx;
  log.ny = dims.ny;
  log.nu = dims.nu;
  for (int h = 0; h <= cfg.M; ++h)
    log.bar_H = std::max(log.bar_H, max_eigenvalue(compute_weight(h, cfg.cert)));

  // Monitor prerequisites.
  std::optional<AppendixConstants> sub;
  std::optional<GainSlopes> slopes;
  double phi_K = 0.0, rho = 0.0;
  if (cfg.analysis) {
    sub = suboptimality_constants(cfg.K, *cfg.analysis);
    phi_K = phi(*cfg.analysis, cfg.K);
    try {
      log.ledger = make_ledger(cfg.K, *cfg.analysis);
      slopes = log.ledger->slopes;
      rho = log.ledger->rho;
    } catch (const ContractionViolated& e) {
      log.trajectory_skip_reason = e.what();
    }
  } else {
    log.trajectory_skip_reason = "no analysis parameters";
  }
  if (!cfg.oracle && log.trajectory_skip_reason.empty())
    log.trajectory_skip_reason = "oracle disabled";

  const auto disturbances =
      sample_disturbance(cfg.disturbance.seed, cfg.disturbance.w1_box, cfg.disturbance.w2_box,
                         cfg.steps);

  std::vector<VectorXd> states{cfg.x0};
  std::vector<VectorXd> estimates;
  std::vector<VectorXd> u_window, y_window;
  VectorXd z_prev;
  double sup_x = 0.0, sup_e = 0.0, sup_w = 0.0, sup_eps = 0.0, sup_sigma = 0.0;
  double eps_prev = 0.0, eps0 = 0.0, e0 = 0.0;

  for (int t = 0; t < cfg.steps; ++t) {
    TrajectoryRow row;
    row.t = t;
    const VectorXd& x = states.back();
    const int horizon = std::min(cfg.M, t);
    const int start = t - horizon;
    row.horizon = horizon;
    row.x_prior = start == 0 ? cfg.x_prior0 : estimates[static_cast<size_t>(start)];

    const MheProblem problem = build_problem(sys, cfg.cert, row.x_prior, u_window, y_window, cfg.M, t);
    row.z0 = t == 0 ? cfg.z0_0 : sigma_lift(z_prev, t, cfg.M, dims);

    std::optional<OracleResult> oracle;
    SolveOptions options;
    if (cfg.oracle) {
      oracle = solve_oracle(problem, cfg.oracle_tol);
      options.reference_optimum = oracle->z_star.z;
    }
    const SolveReport report = solve_fixed_iters(problem, CondensedPoint{row.z0, std::nullopt}, cfg.K, options);
    row.zK = report.z_K.z;
    row.contraction_base = report.contraction_base;
    row.x_hat = extract_estimate(problem, row.zK).back();
    row.x = x;
    row.e_norm = (row.x_hat - x).norm();
    row.w_delta = w_delta(cfg.cert, row.x_hat, x);
    const ResidualSigma sigma = residual_sigma(t, cfg.M, problem.weight, sys, cfg.cert.eta);
    row.sigma_raw = sigma.raw;
    row.sigma_clamped = sigma.clamped;
    row.sigma_was_clamped = sigma.was_clamped;
    row.state_output_box_violation = violates_state_or_output_box(problem, sys, row.zK);
    for (const auto& w : extract_disturbances(problem, row.zK))
      row.w2_in_box = row.w2_in_box && sys.w2_box.contains(w.tail(dims.ny), 1e-12);

    sup_sigma = std::max(sup_sigma, sigma.clamped);
    if (oracle) {
      const double eps = (row.zK - oracle->z_star.z).norm();
      row.eps = eps;
      if (t == 0) {
        eps0 = eps;
        e0 = row.e_norm;
      }

      if (cfg.monitors.contraction) {
        const double bound = std::pow(report.contraction_base, cfg.K) * (row.z0 - oracle->z_star.z).norm();
        row.contraction = check(eps, bound, 0.0, 1e-9);
      }
      if (cfg.monitors.lyapunov) {
        double rhs = 6.0 * std::pow(cfg.cert.eta, horizon) *
                         w_delta(cfg.cert, row.x_prior, states[static_cast<size_t>(start)]) +
                     2.0 * log.bar_H * eps * eps;
        for (int j = 1; j <= horizon; ++j)
          rhs += 6.0 * std::pow(cfg.cert.eta, j - 1) *
                 weighted_sq_norm(disturbances[static_cast<size_t>(t - j)].stacked(), cfg.cert.Q);
        row.lyapunov = check(row.w_delta, rhs, 1e-7, 1e-14);
      }
      if (cfg.monitors.recursion && sub && t >= 1) {
        const double rhs = phi_K * eps_prev + sub->C1 * sup_x + sub->C2 * sup_e + sub->C3 * sup_w +
                           phi_K * cfg.analysis->L_Phi * sup_sigma;
        row.recursion = check(eps, rhs, 1e-9, 1e-9);
      }
      if (cfg.monitors.trajectory && slopes) {
        const double eps_rhs = std::pow(slopes->beta2_base, t) * eps0 + slopes->g21 * sup_x +
                               slopes->g23 * sup_e + slopes->g2w * sup_w + slopes->g2s * sup_sigma;
        row.eps_bound = check(eps, eps_rhs, 1e-9, 1e-9);
        const double e_rhs = slopes->beta3_coeff * std::pow(std::sqrt(rho), t) * e0 +
                             slopes->g31 * sup_x + slopes->g32 * sup_eps + slopes->g3w * sup_w +
                             slopes->g3s * sup_sigma;
        row.error_bound = check(row.e_norm, e_rhs, 1e-9, 1e-9);
      }
      eps_prev = eps;
      sup_eps = std::max(sup_eps, eps);
    }

    if (cfg.strict) {
      const std::pair<const char*, const MonitorCheck*> checks[] = {
          {"recursion", &row.recursion},   {"lyapunov", &row.lyapunov},
          {"eps_bound", &row.eps_bound},   {"error_bound", &row.error_bound},
          {"contraction", &row.contraction}};
      for (const auto& [name, c] : checks)
        if (c->verdict == Verdict::Fail)
          throw Error(error_kind::kMonitorViolation,
                      std::string("monitor ") + name + " failed at t = " + std::to_string(t) +
                          ": " + format_number(c->lhs) + " > " + format_number(c->rhs));
    }

    // Control and plant.
    const AugmentedDisturbance& w = disturbances[static_cast<size_t>(t)];
    row.u = evaluate(cfg.law, row.x_hat);
    row.y = sys.C * x + w.w2;
    row.w = w.stacked();
    const VectorXd x_next = sys.A * x + sys.B * row.u + w.w1;
    if (!x_next.allFinite() || x_next.norm() > 1e12)
      throw Error(error_kind::kDivergentTrajectory, "plant state diverged at t = " + std::to_string(t));

    sup_x = std::max(sup_x, x.norm());
    sup_e = std::max(sup_e, row.e_norm);
    sup_w = std::max(sup_w, row.w.norm());

    estimates.push_back(row.x_hat);
    u_window = shift_window(std::move(u_window), row.u, t, cfg.M);
    y_window = shift_window(std::move(y_window), row.y, t, cfg.M);
    z_prev = row.zK;
    states.push_back(x_next);
    log.rows.push_back(std::move(row));
  }
  return log;
}

std::vector<TrajectoryLog> run_batch(const std::vector<ScenarioConfig>& configs) {
  std::vector<std::future<TrajectoryLog>> jobs;
  jobs.reserve(configs.size());
  for (const auto& cfg : configs)
    jobs.push_back(std::async(std::launch::async, [&cfg] { return run_closed_loop(cfg); }));
  std::vector<TrajectoryLog> out;
  out.reserve(jobs.size());
  for (auto& job : jobs) out.push_back(job.get());
  return out;
}

void write_csv(const TrajectoryLog& log, std::ostream& out) {
  out << "t";
  auto names = [&](const char* prefix, Index n) {
    for (Index i = 0; i < n; ++i) out << ',' << prefix << i;
  };
  names("x", log.nx);
  names("y", log.ny);
  names("u", log.nu);
  names("xhat", log.nx);
  out << ",e_norm,eps,w_delta,sigma_raw,sigma_clamped,sigma_was_clamped,box_violation,w2_in_box"
         ",mon_a,mon_b,mon_c_eps,mon_c_err,mon_d\n";
  for (const auto& row : log.rows) {
    out << row.t;
    for (const VectorXd* v : {&row.x, &row.y, &row.u, &row.x_hat})
      for (Index i = 0; i < v->size(); ++i) out << ',' << format_number((*v)[i]);
    out << ',' << format_number(row.e_norm) << ',' << (row.eps ? format_number(*row.eps) : "")
        << ',' << format_number(row.w_delta) << ',' << format_number(row.sigma_raw) << ','
        << format_number(row.sigma_clamped) << ',' << int(row.sigma_was_clamped) << ','
        << int(row.state_output_box_violation) << ',' << int(row.w2_in_box);
    for (const MonitorCheck* c :
         {&row.recursion, &row.lyapunov, &row.eps_bound, &row.error_bound, &row.contraction})
      out << ',' << to_string(c->verdict);
    out << '\n';
  }
}

nlohmann::json summary_json(const TrajectoryLog& log) {
  auto counts = [&](MonitorCheck TrajectoryRow::*which) {
    const VerdictCounts c = log.counts(which);
    return nlohmann::json{{"pass", c.pass}, {"fail", c.fail}, {"skipped", c.skipped}};
  };
  double sup_x = 0.0, sup_e = 0.0, sup_eps = 0.0;
  int clamped = 0, box_violations = 0;
  bool w2_ok = true;
  for (const auto& row : log.rows) {
    sup_x = std::max(sup_x, row.x.norm());
    sup_e = std::max(sup_e, row.e_norm);
    if (row.eps) sup_eps = std::max(sup_eps, *row.eps);
    clamped += row.sigma_was_clamped;
    box_violations += row.state_output_box_violation;
    w2_ok = w2_ok && row.w2_in_box;
  }
  nlohmann::json j = {
      {"config_hash", log.config_hash},
      {"prng", log.prng},
      {"seed", log.seed},
      {"steps", log.rows.size()},
      {"bar_H", log.bar_H},
      {"monitors",
       {{"recursion", counts(&TrajectoryRow::recursion)},
        {"lyapunov", counts(&TrajectoryRow::lyapunov)},
        {"eps_bound", counts(&TrajectoryRow::eps_bound)},
        {"error_bound", counts(&TrajectoryRow::error_bound)},
        {"contraction", counts(&TrajectoryRow::contraction)}}},
      {"sup", {{"x", sup_x}, {"e", sup_e}, {"eps", sup_eps}}},
      {"sigma_clamped_steps", clamped},
      {"state_output_box_violations", box_violations},
      {"w2_estimates_in_box", w2_ok}};
  if (!log.trajectory_skip_reason.empty()) j["trajectory_monitor_skipped"] = log.trajectory_skip_reason;
  j["ledger"] = log.ledger ? to_json(*log.ledger) : nlohmann::json(nullptr);
  return j;
}

Lemma1Probe lemma1_probe(const LtiSystem& sys, const IossCertificate& cert, int M, int n_trials,
                         std::uint64_t seed, const ProbeOptions& options) {
  validate_system(sys);
  if (M < 1 || n_trials < 1) throw Error(error_kind::kInvalidParams, "probe needs M >= 1 and trials >= 1");
  const Box prior_box = clipped(sys.x_box, options.base_scale);
  const Box u_box = clipped(sys.u_box, options.base_scale);
  const Box y_box = clipped(sys.y_box, options.base_scale);
  const double p = options.perturbation_scale;
  const int t = M + 1;
  Rng rng(seed);

  struct Params {
    VectorXd prior;
    std::vector<VectorXd> u, y;
  };
  auto perturb = [&](const VectorXd& v, const Box& box) {
    return box.project(v + rng.uniform_vector(v.size(), -p, p));
  };

  Lemma1Probe out;
  for (int trial = 0; trial < n_trials; ++trial) {
    Params a;
    a.prior = rng.uniform_in(prior_box);
    for (int i = 0; i < M; ++i) {
      a.u.push_back(rng.uniform_in(u_box));
      a.y.push_back(rng.uniform_in(y_box));
    }
    // Cycle through perturbing everything, only the prior, only u, only y.
    const int mode = trial % 4;
    Params b = a;
    if (mode == 0 || mode == 1) b.prior = perturb(a.prior, prior_box);
    for (int i = 0; i < M; ++i) {
      if (mode == 0 || mode == 2) b.u[static_cast<size_t>(i)] = perturb(a.u[static_cast<size_t>(i)], u_box);
      if (mode == 0 || mode == 3) b.y[static_cast<size_t>(i)] = perturb(a.y[static_cast<size_t>(i)], y_box);
    }

    double d_param = (a.prior - b.prior).squaredNorm(), d_u = 0.0;
    for (int i = 0; i < M; ++i) {
      d_param += (a.y[static_cast<size_t>(i)] - b.y[static_cast<size_t>(i)]).squaredNorm();
      d_u += (a.u[static_cast<size_t>(i)] - b.u[static_cast<size_t>(i)]).squaredNorm();
    }
    const double denominator = std::sqrt(d_param) + std::sqrt(d_u);
    if (!(denominator > 1e-300)) {
      ++out.skipped;
      continue;
    }
    const auto za = solve_oracle(build_problem(sys, cert, a.prior, a.u, a.y, M, t), options.oracle_tol).z_star.z;
    const auto zb = solve_oracle(build_problem(sys, cert, b.prior, b.u, b.y, M, t), options.oracle_tol).z_star.z;
    out.ratios.push_back((za - zb).norm() / denominator);
  }
  double best = 0.0;
  for (double r : out.ratios) best = std::max(best, r);
  out.L_Phi = std::max(best, 1.0 + 1e-9);
  return out;
}

}  // namespace submhe
