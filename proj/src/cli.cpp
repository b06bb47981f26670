#include "submhe/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "submhe/errors.hpp"
#include "submhe/mhe_core.hpp"
#include "submhe/rng.hpp"
#include "submhe/solver.hpp"

namespace submhe {

using nlohmann::json;

namespace {

// Head copied bit for bit and exact zeros after it: the norm is unchanged.
bool pads_exactly(const VectorXd& lifted, const VectorXd& z) {
  if (lifted.size() < z.size()) return false;
  return lifted.head(z.size()) == z && (lifted.tail(lifted.size() - z.size()).array() == 0.0).all();
}

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<int> iters;
  std::optional<std::string> out_dir;
  bool strict = false;
  bool uncertified = false;
  std::optional<std::string> oracle;
};

void apply_overrides(ConfigDocument& doc, const Flags& f) {
  if (f.seed) doc.scenario.seed = *f.seed;
  if (f.steps) {
    if (*f.steps < 1) throw Error(error_kind::kValidationError, "--steps must be at least 1", "scenario.steps");
    doc.scenario.steps = *f.steps;
  }
  if (f.iters) {
    if (*f.iters < 0) throw Error(error_kind::kValidationError, "--iters must be nonnegative", "mhe.K");
    doc.mhe.K = *f.iters;
  }
  if (f.oracle) doc.scenario.oracle = *f.oracle == "on";
  if (f.out_dir) doc.output.dir = *f.out_dir;
}

json error_json(const Error& e) {
  json j = {{"error", e.kind()}, {"message", e.what()}};
  if (!e.field().empty()) j["field"] = e.field();
  if (const auto* c = dynamic_cast<const ContractionViolated*>(&e)) {
    j["rho"] = c->rho();
    j["minimal_horizon"] = c->minimal_horizon();
  }
  if (const auto* n = dynamic_cast<const NotFoundBelowCap*>(&e)) {
    j["best_K"] = n->best_K();
    j["best_margin"] = n->best_margin();
  }
  return j;
}

bool is_usage_error(const Error& e) {
  return e.kind() == error_kind::kParseError || e.kind() == error_kind::kValidationError;
}

std::filesystem::path output_path(const ConfigDocument& doc, const std::string& name) {
  std::filesystem::create_directories(doc.output.dir);
  return std::filesystem::path(doc.output.dir) / name;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(error_kind::kValidationError, "cannot write " + path.string(), "output.dir");
  f << text;
}

json lmi_json(const LmiReport& r) {
  return {{"pass", r.pass},
          {"max_eigenvalue", r.max_eigenvalue},
          {"tol", r.tol},
          {"min_eigenvalue_P", r.min_eigenvalue_P},
          {"min_eigenvalue_Q", r.min_eigenvalue_Q},
          {"min_eigenvalue_R", r.min_eigenvalue_R},
          {"eta_in_range", r.eta_in_range}};
}

json matrix_rows(const MatrixXd& m) {
  json a = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

json model_json(const ResolvedModel& m) {
  json j = {{"certificate_searched", m.certificate_searched},
            {"L_pi", m.L_pi},
            {"L_pi_estimated", m.L_pi_estimated},
            {"gamma13_slope", m.gamma13_slope},
            {"gamma13_estimated", m.gamma13_estimated},
            {"L_Phi", m.L_Phi},
            {"L_Phi_source", m.doc.analysis.L_Phi_source},
            {"bar_H", m.scalars.bar_H},
            {"solver_rate_by_horizon", m.scalars.rate_by_horizon},
            {"lmi", lmi_json(m.lmi)}};
  if (m.probe) j["probe"] = {{"samples", m.probe->ratios.size()}, {"skipped", m.probe->skipped}};
  return j;
}

int cmd_certify(const ResolvedModel& m, std::ostream& out, std::ostream& err) {
  json j = lmi_json(m.lmi);
  j["searched"] = m.certificate_searched;
  j["P"] = matrix_rows(m.cert.P);
  out << j.dump(2) << '\n';
  if (m.lmi.pass) return 0;
  err << json{{"error", error_kind::kLmiViolated},
              {"message", "dissipation LMI fails: max eigenvalue " + std::to_string(m.lmi.max_eigenvalue) +
                              " exceeds tolerance"}}
             .dump()
      << '\n';
  return 1;
}

int cmd_analyze(const ResolvedModel& m, std::ostream& out) {
  compute_rho(m.params.eta, m.params.M);
  const GainLedger best = min_iterations(m.params, m.doc.analysis.K_max);
  json j = {{"K_star", best.K}, {"ledger", to_json(best)}, {"model", model_json(m)}};
  if (m.doc.mhe.K) j["configured"] = to_json(make_ledger(*m.doc.mhe.K, m.params));
  write_file(output_path(m.doc, m.doc.output.ledger), j.dump(2) + "\n");
  out << j.dump(2) << '\n';
  return 0;
}

int cmd_simulate(const ResolvedModel& m, const Flags& f, std::ostream& out) {
  const int K = m.doc.mhe.K ? *m.doc.mhe.K : auto_iterations(m);

  // Certification gate.
  json certification = {{"lmi", m.lmi.pass}};
  std::string reasons;
  if (!m.lmi.pass) reasons += "dissipation LMI fails; ";
  try {
    const GainLedger ledger = make_ledger(K, m.params);
    certification["rho"] = ledger.rho;
    certification["small_gain"] = ledger.verdict.all;
    if (!ledger.verdict.all) reasons += "small-gain conditions fail at K = " + std::to_string(K) + "; ";
  } catch (const ContractionViolated& e) {
    certification["rho"] = e.rho();
    certification["minimal_horizon"] = e.minimal_horizon();
    reasons += std::string(e.what()) + "; ";
  }
  const bool certified = reasons.empty();
  certification["certified"] = certified;
  if (!certified && !f.uncertified)
    throw Error(error_kind::kUncertifiedRun,
                reasons + "pass --uncertified to simulate without the stability certificate");

  ScenarioConfig cfg = make_scenario(m, K);
  cfg.strict = f.strict;
  const TrajectoryLog log = run_closed_loop(cfg);

  std::ostringstream csv;
  write_csv(log, csv);
  write_file(output_path(m.doc, m.doc.output.csv), csv.str());
  json summary = summary_json(log);
  summary["K"] = K;
  summary["certification"] = certification;
  summary["model"] = model_json(m);
  write_file(output_path(m.doc, m.doc.output.summary), summary.dump(2) + "\n");
  out << summary.dump(2) << '\n';
  return 0;
}

json check_entry(const std::string& name, const std::string& status, const std::string& detail) {
  return {{"check", name}, {"status", status}, {"detail", detail}};
}

int cmd_verify(const ResolvedModel& m, std::ostream& out) {
  const LtiSystem& sys = m.doc.system;
  const Dims dims = Dims::of(sys);
  const int M = m.doc.mhe.M;
  Rng rng(m.doc.scenario.seed);
  json checks = json::array();

  checks.push_back(check_entry("lmi", m.lmi.pass ? "pass" : "fail",
                               "max eigenvalue " + std::to_string(m.lmi.max_eigenvalue)));

  if (m.lmi.pass) {
    int bad = 0;
    for (int i = 0; i < 1000; ++i) {
      const VectorXd dx = rng.normal_vector(dims.nx), dw = rng.normal_vector(dims.nw());
      const VectorXd dnext = sys.A * dx + dw.head(dims.nx);
      const VectorXd dy = sys.C * dx + dw.tail(dims.ny);
      const double lhs = weighted_sq_norm(dnext, m.cert.P);
      const double rhs = m.cert.eta * weighted_sq_norm(dx, m.cert.P) + weighted_sq_norm(dw, m.cert.Q) +
                         weighted_sq_norm(dy, m.cert.R);
      bad += lhs > rhs * (1.0 + 1e-9);
    }
    checks.push_back(check_entry("dissipation", bad ? "fail" : "pass",
                                 std::to_string(bad) + " of 1000 sampled pairs violate"));
  } else {
    checks.push_back(check_entry("dissipation", "skip", "no valid certificate"));
  }

  {
    int bad = 0, total = 0;
    double worst_kkt = 0.0;
    const Box prior_box = Box::symmetric(dims.nx, 10.0);
    for (int trial = 0; trial < 20; ++trial) {
      const int t = static_cast<int>(rng.next() % static_cast<std::uint64_t>(2 * M + 1));
      const int h = std::min(M, t);
      std::vector<VectorXd> u, y;
      for (int i = 0; i < h; ++i) {
        u.push_back(sys.u_box.project(rng.uniform_vector(dims.nu, -2.0, 2.0)));
        y.push_back(rng.uniform_vector(dims.ny, -10.0, 10.0));
      }
      const MheProblem p = build_problem(sys, m.cert, rng.uniform_in(prior_box), u, y, M, t);
      const OracleResult o = solve_oracle(p, 1e-10);
      worst_kkt = std::max(worst_kkt, o.kkt_residual);
      const VectorXd z0 = rng.uniform_vector(p.nz(), -5.0, 5.0);
      for (int K : {1, 5, 20}) {
        const SolveReport r = solve_fixed_iters(p, CondensedPoint{z0, std::nullopt}, K);
        const double bound = std::pow(r.contraction_base, K) * (z0 - o.z_star.z).norm() + 1e-9;
        bad += (r.z_K.z - o.z_star.z).norm() > bound;
        ++total;
      }
    }
    checks.push_back(check_entry("solver_contraction", bad ? "fail" : "pass",
                                 std::to_string(bad) + " of " + std::to_string(total) + " solves violate"));
    checks.push_back(check_entry("oracle_kkt", worst_kkt <= 1e-8 ? "pass" : "fail",
                                 "worst residual " + std::to_string(worst_kkt)));
  }

  {
    bool ok = true;
    for (int t = 1; t <= 2 * M; ++t) {
      const VectorXd z = rng.normal_vector(dims.nz(std::min(M, t - 1)));
      const VectorXd lifted = sigma_lift(z, t, M, dims);
      ok = ok && lifted.size() == dims.nz(std::min(M, t)) && pads_exactly(lifted, z);
    }
    checks.push_back(check_entry("warm_start_dims", ok ? "pass" : "fail", "t = 1.." + std::to_string(2 * M)));
  }

  std::optional<int> K_star;
  try {
    const double rho = compute_rho(m.params.eta, M);
    const GainLedger best = min_iterations(m.params, m.doc.analysis.K_max);
    K_star = best.K;
    const bool below_fails = best.K == 1 || !small_gain_check(best.K - 1, m.params).all;
    checks.push_back(check_entry("min_iterations", below_fails ? "pass" : "fail",
                                 "rho = " + std::to_string(rho) + ", K* = " + std::to_string(best.K)));
  } catch (const ContractionViolated& e) {
    checks.push_back(check_entry("min_iterations", "skip", e.what()));
  } catch (const NotFoundBelowCap& e) {
    checks.push_back(check_entry("min_iterations", "fail", e.what()));
  }

  {
    const int K = m.doc.mhe.K ? *m.doc.mhe.K : K_star.value_or(20);
    ScenarioConfig cfg = make_scenario(m, K);
    cfg.steps = std::min(cfg.steps, 2 * M + 2);
    cfg.oracle = true;
    std::ostringstream a, b;
    const TrajectoryLog log = run_closed_loop(cfg);
    write_csv(log, a);
    write_csv(run_closed_loop(cfg), b);
    checks.push_back(check_entry("determinism", a.str() == b.str() ? "pass" : "fail",
                                 std::to_string(cfg.steps) + " steps, two runs"));
    const VerdictCounts lyap = log.counts(&TrajectoryRow::lyapunov);
    checks.push_back(check_entry("lyapunov_monitor", !m.lmi.pass ? "skip" : (lyap.fail ? "fail" : "pass"),
                                 std::to_string(lyap.fail) + " failing steps"));
    const VerdictCounts con = log.counts(&TrajectoryRow::contraction);
    checks.push_back(check_entry("contraction_monitor", con.fail ? "fail" : "pass",
                                 std::to_string(con.fail) + " failing steps"));
  }

  {
    const json canonical = to_json(m.doc);
    const bool same = to_json(parse_config(canonical)) == canonical;
    checks.push_back(check_entry("config_round_trip", same ? "pass" : "fail", ""));
  }

  int failures = 0;
  for (const auto& c : checks) failures += c["status"] == "fail";
  out << json{{"checks", checks}, {"failures", failures}}.dump(2) << '\n';
  return failures ? 1 : 0;
}

}  // namespace

ResolvedModel resolve_model(const ConfigDocument& doc) {
  ResolvedModel m;
  m.doc = doc;
  const LtiSystem& sys = doc.system;
  const CertificateBlock& c = doc.certificate;
  if (c.P) {
    m.cert = IossCertificate{*c.P, c.Q, c.R, c.eta, c.tol};
  } else {
    CertificateSearchOptions options;
    options.budget = c.search_budget;
    options.tol = c.tol;
    m.cert = find_certificate(sys, c.Q, c.R, c.eta, options);
    m.certificate_searched = true;
  }
  m.lmi = verify_ioss_lmi(sys, m.cert);

  m.law.gain = doc.controller.gain
                   ? *doc.controller.gain
                   : lqr_gain(sys.A, sys.B, MatrixXd::Identity(sys.nx(), sys.nx()),
                              MatrixXd::Identity(sys.nu(), sys.nu()));
  m.law.u_box = sys.u_box;
  if (doc.controller.L_pi) {
    m.L_pi = *doc.controller.L_pi;
    m.law.declared_lipschitz = m.L_pi;
  } else {
    Box domain = sys.x_box;
    for (Index i = 0; i < domain.size(); ++i) {
      domain.lower[i] = std::max(domain.lower[i], -20.0);
      domain.upper[i] = std::min(domain.upper[i], 20.0);
    }
    m.L_pi = estimate_lipschitz(m.law, domain, 2000, doc.scenario.seed).value;
    m.L_pi_estimated = true;
  }
  if (doc.controller.gamma13_slope) {
    m.gamma13_slope = *doc.controller.gamma13_slope;
  } else {
    m.gamma13_slope = estimate_closed_loop_gain(sys, m.law, 200, {0.01, 0.1, 1.0}, doc.scenario.seed).slope;
    m.gamma13_estimated = true;
  }

  const int M = doc.mhe.M;
  if (doc.analysis.L_Phi_source == "probe") {
    m.probe = lemma1_probe(sys, m.cert, M, doc.analysis.probe_trials, doc.analysis.probe_seed);
    m.L_Phi = m.probe->L_Phi;
  } else {
    m.L_Phi = doc.analysis.L_Phi;
  }
  m.scalars = compute_model_scalars(sys, m.cert, M);
  m.params = derive_params(m.scalars, m.cert, M, m.L_Phi, m.L_pi, m.gamma13_slope, doc.mhe.phi_base);
  validate_params(m.params);
  return m;
}

int auto_iterations(const ResolvedModel& model) {
  compute_rho(model.params.eta, model.params.M);
  return min_iterations(model.params, model.doc.analysis.K_max).K;
}

ScenarioConfig make_scenario(const ResolvedModel& m, int K) {
  const ScenarioBlock& s = m.doc.scenario;
  ScenarioConfig cfg;
  cfg.sys = m.doc.system;
  cfg.cert = m.cert;
  cfg.law = m.law;
  cfg.M = m.doc.mhe.M;
  cfg.K = K;
  cfg.steps = s.steps;
  cfg.x0 = s.x0;
  cfg.x_prior0 = s.prior;
  cfg.z0_0 = s.z0 ? *s.z0 : s.prior;
  cfg.disturbance = DisturbanceSpec{s.w1_box, s.w2_box, s.seed};
  cfg.oracle = s.oracle;
  cfg.oracle_tol = s.oracle_tol;
  cfg.analysis = m.params;
  cfg.config_hash = config_hash(m.doc);
  return cfg;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sub-optimal moving horizon estimation in feedback control"};
  app.name("submhe");
  app.require_subcommand(1);
  Flags f;
  app.add_option("--config", f.config, "JSON configuration file")->required();
  app.add_option("--seed", f.seed, "Override scenario.seed");
  app.add_option("--steps", f.steps, "Override scenario.steps");
  app.add_option("--iters", f.iters, "Override mhe.K");
  app.add_option("--out", f.out_dir, "Override output.dir");
  app.add_flag("--strict", f.strict, "Treat monitor failures as errors");
  app.add_flag("--uncertified", f.uncertified, "Simulate even when the analysis fails");
  app.add_option("--oracle", f.oracle, "Per-step oracle solve")->check(CLI::IsMember({"on", "off"}));
  app.fallthrough();
  auto* certify = app.add_subcommand("certify", "Verify or search the IOSS certificate");
  auto* analyze = app.add_subcommand("analyze-k", "Gain ledger and minimum iteration count");
  auto* simulate = app.add_subcommand("simulate", "Closed-loop run, CSV and JSON summary");
  auto* verify = app.add_subcommand("verify", "Invariant checks on the loaded config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << json{{"error", "UsageError"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }

  try {
    ConfigDocument doc = load_config(f.config);
    apply_overrides(doc, f);
    const ResolvedModel model = resolve_model(doc);
    if (certify->parsed()) return cmd_certify(model, out, err);
    if (analyze->parsed()) return cmd_analyze(model, out);
    if (simulate->parsed()) return cmd_simulate(model, f, out);
    if (verify->parsed()) return cmd_verify(model, out);
    return 2;
  } catch (const Error& e) {
    err << error_json(e).dump() << '\n';
    return is_usage_error(e) ? 2 : 1;
  } catch (const std::exception& e) {
    err << json{{"error", "InternalError"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
}

}  // namespace submhe
