#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "submhe/analysis.hpp"
#include "submhe/controller.hpp"
#include "submhe/mhe_core.hpp"
#include "submhe/model.hpp"

namespace submhe {

struct DisturbanceSpec {
  Box w1_box;
  Box w2_box;
  std::uint64_t seed = 0;
};

struct MonitorToggles {
  bool recursion = true;    // (a) one-step sub-optimality recursion
  bool lyapunov = true;     // (b) M-step Lyapunov bound
  bool trajectory = true;   // (c) trajectory bounds for eps and e
  bool contraction = true;  // (d) solver contraction against the oracle
};

struct ScenarioConfig {
  LtiSystem sys;
  IossCertificate cert;
  FeedbackLaw law;
  int M = 1;
  int K = 0;
  int steps = 1;
  VectorXd x0;
  VectorXd x_prior0;
  VectorXd z0_0;  // initial-state block of the t = 0 warm start
  DisturbanceSpec disturbance;
  MonitorToggles monitors;
  bool oracle = true;
  double oracle_tol = 1e-10;
  bool strict = false;
  /// Needed by monitors (a) and (c); those are skipped without it.
  std::optional<AnalysisParams> analysis;
  /// Recorded in the log header only.
  std::string config_hash;
};

void validate_scenario(const ScenarioConfig& cfg);

std::vector<AugmentedDisturbance> sample_disturbance(std::uint64_t seed, const Box& w1_box,
                                                     const Box& w2_box, int steps);

enum class Verdict { Pass, Fail, Skipped };

const char* to_string(Verdict v);

struct MonitorCheck {
  Verdict verdict = Verdict::Skipped;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct TrajectoryRow {
  int t = 0;
  int horizon = 0;
  VectorXd x, y, u, x_hat;
  VectorXd w;        // augmented disturbance applied at t
  VectorXd x_prior;  // prior used by the step-t problem
  double e_norm = 0.0;
  std::optional<double> eps;
  double w_delta = 0.0;
  double sigma_raw = 0.0;
  double sigma_clamped = 0.0;
  bool sigma_was_clamped = false;
  bool state_output_box_violation = false;
  bool w2_in_box = true;
  double contraction_base = 0.0;
  VectorXd z0;  // warm start handed to the solver
  VectorXd zK;
  MonitorCheck recursion, lyapunov, eps_bound, error_bound, contraction;
};

struct VerdictCounts {
  int pass = 0;
  int fail = 0;
  int skipped = 0;
};

struct TrajectoryLog {
  std::string config_hash;
  std::string prng;
  std::uint64_t seed = 0;
  Index nx = 0, ny = 0, nu = 0;
  std::vector<TrajectoryRow> rows;
  double bar_H = 0.0;
  std::optional<GainLedger> ledger;
  std::string trajectory_skip_reason;  // why (c) did not run, if it did not

  VerdictCounts counts(MonitorCheck TrajectoryRow::*which) const;
};

/// Algorithm loop: per step build the windowed problem, run K solver
/// iterations from the warm start, lift the result into the next warm start,
/// apply the feedback law to the estimate and advance the plant.
TrajectoryLog run_closed_loop(const ScenarioConfig& cfg);

/// Independent scenarios run concurrently; results keep the input order.
std::vector<TrajectoryLog> run_batch(const std::vector<ScenarioConfig>& configs);

void write_csv(const TrajectoryLog& log, std::ostream& out);
nlohmann::json summary_json(const TrajectoryLog& log);

struct ProbeOptions {
  double base_scale = 10.0;
  double perturbation_scale = 1.0;
  double oracle_tol = 1e-10;
};

struct Lemma1Probe {
  double L_Phi = 0.0;
  std::vector<double> ratios;
  int skipped = 0;  // degenerate denominators
};

/// Empirical Lipschitz constant of the optimal-solution map over pairs of
/// full-window problems whose prior, input window and output window differ.
/// Ratio: |z*_1 - z*_2| / (|(prior, y)_1 - (prior, y)_2| + |u_1 - u_2|).
Lemma1Probe lemma1_probe(const LtiSystem& sys, const IossCertificate& cert, int M, int n_trials,
                         std::uint64_t seed, const ProbeOptions& options = {});

}  // namespace submhe
