#pragma once

#include <array>
#include <optional>
#include <vector>

#include <json.hpp>

#include "submhe/errors.hpp"
#include "submhe/model.hpp"

namespace submhe {

/// Scalars entering the small-gain analysis. Lambda ratios follow
/// lambda_max(U) / lambda_min(V): lambda_H_P = bar_H / lambda_min(P),
/// lambda_P_P = lambda_max(P) / lambda_min(P), lambda_Q_P = lambda_max(Q) / lambda_min(P).
struct AnalysisParams {
  double L_Phi = 0.0;
  double L_pi = 0.0;
  double gamma13_slope = 0.0;
  double eta = 0.0;
  int M = 1;
  double phi_base = 0.0;
  double norm_C = 0.0;
  double bar_H = 0.0;
  double lambda_H_P = 0.0;
  double lambda_P_P = 0.0;
  double lambda_Q_P = 0.0;
};

/// Throws InvalidParams naming the first broken invariant.
void validate_params(const AnalysisParams& params);

/// Smallest horizon with 6^(1/M) eta < 1.
int minimal_horizon(double eta);

/// rho = 6^(1/M) eta. Throws ContractionViolated when rho >= 1.
double compute_rho(double eta, int M);

double phi(const AnalysisParams& params, int K);

struct AppendixConstants {
  double C1 = 0.0;
  double C2 = 0.0;
  double C3 = 0.0;
  double C_e = 0.0;
  double C_w = 0.0;
  double C_eps = 0.0;
};

/// C1..C3 only; these do not involve rho and remain meaningful when rho >= 1.
AppendixConstants suboptimality_constants(int K, const AnalysisParams& params);

/// All six constants. Throws ContractionViolated when rho >= 1.
AppendixConstants appendix_constants(int K, const AnalysisParams& params);

struct GainSlopes {
  double g21 = 0.0, g23 = 0.0, g2w = 0.0, g2s = 0.0;
  double g31 = 0.0, g32 = 0.0, g3w = 0.0, g3s = 0.0;
  double beta2_base = 0.0;   // beta_2(s, t) = beta2_base^t s
  double beta3_coeff = 0.0;  // beta_3(s, t) = beta3_coeff beta3_base^t s
  double beta3_base = 0.0;
};

GainSlopes gain_slopes(int K, const AnalysisParams& params);

struct SmallGainVerdict {
  std::array<double, 3> products{};
  std::array<double, 3> margins{};
  std::array<bool, 3> pass{};
  bool all = false;
};

/// Linear-gain form of the three composed-loop conditions; a product of
/// exactly 1 fails.
SmallGainVerdict small_gain_check(int K, const AnalysisParams& params);

struct GainLedger {
  int K = 0;
  double phi = 0.0;
  double rho = 0.0;
  AnalysisParams params;
  AppendixConstants constants;
  GainSlopes slopes;
  SmallGainVerdict verdict;
};

GainLedger make_ledger(int K, const AnalysisParams& params);

class NotFoundBelowCap : public Error {
 public:
  NotFoundBelowCap(int cap, int best_K, double best_margin);
  int best_K() const noexcept { return best_K_; }
  double best_margin() const noexcept { return best_margin_; }

 private:
  int best_K_;
  double best_margin_;
};

/// Smallest K in [1, K_max] passing all three conditions (linear scan).
GainLedger min_iterations(const AnalysisParams& params, int K_max);

/// Model-derived quantities: bar_H over the weights of horizons 0..M, P/Q
/// spectra, |C|, and the solver rate for each horizon.
struct ModelScalars {
  double bar_H = 0.0;
  double lambda_min_P = 0.0;
  double lambda_max_P = 0.0;
  double lambda_max_Q = 0.0;
  double norm_C = 0.0;
  std::vector<double> rate_by_horizon;
  double rate_max = 0.0;
};

ModelScalars compute_model_scalars(const LtiSystem& sys, const IossCertificate& cert, int M);

/// phi_base defaults to the worst solver rate over horizons 0..M.
AnalysisParams derive_params(const ModelScalars& scalars, const IossCertificate& cert, int M,
                             double L_Phi, double L_pi, double gamma13_slope,
                             std::optional<double> phi_base = std::nullopt);

nlohmann::json to_json(const AnalysisParams& params);
nlohmann::json to_json(const GainLedger& ledger);

}  // namespace submhe
