#include "submhe/analysis.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "submhe/mhe_core.hpp"
#include "submhe/solver.hpp"

namespace submhe {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(error_kind::kInvalidParams, "invalid analysis parameter: " + what);
}

// Product of nonnegative slopes; a zero factor wins over an infinite one.
double product(std::initializer_list<double> factors) {
  double p = 1.0;
  for (double f : factors)
    if (f == 0.0) return 0.0;
  for (double f : factors) p *= f;
  return p;
}

}  // namespace

void validate_params(const AnalysisParams& p) {
  require(p.L_Phi > 1.0, "L_Phi must exceed 1");
  require(p.L_pi >= 0.0 && std::isfinite(p.L_pi), "L_pi must be finite and nonnegative");
  require(p.gamma13_slope >= 0.0 && std::isfinite(p.gamma13_slope), "gamma13_slope must be finite");
  require(p.eta >= 0.0 && p.eta < 1.0, "eta must lie in [0, 1)");
  require(p.M >= 1, "M must be at least 1");
  require(p.phi_base >= 0.0 && p.phi_base < 1.0, "phi_base must lie in [0, 1)");
  require(p.norm_C >= 0.0, "norm_C must be nonnegative");
  require(p.bar_H > 0.0, "bar_H must be positive");
  require(p.lambda_H_P > 0.0 && p.lambda_P_P > 0.0 && p.lambda_Q_P > 0.0,
          "lambda ratios must be positive");
}

int minimal_horizon(double eta) {
  if (eta <= 0.0) return 1;
  if (eta >= 1.0) return 0;
  // 6^(1/M) eta < 1  <=>  M > ln 6 / ln(1/eta)
  const double bound = std::log(6.0) / std::log(1.0 / eta);
  int m = static_cast<int>(std::floor(bound)) + 1;
  while (m > 1 && std::pow(6.0, 1.0 / (m - 1)) * eta < 1.0) --m;
  while (!(std::pow(6.0, 1.0 / m) * eta < 1.0)) ++m;
  return std::max(m, 1);
}

double compute_rho(double eta, int M) {
  if (M < 1) throw Error(error_kind::kInvalidParams, "M must be at least 1");
  if (eta < 0.0 || eta >= 1.0) throw Error(error_kind::kInvalidParams, "eta must lie in [0, 1)");
  const double rho = std::pow(6.0, 1.0 / M) * eta;
  if (rho >= 1.0) throw ContractionViolated(rho, minimal_horizon(eta));
  return rho;
}

double phi(const AnalysisParams& params, int K) { return std::pow(params.phi_base, K); }

AppendixConstants suboptimality_constants(int K, const AnalysisParams& p) {
  const double f = phi(p, K);
  const double M = p.M;
  AppendixConstants c;
  c.C1 = 2.0 * f * p.L_Phi * (1.0 + M * (p.norm_C + p.L_pi));
  c.C2 = 2.0 * f * p.L_Phi * (1.0 + M * p.L_pi);
  c.C3 = 2.0 * f * p.L_Phi * M;
  return c;
}

AppendixConstants appendix_constants(int K, const AnalysisParams& p) {
  const double rho = compute_rho(p.eta, p.M);
  AppendixConstants c = suboptimality_constants(K, p);
  const double f = phi(p, K);
  const double M = p.M;
  const double sr = std::sqrt(rho);
  const double a = std::sqrt(3.0 * p.lambda_P_P * p.lambda_H_P);

  double tail = 0.0;
  for (int i = 1; i <= p.M - 1; ++i) tail += std::pow(sr, -1.0 - i);

  c.C_e = 2.0 * a * f * p.L_Phi * (std::pow(sr, -M) + p.L_pi / sr) +
          4.0 * a * f * p.L_Phi * p.L_pi * tail + std::sqrt(6.0 * p.lambda_P_P) +
          2.0 * a * f * p.L_Phi * (p.L_pi + 1.0) * std::pow(sr, -M - 1.0);

  const double inv_1_sr = 1.0 / (1.0 - sr);
  c.C_w = std::sqrt(2.0 * p.lambda_H_P) * c.C3 + std::sqrt(6.0 * p.lambda_Q_P) * inv_1_sr +
          4.0 * std::sqrt(3.0 * p.lambda_H_P * p.lambda_Q_P) * f * p.L_Phi * (p.L_pi * M + 1.0) *
              inv_1_sr;

  const double inv_1_srM = 1.0 / (1.0 - std::sqrt(std::pow(rho, M)));
  c.C_eps = std::sqrt(2.0 * p.lambda_H_P) * f + std::sqrt(2.0 * p.lambda_H_P) * inv_1_srM +
            4.0 * p.lambda_H_P * f * p.L_Phi * (p.L_pi * M + 1.0) * inv_1_srM;
  return c;
}

GainSlopes gain_slopes(int K, const AnalysisParams& p) {
  const double rho = compute_rho(p.eta, p.M);
  const AppendixConstants c = appendix_constants(K, p);
  const double f = phi(p, K);
  const double inv = f < 1.0 ? 1.0 / (1.0 - f) : kInf;
  const double root = std::sqrt(2.0 * p.lambda_H_P);
  GainSlopes s;
  s.g21 = product({c.C1, inv});
  s.g23 = product({c.C2, inv});
  s.g2w = product({c.C3, inv});
  s.g2s = product({f * p.L_Phi, inv});
  s.g31 = root * c.C1;
  s.g32 = c.C_eps;
  s.g3w = c.C_w;
  s.g3s = root * f * p.L_Phi;
  s.beta2_base = f;
  s.beta3_coeff = c.C_e;
  s.beta3_base = std::sqrt(rho);
  return s;
}

SmallGainVerdict small_gain_check(int K, const AnalysisParams& p) {
  const GainSlopes s = gain_slopes(K, p);
  SmallGainVerdict v;
  v.products = {product({p.gamma13_slope, s.g31}), product({s.g23, s.g32}),
                product({p.gamma13_slope, s.g32, s.g21})};
  v.all = true;
  for (size_t i = 0; i < 3; ++i) {
    v.margins[i] = 1.0 - v.products[i];
    v.pass[i] = v.products[i] < 1.0;
    v.all = v.all && v.pass[i];
  }
  return v;
}

GainLedger make_ledger(int K, const AnalysisParams& params) {
  validate_params(params);
  GainLedger l;
  l.K = K;
  l.params = params;
  l.phi = phi(params, K);
  l.rho = compute_rho(params.eta, params.M);
  l.constants = appendix_constants(K, params);
  l.slopes = gain_slopes(K, params);
  l.verdict = small_gain_check(K, params);
  return l;
}

NotFoundBelowCap::NotFoundBelowCap(int cap, int best_K, double best_margin)
    : Error(error_kind::kNotFoundBelowCap,
            "no iteration count up to " + std::to_string(cap) +
                " satisfies the small-gain conditions; best K = " + std::to_string(best_K) +
                " with worst margin " + std::to_string(best_margin)),
      best_K_(best_K),
      best_margin_(best_margin) {}

GainLedger min_iterations(const AnalysisParams& params, int K_max) {
  validate_params(params);
  compute_rho(params.eta, params.M);
  int best_K = 0;
  double best_margin = -kInf;
  for (int K = 1; K <= K_max; ++K) {
    const SmallGainVerdict v = small_gain_check(K, params);
    if (v.all) return make_ledger(K, params);
    const double worst = std::min({v.margins[0], v.margins[1], v.margins[2]});
    if (worst > best_margin) {
      best_margin = worst;
      best_K = K;
    }
  }
  throw NotFoundBelowCap(K_max, best_K, best_margin);
}

ModelScalars compute_model_scalars(const LtiSystem& sys, const IossCertificate& cert, int M) {
  ModelScalars s;
  const auto p_eig = jacobi_eigen(cert.P);
  s.lambda_min_P = p_eig.values.minCoeff();
  s.lambda_max_P = p_eig.values.maxCoeff();
  s.lambda_max_Q = max_eigenvalue(cert.Q);
  s.norm_C = spectral_norm(sys.C);
  const Dims dims = Dims::of(sys);
  for (int h = 0; h <= M; ++h) {
    s.bar_H = std::max(s.bar_H, max_eigenvalue(compute_weight(h, cert)));
    // Structure only: window data does not enter the reduced Hessian.
    const std::vector<VectorXd> u(static_cast<size_t>(h), VectorXd::Zero(dims.nu));
    const std::vector<VectorXd> y(static_cast<size_t>(h), VectorXd::Zero(dims.ny));
    const MheProblem problem = build_problem(sys, cert, VectorXd::Zero(dims.nx), u, y, M, h);
    const double rate = contraction_rate(problem).base;
    s.rate_by_horizon.push_back(rate);
    s.rate_max = std::max(s.rate_max, rate);
  }
  return s;
}

AnalysisParams derive_params(const ModelScalars& s, const IossCertificate& cert, int M,
                             double L_Phi, double L_pi, double gamma13_slope,
                             std::optional<double> phi_base) {
  AnalysisParams p;
  p.L_Phi = L_Phi;
  p.L_pi = L_pi;
  p.gamma13_slope = gamma13_slope;
  p.eta = cert.eta;
  p.M = M;
  p.phi_base = phi_base.value_or(s.rate_max);
  p.norm_C = s.norm_C;
  p.bar_H = s.bar_H;
  p.lambda_H_P = s.bar_H / s.lambda_min_P;
  p.lambda_P_P = s.lambda_max_P / s.lambda_min_P;
  p.lambda_Q_P = s.lambda_max_Q / s.lambda_min_P;
  return p;
}

nlohmann::json to_json(const AnalysisParams& p) {
  return {{"L_Phi", p.L_Phi},   {"L_pi", p.L_pi},       {"gamma13_slope", p.gamma13_slope},
          {"eta", p.eta},       {"M", p.M},             {"phi_base", p.phi_base},
          {"norm_C", p.norm_C}, {"bar_H", p.bar_H},     {"lambda_H_P", p.lambda_H_P},
          {"lambda_P_P", p.lambda_P_P}, {"lambda_Q_P", p.lambda_Q_P}};
}

nlohmann::json to_json(const GainLedger& l) {
  nlohmann::json conditions = nlohmann::json::array();
  for (size_t i = 0; i < 3; ++i)
    conditions.push_back({{"product", l.verdict.products[i]},
                          {"margin", l.verdict.margins[i]},
                          {"pass", l.verdict.pass[i]}});
  return {{"K", l.K},
          {"phi", l.phi},
          {"rho", l.rho},
          {"params", to_json(l.params)},
          {"constants",
           {{"C1", l.constants.C1},
            {"C2", l.constants.C2},
            {"C3", l.constants.C3},
            {"C_e", l.constants.C_e},
            {"C_w", l.constants.C_w},
            {"C_eps", l.constants.C_eps}}},
          {"slopes",
           {{"gamma_2_1", l.slopes.g21},
            {"gamma_2_3", l.slopes.g23},
            {"gamma_2_w", l.slopes.g2w},
            {"gamma_2_sigma", l.slopes.g2s},
            {"gamma_3_1", l.slopes.g31},
            {"gamma_3_2", l.slopes.g32},
            {"gamma_3_w", l.slopes.g3w},
            {"gamma_3_sigma", l.slopes.g3s},
            {"beta_2_base", l.slopes.beta2_base},
            {"beta_3_coeff", l.slopes.beta3_coeff},
            {"beta_3_base", l.slopes.beta3_base}}},
          {"small_gain", {{"conditions", conditions}, {"pass", l.verdict.all}}}};
}

}  // namespace submhe
