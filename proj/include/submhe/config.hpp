#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "submhe/model.hpp"

namespace submhe {

inline constexpr int kSchemaVersion = 1;

struct CertificateBlock {
  std::optional<MatrixXd> P;  // absent: "search"
  MatrixXd Q;
  MatrixXd R;
  double eta = 0.0;
  double tol = 1e-8;
  int search_budget = 5000;
};

struct ControllerBlock {
  std::optional<MatrixXd> gain;  // absent: "lqr" with identity weights
  std::optional<double> L_pi;
  std::optional<double> gamma13_slope;
};

struct MheBlock {
  int M = 1;
  std::optional<int> K;  // absent: "auto"
  std::optional<double> phi_base;
};

struct ScenarioBlock {
  VectorXd x0;
  VectorXd prior;
  std::optional<VectorXd> z0;  // defaults to the prior
  int steps = 40;
  std::uint64_t seed = 1;
  Box w1_box;
  Box w2_box;
  bool oracle = true;
  double oracle_tol = 1e-10;
};

struct AnalysisBlock {
  int K_max = 100000;
  std::string L_Phi_source = "config";  // "config" or "probe"
  double L_Phi = 0.0;
  int probe_trials = 500;
  std::uint64_t probe_seed = 1;
};

struct OutputBlock {
  std::string dir = "out";
  std::string csv = "trajectory.csv";
  std::string summary = "summary.json";
  std::string ledger = "ledger.json";
};

struct ConfigDocument {
  LtiSystem system;
  CertificateBlock certificate;
  ControllerBlock controller;
  MheBlock mhe;
  ScenarioBlock scenario;
  AnalysisBlock analysis;
  OutputBlock output;
};

/// Throws ParseError (malformed JSON, wrong types, unknown keys) or
/// ValidationError (missing fields, bad dimensions or ranges). Both carry the
/// field path.
ConfigDocument parse_config(const nlohmann::json& j);
ConfigDocument parse_config_text(const std::string& text);
ConfigDocument load_config(const std::string& path);

/// Canonical form with every default filled in.
nlohmann::json to_json(const ConfigDocument& doc);

/// FNV-1a 64 over the canonical serialization, as 16 hex digits.
std::string config_hash(const ConfigDocument& doc);

}  // namespace submhe
