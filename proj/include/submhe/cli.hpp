#pragma once

#include <optional>
#include <ostream>
#include <string>

#include "submhe/analysis.hpp"
#include "submhe/config.hpp"
#include "submhe/controller.hpp"
#include "submhe/harness.hpp"

namespace submhe {

/// A loaded config turned into module inputs. Quantities the config leaves
/// out (P, gain, L_pi, gamma13, L_Phi) are computed here and flagged.
struct ResolvedModel {
  ConfigDocument doc;
  IossCertificate cert;
  bool certificate_searched = false;
  LmiReport lmi;
  FeedbackLaw law;
  double L_pi = 0.0;
  bool L_pi_estimated = false;
  double gamma13_slope = 0.0;
  bool gamma13_estimated = false;
  double L_Phi = 0.0;
  std::optional<Lemma1Probe> probe;
  ModelScalars scalars;
  AnalysisParams params;
};

ResolvedModel resolve_model(const ConfigDocument& doc);

/// Smallest K passing the small-gain conditions; throws ContractionViolated
/// or NotFoundBelowCap.
int auto_iterations(const ResolvedModel& model);

ScenarioConfig make_scenario(const ResolvedModel& model, int K);

/// Entry point behind the `submhe` executable. Exit codes: 0 ok, 1 domain
/// failure, 2 usage or config error. Errors are written to `err` as JSON.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace submhe
