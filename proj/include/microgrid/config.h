#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "microgrid/controllers.h"
#include "microgrid/fuzzy.h"
#include "microgrid/market.h"
#include "microgrid/simulation.h"

namespace microgrid {

struct IdentifyConfig {
  int samples = 1500;
  std::uint64_t seed = 0;
  double ridge = 1e-8;
};

struct SynthesizeConfig {
  double gamma_sq = 2.0;
  bool minimize = false;
  double gamma_lo = 0.1;
  double gamma_hi = 10.0;
  double bisect_tol = 1e-3;
  double margin = 1e-6;
  double tol = 1e-8;
  double q_upper = 1e4;
  int max_newton_steps = 2000;
  int verify_samples = 10000;
  std::uint64_t verify_seed = 0;
};

enum class ControllerSelection { kAce, kFuzzy, kBoth };

struct ControllerConfig {
  ControllerSelection kind = ControllerSelection::kBoth;
  double storage_target = 0.0;
  std::optional<double> clamp_lo;
  std::optional<double> clamp_hi;
};

struct EnsembleConfig {
  int count = 1;  // disturbance seeds seed, seed + 1, ...
};

struct MetricsConfig {
  double settle_band = 0.1;
  TimeWindow window;
};

/// Everything one run of the pipeline needs. Numeric defaults reproduce the
/// reference market and the undisturbed first example.
struct ScenarioConfig {
  MarketParams market;
  FuzzyBox box;
  IdentifyConfig identify;
  SynthesizeConfig synthesize;
  ControllerConfig controller;
  DisturbanceSpec disturbance;
  EnsembleConfig ensemble;
  SimConfig sim;
  MetricsConfig metrics;
  std::string output_dir = "out";
};

/// Parses the sectioned key = value format. Unknown or duplicate keys, bad
/// values and missing seeds raise ParseError naming the key and line.
ScenarioConfig parse_config(const std::string& path);
ScenarioConfig parse_config_text(const std::string& text);

/// Inverse of parse_config_text: every field, full precision.
std::string emit_config(const ScenarioConfig& config);

}  // namespace microgrid
