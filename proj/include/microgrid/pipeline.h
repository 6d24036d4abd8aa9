#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "microgrid/artifacts.h"
#include "microgrid/config.h"
#include "microgrid/controllers.h"

namespace microgrid {

enum class Stage { kIdentify, kSynthesize, kVerify, kSimulate, kCompare };

const std::vector<Stage>& all_stages();
std::string stage_name(Stage stage);
/// Throws ConfigurationError for an unknown name.
Stage parse_stage(const std::string& name);

class StageError : public std::runtime_error {
 public:
  StageError(Stage stage, const std::string& what)
      : std::runtime_error(stage_name(stage) + ": " + what), stage_(stage) {}
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

/// Fixed artifact locations below the output directory.
struct ArtifactPaths {
  explicit ArtifactPaths(std::string dir) : root(std::move(dir)) {}
  std::string root;
  std::string model() const { return root + "/model.txt"; }
  std::string identification() const { return root + "/identification.txt"; }
  std::string gains() const { return root + "/gains.txt"; }
  std::string synthesis() const { return root + "/synthesis.txt"; }
  std::string verification() const { return root + "/verification.txt"; }
  std::string comparison() const { return root + "/comparison.txt"; }
  std::string trajectory(PolicyKind kind, std::uint64_t seed) const;
  std::string plots(PolicyKind kind, std::uint64_t seed) const;
};

std::vector<std::uint64_t> ensemble_seeds(const ScenarioConfig& config);
std::vector<PolicyKind> selected_policies(const ScenarioConfig& config);

/// Policy of the given kind from the config. Fuzzy policies take gains and
/// premise box from the gain file.
PricingPolicy make_policy(const ScenarioConfig& config, PolicyKind kind,
                          const GainFile* gains = nullptr);

struct PipelineResult {
  std::vector<std::string> artifacts;
};

/// Runs the requested stages in dependency order. Each stage reads its
/// inputs from files written by earlier stages, so stages can be rerun on
/// their own. A missing input raises DependencyError; any other failure is
/// reported as StageError.
PipelineResult run_pipeline(const ScenarioConfig& config, std::vector<Stage> stages,
                            std::ostream& log);

}  // namespace microgrid
