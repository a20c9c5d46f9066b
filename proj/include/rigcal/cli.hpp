#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rigcal/optimizer.hpp"
#include "rigcal/residuals.hpp"
#include "rigcal/simulator.hpp"

namespace rigcal::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDegenerate = 3;

/// Everything one command needs. Defaults are the documented CLI defaults;
/// the config file overrides them and flags override the config file.
struct RunConfig {
  sim::SimConfig sim;
  ObjectiveConfig objective;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
};

/// Defaults used when no config file is given. Identical to the library
/// defaults except that initial extrinsics are perturbed by 2 deg / 5 cm.
RunConfig default_run_config();

/// Applies a config document on top of `base`. Accepted top-level sections:
/// scene, layout, noise, objective, optimizer. Throws kMalformedJson naming
/// the offending field.
RunConfig apply_config_json(const RunConfig& base, const nlohmann::json& doc);

nlohmann::json objective_to_json(const ObjectiveConfig& cfg);
nlohmann::json optimizer_to_json(const OptimizerConfig& cfg);

/// Variant label implied by the constraint toggles: full, no_rc or no_mc.
std::string variant_label(const ObjectiveConfig& cfg);

/// Runs one invocation (argv[0] is the program name) and returns the exit code.
/// Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rigcal::cli
