#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "thermo/audit.hpp"
#include "thermo/stepper.hpp"

namespace thermo {

/// Parse or validation failure; what() starts with "source:line:" when a line is known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class InitialKind { uniform, pwave, rotor_blob, damaged_patch };
enum class ForcingKind { none, kolmogorov, uniform };
enum class Diagnostic { none, stefan, dispersion, rotor };

struct InitialSpec {
  InitialKind kind = InitialKind::uniform;
  double theta = 0.5;
  double alpha = 1.0;
  double chi = 0.0;
  double amplitude = 0.0;
  std::vector<int> wavelengths;  // in cells
  double blob_strain = 0.0;
  double blob_width = 0.1;
  std::array<double, 2> blob_center{0.0, 0.0};
  double patch_alpha = 1.0;
  double patch_width = 0.1;
  double theta_noise = 0.0;
  std::uint64_t seed = 1;
};

struct ForcingSpec {
  ForcingKind kind = ForcingKind::none;
  double amplitude = 0.0;
  int mode = 1;
  std::array<double, 2> direction{1.0, 0.0};
};

/// Heated face whose flux reproduces the two-phase similarity solution with this wall temperature.
struct SimilarityFace {
  bool enabled = false;
  int face = 0;
  double theta_hot = 0.0;
};

struct RunConfig {
  std::string name;
  Problem problem;
  int steps = 10;
  double tau = 0.01;
  int output_every = 0;  // VTK cadence in steps; 0 writes only the initial and final fields
  bool strict_audit = false;
  Diagnostic diagnostic = Diagnostic::none;
  InitialSpec initial;
  ForcingSpec forcing;
  SimilarityFace similarity;

  /// True when no heat enters, no force acts and no motion is prescribed.
  bool insulated_unforced() const;
};

/// Parses config text; `source` names the input in error messages.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

/// Names of the shipped presets.
std::vector<std::string> list_scenarios();
/// Text of a shipped preset; throws ConfigError for unknown names.
std::string scenario_text(const std::string& name);
RunConfig load_scenario(const std::string& name);

/// Similarity-solution parameters implied by the material; throws ConfigError unless heat capacity
/// and conductivity are constant within each phase.
StefanParams similarity_params(const RunConfig& cfg);

/// Initial state for the config, ghosts unsynced.
State initial_state(const RunConfig& cfg);

}  // namespace thermo
