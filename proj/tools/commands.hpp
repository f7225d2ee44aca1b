#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cascade/cascade.hpp"
#include "cascade/verifier.hpp"

namespace cascade::cli {

enum ExitCode : int {
  exit_ok = 0,
  exit_internal = 1,
  exit_bound_unreachable = 2,
  exit_invalid = 3,
  exit_verify_failed = 4,
  exit_sweep_failed = 5,
};

struct CutoffSettings {
  std::vector<CutoffFamily> families{{CutoffKind::sharp, 0}, {CutoffKind::fejer, 0}, {CutoffKind::smooth_bump, 0},
                                     {CutoffKind::perturbed, 0}};
  std::vector<std::int64_t> Ns{32, 64, 128, 256, 512, 1024, 2048, 4096};
  int max_k = 4;
  double deviation_tol = 1e-3;
  double spread_limit = 4.0;
  /// When false the four-family suite is reported but does not decide the exit code.
  bool gate = false;
  std::int64_t audit_n_max = 64;
};

struct OdeSettings {
  OdeOptions options;
  double tolerance = 1e-6;
  /// Stages whose largest |theta| * dt exceeds this are skipped as unresolvable.
  double max_phase_step = 0.35;
  std::size_t max_modes = 64;
};

struct VerifySettings {
  std::uint64_t seed = 0;
  CutoffSettings cutoff;
  OdeSettings ode;
  std::vector<double> integral_ts{0.25, 0.5, 0.75, 1.0};
  double integral_tol = 1e-8;
  double coeff_tol = 1e-10;
  double designed_tol = 1e-8;
};

struct SweepSettings {
  enum class Parameter { M, K };
  Parameter parameter = Parameter::M;
  std::vector<std::int64_t> values;
};

/// Everything a command may need; unknown fields are rejected on parse.
struct RunConfig {
  StepConfig step;
  int stages = 4;
  VerifySettings verify;
  std::optional<SweepSettings> sweep;
};

RunConfig run_config_from_json(const Json& j);
Json to_json(const VerifySettings& v);
VerifySettings verify_settings_from_json(const Json& j, const std::string& path);

struct CheckResult {
  std::string name;
  bool passed = true;
  bool gating = true;
  std::string detail;
};

struct VerifyOutcome {
  std::vector<CheckResult> checks;
  Json report;

  const CheckResult* first_failure() const;
};

/// Runs the bundled checks on a parsed manifest.
VerifyOutcome verify_manifest(const Json& manifest);

struct SweepCell {
  std::int64_t value = 0;
  double norm = 0.0;
};

struct SweepFit {
  double slope = 0.0;
  double intercept = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<double> ratios;
};

std::vector<SweepCell> run_sweep(const RunConfig& config);
SweepFit fit_loglog(const std::vector<SweepCell>& cells, double confidence = 0.95);

std::string cascade_csv(const ConstructionState& state, int t_samples = 101);
std::string stage_norms_csv(const ConstructionState& state);

int cmd_construct(const std::filesystem::path& config, const std::filesystem::path& out, std::ostream& log);
int cmd_verify(const std::filesystem::path& manifest, const std::optional<std::filesystem::path>& report,
               std::ostream& out, std::ostream& log);
int cmd_sweep(const std::filesystem::path& config, const std::filesystem::path& out, std::ostream& out_stream,
              std::ostream& log);
int cmd_export(const std::filesystem::path& manifest, const std::string& kind, const std::filesystem::path& out,
               std::ostream& log);

}  // namespace cascade::cli
