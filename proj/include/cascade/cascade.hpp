#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cascade/spectral.hpp"

namespace cascade {

struct StepConfig {
  std::int64_t M = 16;
  double epsilon = 0.1;
  /// h is measured in C0 of this space, g in C^-1 of it.
  NormSpace space = NormSpace::l2s(-1.0);
  NonlinearitySpec spec;
  int K = 1;
  /// Each new pair starts its search at growth * (largest |m| so far); with
  /// growth 0 every search restarts at 4M and the checker alone keeps the
  /// frequencies apart.
  double growth = 8.0;
  /// Phase groups of f whose certified C^-1 contribution stays below
  /// prune_budget * epsilon in total are not targeted and pass into g.
  double prune_budget = 0.0;
  int max_escalations = 20;
  /// Measure the individual remainder components after each attempt; each
  /// must then also stay within epsilon.
  bool component_norms = true;
  Resolution resolution;
  QuadratureOptions quadrature;

  int seed_rate_divisor() const { return is_quadratic(spec.variant) ? 2 : 3; }
  void validate() const;
};

/// One designed interaction: pair (m, m_prime) feeds target n. For the l^p
/// step `split` is the index i of the K-fold splitting.
struct DesignedPair {
  std::int64_t n = 0;
  std::int64_t m = 0;
  std::int64_t m_prime = 0;
  int split = 0;

  friend bool operator==(const DesignedPair&, const DesignedPair&) = default;
};

struct SDagger {
  std::optional<std::int64_t> m0;  // l^p step only
  std::vector<DesignedPair> pairs;

  std::vector<std::int64_t> elements() const;
};

struct NamedNorm {
  std::string name;
  double estimate = 0.0;
  double bound = 0.0;
};

struct StepReport {
  std::vector<std::int64_t> S;           // targeted modes
  std::vector<std::int64_t> untargeted;  // modes of f left (wholly or partly) in g
  SDagger s_dagger;
  std::int64_t M_used = 0;
  int K_used = 0;
  double epsilon = 0.0;
  std::vector<NamedNorm> norms;
  bool constraints_verified = false;
  bool bounds_met = false;
  int retries = 0;

  const NamedNorm* find(const std::string& name) const;
};

struct StepResult {
  ModeFn y;
  ModeFn g;
  ModeFn h;
  StepReport report;
};

struct Stage {
  ModeFn x;
  ModeFn f;
  ModeFn h;
  double delta = 0.0;  // certified bound on the C0 norm of h
  StepReport report;
};

struct ConstructionState {
  StepConfig config;
  std::vector<Stage> stages;
  std::vector<double> target_deltas;
};

/// x_0(t) = e * e^{-1/t}.
ModeFn seed_x1();

/// Exhaustive check that every interaction not in the design lands at |n| >= M.
/// Returns a description of the first violation, or nothing.
std::optional<std::string> check_constraints(const SDagger& sd, const std::vector<std::int64_t>& x_support,
                                             std::int64_t M, Variant variant);

/// Greedy frequency selection. Throws InfeasibleSupport on empty S and
/// ValidationError when M does not exceed every |n| in S and x_support.
SDagger choose_sdagger(const std::vector<std::int64_t>& S, const std::vector<std::int64_t>& x_support,
                       std::int64_t M, Variant variant, double growth = 8.0);
/// l^p selection: m0 first, then K pairs per target with m0 + m - m' = n.
SDagger choose_sdagger_lp(const std::vector<std::int64_t>& S, const std::vector<std::int64_t>& x_support,
                          std::int64_t M, int K, double growth = 8.0);

/// Amplitudes realising the designed interactions exactly.
ModeFn solve_h(const ModeFn& f, const SDagger& sd, const NonlinearitySpec& spec, const StepConfig& config);

/// Targets, S-dagger, h, y = x + h and g = residual(y) at a fixed M (and K),
/// with no norms measured. `rest` receives the untargeted part of f.
StepResult design_increment(const ModeFn& x, const ModeFn& f, const StepConfig& config, ModeFn* rest = nullptr);

/// One attempt at a fixed M (and K) without escalation.
StepResult step_attempt(const ModeFn& x, const ModeFn& f, const StepConfig& config);

StepResult step(const ModeFn& x, const StepConfig& config);
StepResult step_lp(const ModeFn& x, const StepConfig& config);
StepResult step_quadratic(const ModeFn& x, const StepConfig& config);

/// Stage 1 is the seed; stage n+1 = step(stage n) with epsilon = 2^{-n-1}.
ConstructionState iterate(const StepConfig& config, int n_stages);

/// Splits f into the part that must be cancelled and the part left in g.
std::pair<ModeFn, ModeFn> select_targets(const ModeFn& f, const StepConfig& config);

Json to_json(const StepConfig& c);
StepConfig step_config_from_json(const Json& j, const std::string& path = "");
Json to_json(const StepReport& r);
StepReport step_report_from_json(const Json& j, const std::string& path = "");
Json to_json(const ConstructionState& s);
ConstructionState construction_from_json(const Json& j);

}  // namespace cascade
