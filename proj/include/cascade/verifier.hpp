#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cascade/cascade.hpp"

namespace cascade {

enum class CutoffKind { sharp, fejer, smooth_bump, perturbed };

const char* to_string(CutoffKind k);
CutoffKind cutoff_kind_from_string(const std::string& s);

struct CutoffFamily {
  CutoffKind kind = CutoffKind::sharp;
  std::uint64_t seed = 0;  // perturbed family only
};

/// Symbol m_N restricted to its (finite) support.
using Multiplier = std::map<std::int64_t, Complex>;

/// sharp: 1 on |n| <= N. fejer: (1 - |n|/N)_+. smooth_bump: phi(n/N) with
/// phi(x) = exp(1 - 1/(1 - x^2/4)) on |x| < 2. perturbed: sharp * (1 + zeta)
/// with |zeta| <= perturbation_amplitude(N), deterministic in (seed, N, n).
Multiplier make_cutoff(const CutoffFamily& family, std::int64_t N);
double perturbation_amplitude(std::int64_t N);
double smooth_bump(double x);

/// Checks finite support, the uniform bound B and |m_N(n) - 1| <= a_N with
/// a_N -> 0 for every N in [1, n_max]; returns the first failure or "".
std::string audit_cutoff(const CutoffFamily& family, std::int64_t n_max, double bound = 2.0);

ModeFn apply_cutoff(const ModeFn& v, const Multiplier& m);

struct ConvergenceCell {
  std::string family;
  std::int64_t N = 0;
  int k = 0;
  double deviation = 0.0;
  double increment = 0.0;  // negative when x^(k+1) is not available
};

struct ConvergenceReport {
  std::string header;
  std::vector<ConvergenceCell> cells;
  std::map<std::string, double> fitted_C;  // per family: max increment * 2^k
  double deviation_tol = 1e-3;
  double spread_limit = 4.0;
  bool deviations_ok = false;
  bool increments_ok = false;
  std::string first_failure;

  double spread() const;
};

struct ConvergenceOptions {
  int max_k = 4;
  double deviation_tol = 1e-3;
  double spread_limit = 4.0;
  /// Throw AssertionFailure naming the offending cell instead of returning.
  bool strict = true;
  Resolution resolution;
  QuadratureOptions quadrature;
};

ConvergenceReport cutoff_convergence(const ConstructionState& state, const std::vector<CutoffFamily>& families,
                                     const std::vector<std::int64_t>& Ns, const NormSpace& space,
                                     const ConvergenceOptions& options = {});

Json to_json(const ConvergenceReport& r);
std::string to_csv(const ConvergenceReport& r);

/// |C^-1 norm of the designed triple contribution| versus |scalar| * ||f_n||,
/// for every designed pair of the stage; returns the largest mismatch.
double designed_contribution_mismatch(const Stage& stage, const Multiplier& m, const NormSpace& space,
                                      const NonlinearitySpec& spec);

struct OdeOptions {
  double dt = 1e-4;
  int sample_every = 50;
};

/// Classical RK4 for dy/dt = N(y) + g from y(0) = 0 on the modes of y and g.
/// Returns max |y_numeric - y| / (1 + |y|) over sampled times and modes.
double ode_crosscheck(const ModeFn& y, const ModeFn& g, const NonlinearitySpec& spec, const OdeOptions& opts = {});

/// Largest |theta| among the terms of y and g; RK4 at step dt resolves the
/// pair when this times dt is small.
std::int64_t max_oscillation(const ModeFn& y, const ModeFn& g);

/// max over modes and ts of |x(t) - int_0^t N(x) - int_0^t f|; with
/// include_forcing = false the last integral is left out.
double integral_equation_check(const ModeFn& x, const ModeFn& f, const NonlinearitySpec& spec,
                               const std::vector<double>& ts, bool include_forcing = true,
                               const QuadratureOptions& quad = {});

}  // namespace cascade
