#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cascade/rational.hpp"

namespace cascade {

using Complex = std::complex<double>;

/// One term c * t^p * exp(-k/t) * exp(i*theta*t).
struct FlatTerm {
  Complex coeff{};
  int t_pow = 0;
  Rational flat_rate{};
  std::int64_t osc = 0;

  friend bool operator==(const FlatTerm&, const FlatTerm&) = default;
};

/// Exact finite sum of FlatTerms on (0,1], kept in canonical form: sorted by
/// (flat_rate, t_pow, osc), like terms merged, zero coefficients removed.
/// The empty sum is the canonical zero.
class FlatFn {
 public:
  FlatFn() = default;
  /// Canonicalizes. Throws ValidationError if a term breaks the rate invariants.
  explicit FlatFn(std::vector<FlatTerm> terms);

  static FlatFn constant(Complex c);
  static FlatFn monomial(Complex c, int t_pow, Rational flat_rate, std::int64_t osc = 0);

  const std::vector<FlatTerm>& terms() const noexcept { return terms_; }
  bool is_zero() const noexcept { return terms_.empty(); }
  std::size_t size() const noexcept { return terms_.size(); }

  /// Smallest flat rate among the terms (zero for the empty sum).
  Rational min_rate() const;
  /// True when every term has a positive flat rate.
  bool is_flat() const;
  /// Largest |osc| among the terms.
  std::int64_t max_abs_osc() const;
  /// Largest |coeff|.
  double max_abs_coeff() const;

  /// Splits into phase groups: f = sum_theta G_theta(t) e^{i theta t}, each
  /// G_theta free of oscillation. Groups are ordered by theta.
  std::vector<std::pair<std::int64_t, FlatFn>> phase_groups() const;

  Complex operator()(double t) const;

  FlatFn operator-() const;
  friend FlatFn operator+(const FlatFn& a, const FlatFn& b);
  friend FlatFn operator-(const FlatFn& a, const FlatFn& b);
  friend FlatFn operator*(const FlatFn& a, const FlatFn& b);
  friend FlatFn operator*(Complex c, const FlatFn& f);
  FlatFn& operator+=(const FlatFn& other) { return *this = *this + other; }
  FlatFn& operator-=(const FlatFn& other) { return *this = *this - other; }

  /// Term-list equality (exact coefficients).
  friend bool operator==(const FlatFn&, const FlatFn&) = default;

 private:
  struct Canonical {};
  FlatFn(std::vector<FlatTerm> terms, Canonical);

  std::vector<FlatTerm> terms_;
};

enum class ArithKind { add, mul };

Complex eval(const FlatFn& f, double t);
FlatFn arith(const FlatFn& f, const FlatFn& g, ArithKind kind);
FlatFn conj(const FlatFn& f);
FlatFn scale(const FlatFn& f, Complex c);
/// Multiplies by e^{i*dtheta*t}.
FlatFn shift_phase(const FlatFn& f, std::int64_t dtheta);
FlatFn derivative(const FlatFn& f);

/// Exact quotient f / m. Throws DivisionByZeroMonomial when m.coeff == 0 and
/// FlatnessViolation when a resulting rate would be negative (or zero with a
/// negative power of t).
FlatFn div_by_monomial(const FlatFn& f, const FlatTerm& m);

/// Largest coefficient modulus of f - g; the "exact equality" measure used by
/// the tests (tolerance 1e-10).
double coeff_distance(const FlatFn& f, const FlatFn& g);
bool approx_equal(const FlatFn& f, const FlatFn& g, double tol = 1e-10);

/// Builds e^{i*theta*t} accurately for any |theta| < 2^53 by reducing
/// theta*t modulo 2*pi in double-double arithmetic.
Complex unit_phase(std::int64_t theta, double t);

/// log(|c| t^p e^{-k/t}); -inf at t = 0 for flat or negative-power terms.
double log_envelope(const FlatTerm& term, double t);
/// |c| t^p e^{-k/t}.
double envelope(const FlatTerm& term, double t);
/// sup over [a, b] of t^q e^{-k/t} (unimodal in t, so this is exact).
double sup_power_exp(int q, double k, double a, double b);

/// Sample grid for sup norms: `samples` uniform points on [0,1] plus the
/// geometric points 2^-j, j = 1..geometric_levels; adaptive bisection runs
/// until the certified bound is within `refine_rel` of the estimate.
struct Resolution {
  int samples = 512;
  int geometric_levels = 20;
  double refine_rel = 1e-3;
  int max_evaluations = 200000;
};

std::vector<double> sample_grid(const Resolution& res);

/// estimate = max over sampled t; the true value lies in [estimate, bound].
struct CertifiedValue {
  double estimate = 0.0;
  double bound = 0.0;
  double argmax = 0.0;
};

CertifiedValue sup_norm(const FlatFn& f, const Resolution& res = {});

/// Integral from 0 to t of f, for each t in the sorted list `ts`.
struct QuadratureOptions {
  double abs_tol = 1e-12;
  int max_depth = 60;
  double log_floor = -40.0;
};

std::vector<Complex> antiderivative_values(const FlatFn& f, std::span<const double> ts,
                                           const QuadratureOptions& opts = {});

std::string serialize(const FlatFn& f);
FlatFn parse_flatfn(const std::string& text);

}  // namespace cascade
