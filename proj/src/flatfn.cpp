#include "cascade/flatfn.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <tuple>

#include "cascade/error.hpp"
#include "certify.hpp"

namespace cascade {
namespace {

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r = 0;
  if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("oscillation rate overflow");
  return r;
}

int checked_add(int a, int b) {
  int r = 0;
  if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("t exponent overflow");
  return r;
}

bool key_less(const FlatTerm& a, const FlatTerm& b) {
  if (a.flat_rate != b.flat_rate) return a.flat_rate < b.flat_rate;
  if (a.t_pow != b.t_pow) return a.t_pow < b.t_pow;
  return a.osc < b.osc;
}

bool same_key(const FlatTerm& a, const FlatTerm& b) {
  return a.flat_rate == b.flat_rate && a.t_pow == b.t_pow && a.osc == b.osc;
}

void validate(const FlatTerm& t) {
  if (t.flat_rate.is_negative())
    throw ValidationError("flat rate must be nonnegative, got " + t.flat_rate.to_string());
  if (t.flat_rate.is_zero() && t.t_pow < 0)
    throw ValidationError("a term without flat factor needs a nonnegative power of t");
  if (!std::isfinite(t.coeff.real()) || !std::isfinite(t.coeff.imag()))
    throw ValidationError("non-finite coefficient");
}

// Sort, merge like terms and drop zeros. A merged coefficient that is only
// rounding residue of its parts counts as zero.
std::vector<FlatTerm> canonicalize(std::vector<FlatTerm> terms) {
  std::sort(terms.begin(), terms.end(), key_less);
  std::vector<FlatTerm> out;
  out.reserve(terms.size());
  std::size_t i = 0;
  while (i < terms.size()) {
    FlatTerm acc = terms[i];
    double mass = std::abs(acc.coeff);
    std::size_t j = i + 1;
    for (; j < terms.size() && same_key(terms[j], acc); ++j) {
      acc.coeff += terms[j].coeff;
      mass += std::abs(terms[j].coeff);
    }
    const double mag = std::abs(acc.coeff);
    const bool merged = j > i + 1;
    if (mag != 0.0 && !(merged && mag <= 8.0 * DBL_EPSILON * mass)) out.push_back(acc);
    i = j;
  }
  return out;
}

}  // namespace

FlatFn::FlatFn(std::vector<FlatTerm> terms) {
  for (const auto& t : terms) validate(t);
  terms_ = canonicalize(std::move(terms));
}

FlatFn::FlatFn(std::vector<FlatTerm> terms, Canonical) : terms_(canonicalize(std::move(terms))) {}

FlatFn FlatFn::constant(Complex c) { return FlatFn({FlatTerm{c, 0, Rational(0), 0}}); }

FlatFn FlatFn::monomial(Complex c, int t_pow, Rational flat_rate, std::int64_t osc) {
  return FlatFn({FlatTerm{c, t_pow, flat_rate, osc}});
}

Rational FlatFn::min_rate() const {
  if (terms_.empty()) return Rational(0);
  return terms_.front().flat_rate;  // sorted by rate first
}

bool FlatFn::is_flat() const {
  return std::all_of(terms_.begin(), terms_.end(),
                     [](const FlatTerm& t) { return t.flat_rate.is_positive(); });
}

std::int64_t FlatFn::max_abs_osc() const {
  std::int64_t m = 0;
  for (const auto& t : terms_) m = std::max(m, t.osc < 0 ? -t.osc : t.osc);
  return m;
}

double FlatFn::max_abs_coeff() const {
  double m = 0.0;
  for (const auto& t : terms_) m = std::max(m, std::abs(t.coeff));
  return m;
}

std::vector<std::pair<std::int64_t, FlatFn>> FlatFn::phase_groups() const {
  std::map<std::int64_t, std::vector<FlatTerm>> by_osc;
  for (const auto& t : terms_) {
    FlatTerm g = t;
    g.osc = 0;
    by_osc[t.osc].push_back(g);
  }
  std::vector<std::pair<std::int64_t, FlatFn>> out;
  out.reserve(by_osc.size());
  for (auto& [osc, ts] : by_osc) out.emplace_back(osc, FlatFn(std::move(ts), Canonical{}));
  return out;
}

Complex FlatFn::operator()(double t) const { return eval(*this, t); }

FlatFn FlatFn::operator-() const { return scale(*this, Complex(-1.0, 0.0)); }

FlatFn operator+(const FlatFn& a, const FlatFn& b) {
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  std::vector<FlatTerm> all;
  all.reserve(a.size() + b.size());
  all.insert(all.end(), a.terms_.begin(), a.terms_.end());
  all.insert(all.end(), b.terms_.begin(), b.terms_.end());
  return FlatFn(std::move(all), FlatFn::Canonical{});
}

FlatFn operator-(const FlatFn& a, const FlatFn& b) { return a + (-b); }

FlatFn operator*(const FlatFn& a, const FlatFn& b) {
  std::vector<FlatTerm> prod;
  prod.reserve(a.size() * b.size());
  for (const auto& x : a.terms_) {
    for (const auto& y : b.terms_) {
      prod.push_back(FlatTerm{x.coeff * y.coeff, checked_add(x.t_pow, y.t_pow),
                              x.flat_rate + y.flat_rate, checked_add(x.osc, y.osc)});
    }
  }
  return FlatFn(std::move(prod), FlatFn::Canonical{});
}

FlatFn operator*(Complex c, const FlatFn& f) { return scale(f, c); }

Complex eval(const FlatFn& f, double t) {
  Complex sum{};
  if (t <= 0.0) {
    for (const auto& term : f.terms())
      if (term.flat_rate.is_zero() && term.t_pow == 0) sum += term.coeff;
    return sum;
  }
  const double log_t = std::log(t);
  for (const auto& term : f.terms()) {
    double mag = 1.0;
    if (!(term.t_pow == 0 && term.flat_rate.is_zero())) {
      const double ex = term.t_pow * log_t - term.flat_rate.to_double() / t;
      if (ex < -745.0) continue;
      mag = std::exp(ex);
    }
    sum += term.coeff * mag * (term.osc == 0 ? Complex(1.0, 0.0) : unit_phase(term.osc, t));
  }
  return sum;
}

FlatFn arith(const FlatFn& f, const FlatFn& g, ArithKind kind) {
  return kind == ArithKind::add ? f + g : f * g;
}

FlatFn conj(const FlatFn& f) {
  std::vector<FlatTerm> out = f.terms();
  for (auto& t : out) {
    t.coeff = std::conj(t.coeff);
    t.osc = -t.osc;
  }
  return FlatFn(std::move(out));
}

FlatFn scale(const FlatFn& f, Complex c) {
  if (c == Complex{}) return {};
  std::vector<FlatTerm> out = f.terms();
  for (auto& t : out) t.coeff *= c;
  return FlatFn(std::move(out));
}

FlatFn shift_phase(const FlatFn& f, std::int64_t dtheta) {
  if (dtheta == 0) return f;
  std::vector<FlatTerm> out = f.terms();
  for (auto& t : out) t.osc = checked_add(t.osc, dtheta);
  return FlatFn(std::move(out));
}

FlatFn derivative(const FlatFn& f) {
  // d/dt[c t^p e^{-k/t} e^{i theta t}] = c (p t^{p-1} + k t^{p-2} + i theta t^p) e^{-k/t} e^{i theta t}
  std::vector<FlatTerm> out;
  out.reserve(3 * f.size());
  for (const auto& t : f.terms()) {
    if (t.t_pow != 0) out.push_back({t.coeff * static_cast<double>(t.t_pow), t.t_pow - 1, t.flat_rate, t.osc});
    if (!t.flat_rate.is_zero())
      out.push_back({t.coeff * t.flat_rate.to_double(), t.t_pow - 2, t.flat_rate, t.osc});
    if (t.osc != 0)
      out.push_back({t.coeff * Complex(0.0, static_cast<double>(t.osc)), t.t_pow, t.flat_rate, t.osc});
  }
  return FlatFn(std::move(out));
}

FlatFn div_by_monomial(const FlatFn& f, const FlatTerm& m) {
  if (m.coeff == Complex{}) throw DivisionByZeroMonomial("division by a monomial with zero coefficient");
  std::vector<FlatTerm> out;
  out.reserve(f.size());
  for (const auto& t : f.terms()) {
    FlatTerm q{t.coeff / m.coeff, checked_add(t.t_pow, -m.t_pow), t.flat_rate - m.flat_rate,
               checked_add(t.osc, -m.osc)};
    if (q.flat_rate.is_negative())
      throw FlatnessViolation("quotient rate " + q.flat_rate.to_string() + " is negative");
    if (q.flat_rate.is_zero() && q.t_pow < 0)
      throw FlatnessViolation("quotient has no flat factor and a negative power of t");
    out.push_back(q);
  }
  return FlatFn(std::move(out));
}

double coeff_distance(const FlatFn& f, const FlatFn& g) { return (f - g).max_abs_coeff(); }

bool approx_equal(const FlatFn& f, const FlatFn& g, double tol) {
  // Compare term by term so that rounding residue dropped by canonicalization
  // never hides a real mismatch.
  const auto& a = f.terms();
  const auto& b = g.terms();
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && key_less(a[i], b[j]))) {
      if (std::abs(a[i++].coeff) > tol) return false;
    } else if (i == a.size() || key_less(b[j], a[i])) {
      if (std::abs(b[j++].coeff) > tol) return false;
    } else {
      if (std::abs(a[i++].coeff - b[j++].coeff) > tol) return false;
    }
  }
  return true;
}

Complex unit_phase(std::int64_t theta, double t) {
  if (theta == 0) return {1.0, 0.0};
  constexpr std::int64_t exact_limit = std::int64_t{1} << 53;
  if (theta >= exact_limit || theta <= -exact_limit)
    throw std::overflow_error("oscillation rate exceeds 2^53");
  const double th = static_cast<double>(theta);
  // theta * t as an unevaluated sum hi + lo (exact).
  const double hi = th * t;
  const double lo = std::fma(th, t, -hi);
  constexpr double two_pi_hi = 6.283185307179586232;      // nearest double to 2*pi
  constexpr double two_pi_lo = 2.4492935982947064e-16;    // 2*pi - two_pi_hi
  const double k = std::nearbyint(hi / two_pi_hi);
  double r = std::fma(-k, two_pi_hi, hi);
  r = std::fma(-k, two_pi_lo, r);
  r += lo;
  return {std::cos(r), std::sin(r)};
}

double log_envelope(const FlatTerm& term, double t) {
  const double lc = std::log(std::abs(term.coeff));
  if (term.t_pow == 0 && term.flat_rate.is_zero()) return lc;
  if (t <= 0.0) return -std::numeric_limits<double>::infinity();
  return lc + term.t_pow * std::log(t) - term.flat_rate.to_double() / t;
}

double envelope(const FlatTerm& term, double t) {
  const double le = log_envelope(term, t);
  return le < -745.0 ? 0.0 : std::exp(le);
}

double sup_power_exp(int q, double k, double a, double b) {
  auto phi = [q, k](double t) -> double {
    if (t <= 0.0) {
      if (k > 0.0) return 0.0;
      if (q == 0) return 1.0;
      return q > 0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    const double ex = q * std::log(t) - k / t;
    return ex < -745.0 ? 0.0 : std::exp(ex);
  };
  if (b < a) std::swap(a, b);
  if (k <= 0.0) return q >= 0 ? phi(b) : phi(a);
  if (q >= 0) return phi(b);
  const double peak = -k / q;
  return phi(std::clamp(peak, a, b));
}

std::vector<double> sample_grid(const Resolution& res) {
  const int n = std::max(res.samples, 2);
  std::vector<double> grid;
  grid.reserve(n + res.geometric_levels + 1);
  for (int i = 0; i < n; ++i) grid.push_back(static_cast<double>(i) / (n - 1));
  for (int j = 1; j <= res.geometric_levels; ++j) grid.push_back(std::ldexp(1.0, -j));
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

namespace detail {

double derivative_sup_bound(const FlatFn& group, double a, double b) {
  // Bound on sup |G'| over [a,b] for an oscillation-free group.
  double total = 0.0;
  for (const auto& t : group.terms()) {
    const double c = std::abs(t.coeff);
    const double k = t.flat_rate.to_double();
    if (t.t_pow != 0) total += c * std::abs(t.t_pow) * sup_power_exp(t.t_pow - 1, k, a, b);
    if (k > 0.0) total += c * k * sup_power_exp(t.t_pow - 2, k, a, b);
  }
  return total;
}

double magnitude_sup_bound(const FlatFn& f, double a, double b) {
  double total = 0.0;
  for (const auto& t : f.terms())
    total += std::abs(t.coeff) * sup_power_exp(t.t_pow, t.flat_rate.to_double(), a, b);
  return total;
}

C0Channel::C0Channel(const FlatFn& f) : fn(f) {
  for (auto& [osc, g] : f.phase_groups()) {
    groups.push_back(std::move(g));
    thetas.push_back(osc);
  }
}

double C0Channel::value(double t) const { return std::abs(eval(fn, t)); }

double C0Channel::envelope(double t) const {
  if (groups.size() <= 1) return value(t);
  double e = 0.0;
  for (const auto& g : groups) e += std::abs(eval(g, t));
  return e;
}

double C0Channel::lipschitz(double a, double b) const {
  double l = 0.0;
  for (const auto& g : groups) l += derivative_sup_bound(g, a, b);
  return l;
}

double C0Channel::value_lipschitz(double a, double b) const {
  double l = 0.0;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    l += derivative_sup_bound(groups[i], a, b);
    if (thetas[i] != 0) l += std::abs(static_cast<double>(thetas[i])) * magnitude_sup_bound(groups[i], a, b);
  }
  return l;
}

}  // namespace detail

CertifiedValue sup_norm(const FlatFn& f, const Resolution& res) {
  detail::C0Channel ch(f);
  return detail::certify_sup(
      sample_grid(res), [&](double t) { return std::pair{ch.value(t), ch.envelope(t)}; },
      [&](double a, double b) { return ch.lipschitz(a, b); },
      [&](double a, double b) { return ch.value_lipschitz(a, b); }, 0.0, res);
}

}  // namespace cascade
