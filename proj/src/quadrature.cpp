#include <array>
#include <cmath>
#include <limits>

#include "cascade/error.hpp"
#include "cascade/flatfn.hpp"
#include "certify.hpp"

namespace cascade {
namespace detail {
namespace {

// Gauss-Kronrod 7-15 on [-1, 1].
constexpr std::array<double, 8> kronrod_x = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                             0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                             0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                             0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kronrod_w = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                             0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                             0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                             0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> gauss_w = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                           0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  Complex kronrod;
  double error;
};

template <class F>
Panel gk15(const F& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const Complex fc = f(c);
  Complex k = fc * kronrod_w[7];
  Complex g = fc * gauss_w[3];
  for (int i = 0; i < 7; ++i) {
    const Complex s = f(c - h * kronrod_x[i]) + f(c + h * kronrod_x[i]);
    k += s * kronrod_w[i];
    if (i % 2 == 1) g += s * gauss_w[i / 2];
  }
  return {k * h, std::abs((k - g) * h)};
}

// Adaptive bisection with an error budget proportional to panel length.
template <class F>
Complex adapt(const F& f, double a, double b, double tol_density, int depth, int max_depth) {
  const Panel p = gk15(f, a, b);
  if (p.error <= tol_density * (b - a) || p.error < 1e-300) return p.kronrod;
  if (depth >= max_depth || b - a < 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, b))
    throw QuadratureNonConvergence("Gauss-Kronrod refinement exhausted on [" + std::to_string(a) + ", " +
                                   std::to_string(b) + "]");
  const double m = 0.5 * (a + b);
  return adapt(f, a, m, tol_density, depth + 1, max_depth) + adapt(f, m, b, tol_density, depth + 1, max_depth);
}

double term_start(const FlatTerm& term, double log_floor) {
  if (term.flat_rate.is_zero() && term.t_pow == 0) return log_envelope(term, 1.0) >= log_floor ? 0.0 : 1.0;
  const double k = term.flat_rate.to_double();
  double peak = 1.0;
  if (term.t_pow < 0) peak = std::min(1.0, k / -term.t_pow);
  if (log_envelope(term, peak) < log_floor) return 1.0;
  double lo = 0.0, hi = peak;
  for (int i = 0; i < 200 && hi - lo > 1e-17; ++i) {
    const double mid = 0.5 * (lo + hi);
    (log_envelope(term, mid) < log_floor ? lo : hi) = mid;
  }
  return lo;
}

constexpr int max_series_order = 16;

}  // namespace

double flat_start(const FlatFn& f, double log_floor) {
  double start = 1.0;
  for (const auto& t : f.terms()) start = std::min(start, term_start(t, log_floor));
  return start;
}

GroupPrimitive::GroupPrimitive(FlatFn group, std::int64_t theta, const QuadratureOptions& opts)
    : g_(std::move(group)), theta_(theta), opts_(opts) {
  start_ = flat_start(g_, opts_.log_floor);
  cache_.emplace(start_, Complex{});
  const double s0 = magnitude_sup_bound(g_, 0.0, 1.0);
  crude_ = s0;
  if (theta_ == 0 || g_.is_zero()) return;

  const double th = std::abs(static_cast<double>(theta_));
  FlatFn d1 = derivative(g_);
  const double s1 = magnitude_sup_bound(d1, 0.0, 1.0);
  crude_ = std::min(s0, (s0 + s1) / th);

  // Integration by parts needs every boundary term at 0 to vanish.
  if (!g_.is_flat()) return;
  const double tol = opts_.abs_tol * std::max(1.0, s0);
  std::vector<FlatFn> derivs{g_, std::move(d1)};
  double best = s1 / th;
  double prev = best;
  int order = 1;
  while (best > tol && order < max_series_order) {
    derivs.push_back(derivative(derivs.back()));
    const double r = magnitude_sup_bound(derivs.back(), 0.0, 1.0) / std::pow(th, order + 1);
    if (r >= prev) break;  // asymptotic series has started to diverge
    prev = r;
    ++order;
    best = r;
  }
  if (best > tol) return;
  derivs.resize(order + 1);
  derivs_ = std::move(derivs);
  remainder_ = best;
}

Complex GroupPrimitive::integrate(double a, double b) const {
  if (b <= a) return {};
  const auto f = [this](double s) { return eval(g_, s) * unit_phase(theta_, s); };
  const double tol = opts_.abs_tol * std::max(1.0, crude_);
  return adapt(f, a, b, tol, 0, opts_.max_depth);
}

Complex GroupPrimitive::at(double t) const {
  if (g_.is_zero() || t <= start_) return {};
  if (!derivs_.empty()) {
    const Complex i_theta(0.0, static_cast<double>(theta_));
    Complex denom = i_theta;
    Complex sum{};
    double sign = 1.0;
    for (std::size_t k = 0; k + 1 < derivs_.size(); ++k) {
      sum += sign * eval(derivs_[k], t) / denom;
      denom *= i_theta;
      sign = -sign;
    }
    return sum * unit_phase(theta_, t);
  }
  auto it = cache_.upper_bound(t);
  --it;  // cache always holds start_ <= t
  if (it->first == t) return it->second;
  const Complex v = it->second + integrate(it->first, t);
  cache_.emplace_hint(std::next(it), t, v);
  return v;
}

double GroupPrimitive::envelope(double t) const {
  if (derivs_.empty()) return std::abs(at(t));
  const double th = std::abs(static_cast<double>(theta_));
  double e = remainder_;
  double p = th;
  for (std::size_t k = 0; k + 1 < derivs_.size(); ++k) {
    e += std::abs(eval(derivs_[k], t)) / p;
    p *= th;
  }
  return e;
}

std::pair<Complex, double> GroupPrimitive::sample(double t) const {
  if (derivs_.empty()) {
    const Complex v = at(t);
    return {v, std::abs(v)};
  }
  if (g_.is_zero() || t <= start_) return {Complex{}, remainder_};
  const double th = static_cast<double>(theta_);
  const Complex i_theta(0.0, th);
  Complex denom = i_theta, sum{};
  double sign = 1.0, e = remainder_;
  for (std::size_t k = 0; k + 1 < derivs_.size(); ++k) {
    const Complex d = eval(derivs_[k], t);
    sum += sign * d / denom;
    e += std::abs(d) / std::abs(denom);
    denom *= i_theta;
    sign = -sign;
  }
  return {sum * unit_phase(theta_, t), e};
}

double GroupPrimitive::envelope_lipschitz(double a, double b) const {
  if (derivs_.empty()) return magnitude_sup_bound(g_, a, b);
  const double th = std::abs(static_cast<double>(theta_));
  double l = 0.0;
  double p = th;
  for (std::size_t k = 1; k < derivs_.size(); ++k) {
    l += magnitude_sup_bound(derivs_[k], a, b) / p;
    p *= th;
  }
  return l;
}

CMinus1Channel::CMinus1Channel(const FlatFn& f, const QuadratureOptions& opts) {
  for (auto& [theta, g] : f.phase_groups()) parts.emplace_back(std::move(g), theta, opts);
}

Complex CMinus1Channel::at(double t) const {
  Complex s{};
  for (const auto& p : parts) s += p.at(t);
  return s;
}

double CMinus1Channel::envelope(double t) const {
  if (parts.size() == 1 && !parts.front().uses_series()) return std::abs(parts.front().at(t)) + remainder;
  double e = remainder;
  for (const auto& p : parts) e += p.envelope(t);
  return e;
}

std::pair<double, double> CMinus1Channel::sample(double t) const {
  if (parts.size() == 1 && !parts.front().uses_series()) {
    const double v = std::abs(parts.front().at(t));
    return {v, v + remainder};
  }
  Complex s{};
  double e = remainder;
  for (const auto& p : parts) {
    const auto [v, pe] = p.sample(t);
    s += v;
    e += pe;
  }
  return {std::abs(s), e};
}

double CMinus1Channel::lipschitz(double a, double b) const {
  double l = 0.0;
  for (const auto& p : parts) l += p.envelope_lipschitz(a, b);
  return l;
}

double CMinus1Channel::value_lipschitz(double a, double b) const {
  double l = 0.0;
  for (const auto& p : parts) l += magnitude_sup_bound(p.integrand(), a, b);
  return l;
}

double CMinus1Channel::slack() const {
  double s = remainder;
  for (const auto& p : parts)
    if (p.uses_series()) s += p.remainder();
  return s;
}

}  // namespace detail

std::vector<Complex> antiderivative_values(const FlatFn& f, std::span<const double> ts,
                                           const QuadratureOptions& opts) {
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (!(ts[i] >= 0.0 && ts[i] <= 1.0)) throw ValidationError("antiderivative points must lie in [0,1]");
    if (i > 0 && ts[i] < ts[i - 1]) throw ValidationError("antiderivative points must be sorted");
  }
  detail::CMinus1Channel ch(f, opts);
  std::vector<Complex> out;
  out.reserve(ts.size());
  for (double t : ts) out.push_back(ch.at(t));
  return out;
}

}  // namespace cascade
