#include "cascade/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>
#include <tuple>
#include <unordered_set>

#include "cascade/error.hpp"
#include "certify.hpp"

namespace cascade {
namespace {

constexpr std::int64_t max_candidates = 2'000'000;

std::int64_t narrow(__int128 v, const char* what) {
  if (v > INT64_MAX || v < INT64_MIN) throw std::overflow_error(what);
  return static_cast<std::int64_t>(v);
}

std::int64_t iabs(std::int64_t v) { return v < 0 ? -v : v; }

// Partner frequency tied to target n by the designed interaction.
std::int64_t partner(Variant v, std::int64_t m, std::int64_t n) {
  switch (v) {
    case Variant::cubic_modified: return narrow(2 * static_cast<__int128>(m) - n, "frequency overflow");
    case Variant::quad_square: return narrow(static_cast<__int128>(n) - m, "frequency overflow");
    case Variant::quad_conj_square: return narrow(-static_cast<__int128>(n) - m, "frequency overflow");
    case Variant::quad_modulus_centered: return narrow(static_cast<__int128>(m) - n, "frequency overflow");
  }
  return 0;
}

// Everything the exhaustive checker needs about a (partial) design.
class Checker {
 public:
  Checker(const std::vector<std::int64_t>& x_support, std::int64_t M, Variant variant)
      : x_(x_support.begin(), x_support.end()), M_(M), variant_(variant) {
    pool_.assign(x_.begin(), x_.end());
  }

  void add_m0(std::int64_t m0) {
    m0_ = m0;
    insert(m0);
  }

  void add_pair(const DesignedPair& p) {
    if (m0_) {
      designed3_.insert({*m0_, p.m_prime, p.m});
      designed3_.insert({p.m, p.m_prime, *m0_});
    } else if (variant_ == Variant::cubic_modified) {
      designed3_.insert({p.m, p.m_prime, p.m});
    } else {
      designed2_.insert({p.m, p.m_prime});
      // u^2 and conj(u)^2 are symmetric in the pair; for |u|^2 the swapped
      // product lands at -n whatever the frequencies, so it cannot be
      // separated by the choice of S-dagger and is exempt here.
      designed2_.insert({p.m_prime, p.m});
    }
    insert(p.m);
    insert(p.m_prime);
  }

  bool used(std::int64_t v) const { return members_.count(v) != 0; }

  // First interaction involving one of `fresh` that lands below M and is not
  // designed. The fresh elements must already be in the pool.
  std::optional<std::string> violation(const std::vector<std::int64_t>& fresh) const {
    const bool cubic = variant_ == Variant::cubic_modified || m0_.has_value();
    for (std::int64_t f : fresh) {
      if (cubic) {
        for (std::int64_t u : pool_) {
          for (std::int64_t v : pool_) {
            if (auto e = cubic_check(f, u, v)) return e;
            if (auto e = cubic_check(u, f, v)) return e;
            if (auto e = cubic_check(u, v, f)) return e;
          }
        }
      } else {
        for (std::int64_t u : pool_) {
          if (auto e = quad_check(f, u)) return e;
          if (auto e = quad_check(u, f)) return e;
        }
      }
    }
    return std::nullopt;
  }

 private:
  void insert(std::int64_t v) {
    if (members_.insert(v).second && !x_.count(v)) pool_.push_back(v);
  }

  std::optional<std::string> cubic_check(std::int64_t a, std::int64_t b, std::int64_t c) const {
    if (b == a || b == c) return std::nullopt;
    const __int128 out = static_cast<__int128>(a) - b + c;
    if (out >= M_ || out <= -M_) return std::nullopt;
    if (designed3_.count({a, b, c})) return std::nullopt;
    return "(" + std::to_string(a) + "," + std::to_string(b) + "," + std::to_string(c) + ") -> " +
           std::to_string(static_cast<std::int64_t>(out));
  }

  std::optional<std::string> quad_check(std::int64_t a, std::int64_t b) const {
    __int128 out = 0;
    switch (variant_) {
      case Variant::quad_square: out = static_cast<__int128>(a) + b; break;
      case Variant::quad_conj_square: out = -(static_cast<__int128>(a) + b); break;
      case Variant::quad_modulus_centered:
        if (a == b) return std::nullopt;
        out = static_cast<__int128>(a) - b;
        break;
      case Variant::cubic_modified: return std::nullopt;
    }
    if (out >= M_ || out <= -M_) return std::nullopt;
    if (designed2_.count({a, b})) return std::nullopt;
    return "(" + std::to_string(a) + "," + std::to_string(b) + ") -> " +
           std::to_string(static_cast<std::int64_t>(out));
  }

  std::set<std::int64_t> x_;
  std::int64_t M_;
  Variant variant_;
  std::optional<std::int64_t> m0_;
  std::vector<std::int64_t> pool_;
  std::unordered_set<std::int64_t> members_;
  std::set<std::tuple<std::int64_t, std::int64_t, std::int64_t>> designed3_;
  std::set<std::pair<std::int64_t, std::int64_t>> designed2_;
};

void check_inputs(const std::vector<std::int64_t>& S, const std::vector<std::int64_t>& x_support, std::int64_t M) {
  if (S.empty()) throw InfeasibleSupport("empty target set; nothing to correct");
  if (M < 1) throw ValidationError("M must be positive");
  for (auto v : S)
    if (iabs(v) >= M) throw ValidationError("M must exceed every target mode, got " + std::to_string(v));
  for (auto v : x_support)
    if (iabs(v) >= M) throw ValidationError("M must exceed the support of x, got " + std::to_string(v));
}

std::int64_t search_start(std::int64_t M, std::int64_t largest, double growth) {
  const double first = 4.0 * static_cast<double>(M);
  if (largest == 0 || growth <= 0.0) return static_cast<std::int64_t>(first);
  const double s = std::ceil(growth * static_cast<double>(largest));
  if (s > 4.0e18) throw std::overflow_error("frequency search overflow");
  return std::max(static_cast<std::int64_t>(s), static_cast<std::int64_t>(first));
}

std::vector<std::int64_t> unique_sorted(std::vector<std::int64_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

// Greedy search for one pair feeding n.
DesignedPair find_pair(Checker& chk, std::int64_t n, std::int64_t M, std::int64_t start,
                       const std::function<std::int64_t(std::int64_t)>& make_partner, int split) {
  for (std::int64_t m = start, tries = 0; tries < max_candidates; ++m, ++tries) {
    const std::int64_t mp = make_partner(m);
    if (mp == m || chk.used(m) || chk.used(mp) || iabs(m) < M || iabs(mp) < M) continue;
    Checker trial = chk;
    const DesignedPair p{n, m, mp, split};
    trial.add_pair(p);
    if (!trial.violation({m, mp})) {
      chk = std::move(trial);
      return p;
    }
  }
  throw InfeasibleSupport("no admissible frequency pair for target " + std::to_string(n));
}

std::int64_t largest_abs(const SDagger& sd) {
  std::int64_t r = sd.m0 ? iabs(*sd.m0) : 0;
  for (const auto& p : sd.pairs) r = std::max({r, iabs(p.m), iabs(p.m_prime)});
  return r;
}

// Designed multiplicity times i*omega: how often the designed product occurs
// in the nonlinearity sum.
Complex designed_weight(Variant v, double omega) {
  const Complex iw(0.0, omega);
  switch (v) {
    case Variant::quad_square:
    case Variant::quad_conj_square: return 2.0 * iw;
    case Variant::cubic_modified:
    case Variant::quad_modulus_centered: return iw;
  }
  return iw;
}

// Phase of the designed interaction at n.
std::int64_t designed_phase(Variant v, const DesignedPair& p) {
  const auto sq = [](std::int64_t a) { return static_cast<__int128>(a) * a; };
  switch (v) {
    case Variant::cubic_modified: return sigma(p.m, p.m_prime, p.m, p.n);
    case Variant::quad_square: return narrow(sq(p.n) - sq(p.m) - sq(p.m_prime), "phase overflow");
    case Variant::quad_conj_square: return narrow(sq(p.n) + sq(p.m) + sq(p.m_prime), "phase overflow");
    case Variant::quad_modulus_centered: return narrow(sq(p.n) - sq(p.m) + sq(p.m_prime), "phase overflow");
  }
  return 0;
}

// Chooses h_m = alpha t^q e^{-kappa/t} so that sup|h_m| = sup|h_m'| where
// h_m' is obtained from D / (alpha^r u^r). Among nearby q the one giving the
// smallest common sup wins; ties go to the q nearest p/3 of the dominant term.
struct Balanced {
  double alpha = 0.0;
  int q = 0;
};

Balanced balance(const FlatFn& D, Rational kappa, int r) {
  int pmin = D.terms().front().t_pow, pmax = pmin;
  double dominant = -1.0;
  int pdom = 0;
  for (const auto& t : D.terms()) {
    pmin = std::min(pmin, t.t_pow);
    pmax = std::max(pmax, t.t_pow);
    const double w = std::abs(t.coeff) * sup_power_exp(t.t_pow, t.flat_rate.to_double(), 0.0, 1.0);
    if (w > dominant) {
      dominant = w;
      pdom = t.t_pow;
    }
  }
  const double k = kappa.to_double();
  const double centre = static_cast<double>(pdom) / (r + 1);
  Balanced best;
  double best_sup = std::numeric_limits<double>::infinity();
  for (int q = pmin / (r + 1) - 2; q <= pmax / (r + 1) + 2; ++q) {
    const FlatFn R = div_by_monomial(D, FlatTerm{1.0, r * q, kappa * Rational(r), 0});
    const double sr = detail::magnitude_sup_bound(R, 0.0, 1.0);
    const double su = sup_power_exp(q, k, 0.0, 1.0);
    if (!(sr > 0.0) || !(su > 0.0) || !std::isfinite(sr)) continue;
    const double common = std::exp((std::log(sr) + r * std::log(su)) / (r + 1));
    const bool tie = std::isfinite(best_sup) && std::abs(common - best_sup) <= 1e-12 * best_sup;
    if ((!tie && common < best_sup) || (tie && std::abs(q - centre) < std::abs(best.q - centre))) {
      best_sup = std::min(best_sup, common);
      best.q = q;
      best.alpha = std::exp((std::log(sr) - std::log(su)) / (r + 1));
    }
  }
  if (!(best.alpha > 0.0)) throw FlatnessViolation("no admissible amplitude split");
  return best;
}

const NamedNorm& put(StepReport& r, std::string name, CertifiedValue v) {
  r.norms.push_back({std::move(name), v.estimate, v.bound});
  return r.norms.back();
}

}  // namespace

void StepConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ValidationError("epsilon must be positive");
  if (M < 1) throw ValidationError("M must be at least 1");
  if (K < 1) throw ValidationError("K must be at least 1");
  if (growth < 0.0 || !std::isfinite(growth)) throw ValidationError("growth must be nonnegative");
  if (prune_budget < 0.0 || prune_budget >= 1.0) throw ValidationError("prune_budget must lie in [0,1)");
  if (max_escalations < 0) throw ValidationError("max_escalations must be nonnegative");
  if (resolution.samples < 2) throw ValidationError("resolution needs at least 2 samples");
  space.validate();
  spec.validate();
}

std::vector<std::int64_t> SDagger::elements() const {
  std::vector<std::int64_t> out;
  if (m0) out.push_back(*m0);
  for (const auto& p : pairs) {
    out.push_back(p.m);
    out.push_back(p.m_prime);
  }
  return out;
}

const NamedNorm* StepReport::find(const std::string& name) const {
  for (const auto& n : norms)
    if (n.name == name) return &n;
  return nullptr;
}

ModeFn seed_x1() {
  ModeFn x("seed");
  x.set(0, FlatFn::monomial(std::numbers::e, 0, Rational(1)));
  return x;
}

std::optional<std::string> check_constraints(const SDagger& sd, const std::vector<std::int64_t>& x_support,
                                             std::int64_t M, Variant variant) {
  Checker chk(x_support, M, sd.m0 ? Variant::cubic_modified : variant);
  if (sd.m0) chk.add_m0(*sd.m0);
  std::set<std::int64_t> xs(x_support.begin(), x_support.end());
  std::set<std::int64_t> seen;
  for (auto e : sd.elements()) {
    if (xs.count(e)) return "S-dagger element " + std::to_string(e) + " lies in the support of x";
    if (iabs(e) < M) return "S-dagger element " + std::to_string(e) + " is below M";
    if (!seen.insert(e).second) return "S-dagger element " + std::to_string(e) + " repeated";
  }
  for (const auto& p : sd.pairs) {
    const std::int64_t expect =
        sd.m0 ? narrow(static_cast<__int128>(*sd.m0) + p.m - p.n, "frequency overflow") : partner(variant, p.m, p.n);
    if (p.m_prime != expect) return "pair for target " + std::to_string(p.n) + " breaks its frequency relation";
    chk.add_pair(p);
  }
  return chk.violation(sd.elements());
}

SDagger choose_sdagger(const std::vector<std::int64_t>& S_in, const std::vector<std::int64_t>& x_support,
                       std::int64_t M, Variant variant, double growth) {
  check_inputs(S_in, x_support, M);
  const auto S = unique_sorted(S_in);
  Checker chk(x_support, M, variant);
  SDagger sd;
  for (std::int64_t n : S) {
    if (variant == Variant::quad_modulus_centered && n == 0)
      throw ValidationError("|u|^2 - mean cannot feed mode 0");
    std::int64_t start = search_start(M, largest_abs(sd), growth);
    // Quadratic pairs sit near +-m, so any earlier pair closer than 2M would
    // combine with this one below M; skip that whole stretch.
    if (is_quadratic(variant) && !sd.pairs.empty())
      start = std::max(start, narrow(static_cast<__int128>(largest_abs(sd)) + 2 * static_cast<__int128>(M), "frequency overflow"));
    sd.pairs.push_back(find_pair(chk, n, M, start, [&](std::int64_t m) { return partner(variant, m, n); }, 0));
  }
  return sd;
}

SDagger choose_sdagger_lp(const std::vector<std::int64_t>& S_in, const std::vector<std::int64_t>& x_support,
                          std::int64_t M, int K, double growth) {
  check_inputs(S_in, x_support, M);
  if (K < 1) throw ValidationError("K must be at least 1");
  const auto S = unique_sorted(S_in);
  Checker chk(x_support, M, Variant::cubic_modified);
  SDagger sd;
  for (std::int64_t m0 = 4 * M, tries = 0;; ++m0, ++tries) {
    if (tries > max_candidates) throw InfeasibleSupport("no admissible m0");
    if (chk.used(m0)) continue;
    Checker trial = chk;
    trial.add_m0(m0);
    if (!trial.violation({m0})) {
      chk = std::move(trial);
      sd.m0 = m0;
      break;
    }
  }
  const std::int64_t m0 = *sd.m0;
  for (std::int64_t n : S) {
    for (int i = 1; i <= K; ++i) {
      const std::int64_t start = search_start(M, largest_abs(sd), growth);
      sd.pairs.push_back(find_pair(
          chk, n, M, start, [&](std::int64_t m) { return narrow(static_cast<__int128>(m0) + m - n, "overflow"); },
          i));
    }
  }
  return sd;
}

ModeFn solve_h(const ModeFn& f, const SDagger& sd, const NonlinearitySpec& spec, const StepConfig& config) {
  spec.validate();
  ModeFn h("increment");
  const Variant v = spec.variant;
  const bool lp = sd.m0.has_value();
  if (lp && is_quadratic(v)) throw VariantMismatch("the l^p splitting is defined for the cubic variant");

  Rational eta;
  Complex m0_amp;
  if (lp) {
    bool any = false;
    for (const auto& p : sd.pairs) {
      const FlatFn& T = f.at(p.n);
      if (T.is_zero()) continue;
      eta = any ? std::min(eta, T.min_rate()) : T.min_rate();
      any = true;
    }
    if (!any) return h;
    eta = eta * Rational(1, 4);
    m0_amp = 0.5 * config.epsilon;
    h.set(*sd.m0, FlatFn::monomial(m0_amp, 0, eta));
  }

  for (const auto& p : sd.pairs) {
    const FlatFn& T = f.at(p.n);
    if (T.is_zero()) continue;
    if (!T.is_flat()) throw FlatnessViolation("target at mode " + std::to_string(p.n) + " is not flat");
    const Rational kmin = T.min_rate();
    Rational kappa;
    int r = 1;
    FlatFn D;
    std::int64_t phase = 0;
    bool conj_partner = true;
    if (lp) {
      kappa = kmin * Rational(3, 8);
      const double K = static_cast<double>(config.K);
      D = div_by_monomial(T, FlatTerm{K * 2.0 * Complex(0.0, spec.omega) * m0_amp, 0, eta, 0});
      phase = sigma(*sd.m0, p.m_prime, p.m, p.n);
    } else {
      kappa = kmin * Rational(1, is_quadratic(v) ? 2 : 3);
      r = v == Variant::cubic_modified ? 2 : 1;
      D = scale(T, 1.0 / designed_weight(v, spec.omega));
      phase = designed_phase(v, p);
      conj_partner = v != Variant::quad_square;
    }
    const Balanced b = balance(D, kappa, r);
    h.set(p.m, FlatFn::monomial(b.alpha, b.q, kappa));
    FlatFn partner_fn = shift_phase(
        div_by_monomial(D, FlatTerm{std::pow(b.alpha, r), r * b.q, kappa * Rational(r), 0}), -phase);
    h.set(p.m_prime, conj_partner ? conj(partner_fn) : std::move(partner_fn));
  }
  return h;
}

std::pair<ModeFn, ModeFn> select_targets(const ModeFn& f, const StepConfig& config) {
  ModeFn targets("targets"), rest("untargeted");
  struct Item {
    double weighted;
    std::int64_t n;
    std::int64_t theta;
    double bound;
  };
  std::vector<Item> items;
  std::map<std::int64_t, std::vector<std::pair<std::int64_t, FlatFn>>> groups;
  for (const auto& [n, fn] : f.entries()) {
    if (config.spec.variant == Variant::quad_modulus_centered && n == 0) {
      rest.set(n, fn);
      continue;
    }
    auto& gs = groups[n];
    gs = fn.phase_groups();
    const double dn = static_cast<double>(n);
    const double w = config.space.kind == NormSpace::Kind::l2s ? std::exp(0.5 * config.space.param * std::log1p(dn * dn))
                                                               : 1.0;
    for (const auto& [theta, g] : gs) {
      detail::GroupPrimitive prim(g, theta, config.quadrature);
      items.push_back({prim.crude_bound() * w, n, theta, prim.crude_bound()});
    }
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return std::tie(a.weighted, a.n, a.theta) < std::tie(b.weighted, b.n, b.theta);
  });

  // Left-out bounds add per mode, then combine in the spatial norm.
  std::map<std::int64_t, double> dropped;
  std::set<std::pair<std::int64_t, std::int64_t>> skip;
  const double budget = config.prune_budget * config.epsilon;
  for (const auto& it : items) {
    if (budget <= 0.0) break;
    auto trial = dropped;
    trial[it.n] += it.bound;
    std::vector<std::int64_t> modes;
    std::vector<double> mags;
    for (const auto& [n, b] : trial) {
      modes.push_back(n);
      mags.push_back(b);
    }
    if (config.space.combine(modes, mags) > budget) break;
    dropped = std::move(trial);
    skip.insert({it.n, it.theta});
  }

  for (const auto& [n, gs] : groups) {
    FlatFn keep, drop;
    for (const auto& [theta, g] : gs) {
      FlatFn piece = shift_phase(g, theta);
      (skip.count({n, theta}) ? drop : keep) += piece;
    }
    targets.set(n, keep);
    if (!drop.is_zero()) rest.add(n, drop);
  }
  return {targets, rest};
}

StepResult design_increment(const ModeFn& x, const ModeFn& f, const StepConfig& config, ModeFn* rest_out) {
  config.validate();
  StepResult out;
  StepReport& rep = out.report;
  rep.M_used = config.M;
  rep.K_used = config.K;
  rep.epsilon = config.epsilon;
  const bool lp = config.space.kind == NormSpace::Kind::lp && !is_quadratic(config.spec.variant) && config.space.param > 2.0;
  auto [targets, rest] = select_targets(f, config);
  rep.S = targets.support();
  rep.untargeted = rest.support();
  const auto x_support = x.support();

  if (targets.empty()) {
    out.y = x;
    out.g = f;
    rep.constraints_verified = true;
  } else {
    rep.s_dagger = lp ? choose_sdagger_lp(rep.S, x_support, config.M, config.K, config.growth)
                      : choose_sdagger(rep.S, x_support, config.M, config.spec.variant, config.growth);
    rep.constraints_verified = !check_constraints(rep.s_dagger, x_support, config.M, config.spec.variant);
    out.h = solve_h(targets, rep.s_dagger, config.spec, config);
    out.y = x + out.h;
    out.g = residual(out.y, config.spec);
  }
  out.y.set_note(x.note());
  out.g.set_note("forcing");
  if (rest_out) *rest_out = std::move(rest);
  return out;
}

StepResult step_attempt(const ModeFn& x, const ModeFn& f, const StepConfig& config) {
  ModeFn rest;
  StepResult out = design_increment(x, f, config, &rest);
  StepReport& rep = out.report;
  const bool lp = rep.s_dagger.m0.has_value();
  const NormSpace c0 = config.space.with_time(NormSpace::Time::C0);
  const NormSpace cm1 = config.space.with_time(NormSpace::Time::Cminus1);

  const auto& hn = put(rep, "h", norm(out.h, c0, config.resolution, config.quadrature));
  const double h_bound = hn.bound;
  const auto& gn = put(rep, "g", norm(out.g, cm1, config.resolution, config.quadrature));
  const double g_bound = gn.bound;
  if (lp) {
    ModeFn rest_h = out.h;
    rest_h.set(*rep.s_dagger.m0, FlatFn{});
    put(rep, "h_without_m0", norm(rest_h, c0, config.resolution, config.quadrature));
  }
  if (config.component_norms && !out.h.empty()) {
    put(rep, "dh_dt", norm(derivative(out.h), cm1, config.resolution, config.quadrature));
    if (is_quadratic(config.spec.variant)) {
      const ModeFn qh = q_nonlinearity(out.h, config.spec);
      put(rep, "q_h_minus_f", norm(qh - (f - rest), c0, config.resolution, config.quadrature));
      put(rep, "cross",
          norm(q_nonlinearity(out.y, config.spec) - q_nonlinearity(x, config.spec) - qh, c0, config.resolution,
               config.quadrature));
    } else {
      const ModeFn mh = n_main(out.h, config.spec);
      put(rep, "n_diag_h", norm(n_diag(out.h, config.spec), c0, config.resolution, config.quadrature));
      put(rep, "n_main_h_minus_f", norm(mh - (f - rest), c0, config.resolution, config.quadrature));
      put(rep, "cross",
          norm(n_main(out.y, config.spec) - n_main(x, config.spec) - mh, c0, config.resolution, config.quadrature));
    }
    put(rep, "untargeted", norm(rest, cm1, config.resolution, config.quadrature));
  }
  rep.bounds_met = rep.constraints_verified && h_bound <= config.epsilon && g_bound <= config.epsilon;
  for (const auto& n : rep.norms)
    if (n.bound > config.epsilon && n.name != "h_without_m0") rep.bounds_met = false;
  return out;
}

namespace {

StepResult run_step(const ModeFn& x, const StepConfig& config, bool escalate_k) {
  config.validate();
  const ModeFn f = residual(x, config.spec);
  if (f.empty()) {
    StepResult r;
    r.y = x;
    r.report.M_used = config.M;
    r.report.K_used = config.K;
    r.report.epsilon = config.epsilon;
    r.report.constraints_verified = true;
    r.report.bounds_met = true;
    r.report.norms = {{"h", 0.0, 0.0}, {"g", 0.0, 0.0}};
    return r;
  }
  StepConfig cfg = config;
  cfg.M = std::max({config.M, x.radius() + 1, f.radius() + 1});
  std::string last;
  for (int r = 0; r <= config.max_escalations; ++r) {
    StepResult res;
    try {
      res = step_attempt(x, f, cfg);
    } catch (const std::overflow_error& e) {
      throw BoundUnreachable(std::string("frequencies left the exact range after ") + std::to_string(r) +
                             " escalations: " + e.what());
    }
    res.report.retries = r;
    if (res.report.bounds_met) return res;
    const auto* h = res.report.find("h");
    const auto* g = res.report.find("g");
    last = "M=" + std::to_string(cfg.M) + " K=" + std::to_string(cfg.K) + " |h|<=" + std::to_string(h->bound) +
           " |g|<=" + std::to_string(g->bound);
    if (escalate_k) {
      if (cfg.K > INT32_MAX / 2) break;
      cfg.K *= 2;
    } else {
      if (cfg.M > INT64_MAX / 4) break;
      cfg.M *= 2;
    }
  }
  throw BoundUnreachable("bounds not met within " + std::to_string(config.max_escalations) +
                         " escalations (epsilon=" + std::to_string(config.epsilon) + ", last " + last + ")");
}

}  // namespace

StepResult step(const ModeFn& x, const StepConfig& config) {
  if (config.space.kind == NormSpace::Kind::lp && !is_quadratic(config.spec.variant) && config.space.param > 2.0)
    return step_lp(x, config);
  if (is_quadratic(config.spec.variant)) return step_quadratic(x, config);
  return run_step(x, config, false);
}

StepResult step_lp(const ModeFn& x, const StepConfig& config) {
  if (config.space.kind != NormSpace::Kind::lp || !(config.space.param > 2.0))
    throw ValidationError("the l^p step needs an lp(p) space with p > 2");
  if (is_quadratic(config.spec.variant)) throw VariantMismatch("the l^p step is defined for the cubic variant");
  return run_step(x, config, true);
}

StepResult step_quadratic(const ModeFn& x, const StepConfig& config) {
  if (!is_quadratic(config.spec.variant)) throw VariantMismatch("quadratic step requested for the cubic variant");
  return run_step(x, config, false);
}

ConstructionState iterate(const StepConfig& config, int n_stages) {
  if (n_stages < 1) throw ValidationError("n_stages must be at least 1");
  config.validate();
  ConstructionState st;
  st.config = config;
  ModeFn x = seed_x1();
  ModeFn f = residual(x, config.spec);
  std::int64_t last_M = 0;
  for (int n = 1; n < n_stages; ++n) {
    StepConfig cfg = config;
    cfg.epsilon = std::ldexp(1.0, -n - 1);
    cfg.M = std::max({config.M, last_M + 1, x.radius() + 1});
    StepResult r = step(x, cfg);
    last_M = r.report.M_used;
    Stage s;
    s.x = x;
    s.f = f;
    s.h = r.h;
    s.delta = r.report.find("h")->bound;
    s.report = std::move(r.report);
    st.target_deltas.push_back(cfg.epsilon);
    if (s.delta > cfg.epsilon) throw AssertionFailure("stage " + std::to_string(n) + " increment exceeds its budget");
    for (const auto& [m, fn] : r.y.entries())
      if (!fn.is_flat()) throw AssertionFailure("stage " + std::to_string(n + 1) + " is not flat at t=0");
    st.stages.push_back(std::move(s));
    x = std::move(r.y);
    x.set_note("stage " + std::to_string(n + 1));
    f = std::move(r.g);
  }
  Stage last;
  last.x = std::move(x);
  last.f = std::move(f);
  st.stages.push_back(std::move(last));
  return st;
}

// ---------------------------------------------------------------- JSON

namespace {

void reject_unknown(const Json& j, std::initializer_list<const char*> allowed, const std::string& path) {
  if (!j.is_object()) throw ParseError("expected an object", 0, path);
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ParseError("unknown field '" + key + "'", 0, path + "/" + key);
  }
}

Json space_json(const NormSpace& s) {
  Json j;
  j["kind"] = s.kind == NormSpace::Kind::l2s ? "l2s" : "lp";
  j["param"] = s.param;
  j["time"] = s.time == NormSpace::Time::C0 ? "C0" : "Cminus1";
  return j;
}

NormSpace space_from(const Json& j, const std::string& path) {
  using namespace json_field;
  reject_unknown(j, {"kind", "param", "time"}, path);
  NormSpace s;
  const std::string& kind = as_string(require(j, "kind", path), path + "/kind");
  if (kind == "l2s")
    s.kind = NormSpace::Kind::l2s;
  else if (kind == "lp")
    s.kind = NormSpace::Kind::lp;
  else
    throw ParseError("unknown norm kind '" + kind + "'", 0, path + "/kind");
  s.param = as_number(require(j, "param", path), path + "/param");
  if (j.contains("time")) {
    const std::string& t = as_string(j["time"], path + "/time");
    if (t == "C0")
      s.time = NormSpace::Time::C0;
    else if (t == "Cminus1")
      s.time = NormSpace::Time::Cminus1;
    else
      throw ParseError("unknown time mode '" + t + "'", 0, path + "/time");
  }
  return s;
}

}  // namespace

Json to_json(const StepConfig& c) {
  Json j;
  j["M"] = c.M;
  j["epsilon"] = c.epsilon;
  j["space"] = space_json(c.space);
  j["spec"] = {{"omega", c.spec.omega}, {"variant", to_string(c.spec.variant)}};
  j["K"] = c.K;
  j["growth"] = c.growth;
  j["prune_budget"] = c.prune_budget;
  j["max_escalations"] = c.max_escalations;
  j["component_norms"] = c.component_norms;
  j["resolution"] = {{"samples", c.resolution.samples},
                     {"geometric_levels", c.resolution.geometric_levels},
                     {"refine_rel", c.resolution.refine_rel},
                     {"max_evaluations", c.resolution.max_evaluations}};
  j["quadrature"] = {{"abs_tol", c.quadrature.abs_tol},
                     {"max_depth", c.quadrature.max_depth},
                     {"log_floor", c.quadrature.log_floor}};
  return j;
}

StepConfig step_config_from_json(const Json& j, const std::string& path) {
  using namespace json_field;
  reject_unknown(j, {"M", "epsilon", "space", "spec", "K", "growth", "prune_budget", "max_escalations",
                     "component_norms", "resolution", "quadrature"},
                 path);
  StepConfig c;
  auto int_field = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = static_cast<std::remove_reference_t<decltype(dst)>>(as_int(j[key], path + "/" + key));
  };
  auto num_field = [&](const Json& obj, const char* key, double& dst, const std::string& p) {
    if (obj.contains(key)) dst = as_number(obj[key], p + "/" + key);
  };
  int_field("M", c.M);
  num_field(j, "epsilon", c.epsilon, path);
  if (j.contains("space")) c.space = space_from(j["space"], path + "/space");
  if (j.contains("spec")) {
    const Json& s = j["spec"];
    const std::string sp = path + "/spec";
    reject_unknown(s, {"omega", "variant"}, sp);
    num_field(s, "omega", c.spec.omega, sp);
    if (s.contains("variant")) {
      try {
        c.spec.variant = variant_from_string(as_string(s["variant"], sp + "/variant"));
      } catch (const ValidationError& e) {
        throw ParseError(e.what(), 0, sp + "/variant");
      }
    }
  }
  int_field("K", c.K);
  num_field(j, "growth", c.growth, path);
  num_field(j, "prune_budget", c.prune_budget, path);
  int_field("max_escalations", c.max_escalations);
  if (j.contains("component_norms")) {
    if (!j["component_norms"].is_boolean()) throw ParseError("expected a boolean", 0, path + "/component_norms");
    c.component_norms = j["component_norms"].get<bool>();
  }
  if (j.contains("resolution")) {
    const Json& r = j["resolution"];
    const std::string rp = path + "/resolution";
    reject_unknown(r, {"samples", "geometric_levels", "refine_rel", "max_evaluations"}, rp);
    if (r.contains("samples")) c.resolution.samples = static_cast<int>(as_int(r["samples"], rp + "/samples"));
    if (r.contains("geometric_levels"))
      c.resolution.geometric_levels = static_cast<int>(as_int(r["geometric_levels"], rp + "/geometric_levels"));
    num_field(r, "refine_rel", c.resolution.refine_rel, rp);
    if (r.contains("max_evaluations"))
      c.resolution.max_evaluations = static_cast<int>(as_int(r["max_evaluations"], rp + "/max_evaluations"));
  }
  if (j.contains("quadrature")) {
    const Json& q = j["quadrature"];
    const std::string qp = path + "/quadrature";
    reject_unknown(q, {"abs_tol", "max_depth", "log_floor"}, qp);
    num_field(q, "abs_tol", c.quadrature.abs_tol, qp);
    if (q.contains("max_depth")) c.quadrature.max_depth = static_cast<int>(as_int(q["max_depth"], qp + "/max_depth"));
    num_field(q, "log_floor", c.quadrature.log_floor, qp);
  }
  try {
    c.validate();
  } catch (const ValidationError& e) {
    throw ParseError(e.what(), 0, path);
  }
  return c;
}

Json to_json(const StepReport& r) {
  Json j;
  j["S"] = r.S;
  j["untargeted"] = r.untargeted;
  Json sd;
  if (r.s_dagger.m0)
    sd["m0"] = *r.s_dagger.m0;
  else
    sd["m0"] = nullptr;
  Json pairs = Json::array();
  for (const auto& p : r.s_dagger.pairs) pairs.push_back({{"n", p.n}, {"m", p.m}, {"m_prime", p.m_prime}, {"split", p.split}});
  sd["pairs"] = std::move(pairs);
  j["S_dagger"] = std::move(sd);
  j["M"] = r.M_used;
  j["K"] = r.K_used;
  j["epsilon"] = r.epsilon;
  Json norms = Json::array();
  for (const auto& n : r.norms) norms.push_back({{"name", n.name}, {"estimate", n.estimate}, {"bound", n.bound}});
  j["norms"] = std::move(norms);
  j["constraints_verified"] = r.constraints_verified;
  j["bounds_met"] = r.bounds_met;
  j["retries"] = r.retries;
  return j;
}

StepReport step_report_from_json(const Json& j, const std::string& path) {
  using namespace json_field;
  StepReport r;
  auto ints = [&](const char* key) {
    std::vector<std::int64_t> v;
    const Json& a = require(j, key, path);
    if (!a.is_array()) throw ParseError("expected an array", 0, path + "/" + key);
    for (std::size_t i = 0; i < a.size(); ++i) v.push_back(as_int(a[i], path + "/" + key + "/" + std::to_string(i)));
    return v;
  };
  r.S = ints("S");
  r.untargeted = ints("untargeted");
  const Json& sd = require(j, "S_dagger", path);
  if (sd.contains("m0") && !sd["m0"].is_null()) r.s_dagger.m0 = as_int(sd["m0"], path + "/S_dagger/m0");
  const Json& pairs = require(sd, "pairs", path + "/S_dagger");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string pp = path + "/S_dagger/pairs/" + std::to_string(i);
    const Json& p = pairs[i];
    r.s_dagger.pairs.push_back({as_int(require(p, "n", pp), pp + "/n"), as_int(require(p, "m", pp), pp + "/m"),
                                as_int(require(p, "m_prime", pp), pp + "/m_prime"),
                                static_cast<int>(as_int(require(p, "split", pp), pp + "/split"))});
  }
  r.M_used = as_int(require(j, "M", path), path + "/M");
  r.K_used = static_cast<int>(as_int(require(j, "K", path), path + "/K"));
  r.epsilon = as_number(require(j, "epsilon", path), path + "/epsilon");
  const Json& norms = require(j, "norms", path);
  for (std::size_t i = 0; i < norms.size(); ++i) {
    const std::string np = path + "/norms/" + std::to_string(i);
    r.norms.push_back({as_string(require(norms[i], "name", np), np + "/name"),
                       as_number(require(norms[i], "estimate", np), np + "/estimate"),
                       as_number(require(norms[i], "bound", np), np + "/bound")});
  }
  r.constraints_verified = require(j, "constraints_verified", path).get<bool>();
  r.bounds_met = require(j, "bounds_met", path).get<bool>();
  r.retries = static_cast<int>(as_int(require(j, "retries", path), path + "/retries"));
  return r;
}

Json to_json(const ConstructionState& s) {
  Json j;
  j["config"] = to_json(s.config);
  j["target_deltas"] = s.target_deltas;
  Json stages = Json::array();
  for (std::size_t i = 0; i < s.stages.size(); ++i) {
    const Stage& st = s.stages[i];
    Json e;
    e["index"] = i + 1;
    e["x"] = to_json(st.x);
    e["f"] = to_json(st.f);
    e["h"] = to_json(st.h);
    e["delta"] = st.delta;
    if (i + 1 < s.stages.size())
      e["report"] = to_json(st.report);
    else
      e["report"] = nullptr;
    stages.push_back(std::move(e));
  }
  j["stages"] = std::move(stages);
  return j;
}

ConstructionState construction_from_json(const Json& j) {
  using namespace json_field;
  ConstructionState s;
  s.config = step_config_from_json(require(j, "config", ""), "/config");
  const Json& td = require(j, "target_deltas", "");
  for (std::size_t i = 0; i < td.size(); ++i) s.target_deltas.push_back(as_number(td[i], "/target_deltas/" + std::to_string(i)));
  const Json& stages = require(j, "stages", "");
  if (!stages.is_array()) throw ParseError("'stages' must be an array", 0, "/stages");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string sp = "/stages/" + std::to_string(i);
    const Json& e = stages[i];
    Stage st;
    st.x = modefn_from_json(require(e, "x", sp), sp + "/x");
    st.f = modefn_from_json(require(e, "f", sp), sp + "/f");
    st.h = modefn_from_json(require(e, "h", sp), sp + "/h");
    st.delta = as_number(require(e, "delta", sp), sp + "/delta");
    if (e.contains("report") && !e["report"].is_null()) st.report = step_report_from_json(e["report"], sp + "/report");
    s.stages.push_back(std::move(st));
  }
  return s;
}

}  // namespace cascade
