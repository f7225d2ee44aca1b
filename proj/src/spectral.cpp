#include "cascade/spectral.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <tuple>
#include <stdexcept>

#include "cascade/error.hpp"
#include "certify.hpp"
#include "format.hpp"

namespace cascade {
namespace {

const FlatFn& zero_fn() {
  static const FlatFn z;
  return z;
}

std::int64_t narrow(__int128 v, const char* what) {
  if (v > INT64_MAX || v < INT64_MIN) throw std::overflow_error(what);
  return static_cast<std::int64_t>(v);
}

std::int64_t add3(std::int64_t a, std::int64_t b, std::int64_t c) {
  return narrow(static_cast<__int128>(a) + b + c, "oscillation rate overflow");
}

std::int64_t add4(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) {
  return narrow(static_cast<__int128>(a) + b + c + d, "oscillation rate overflow");
}

using Bucket = std::map<std::int64_t, std::vector<FlatTerm>>;

// Appends coeff * A * B * C * e^{i dtheta t} to bucket[n], with B optionally
// conjugated. C may be null for quadratic products.
struct ProductTerms {
  Bucket bucket;

  void add(std::int64_t n, Complex coeff, std::int64_t dtheta, const FlatFn& a, bool conj_a, const FlatFn& b,
           bool conj_b, const FlatFn* c = nullptr, bool conj_c = false) {
    auto& out = bucket[n];
    for (const auto& ta : a.terms()) {
      const Complex ca = conj_a ? std::conj(ta.coeff) : ta.coeff;
      const std::int64_t oa = conj_a ? -ta.osc : ta.osc;
      for (const auto& tb : b.terms()) {
        const Complex cab = ca * (conj_b ? std::conj(tb.coeff) : tb.coeff);
        const std::int64_t ob = conj_b ? -tb.osc : tb.osc;
        const Rational rab = ta.flat_rate + tb.flat_rate;
        const int pab = ta.t_pow + tb.t_pow;
        if (c == nullptr) {
          out.push_back({coeff * cab, pab, rab, add3(oa, ob, dtheta)});
          continue;
        }
        for (const auto& tc : c->terms()) {
          const Complex cc = conj_c ? std::conj(tc.coeff) : tc.coeff;
          const std::int64_t oc = conj_c ? -tc.osc : tc.osc;
          out.push_back({coeff * cab * cc, pab + tc.t_pow, rab + tc.flat_rate, add4(oa, ob, oc, dtheta)});
        }
      }
    }
  }

  ModeFn finish() && {
    ModeFn out;
    for (auto& [n, terms] : bucket) out.set(n, FlatFn(std::move(terms)));
    return out;
  }
};

void require_quadratic(const NonlinearitySpec& spec) {
  if (!is_quadratic(spec.variant)) throw VariantMismatch("quadratic nonlinearity requested for the cubic variant");
}

void require_cubic(const NonlinearitySpec& spec) {
  if (is_quadratic(spec.variant)) throw VariantMismatch("cubic nonlinearity requested for a quadratic variant");
}

std::int64_t square(std::int64_t n) { return narrow(static_cast<__int128>(n) * n, "mode square overflow"); }

}  // namespace

void ModeFn::set(std::int64_t n, FlatFn f) {
  if (f.is_zero())
    entries_.erase(n);
  else
    entries_[n] = std::move(f);
}

void ModeFn::add(std::int64_t n, const FlatFn& f) { set(n, at(n) + f); }

const FlatFn& ModeFn::at(std::int64_t n) const {
  auto it = entries_.find(n);
  return it == entries_.end() ? zero_fn() : it->second;
}

std::vector<std::int64_t> ModeFn::support() const {
  std::vector<std::int64_t> s;
  s.reserve(entries_.size());
  for (const auto& [n, f] : entries_) s.push_back(n);
  return s;
}

std::int64_t ModeFn::radius() const {
  std::int64_t r = 0;
  for (const auto& [n, f] : entries_) r = std::max(r, n < 0 ? -n : n);
  return r;
}

ModeFn operator+(const ModeFn& a, const ModeFn& b) {
  ModeFn out = a;
  for (const auto& [n, f] : b.entries_) out.add(n, f);
  return out;
}

ModeFn operator-(const ModeFn& a, const ModeFn& b) {
  ModeFn out = a;
  for (const auto& [n, f] : b.entries_) out.set(n, out.at(n) - f);
  return out;
}

ModeFn ModeFn::scaled(Complex c) const {
  ModeFn out(note_);
  for (const auto& [n, f] : entries_) out.set(n, scale(f, c));
  return out;
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::cubic_modified: return "cubic_modified";
    case Variant::quad_square: return "quad_square";
    case Variant::quad_conj_square: return "quad_conj_square";
    case Variant::quad_modulus_centered: return "quad_modulus_centered";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::cubic_modified, Variant::quad_square, Variant::quad_conj_square,
                    Variant::quad_modulus_centered})
    if (s == to_string(v)) return v;
  throw ValidationError("unknown nonlinearity variant '" + s + "'");
}

void NonlinearitySpec::validate() const {
  if (!(omega != 0.0 && std::isfinite(omega))) throw ValidationError("omega must be finite and nonzero");
}

double NormSpace::combine(const std::vector<std::int64_t>& modes, const std::vector<double>& mags) const {
  double acc = 0.0;
  if (kind == Kind::l2s) {
    for (std::size_t i = 0; i < modes.size(); ++i) {
      const double n = static_cast<double>(modes[i]);
      acc += mags[i] * mags[i] * std::exp(param * std::log1p(n * n));
    }
    return std::sqrt(acc);
  }
  if (param == 1.0) {
    for (double m : mags) acc += m;
    return acc;
  }
  double top = 0.0;
  for (double m : mags) top = std::max(top, m);
  if (top == 0.0) return 0.0;
  for (double m : mags) acc += std::pow(m / top, param);
  return top * std::pow(acc, 1.0 / param);
}

void NormSpace::validate() const {
  if (!std::isfinite(param)) throw ValidationError("norm parameter must be finite");
  if (kind == Kind::lp && param < 1.0) throw ValidationError("lp norm needs p >= 1");
}

std::string NormSpace::describe() const {
  std::string s = kind == Kind::l2s ? "l2s(" : "lp(";
  s += format_double(param) + ")";
  s += time == Time::C0 ? "/C0" : "/Cminus1";
  return s;
}

std::int64_t sigma(std::int64_t j, std::int64_t k, std::int64_t l, std::int64_t n) {
  const auto sq = [](std::int64_t v) { return static_cast<__int128>(v) * v; };
  return narrow(sq(n) - sq(j) + sq(k) - sq(l), "sigma overflow");
}

ModeFn n_main(const ModeFn& y, const NonlinearitySpec& spec) {
  require_cubic(spec);
  const Complex iw(0.0, spec.omega);
  const auto& e = y.entries();
  ProductTerms acc;
  // The summand is symmetric in (j, l), so unordered pairs are taken once
  // with weight 2 off the diagonal.
  for (auto jt = e.begin(); jt != e.end(); ++jt) {
    for (auto lt = jt; lt != e.end(); ++lt) {
      const std::int64_t j = jt->first, l = lt->first;
      const Complex w = j == l ? iw : 2.0 * iw;
      for (const auto& [k, yk] : e) {
        if (k == j || k == l) continue;
        const std::int64_t n = narrow(static_cast<__int128>(j) - k + l, "mode overflow");
        acc.add(n, w, sigma(j, k, l, n), jt->second, false, yk, true, &lt->second, false);
      }
    }
  }
  return std::move(acc).finish();
}

ModeFn n_diag(const ModeFn& y, const NonlinearitySpec& spec) {
  require_cubic(spec);
  ProductTerms acc;
  for (const auto& [n, f] : y.entries()) acc.add(n, Complex(0.0, -spec.omega), 0, f, false, f, true, &f, false);
  return std::move(acc).finish();
}

ModeFn q_nonlinearity(const ModeFn& y, const NonlinearitySpec& spec) {
  require_quadratic(spec);
  const Complex iw(0.0, spec.omega);
  const auto& e = y.entries();
  ProductTerms acc;
  for (auto jt = e.begin(); jt != e.end(); ++jt) {
    const std::int64_t j = jt->first;
    const __int128 j2 = static_cast<__int128>(j) * j;
    switch (spec.variant) {
      case Variant::quad_square:
      case Variant::quad_conj_square:
        for (auto lt = jt; lt != e.end(); ++lt) {
          const std::int64_t l = lt->first;
          const Complex w = j == l ? iw : 2.0 * iw;
          const __int128 l2 = static_cast<__int128>(l) * l;
          if (spec.variant == Variant::quad_square) {
            const std::int64_t n = narrow(static_cast<__int128>(j) + l, "mode overflow");
            const std::int64_t ph = narrow(static_cast<__int128>(square(n)) - j2 - l2, "phase overflow");
            acc.add(n, w, ph, jt->second, false, lt->second, false);
          } else {
            const std::int64_t n = narrow(-(static_cast<__int128>(j) + l), "mode overflow");
            const std::int64_t ph = narrow(static_cast<__int128>(square(n)) + j2 + l2, "phase overflow");
            acc.add(n, w, ph, jt->second, true, lt->second, true);
          }
        }
        break;
      case Variant::quad_modulus_centered:
        for (const auto& [l, yl] : e) {
          if (l == j) continue;
          const std::int64_t n = narrow(static_cast<__int128>(j) - l, "mode overflow");
          const std::int64_t ph =
              narrow(static_cast<__int128>(square(n)) - j2 + static_cast<__int128>(l) * l, "phase overflow");
          acc.add(n, iw, ph, jt->second, false, yl, true);
        }
        break;
      case Variant::cubic_modified: break;
    }
  }
  return std::move(acc).finish();
}

ModeFn nonlinearity(const ModeFn& y, const NonlinearitySpec& spec) {
  if (is_quadratic(spec.variant)) return q_nonlinearity(y, spec);
  return n_main(y, spec) + n_diag(y, spec);
}

ModeFn derivative(const ModeFn& x) {
  ModeFn out;
  for (const auto& [n, f] : x.entries()) out.set(n, derivative(f));
  return out;
}

ModeFn residual(const ModeFn& x, const NonlinearitySpec& spec) {
  spec.validate();
  return derivative(x) - nonlinearity(x, spec);
}

CertifiedValue norm(const ModeFn& v, const NormSpace& space, const Resolution& res, const QuadratureOptions& quad) {
  space.validate();
  if (res.samples < 2) throw ValidationError("norm resolution needs at least 2 samples");
  if (v.empty()) return {};
  const std::vector<std::int64_t> modes = v.support();
  const std::size_t m = modes.size();
  std::vector<double> vals(m), envs(m), lips(m);
  const auto grid = sample_grid(res);

  if (space.time == NormSpace::Time::C0) {
    std::vector<detail::C0Channel> ch;
    ch.reserve(m);
    for (const auto& [n, f] : v.entries()) ch.emplace_back(f);
    return detail::certify_sup(
        grid,
        [&](double t) {
          for (std::size_t i = 0; i < m; ++i) {
            vals[i] = ch[i].value(t);
            envs[i] = ch[i].groups.size() <= 1 ? vals[i] : ch[i].envelope(t);
          }
          return std::pair{space.combine(modes, vals), space.combine(modes, envs)};
        },
        [&](double a, double b) {
          for (std::size_t i = 0; i < m; ++i) lips[i] = ch[i].lipschitz(a, b);
          return space.combine(modes, lips);
        },
        [&](double a, double b) {
          for (std::size_t i = 0; i < m; ++i) lips[i] = ch[i].value_lipschitz(a, b);
          return space.combine(modes, lips);
        },
        0.0, res);
  }

  std::vector<detail::CMinus1Channel> ch;
  ch.reserve(m);
  for (const auto& [n, f] : v.entries()) ch.emplace_back(f, quad);
  std::vector<double> slacks(m);
  for (std::size_t i = 0; i < m; ++i) slacks[i] = ch[i].slack();
  const double slack = space.combine(modes, slacks);
  return detail::certify_sup(
      grid,
      [&](double t) {
        for (std::size_t i = 0; i < m; ++i) std::tie(vals[i], envs[i]) = ch[i].sample(t);
        return std::pair{space.combine(modes, vals), space.combine(modes, envs)};
      },
      [&](double a, double b) {
        for (std::size_t i = 0; i < m; ++i) lips[i] = ch[i].lipschitz(a, b);
        return space.combine(modes, lips);
      },
      [&](double a, double b) {
        for (std::size_t i = 0; i < m; ++i) lips[i] = ch[i].value_lipschitz(a, b);
        return space.combine(modes, lips);
      },
      slack, res);
}

ModeFn u_side(const ModeFn& v, Direction direction) {
  ModeFn out(v.note());
  for (const auto& [n, f] : v.entries()) {
    const std::int64_t n2 = square(n);
    out.set(n, shift_phase(f, direction == Direction::to_u ? -n2 : n2));
  }
  return out;
}

std::map<std::int64_t, Complex> eval(const ModeFn& v, double t) {
  std::map<std::int64_t, Complex> out;
  for (const auto& [n, f] : v.entries()) out.emplace(n, eval(f, t));
  return out;
}

Json to_json(const ModeFn& v) {
  Json modes = Json::array();
  for (const auto& [n, f] : v.entries()) {
    Json m;
    m["n"] = n;
    m["fn"] = to_json(f);
    modes.push_back(std::move(m));
  }
  Json out;
  out["modes"] = std::move(modes);
  out["note"] = v.note();
  return out;
}

ModeFn modefn_from_json(const Json& j, const std::string& path) {
  using namespace json_field;
  const Json& modes = require(j, "modes", path);
  if (!modes.is_array()) throw ParseError("'modes' must be an array", 0, path + "/modes");
  ModeFn out;
  if (j.contains("note")) out.set_note(as_string(j["note"], path + "/note"));
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const std::string mp = path + "/modes/" + std::to_string(i);
    const std::int64_t n = as_int(require(modes[i], "n", mp), mp + "/n");
    if (out.contains(n)) throw ParseError("duplicate mode " + std::to_string(n), 0, mp + "/n");
    out.set(n, flatfn_from_json(require(modes[i], "fn", mp), mp + "/fn"));
  }
  return out;
}

std::string serialize(const ModeFn& v) { return to_json(v).dump(); }

ModeFn parse_modefn(const std::string& text) { return modefn_from_json(parse_json_text(text)); }

std::string norms_csv(const ModeFn& v, const std::vector<double>& ts) {
  std::string out = "t,mode,abs_value\n";
  for (double t : ts) {
    for (const auto& [n, f] : v.entries()) {
      out += format_double(t);
      out += ',';
      out += std::to_string(n);
      out += ',';
      out += format_double(std::abs(eval(f, t)));
      out += '\n';
    }
  }
  return out;
}

}  // namespace cascade
