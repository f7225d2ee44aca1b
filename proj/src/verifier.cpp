#include "cascade/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "cascade/error.hpp"
#include "format.hpp"
#include "parallel.hpp"

namespace cascade {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform in [-1, 1], a pure function of (seed, N, n).
double hashed_unit(std::uint64_t seed, std::int64_t N, std::int64_t n) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(N));
  h = splitmix64(h ^ static_cast<std::uint64_t>(n));
  return 2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0;
}

}  // namespace

const char* to_string(CutoffKind k) {
  switch (k) {
    case CutoffKind::sharp: return "sharp";
    case CutoffKind::fejer: return "fejer";
    case CutoffKind::smooth_bump: return "smooth_bump";
    case CutoffKind::perturbed: return "perturbed";
  }
  return "?";
}

CutoffKind cutoff_kind_from_string(const std::string& s) {
  for (CutoffKind k : {CutoffKind::sharp, CutoffKind::fejer, CutoffKind::smooth_bump, CutoffKind::perturbed})
    if (s == to_string(k)) return k;
  throw ValidationError("unknown cutoff family '" + s + "'");
}

double perturbation_amplitude(std::int64_t N) { return std::min(1.0, 10.0 / std::log(static_cast<double>(N) + 2.0)); }

double smooth_bump(double x) {
  const double u = x * x / 4.0;
  if (u >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - u));
}

Multiplier make_cutoff(const CutoffFamily& family, std::int64_t N) {
  if (N < 1) throw ValidationError("cutoff index N must be at least 1");
  Multiplier m;
  switch (family.kind) {
    case CutoffKind::sharp:
      for (std::int64_t n = -N; n <= N; ++n) m.emplace(n, 1.0);
      break;
    case CutoffKind::fejer:
      for (std::int64_t n = -N + 1; n <= N - 1; ++n)
        m.emplace(n, 1.0 - static_cast<double>(n < 0 ? -n : n) / static_cast<double>(N));
      break;
    case CutoffKind::smooth_bump:
      for (std::int64_t n = -2 * N + 1; n <= 2 * N - 1; ++n) {
        const double v = smooth_bump(static_cast<double>(n) / static_cast<double>(N));
        if (v > 0.0) m.emplace(n, v);
      }
      break;
    case CutoffKind::perturbed: {
      const double a = perturbation_amplitude(N);
      for (std::int64_t n = -N; n <= N; ++n) m.emplace(n, 1.0 + a * hashed_unit(family.seed, N, n));
      break;
    }
  }
  return m;
}

std::string audit_cutoff(const CutoffFamily& family, std::int64_t n_max, double bound) {
  double prev_a = std::numeric_limits<double>::infinity();
  for (std::int64_t N = 1; N <= n_max; ++N) {
    const Multiplier m = make_cutoff(family, N);
    const std::string cell = std::string(to_string(family.kind)) + " N=" + std::to_string(N);
    if (m.size() > static_cast<std::size_t>(4 * N + 1)) return cell + ": support not finite in the expected window";
    double a = 0.0;  // observed sup |m_N(n) - 1| on the window where the family approximates 1
    for (const auto& [n, v] : m) {
      if (std::abs(v) > bound) return cell + ": multiplier exceeds the uniform bound";
      if (family.kind == CutoffKind::perturbed) a = std::max(a, std::abs(v - 1.0));
    }
    if (family.kind == CutoffKind::perturbed) {
      const double cap = perturbation_amplitude(N);
      if (a > cap + 1e-15) return cell + ": perturbation exceeds its amplitude";
      if (cap > prev_a) return cell + ": amplitude sequence not nonincreasing";
      prev_a = cap;
    }
    // Pointwise convergence at fixed n: the multiplier at n = 0, 1 must tend to 1.
    if (family.kind != CutoffKind::perturbed && N >= 4) {
      const double at1 = std::abs(m.count(1) ? m.at(1) : Complex{});
      if (std::abs(at1 - 1.0) > 4.0 / static_cast<double>(N)) return cell + ": m_N(1) not tending to 1";
    }
  }
  // a_N = min(1, 10 / log(N + 2)) tends to 0; the analytic limit is the
  // convergence clause for the perturbed family.
  if (family.kind == CutoffKind::perturbed && !(perturbation_amplitude(INT64_MAX / 4) < 0.3))
    return "perturbed: amplitude does not decay";
  return "";
}

ModeFn apply_cutoff(const ModeFn& v, const Multiplier& m) {
  ModeFn out(v.note());
  for (const auto& [n, f] : v.entries()) {
    auto it = m.find(n);
    if (it == m.end() || it->second == Complex{}) continue;
    out.set(n, it->second == Complex(1.0, 0.0) ? f : scale(f, it->second));
  }
  return out;
}

double ConvergenceReport::spread() const {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& [fam, c] : fitted_C) {
    if (!(c > 0.0)) continue;
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  return hi > 0.0 ? hi / lo : 1.0;
}

ConvergenceReport cutoff_convergence(const ConstructionState& state, const std::vector<CutoffFamily>& families,
                                     const std::vector<std::int64_t>& Ns, const NormSpace& space,
                                     const ConvergenceOptions& options) {
  if (state.stages.size() < 3) throw ValidationError("cutoff convergence needs at least 3 stages");
  if (families.empty() || Ns.empty()) throw ValidationError("cutoff convergence needs families and N values");
  const NonlinearitySpec& spec = state.config.spec;
  const NormSpace cm1 = space.with_time(NormSpace::Time::Cminus1);
  const int K = std::min<int>(options.max_k, static_cast<int>(state.stages.size()));

  ConvergenceReport rep;
  rep.deviation_tol = options.deviation_tol;
  rep.spread_limit = options.spread_limit;
  rep.header =
      "Sampled over a finite set of cutoff families and N values; the extended-sense limit quantifies over "
      "every cutoff sequence, so this is evidence, not a proof.";

  std::vector<ModeFn> full(K);
  for (int k = 0; k < K; ++k) full[k] = nonlinearity(state.stages[k].x, spec);

  struct Job {
    std::size_t fam;
    std::int64_t N;
    int k;
  };
  std::vector<Job> jobs;
  for (std::size_t f = 0; f < families.size(); ++f)
    for (auto N : Ns)
      for (int k = 1; k <= K; ++k) jobs.push_back({f, N, k});
  rep.cells.resize(jobs.size());

  detail::parallel_for(jobs.size(), [&](std::size_t i) {
    const Job& job = jobs[i];
    const Multiplier m = make_cutoff(families[job.fam], job.N);
    ConvergenceCell cell;
    cell.family = to_string(families[job.fam].kind);
    cell.N = job.N;
    cell.k = job.k;
    const ModeFn cut_k = nonlinearity(apply_cutoff(state.stages[job.k - 1].x, m), spec);
    cell.deviation = norm(cut_k - full[job.k - 1], cm1, options.resolution, options.quadrature).bound;
    cell.increment = -1.0;
    if (job.k < static_cast<int>(state.stages.size())) {
      const ModeFn cut_next = nonlinearity(apply_cutoff(state.stages[job.k].x, m), spec);
      cell.increment = norm(cut_next - cut_k, cm1, options.resolution, options.quadrature).bound;
    }
    rep.cells[i] = std::move(cell);
  });

  std::int64_t n_top = *std::max_element(Ns.begin(), Ns.end());
  rep.deviations_ok = true;
  for (const auto& c : rep.cells) {
    if (c.increment >= 0.0) {
      double& C = rep.fitted_C[c.family];
      C = std::max(C, c.increment * std::ldexp(1.0, c.k));
    } else {
      rep.fitted_C.emplace(c.family, 0.0);
    }
    if (c.N == n_top && c.deviation > options.deviation_tol && rep.deviations_ok) {
      rep.deviations_ok = false;
      rep.first_failure = "deviation " + format_double(c.deviation) + " above " + format_double(options.deviation_tol) +
                          " at (family=" + c.family + ", N=" + std::to_string(c.N) + ", k=" + std::to_string(c.k) + ")";
    }
  }
  rep.increments_ok = rep.spread() <= options.spread_limit;
  if (!rep.increments_ok && rep.first_failure.empty()) {
    // Name the cell that sets the largest constant.
    const ConvergenceCell* worst = nullptr;
    for (const auto& c : rep.cells)
      if (c.increment >= 0.0 && (!worst || c.increment * std::ldexp(1.0, c.k) > worst->increment * std::ldexp(1.0, worst->k)))
        worst = &c;
    rep.first_failure = "fitted constants spread by " + format_double(rep.spread()) + " at (family=" + worst->family +
                        ", N=" + std::to_string(worst->N) + ", k=" + std::to_string(worst->k) + ")";
  }
  if (options.strict && !(rep.deviations_ok && rep.increments_ok)) throw AssertionFailure(rep.first_failure);
  return rep;
}

Json to_json(const ConvergenceReport& r) {
  Json j;
  j["header"] = r.header;
  j["deviation_tol"] = r.deviation_tol;
  j["spread_limit"] = r.spread_limit;
  j["deviations_ok"] = r.deviations_ok;
  j["increments_ok"] = r.increments_ok;
  j["spread"] = r.spread();
  j["first_failure"] = r.first_failure;
  Json fc = Json::object();
  for (const auto& [f, c] : r.fitted_C) fc[f] = c;
  j["fitted_C"] = std::move(fc);
  Json cells = Json::array();
  for (const auto& c : r.cells) {
    Json e;
    e["family"] = c.family;
    e["N"] = c.N;
    e["k"] = c.k;
    e["deviation"] = c.deviation;
    if (c.increment >= 0.0)
      e["increment"] = c.increment;
    else
      e["increment"] = nullptr;
    cells.push_back(std::move(e));
  }
  j["cells"] = std::move(cells);
  return j;
}

std::string to_csv(const ConvergenceReport& r) {
  std::string out = "family,N,k,deviation,increment,fitted_C\n";
  for (const auto& c : r.cells) {
    out += c.family + "," + std::to_string(c.N) + "," + std::to_string(c.k) + "," + format_double(c.deviation) + ",";
    out += c.increment >= 0.0 ? format_double(c.increment) : std::string();
    out += "," + format_double(r.fitted_C.at(c.family)) + "\n";
  }
  return out;
}

double designed_contribution_mismatch(const Stage& stage, const Multiplier& m, const NormSpace& space,
                                      const NonlinearitySpec& spec) {
  const auto mult = [&](std::int64_t n) {
    auto it = m.find(n);
    return it == m.end() ? Complex{} : it->second;
  };
  const NormSpace cm1 = space.with_time(NormSpace::Time::Cminus1);
  const Complex iw(0.0, spec.omega);
  double worst = 0.0;
  const auto& sd = stage.report.s_dagger;
  for (const auto& p : sd.pairs) {
    const FlatFn& a = stage.h.at(p.m);
    const FlatFn& b = stage.h.at(p.m_prime);
    FlatFn base;
    Complex scalar;
    if (sd.m0) {
      const FlatFn& c = stage.h.at(*sd.m0);
      base = shift_phase(2.0 * iw * (c * conj(b) * a), sigma(*sd.m0, p.m_prime, p.m, p.n));
      scalar = mult(*sd.m0) * std::conj(mult(p.m_prime)) * mult(p.m);
    } else if (!is_quadratic(spec.variant)) {
      base = shift_phase(iw * (a * a * conj(b)), sigma(p.m, p.m_prime, p.m, p.n));
      scalar = mult(p.m) * mult(p.m) * std::conj(mult(p.m_prime));
    } else {
      continue;
    }
    ModeFn raw, cut;
    raw.set(p.n, base);
    cut.set(p.n, scale(base, scalar));
    const double nb = norm(raw, cm1).estimate;
    const double nc = norm(cut, cm1).estimate;
    const double ref = std::max(nb, 1e-300);
    worst = std::max(worst, std::abs(nc - std::abs(scalar) * nb) / ref);
  }
  return worst;
}

std::int64_t max_oscillation(const ModeFn& y, const ModeFn& g) {
  std::int64_t m = 0;
  for (const auto* v : {&y, &g})
    for (const auto& [n, f] : v->entries()) m = std::max(m, f.max_abs_osc());
  return m;
}

namespace {

struct Interaction {
  std::size_t out, j, k, l;
  std::int64_t sigma;
  double weight;
};

}  // namespace

double ode_crosscheck(const ModeFn& y, const ModeFn& g, const NonlinearitySpec& spec, const OdeOptions& opts) {
  spec.validate();
  if (!(opts.dt > 0.0) || opts.dt > 1e-3) throw ValidationError("ode step must lie in (0, 1e-3]");
  std::vector<std::int64_t> modes;
  for (const auto* v : {&y, &g})
    for (const auto& [n, f] : v->entries()) modes.push_back(n);
  std::sort(modes.begin(), modes.end());
  modes.erase(std::unique(modes.begin(), modes.end()), modes.end());
  if (modes.empty()) return 0.0;
  std::unordered_map<std::int64_t, std::size_t> index;
  for (std::size_t i = 0; i < modes.size(); ++i) index.emplace(modes[i], i);
  const std::size_t d = modes.size();

  // Interaction table restricted to the tracked modes. Quadratic entries use
  // l as the second factor and leave j unused.
  std::vector<Interaction> table;
  const Variant v = spec.variant;
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      const std::int64_t ma = modes[a], mb = modes[b];
      if (v == Variant::cubic_modified) {
        if (b > a) continue;  // (j, l) symmetric; handled with weight 2
        for (std::size_t c = 0; c < d; ++c) {
          const std::int64_t mk = modes[c];
          if (mk == ma || mk == mb) continue;
          const std::int64_t n = ma - mk + mb;
          auto it = index.find(n);
          if (it == index.end()) continue;
          table.push_back({it->second, a, c, b, sigma(ma, mk, mb, n), a == b ? 1.0 : 2.0});
        }
      } else {
        std::int64_t n = 0, phase = 0;
        if (v == Variant::quad_square) {
          n = ma + mb;
          phase = n * n - ma * ma - mb * mb;
        } else if (v == Variant::quad_conj_square) {
          n = -(ma + mb);
          phase = n * n + ma * ma + mb * mb;
        } else {
          if (a == b) continue;
          n = ma - mb;
          phase = n * n - ma * ma + mb * mb;
        }
        auto it = index.find(n);
        if (it == index.end()) continue;
        table.push_back({it->second, a, 0, b, phase, 1.0});
      }
    }
  }

  const Complex iw(0.0, spec.omega);
  std::vector<const FlatFn*> forcing(d);
  for (std::size_t i = 0; i < d; ++i) forcing[i] = &g.at(modes[i]);

  auto rhs = [&](double t, const std::vector<Complex>& z, std::vector<Complex>& out) {
    for (std::size_t i = 0; i < d; ++i) out[i] = eval(*forcing[i], t);
    for (const auto& e : table) {
      const Complex ph = unit_phase(e.sigma, t);
      Complex term;
      switch (v) {
        case Variant::cubic_modified: term = z[e.j] * std::conj(z[e.k]) * z[e.l]; break;
        case Variant::quad_square: term = z[e.j] * z[e.l]; break;
        case Variant::quad_conj_square: term = std::conj(z[e.j]) * std::conj(z[e.l]); break;
        case Variant::quad_modulus_centered: term = z[e.j] * std::conj(z[e.l]); break;
      }
      out[e.out] += iw * e.weight * term * ph;
    }
    if (v == Variant::cubic_modified)
      for (std::size_t i = 0; i < d; ++i) out[i] -= iw * std::norm(z[i]) * z[i];
  };

  const long steps = std::lround(1.0 / opts.dt);
  const double h = 1.0 / static_cast<double>(steps);
  std::vector<Complex> z(d), k1(d), k2(d), k3(d), k4(d), tmp(d);
  double worst = 0.0;
  for (long s = 0; s < steps; ++s) {
    const double t = s * h;
    rhs(t, z, k1);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = z[i] + 0.5 * h * k1[i];
    rhs(t + 0.5 * h, tmp, k2);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = z[i] + 0.5 * h * k2[i];
    rhs(t + 0.5 * h, tmp, k3);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = z[i] + h * k3[i];
    rhs(t + h, tmp, k4);
    for (std::size_t i = 0; i < d; ++i) z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    if ((s + 1) % opts.sample_every == 0 || s + 1 == steps) {
      const double tn = (s + 1) * h;
      for (std::size_t i = 0; i < d; ++i) {
        const Complex exact = eval(y.at(modes[i]), tn);
        worst = std::max(worst, std::abs(z[i] - exact) / (1.0 + std::abs(exact)));
      }
    }
  }
  return worst;
}

double integral_equation_check(const ModeFn& x, const ModeFn& f, const NonlinearitySpec& spec,
                               const std::vector<double>& ts, bool include_forcing, const QuadratureOptions& quad) {
  const ModeFn nx = nonlinearity(x, spec);
  std::vector<std::int64_t> modes;
  for (const auto* v : {&x, &nx, &f})
    for (const auto& [n, fn] : v->entries()) modes.push_back(n);
  std::sort(modes.begin(), modes.end());
  modes.erase(std::unique(modes.begin(), modes.end()), modes.end());
  std::vector<double> worst(modes.size(), 0.0);
  detail::parallel_for(modes.size(), [&](std::size_t i) {
    const std::int64_t n = modes[i];
    const auto a = antiderivative_values(nx.at(n), ts, quad);
    std::vector<Complex> b(ts.size());
    if (include_forcing) b = antiderivative_values(f.at(n), ts, quad);
    for (std::size_t j = 0; j < ts.size(); ++j)
      worst[i] = std::max(worst[i], std::abs(eval(x.at(n), ts[j]) - a[j] - b[j]));
  });
  return worst.empty() ? 0.0 : *std::max_element(worst.begin(), worst.end());
}

}  // namespace cascade
