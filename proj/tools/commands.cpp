#include "commands.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <ostream>

#include "cascade/error.hpp"
#include "cascade/json_io.hpp"
#include "format.hpp"

namespace cascade::cli {
namespace {

namespace fs = std::filesystem;
using namespace json_field;

constexpr const char* manifest_format = "cascade_forge.manifest/1";

void reject_unknown(const Json& j, std::initializer_list<const char*> allowed, const std::string& path) {
  if (!j.is_object()) throw ParseError("expected an object", 0, path);
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ParseError("unknown field '" + key + "'", 0, path + "/" + key);
  }
}

const Json& array_at(const Json& j, const char* key, const std::string& path) {
  const Json& a = j[key];
  if (!a.is_array()) throw ParseError("expected an array", 0, path + "/" + key);
  return a;
}

std::vector<std::int64_t> int_list(const Json& j, const char* key, const std::string& path) {
  std::vector<std::int64_t> out;
  const Json& a = array_at(j, key, path);
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(as_int(a[i], path + "/" + key + "/" + std::to_string(i)));
  return out;
}

bool as_bool(const Json& v, const std::string& path) {
  if (!v.is_boolean()) throw ParseError("expected a boolean", 0, path);
  return v.get<bool>();
}

std::string stage_label(std::size_t i) { return "stage " + std::to_string(i + 1); }

}  // namespace

// ---------------------------------------------------------------- config

Json to_json(const VerifySettings& v) {
  Json j;
  j["seed"] = v.seed;
  Json fams = Json::array();
  for (const auto& f : v.cutoff.families) fams.push_back(to_string(f.kind));
  j["cutoff"] = {{"families", fams},
                 {"N", v.cutoff.Ns},
                 {"max_k", v.cutoff.max_k},
                 {"deviation_tol", v.cutoff.deviation_tol},
                 {"spread_limit", v.cutoff.spread_limit},
                 {"gate", v.cutoff.gate},
                 {"audit_n_max", v.cutoff.audit_n_max}};
  j["ode"] = {{"dt", v.ode.options.dt},
              {"sample_every", v.ode.options.sample_every},
              {"tolerance", v.ode.tolerance},
              {"max_phase_step", v.ode.max_phase_step},
              {"max_modes", v.ode.max_modes}};
  j["integral_ts"] = v.integral_ts;
  j["integral_tol"] = v.integral_tol;
  j["coeff_tol"] = v.coeff_tol;
  j["designed_tol"] = v.designed_tol;
  return j;
}

VerifySettings verify_settings_from_json(const Json& j, const std::string& path) {
  reject_unknown(j, {"seed", "cutoff", "ode", "integral_ts", "integral_tol", "coeff_tol", "designed_tol"}, path);
  VerifySettings v;
  if (j.contains("seed")) {
    const std::int64_t s = as_int(j["seed"], path + "/seed");
    if (s < 0) throw ParseError("seed must be nonnegative", 0, path + "/seed");
    v.seed = static_cast<std::uint64_t>(s);
  }
  if (j.contains("cutoff")) {
    const Json& c = j["cutoff"];
    const std::string cp = path + "/cutoff";
    reject_unknown(c, {"families", "N", "max_k", "deviation_tol", "spread_limit", "gate", "audit_n_max"}, cp);
    if (c.contains("families")) {
      v.cutoff.families.clear();
      const Json& a = array_at(c, "families", cp);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const std::string fp = cp + "/families/" + std::to_string(i);
        try {
          v.cutoff.families.push_back({cutoff_kind_from_string(as_string(a[i], fp)), 0});
        } catch (const ValidationError& e) {
          throw ParseError(e.what(), 0, fp);
        }
      }
    }
    if (c.contains("N")) v.cutoff.Ns = int_list(c, "N", cp);
    if (c.contains("max_k")) v.cutoff.max_k = static_cast<int>(as_int(c["max_k"], cp + "/max_k"));
    if (c.contains("deviation_tol")) v.cutoff.deviation_tol = as_number(c["deviation_tol"], cp + "/deviation_tol");
    if (c.contains("spread_limit")) v.cutoff.spread_limit = as_number(c["spread_limit"], cp + "/spread_limit");
    if (c.contains("gate")) v.cutoff.gate = as_bool(c["gate"], cp + "/gate");
    if (c.contains("audit_n_max")) v.cutoff.audit_n_max = as_int(c["audit_n_max"], cp + "/audit_n_max");
    for (auto N : v.cutoff.Ns)
      if (N < 1) throw ParseError("cutoff N values must be positive", 0, cp + "/N");
    if (v.cutoff.max_k < 1) throw ParseError("max_k must be positive", 0, cp + "/max_k");
  }
  if (j.contains("ode")) {
    const Json& o = j["ode"];
    const std::string op = path + "/ode";
    reject_unknown(o, {"dt", "sample_every", "tolerance", "max_phase_step", "max_modes"}, op);
    if (o.contains("dt")) v.ode.options.dt = as_number(o["dt"], op + "/dt");
    if (o.contains("sample_every"))
      v.ode.options.sample_every = static_cast<int>(as_int(o["sample_every"], op + "/sample_every"));
    if (o.contains("tolerance")) v.ode.tolerance = as_number(o["tolerance"], op + "/tolerance");
    if (o.contains("max_phase_step")) v.ode.max_phase_step = as_number(o["max_phase_step"], op + "/max_phase_step");
    if (o.contains("max_modes")) v.ode.max_modes = static_cast<std::size_t>(as_int(o["max_modes"], op + "/max_modes"));
    if (!(v.ode.options.dt > 0.0) || v.ode.options.dt > 1e-3)
      throw ParseError("ode dt must lie in (0, 1e-3]", 0, op + "/dt");
    if (v.ode.options.sample_every < 1) throw ParseError("sample_every must be positive", 0, op + "/sample_every");
  }
  if (j.contains("integral_ts")) {
    v.integral_ts.clear();
    const Json& a = array_at(j, "integral_ts", path);
    for (std::size_t i = 0; i < a.size(); ++i)
      v.integral_ts.push_back(as_number(a[i], path + "/integral_ts/" + std::to_string(i)));
    for (std::size_t i = 0; i < v.integral_ts.size(); ++i)
      if (!(v.integral_ts[i] >= 0.0 && v.integral_ts[i] <= 1.0) || (i > 0 && v.integral_ts[i] < v.integral_ts[i - 1]))
        throw ParseError("integral_ts must be sorted points of [0,1]", 0, path + "/integral_ts");
  }
  if (j.contains("integral_tol")) v.integral_tol = as_number(j["integral_tol"], path + "/integral_tol");
  if (j.contains("coeff_tol")) v.coeff_tol = as_number(j["coeff_tol"], path + "/coeff_tol");
  if (j.contains("designed_tol")) v.designed_tol = as_number(j["designed_tol"], path + "/designed_tol");
  for (auto& f : v.cutoff.families) f.seed = v.seed;
  return v;
}

RunConfig run_config_from_json(const Json& j) {
  reject_unknown(j, {"step", "stages", "verify", "sweep"}, "");
  RunConfig c;
  if (j.contains("step")) c.step = step_config_from_json(j["step"], "/step");
  if (j.contains("stages")) {
    c.stages = static_cast<int>(as_int(j["stages"], "/stages"));
    if (c.stages < 1) throw ParseError("stages must be at least 1", 0, "/stages");
  }
  if (j.contains("verify")) c.verify = verify_settings_from_json(j["verify"], "/verify");
  if (j.contains("sweep")) {
    const Json& s = j["sweep"];
    reject_unknown(s, {"parameter", "values"}, "/sweep");
    SweepSettings sw;
    const std::string& p = as_string(require(s, "parameter", "/sweep"), "/sweep/parameter");
    if (p == "M")
      sw.parameter = SweepSettings::Parameter::M;
    else if (p == "K")
      sw.parameter = SweepSettings::Parameter::K;
    else
      throw ParseError("sweep parameter must be M or K", 0, "/sweep/parameter");
    require(s, "values", "/sweep");
    sw.values = int_list(s, "values", "/sweep");
    for (auto v : sw.values)
      if (v < 1) throw ParseError("sweep values must be positive", 0, "/sweep/values");
    c.sweep = std::move(sw);
  }
  return c;
}

// ---------------------------------------------------------------- verify

const CheckResult* VerifyOutcome::first_failure() const {
  for (const auto& c : checks)
    if (c.gating && !c.passed) return &c;
  return nullptr;
}

VerifyOutcome verify_manifest(const Json& manifest) {
  VerifyOutcome out;
  if (!manifest.is_object()) throw ParseError("manifest must be a JSON object", 0, "");
  reject_unknown(manifest, {"format", "construction", "verify"}, "");
  VerifySettings vs;
  if (manifest.contains("verify")) vs = verify_settings_from_json(manifest["verify"], "/verify");

  const bool vacuous = !manifest.contains("construction") || !manifest["construction"].contains("stages") ||
                       manifest["construction"]["stages"].empty();
  if (vacuous) {
    out.checks.push_back({"residual", true, true, "no stages; vacuous"});
    out.report["vacuous"] = true;
  } else {
    const ConstructionState st = construction_from_json(manifest["construction"]);
    const NonlinearitySpec& spec = st.config.spec;
    const std::size_t n = st.stages.size();
    auto add = [&](std::string name, bool ok, std::string detail, bool gating = true) {
      out.checks.push_back({std::move(name), ok, gating, std::move(detail)});
    };

    // Exact residual identity and the stage recursion.
    {
      std::string bad;
      for (std::size_t i = 0; i < n && bad.empty(); ++i) {
        const ModeFn r = residual(st.stages[i].x, spec);
        const ModeFn diff = r - st.stages[i].f;
        for (const auto& m : diff.entries())
          if (m.second.max_abs_coeff() > vs.coeff_tol) {
            bad = stage_label(i) + ", mode " + std::to_string(m.first) + ": residual differs from the stored forcing by " +
                  format_double(m.second.max_abs_coeff());
            break;
          }
        if (bad.empty() && i + 1 < n) {
          const ModeFn d = st.stages[i + 1].x - (st.stages[i].x + st.stages[i].h);
          for (const auto& m : d.entries())
            if (m.second.max_abs_coeff() > vs.coeff_tol) {
              bad = stage_label(i + 1) + ", mode " + std::to_string(m.first) + ": x differs from the previous stage plus h";
              break;
            }
        }
      }
      add("residual", bad.empty(), bad.empty() ? "all stages exact" : bad);
    }

    // Zero initial datum: every term vanishes to all orders at t = 0.
    {
      std::string bad;
      for (std::size_t i = 0; i < n && bad.empty(); ++i)
        for (const auto& [m, f] : st.stages[i].x.entries())
          if (!f.is_flat()) {
            bad = stage_label(i) + ", mode " + std::to_string(m) + " is not flat at t=0";
            break;
          }
      add("zero_initial_datum", bad.empty(), bad);
    }

    // Increments within their budgets, re-measured from h.
    {
      std::string bad;
      const NormSpace c0 = st.config.space.with_time(NormSpace::Time::C0);
      for (std::size_t i = 0; i + 1 < n && i < st.target_deltas.size() && bad.empty(); ++i) {
        const double d = norm(st.stages[i].h, c0, st.config.resolution, st.config.quadrature).bound;
        if (d > st.target_deltas[i])
          bad = stage_label(i) + ": increment norm " + format_double(d) + " exceeds " + format_double(st.target_deltas[i]);
      }
      add("increment_budget", bad.empty(), bad);
    }

    // Integral form x(t) = int N(x) + int f.
    {
      std::string bad;
      Json per = Json::array();
      for (std::size_t i = 0; i < n; ++i) {
        const double e = integral_equation_check(st.stages[i].x, st.stages[i].f, spec, vs.integral_ts, true,
                                                 st.config.quadrature);
        per.push_back(e);
        if (e > vs.integral_tol && bad.empty())
          bad = stage_label(i) + ": integral equation defect " + format_double(e);
      }
      out.report["integral_equation"] = per;
      add("integral_equation", bad.empty(), bad);
    }

    // RK4 cross-check on the stages the fixed step can resolve.
    {
      std::string bad;
      Json per = Json::array();
      for (std::size_t i = 0; i < n; ++i) {
        const Stage& s = st.stages[i];
        Json e;
        e["stage"] = i + 1;
        const double phase_step = static_cast<double>(max_oscillation(s.x, s.f)) * vs.ode.options.dt;
        std::size_t modes = s.x.size();
        for (const auto& [m, f] : s.f.entries())
          if (!s.x.contains(m)) ++modes;
        if (phase_step > vs.ode.max_phase_step || modes > vs.ode.max_modes) {
          e["skipped"] = "max |theta| * dt = " + format_double(phase_step) + " over " + std::to_string(modes) +
                         " modes is beyond the resolvable range";
        } else {
          const double dev = ode_crosscheck(s.x, s.f, spec, vs.ode.options);
          e["deviation"] = dev;
          if (dev > vs.ode.tolerance && bad.empty())
            bad = stage_label(i) + ": RK4 deviation " + format_double(dev);
        }
        per.push_back(std::move(e));
      }
      out.report["ode"] = per;
      add("ode_crosscheck", bad.empty(), bad);
    }

    // Cutoff families: definition audit and the designed-term identity.
    {
      std::string bad;
      for (const auto& fam : vs.cutoff.families) {
        const std::string a = audit_cutoff(fam, vs.cutoff.audit_n_max);
        if (!a.empty()) {
          bad = a;
          break;
        }
      }
      for (std::size_t i = 0; i + 1 < n && bad.empty(); ++i)
        for (const auto& fam : vs.cutoff.families)
          for (auto N : vs.cutoff.Ns) {
            const double mm = designed_contribution_mismatch(st.stages[i], make_cutoff(fam, N), st.config.space, spec);
            if (mm > vs.designed_tol && bad.empty())
              bad = stage_label(i) + ", " + to_string(fam.kind) + " N=" + std::to_string(N) +
                    ": designed contribution mismatch " + format_double(mm);
          }
      add("cutoff_identity", bad.empty(), bad);
    }

    // Four-family convergence suite.
    if (n >= 3 && !vs.cutoff.families.empty() && !vs.cutoff.Ns.empty()) {
      ConvergenceOptions co;
      co.max_k = vs.cutoff.max_k;
      co.deviation_tol = vs.cutoff.deviation_tol;
      co.spread_limit = vs.cutoff.spread_limit;
      co.strict = false;
      co.resolution = st.config.resolution;
      co.quadrature = st.config.quadrature;
      const ConvergenceReport cr = cutoff_convergence(st, vs.cutoff.families, vs.cutoff.Ns, st.config.space, co);
      out.report["cutoff_convergence"] = to_json(cr);
      add("cutoff_convergence", cr.deviations_ok && cr.increments_ok, cr.first_failure, vs.cutoff.gate);
    } else {
      add("cutoff_convergence", true, "fewer than 3 stages; not run", vs.cutoff.gate);
    }
  }

  Json checks = Json::array();
  for (const auto& c : out.checks)
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"gating", c.gating}, {"detail", c.detail}});
  out.report["checks"] = std::move(checks);
  const CheckResult* f = out.first_failure();
  out.report["passed"] = f == nullptr;
  if (f)
    out.report["first_failure"] = f->name;
  else
    out.report["first_failure"] = nullptr;
  return out;
}

// ---------------------------------------------------------------- sweep

std::vector<SweepCell> run_sweep(const RunConfig& config) {
  if (!config.sweep) throw ValidationError("config has no sweep section");
  const SweepSettings& sw = *config.sweep;
  const bool by_k = sw.parameter == SweepSettings::Parameter::K;
  const std::size_t need = by_k ? 3 : 4;
  if (sw.values.size() < need)
    throw ValidationError("sweep grid needs at least " + std::to_string(need) + " points, got " +
                          std::to_string(sw.values.size()));
  std::vector<SweepCell> cells;
  const ModeFn x = seed_x1();
  const ModeFn f = residual(x, config.step.spec);
  const NormSpace c0 = config.step.space.with_time(NormSpace::Time::C0);
  for (auto v : sw.values) {
    StepConfig cfg = config.step;
    if (by_k) {
      if (cfg.space.kind != NormSpace::Kind::lp || !(cfg.space.param > 2.0))
        throw ValidationError("a K sweep needs an lp(p) space with p > 2");
      cfg.K = static_cast<int>(v);
      cfg.M = std::max<std::int64_t>(cfg.M, 1);
      const StepResult r = design_increment(x, f, cfg);
      if (!r.report.constraints_verified || !r.report.s_dagger.m0)
        throw BoundUnreachable("K=" + std::to_string(v) + ": frequency constraints not verified");
      ModeFn rest = r.h;
      rest.set(*r.report.s_dagger.m0, FlatFn{});
      cells.push_back({v, norm(rest, c0, cfg.resolution, cfg.quadrature).bound});
    } else {
      cfg.M = v;
      const StepResult r = step_attempt(x, f, cfg);
      if (!r.report.constraints_verified) throw BoundUnreachable("M=" + std::to_string(v) + ": frequency constraints not verified");
      cells.push_back({v, r.report.find("h")->bound});
    }
    if (!(cells.back().norm > 0.0) || !std::isfinite(cells.back().norm))
      throw BoundUnreachable("sweep cell " + std::to_string(v) + " produced no measurable increment");
  }
  return cells;
}

SweepFit fit_loglog(const std::vector<SweepCell>& cells, double confidence) {
  const std::size_t n = cells.size();
  if (n < 2) throw ValidationError("a fit needs at least 2 points");
  std::vector<double> xs(n), ys(n);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = std::log(static_cast<double>(cells[i].value));
    ys[i] = std::log(cells[i].norm);
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) throw ValidationError("sweep values must not all coincide");
  SweepFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.ci_low = fit.ci_high = fit.slope;
  if (n > 2) {
    double sse = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = ys[i] - fit.intercept - fit.slope * xs[i];
      sse += r * r;
    }
    const double se = std::sqrt(sse / static_cast<double>(n - 2) / sxx);
    const boost::math::students_t dist(static_cast<double>(n - 2));
    const double q = boost::math::quantile(boost::math::complement(dist, (1.0 - confidence) / 2.0));
    fit.ci_low = fit.slope - q * se;
    fit.ci_high = fit.slope + q * se;
  }
  for (std::size_t i = 1; i < n; ++i) fit.ratios.push_back(cells[i].norm / cells[i - 1].norm);
  return fit;
}

// ---------------------------------------------------------------- export

std::string cascade_csv(const ConstructionState& state, int t_samples) {
  std::string out = "stage,mode,t,abs_value\n";
  for (std::size_t i = 0; i < state.stages.size(); ++i)
    for (const auto& [m, f] : state.stages[i].x.entries())
      for (int k = 0; k < t_samples; ++k) {
        const double t = static_cast<double>(k) / (t_samples - 1);
        out += std::to_string(i + 1) + "," + std::to_string(m) + "," + format_double(t) + "," +
               format_double(std::abs(eval(f, t))) + "\n";
      }
  return out;
}

std::string stage_norms_csv(const ConstructionState& state) {
  std::string out = "stage,space,value\n";
  const std::string space = state.config.space.with_time(NormSpace::Time::C0).describe();
  for (std::size_t i = 0; i + 1 < state.stages.size(); ++i)
    out += std::to_string(i + 1) + "," + space + "," + format_double(state.stages[i].delta) + "\n";
  return out;
}

// ---------------------------------------------------------------- commands

namespace {

Json summary_json(const ConstructionState& st) {
  Json rows = Json::array();
  bool all_ok = true;
  for (std::size_t i = 0; i < st.stages.size(); ++i) {
    const Stage& s = st.stages[i];
    Json r;
    r["stage"] = i + 1;
    r["support_size"] = s.x.size();
    r["radius"] = s.x.radius();
    r["forcing_modes"] = s.f.size();
    r["mode0_sup"] = sup_norm(s.x.at(0)).estimate;
    if (i + 1 < st.stages.size()) {
      const double budget = std::ldexp(1.0, -static_cast<int>(i) - 2);
      r["delta"] = s.delta;
      r["budget"] = budget;
      r["within_budget"] = s.delta <= budget;
      r["M"] = s.report.M_used;
      const NamedNorm* g = s.report.find("g");
      r["g_bound"] = g ? g->bound : 0.0;
      all_ok = all_ok && s.delta <= budget;
    }
    rows.push_back(std::move(r));
  }
  Json j;
  j["space"] = st.config.space.with_time(NormSpace::Time::C0).describe();
  j["stages"] = std::move(rows);
  j["all_within_budget"] = all_ok;
  return j;
}

int fail(std::ostream& log, int code, const std::string& what) {
  log << "cascade_forge: " << what << "\n";
  return code;
}

}  // namespace

int cmd_construct(const fs::path& config_path, const fs::path& out, std::ostream& log) {
  RunConfig cfg;
  try {
    cfg = run_config_from_json(read_json_file(config_path));
  } catch (const ParseError& e) {
    return fail(log, exit_invalid, std::string("invalid config: ") + e.what() + (e.path().empty() ? "" : " at " + e.path()));
  } catch (const Error& e) {
    return fail(log, exit_invalid, std::string("invalid config: ") + e.what());
  }
  ConstructionState st;
  try {
    st = iterate(cfg.step, cfg.stages);
  } catch (const BoundUnreachable& e) {
    return fail(log, exit_bound_unreachable, std::string("BoundUnreachable: ") + e.what());
  } catch (const ValidationError& e) {
    return fail(log, exit_invalid, std::string("validation: ") + e.what());
  } catch (const InfeasibleSupport& e) {
    return fail(log, exit_invalid, std::string("infeasible support: ") + e.what());
  } catch (const Error& e) {
    return fail(log, exit_bound_unreachable, e.what());
  }
  try {
    fs::create_directories(out);
    Json manifest;
    manifest["format"] = manifest_format;
    manifest["construction"] = to_json(st);
    manifest["verify"] = to_json(cfg.verify);
    for (std::size_t i = 0; i + 1 < st.stages.size(); ++i)
      write_file_atomic(out / ("stage_" + std::to_string(i + 1) + "_report.json"),
                        to_json(st.stages[i].report).dump(2) + "\n");
    write_file_atomic(out / "summary.json", summary_json(st).dump(2) + "\n");
    write_file_atomic(out / "manifest.json", manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    return fail(log, exit_invalid, std::string("cannot write output: ") + e.what());
  }
  return exit_ok;
}

int cmd_verify(const fs::path& manifest_path, const std::optional<fs::path>& report_path, std::ostream& out,
               std::ostream& log) {
  Json manifest;
  try {
    manifest = read_json_file(manifest_path);
  } catch (const Error& e) {
    return fail(log, exit_invalid, std::string("cannot read manifest: ") + e.what());
  }
  VerifyOutcome v;
  try {
    v = verify_manifest(manifest);
  } catch (const ParseError& e) {
    return fail(log, exit_invalid, std::string("invalid manifest: ") + e.what() + (e.path().empty() ? "" : " at " + e.path()));
  } catch (const Error& e) {
    return fail(log, exit_verify_failed, std::string("verification aborted: ") + e.what());
  }
  const std::string text = v.report.dump(2) + "\n";
  try {
    if (report_path) write_file_atomic(*report_path, text);
  } catch (const std::exception& e) {
    return fail(log, exit_invalid, std::string("cannot write report: ") + e.what());
  }
  out << text;
  if (const CheckResult* f = v.first_failure())
    return fail(log, exit_verify_failed, "check '" + f->name + "' failed: " + f->detail);
  return exit_ok;
}

int cmd_sweep(const fs::path& config_path, const fs::path& out, std::ostream& out_stream, std::ostream& log) {
  RunConfig cfg;
  try {
    cfg = run_config_from_json(read_json_file(config_path));
  } catch (const Error& e) {
    return fail(log, exit_sweep_failed, std::string("invalid sweep config: ") + e.what());
  }
  std::vector<SweepCell> cells;
  SweepFit fit;
  try {
    cells = run_sweep(cfg);
    fit = fit_loglog(cells);
  } catch (const std::exception& e) {
    return fail(log, exit_sweep_failed, std::string("sweep failed: ") + e.what());
  }
  const char* param = cfg.sweep->parameter == SweepSettings::Parameter::M ? "M" : "K";
  std::string csv = std::string(param) + ",norm\n";
  for (const auto& c : cells) csv += std::to_string(c.value) + "," + format_double(c.norm) + "\n";
  try {
    write_file_atomic(out, csv);
  } catch (const std::exception& e) {
    return fail(log, exit_sweep_failed, std::string("cannot write sweep output: ") + e.what());
  }
  Json j;
  j["parameter"] = param;
  j["slope"] = fit.slope;
  j["intercept"] = fit.intercept;
  j["ci95"] = {fit.ci_low, fit.ci_high};
  j["ratios"] = fit.ratios;
  out_stream << j.dump(2) << "\n";
  return exit_ok;
}

int cmd_export(const fs::path& manifest_path, const std::string& kind, const fs::path& out, std::ostream& log) {
  if (kind != "cascade_csv" && kind != "norms_csv")
    return fail(log, exit_invalid, "unknown export kind '" + kind + "'");
  ConstructionState st;
  try {
    const Json m = read_json_file(manifest_path);
    if (m.contains("construction") && m["construction"].contains("stages") && !m["construction"]["stages"].empty())
      st = construction_from_json(m["construction"]);
  } catch (const std::exception& e) {
    return fail(log, exit_invalid, std::string("cannot read manifest: ") + e.what());
  }
  try {
    write_file_atomic(out, kind == "cascade_csv" ? cascade_csv(st) : stage_norms_csv(st));
  } catch (const std::exception& e) {
    return fail(log, exit_invalid, std::string("cannot write export: ") + e.what());
  }
  return exit_ok;
}

}  // namespace cascade::cli
