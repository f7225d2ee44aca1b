// Python bindings for the core library. Configs and reports cross the
// boundary as JSON text; FlatFn and ModeFn are exposed as value types.
#include <pybind11/complex.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cascade/cascade.hpp"
#include "cascade/error.hpp"
#include "cascade/json_io.hpp"
#include "cascade/verifier.hpp"

namespace py = pybind11;
using namespace cascade;

namespace {

using TermTuple = std::tuple<Complex, int, std::pair<std::int64_t, std::int64_t>, std::int64_t>;

FlatFn flatfn_from_terms(const std::vector<TermTuple>& terms) {
  std::vector<FlatTerm> out;
  out.reserve(terms.size());
  for (const auto& [c, p, k, theta] : terms) out.push_back({c, p, Rational(k.first, k.second), theta});
  return FlatFn(std::move(out));
}

std::vector<TermTuple> terms_of(const FlatFn& f) {
  std::vector<TermTuple> out;
  for (const auto& t : f.terms()) out.emplace_back(t.coeff, t.t_pow, std::pair{t.flat_rate.num(), t.flat_rate.den()}, t.osc);
  return out;
}

NonlinearitySpec make_spec(double omega, const std::string& variant) { return {omega, variant_from_string(variant)}; }

NormSpace make_space(const std::string& kind, double param, const std::string& time) {
  NormSpace s = kind == "l2s" ? NormSpace::l2s(param) : kind == "lp" ? NormSpace::lp(param) : throw ValidationError("unknown norm kind '" + kind + "'");
  if (time == "C0")
    s.time = NormSpace::Time::C0;
  else if (time == "Cminus1")
    s.time = NormSpace::Time::Cminus1;
  else
    throw ValidationError("unknown time mode '" + time + "'");
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Finite-stage cascade construction core";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<BoundUnreachable>(m, "BoundUnreachable", base.ptr());
  py::register_exception<InfeasibleSupport>(m, "InfeasibleSupport", base.ptr());
  py::register_exception<VariantMismatch>(m, "VariantMismatch", base.ptr());
  py::register_exception<FlatnessViolation>(m, "FlatnessViolation", base.ptr());
  py::register_exception<QuadratureNonConvergence>(m, "QuadratureNonConvergence", base.ptr());
  py::register_exception<AssertionFailure>(m, "AssertionFailure", base.ptr());

  py::class_<FlatFn>(m, "FlatFn")
      .def(py::init<>())
      .def(py::init(&flatfn_from_terms), py::arg("terms"),
           "Terms are (coeff, p, (k_num, k_den), theta) for coeff * t^p * exp(-k/t) * exp(i theta t).")
      .def_static("from_json", [](const std::string& s) { return flatfn_from_json(parse_json_text(s)); })
      .def("to_json", [](const FlatFn& f) { return serialize(f); })
      .def("terms", &terms_of)
      .def("__call__", [](const FlatFn& f, double t) { return f(t); })
      .def("is_flat", &FlatFn::is_flat)
      .def("__len__", &FlatFn::size)
      .def(py::self + py::self)
      .def(py::self - py::self)
      .def(py::self * py::self)
      .def(py::self == py::self)
      .def("__repr__", [](const FlatFn& f) { return "FlatFn(" + serialize(f) + ")"; });

  py::class_<ModeFn>(m, "ModeFn")
      .def(py::init<>())
      .def(py::init([](const std::map<std::int64_t, FlatFn>& modes) {
             ModeFn v;
             for (const auto& [n, f] : modes) v.set(n, f);
             return v;
           }),
           py::arg("modes"))
      .def_static("from_json", [](const std::string& s) { return parse_modefn(s); })
      .def("to_json", [](const ModeFn& v) { return serialize(v); })
      .def("support", &ModeFn::support)
      .def("__getitem__", [](const ModeFn& v, std::int64_t n) { return v.at(n); })
      .def("__len__", &ModeFn::size)
      .def("radius", &ModeFn::radius)
      .def("__call__", [](const ModeFn& v, double t) { return eval(v, t); })
      .def(py::self + py::self)
      .def(py::self - py::self)
      .def(py::self == py::self)
      .def("__repr__", [](const ModeFn& v) { return "ModeFn(support=" + std::to_string(v.size()) + ")"; });

  m.def("sigma", &sigma, py::arg("j"), py::arg("k"), py::arg("l"), py::arg("n"));
  m.def("seed", &seed_x1, "Stage-one seed: e * exp(-1/t) on mode 0.");
  m.def(
      "residual", [](const ModeFn& x, double omega, const std::string& variant) { return residual(x, make_spec(omega, variant)); },
      py::arg("x"), py::arg("omega") = 1.0, py::arg("variant") = "cubic_modified");
  m.def(
      "nonlinearity",
      [](const ModeFn& y, double omega, const std::string& variant) { return nonlinearity(y, make_spec(omega, variant)); },
      py::arg("y"), py::arg("omega") = 1.0, py::arg("variant") = "cubic_modified");
  m.def(
      "norm",
      [](const ModeFn& v, const std::string& kind, double param, const std::string& time) {
        const CertifiedValue c = norm(v, make_space(kind, param, time));
        return std::pair{c.estimate, c.bound};
      },
      py::arg("v"), py::arg("kind") = "l2s", py::arg("param") = -1.0, py::arg("time") = "C0",
      "Returns (estimate, certified upper bound).");
  m.def(
      "step",
      [](const ModeFn& x, const std::string& config) {
        const StepConfig c = step_config_from_json(parse_json_text(config));
        StepResult r;
        {
          py::gil_scoped_release release;
          r = step(x, c);
        }
        return std::tuple{r.y, r.g, r.h, to_json(r.report).dump()};
      },
      py::arg("x"), py::arg("config") = "{}", "Returns (y, g, h, report_json).");
  m.def(
      "iterate",
      [](const std::string& config, int stages) {
        const StepConfig c = step_config_from_json(parse_json_text(config));
        py::gil_scoped_release release;
        return to_json(iterate(c, stages)).dump();
      },
      py::arg("config") = "{}", py::arg("stages") = 4, "Returns the construction as JSON text.");
  m.def(
      "ode_crosscheck",
      [](const ModeFn& y, const ModeFn& g, double omega, const std::string& variant, double dt) {
        OdeOptions o;
        o.dt = dt;
        py::gil_scoped_release release;
        return ode_crosscheck(y, g, make_spec(omega, variant), o);
      },
      py::arg("y"), py::arg("g"), py::arg("omega") = 1.0, py::arg("variant") = "cubic_modified", py::arg("dt") = 1e-4);
  m.def(
      "integral_equation_check",
      [](const ModeFn& x, const ModeFn& f, const std::vector<double>& ts, double omega, const std::string& variant) {
        return integral_equation_check(x, f, make_spec(omega, variant), ts);
      },
      py::arg("x"), py::arg("f"), py::arg("ts"), py::arg("omega") = 1.0, py::arg("variant") = "cubic_modified");
  m.def(
      "cutoff",
      [](const std::string& kind, std::int64_t N, std::uint64_t seed) {
        return make_cutoff({cutoff_kind_from_string(kind), seed}, N);
      },
      py::arg("kind"), py::arg("N"), py::arg("seed") = 0);
  m.def(
      "cutoff_convergence",
      [](const std::string& construction, const std::vector<std::string>& families, const std::vector<std::int64_t>& Ns,
         int max_k) {
        const ConstructionState st = construction_from_json(parse_json_text(construction));
        std::vector<CutoffFamily> fams;
        for (const auto& f : families) fams.push_back({cutoff_kind_from_string(f), 0});
        ConvergenceOptions o;
        o.strict = false;
        o.max_k = max_k;
        py::gil_scoped_release release;
        return to_json(cutoff_convergence(st, fams, Ns, st.config.space, o)).dump();
      },
      py::arg("construction"), py::arg("families"), py::arg("Ns"), py::arg("max_k") = 4);
}
