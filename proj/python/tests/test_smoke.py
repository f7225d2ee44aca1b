import cmath
import math

import pytest

# Needs the package installed (pip install --no-build-isolation .).
cf = pytest.importorskip("cascade_forge")


def test_sigma_matches_definition():
    assert cf.sigma(3, 5, 3, 1) == 8
    assert cf.sigma(10, 19, 10, 1) == 162
    assert cf.sigma(7, 2, 2, 7) == 0


def test_seed_is_normalized_and_vanishes_at_zero():
    x = cf.seed()
    assert x.support() == [0]
    assert x(0.0) == {0: 0j}
    assert abs(x(1.0)[0]) == pytest.approx(1.0, abs=1e-12)
    est, bound = cf.norm(x, "l2s", -1.0)
    assert est == pytest.approx(1.0, abs=1e-9)
    assert bound >= est


def test_flatfn_terms_round_trip_through_json():
    f = cf.FlatFn([(1 + 2j, -1, (1, 2), 7), (0.5, 2, (2, 3), -3)])
    g = cf.FlatFn.from_json(f.to_json())
    assert g == f
    t = 0.4
    expect = (1 + 2j) / t * math.exp(-0.5 / t) * cmath.exp(7j * t) + 0.5 * t * t * math.exp(-2 / 3 / t) * cmath.exp(-3j * t)
    assert f(t) == pytest.approx(expect, rel=1e-12)


def test_step_gives_exact_residual():
    y, g, h, report = cf.step(cf.seed(), {"M": 1, "epsilon": 0.1})
    assert report["bounds_met"]
    diff = cf.residual(y) - g
    for n in diff.support():
        for coeff, *_ in diff[n].terms():
            assert abs(coeff) <= 1e-10
    assert all(abs(n) >= report["M"] for n in g.support())


def test_ode_agrees_with_symbolic_step():
    y, g, _, _ = cf.step(cf.seed(), {"M": 1, "epsilon": 0.5, "component_norms": False})
    assert cf.ode_crosscheck(y, g) <= 1e-6


def test_iterate_and_cutoff_report():
    st = cf.iterate({"M": 1, "growth": 0, "prune_budget": 0.25, "component_norms": False}, 3)
    assert len(st["stages"]) == 3
    rep = cf.cutoff_convergence(st, ["sharp", "fejer"], [32, 64], max_k=2)
    assert len(rep["cells"]) == 2 * 2 * 2


def test_errors_map_to_python_exceptions():
    with pytest.raises(cf.ValidationError):
        cf.residual(cf.seed(), omega=0.0)
    with pytest.raises(cf.ParseError):
        cf.FlatFn.from_json('{"terms": {}}')
    with pytest.raises(cf.BoundUnreachable):
        cf.step(cf.seed(), {"M": 1, "space": {"kind": "l2s", "param": 1.0}, "max_escalations": 4, "component_norms": False})
    assert issubclass(cf.BoundUnreachable, cf.Error)
