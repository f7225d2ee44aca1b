"""Python front end for the cascade construction core."""

import json

from ._core import (
    AssertionFailure,
    BoundUnreachable,
    Error,
    FlatFn,
    FlatnessViolation,
    InfeasibleSupport,
    ModeFn,
    ParseError,
    QuadratureNonConvergence,
    ValidationError,
    VariantMismatch,
    cutoff,
    integral_equation_check,
    nonlinearity,
    norm,
    ode_crosscheck,
    residual,
    seed,
    sigma,
)
from . import _core

__all__ = [
    "AssertionFailure",
    "BoundUnreachable",
    "Error",
    "FlatFn",
    "FlatnessViolation",
    "InfeasibleSupport",
    "ModeFn",
    "ParseError",
    "QuadratureNonConvergence",
    "ValidationError",
    "VariantMismatch",
    "cutoff",
    "cutoff_convergence",
    "integral_equation_check",
    "iterate",
    "nonlinearity",
    "norm",
    "ode_crosscheck",
    "residual",
    "seed",
    "sigma",
    "step",
]


def step(x, config=None):
    """One correction step. Returns (y, g, h, report) with report as a dict."""
    y, g, h, report = _core.step(x, json.dumps(config or {}))
    return y, g, h, json.loads(report)


def iterate(config=None, stages=4):
    """Multi-stage construction as a dict (same layout as the CLI manifest)."""
    return json.loads(_core.iterate(json.dumps(config or {}), stages))


def cutoff_convergence(construction, families, Ns, max_k=4):
    text = construction if isinstance(construction, str) else json.dumps(construction)
    return json.loads(_core.cutoff_convergence(text, list(families), list(Ns), max_k))
