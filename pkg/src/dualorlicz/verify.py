"""Stationary residual, recovery of the constant c, and trace audits."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import EmptyTrace
from .flow import FlowTrace, TraceRecord
from .functionals import eta as eta_parts
from .geometry import SphericalGrid, SupportField
from .model import Case, PowerWeight, ProblemSpec, RadialPowerDensity


@dataclass(frozen=True, eq=False)
class ResidualReport:
    """Pointwise residual of c phi(h) G det b = f, normalised by f.

    ``c`` is the constant used for ``residual``/``residual_sup``/``residual_l2``
    (1/eta unless supplied).  The ``*_ls`` entries use the least-squares c.
    """

    c: float
    c_from_eta: float
    c_least_squares: float
    residual_sup: float
    residual_l2: float
    residual_sup_ls: float
    residual_l2_ls: float
    residual: np.ndarray = field(repr=False)

    def to_dict(self, include_nodes: bool = False) -> dict:
        d = asdict(self)
        if include_nodes:
            d["residual"] = self.residual.tolist()
        else:
            d.pop("residual")
        return d

    def to_json(self, include_nodes: bool = False) -> str:
        return json.dumps(self.to_dict(include_nodes))


def _ratio(field: SupportField, spec: ProblemSpec) -> np.ndarray:
    """g / f with g = phi(h) G det b."""
    field.check_convex()
    phi = np.asarray(spec.weight.value(field.h))
    G = spec.density.on_boundary(field.points, field.rho)
    return phi * G * field.det_b / spec.f


def _norms(grid: SphericalGrid, r: np.ndarray) -> tuple[float, float]:
    sup = float(np.max(np.abs(r)))
    l2 = math.sqrt(grid.integrate(r * r) / grid.integrate(np.ones_like(r)))
    return sup, l2


def residual(field: SupportField, spec: ProblemSpec, c: Optional[float] = None) -> ResidualReport:
    """Evaluate the stationary equation on ``field``.

    The least-squares constant minimises the weighted L2 norm of the
    f-normalised residual, ``sum w (c g/f - 1)^2``.
    """
    grid = field.grid
    ratio = _ratio(field, spec)
    c_eta = 1.0 / eta_parts(field, spec).value
    c_ls = grid.integrate(ratio) / grid.integrate(ratio * ratio)
    c_used = c_eta if c is None else float(c)
    r = c_used * ratio - 1.0
    sup, l2 = _norms(grid, r)
    sup_ls, l2_ls = _norms(grid, c_ls * ratio - 1.0)
    return ResidualReport(c_used, c_eta, c_ls, sup, l2, sup_ls, l2_ls, r)


# ---------------------------------------------------------------------------
# audit


@dataclass(frozen=True)
class AuditTolerances:
    vg_rel: float = 1e-9
    J_slack: float = 1e-10
    bound_lo: float = 1e-3
    bound_hi: float = 1e3
    holder: float = 1e-12


@dataclass(frozen=True)
class CheckResult:
    """One invariant over a trace; ``kind`` says whether ``limit`` is a lower or upper bound."""

    name: str
    passed: bool
    kind: str
    limit: float
    worst_step: Optional[int]
    worst_value: float
    violations: tuple[tuple[int, float], ...] = ()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["violations"] = [list(v) for v in self.violations]
        return d


def _worse(kind: str, a: float, b: float) -> bool:
    """True when value a is strictly worse than b."""
    if math.isnan(b):
        return not math.isnan(a)
    return a < b if kind == "lower" else a > b


def _check(name: str, kind: str, limit: float, steps, values) -> CheckResult:
    worst_step, worst = None, math.nan
    bad = []
    for s, v in zip(steps, values):
        v = float(v)
        if worst_step is None or _worse(kind, v, worst):
            worst_step, worst = int(s), v
        ok = v >= limit if kind == "lower" else v <= limit
        if not ok:  # NaN counts as a violation
            bad.append((int(s), v))
    return CheckResult(name, not bad, kind, limit, worst_step, worst, tuple(bad))


def _merge_check(a: CheckResult, b: CheckResult) -> CheckResult:
    if a.worst_step is None:
        ws, wv = b.worst_step, b.worst_value
    elif b.worst_step is None:
        ws, wv = a.worst_step, a.worst_value
    elif _worse(a.kind, b.worst_value, a.worst_value) or (
        b.worst_value == a.worst_value and b.worst_step < a.worst_step
    ):
        ws, wv = b.worst_step, b.worst_value
    else:
        ws, wv = a.worst_step, a.worst_value
    viol = tuple(sorted(dict(a.violations + b.violations).items()))
    return CheckResult(a.name, a.passed and b.passed, a.kind, a.limit, ws, wv, viol)


@dataclass(frozen=True)
class AuditReport:
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def merge(self, other: "AuditReport") -> "AuditReport":
        """Combine audits of two overlapping pieces of one trace."""
        names = [c.name for c in self.checks]
        if names != [c.name for c in other.checks]:
            raise ValueError("audits cover different checks")
        return AuditReport(tuple(_merge_check(a, b) for a, b in zip(self.checks, other.checks)))

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def audit(trace: FlowTrace, spec_or_case, tolerances: Optional[AuditTolerances] = None) -> AuditReport:
    """Check every monitored invariant over all records of ``trace``.

    Pairwise checks (J direction, increasing time) use consecutive records,
    so pieces of a chunked trace must overlap by one record.
    """
    tol = tolerances or AuditTolerances()
    recs: list[TraceRecord] = trace.records
    if not recs:
        raise EmptyTrace("cannot audit an empty trace")
    case = spec_or_case.case if isinstance(spec_or_case, ProblemSpec) else Case(spec_or_case)
    col = lambda name: np.array([getattr(r, name) for r in recs], dtype=float)  # noqa: E731
    steps = [r.step for r in recs]
    vg_ref = trace.vg_ref
    J = col("J")
    t = col("t")
    sign = 1.0 if case is Case.CASE1 else -1.0
    wrong = sign * np.diff(J) / (1.0 + np.abs(J[:-1]))
    lo, hi = tol.bound_lo, tol.bound_hi
    checks = (
        _check("dual_volume", "upper", tol.vg_rel, steps, np.abs(col("Vg") - vg_ref) / abs(vg_ref)),
        _check("J_monotone", "upper", tol.J_slack, steps[1:], wrong),
        _check("time_increasing", "lower", 0.0, steps[1:], np.where(np.diff(t) > 0, 1.0, -1.0)),
        _check("h_min", "lower", lo, steps, col("h_min")),
        _check("h_max", "upper", hi, steps, col("h_max")),
        _check("eta_min", "lower", lo, steps, col("eta")),
        _check("eta_max", "upper", hi, steps, col("eta")),
        _check("grad_max", "upper", hi, steps, col("grad_max")),
        _check("K_max", "upper", hi, steps, col("K_max")),
        _check("curvature_min", "lower", lo, steps, 1.0 / col("radius_max")),
        _check("holder_gap", "lower", -tol.holder, steps, col("holder_gap")),
    )
    return AuditReport(checks)


# ---------------------------------------------------------------------------
# scaling harness


@dataclass(frozen=True)
class ConsistencyEntry:
    n: int
    r: float
    c_expected: float
    c_from_eta: float
    residual_sup: float


@dataclass(frozen=True)
class ConsistencyReport:
    passed: bool
    fixed_point_residual: dict
    entries: tuple[ConsistencyEntry, ...]
    tol: float

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "fixed_point_residual": self.fixed_point_residual,
            "entries": [asdict(e) for e in self.entries],
            "tol": self.tol,
        }


def cross_dimension_consistency(
    spec: ProblemSpec, radii=(0.5, 1.0, 2.0), tol: float = 1e-12
) -> ConsistencyReport:
    """Ball residuals in n = 2 and n = 3 for a power-law problem with constant f.

    At every radius r the residual is evaluated with c = f0 r^(p - q); the unit
    ball is additionally checked as a fixed point with c = 1/eta.
    """
    if not isinstance(spec.weight, PowerWeight) or not isinstance(spec.density, RadialPowerDensity):
        raise ValueError("cross-dimension check needs a power-law problem")
    f = np.asarray(spec.f)
    if not np.all(f == f.flat[0]):
        raise ValueError("cross-dimension check needs constant f")
    f0 = float(f.flat[0])
    p, q = spec.weight.p, spec.density.q
    N = spec.grid.N + spec.grid.N % 2
    fixed, entries = {}, []
    ok = True
    for n in (2, 3):
        grid = SphericalGrid(n, N)
        sub = ProblemSpec.power_law(grid, p, q, f=f0)
        rep = residual(SupportField(grid, np.ones(N)), sub)
        fixed[n] = rep.residual_sup
        ok &= rep.residual_sup <= tol
        for r in radii:
            c = f0 * r ** (p - q)
            fld = SupportField(grid, np.full(N, float(r)))
            rr = residual(fld, sub, c=c)
            entries.append(ConsistencyEntry(n, float(r), c, rr.c_from_eta, rr.residual_sup))
            ok &= rr.residual_sup <= tol
    return ConsistencyReport(bool(ok), fixed, tuple(entries), tol)
