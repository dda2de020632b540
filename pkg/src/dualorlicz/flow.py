"""Time integration of the normalised Gauss curvature flow on support functions.

The support function evolves by

    dh/dt = -f eta h K / (phi(h) G(grad-bar h)) + h,

with eta chosen so that the G dual volume is constant.  The default
integrator is linearly implicit Euler: the curvature term is linearised in
the second derivatives of h and solved implicitly, everything else is
explicit.  Explicit midpoint RK2 is available as ``scheme="rk2"``; it is
subject to a diffusive step limit of about 0.375 * spacing**2.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy import optimize
from scipy.sparse.linalg import spsolve

from .errors import ConvexityLoss, NotConvex, StepFailure
from .functionals import (
    FunctionalReport,
    J_rate_identity,
    dual_volume,
    functional_report,
)
from .geometry import SphericalGrid, SupportField, symmetrize
from .model import Case, ProblemSpec

logger = logging.getLogger(__name__)

SCHEMES = ("imex", "rk2")
RENORMALIZE = ("dual-volume", "none")


@dataclass(frozen=True)
class FlowConfig:
    dt_init: float = 1e-3
    dt_min: float = 1e-10
    dt_max: float = 0.05
    safety: float = 1.5  # dt multiplier after `grow_after` consecutive acceptances
    tol_conv: float = 1e-8
    max_steps: int = 200_000
    renormalize: str = "dual-volume"
    tol_J: float = 1e-10
    scheme: str = "imex"
    t_end: Optional[float] = None
    grow_after: int = 5

    def __post_init__(self):
        if not (0 < self.dt_min <= self.dt_init <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_init <= dt_max")
        if self.tol_conv <= 0:
            raise ValueError("tol_conv must be positive")
        if self.safety < 1:
            raise ValueError("safety factor must be >= 1")
        if self.renormalize not in RENORMALIZE:
            raise ValueError(f"renormalize must be one of {RENORMALIZE}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")
        if self.t_end is not None and self.t_end <= 0:
            raise ValueError("t_end must be positive")


@dataclass(frozen=True)
class Snapshot:
    """A field together with everything the flow and the trace need from it."""

    field: SupportField
    report: FunctionalReport
    drive: np.ndarray  # f eta h / (phi G): velocity = -drive / det b + h
    velocity: np.ndarray
    jprime: float
    holder_gap: float
    residual: float

    @property
    def speed(self) -> float:
        return float(np.max(np.abs(self.velocity)))


def _drive(field: SupportField, spec: ProblemSpec, eta_value: float) -> np.ndarray:
    phi = np.asarray(spec.weight.value(field.h))
    G = spec.density.on_boundary(field.points, field.rho)
    return spec.f * eta_value * field.h / (phi * G)


def velocity(field: SupportField, spec: ProblemSpec, eta: Optional[float] = None) -> np.ndarray:
    """dh/dt at every node; ``eta`` defaults to the dual-volume-preserving value."""
    field.check_convex()
    if eta is None:
        from .functionals import eta as eta_parts

        eta = eta_parts(field, spec).value
    return -_drive(field, spec, eta) / field.det_b + field.h


def snapshot(field: SupportField, spec: ProblemSpec) -> Snapshot:
    field.check_convex()
    rep = functional_report(field, spec)
    drive = _drive(field, spec, rep.eta)
    vel = -drive / field.det_b + field.h
    jprime, gap = J_rate_identity(field, spec)
    # |c phi G det b - f| / f with c = 1/eta
    residual = float(np.max(np.abs(field.h * field.det_b / drive - 1.0)))
    return Snapshot(field, rep, drive, vel, jprime, gap, residual)


@dataclass(frozen=True)
class Rejection:
    step: int
    t: float
    dt: float
    guard: str
    detail: str


@dataclass(frozen=True)
class FlowState:
    t: float
    step: int
    snap: Snapshot
    dt: float  # next trial step
    last_dt: float  # last accepted step (0 before the first)
    streak: int
    vg_ref: float
    rejections: tuple[Rejection, ...] = ()

    @property
    def field(self) -> SupportField:
        return self.snap.field

    @property
    def report(self) -> FunctionalReport:
        return self.snap.report


TRACE_COLUMNS = (
    "step", "t", "dt", "eta", "J", "Vg", "h_min", "h_max", "radius_min", "K_max", "residual",
    "radius_max", "grad_max", "holder_gap", "jprime",
)  # fmt: skip


@dataclass(frozen=True)
class TraceRecord:
    step: int
    t: float
    dt: float
    eta: float
    J: float
    Vg: float
    h_min: float
    h_max: float
    radius_min: float
    K_max: float
    residual: float
    radius_max: float
    grad_max: float
    holder_gap: float
    jprime: float

    @classmethod
    def from_state(cls, state: FlowState) -> "TraceRecord":
        s = state.snap
        fld = s.field
        radii = fld.radii
        return cls(
            step=state.step,
            t=state.t,
            dt=state.last_dt,
            eta=s.report.eta,
            J=s.report.J,
            Vg=s.report.Vg,
            h_min=float(fld.h.min()),
            h_max=float(fld.h.max()),
            radius_min=float(radii.min()),
            K_max=float(1.0 / fld.det_b.min()),
            residual=s.residual,
            radius_max=float(radii.max()),
            grad_max=float(np.abs(fld.dh).max()),
            holder_gap=s.holder_gap,
            jprime=s.jprime,
        )

    def row(self) -> list[str]:
        return [str(self.step)] + [format(float(getattr(self, c)), ".17g") for c in TRACE_COLUMNS[1:]]


@dataclass
class FlowTrace:
    """Accepted-step records plus the log of rejected trial steps."""

    case: Case
    vg_ref: float
    records: list[TraceRecord] = field(default_factory=list)
    rejections: list[Rejection] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def chunk(self, start: int, stop: int) -> "FlowTrace":
        return FlowTrace(self.case, self.vg_ref, self.records[start:stop])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.records:
                w.writerow(r.row())

    @classmethod
    def read_csv(cls, path, case: Case) -> "FlowTrace":
        records = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                vals = {}
                for c in TRACE_COLUMNS:
                    if c not in row or row[c] in (None, ""):
                        vals[c] = math.nan
                    else:
                        vals[c] = int(row[c]) if c == "step" else float(row[c])
                records.append(TraceRecord(**vals))
        vg_ref = records[0].Vg if records else math.nan
        return cls(case, vg_ref, records)


@dataclass(frozen=True)
class Verdict:
    status: str  # Converged | MaxSteps | TimeLimit | Failed
    steps: int
    t_final: float
    residual_final: float
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "steps": self.steps,
            "t_final": self.t_final,
            "residual_final": self.residual_final,
            "reason": self.reason,
        }


# ---------------------------------------------------------------------------
# stepping


def _implicit_operator(snap: Snapshot) -> sp.csr_matrix:
    """Linearisation of -drive / det b with respect to the second-order terms of h."""
    fld = snap.field
    g = fld.grid
    D1, D2 = g.diff_matrices
    K = 1.0 / fld.det_b
    coef = snap.drive * K * K
    if g.n == 2:
        return sp.diags(coef) @ D2
    lam1, lam2 = fld.radii[:, 0], fld.radii[:, 1]
    return sp.diags(coef * lam2) @ D2 + sp.diags(coef * lam1 * g.cot) @ D1


def _imex_update(snap: Snapshot, dt: float) -> np.ndarray:
    N = snap.field.grid.N
    M = sp.identity(N, format="csr") - dt * _implicit_operator(snap)
    return snap.field.h + spsolve(M.tocsc(), dt * snap.velocity)


def _rk2_update(snap: Snapshot, spec: ProblemSpec, dt: float) -> np.ndarray:
    h_mid = snap.field.h + 0.5 * dt * snap.velocity
    if np.any(~np.isfinite(h_mid)) or np.any(h_mid <= 0):
        raise _Reject("positivity", "midpoint support function non-positive")
    mid = SupportField(snap.field.grid, h_mid)
    radii = mid.radii
    if np.any(radii <= 0):
        i = int(np.argwhere(radii <= 0)[0][0])
        raise _Reject("convexity", f"midpoint radius {radii[i].min():.3g} at node {i}")
    mid_eta = functional_report(mid, spec).eta  # eta from the midpoint field
    v_mid = -_drive(mid, spec, mid_eta) / mid.det_b + mid.h
    return snap.field.h + dt * v_mid


class _Reject(Exception):
    def __init__(self, guard: str, detail: str):
        super().__init__(detail)
        self.guard = guard
        self.detail = detail


def _radii_raw(grid: SphericalGrid, h: np.ndarray) -> np.ndarray:
    d1, d2 = grid.diff(h)
    lam1 = d2 + h
    if grid.n == 2:
        return lam1[:, None]
    return np.stack([lam1, d1 * grid.cot + h], axis=-1)


def renormalize_scale(field: SupportField, spec: ProblemSpec, vg_ref: float) -> float:
    """Dilation factor s with dual volume of s K equal to ``vg_ref``."""
    vg = dual_volume(field, spec.density, spec.case)
    q = spec.density.scaling_exponent
    if q is not None and q != 0:
        return (vg_ref / vg) ** (1.0 / q)

    def gap(log_s):
        return math.log(dual_volume(field, spec.density, spec.case, scale=math.exp(log_s)) / vg_ref)

    lo, hi = -0.1, 0.1
    while gap(lo) * gap(hi) > 0:
        lo, hi = 2 * lo, 2 * hi
        if hi > 50:
            raise ArithmeticError("cannot bracket the dual-volume scale")
    return math.exp(optimize.brentq(gap, lo, hi, xtol=1e-14, rtol=1e-13))


def _candidate(state: FlowState, spec: ProblemSpec, config: FlowConfig, dt: float) -> Snapshot:
    snap = state.snap
    grid = snap.field.grid
    if config.scheme == "imex":
        h_new = _imex_update(snap, dt)
    else:
        h_new = _rk2_update(snap, spec, dt)
    if np.any(~np.isfinite(h_new)):
        raise _Reject("positivity", "non-finite support function")
    h_new = 0.5 * (h_new + h_new[grid.antipode])
    radii = _radii_raw(grid, h_new)
    if np.any(radii <= 0):
        i, j = np.argwhere(radii <= 0)[0]
        raise _Reject("convexity", f"radius {radii[i, j]:.3g} at node {i}")
    if np.any(h_new <= 0):
        i = int(np.argmin(h_new))
        raise _Reject("positivity", f"h = {h_new[i]:.3g} at node {i}")
    new_field = SupportField(grid, h_new)
    if config.renormalize == "dual-volume":
        s = renormalize_scale(new_field, spec, state.vg_ref)
        new_field = SupportField(grid, s * h_new)
    new = snapshot(new_field, spec)
    J0, J1 = snap.report.J, new.report.J
    slack = config.tol_J * (1.0 + abs(J0))
    wrong = (J1 - J0) if spec.case is Case.CASE1 else (J0 - J1)
    if wrong > slack:
        raise _Reject("J-monotonicity", f"J moved {wrong:.3g} the wrong way (slack {slack:.3g})")
    return new


def step(state: FlowState, spec: ProblemSpec, config: FlowConfig) -> FlowState:
    """Advance one accepted step, halving dt on every guard rejection.

    Guards, in order: convexity, positivity, J monotonicity.  Raises
    StepFailure once dt drops below ``dt_min``.
    """
    dt = state.dt
    if config.t_end is not None:
        dt = min(dt, config.t_end - state.t)
    rejections = []
    while True:
        try:
            new = _candidate(state, spec, config, dt)
            break
        except _Reject as rej:
            rejections.append(Rejection(state.step + 1, state.t, dt, rej.guard, rej.detail))
            logger.debug("rejected step %d at dt=%.3g: %s", state.step + 1, dt, rej.detail)
            dt *= 0.5
            if dt < config.dt_min:
                err = StepFailure(rej.guard, dt, rej.detail)
                err.rejections = tuple(rejections)
                raise err from None
    streak = 0 if rejections else state.streak + 1
    # a step clipped to t_end does not shrink the next trial step
    next_dt = dt if rejections else state.dt
    if streak >= config.grow_after:
        next_dt = min(next_dt * config.safety, config.dt_max)
        streak = 0
    return FlowState(
        t=state.t + dt,
        step=state.step + 1,
        snap=new,
        dt=next_dt,
        last_dt=dt,
        streak=streak,
        vg_ref=state.vg_ref,
        rejections=tuple(rejections),
    )


def initial_state(spec: ProblemSpec, initial: SupportField, config: FlowConfig) -> FlowState:
    fld = symmetrize(initial)
    snap = snapshot(fld, spec)
    return FlowState(t=0.0, step=0, snap=snap, dt=config.dt_init, last_dt=0.0, streak=0, vg_ref=snap.report.Vg)


def is_converged(state: FlowState, config: FlowConfig) -> bool:
    return state.snap.speed <= config.tol_conv * float(np.max(np.abs(state.field.h)))


def run(
    spec: ProblemSpec,
    initial: SupportField,
    config: FlowConfig,
    on_step: Optional[Callable[[FlowState], None]] = None,
) -> tuple[Optional[FlowState], FlowTrace, Verdict]:
    """Iterate until stationary, out of steps/time, or a step fails.

    Failures are reported in the verdict, never raised.
    """
    try:
        state = initial_state(spec, initial, config)
    except ConvexityLoss as exc:
        trace = FlowTrace(spec.case, math.nan)
        return None, trace, Verdict("Failed", 0, 0.0, math.nan, f"ConvexityLoss: {exc}")
    trace = FlowTrace(spec.case, state.vg_ref, [TraceRecord.from_state(state)])
    if on_step:
        on_step(state)
    while True:
        if is_converged(state, config):
            status, reason = "Converged", ""
            break
        if config.t_end is not None and state.t >= config.t_end * (1 - 1e-12):
            status, reason = "TimeLimit", ""
            break
        if state.step >= config.max_steps:
            status, reason = "MaxSteps", ""
            break
        try:
            state = step(state, spec, config)
        except StepFailure as exc:
            trace.rejections.extend(getattr(exc, "rejections", ()))
            status, reason = "Failed", f"StepFailure: {exc}"
            break
        except (ConvexityLoss, ArithmeticError) as exc:
            status, reason = "Failed", f"{type(exc).__name__}: {exc}"
            break
        trace.rejections.extend(state.rejections)
        trace.records.append(TraceRecord.from_state(state))
        if on_step:
            on_step(state)
    verdict = Verdict(status, state.step, state.t, state.snap.residual, reason)
    return state, trace, verdict


# ---------------------------------------------------------------------------
# initial shapes


@dataclass(frozen=True)
class Ball:
    r: float = 1.0


@dataclass(frozen=True)
class Ellipse:
    """Planar ellipse with semi-axes a (along x) and b (along y)."""

    a: float
    b: float


@dataclass(frozen=True)
class Ellipsoid:
    """Ellipsoid of revolution: equatorial semi-axis a, polar semi-axis c."""

    a: float
    c: float


@dataclass(frozen=True)
class CosinePerturbation:
    """h = r (1 + sum_k eps_k cos(2 k theta)), k = 1, 2, ..."""

    eps: Sequence[float]
    r: float = 1.0


Shape = Union[Ball, Ellipse, Ellipsoid, CosinePerturbation]


def make_initial(shape: Shape, grid: SphericalGrid) -> SupportField:
    """Sample a closed-form even support function and validate uniform convexity."""
    th = grid.theta
    params = [v for v in vars(shape).values() if isinstance(v, (int, float))]
    if isinstance(shape, CosinePerturbation):
        params = [shape.r]
    if any(p <= 0 for p in params):
        raise ValueError(f"shape parameters must be positive: {shape}")
    if isinstance(shape, Ball):
        h = np.full(grid.N, float(shape.r))
    elif isinstance(shape, Ellipse):
        if grid.n != 2:
            raise ValueError("ellipse needs n = 2; use Ellipsoid for n = 3")
        h = np.sqrt(shape.a**2 * np.cos(th) ** 2 + shape.b**2 * np.sin(th) ** 2)
    elif isinstance(shape, Ellipsoid):
        if grid.n != 3:
            raise ValueError("ellipsoid of revolution needs n = 3")
        h = np.sqrt(shape.a**2 * np.sin(th) ** 2 + shape.c**2 * np.cos(th) ** 2)
    elif isinstance(shape, CosinePerturbation):
        h = np.ones(grid.N)
        for k, e in enumerate(shape.eps, start=1):
            h = h + e * np.cos(2 * k * th)
        h = shape.r * h
    else:
        raise TypeError(f"unknown shape {shape!r}")
    if np.any(h <= 0):
        i = int(np.argmin(h))
        raise NotConvex(i, float(h[i]))
    h = 0.5 * (h + h[grid.antipode])
    radii = _radii_raw(grid, h)
    if np.any(radii <= 0):
        i, j = np.argwhere(radii <= 0)[0]
        raise NotConvex(int(i), float(radii[i, j]))
    return SupportField(grid, h)


def with_config(config: FlowConfig, **changes) -> FlowConfig:
    return replace(config, **changes)
