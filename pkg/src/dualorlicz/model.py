"""Structural data of the problem: the Orlicz weight, the dual density and f.

The weight ``phi`` enters the equation as ``phi(h)``; ``Phi`` is the
antiderivative of ``1/phi`` normalised so that it is finite (from 0 in
Case1, to infinity in Case2).  The dual density ``G`` is an even positive
function on R^n minus the origin.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import DomainError, NeitherCase, QuadratureFailure, TailUnavailable
from .geometry import SphericalGrid

logger = logging.getLogger(__name__)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)
_GL_NODES_LO, _GL_WEIGHTS_LO = np.polynomial.legendre.leggauss(12)


class Case(enum.Enum):
    """Integrability regime of (phi, G)."""

    CASE1 = 1
    CASE2 = 2

    def __str__(self) -> str:
        return f"Case{self.value}"


# ---------------------------------------------------------------------------
# weights


class OrliczWeight:
    """Positive weight phi on (0, inf) with its antiderivative Phi."""

    kind: str = "abstract"

    @property
    def case_tag(self) -> Optional[Case]:
        raise NotImplementedError

    @property
    def integrable_at_zero(self) -> bool:
        """Whether the integral of 1/phi over (0, 1] is finite."""
        raise NotImplementedError

    @property
    def integrable_at_infinity(self) -> bool:
        """Whether the integral of 1/phi over [1, inf) is finite."""
        raise NotImplementedError

    def value(self, s):
        raise NotImplementedError

    def antiderivative(self, s):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _positive_array(s, what: str = "s"):
    arr = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr <= 0.0):
        raise DomainError(f"{what} must be positive and finite")
    return arr


def _maybe_scalar(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


@dataclass(frozen=True)
class PowerWeight(OrliczWeight):
    """phi(s) = s**(1 - p)."""

    p: float
    kind: str = field(default="power", init=False)

    @property
    def integrable_at_zero(self) -> bool:
        return self.p > 0

    @property
    def integrable_at_infinity(self) -> bool:
        return self.p < 0

    @property
    def case_tag(self) -> Optional[Case]:
        if self.p > 0:
            return Case.CASE1
        if self.p < 0:
            return Case.CASE2
        return None

    def value(self, s):
        arr = _positive_array(s)
        return _maybe_scalar(arr ** (1.0 - self.p))

    def antiderivative(self, s):
        arr = _positive_array(s)
        if self.p > 0:
            out = arr**self.p / self.p
        elif self.p < 0:
            out = arr**self.p / (-self.p)
        else:
            raise QuadratureFailure("p = 0: 1/phi = 1/s is integrable neither at 0 nor at infinity")
        return _maybe_scalar(out)

    def to_dict(self) -> dict:
        return {"kind": "power", "p": self.p}


def _panel_decay_exponent(panels: np.ndarray) -> float:
    """Average exponent a in panels[k] ~ 2**(-a k) over the trailing panels."""
    tail = panels[-10:]
    if np.any(tail <= 0):
        return math.inf
    return float(np.mean(np.log2(tail[:-1] / tail[1:])))


class CustomWeight(OrliczWeight):
    """Weight given by a positive callable, with the case declared by the caller.

    The declaration is checked numerically by dyadic panel sums of 1/phi over
    [2**-k, 1] and [1, 2**k]; it is rejected only when the panel decay
    clearly contradicts it.
    """

    kind = "custom"

    def __init__(
        self,
        func: Callable,
        case: Case,
        domain: tuple[float, float] = (0.0, math.inf),
        rtol: float = 1e-10,
        cutoff: float = 1e-300,
        max_panels: int = 2000,
        label: str = "",
    ):
        self.func = func
        self._case = Case(case)
        self.domain = (float(domain[0]), float(domain[1]))
        self.rtol = rtol
        self.cutoff = cutoff
        self.max_panels = max_panels
        self.label = label
        self._check_declared_case()

    def _recip(self, s):
        return 1.0 / self.func(s)

    def _panels(self, direction: int, count: int = 40) -> Optional[np.ndarray]:
        lo_dom, hi_dom = self.domain
        vals = []
        for k in range(count):
            if direction < 0:
                a, b = 2.0 ** (-k - 1), 2.0 ** (-k)
            else:
                a, b = 2.0**k, 2.0 ** (k + 1)
            if a <= lo_dom or b > hi_dom:
                return None
            vals.append(integrate.quad(self._recip, a, b, epsrel=1e-8, limit=200)[0])
        return np.array(vals)

    def _check_declared_case(self) -> None:
        need_zero = self._case is Case.CASE1
        for direction, wanted, clause in (
            (-1, True if need_zero else None, "int_0^1 ds/phi < inf"),
            (+1, self._case is Case.CASE2, "int_1^inf ds/phi " + ("< inf" if self._case is Case.CASE2 else "= inf")),
        ):
            if wanted is None:
                continue
            panels = self._panels(direction)
            if panels is None:
                logger.info("weight %s: domain too short to verify clause %s", self.label, clause)
                continue
            alpha = _panel_decay_exponent(panels)
            if alpha >= 0.05:
                finite = True
            elif alpha <= 0.005:
                finite = False
            else:
                logger.info("weight %s: clause %s numerically ambiguous (decay %.3g)", self.label, clause, alpha)
                continue
            if finite != wanted:
                raise NeitherCase(
                    f"weight {self.label or 'custom'} declared {self._case} but clause '{clause}' fails "
                    f"numerically (panel decay exponent {alpha:.3g})",
                    clause=clause,
                )

    @property
    def case_tag(self) -> Case:
        return self._case

    @property
    def integrable_at_zero(self) -> bool:
        return self._case is Case.CASE1

    @property
    def integrable_at_infinity(self) -> bool:
        return self._case is Case.CASE2

    def _check_domain(self, arr: np.ndarray) -> None:
        lo, hi = self.domain
        if np.any(arr <= 0) or np.any(arr < lo) or np.any(arr > hi):
            raise DomainError(f"s outside weight domain {self.domain}")

    def value(self, s):
        arr = np.asarray(s, dtype=float)
        self._check_domain(arr)
        out = np.asarray(self.func(arr), dtype=float)
        if np.any(out <= 0) or np.any(~np.isfinite(out)):
            raise DomainError("custom weight returned a non-positive value")
        return _maybe_scalar(out)

    def _anchor(self, s: float) -> float:
        """Integral of 1/phi from 0 to s (Case1) or from s to infinity (Case2)."""
        total = 0.0
        prev = None
        for k in range(self.max_panels):
            if self._case is Case.CASE1:
                a, b = s * 2.0 ** (-k - 1), s * 2.0 ** (-k)
                if a < max(self.cutoff, self.domain[0]):
                    break
            else:
                a, b = s * 2.0**k, s * 2.0 ** (k + 1)
                if not math.isfinite(b) or b > self.domain[1]:
                    break
            val, err = integrate.quad(self._recip, a, b, epsrel=self.rtol * 0.1, limit=200)
            total += val
            if prev is not None and prev > 0:
                r = val / prev
                if r < 1.0:
                    remainder = val * r / (1.0 - r)
                    if remainder <= self.rtol * total:
                        return total + remainder
            prev = val
        raise QuadratureFailure(
            f"antiderivative of 1/phi did not converge at s={s:g}; phi may violate {self._case}"
        )

    def _segment(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        hi = half * (self._recip(nodes) @ _GL_WEIGHTS)
        nodes_lo = mid[:, None] + half[:, None] * _GL_NODES_LO[None, :]
        lo = half * (self._recip(nodes_lo) @ _GL_WEIGHTS_LO)
        bad = np.abs(hi - lo) > self.rtol * np.maximum(np.abs(hi), 1e-300)
        for i in np.flatnonzero(bad):
            hi[i] = integrate.quad(self._recip, a[i], b[i], epsrel=self.rtol * 0.1, limit=200)[0]
        return hi

    def antiderivative(self, s):
        arr = _positive_array(s)
        flat = arr.ravel()
        order = np.argsort(flat, kind="stable")
        srt = flat[order]
        if self._case is Case.CASE1:
            base = self._anchor(float(srt[0]))
            steps = self._segment(srt[:-1], srt[1:])
            cum = base + np.concatenate([[0.0], np.cumsum(steps)])
        else:
            base = self._anchor(float(srt[-1]))
            steps = self._segment(srt[:-1], srt[1:])
            cum = base + np.concatenate([np.cumsum(steps[::-1])[::-1], [0.0]])
        out = np.empty_like(flat)
        out[order] = cum
        return _maybe_scalar(out.reshape(arr.shape))

    def to_dict(self) -> dict:
        return {"kind": "custom", "case": str(self._case), "label": self.label}


def phi_eval(weight: OrliczWeight, s):
    """phi(s); raises DomainError for s <= 0 or outside the weight's domain."""
    return weight.value(s)


def Phi_eval(weight: OrliczWeight, s):  # noqa: N802
    """Antiderivative of 1/phi, vanishing at 0 (Case1) or at infinity (Case2)."""
    return weight.antiderivative(s)


# ---------------------------------------------------------------------------
# densities


def _norm(y: np.ndarray) -> np.ndarray:
    r = np.sqrt(np.sum(np.asarray(y, dtype=float) ** 2, axis=-1))
    if np.any(r == 0.0):
        raise DomainError("dual density is undefined at the origin")
    return r


class DualDensity:
    """Even positive density G on R^n minus the origin.

    ``finite_inside`` / ``finite_outside`` record whether the integral of G
    over the unit ball / its complement is finite.
    """

    kind: str = "abstract"
    n: int
    finite_inside: bool
    finite_outside: bool

    @property
    def has_tail(self) -> bool:
        return False

    @property
    def scaling_exponent(self) -> Optional[float]:
        """q when the dual volume is homogeneous of degree q under dilation."""
        return None

    def __call__(self, y):
        raise NotImplementedError

    def on_boundary(self, points, rho):
        """G at boundary points whose norms ``rho`` are already known."""
        return np.asarray(self(points))

    def radial_integral(self, u, r_lo, r_hi):
        """Integral of G(r u) r**(n-1) over [r_lo, r_hi]; r_hi may be inf."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class RadialPowerDensity(DualDensity):
    """G(y) = |y|**(q - n)."""

    q: float
    n: int
    kind: str = field(default="radial_power", init=False)

    @property
    def finite_inside(self) -> bool:
        return self.q > 0

    @property
    def finite_outside(self) -> bool:
        return self.q < 0

    @property
    def has_tail(self) -> bool:
        return self.q < 0

    @property
    def scaling_exponent(self) -> float:
        return self.q

    def __call__(self, y):
        return _maybe_scalar(_norm(y) ** (self.q - self.n))

    def on_boundary(self, points, rho):
        return np.asarray(rho, dtype=float) ** (self.q - self.n)

    def radial_integral(self, u, r_lo, r_hi):
        lo = np.asarray(r_lo, dtype=float)
        hi = np.asarray(r_hi, dtype=float)
        q = self.q
        if q == 0.0:
            if np.any(lo <= 0) or np.any(np.isinf(hi)):
                raise TailUnavailable("q = 0: radial integral of 1/r diverges")
            return _maybe_scalar(np.log(hi / lo))
        if np.any(np.isinf(hi)) and q > 0:
            raise TailUnavailable(f"q = {q} > 0: tail integral diverges")
        if np.any(lo == 0) and q < 0:
            raise DomainError(f"q = {q} < 0: integral from the origin diverges")
        # inf**q == 0 for q < 0 and 0**q == 0 for q > 0
        out = (hi**q - lo**q) / q
        out = np.where(lo == hi, 0.0, out)
        return _maybe_scalar(out)

    def to_dict(self) -> dict:
        return {"kind": "radial_power", "q": self.q}


class RadialProfileDensity(DualDensity):
    """G(y) = g(|y|), optionally with ``antiderivative(r) = int_0^r g(s) s**(n-1) ds``
    and ``tail(r) = int_r^inf g(s) s**(n-1) ds``."""

    kind = "radial_profile"

    def __init__(
        self,
        g: Callable,
        n: int,
        finite_inside: bool,
        finite_outside: bool,
        antiderivative: Optional[Callable] = None,
        tail: Optional[Callable] = None,
        label: str = "",
    ):
        self.g = g
        self.n = int(n)
        self.finite_inside = bool(finite_inside)
        self.finite_outside = bool(finite_outside)
        self.antiderivative = antiderivative
        self.tail = tail
        self.label = label

    @property
    def has_tail(self) -> bool:
        return self.tail is not None

    def __call__(self, y):
        return _maybe_scalar(np.asarray(self.g(_norm(y)), dtype=float))

    def on_boundary(self, points, rho):
        return np.asarray(self.g(np.asarray(rho, dtype=float)), dtype=float)

    def _quad(self, a: float, b: float) -> float:
        val, err = integrate.quad(lambda r: self.g(r) * r ** (self.n - 1), a, b, epsrel=1e-12, limit=200)
        return val

    def radial_integral(self, u, r_lo, r_hi):
        lo, hi = np.broadcast_arrays(np.asarray(r_lo, dtype=float), np.asarray(r_hi, dtype=float))
        out = np.zeros(lo.shape)
        inf = np.isinf(hi)
        if np.any(inf):
            if self.tail is None:
                raise TailUnavailable("radial profile has no tail antiderivative")
            out[inf] = self.tail(lo[inf])
        fin = ~inf
        if np.any(fin):
            if self.antiderivative is not None:
                out[fin] = self.antiderivative(hi[fin]) - self.antiderivative(lo[fin])
            else:
                out[fin] = [self._quad(a, b) for a, b in zip(lo[fin], hi[fin])]
        out = np.where(lo == hi, 0.0, out)
        return _maybe_scalar(out)

    def to_dict(self) -> dict:
        return {"kind": "radial_profile", "label": self.label}


class CallableDensity(DualDensity):
    """General even density ``func(y)`` evaluated on arrays of shape (..., n).

    For the axisymmetric n = 3 reduction ``func`` must be invariant under
    rotations about the third axis.  ``tail(u, r)`` gives the radial
    integral from r to infinity along direction u.
    """

    kind = "callable"

    def __init__(
        self,
        func: Callable,
        n: int,
        finite_inside: bool,
        finite_outside: bool,
        tail: Optional[Callable] = None,
        label: str = "",
    ):
        self.func = func
        self.n = int(n)
        self.finite_inside = bool(finite_inside)
        self.finite_outside = bool(finite_outside)
        self.tail = tail
        self.label = label

    @property
    def has_tail(self) -> bool:
        return self.tail is not None

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        _norm(y)
        out = np.asarray(self.func(y), dtype=float)
        if np.any(out <= 0):
            raise DomainError("dual density returned a non-positive value")
        return _maybe_scalar(out)

    def _ray(self, u: np.ndarray, a: float, b: float) -> float:
        def integrand(r):
            return float(self.func(r * u)) * r ** (self.n - 1)

        if math.isinf(b):
            res = integrate.quad(integrand, a, b, epsrel=1e-10, limit=400, full_output=True)
            val, err = res[0], res[1]
            if len(res) > 3 or err > 1e-8 * max(abs(val), 1e-300):
                raise TailUnavailable(f"cannot certify tail integral from r={a:g}")
            return val
        return integrate.quad(integrand, a, b, epsrel=1e-12, limit=200)[0]

    def radial_integral(self, u, r_lo, r_hi):
        u = np.asarray(u, dtype=float)
        lo, hi = np.broadcast_arrays(np.asarray(r_lo, dtype=float), np.asarray(r_hi, dtype=float))
        uu = np.broadcast_to(u, lo.shape + (self.n,))
        out = np.zeros(lo.shape)
        for idx in np.ndindex(lo.shape):
            a, b = float(lo[idx]), float(hi[idx])
            if a == b:
                continue
            if math.isinf(b) and self.tail is not None:
                out[idx] = self.tail(uu[idx], a)
            else:
                out[idx] = self._ray(uu[idx], a, b)
        return _maybe_scalar(out)

    def to_dict(self) -> dict:
        return {"kind": "callable", "label": self.label}


def density_eval(density: DualDensity, y):
    """G(y); raises DomainError at y = 0."""
    return density(y)


def radial_cell_integral(density: DualDensity, direction, r_lo, r_hi):
    """Integral of G(r u) r**(n-1) dr over [r_lo, r_hi] (r_hi may be ``inf``)."""
    lo = np.asarray(r_lo, dtype=float)
    hi = np.asarray(r_hi, dtype=float)
    if np.any(lo < 0) or np.any(hi < lo):
        raise DomainError("need 0 <= r_lo <= r_hi")
    return density.radial_integral(direction, lo, hi)


# ---------------------------------------------------------------------------
# classification and problem data


def classify_case(weight: OrliczWeight, density: DualDensity) -> Case:
    """Return the integrability regime, or raise NeitherCase naming the failing clause."""
    case1 = [
        ("int_0^1 ds/phi < inf", weight.integrable_at_zero),
        ("int_1^inf ds/phi = inf", not weight.integrable_at_infinity),
        ("int_B1 G < inf", density.finite_inside),
    ]
    case2 = [
        ("int_1^inf ds/phi < inf", weight.integrable_at_infinity),
        ("int_B1 G = inf", not density.finite_inside),
        ("int_{R^n \\ B1} G < inf", density.finite_outside),
    ]
    if all(ok for _, ok in case1):
        return Case.CASE1
    if all(ok for _, ok in case2):
        return Case.CASE2
    fail1 = next(c for c, ok in case1 if not ok)
    fail2 = next(c for c, ok in case2 if not ok)
    raise NeitherCase(
        f"neither regime holds: Case1 fails '{fail1}', Case2 fails '{fail2}'",
        clause=f"{fail1} | {fail2}",
    )


class ProblemSpec:
    """Grid, weight, density and samples of f; the case is fixed at construction."""

    def __init__(
        self,
        grid: SphericalGrid,
        weight: OrliczWeight,
        density: DualDensity,
        f,
        even_tol: float = 1e-12,
    ):
        f = np.array(np.broadcast_to(np.asarray(f, dtype=float), grid.theta.shape))
        if density.n != grid.n:
            raise ValueError(f"density dimension {density.n} differs from grid dimension {grid.n}")
        if np.any(~np.isfinite(f)) or np.any(f <= 0):
            raise ValueError("f must be positive on every node")
        mismatch = float(np.max(np.abs(f - f[grid.antipode])))
        if mismatch > even_tol:
            raise ValueError(f"f is not even: antipodal mismatch {mismatch:.3g}")
        case = classify_case(weight, density)
        if weight.case_tag is not None and weight.case_tag is not case:
            raise NeitherCase(f"weight declares {weight.case_tag} but (phi, G) classify as {case}")
        if case is Case.CASE2 and not density.has_tail:
            raise TailUnavailable("Case2 needs a tail antiderivative of the dual density")
        f.flags.writeable = False
        self.grid = grid
        self.weight = weight
        self.density = density
        self.f = f
        self.case = case

    @property
    def n(self) -> int:
        return self.grid.n

    @classmethod
    def power_law(cls, grid: SphericalGrid, p: float, q: float, f=1.0) -> "ProblemSpec":
        """phi(s) = s**(1-p), G(y) = |y|**(q-n)."""
        return cls(grid, PowerWeight(p), RadialPowerDensity(q, grid.n), f)

    def with_f(self, f) -> "ProblemSpec":
        return ProblemSpec(self.grid, self.weight, self.density, f)
