"""Scalar functionals of a support function: dual volume, eta and J.

Integrals over the sphere of directions u are pulled back to the normal
grid with the substitution ``du = h det(b) / rho**n dx`` so that every
quantity is a plain grid quadrature.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .geometry import SupportField
from .model import Case, DualDensity, ProblemSpec, RadialPowerDensity


class EtaParts(NamedTuple):
    value: float
    numerator: float
    denominator: float


@dataclass(frozen=True)
class FunctionalReport:
    Vg: float
    J: float
    eta: float
    eta_numerator: float
    eta_denominator: float
    volume: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _substitution_weight(field: SupportField) -> np.ndarray:
    return field.h * field.det_b / field.rho**field.grid.n


def _directions(field: SupportField) -> np.ndarray:
    return field.points / field.rho[:, None]


def radial_integrals(field: SupportField, density: DualDensity, case: Case, scale: float = 1.0) -> np.ndarray:
    """Per-node radial integral of G along the ray to the boundary of ``scale * K``."""
    rho = scale * field.rho
    u = _directions(field)
    if case is Case.CASE1:
        return np.asarray(density.radial_integral(u, np.zeros_like(rho), rho))
    return np.asarray(density.radial_integral(u, rho, np.full_like(rho, np.inf)))


def dual_volume(field: SupportField, density: DualDensity, case: Case, scale: float = 1.0) -> float:
    """G dual volume of the body (Case1: G integrated over K, Case2: over its complement).

    ``scale`` evaluates the body ``scale * K`` without building a new field.
    """
    F = radial_integrals(field, density, case, scale)
    return field.grid.integrate(F * _substitution_weight(field))


def enclosed_volume(field: SupportField) -> float:
    n = field.grid.n
    return dual_volume(field, RadialPowerDensity(float(n), n), Case.CASE1)


def eta(field: SupportField, spec: ProblemSpec) -> EtaParts:
    """Normalisation keeping the dual volume fixed, with its numerator and denominator."""
    g = field.grid
    G = spec.density.on_boundary(field.points, field.rho)
    num = g.integrate(G * field.h * field.det_b)
    den = g.integrate(spec.f * field.h / np.asarray(spec.weight.value(field.h)))
    return EtaParts(num / den, num, den)


def orlicz_J(field: SupportField, spec: ProblemSpec) -> float:  # noqa: N802
    return field.grid.integrate(np.asarray(spec.weight.antiderivative(field.h)) * spec.f)


def J_rate_identity(field: SupportField, spec: ProblemSpec) -> tuple[float, float]:  # noqa: N802
    """Time derivative of J implied by the flow, and the Cauchy-Schwarz gap.

    With D = int f h / phi, N = int G h det b and Q = int f^2 h K / (phi^2 G),
    J' D = D^2 - N Q in Case1 (sign reversed in Case2).  The gap N Q - D^2
    is non-negative because the quadrature weights are positive.
    """
    g = field.grid
    phi = np.asarray(spec.weight.value(field.h))
    G = spec.density.on_boundary(field.points, field.rho)
    f = spec.f
    D = g.integrate(f * field.h / phi)
    N = g.integrate(G * field.h * field.det_b)
    Q = g.integrate(f * f * field.h / (field.det_b * phi * phi * G))
    gap = N * Q - D * D
    jprime = -gap / D
    if spec.case is Case.CASE2:
        jprime = -jprime
    return jprime, gap


def volume_identity_check(field: SupportField) -> tuple[float, float, float]:
    """Return (int h det b, n Vol(K), relative gap)."""
    lhs = field.grid.integrate(field.h * field.det_b)
    rhs = field.grid.n * enclosed_volume(field)
    return lhs, rhs, abs(lhs - rhs) / abs(rhs)


def functional_report(field: SupportField, spec: ProblemSpec) -> FunctionalReport:
    e = eta(field, spec)
    return FunctionalReport(
        Vg=dual_volume(field, spec.density, spec.case),
        J=orlicz_J(field, spec),
        eta=e.value,
        eta_numerator=e.numerator,
        eta_denominator=e.denominator,
        volume=enclosed_volume(field),
    )
