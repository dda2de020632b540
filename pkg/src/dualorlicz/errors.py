"""Exception types raised across the package."""

from __future__ import annotations


class DualOrliczError(Exception):
    """Base class for all package errors."""


class DomainError(DualOrliczError, ValueError):
    """Argument outside the domain of a weight or density."""


class NeitherCase(DualOrliczError, ValueError):
    """(phi, G) satisfy neither integrability regime."""

    def __init__(self, message: str, clause: str = ""):
        super().__init__(message)
        self.clause = clause


class QuadratureFailure(DualOrliczError, ArithmeticError):
    """Adaptive quadrature could not reach the requested tolerance."""


class TailUnavailable(DualOrliczError, ArithmeticError):
    """An integral to infinity was requested without a certified tail."""


class ConvexityLoss(DualOrliczError, ArithmeticError):
    """A principal radius of curvature became non-positive."""

    def __init__(self, node: int, radius: float):
        super().__init__(f"principal radius {radius:.6g} <= 0 at node {node}")
        self.node = node
        self.radius = radius


class NotConvex(DualOrliczError, ValueError):
    """An initial shape is not uniformly convex on the grid."""

    def __init__(self, node: int, value: float):
        super().__init__(f"initial shape not uniformly convex: radius {value:.6g} at node {node}")
        self.node = node
        self.value = value


class StepFailure(DualOrliczError, RuntimeError):
    """Step size fell below dt_min while a guard kept rejecting."""

    def __init__(self, guard: str, dt: float, detail: str = ""):
        msg = f"step failure: dt={dt:.3g} below dt_min (guard: {guard})"
        if detail:
            msg += f"; {detail}"
        super().__init__(msg)
        self.guard = guard
        self.dt = dt
        self.detail = detail


class SchemaError(DualOrliczError, ValueError):
    """Configuration failed validation. ``issues`` lists every (path, message)."""

    def __init__(self, issues: list[tuple[str, str]]):
        self.issues = list(issues)
        lines = "; ".join(f"{p}: {m}" for p, m in self.issues)
        super().__init__(f"{len(self.issues)} config error(s): {lines}")


class EmptyTrace(DualOrliczError, ValueError):
    """Audit requested on a trace without records."""
