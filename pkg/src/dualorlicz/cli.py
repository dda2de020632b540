"""Command line front end.

    dualorlicz run <config.json> [--out DIR] [--quiet]
    dualorlicz audit <trace.csv> <config.json>
    dualorlicz residual <profile.csv> <config.json>

The output directory is taken from ``--out``, then the ``DUALORLICZ_OUT``
environment variable, then ``output.dir`` in the config, then the current
directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .errors import DualOrliczError, NeitherCase, NotConvex, SchemaError
from .expr import Expression, ExpressionError, sample_on_grid
from .flow import (
    Ball,
    CosinePerturbation,
    Ellipse,
    Ellipsoid,
    FlowConfig,
    FlowState,
    FlowTrace,
    make_initial,
    run,
)
from .geometry import SphericalGrid, read_profile, write_profile
from .model import (
    Case,
    CustomWeight,
    PowerWeight,
    ProblemSpec,
    RadialPowerDensity,
    RadialProfileDensity,
    classify_case,
)
from .verify import AuditTolerances, audit, residual

logger = logging.getLogger("dualorlicz")

ENV_OUT = "DUALORLICZ_OUT"

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_TOP_KEYS = {"problem", "grid", "flow", "initial", "output", "verify", "seed"}
_PROBLEM_KEYS = {"n", "p", "q", "f", "weight", "density"}
_WEIGHT_KEYS = {"phi", "case"}
_DENSITY_KEYS = {"g", "finite_inside", "finite_outside", "antiderivative", "tail"}
_GRID_KEYS = {"N"}
_FLOW_KEYS = {f.name for f in fields(FlowConfig)}
_OUTPUT_KEYS = {"dir", "plot_data", "snapshots"}
_VERIFY_KEYS = {"residual_tol", "audit"}
_AUDIT_KEYS = {f.name for f in fields(AuditTolerances)}
_SHAPES = {
    "ball": {"r"},
    "ellipse": {"a", "b"},
    "ellipsoid": {"a", "c"},
    "cosine": {"eps", "r"},
    "random_cosine": {"modes", "amplitude", "r"},
}


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``resolved`` is the full config with defaults filled in."""

    spec: ProblemSpec
    flow: FlowConfig
    initial: Any
    out_dir: Optional[str]
    plot_data: bool
    snapshots: int
    residual_tol: Optional[float]
    audit_tol: AuditTolerances
    seed: int
    resolved: dict


class _Issues:
    def __init__(self):
        self.items: list[tuple[str, str]] = []

    def add(self, path: str, msg: str) -> None:
        self.items.append((path, msg))

    def keys(self, block: dict, allowed: set, path: str) -> None:
        for k in sorted(set(block) - allowed):
            self.add(f"{path}.{k}" if path else k, "unknown key")

    def block(self, cfg: dict, key: str, required: bool = False) -> dict:
        val = cfg.get(key, {} if not required else None)
        if val is None:
            self.add(key, "missing block")
            return {}
        if not isinstance(val, dict):
            self.add(key, "must be an object")
            return {}
        return val

    def number(self, block: dict, key: str, path: str, default=None, positive=False, integer=False):
        if key not in block:
            if default is None:
                self.add(f"{path}.{key}", "required")
            return default
        v = block[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.add(f"{path}.{key}", "must be a finite number")
            return default
        if integer and int(v) != v:
            self.add(f"{path}.{key}", "must be an integer")
            return default
        if positive and v <= 0:
            self.add(f"{path}.{key}", "must be positive")
            return default
        return int(v) if integer else float(v)


def _expr(issues: _Issues, block: dict, key: str, path: str, variables) -> Optional[Expression]:
    if key not in block:
        return None
    try:
        return Expression(block[key], variables)
    except ExpressionError as exc:
        issues.add(f"{path}.{key}", str(exc))
        return None


def _weight(issues: _Issues, prob: dict):
    if ("p" in prob) == ("weight" in prob):
        issues.add("problem", "give exactly one of p or weight")
        return None
    if "p" in prob:
        p = issues.number(prob, "p", "problem")
        if p is None:
            return None
        if p == 0:
            issues.add("problem.p", "p = 0 satisfies neither case")
            return None
        return PowerWeight(p)
    w = prob["weight"]
    if not isinstance(w, dict):
        issues.add("problem.weight", "must be an object")
        return None
    issues.keys(w, _WEIGHT_KEYS, "problem.weight")
    phi = _expr(issues, w, "phi", "problem.weight", ("s",))
    if phi is None and "phi" not in w:
        issues.add("problem.weight.phi", "required")
    case = w.get("case")
    if case not in ("Case1", "Case2"):
        issues.add("problem.weight.case", "must be 'Case1' or 'Case2'")
        return None
    if phi is None:
        return None
    try:
        return CustomWeight(lambda s: phi(s=s), Case.CASE1 if case == "Case1" else Case.CASE2, label=phi.text)
    except DualOrliczError as exc:
        issues.add("problem.weight", str(exc))
        return None


def _density(issues: _Issues, prob: dict, n: int):
    if ("q" in prob) == ("density" in prob):
        issues.add("problem", "give exactly one of q or density")
        return None
    if "q" in prob:
        q = issues.number(prob, "q", "problem")
        return None if q is None else RadialPowerDensity(q, n)
    d = prob["density"]
    if not isinstance(d, dict):
        issues.add("problem.density", "must be an object")
        return None
    issues.keys(d, _DENSITY_KEYS, "problem.density")
    g = _expr(issues, d, "g", "problem.density", ("r",))
    if g is None and "g" not in d:
        issues.add("problem.density.g", "required")
    anti = _expr(issues, d, "antiderivative", "problem.density", ("r",))
    tail = _expr(issues, d, "tail", "problem.density", ("r",))
    flags = {}
    for key in ("finite_inside", "finite_outside"):
        if not isinstance(d.get(key), bool):
            issues.add(f"problem.density.{key}", "required boolean")
        flags[key] = bool(d.get(key))
    if g is None:
        return None
    return RadialProfileDensity(
        lambda r: g(r=r),
        n,
        flags["finite_inside"],
        flags["finite_outside"],
        antiderivative=(lambda r: anti(r=r)) if anti else None,
        tail=(lambda r: tail(r=r)) if tail else None,
        label=g.text,
    )


def _initial(issues: _Issues, block: dict, n: int, seed: int):
    shape = block.get("shape", "ball")
    if shape not in _SHAPES:
        issues.add("initial.shape", f"must be one of {sorted(_SHAPES)}")
        return None
    issues.keys(block, _SHAPES[shape] | {"shape"}, "initial")
    num = lambda k, d=None: issues.number(block, k, "initial", default=d, positive=True)  # noqa: E731
    if shape == "ball":
        return Ball(num("r", 1.0))
    if shape == "ellipse":
        if n != 2:
            issues.add("initial.shape", "ellipse needs n = 2")
        a, b = num("a"), num("b")
        return None if a is None or b is None else Ellipse(a, b)
    if shape == "ellipsoid":
        if n != 3:
            issues.add("initial.shape", "ellipsoid needs n = 3")
        a, c = num("a"), num("c")
        return None if a is None or c is None else Ellipsoid(a, c)
    r = num("r", 1.0)
    if shape == "cosine":
        eps = block.get("eps")
        if not isinstance(eps, list) or not all(
            isinstance(e, (int, float)) and not isinstance(e, bool) for e in eps
        ):
            issues.add("initial.eps", "must be a list of numbers")
            return None
        return CosinePerturbation(tuple(float(e) for e in eps), r)
    modes = issues.number(block, "modes", "initial", default=3, positive=True, integer=True)
    amp = issues.number(block, "amplitude", "initial", default=0.5, positive=True)
    if amp is not None and amp >= 1:
        issues.add("initial.amplitude", "must be below 1 to guarantee convexity")
    rng = np.random.default_rng(seed)
    k = np.arange(1, modes + 1)
    # sum |eps_k| (4k^2 - 1) <= amp < 1 keeps h'' + h positive
    eps = amp * rng.uniform(-1.0, 1.0, modes) / ((4 * k**2 - 1) * modes)
    return CosinePerturbation(tuple(float(e) for e in eps), r)


def build_spec(resolved: dict, grid: SphericalGrid) -> ProblemSpec:
    """Problem for an already validated config on an arbitrary grid."""
    issues = _Issues()
    prob = resolved["problem"]
    weight = _weight(issues, prob)
    density = _density(issues, prob, grid.n)
    f = sample_on_grid(Expression(prob.get("f", "1")), grid)
    if issues.items:
        raise SchemaError(issues.items)
    return ProblemSpec(grid, weight, density, f)


def parse_config(text: str) -> RunConfig:
    """Validate a JSON config; all problems are reported together in a SchemaError."""
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError([("", f"invalid JSON: {exc}")]) from None
    if not isinstance(cfg, dict):
        raise SchemaError([("", "config must be a JSON object")])
    issues = _Issues()
    issues.keys(cfg, _TOP_KEYS, "")
    prob = issues.block(cfg, "problem", required=True)
    issues.keys(prob, _PROBLEM_KEYS, "problem")
    grid_b = issues.block(cfg, "grid")
    issues.keys(grid_b, _GRID_KEYS, "grid")
    flow_b = issues.block(cfg, "flow")
    issues.keys(flow_b, _FLOW_KEYS, "flow")
    init_b = issues.block(cfg, "initial")
    out_b = issues.block(cfg, "output")
    issues.keys(out_b, _OUTPUT_KEYS, "output")
    ver_b = issues.block(cfg, "verify")
    issues.keys(ver_b, _VERIFY_KEYS, "verify")

    seed = cfg.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        issues.add("seed", "must be a non-negative integer")
        seed = 0

    n = prob.get("n", 2) if prob else 2
    if n not in (2, 3) or isinstance(n, bool):
        issues.add("problem.n", "must be 2 or 3")
        n = 2
    N = issues.number(grid_b, "N", "grid", default=256, positive=True, integer=True)
    grid = None
    try:
        grid = SphericalGrid(n, N)
    except ValueError as exc:
        issues.add("grid.N", str(exc))

    weight = _weight(issues, prob) if prob else None
    density = _density(issues, prob, n) if prob else None
    f_text = prob.get("f", "1") if prob else "1"
    f = None
    try:
        f_expr = Expression(f_text, ("theta",))
        if grid is not None:
            f = sample_on_grid(f_expr, grid)
            if np.any(f <= 0):
                issues.add("problem.f", "must be positive on every node")
                f = None
    except ExpressionError as exc:
        issues.add("problem.f", str(exc))

    spec = None
    if weight is not None and density is not None:
        try:
            classify_case(weight, density)
        except NeitherCase as exc:
            issues.add("problem", f"NeitherCase: {exc}")
            weight = None
    if weight is not None and density is not None and f is not None and grid is not None:
        try:
            spec = ProblemSpec(grid, weight, density, f)
        except (DualOrliczError, ValueError) as exc:
            issues.add("problem", f"{type(exc).__name__}: {exc}")

    flow_kwargs = {}
    for key, val in flow_b.items():
        if key not in _FLOW_KEYS:
            continue
        if key in ("scheme", "renormalize"):
            if not isinstance(val, str):
                issues.add(f"flow.{key}", "must be a string")
                continue
            flow_kwargs[key] = val
        elif key == "t_end" and val is None:
            flow_kwargs[key] = None
        else:
            v = issues.number(flow_b, key, "flow", integer=key in ("max_steps", "grow_after"))
            if v is not None:
                flow_kwargs[key] = v
    flow = None
    try:
        flow = FlowConfig(**flow_kwargs)
    except (TypeError, ValueError) as exc:
        issues.add("flow", str(exc))

    initial = _initial(issues, init_b, n, seed) if isinstance(init_b, dict) else None

    out_dir = out_b.get("dir")
    if out_dir is not None and not isinstance(out_dir, str):
        issues.add("output.dir", "must be a string")
        out_dir = None
    plot_data = out_b.get("plot_data", True)
    if not isinstance(plot_data, bool):
        issues.add("output.plot_data", "must be a boolean")
    snapshots = issues.number(out_b, "snapshots", "output", default=12, positive=True, integer=True)

    residual_tol = None
    if ver_b.get("residual_tol") is not None:
        residual_tol = issues.number(ver_b, "residual_tol", "verify", positive=True)
    audit_b = ver_b.get("audit", {})
    if not isinstance(audit_b, dict):
        issues.add("verify.audit", "must be an object")
        audit_b = {}
    issues.keys(audit_b, _AUDIT_KEYS, "verify.audit")
    audit_kwargs = {k: issues.number(audit_b, k, "verify.audit") for k in audit_b if k in _AUDIT_KEYS}
    audit_tol = AuditTolerances(**{k: v for k, v in audit_kwargs.items() if v is not None})

    if issues.items:
        raise SchemaError(issues.items)

    resolved_problem = {"n": n, "f": f_text}
    for key in ("p", "q", "weight", "density"):
        if key in prob:
            resolved_problem[key] = prob[key]
    resolved = {
        "problem": resolved_problem,
        "grid": {"N": N},
        "flow": asdict(flow),
        "initial": {"shape": init_b.get("shape", "ball"), **_shape_params(initial)},
        "output": {"dir": out_dir, "plot_data": plot_data, "snapshots": snapshots},
        "verify": {"residual_tol": residual_tol, "audit": asdict(audit_tol)},
        "seed": seed,
    }
    return RunConfig(spec, flow, initial, out_dir, plot_data, snapshots, residual_tol, audit_tol, seed, resolved)


def _shape_params(shape) -> dict:
    d = asdict(shape)
    if "eps" in d:
        d["eps"] = list(d["eps"])
    return d


# ---------------------------------------------------------------------------
# outputs


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


class _Recorder:
    """Collects per-step functionals and h snapshots at geometric times."""

    def __init__(self, first_time: float, count: int):
        self.functionals: list[dict] = []
        self.snapshots: list[tuple[int, float, np.ndarray]] = []
        self.next_time = first_time
        self.count = count
        self.last: Optional[FlowState] = None

    def __call__(self, state: FlowState) -> None:
        rec = {"step": state.step, "t": state.t, **state.report.to_dict()}
        self.functionals.append(rec)
        if state.step == 0 or (len(self.snapshots) < self.count - 1 and state.t >= self.next_time):
            self.snapshots.append((state.step, state.t, state.field.h.copy()))
            while self.next_time <= state.t:
                self.next_time *= 2.0
        self.last = state

    def finish(self) -> None:
        if self.last is not None and (not self.snapshots or self.snapshots[-1][0] != self.last.step):
            self.snapshots.append((self.last.step, self.last.t, self.last.field.h.copy()))


def _write_plotdata(out: Path, rec: _Recorder, grid: SphericalGrid) -> None:
    pd = out / "plotdata"
    pd.mkdir(parents=True, exist_ok=True)
    with open(pd / "h_snapshots.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "t", "theta", "h"])
        for step, t, h in rec.snapshots:
            for th, hv in zip(grid.theta, h):
                w.writerow([step, _fmt(t), _fmt(th), _fmt(hv)])
    for name, key in (("J_vs_t.csv", "J"), ("Vg_vs_t.csv", "Vg")):
        with open(pd / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "t", key])
            for r in rec.functionals:
                w.writerow([r["step"], _fmt(r["t"]), _fmt(r[key])])


def run_command(config: RunConfig, out_dir: Path, quiet: bool = False) -> int:
    """make_initial, run, residual, audit; write all artefacts to ``out_dir``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = config.spec
    report: dict = {"version": __version__, "config": config.resolved}
    try:
        initial = make_initial(config.initial, spec.grid)
    except NotConvex as exc:
        report["verdict"] = {"status": "Failed", "steps": 0, "t_final": 0.0, "residual_final": None,
                             "reason": f"NotConvex: {exc}"}  # fmt: skip
        report["exit_code"] = EXIT_FAIL
        _write_json(out_dir / "report.json", report)
        _say(quiet, f"Failed: {exc}")
        return EXIT_FAIL

    rec = _Recorder(config.flow.dt_init, config.snapshots)
    state, trace, verdict = run(spec, initial, config.flow, on_step=rec)
    rec.finish()
    trace.write_csv(out_dir / "trace.csv")
    with open(out_dir / "functionals.jsonl", "w") as fh:
        for r in rec.functionals:
            fh.write(json.dumps(r) + "\n")
    if state is not None:
        write_profile(state.field, out_dir / "profile_final.csv")
    if config.plot_data and state is not None:
        _write_plotdata(out_dir, rec, spec.grid)

    report["verdict"] = verdict.to_dict()
    report["rejections"] = [asdict(r) for r in trace.rejections]
    ok = verdict.status == "Converged"
    if state is not None:
        res = residual(state.field, spec)
        report["residual"] = res.to_dict()
        report["functionals"] = state.report.to_dict()
        if config.residual_tol is not None:
            ok &= res.residual_sup <= config.residual_tol
    if len(trace):
        aud = audit(trace, spec, config.audit_tol)
        report["audit"] = aud.to_dict()
        ok &= aud.passed
    else:
        ok = False
    code = EXIT_OK if ok else EXIT_FAIL
    report["exit_code"] = code
    _write_json(out_dir / "report.json", report)
    msg = f"{verdict.status} after {verdict.steps} steps, t={verdict.t_final:.6g}"
    if "residual" in report:
        msg += f", residual_sup={report['residual']['residual_sup']:.3g}"
    if "audit" in report:
        msg += f", audit {'passed' if report['audit']['passed'] else 'FAILED'}"
    if verdict.reason:
        msg += f" ({verdict.reason})"
    _say(quiet, msg)
    return code


def audit_command(trace_path: Path, config: RunConfig, out_dir: Path, quiet: bool = False) -> int:
    trace = FlowTrace.read_csv(trace_path, config.spec.case)
    aud = audit(trace, config.spec, config.audit_tol)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "audit.json", aud.to_dict())
    for c in aud.checks:
        _say(quiet, f"{'PASS' if c.passed else 'FAIL'} {c.name}: worst {c.worst_value:.3g} at step {c.worst_step}")
    return EXIT_OK if aud.passed else EXIT_FAIL


def residual_command(profile_path: Path, config: RunConfig, out_dir: Path, quiet: bool = False) -> int:
    field = read_profile(profile_path, config.spec.n)
    spec = config.spec if field.grid == config.spec.grid else build_spec(config.resolved, field.grid)
    res = residual(field, spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "residual.json", res.to_dict())
    _say(quiet, f"c_from_eta={res.c_from_eta:.12g} c_least_squares={res.c_least_squares:.12g} "
                f"residual_sup={res.residual_sup:.3g} residual_l2={res.residual_l2:.3g}")  # fmt: skip
    if config.residual_tol is not None and not res.residual_sup <= config.residual_tol:
        return EXIT_FAIL
    return EXIT_OK


def _say(quiet: bool, msg: str) -> None:
    if not quiet:
        print(msg)


def _out_dir(args, config: Optional[RunConfig]) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(ENV_OUT):
        return Path(os.environ[ENV_OUT])
    if config is not None and config.out_dir:
        return Path(config.out_dir)
    return Path(".")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualorlicz", description="Normalised Gauss curvature flow runner")
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", metavar="DIR", help=f"output directory (overrides ${ENV_OUT} and the config)")
    common.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run the flow from a config")
    p.add_argument("config")
    p = sub.add_parser("audit", parents=[common], help="audit an existing trace")
    p.add_argument("trace")
    p.add_argument("config")
    p = sub.add_parser("residual", parents=[common], help="residual of a stored profile")
    p.add_argument("profile")
    p.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        config = parse_config(text)
    except SchemaError as exc:
        for path, msg in exc.issues:
            print(f"config error at {path or '<root>'}: {msg}", file=sys.stderr)
        out = _out_dir(args, None)
        if args.command == "run":
            out.mkdir(parents=True, exist_ok=True)
            _write_json(out / "report.json", {"exit_code": EXIT_USAGE, "errors": [list(i) for i in exc.issues]})
        return EXIT_USAGE
    out = _out_dir(args, config)
    try:
        if args.command == "run":
            return run_command(config, out, args.quiet)
        if args.command == "audit":
            return audit_command(Path(args.trace), config, out, args.quiet)
        return residual_command(Path(args.profile), config, out, args.quiet)
    except (OSError, ValueError, DualOrliczError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
