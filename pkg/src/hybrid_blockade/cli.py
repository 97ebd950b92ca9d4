"""Scenario runner: declarative YAML configs in, CSV tables and plot scripts out.

    hybrid-blockade list
    hybrid-blockade validate my_scan.yaml
    hybrid-blockade run fig3 --out results --threads 4
"""
from __future__ import annotations

import argparse
import ast
import csv
import io
import logging
import math
import operator
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from . import __version__
from .analytics import (
    BASIS_LABELS,
    BASIS_LEVELS,
    EIGEN_LABELS,
    DegenerateParameters,
    SingularConfiguration,
    UndefinedCorrelator,
    analytic_g2,
    betas,
    interference_points,
    spectrum,
    supermode_state_in_bare,
)
from .dynamics import (
    OccupationUnderflow,
    SolverError,
    build_liouvillian,
    evolve_schrodinger,
    g2_tau,
    g2_zero,
    occupation,
    steady_state,
    y_of_N,
)
from .fockspace import bare_space, supermode_space
from .model import (
    MODE1,
    MODE2,
    PHONON,
    ParameterError,
    SystemParams,
    build_dissipators,
    build_effective_hamiltonian,
    build_full_hamiltonian,
    frame_of,
    mode_operators,
)

log = logging.getLogger(__name__)

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3

PARAM_NAMES = ("Delta", "eta", "eta_a", "G_m", "Omega_e", "kappa", "kappa_b", "n_th")
PARAM_DEFAULTS = {"kappa": 1.0, "kappa_b": 0.0, "n_th": 0.0}
MODES = ("a_plus", "a_minus", "b", "a", "m")
KINDS = ("steady", "dynamics", "correlation")
OBSERVABLES = {
    "steady": ("occupation", "g2", "g2_analytic", "yN", "spectrum"),
    "dynamics": ("populations",),
    "correlation": ("g2_tau",),
}
YN_SUBSYSTEMS = {"a_plus": MODE1, "a_minus": MODE2, "b": PHONON}
Y_LEVELS = 5
BUNDLED = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig_add", "smoke")
DELTA_SYMBOLS = ("beta_1", "beta_2", "beta_3", "delta_B", "delta_C")


class ValidationError(ValueError):
    def __init__(self, field: str, message: str, line: Optional[int] = None):
        self.field, self.message, self.line = field, message, line
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{field}: {message}")


# expressions ---------------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {"sqrt": math.sqrt}
_CONSTS = {"pi": math.pi}


def evaluate(expr: Any, symbols: Optional[dict] = None) -> float:
    """Value of a number or a small arithmetic string such as ``"40/sqrt(2)"``."""
    if isinstance(expr, bool):
        raise ValueError(f"expected a number, got {expr!r}")
    if isinstance(expr, (int, float)):
        return float(expr)
    if not isinstance(expr, str):
        raise ValueError(f"expected a number or expression, got {expr!r}")
    names = {**_CONSTS, **(symbols or {})}

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            return _UNARY[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Name):
            if node.id not in names:
                raise ValueError(f"unknown name {node.id!r}")
            return float(names[node.id])
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ValueError(f"unsupported expression {expr!r}")

    try:
        tree = ast.parse(expr.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse {expr!r}") from exc
    value = ev(tree)
    if not math.isfinite(value):
        raise ValueError(f"{expr!r} is not finite")
    return value


def delta_symbols(eta: float, eta_a: float) -> dict:
    b1, b2, b3, _ = betas(eta, eta_a)
    probe = SystemParams.paper(Delta=0.0, eta=eta, eta_a=eta_a, G_m=0.0, Omega_e=0.0)
    d_b, d_c = interference_points(probe)
    return {"beta_1": b1, "beta_2": b2, "beta_3": b3, "delta_B": d_b, "delta_C": d_c}


def resolve_params(raw: dict) -> dict:
    """Numeric parameter values; ``Delta`` may refer to beta_1, delta_B, ..."""
    out = {}
    for name in PARAM_NAMES:
        if name == "Delta":
            continue
        if name not in raw and name not in PARAM_DEFAULTS:
            raise ValidationError(f"params.{name}", "required")
        try:
            out[name] = evaluate(raw.get(name, PARAM_DEFAULTS.get(name)))
        except ValueError as exc:
            raise ValidationError(f"params.{name}", str(exc)) from None
    if "Delta" not in raw:
        raise ValidationError("params.Delta", "required")
    try:
        out["Delta"] = evaluate(raw["Delta"], delta_symbols(out["eta"], out["eta_a"]))
    except ValueError as exc:
        raise ValidationError("params.Delta", str(exc)) from None
    return out


def make_params(raw: dict) -> SystemParams:
    vals = resolve_params(raw)
    try:
        return SystemParams.paper(**vals)
    except ParameterError as exc:
        name = next((n for n in PARAM_NAMES if str(exc).startswith(n + " ")), "params")
        raise ValidationError(f"params.{name}" if name != "params" else name, str(exc)) from None


# scenario types ------------------------------------------------------------

@dataclass(frozen=True)
class Axis:
    name: str
    values: tuple

    @property
    def points(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SolverOptions:
    truncation: tuple = (6, 6, 6)  # a_plus, a_minus, b ("auto" allowed for b)
    thermal_tail: float = 1e-13
    max_levels: int = 96
    steady_tol: float = 1e-13
    rtol: float = 1e-9
    atol: float = 1e-12
    method: str = "auto"

    def phonon_levels(self, n_th: float) -> int:
        n_p, _, n_b = self.truncation
        if n_b != "auto":
            return int(n_b)
        if n_th <= 0:
            return n_p
        need = math.ceil(math.log(self.thermal_tail) / math.log(n_th / (n_th + 1)))
        return int(min(max(n_p, need), self.max_levels))

    def space(self, n_th: float = 0.0):
        n_p, n_m, _ = self.truncation
        return supermode_space(n_p, n_m, self.phonon_levels(n_th))

    def as_dict(self) -> dict:
        n_p, n_m, n_b = self.truncation
        return dict(truncation=dict(a_plus=n_p, a_minus=n_m, b=n_b), thermal_tail=self.thermal_tail,
                    max_levels=self.max_levels, steady_tol=self.steady_tol, rtol=self.rtol,
                    atol=self.atol, method=self.method)


@dataclass(frozen=True)
class Panel:
    name: str
    kind: str
    observables: dict
    sweep: tuple = ()
    grid: Optional[Axis] = None  # time axis for dynamics, delay axis for correlation
    params: dict = field(default_factory=dict)
    solver: Optional[SolverOptions] = None

    def cells(self) -> list[dict]:
        """Sweep points as raw parameter overrides, first axis slowest."""
        if not self.sweep:
            return [{}]
        grids = np.meshgrid(*[np.arange(a.points) for a in self.sweep], indexing="ij")
        out = []
        for idx in zip(*(g.ravel() for g in grids)):
            out.append({a.name: a.values[i] for a, i in zip(self.sweep, idx)})
        return out


@dataclass(frozen=True)
class Scenario:
    name: str
    params: dict
    panels: tuple
    solver: SolverOptions = SolverOptions()
    description: str = ""

    def panel_solver(self, panel: Panel) -> SolverOptions:
        return panel.solver or self.solver


# parsing -------------------------------------------------------------------

def _line_index(text: str) -> dict:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError:
        return {}
    index = {}

    def walk(node, path):
        if node is None:
            return
        index[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                index[path + (k.value,)] = k.start_mark.line + 1
                walk(v, path + (k.value,))
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    walk(root, ())
    return index


def _fmt_path(path: tuple) -> str:
    s = ""
    for p in path:
        s += f"[{p}]" if isinstance(p, int) else (f".{p}" if s else str(p))
    return s


class _Parser:
    def __init__(self, lines: dict):
        self.lines = lines

    def fail(self, path: tuple, message: str):
        line = None
        for k in range(len(path), -1, -1):
            if path[:k] in self.lines:
                line = self.lines[path[:k]]
                break
        raise ValidationError(_fmt_path(path) or "<root>", message, line)

    def mapping(self, obj, path, allowed: tuple, required: tuple = ()) -> dict:
        if not isinstance(obj, dict):
            self.fail(path, "expected a mapping")
        for k in obj:
            if k not in allowed:
                self.fail(path + (k,), f"unknown key (allowed: {', '.join(allowed)})")
        for k in required:
            if k not in obj:
                self.fail(path, f"missing required key {k!r}")
        return obj

    def number(self, obj, path, symbols=None) -> float:
        try:
            return evaluate(obj, symbols)
        except ValueError as exc:
            self.fail(path, str(exc))

    def params(self, obj, path, partial: bool) -> dict:
        obj = self.mapping(obj or {}, path, PARAM_NAMES)
        for k, v in obj.items():
            if k == "Delta":
                self.number(v, path + (k,), {s: 0.0 for s in DELTA_SYMBOLS})
            else:
                self.number(v, path + (k,))
        if not partial:
            try:
                make_params(obj)
            except ValidationError as exc:
                self.fail(path + (exc.field.split(".")[-1],), exc.message)
        return dict(obj)

    def axis(self, obj, path, name_required=True, names=PARAM_NAMES) -> Axis:
        keys = ("name", "start", "stop", "points", "values")
        obj = self.mapping(obj, path, keys, ("name",) if name_required else ())
        name = obj.get("name", "")
        if name_required and name not in names:
            self.fail(path + ("name",), f"unknown sweep variable {name!r} (allowed: {', '.join(names)})")
        if "values" in obj:
            if any(k in obj for k in ("start", "stop", "points")):
                self.fail(path, "give either values or start/stop/points")
            vals = obj["values"]
            if not isinstance(vals, list) or not vals:
                self.fail(path + ("values",), "expected a non-empty list")
            symbols = {s: 0.0 for s in DELTA_SYMBOLS} if name == "Delta" else None
            for i, v in enumerate(vals):
                self.number(v, path + ("values", i), symbols)
            return Axis(name, tuple(vals))
        for k in ("start", "stop", "points"):
            if k not in obj:
                self.fail(path, f"missing required key {k!r}")
        start = self.number(obj["start"], path + ("start",))
        stop = self.number(obj["stop"], path + ("stop",))
        points = obj["points"]
        if isinstance(points, bool) or not isinstance(points, int):
            self.fail(path + ("points",), "must be an integer")
        if points == 1:
            if start != stop:
                self.fail(path + ("points",), "a single point needs start == stop")
            return Axis(name, (start,))
        if points < 2:
            self.fail(path + ("points",), "must be >= 2 (or 1 for a single point)")
        if not stop > start:
            self.fail(path + ("stop",), "range must be ordered: stop > start")
        return Axis(name, tuple(float(x) for x in np.linspace(start, stop, points)))

    def solver(self, obj, path, base: SolverOptions) -> SolverOptions:
        keys = ("truncation", "thermal_tail", "max_levels", "steady_tol", "rtol", "atol", "method")
        obj = self.mapping(obj or {}, path, keys)
        changes = {}
        if "truncation" in obj:
            t = obj["truncation"]
            tp = path + ("truncation",)
            if isinstance(t, int) and not isinstance(t, bool):
                levels = [t, t, t]
            else:
                t = self.mapping(t, tp, ("a_plus", "a_minus", "b"))
                levels = [t.get("a_plus", base.truncation[0]), t.get("a_minus", base.truncation[1]),
                          t.get("b", base.truncation[2])]
            for v, key in zip(levels, ("a_plus", "a_minus", "b")):
                if key == "b" and v == "auto":
                    continue
                if isinstance(v, bool) or not isinstance(v, int) or v < 2:
                    self.fail(tp, f"{key} levels must be an integer >= 2" + (" or 'auto'" if key == "b" else ""))
            changes["truncation"] = tuple(levels)
        for k in ("thermal_tail", "steady_tol", "rtol", "atol"):
            if k in obj:
                v = self.number(obj[k], path + (k,))
                if not v > 0:
                    self.fail(path + (k,), "must be > 0")
                changes[k] = v
        if "max_levels" in obj:
            v = obj["max_levels"]
            if isinstance(v, bool) or not isinstance(v, int) or v < 2:
                self.fail(path + ("max_levels",), "must be an integer >= 2")
            changes["max_levels"] = v
        if "method" in obj:
            if obj["method"] not in ("auto", "eigh", "rk"):
                self.fail(path + ("method",), "must be auto, eigh or rk")
            changes["method"] = obj["method"]
        return replace(base, **changes)

    def observables(self, obj, path, kind: str) -> dict:
        allowed = OBSERVABLES[kind]
        obj = self.mapping(obj, path, allowed)
        if not obj:
            self.fail(path, "no observables requested")
        out = {}
        for name, val in obj.items():
            p = path + (name,)
            if name == "spectrum":
                if not isinstance(val, bool):
                    self.fail(p, "expected true or false")
                if val:
                    out[name] = True
                continue
            if not isinstance(val, list) or not val:
                self.fail(p, "expected a non-empty list")
            valid = BASIS_LABELS if name == "populations" else MODES
            for v in val:
                if v not in valid:
                    self.fail(p, f"unknown entry {v!r} (allowed: {', '.join(valid)})")
            if name == "g2_analytic" and "b" in val:
                self.fail(p, "the phonon correlator is numeric-only; no closed form exists for g2_b")
            if name == "yN":
                bad = [v for v in val if v not in YN_SUBSYSTEMS]
                if bad:
                    self.fail(p, f"y(N) needs a Fock subsystem (a_plus, a_minus, b), got {bad}")
            out[name] = tuple(val)
        if not out:
            self.fail(path, "no observables requested")
        return out

    def panel(self, obj, path, base_solver: SolverOptions, base_params: dict) -> Panel:
        keys = ("name", "kind", "sweep", "observables", "params", "solver", "time", "tau")
        obj = self.mapping(obj, path, keys, ("name", "observables"))
        name = obj["name"]
        if not isinstance(name, str) or not name or not all(c.isalnum() or c in "_-" for c in name):
            self.fail(path + ("name",), "must be a non-empty identifier")
        kind = obj.get("kind", "steady")
        if kind not in KINDS:
            self.fail(path + ("kind",), f"unknown kind {kind!r} (allowed: {', '.join(KINDS)})")
        observables = self.observables(obj["observables"], path + ("observables",), kind)
        params = self.params(obj.get("params"), path + ("params",), partial=True)
        solver = self.solver(obj["solver"], path + ("solver",), base_solver) if "solver" in obj else None
        sweep = obj.get("sweep") or []
        if not isinstance(sweep, list):
            self.fail(path + ("sweep",), "expected a list of axes")
        axes = tuple(self.axis(a, path + ("sweep", i)) for i, a in enumerate(sweep))
        if len({a.name for a in axes}) != len(axes):
            self.fail(path + ("sweep",), "repeated sweep variable")
        grid = None
        grid_key = {"dynamics": "time", "correlation": "tau"}.get(kind)
        for k in ("time", "tau"):
            if k in obj and k != grid_key:
                self.fail(path + (k,), f"not used by {kind} panels")
        if grid_key:
            if axes:
                self.fail(path + ("sweep",), f"{kind} panels run at a single parameter point")
            if grid_key not in obj:
                self.fail(path, f"missing required key {grid_key!r}")
            grid = self.axis(obj[grid_key], path + (grid_key,), name_required=False)
            grid = Axis(grid_key, grid.values)
            vals = np.array([evaluate(v) for v in grid.values])
            if vals[0] < 0 or np.any(np.diff(vals) <= 0):
                self.fail(path + (grid_key,), "must be non-negative and increasing")
        # every cell must resolve to a valid parameter set
        merged = {**base_params, **params}
        for cell in Panel(name, kind, observables, axes, grid, params).cells():
            try:
                make_params({**merged, **cell})
            except ValidationError as exc:
                self.fail(path + ("params",), f"{exc.field}: {exc.message} at sweep point {cell}")
        return Panel(name, kind, observables, axes, grid, params, solver)

    def scenario(self, obj) -> Scenario:
        obj = self.mapping(obj, (), ("name", "description", "params", "solver", "panels"), ("name", "params", "panels"))
        name = obj["name"]
        if not isinstance(name, str) or not name or not all(c.isalnum() or c in "_-" for c in name):
            self.fail(("name",), "must be a non-empty identifier")
        params = self.params(obj["params"], ("params",), partial=True)
        try:
            make_params(params)
        except ValidationError as exc:
            if exc.message != "required":  # panels may still supply missing values
                self.fail(("params", exc.field.split(".")[-1]), exc.message)
        solver = self.solver(obj.get("solver"), ("solver",), SolverOptions())
        panels = obj["panels"]
        if not isinstance(panels, list) or not panels:
            self.fail(("panels",), "expected a non-empty list")
        parsed = tuple(self.panel(p, ("panels", i), solver, params) for i, p in enumerate(panels))
        if len({p.name for p in parsed}) != len(parsed):
            self.fail(("panels",), "panel names must be unique")
        return Scenario(name, params, parsed, solver, str(obj.get("description", "")))


def parse_scenario(text: str) -> Scenario:
    try:
        obj = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ValidationError("<yaml>", str(exc).splitlines()[0], mark.line + 1 if mark else None) from None
    return _Parser(_line_index(text)).scenario(obj)


def bundled_text(name: str) -> str:
    if name not in BUNDLED:
        raise ValidationError("<scenario>", f"no bundled scenario {name!r} (available: {', '.join(BUNDLED)})")
    return resources.files(__package__).joinpath("scenarios", f"{name}.yaml").read_text(encoding="utf-8")


def list_scenarios() -> list[tuple[str, str]]:
    return [(n, parse_scenario(bundled_text(n)).description) for n in BUNDLED]


def load_scenario(target: str) -> Scenario:
    """A bundled scenario name or a path to a YAML file."""
    path = Path(target)
    if path.suffix in (".yaml", ".yml") or path.exists():
        return parse_scenario(path.read_text(encoding="utf-8"))
    return parse_scenario(bundled_text(target))


def validate_scenario(target: str) -> list[str]:
    """Human-readable problems with a config; empty when it is valid."""
    try:
        load_scenario(target)
    except ValidationError as exc:
        return [str(exc)]
    return []


# evaluation ----------------------------------------------------------------

@dataclass
class CellResult:
    values: dict
    status: str = "ok"
    error: str = ""
    flags: tuple = ()


def _nan_columns(columns: list) -> dict:
    return {c: math.nan for c in columns}


def steady_columns(panel: Panel) -> list[str]:
    cols = []
    obs = panel.observables
    for m in obs.get("occupation", ()):
        cols.append(f"n_{m}")
    for m in obs.get("g2", ()):
        cols.append(f"g2_{m}")
    for m in obs.get("g2_analytic", ()):
        cols.append(f"g2an_{m}")
    for m in obs.get("yN", ()):
        cols += [f"y_{m}_{k}" for k in range(Y_LEVELS)]
    if obs.get("spectrum"):
        cols += [f"lambda_{lab}" for lab in EIGEN_LABELS]
    return cols


def evaluate_steady(raw: dict, panel: Panel, solver: SolverOptions) -> CellResult:
    cols = steady_columns(panel)
    values = _nan_columns(cols)
    flags = []
    obs = panel.observables
    try:
        p = make_params(raw)
        if any(k in obs for k in ("occupation", "g2", "yN")):
            space = solver.space(p.n_th)
            H = build_effective_hamiltonian(p, space, frame=True)
            L = build_liouvillian(H, build_dissipators(p, space), frame_of(p, space))
            rho = steady_state(L, tol=solver.steady_tol)
            ops = mode_operators(space)
            for m in obs.get("occupation", ()):
                values[f"n_{m}"] = occupation(rho, ops[m])
            for m in obs.get("g2", ()):
                try:
                    values[f"g2_{m}"] = g2_zero(rho, ops[m])
                except OccupationUnderflow:
                    flags.append(f"g2_{m}:undefined")
            for m in obs.get("yN", ()):
                hist = y_of_N(rho, YN_SUBSYSTEMS[m])
                for k in range(min(Y_LEVELS, len(hist.y))):
                    values[f"y_{m}_{k}"] = float(hist.y[k])
        if "g2_analytic" in obs:
            try:
                exact = analytic_g2(p).exact
                for m in obs["g2_analytic"]:
                    values[f"g2an_{m}"] = float(exact[m])
            except (SingularConfiguration, UndefinedCorrelator, ZeroDivisionError) as exc:
                flags.append(f"g2_analytic:undefined ({exc})" if str(exc) else "g2_analytic:undefined")
        if obs.get("spectrum"):
            try:
                vals = spectrum(p).eigenvalues
                for lab in EIGEN_LABELS:
                    values[f"lambda_{lab}"] = float(vals[lab])
            except DegenerateParameters:
                flags.append("spectrum:undefined")
    except (SolverError, ValidationError, ParameterError, np.linalg.LinAlgError) as exc:
        return CellResult(_nan_columns(cols), "failed", str(exc), tuple(flags))
    return CellResult(values, "ok", "", tuple(flags))


def evaluate_dynamics(raw: dict, panel: Panel, solver: SolverOptions) -> tuple[list, list]:
    labels = panel.observables["populations"]
    t = np.array([evaluate(v) for v in panel.grid.values])
    cols = [f"P_{lab}_{h}" for lab in labels for h in ("full", "eff")] + ["norm_full", "norm_eff"]
    p = make_params(raw)
    n = solver.truncation[0]
    se, sb = supermode_space(n), bare_space(n)
    levels = dict(zip(BASIS_LABELS, BASIS_LEVELS))
    eff_targets = {lab: se.basis(levels[lab]) for lab in labels}
    full_targets = {lab: supermode_state_in_bare(sb, levels[lab]) for lab in labels}
    start = levels["g100"]
    eff = evolve_schrodinger(build_effective_hamiltonian(p, se), se.basis(start), t, eff_targets,
                             method=solver.method, rtol=solver.rtol, atol=solver.atol)
    full = evolve_schrodinger(build_full_hamiltonian(p, sb), supermode_state_in_bare(sb, start), t,
                              full_targets, method=solver.method, rtol=solver.rtol, atol=solver.atol)
    series = {}
    for lab in labels:
        series[f"P_{lab}_full"] = full[lab]
        series[f"P_{lab}_eff"] = eff[lab]
    series["norm_full"], series["norm_eff"] = full["norm"], eff["norm"]
    return cols, [[float(series[c][i]) for c in cols] for i in range(len(t))]


def evaluate_correlation(raw: dict, panel: Panel, solver: SolverOptions) -> tuple[list, list]:
    modes = panel.observables["g2_tau"]
    tau = np.array([evaluate(v) for v in panel.grid.values])
    p = make_params(raw)
    space = solver.space(p.n_th)
    L = build_liouvillian(build_effective_hamiltonian(p, space, frame=True), build_dissipators(p, space),
                          frame_of(p, space))
    rho = steady_state(L, tol=solver.steady_tol)
    ops = mode_operators(space)
    cols = [f"g2tau_{m}" for m in modes]
    series = [g2_tau(L, rho, ops[m], tau) for m in modes]
    return cols, [[float(s[i]) for s in series] for i in range(len(tau))]


def _steady_job(job):
    raw, panel, solver = job
    try:
        return evaluate_steady(raw, panel, solver)
    except Exception as exc:  # a cell never takes the sweep down
        log.exception("cell %s failed", raw)
        return CellResult(_nan_columns(steady_columns(panel)), "failed", f"{type(exc).__name__}: {exc}")


def _map(fn, jobs: list, threads: int) -> list:
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (8 * threads))))


# output --------------------------------------------------------------------

def _cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def format_csv(header: list, rows: list) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


@dataclass
class PanelOutput:
    panel: Panel
    header: list
    rows: list
    failed: int = 0
    undefined: int = 0


def run_panel(scenario: Scenario, panel: Panel, threads: int = 1) -> PanelOutput:
    solver = scenario.panel_solver(panel)
    base = {**scenario.params, **panel.params}
    axis_names = [a.name for a in panel.sweep]
    if panel.kind == "steady":
        cells = panel.cells()
        results = _map(_steady_job, [({**base, **c}, panel, solver) for c in cells], threads)
        cols = steady_columns(panel)
        header = axis_names + ["status"] + cols + ["flags", "error"]
        rows = []
        for c, r in zip(cells, results):
            coords = [resolve_params({**base, **c})[a] for a in axis_names]
            rows.append(coords + [r.status] + [r.values[k] for k in cols] + [";".join(r.flags), r.error])
        failed = sum(r.status != "ok" for r in results)
        undefined = sum(bool(r.flags) for r in results)
        return PanelOutput(panel, header, rows, failed, undefined)
    axis = panel.grid.name
    grid = [evaluate(v) for v in panel.grid.values]
    fn = evaluate_dynamics if panel.kind == "dynamics" else evaluate_correlation
    try:
        cols, data = fn(base, panel, solver)
        status, error, failed = "ok", "", 0
    except (SolverError, OccupationUnderflow, ValidationError, ParameterError, ValueError) as exc:
        if panel.kind == "dynamics":
            cols = [f"P_{lab}_{h}" for lab in panel.observables["populations"] for h in ("full", "eff")]
            cols += ["norm_full", "norm_eff"]
        else:
            cols = [f"g2tau_{m}" for m in panel.observables["g2_tau"]]
        data = [[math.nan] * len(cols) for _ in grid]
        status, error, failed = "failed", f"{type(exc).__name__}: {exc}", len(grid)
    header = [axis, "status"] + cols + ["error"]
    rows = [[x, status] + d + [error] for x, d in zip(grid, data)]
    return PanelOutput(panel, header, rows, failed)


PLOT_TEMPLATE = '''"""Render panel {panel!r} of scenario {scenario!r} from its CSV table."""
import csv
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

HERE = Path(__file__).resolve().parent
CSV = HERE / {csv!r}
KIND = {kind!r}
AXES = {axes!r}
GROUPS = {groups!r}


def load():
    with open(CSV, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    def col(name):
        return np.array([float(r[name]) if r[name] not in ("", "nan") else np.nan for r in rows])
    return rows, col


def main():
    rows, col = load()
    if KIND == "steady" and len(AXES) == 2:
        x, y = col(AXES[0]), col(AXES[1])
        xs, ys = np.unique(x), np.unique(y)
        name = GROUPS[0][1][0]
        z = np.log10(col(name)).reshape(len(xs), len(ys))
        fig, ax = plt.subplots(figsize=(6, 5))
        cs = ax.contourf(ys, xs, z, levels=40, cmap="viridis")
        fig.colorbar(cs, ax=ax, label="log10 " + name)
        ax.set_xlabel(AXES[1])
        ax.set_ylabel(AXES[0])
    else:
        fig, axs = plt.subplots(len(GROUPS), 1, figsize=(6, 3.2 * len(GROUPS)), squeeze=False)
        for ax, (title, names, log) in zip(axs[:, 0], GROUPS):
            if title == "yN":
                width = 0.8 / max(1, len(names))
                levels = sorted({{int(n.rsplit("_", 1)[1]) for n in names}})
                for i, r in enumerate(rows):
                    for j, mode in enumerate(sorted({{n.rsplit("_", 1)[0] for n in names}})):
                        ys = [float(r[f"{{mode}}_{{k}}"]) for k in levels]
                        ax.bar(np.array(levels) + i * (len(levels) + 1) + j * width, ys, width,
                               label=mode if i == 0 else None)
                ax.axhline(0, color="k", lw=0.5)
                ax.set_ylabel("y(N)")
            else:
                x = col(AXES[0]) if AXES else np.arange(len(rows))
                for name in names:
                    if name.startswith("g2an_"):
                        ax.plot(x, col(name), "--", label=name)
                    elif name.endswith("_eff"):
                        ax.plot(x[::8], col(name)[::8], "s", ms=3, mfc="none", label=name)
                    else:
                        ax.plot(x, col(name), "-", label=name)
                if log:
                    ax.set_yscale("log")
                ax.set_xlabel(AXES[0] if AXES else "")
            ax.set_title(title)
            ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(HERE / {png!r}, dpi=150)


if __name__ == "__main__":
    main()
'''


def plot_script(scenario: Scenario, out: PanelOutput, csv_name: str) -> str:
    panel = out.panel
    obs = panel.observables
    if panel.kind == "steady":
        axes = [a.name for a in panel.sweep]
        groups = []
        if "g2" in obs or "g2_analytic" in obs:
            names = [f"g2_{m}" for m in obs.get("g2", ())] + [f"g2an_{m}" for m in obs.get("g2_analytic", ())]
            groups.append(("g2(0)", names, True))
        if "occupation" in obs:
            groups.append(("occupation", [f"n_{m}" for m in obs["occupation"]], True))
        if "yN" in obs:
            groups.append(("yN", [f"y_{m}_{k}" for m in obs["yN"] for k in range(Y_LEVELS)], False))
        if obs.get("spectrum"):
            groups.append(("eigenvalues", [f"lambda_{lab}" for lab in EIGEN_LABELS], False))
    elif panel.kind == "dynamics":
        axes = [panel.grid.name]
        groups = [(f"P_{lab}", [f"P_{lab}_full", f"P_{lab}_eff"], False) for lab in obs["populations"]]
    else:
        axes = [panel.grid.name]
        groups = [("g2(tau)", [f"g2tau_{m}" for m in obs["g2_tau"]], False)]
    return PLOT_TEMPLATE.format(panel=panel.name, scenario=scenario.name, csv=csv_name, kind=panel.kind,
                                axes=axes, groups=groups, png=f"{panel.name}.png")


def manifest(scenario: Scenario, outputs: list) -> dict:
    panels = []
    for o in outputs:
        p = o.panel
        entry = {"name": p.name, "kind": p.kind, "csv": f"{p.name}.csv", "plot": f"plot_{p.name}.py",
                 "rows": len(o.rows), "failed": o.failed, "undefined": o.undefined}
        if p.params:
            entry["params"] = dict(p.params)
        if p.sweep:
            entry["sweep"] = [{"name": a.name, "points": a.points} for a in p.sweep]
        if p.grid is not None:
            entry[p.grid.name] = {"start": float(evaluate(p.grid.values[0])),
                                  "stop": float(evaluate(p.grid.values[-1])), "points": p.grid.points}
        entry["observables"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in p.observables.items()}
        entry["solver"] = scenario.panel_solver(p).as_dict()
        panels.append(entry)
    return {
        "scenario": scenario.name,
        "description": scenario.description,
        "code_version": __version__,
        "params": dict(scenario.params),
        "resolved_params": resolve_params(scenario.params),
        "solver": scenario.solver.as_dict(),
        "panels": panels,
    }


def run_scenario(scenario: Scenario, out_dir, threads: int = 1) -> tuple[Path, list]:
    """Evaluate every panel and write CSV, plot scripts and a manifest under ``out_dir/<name>``."""
    target = Path(out_dir) / scenario.name
    target.mkdir(parents=True, exist_ok=True)
    outputs = []
    for panel in scenario.panels:
        log.info("%s/%s: %s panel", scenario.name, panel.name, panel.kind)
        o = run_panel(scenario, panel, threads)
        csv_name = f"{panel.name}.csv"
        (target / csv_name).write_text(format_csv(o.header, o.rows), encoding="utf-8", newline="")
        (target / f"plot_{panel.name}.py").write_text(plot_script(scenario, o, csv_name), encoding="utf-8")
        outputs.append(o)
    text = yaml.safe_dump(manifest(scenario, outputs), sort_keys=False, allow_unicode=True)
    (target / "manifest.yaml").write_text(text, encoding="utf-8")
    return target, outputs


def apply_overrides(scenario: Scenario, truncation=None, rtol=None, atol=None) -> Scenario:
    def patch(s: SolverOptions) -> SolverOptions:
        changes = {}
        if truncation is not None:
            b = "auto" if s.truncation[2] == "auto" else truncation
            changes["truncation"] = (truncation, truncation, b)
        if rtol is not None:
            changes["rtol"] = rtol
        if atol is not None:
            changes["atol"] = atol
        return replace(s, **changes)

    panels = tuple(replace(p, solver=patch(p.solver)) if p.solver else p for p in scenario.panels)
    return replace(scenario, solver=patch(scenario.solver), panels=panels)


# command line --------------------------------------------------------------

def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybrid-blockade", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    run = sub.add_parser("run", help="run a bundled scenario or a YAML config")
    run.add_argument("target")
    run.add_argument("--out", default="results", help="output directory (default: results)")
    run.add_argument("--truncation", type=_positive_int, help="Fock levels per bosonic mode")
    run.add_argument("--threads", type=_positive_int, default=1, help="worker processes for sweeps")
    run.add_argument("--rtol", type=_positive_float, help="relative tolerance of time integration")
    run.add_argument("--atol", type=_positive_float, help="absolute tolerance of time integration")
    sub.add_parser("list", help="list bundled scenarios")
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("target")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.verb == "list":
        for name, desc in list_scenarios():
            print(f"{name:8s} {desc}")
        return EXIT_OK
    try:
        scenario = load_scenario(args.target)
    except ValidationError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"cannot read {args.target}: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.verb == "validate":
        n = sum(len(p.cells()) for p in scenario.panels)
        print(f"{scenario.name}: ok ({len(scenario.panels)} panels, {n} cells)")
        return EXIT_OK
    if args.truncation is not None and args.truncation < 2:
        print("invalid scenario: --truncation must be >= 2", file=sys.stderr)
        return EXIT_VALIDATION
    scenario = apply_overrides(scenario, args.truncation, args.rtol, args.atol)
    try:
        target, outputs = run_scenario(scenario, args.out, args.threads)
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    failed = sum(o.failed for o in outputs)
    for o in outputs:
        print(f"{scenario.name}/{o.panel.name}: {len(o.rows)} rows, {o.failed} failed -> {target / (o.panel.name + '.csv')}")
    return EXIT_SOLVER if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
