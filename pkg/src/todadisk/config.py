"""Experiment configuration: JSON in, validated dataclass out, and back."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .errors import ConfigurationError
from .geometry import RDifferential
from .grid import DiskGrid
from .solver import TodaProblem

MODES = ("solve", "verify", "sweep-R", "sweep-amplitude", "refine")
KINDS = ("cyclic", "subcyclic", "vortex", "wang", "maximal", "g2")

DEFAULT_GRID = {"R": 0.95, "n_rho": 128, "n_theta": 64, "cluster": False}
DEFAULT_SOLVER = {"tol": 1e-10, "max_iter": 50, "steps": 8}
DEFAULT_SWEEP = {"radii": [0.9, 0.95, 0.99], "amplitudes": [0.25, 0.5, 0.75, 1.0], "levels": 3}

_TOP_KEYS = {"kind", "rank", "q", "vortex", "g2_mode", "grid", "solver", "mode", "sweep", "out"}


def _fail(key, msg):
    raise ConfigurationError(f"{key}: {msg}")


def _number(d, key, path, kind=float):
    val = d[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        _fail(f"{path}.{key}", "must be a number")
    if kind is int:
        if int(val) != val:
            _fail(f"{path}.{key}", "must be an integer")
        return int(val)
    return float(val)


def _section(raw, name, defaults):
    sub = raw.get(name, {})
    if not isinstance(sub, dict):
        _fail(name, "must be an object")
    unknown = set(sub) - set(defaults)
    if unknown:
        _fail(f"{name}.{sorted(unknown)[0]}", "unknown key")
    return {**defaults, **sub}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    rank: int | None
    q: RDifferential
    grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    solver: dict = field(default_factory=lambda: dict(DEFAULT_SOLVER))
    mode: str = "solve"
    vortex: dict | None = None
    g2_mode: str = "constrained"
    sweep: dict = field(default_factory=lambda: dict(DEFAULT_SWEEP))
    out: str | None = None

    def build_grid(self, R=None):
        g = self.grid
        return DiskGrid(g["R"] if R is None else R, g["n_rho"], g["n_theta"], g["cluster"])

    def problem(self, R=None, q=None):
        v = self.vortex
        params = None if v is None else (v["a"], v["b"], v["c"], v["kappa"])
        return TodaProblem(
            self.kind,
            self.q if q is None else q,
            self.build_grid(R),
            rank=self.rank,
            vortex=params,
            tol=self.solver["tol"],
            max_iter=self.solver["max_iter"],
            steps=self.solver["steps"],
        )

    def with_mode(self, mode):
        return replace(self, mode=mode)

    def render(self):
        """Plain dict that parses back to an equal config."""
        out = {
            "kind": self.kind,
            "rank": self.rank,
            "q": self.q.to_json(),
            "grid": dict(self.grid),
            "solver": dict(self.solver),
            "mode": self.mode,
            "sweep": {k: (list(v) if isinstance(v, (list, tuple)) else v) for k, v in self.sweep.items()},
        }
        if self.vortex is not None:
            out["vortex"] = dict(self.vortex)
        if self.kind == "g2":
            out["g2_mode"] = self.g2_mode
        if self.out is not None:
            out["out"] = self.out
        return out


def config_from_dict(raw) -> ExperimentConfig:
    """Validate a parsed JSON object and apply defaults."""
    if not isinstance(raw, dict):
        raise ConfigurationError("config: top level must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        _fail(sorted(unknown)[0], "unknown key")
    for key in ("kind", "q"):
        if key not in raw:
            _fail(key, "required key missing")
    kind = raw["kind"]
    if kind not in KINDS:
        _fail("kind", f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    rank = raw.get("rank")
    if rank is not None and (isinstance(rank, bool) or not isinstance(rank, int)):
        _fail("rank", "must be an integer")
    if kind in ("cyclic", "subcyclic") and rank is None:
        _fail("rank", f"required for kind {kind}")
    if not isinstance(raw["q"], dict):
        _fail("q", "must be an object with order, numerator, denominator")
    try:
        q = RDifferential.from_json(raw["q"])
    except ConfigurationError as exc:
        _fail("q", str(exc))

    grid = _section(raw, "grid", DEFAULT_GRID)
    for key in ("R",):
        grid[key] = _number(grid, key, "grid")
    for key in ("n_rho", "n_theta"):
        grid[key] = _number(grid, key, "grid", int)
    if not isinstance(grid["cluster"], bool):
        _fail("grid.cluster", "must be true or false")

    solver = _section(raw, "solver", DEFAULT_SOLVER)
    solver["tol"] = _number(solver, "tol", "solver")
    solver["max_iter"] = _number(solver, "max_iter", "solver", int)
    solver["steps"] = _number(solver, "steps", "solver", int)

    sweep = _section(raw, "sweep", DEFAULT_SWEEP)
    for key in ("radii", "amplitudes"):
        vals = sweep[key]
        if not isinstance(vals, list) or not vals:
            _fail(f"sweep.{key}", "must be a non-empty list of numbers")
        sweep[key] = [_number({"v": v}, "v", f"sweep.{key}") for v in vals]
    sweep["levels"] = _number(sweep, "levels", "sweep", int)
    if sweep["levels"] < 2:
        _fail("sweep.levels", "must be at least 2")

    mode = raw.get("mode", "solve")
    if mode not in MODES:
        _fail("mode", f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")

    vortex = raw.get("vortex")
    if kind == "vortex":
        if not isinstance(vortex, dict):
            _fail("vortex", "kind vortex needs an object with a, b, c, kappa")
        missing = {"a", "b", "c", "kappa"} - set(vortex)
        if missing:
            _fail(f"vortex.{sorted(missing)[0]}", "required key missing")
        extra = set(vortex) - {"a", "b", "c", "kappa"}
        if extra:
            _fail(f"vortex.{sorted(extra)[0]}", "unknown key")
        vortex = {k: _number(vortex, k, "vortex") for k in ("a", "b", "c", "kappa")}
    elif vortex is not None:
        _fail("vortex", f"only used with kind vortex, not {kind}")

    g2_mode = raw.get("g2_mode", "constrained")
    if g2_mode not in ("constrained", "unconstrained"):
        _fail("g2_mode", "must be constrained or unconstrained")
    out = raw.get("out")
    if out is not None and not isinstance(out, str):
        _fail("out", "must be a string path")

    cfg = ExperimentConfig(kind, rank, q, grid, solver, mode, vortex, g2_mode, sweep, out)
    # module preconditions: build the objects once so errors surface here
    try:
        cfg.problem()
        for R in sweep["radii"]:
            cfg.build_grid(R)
    except ConfigurationError as exc:
        raise ConfigurationError(f"precondition: {exc}") from exc
    return cfg


def config_schema():
    """The JSON schema shipped with the package (documentation of the format).

    Validation itself is done by :func:`config_from_dict`, which also checks
    the cross-field preconditions a schema cannot express.
    """
    from importlib.resources import files

    return json.loads(files("todadisk").joinpath("config_schema.json").read_text())


def parse_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config: invalid JSON ({exc})") from exc
    return config_from_dict(raw)
