"""Run configuration: TOML text to a validated :class:`RunConfig`.

Grammar (every key optional unless noted)::

    task = "richardson" | "evolve" | "curve" | "theta-flow" | "sweep" | "levels" | "pfaffian-demo"

    [spectrum]          # richardson, evolve, curve, theta-flow, sweep
    epsilons = [0.0, 1.0]        # required, strictly increasing
    g = 0.5                      # required, nonzero
    N = 1                        # pair count (richardson)

    [state]             # evolve, curve, theta-flow, sweep
    spins = [[sx, sy, sz], ...]  # or
    seed = 7                     # random directions, mutually exclusive with spins
    radii = [1.0, 1.0]           # with seed; default 1

    [time]              # evolve, theta-flow
    t_end = 10.0                 # required
    samples = 1001
    tol = 1e-10

    [flow]              # theta-flow
    mode = "calibrated" | "paper"

    [sweep]             # sweep
    delta = 0.05
    samples = 32                 # base samples per path segment
    closed = true
    waypoints = [{g = 1.0}, {g = [1.0, 0.5]}, ...]   # complex values as [re, im]
    probe_t_max = 0.0            # > 0 attaches oscillation-period estimates to events

    [sweep.lasso]       # alternative to waypoints
    component = "g"
    base = [1.0, 0.0]
    center = [0.0, 0.66]
    radius = 0.1
    sides = 16
    turns = 1

    [levels]            # levels
    m_max = 10

    [pfaffian]          # pfaffian-demo
    particles = 6
    seed = 1
    holes = [[0.5, 0.1], [-0.3, 0.2]]

    [output]
    formats = ["csv", "json"]
    precision = 17
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TASKS = ("richardson", "evolve", "curve", "theta-flow", "sweep", "levels", "pfaffian-demo")

_REQUIRED = {
    "richardson": ("spectrum",),
    "evolve": ("spectrum", "state", "time"),
    "curve": ("spectrum", "state"),
    "theta-flow": ("spectrum", "state", "time"),
    "sweep": ("spectrum", "state", "sweep"),
    "levels": ("levels",),
    "pfaffian-demo": ("pfaffian",),
}

_KEYS = {
    "spectrum": {"epsilons", "g", "N"},
    "state": {"spins", "seed", "radii"},
    "time": {"t_end", "samples", "tol"},
    "flow": {"mode"},
    "sweep": {"delta", "samples", "closed", "waypoints", "lasso", "probe_t_max"},
    "lasso": {"component", "base", "center", "radius", "sides", "turns"},
    "levels": {"m_max"},
    "pfaffian": {"particles", "seed", "holes"},
    "output": {"formats", "precision"},
}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class RunConfig:
    task: str
    spectrum: Optional[dict] = None
    state: Optional[dict] = None
    time: Optional[dict] = None
    flow: dict = field(default_factory=lambda: {"mode": "calibrated"})
    sweep: Optional[dict] = None
    levels: Optional[dict] = None
    pfaffian: Optional[dict] = None
    output: dict = field(default_factory=lambda: {"formats": ["csv", "json"], "precision": 17})

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def _num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _cnum(x) -> bool:
    return _num(x) or (isinstance(x, list) and len(x) == 2 and all(_num(v) for v in x))


def to_complex(x) -> complex:
    return complex(x[0], x[1]) if isinstance(x, list) else complex(x)


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem found."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    return validate(raw)


def validate(raw: dict) -> RunConfig:
    errors: list[str] = []
    task = raw.get("task")
    if task is None:
        errors.append("task: missing")
    elif task not in TASKS:
        errors.append(f"task: unknown task {task!r} (expected one of {', '.join(TASKS)})")
    for key in raw:
        if key != "task" and key not in _KEYS:
            errors.append(f"{key}: unknown key")
    for block, allowed in _KEYS.items():
        if block in raw:
            if not isinstance(raw[block], dict):
                errors.append(f"{block}: expected a table")
                continue
            for k in raw[block]:
                if k not in allowed:
                    errors.append(f"{block}.{k}: unknown key")
    if task in _REQUIRED:
        for block in _REQUIRED[task]:
            if block not in raw:
                errors.append(f"{block}: block required for task {task!r}")

    sp = raw.get("spectrum")
    if isinstance(sp, dict):
        eps = sp.get("epsilons")
        if eps is None:
            errors.append("spectrum.epsilons: missing")
        elif not isinstance(eps, list) or not eps or not all(_num(e) for e in eps):
            errors.append("spectrum.epsilons: expected a non-empty list of numbers")
        elif any(b <= a for a, b in zip(eps, eps[1:])):
            errors.append("spectrum.epsilons: must be strictly increasing (duplicate or unordered values)")
        g = sp.get("g")
        if g is None:
            errors.append("spectrum.g: missing")
        elif not _num(g) or g == 0:
            errors.append("spectrum.g: expected a nonzero number")
        N = sp.get("N", 0)
        if not isinstance(N, int) or isinstance(N, bool) or N < 0 or (isinstance(eps, list) and N > len(eps)):
            errors.append("spectrum.N: expected an integer between 0 and the number of levels")
        if task == "richardson" and "N" not in sp:
            errors.append("spectrum.N: required for task 'richardson'")
    n = len(sp["epsilons"]) if isinstance(sp, dict) and isinstance(sp.get("epsilons"), list) else None

    st = raw.get("state")
    if isinstance(st, dict):
        if "spins" in st and "seed" in st:
            errors.append("state: spins and seed are mutually exclusive")
        elif "spins" not in st and "seed" not in st:
            errors.append("state: need spins or seed")
        if "spins" in st:
            s = st["spins"]
            if not isinstance(s, list) or not all(isinstance(v, list) and len(v) == 3 and all(_num(c) for c in v) for v in s):
                errors.append("state.spins: expected a list of [x, y, z] triples")
            elif n is not None and len(s) != n:
                errors.append(f"state.spins: {len(s)} spins for {n} levels")
            elif any(sum(c * c for c in v) == 0 for v in s):
                errors.append("state.spins: zero-length spin")
        if "seed" in st and (not isinstance(st["seed"], int) or st["seed"] < 0):
            errors.append("state.seed: expected a non-negative integer")
        if "radii" in st:
            r = st["radii"]
            if "spins" in st:
                errors.append("state.radii: only allowed with seed")
            elif not isinstance(r, list) or not all(_num(v) and v > 0 for v in r) or (n is not None and len(r) != n):
                errors.append("state.radii: expected one positive radius per level")

    tm = raw.get("time")
    if isinstance(tm, dict):
        if not _num(tm.get("t_end")):
            errors.append("time.t_end: expected a number")
        if "samples" in tm and (not isinstance(tm["samples"], int) or tm["samples"] < 2):
            errors.append("time.samples: expected an integer >= 2")
        if "tol" in tm and (not _num(tm["tol"]) or tm["tol"] <= 0):
            errors.append("time.tol: expected a positive number")

    fl = raw.get("flow", {})
    if isinstance(fl, dict) and fl.get("mode", "calibrated") not in ("paper", "calibrated"):
        errors.append("flow.mode: expected 'paper' or 'calibrated'")

    sw = raw.get("sweep")
    if isinstance(sw, dict):
        if "delta" in sw and (not _num(sw["delta"]) or sw["delta"] <= 0):
            errors.append("sweep.delta: expected a positive number")
        if "samples" in sw and (not isinstance(sw["samples"], int) or sw["samples"] < 2):
            errors.append("sweep.samples: expected an integer >= 2")
        if ("waypoints" in sw) == ("lasso" in sw):
            errors.append("sweep: give exactly one of waypoints or lasso")
        if "waypoints" in sw:
            wp = sw["waypoints"]
            if not isinstance(wp, list) or len(wp) < 2 or not all(isinstance(w, dict) for w in wp):
                errors.append("sweep.waypoints: expected at least two tables")
            else:
                for i, w in enumerate(wp):
                    for k, v in w.items():
                        if not _cnum(v):
                            errors.append(f"sweep.waypoints[{i}].{k}: expected a number or [re, im]")
                        elif isinstance(v, list) and k != "g":
                            errors.append(f"sweep.waypoints[{i}].{k}: only g may be complex")
        if isinstance(sw.get("lasso"), dict):
            la = sw["lasso"]
            for k in la:
                if k not in _KEYS["lasso"]:
                    errors.append(f"sweep.lasso.{k}: unknown key")
            for k in ("base", "center"):
                if not _cnum(la.get(k)):
                    errors.append(f"sweep.lasso.{k}: expected a number or [re, im]")
            if not _num(la.get("radius")) or la.get("radius", 0) <= 0:
                errors.append("sweep.lasso.radius: expected a positive number")
        if "probe_t_max" in sw and (not _num(sw["probe_t_max"]) or sw["probe_t_max"] < 0):
            errors.append("sweep.probe_t_max: expected a non-negative number")

    lv = raw.get("levels")
    if isinstance(lv, dict):
        m = lv.get("m_max")
        if not isinstance(m, int) or isinstance(m, bool) or m < 1:
            errors.append("levels.m_max: expected a positive integer")

    pf = raw.get("pfaffian")
    if isinstance(pf, dict):
        p = pf.get("particles", 6)
        if not isinstance(p, int) or p < 2 or p % 2:
            errors.append("pfaffian.particles: expected an even integer >= 2")
        if "seed" in pf and (not isinstance(pf["seed"], int) or pf["seed"] < 0):
            errors.append("pfaffian.seed: expected a non-negative integer")
        if "holes" in pf:
            h = pf["holes"]
            if not isinstance(h, list) or len(h) != 2 or not all(_cnum(v) for v in h):
                errors.append("pfaffian.holes: expected two positions")

    out = raw.get("output", {})
    if isinstance(out, dict):
        f = out.get("formats", ["csv", "json"])
        if not isinstance(f, list) or not f or any(x not in ("csv", "json") for x in f):
            errors.append("output.formats: expected a list drawn from 'csv' and 'json'")
        p = out.get("precision", 17)
        if not isinstance(p, int) or not 1 <= p <= 17:
            errors.append("output.precision: expected an integer in [1, 17]")

    if errors:
        raise ConfigError(errors)
    cfg = RunConfig(task=task)
    for block in ("spectrum", "state", "time", "sweep", "levels", "pfaffian"):
        if block in raw:
            setattr(cfg, block, dict(raw[block]))
    cfg.flow = {"mode": "calibrated", **raw.get("flow", {})}
    cfg.output = {"formats": ["csv", "json"], "precision": 17, **raw.get("output", {})}
    return cfg


def apply_overrides(cfg: RunConfig, seed: Optional[int] = None, tol: Optional[float] = None,
                    mode: Optional[str] = None) -> RunConfig:
    """Command-line overrides; re-validated as a whole."""
    raw: dict[str, Any] = {"task": cfg.task, **{k: v for k, v in cfg.to_dict().items() if k != "task"}}
    if seed is not None:
        if cfg.state is not None:
            raw["state"] = {k: v for k, v in cfg.state.items() if k != "spins"} | {"seed": seed}
        if cfg.pfaffian is not None:
            raw["pfaffian"] = {**cfg.pfaffian, "seed": seed}
    if tol is not None:
        if cfg.time is None:
            raise ConfigError(["--tol: task has no time block"])
        raw["time"] = {**cfg.time, "tol": tol}
    if mode is not None:
        raw["flow"] = {**cfg.flow, "mode": mode}
    return validate(raw)
