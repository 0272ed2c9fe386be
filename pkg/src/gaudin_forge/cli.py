"""Command-line driver: one config file in, plot-ready CSV/JSON files and a manifest out.

    gaudin-forge --config run.toml --out results/ [--seed N] [--tol X] [--mode paper|calibrated]

Exit status is 0 on success, 2 for configuration errors and 1 for numerical
failures; on failure ``error.json`` is written to the output directory.
``GAUDIN_FORGE_THREADS`` caps the worker threads used by the sweep task.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import traceback
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, apply_overrides, parse_config, to_complex

SCHEMA_VERSION = "1.0"
MANIFEST = "manifest.json"


# --- output helpers ------------------------------------------------------------------

def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars, complex as [re, im], non-finite as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(float(obj.real)), _clean(float(obj.imag))]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return obj


class Outputs:
    """Collects files in memory and writes them, plus the manifest, in a fixed order."""

    def __init__(self, out_dir: Path, precision: int = 17, formats=("csv", "json")):
        self.dir = Path(out_dir)
        self.precision = precision
        self.formats = tuple(formats)
        self.files: dict[str, bytes] = {}

    def _fmt(self, x) -> str:
        if isinstance(x, str):
            return x
        if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
            return str(int(x))
        return format(float(x), f".{self.precision}g")

    def csv(self, name: str, header, rows):
        if "csv" not in self.formats:
            return
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(header)
        for r in rows:
            w.writerow([self._fmt(x) for x in r])
        self.files[name] = buf.getvalue().encode()

    def json(self, name: str, payload: dict, always: bool = False):
        if "json" not in self.formats and not always:
            return
        doc = {"schema_version": SCHEMA_VERSION, **_clean(payload)}
        self.files[name] = (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()

    def write(self, meta: dict):
        self.dir.mkdir(parents=True, exist_ok=True)
        entries = []
        for name in sorted(self.files):
            data = self.files[name]
            (self.dir / name).write_bytes(data)
            entries.append({"file": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})
        doc = {"schema_version": SCHEMA_VERSION, "generator": f"gaudin-forge {__version__}",
               "status": "ok", **_clean(meta), "files": entries}
        stale = self.dir / "error.json"
        if stale.exists():
            stale.unlink()
        (self.dir / MANIFEST).write_bytes((json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())


# --- shared builders -----------------------------------------------------------------

def _spectrum(cfg: RunConfig):
    from .model import EnergySpectrum
    sp = cfg.spectrum
    return EnergySpectrum(sp["epsilons"], sp["g"], sp.get("N", 0))


def _state(cfg: RunConfig, n: int):
    from .model import ClassicalSpinState
    st = cfg.state
    if "spins" in st:
        return ClassicalSpinState(np.array(st["spins"], dtype=float))
    rng = np.random.default_rng(st["seed"])
    return ClassicalSpinState.random(n, rng, st.get("radii"))


def _times(cfg: RunConfig):
    tm = cfg.time
    return np.linspace(0.0, float(tm["t_end"]), int(tm.get("samples", 1001))), float(tm.get("tol", 1e-10))


def threads() -> int:
    raw = os.environ.get("GAUDIN_FORGE_THREADS")
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError([f"GAUDIN_FORGE_THREADS: expected a positive integer, got {raw!r}"]) from None
    if n < 1:
        raise ConfigError([f"GAUDIN_FORGE_THREADS: expected a positive integer, got {raw!r}"])
    return n


def _u_columns(g: int, prefix: str = ""):
    return [c for i in range(g) for c in (f"{prefix}re_u{i + 1}", f"{prefix}im_u{i + 1}")]


def _u_values(u):
    return [x for v in u for x in (v.real, v.imag)]


# --- tasks ---------------------------------------------------------------------------

def task_richardson(cfg: RunConfig, out: Outputs) -> dict:
    from .richardson import (MAX_SECTOR_DIM, SenioritySector, build_richardson_state, eigen_residual,
                             exact_diagonalize, solve_richardson)
    from math import comb

    spec = _spectrum(cfg)
    sol = solve_richardson(spec)
    e = sol.pair_energies
    out.csv("pair_energies.csv", ["k", "re_e", "im_e"], [(k + 1, x.real, x.imag) for k, x in enumerate(e)])
    summary = {"task": "richardson", "epsilons": spec.epsilons, "g": spec.g, "N": spec.N,
               "E": sol.eigenvalue, "sum_pair_energies": sol.total_energy, "residual": sol.residual,
               "vacuum_offset": -float(np.sum(spec.eps))}
    if comb(spec.n, spec.N) <= min(MAX_SECTOR_DIM, 400):
        sector = SenioritySector(spec)
        w, _ = exact_diagonalize(spec, sector)
        psi = build_richardson_state(sol, sector)
        summary["exact_diagonalization"] = {
            "nearest_eigenvalue": float(w[np.argmin(np.abs(w - sol.eigenvalue))]),
            "distance": float(np.min(np.abs(w - sol.eigenvalue))),
            "eigen_residual": eigen_residual(sector, psi, sol.eigenvalue)}
    out.json("summary.json", summary, always=True)
    return summary


def task_evolve(cfg: RunConfig, out: Outputs) -> dict:
    from .dubrovin import spin_b_roots
    from .model import gaudin_invariants, hamiltonian, integrate_spins

    spec = _spectrum(cfg)
    st = _state(cfg, spec.n)
    ts, tol = _times(cfg)
    tr = integrate_spins(st, spec, ts[-1], tol, t_eval=ts)
    u = spin_b_roots(tr.spins, spec) if spec.n > 1 else np.zeros((len(ts), 0), complex)
    jm = tr.j_minus
    header = ["t"] + [f"s{i + 1}_{c}" for i in range(spec.n) for c in "xyz"] + _u_columns(spec.n - 1) + [
        "re_jminus", "im_jminus", "H"]
    rows = []
    for k, t in enumerate(tr.times):
        s = tr.spins[k]
        rows.append([t, *s.ravel(), *_u_values(u[k]), jm[k].real, jm[k].imag,
                     hamiltonian(tr.state(k), spec)])
    out.csv("trajectory.csv", header, rows)
    summary = {"task": "evolve", "epsilons": spec.epsilons, "g": spec.g, "t_end": ts[-1], "tol": tol,
               "initial_spins": st.spins, "H": hamiltonian(st, spec), "J3": st.j3,
               "R": gaudin_invariants(st, spec), "max_drift": tr.max_drift,
               "steps": {"accepted": tr.accepted, "rejected": tr.rejected}}
    out.json("summary.json", summary, always=True)
    return summary


def task_curve(cfg: RunConfig, out: Outputs) -> dict:
    from .curve import build_curve, separation_roots
    from .jacobian import AbelContext, analytic_velocity

    spec = _spectrum(cfg)
    st = _state(cfg, spec.n)
    curve = build_curve(st, spec)
    doc = {"task": "curve", "epsilons": spec.epsilons, "g": spec.g, "initial_spins": st.spins,
           "curve": curve.to_dict()}
    out.csv("branch_points.csv", ["k", "re", "im"],
            [(k, p.real, p.imag) for k, p in enumerate(curve.branch_points)])
    if curve.genus >= 1:
        sr = separation_roots(st, spec, curve=curve)
        ctx = AbelContext(curve)
        doc["periods"] = ctx.periods.to_dict()
        doc["riemann_vector"] = ctx.K
        doc["velocity"] = analytic_velocity(ctx)
        doc["separation_roots"] = {"u": sr.u, "sheets": sr.sheets, "cut_distance": sr.cut_distance}
        doc["abel_image"] = ctx.divisor_image(sr.u, sr.sheets)
    out.json("curve.json", doc, always=True)
    return {"task": "curve", "genus": curve.genus}


def _match(a, b):
    from scipy.optimize import linear_sum_assignment
    c = np.abs(a[:, None] - b[None, :])
    r, col = linear_sum_assignment(c)
    return float(c[r, col].max()) if len(a) else 0.0


def task_theta_flow(cfg: RunConfig, out: Outputs) -> dict:
    from .curve import build_curve, separation_roots
    from .dubrovin import integrate_dubrovin
    from .jacobian import AbelContext, analytic_velocity, calibrate_velocity, reconstruct_observables, track_divisor

    spec = _spectrum(cfg)
    if spec.n < 2:
        raise ValueError("theta-flow needs at least two levels (genus >= 1)")
    st = _state(cfg, spec.n)
    ts, tol = _times(cfg)
    mode = cfg.flow["mode"]
    curve = build_curve(st, spec)
    sr = separation_roots(st, spec, curve=curve)
    ctx = AbelContext(curve)
    z0 = ctx.divisor_image(sr.u, sr.sheets)
    v_an = analytic_velocity(ctx)
    v_cal = calibrate_velocity(ctx, sr.u, sr.y, spec, st)
    v_paper = np.zeros(ctx.g, complex)
    v_paper[-1] = 1j
    th = track_divisor(ctx, z0, v_cal, ts, list(zip(sr.u, sr.sheets)), mode=mode)
    dv = integrate_dubrovin(sr.u, sr.y, curve, spec, st, ts[-1], tol, t_eval=ts)
    _, jm_theta = reconstruct_observables(ts, th.u, st, spec)
    g = ctx.g
    header = (["t"] + _u_columns(g, "theta_") + ["theta_re_jminus", "theta_im_jminus"]
              + _u_columns(g, "dubrovin_") + ["dubrovin_re_jminus", "dubrovin_im_jminus", "deviation"])
    rows, dev_u, dev_j = [], 0.0, 0.0
    for k, t in enumerate(ts):
        du = _match(th.u[k], dv.u[k])
        dj = abs(jm_theta[k] - dv.jminus[k])
        dev_u, dev_j = max(dev_u, du), max(dev_j, dj)
        rows.append([t, *_u_values(th.u[k]), jm_theta[k].real, jm_theta[k].imag,
                     *_u_values(dv.u[k]), dv.jminus[k].real, dv.jminus[k].imag, max(du, dj)])
    out.csv("trajectory.csv", header, rows)
    report = {"task": "theta-flow", "mode": mode, "epsilons": spec.epsilons, "g": spec.g,
              "initial_spins": st.spins, "t_end": ts[-1], "samples": len(ts), "tol": tol,
              "velocity": {"analytic": v_an, "calibrated": v_cal, "paper": v_paper,
                           "calibrated_minus_analytic": float(np.max(np.abs(v_cal - v_an))),
                           "paper_minus_calibrated": float(np.max(np.abs(v_paper - v_cal)))},
              "max_deviation": {"u": dev_u, "jminus": dev_j},
              "theta_refinements": th.refinements}
    out.json("flow_report.json", report, always=True)
    return report


def _sweep_path(cfg: RunConfig):
    from .braid import ParameterPath
    sw = cfg.sweep
    samples = int(sw.get("samples", 32))
    if "lasso" in sw:
        la = sw["lasso"]
        return ParameterPath.lasso(to_complex(la["base"]), to_complex(la["center"]), float(la["radius"]),
                                   la.get("component", "g"), int(la.get("sides", 16)), samples,
                                   int(la.get("turns", 1)))
    wps = [{k: (to_complex(v) if k == "g" else float(v)) for k, v in w.items()} for w in sw["waypoints"]]
    return ParameterPath(wps, samples, bool(sw.get("closed", False)))


def task_sweep(cfg: RunConfig, out: Outputs) -> dict:
    from .braid import integer_rank, monodromy_matrix, probe_events, sweep_and_detect

    spec = _spectrum(cfg)
    st = _state(cfg, spec.n)
    path = _sweep_path(cfg)
    delta = float(cfg.sweep.get("delta", 0.05))
    if path.closed:
        res = monodromy_matrix(path, st, spec, delta)
    else:
        res = sweep_and_detect(path, st, spec, delta)
    t_probe = float(cfg.sweep.get("probe_t_max", 0.0))
    if t_probe > 0 and res.events:
        probe_events(res, path, st, spec, 0.25, t_probe, workers=threads())
    doc = {"task": "sweep", "epsilons": spec.epsilons, "g": spec.g, "initial_spins": st.spins,
           "delta": delta, "closed": path.closed, "waypoints": path.waypoints, **res.to_dict()}
    if res.matrix is not None:
        M = np.array(res.matrix, dtype=object)
        doc["rank_M_minus_I"] = integer_rank(M - np.eye(M.shape[0], dtype=int).astype(object))
    out.json("sweep.json", doc, always=True)
    out.csv("events.csv", ["event", "pair_a", "pair_b", "s_enter", "s_min", "s_exit", "min_distance"],
            [(i, *ev["pair"], ev["s_enter"], ev["s_min"], ev["s_exit"], ev["min_distance"])
             for i, ev in enumerate(res.events)])
    return doc


def task_levels(cfg: RunConfig, out: Outputs) -> dict:
    from fractions import Fraction

    from .braid import admissible_levels

    m_max = int(cfg.levels["m_max"])
    rows, ok = [], True
    for m in range(1, m_max + 1):
        lv = admissible_levels(m)
        ok &= (lv.k_plus_2 == Fraction(4, 8 * m + 1) and lv.c == Fraction(3 * (1 - 8 * m), 2)
               and lv.q_phase == Fraction(1, 4))
        rows.append([m, str(lv.k), str(lv.k_plus_2), str(lv.c), str(lv.q_phase), lv.q.real, lv.q.imag])
    out.csv("levels.csv", ["m", "k", "k_plus_2", "c", "q_phase_over_pi", "re_q", "im_q"], rows)
    doc = {"task": "levels", "m_max": m_max, "q_constant": ok,
           "first": admissible_levels(1).to_dict(), "last": admissible_levels(m_max).to_dict()}
    out.json("levels.json", doc, always=True)
    return doc


def task_pfaffian_demo(cfg: RunConfig, out: Outputs) -> dict:
    from .pfaffian import (ground_state_log_amplitude, log_pfaffian, pfaffian, two_hole_amplitude,
                           two_hole_log_amplitude)

    pf = cfg.pfaffian
    n = int(pf.get("particles", 6))
    seed = int(pf.get("seed", 0))
    rng = np.random.default_rng(seed)
    z = rng.normal(size=n) + 1j * rng.normal(size=n)
    if "holes" in pf:
        z1, z2 = (to_complex(h) for h in pf["holes"])
    else:
        z1, z2 = complex(rng.normal(), rng.normal()), complex(rng.normal(), rng.normal())
    la, ph = ground_state_log_amplitude(z)
    # exchange of the first two particles
    zs = z.copy()
    zs[[0, 1]] = zs[[1, 0]]
    la_s, ph_s = ground_state_log_amplitude(zs)
    swap_rel = abs(ph_s * np.exp(la_s - la) + ph)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    A = A - A.T
    p = pfaffian(A)
    lh, phh = two_hole_log_amplitude(z1, z2, z)
    rows = [(i, x.real, x.imag) for i, x in enumerate(z)]
    out.csv("particles.csv", ["i", "re_z", "im_z"], rows)
    doc = {"task": "pfaffian-demo", "particles": n, "seed": seed,
           "ground_state": {"log_abs": la, "phase": ph, "swap_relative_residual": swap_rel},
           "two_hole": {"holes": [z1, z2], "log_abs": lh, "phase": phh,
                        "coincident_holes_amplitude": two_hole_amplitude(z1, z1, z)},
           "random_skew": {"pfaffian": p, "pf_squared_minus_det": abs(p * p - np.linalg.det(A)),
                           "log_pfaffian": list(log_pfaffian(A))}}
    out.json("pfaffian.json", doc, always=True)
    return doc


TASK_RUNNERS = {
    "richardson": task_richardson,
    "evolve": task_evolve,
    "curve": task_curve,
    "theta-flow": task_theta_flow,
    "sweep": task_sweep,
    "levels": task_levels,
    "pfaffian-demo": task_pfaffian_demo,
}


def run(cfg: RunConfig, out_dir) -> dict:
    """Run one task and write its files plus ``manifest.json`` into ``out_dir``."""
    out = Outputs(Path(out_dir), int(cfg.output["precision"]), cfg.output["formats"])
    summary = TASK_RUNNERS[cfg.task](cfg, out)
    out.write({"task": cfg.task, "config": cfg.to_dict()})
    return summary


def _write_error(out_dir: Optional[str], payload: dict):
    doc = {"schema_version": SCHEMA_VERSION, **_clean(payload),
           "timestamp": datetime.now(timezone.utc).isoformat()}
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    sys.stderr.write(text)
    if out_dir is not None:
        try:
            d = Path(out_dir)
            d.mkdir(parents=True, exist_ok=True)
            data = text.encode()
            (d / "error.json").write_bytes(data)
            manifest = {"schema_version": SCHEMA_VERSION, "generator": f"gaudin-forge {__version__}",
                        "status": "error", "files": [{"file": "error.json", "bytes": len(data),
                                                      "sha256": hashlib.sha256(data).hexdigest()}]}
            (d / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        except OSError:
            pass


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="gaudin-forge", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--seed", type=int, help="random-state seed (overrides the config)")
    ap.add_argument("--tol", type=float, help="integration tolerance (overrides the config)")
    ap.add_argument("--mode", choices=("paper", "calibrated"), help="theta-flow velocity mode")
    ap.add_argument("--version", action="version", version=f"gaudin-forge {__version__}")
    args = ap.parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        _write_error(args.out, {"error": "ConfigError", "errors": ["--seed: expected an unsigned 64-bit integer"]})
        return 2
    cfg = None
    try:
        text = Path(args.config).read_text()
        cfg = parse_config(text)
        cfg = apply_overrides(cfg, args.seed, args.tol, args.mode)
        threads()
    except (ConfigError, OSError) as exc:
        errs = exc.errors if isinstance(exc, ConfigError) else [f"config: {exc}"]
        _write_error(args.out, {"error": type(exc).__name__, "errors": errs})
        return 2
    try:
        run(cfg, args.out)
    except Exception as exc:  # every numerical failure becomes a report
        _write_error(args.out, {"error": type(exc).__name__, "message": str(exc), "task": cfg.task,
                                "parameters": cfg.to_dict(),
                                "where": traceback.extract_tb(exc.__traceback__)[-1].name})
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
