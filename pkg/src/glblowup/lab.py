"""Experiment configs, parameter sweeps, persistence and reporting.

A config is an INI file (or JSON with the same sections) such as::

    [experiment]
    name = levine
    variant = GL
    seed = 0
    criteria = blowup_upper_bound, global_lower_bound

    [params]
    alpha = 2
    gamma = 0
    theta = 0, 0.3, 0.6

    [initial]
    family = gaussian
    c = 2

    [grid]
    kind = periodic1d
    dim = 1
    extent = 20
    n = 4096

    [controls]
    dt0 = 1e-3
    t_budget = 5

List-valued keys in ``[params]`` span the sweep grid; every other key is
scalar.  See ``docs/config.md`` for the full schema.
"""

from concurrent.futures import ProcessPoolExecutor
import configparser
from dataclasses import dataclass, field as dc_field, asdict
from functools import lru_cache
import hashlib
import itertools
import json
import logging
import math
from pathlib import Path
import time

import numpy as np

from . import io as gio
from .criteria import (CRITERIA, default_gn_constant, evaluate_all, lemma_constant,
                       measure_tau)
from .evolve import Controls, run_to_blowup
from .field import (PROFILE_FAMILIES, VARIANTS, Params, make_grid, random_profile,
                    sample_profile)
from .functionals import identity_residuals, report as functional_report
from .groundstate import find_ground_state
from ._validation import ValidationError, check_theta

log = logging.getLogger(__name__)

CONTROL_KEYS = {"dt0": float, "t_budget": float, "c_dt": float, "dt_min": float,
                "leak_tol": float, "radial_method": str, "m0_factor": float,
                "levels": int, "ratio": float}
INITIAL_FAMILIES = PROFILE_FAMILIES + ("random",)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    variant: str = "GL"
    alphas: tuple = (2.0,)
    gammas: tuple = (0.0,)
    thetas: tuple = (0.0,)
    family: str = "gaussian"
    initial: dict = dc_field(default_factory=dict)
    replicates: int = 1
    grid: dict = dc_field(default_factory=lambda: {"kind": "periodic1d", "dim": 1,
                                                   "extent": 20.0, "n": 1024})
    controls: dict = dc_field(default_factory=dict)
    criteria: tuple = CRITERIA
    kaplan_lambda: float = 1.0
    seed: int = 0
    out: str = "runs"

    def __post_init__(self):
        for key in ("alphas", "gammas", "thetas"):
            vals = tuple(float(v) for v in getattr(self, key))
            if not vals:
                raise ValidationError(f"{key} must be non-empty")
            object.__setattr__(self, key, vals)
        object.__setattr__(self, "thetas", tuple(check_theta(t) for t in self.thetas))
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}")
        if self.family not in INITIAL_FAMILIES:
            raise ValidationError(f"family must be one of {INITIAL_FAMILIES}")
        if any(a <= 0 for a in self.alphas):
            raise ValidationError("alpha values must be positive")
        unknown = set(self.criteria) - set(CRITERIA)
        if unknown:
            raise ValidationError(f"unknown criteria {sorted(unknown)}")
        bad = set(self.controls) - set(CONTROL_KEYS)
        if bad:
            raise ValidationError(f"unknown control keys {sorted(bad)}")
        if int(self.replicates) < 1:
            raise ValidationError("replicates must be >= 1")
        object.__setattr__(self, "criteria", tuple(self.criteria))
        make_grid(self.grid["kind"], self.grid["dim"], self.grid["extent"], self.grid["n"])

    def as_dict(self):
        d = asdict(self)
        for k in ("alphas", "gammas", "thetas", "criteria"):
            d[k] = list(d[k])
        return d

    def config_hash(self):
        """Hash of everything that affects results (not the output directory)."""
        d = self.as_dict()
        d.pop("out")
        return hashlib.sha256(gio.dumps(d).encode()).hexdigest()[:16]

    def cells(self):
        """Sweep cells as ``(index, alpha, gamma, theta, replicate)``."""
        prod = itertools.product(self.alphas, self.gammas, self.thetas,
                                 range(int(self.replicates)))
        return [(i, a, g, t, r) for i, (a, g, t, r) in enumerate(prod)]


def _parse_value(text):
    text = text.strip()
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _parse_list(text):
    return tuple(float(v) for v in str(text).replace(";", ",").split(",") if v.strip())


def config_from_mapping(m):
    """Build a config from nested sections (parsed INI or JSON)."""
    exp = dict(m.get("experiment", {}))
    params = dict(m.get("params", {}))
    initial = dict(m.get("initial", {}))
    grid = dict(m.get("grid", {}))
    controls = dict(m.get("controls", {}))

    def lst(v, default):
        if v is None:
            return default
        if isinstance(v, (list, tuple)):
            return tuple(float(x) for x in v)
        return _parse_list(v) if isinstance(v, str) else (float(v),)

    crit = exp.get("criteria", "all")
    if isinstance(crit, str):
        crit = CRITERIA if crit.strip() == "all" else tuple(
            c.strip() for c in crit.split(",") if c.strip())
    family = initial.pop("family", "gaussian")
    ctl = {}
    for k, v in controls.items():
        if k not in CONTROL_KEYS:
            raise ValidationError(f"unknown control key {k!r}")
        ctl[k] = CONTROL_KEYS[k](v)
    g = {"kind": grid.get("kind", "periodic1d"), "dim": int(grid.get("dim", 1)),
         "extent": float(grid.get("extent", 20.0)), "n": int(grid.get("n", 1024))}
    return ExperimentConfig(
        name=str(exp.get("name", "experiment")),
        variant=str(exp.get("variant", "GL")),
        alphas=lst(params.get("alpha"), (2.0,)),
        gammas=lst(params.get("gamma"), (0.0,)),
        thetas=lst(params.get("theta"), (0.0,)),
        family=family,
        initial={k: _parse_value(v) if isinstance(v, str) else v for k, v in initial.items()},
        replicates=int(exp.get("replicates", 1)),
        grid=g,
        controls=ctl,
        criteria=tuple(crit),
        kaplan_lambda=float(exp.get("kaplan_lambda", 1.0)),
        seed=int(exp.get("seed", 0)),
        out=str(exp.get("out", "runs")),
    )


def load_config(path):
    """Read an INI (``.ini``/``.cfg``) or JSON config."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config {path} not found")
    if path.suffix.lower() == ".json":
        return config_from_mapping(json.loads(path.read_text()))
    cp = configparser.ConfigParser()
    cp.read(path)
    return config_from_mapping({s: dict(cp[s]) for s in cp.sections()})


# -- cells ------------------------------------------------------------------

@lru_cache(maxsize=None)
def cached_ground_state(alpha, dim):
    return find_ground_state(-1.0, alpha, dim)


def cell_params(cfg, alpha, gamma, theta):
    if cfg.variant == "NLS":
        return Params(alpha, gamma, math.pi / 2, "NLS")
    if cfg.variant == "GL2":
        return Params(alpha, -1.0, theta, "GL2")
    return Params(alpha, gamma, theta, "GL")


def initial_state(cfg, alpha, index, replicate):
    g = cfg.grid
    grid = make_grid(g["kind"], g["dim"], g["extent"], g["n"])
    if cfg.family == "random":
        rng = np.random.default_rng([cfg.seed, replicate])
        state = random_profile(grid, rng, n_bumps=int(cfg.initial.get("n_bumps", 3)),
                               max_radius=cfg.initial.get("max_radius"))
        scale = float(cfg.initial.get("scale", 1.0))
        return state.replace(values=scale * state.values)
    pars = dict(cfg.initial)
    if cfg.family == "scaled_ground_state":
        pars["ground_state"] = cached_ground_state(alpha, grid.dim)
    return sample_profile(cfg.family, pars, grid)


def run_controls(cfg):
    c = {k: v for k, v in cfg.controls.items() if k not in ("m0_factor", "levels", "ratio")}
    return Controls(**c), {k: cfg.controls[k] for k in ("m0_factor", "levels", "ratio")
                           if k in cfg.controls}


def _finite_or_none(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


def cell_violations(cell):
    """Bound violations of one cell, by arithmetic on its recorded numbers."""
    out = []
    bu = cell.get("blowup") or {}
    lo, hi = (bu.get("t_bracket") or [None, None])
    for v in cell.get("criteria", []):
        tu, tl = v.get("t_upper"), v.get("t_lower")
        if isinstance(tu, (int, float)):
            if bu.get("blew_up") and lo is not None and lo > tu:
                out.append({"cell": cell["index"], "criterion": v["name"], "kind": "upper",
                            "bound": tu, "measured": lo})
            elif (not bu.get("blew_up") and cell.get("stop_reason") == "budget_reached"
                  and cell.get("t_end", 0.0) > tu):
                out.append({"cell": cell["index"], "criterion": v["name"],
                            "kind": "upper_no_blowup", "bound": tu,
                            "measured": cell.get("t_end")})
        if isinstance(tl, (int, float)) and bu.get("blew_up") and hi is not None and tl > hi:
            out.append({"cell": cell["index"], "criterion": v["name"], "kind": "lower",
                        "bound": tl, "measured": hi})
        if tl == "inf" and bu.get("blew_up"):
            out.append({"cell": cell["index"], "criterion": v["name"], "kind": "global",
                        "bound": "inf", "measured": hi})
    lemma = cell.get("lemma")
    if lemma and lemma.get("applicable") and bu.get("blew_up"):
        if lo is not None and lo > lemma["bound"]:
            out.append({"cell": cell["index"], "criterion": "lemma_tau", "kind": "upper",
                        "bound": lemma["bound"], "measured": lo})
    return out


def run_cell(cfg, index):
    """Evaluate criteria, run the solver and summarise one cell (never raises)."""
    cells = cfg.cells()
    if not 0 <= index < len(cells):
        raise ValidationError(f"cell index {index} out of range 0..{len(cells) - 1}")
    _, alpha, gamma, theta, rep = cells[index]
    t0 = time.perf_counter()
    cell = {"index": index, "alpha": alpha, "gamma": gamma, "theta": theta,
            "replicate": rep, "variant": cfg.variant, "config_hash": cfg.config_hash(),
            "status": "ok", "skip_reason": None, "criteria": [], "blowup": None}
    try:
        params = cell_params(cfg, alpha, gamma, theta)
        state = initial_state(cfg, alpha, index, rep)
        N = state.grid.dim
        Q = None
        if "potential_well_bound" in cfg.criteria and (N - 2) * alpha < 4 and (
                cfg.variant == "GL2" or (cfg.variant == "GL" and gamma < 0)):
            Q = cached_ground_state(alpha, N)
        A = None
        if "global_lower_bound" in cfg.criteria and alpha < 4.0 / N and params.theta < math.pi / 2:
            A = default_gn_constant(alpha, N)
        verdicts = evaluate_all(state, params, Q, A, cfg.kaplan_lambda, cfg.criteria)
        cell["criteria"] = [v.as_dict() for v in verdicts]
        rep0 = functional_report(state, alpha)
        cell["initial"] = {"mass": rep0.mass, "energy": rep0.energy, "sup_norm": rep0.sup_norm}
        if any(v.prediction == "global" for v in verdicts):
            cell["status"] = "global_certificate"
            cell["skip_reason"] = "criteria certify global existence"
        else:
            ctl, esc = run_controls(cfg)
            traj, verdict = run_to_blowup(state, params, ctl, **esc)
            cell["blowup"] = verdict.as_dict()
            cell["stop_reason"] = traj.stop_reason
            cell["t_end"] = traj.t_end
            cell["steps"] = traj.steps
            if len(traj.reports) >= 3:
                res = identity_residuals(traj, params)
                cell["residuals"] = res.summary()
            tau, censored = measure_tau(traj)
            cell["lemma"] = {"K": lemma_constant(alpha), "tau": tau, "censored": censored,
                             "bound": (alpha + 4) / alpha * tau,
                             "applicable": bool(rep0.energy < 0)}
            if not verdict.blew_up:
                cell["status"] = "undecided"
                cell["skip_reason"] = verdict.diagnostic
    except ValidationError as exc:
        cell["status"] = "failed"
        cell["skip_reason"] = f"validation: {exc}"
    except Exception as exc:  # solver failures are recorded per cell, never fatal
        log.exception("cell %d failed", index)
        cell["status"] = "failed"
        cell["skip_reason"] = f"{type(exc).__name__}: {exc}"
    cell["violations"] = cell_violations(cell)
    cell["wall_time"] = time.perf_counter() - t0
    return cell


def _cell_path(out, index):
    return Path(out) / "cells" / f"cell_{index:04d}.json"


def _run_and_store(cfg, index):
    cell = run_cell(cfg, index)
    gio.write_json(_cell_path(cfg.out, index), cell)
    return cell


@dataclass
class ExperimentRecord:
    config_hash: str
    name: str
    cells: list

    @property
    def violations(self):
        return [v for c in self.cells for v in c.get("violations", [])]

    @property
    def failed(self):
        return [c for c in self.cells if c["status"] == "failed"]


def run_experiment(cfg, jobs=1, cells=None):
    """Run every cell (or the given indices), reusing completed cells on disk."""
    h = cfg.config_hash()
    out = Path(cfg.out)
    gio.write_json(out / "config.json", {"config_hash": h, **cfg.as_dict()})
    wanted = [c[0] for c in cfg.cells()] if cells is None else list(cells)
    done, todo = {}, []
    for i in wanted:
        p = _cell_path(out, i)
        if p.exists():
            prev = json.loads(p.read_text())
            if prev.get("config_hash") == h:
                done[i] = prev
                continue
        todo.append(i)
    if todo:
        log.info("running %d cells (%d cached)", len(todo), len(done))
        if jobs > 1 and len(todo) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                for i, _ in zip(todo, ex.map(_run_and_store, [cfg] * len(todo), todo)):
                    done[i] = json.loads(_cell_path(out, i).read_text())
        else:
            for i in todo:
                _run_and_store(cfg, i)
                done[i] = json.loads(_cell_path(out, i).read_text())
    return ExperimentRecord(h, cfg.name, [done[i] for i in sorted(done)])


# -- sweep tables and reports ----------------------------------------------

def _bound(cell, name, key):
    for v in cell.get("criteria", []):
        if v["name"] == name:
            return v.get(key)
    return None


SUMMARY_COLUMNS = ("index", "alpha", "gamma", "theta", "cos_theta", "replicate", "variant",
                   "status", "skip_reason", "stop_reason", "blew_up", "t_lo", "t_hi", "t_est",
                   "t_upper", "t_upper_source", "t_lower", "tau", "tau_censored",
                   "lemma_bound", "n_violations", "wall_time")


def summary_row(cell):
    bu = cell.get("blowup") or {}
    lo, hi = (bu.get("t_bracket") or [None, None])
    uppers = [(v["t_upper"], v["name"]) for v in cell.get("criteria", [])
              if isinstance(v.get("t_upper"), (int, float))]
    lowers = [v["t_lower"] for v in cell.get("criteria", []) if v.get("t_lower") is not None]
    tu, src = min(uppers) if uppers else (None, None)
    tl = None
    if lowers:
        tl = "inf" if "inf" in lowers else max(lowers)
    lemma = cell.get("lemma") or {}
    theta = cell["theta"] if cell["variant"] != "NLS" else math.pi / 2
    return {"index": cell["index"], "alpha": cell["alpha"], "gamma": cell["gamma"],
            "theta": theta, "cos_theta": 0.0 if theta == math.pi / 2 else math.cos(theta),
            "replicate": cell.get("replicate", 0), "variant": cell["variant"],
            "status": cell["status"], "skip_reason": cell.get("skip_reason") or "",
            "stop_reason": cell.get("stop_reason", ""), "blew_up": bu.get("blew_up", False),
            "t_lo": lo, "t_hi": hi, "t_est": bu.get("t_estimate"), "t_upper": tu,
            "t_upper_source": src or "", "t_lower": tl, "tau": lemma.get("tau"),
            "tau_censored": lemma.get("censored"), "lemma_bound": lemma.get("bound"),
            "n_violations": len(cell.get("violations", [])),
            "wall_time": cell.get("wall_time")}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


@dataclass
class SweepTable:
    rows: list

    COLUMNS = ("theta", "cos_theta", "t_lo", "t_hi", "t_est", "t_upper", "t_lower",
               "cos_theta_T", "T_over_log")

    def column(self, name):
        return np.array([np.nan if r[name] is None else float(r[name]) for r in self.rows])

    def scaling_ratio(self):
        """max/min of ``cos(theta) T`` over cells with a measured blowup."""
        v = self.column("cos_theta_T")
        v = v[np.isfinite(v)]
        return float(v.max() / v.min()) if len(v) else math.nan


def theta_sweep(cfg, jobs=1):
    """Run a theta sweep and tabulate the scaling diagnostics."""
    rec = run_experiment(cfg, jobs)
    rows = []
    for cell in rec.cells:
        s = summary_row(cell)
        T = s["t_est"] if s["blew_up"] else None
        c = s["cos_theta"]
        tl = s["t_lower"]
        rows.append({"theta": s["theta"], "cos_theta": c, "t_lo": s["t_lo"], "t_hi": s["t_hi"],
                     "t_est": T, "t_upper": _bound(cell, "blowup_upper_bound", "t_upper"),
                     "t_lower": math.inf if tl == "inf" else tl,
                     "cos_theta_T": c * T if T is not None else None,
                     "T_over_log": T / math.log(1 / c) if T is not None and 0 < c < 1 else None,
                     "status": s["status"]})
    return rec, SweepTable(rows)


def report(records, out):
    """Write ``summary.csv``, ``violations.jsonl``, ``verdicts.jsonl`` and ``long.csv``."""
    records = list(records)
    if not records:
        raise ValidationError("report needs at least one record")
    out = Path(out)
    cells = [c for r in records for c in r.cells]
    rows = [summary_row(c) for c in cells]
    gio.write_table(out / "summary.csv", SUMMARY_COLUMNS,
                    ([_fmt(r[k]) for k in SUMMARY_COLUMNS] for r in rows))
    violations = [v for c in cells for v in c.get("violations", [])]
    gio.write_jsonl(out / "violations.jsonl", violations)
    gio.write_jsonl(out / "verdicts.jsonl",
                    ({"cell": c["index"], **v} for c in cells for v in c.get("criteria", [])))
    long_rows = []
    for r in rows:
        for k in ("t_lo", "t_hi", "t_est", "t_upper", "t_lower", "tau", "lemma_bound"):
            if r[k] is not None:
                long_rows.append((r["index"], r["alpha"], r["gamma"], r["theta"], k, _fmt(r[k])))
    gio.write_table(out / "long.csv", ("cell", "alpha", "gamma", "theta", "quantity", "value"),
                    long_rows)
    return {"summary": out / "summary.csv", "violations": violations,
            "failed": [c["index"] for c in cells if c["status"] == "failed"]}


def load_record(out):
    """Reassemble a record from the cell files under ``out``."""
    out = Path(out)
    cfg = json.loads((out / "config.json").read_text())
    cells = [json.loads(p.read_text()) for p in sorted((out / "cells").glob("cell_*.json"))]
    return ExperimentRecord(cfg["config_hash"], cfg.get("name", ""), cells)
