"""Command-line entry point ``glblowup``.

Exit codes: 0 success, 2 validation error, 3 partial cell failures,
4 bound violation detected.
"""

import argparse
from dataclasses import replace
import json
import logging
from pathlib import Path
import sys

from . import io as gio
from .criteria import evaluate_all, default_gn_constant
from .evolve import run_to_blowup
from .groundstate import find_ground_state
from .lab import (cached_ground_state, cell_params, initial_state, load_config, load_record,
                  report, run_controls, run_experiment)
from .variance import cutoff_suite
from ._validation import ValidationError

EXIT_OK, EXIT_VALIDATION, EXIT_PARTIAL, EXIT_VIOLATION = 0, 2, 3, 4

log = logging.getLogger("glblowup")


def _config(args):
    if not args.config:
        raise ValidationError("--config is required")
    cfg = load_config(args.config)
    changes = {}
    if args.out:
        changes["out"] = args.out
    if args.seed is not None:
        changes["seed"] = args.seed
    return replace(cfg, **changes) if changes else cfg


def _status(result):
    if result["violations"]:
        return EXIT_VIOLATION
    if result["failed"]:
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_evolve(args):
    cfg = _config(args)
    index = args.cell or 0
    _, alpha, gamma, theta, rep = cfg.cells()[index]
    params = cell_params(cfg, alpha, gamma, theta)
    state = gio.read_state(args.state) if args.state else initial_state(cfg, alpha, index, rep)
    ctl, esc = run_controls(cfg)
    traj, verdict = run_to_blowup(state, params, ctl, **esc)
    out = Path(cfg.out) / f"evolve_{index:04d}"
    gio.write_trajectory(out, traj, verdict)
    print(gio.dumps({"stop_reason": traj.stop_reason, "t_end": traj.t_end,
                     "verdict": verdict.as_dict(), "out": str(out)}))
    return EXIT_OK


def cmd_criteria(args):
    cfg = _config(args)
    cells = cfg.cells() if args.cell is None else [cfg.cells()[args.cell]]
    records = []
    for index, alpha, gamma, theta, rep in cells:
        params = cell_params(cfg, alpha, gamma, theta)
        state = (gio.read_state(args.state) if args.state
                 else initial_state(cfg, alpha, index, rep))
        N = state.grid.dim
        Q = cached_ground_state(alpha, N) if (N - 2) * alpha < 4 and (
            cfg.variant == "GL2" or (cfg.variant == "GL" and gamma < 0)) else None
        A = default_gn_constant(alpha, N) if alpha < 4.0 / N else None
        for v in evaluate_all(state, params, Q, A, cfg.kaplan_lambda, cfg.criteria):
            records.append({"cell": index, **v.as_dict()})
    path = gio.write_jsonl(Path(cfg.out) / "verdicts.jsonl", records)
    for r in records:
        print(gio.dumps(r))
    log.info("wrote %s", path)
    return EXIT_OK


def cmd_groundstate(args):
    gs = find_ground_state(args.gamma, args.alpha, args.dim)
    out = Path(args.out or "groundstate")
    gio.write_ground_state(out, gs)
    print(gio.dumps(gs.metadata()))
    return EXIT_OK


def cmd_ckn(args):
    seed = 1 if args.seed is None else args.seed
    res = cutoff_suite(seed=seed, count=args.count)
    out = Path(args.out or "ckn")
    gio.write_json(out / "ckn_suite.json", res)
    print(gio.dumps({"passed": res["passed"], "ckn": res["ckn"]}))
    return EXIT_OK if res["passed"] else EXIT_VIOLATION


def cmd_sweep(args):
    cfg = _config(args)
    cells = None if args.cell is None else [args.cell]
    rec = run_experiment(cfg, jobs=args.jobs, cells=cells)
    result = report([rec], cfg.out)
    print(gio.dumps({"cells": len(rec.cells), "violations": len(result["violations"]),
                     "failed": result["failed"], "summary": str(result["summary"])}))
    return _status(result)


def cmd_report(args):
    out = args.out or (_config(args).out if args.config else None)
    if not out:
        raise ValidationError("report needs --out DIR (or --config)")
    if not (Path(out) / "config.json").exists():
        raise ValidationError(f"{out} holds no experiment record")
    result = report([load_record(out)], out)
    print(gio.dumps({"violations": len(result["violations"]), "failed": result["failed"]}))
    return _status(result)


def build_parser():
    p = argparse.ArgumentParser(prog="glblowup",
                                description="Ginzburg-Landau blowup laboratory")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--seed", type=int, metavar="S")
        sp.add_argument("--jobs", type=int, default=1, metavar="K")
        sp.add_argument("--cell", type=int, metavar="I")

    sp = sub.add_parser("evolve", help="single run with blowup-time estimate")
    common(sp)
    sp.add_argument("--state", metavar="CSV", help="initial state file (overrides family)")
    sp.set_defaults(func=cmd_evolve)

    sp = sub.add_parser("criteria", help="criterion verdicts for initial states")
    common(sp)
    sp.add_argument("--state", metavar="CSV")
    sp.set_defaults(func=cmd_criteria)

    sp = sub.add_parser("groundstate", help="compute a ground state by shooting")
    common(sp, config=False)
    sp.add_argument("--gamma", type=float, default=-1.0)
    sp.add_argument("--alpha", type=float, default=2.0)
    sp.add_argument("--dim", type=int, default=1)
    sp.set_defaults(func=cmd_groundstate)

    sp = sub.add_parser("ckn", help="cutoff invariants and localized inequality suite")
    common(sp, config=False)
    sp.add_argument("--count", type=int, default=200)
    sp.set_defaults(func=cmd_ckn)

    sp = sub.add_parser("sweep", help="run every cell of a config and write reports")
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("report", help="rebuild reports from stored cells")
    common(sp)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "jobs", 1) is not None and args.jobs < 1:
            raise ValidationError("--jobs must be >= 1")
        return args.func(args)
    except (ValidationError, IndexError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
