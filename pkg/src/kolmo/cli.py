"""Command-line front end.

    python -m kolmo verify {geometry,kernel,fractional,solver} --seed S [--out DIR]
    python -m kolmo run {regularity,hormander,weak11,averaging,lower-order} --seed S [options]

Resolved settings come from, in increasing priority: built-in defaults, a flat
``key=value`` file given with ``--config``, and command-line flags.  Exit status is 0 when
every check passes, 1 when some check fails and 2 for usage errors or infeasible grids.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .discretization import Grid, save_field
from .solver import ResolutionError

log = logging.getLogger("kolmo")

EXPERIMENTS = ("regularity", "hormander", "weak11", "averaging", "lower-order")
SUITES = ("geometry", "kernel", "fractional", "solver")
KEYS = ("d", "grid", "box", "p", "q", "n", "R", "seed", "out", "tol")

DEFAULTS = {
    "regularity": {"d": 1, "grid": "64,128,64", "box": "4,8,2", "p": "2", "q": "2", "n": 20, "out": "."},
    "hormander": {"d": 1, "n": 10, "out": "."},
    "weak11": {"d": 1, "grid": "256,512,128", "box": "1.6,3.2,0.8", "out": "."},
    "averaging": {"d": 1, "grid": "64,64", "box": "3,3", "R": "4,8,16,32", "p": "2,1.5,3", "q": "2,3,1.5", "out": "."},
    "lower-order": {"d": 1, "grid": "64,64,64", "box": "16,16,16", "out": "."},
    "verify": {"d": 1, "out": "."},
}


class UsageError(Exception):
    pass


def _floats(s, name):
    try:
        return [float(v) for v in str(s).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--{name} expects comma-separated numbers, got {s!r}") from None


def _ints(s, name):
    vals = _floats(s, name)
    if any(v != int(v) for v in vals):
        raise UsageError(f"--{name} expects integers, got {s!r}")
    return [int(v) for v in vals]


def _parse_tol(items) -> dict:
    out = {}
    for it in items or []:
        for part in str(it).split(","):
            if not part.strip():
                continue
            if "=" not in part:
                raise UsageError(f"--tol expects KEY=VAL, got {part!r}")
            k, v = part.split("=", 1)
            try:
                out[k.strip()] = float(v)
            except ValueError:
                raise UsageError(f"--tol value for {k!r} is not a number") from None
    return out


def read_config(path) -> dict:
    """Flat ``key=value`` file; ``#`` starts a comment; ``tol`` may repeat."""
    out: dict = {}
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{ln}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        k = k.lstrip("-")
        if k not in KEYS:
            raise UsageError(f"{path}:{ln}: unknown key {k!r}")
        if k == "tol":
            out.setdefault("tol", []).append(v)
        else:
            out[k] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kolmo", description="Kolmogorov-operator verification toolkit")
    ap.add_argument("--version", action="version", version=f"kolmo {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--d", type=int)
        p.add_argument("--grid", help="NX,NY[,NT]")
        p.add_argument("--box", help="LX,LY[,LT] (half-lengths)")
        p.add_argument("--p")
        p.add_argument("--q")
        p.add_argument("--n", type=int)
        p.add_argument("--R", help="comma-separated averaging windows")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--tol", action="append", help="KEY=VAL tolerance override (repeatable)")
        p.add_argument("--config", help="flat key=value file")
        p.add_argument("-v", "--verbose", action="store_true")
        # test hook: evaluate the kernel suite against a perturbed second-derivative kernel
        p.add_argument("--inject-fault", choices=["gamma1"], help=argparse.SUPPRESS)

    pv = sub.add_parser("verify", help="run a verification suite")
    pv.add_argument("suite", choices=SUITES)
    common(pv)
    pr = sub.add_parser("run", help="run an experiment")
    pr.add_argument("experiment", choices=EXPERIMENTS)
    common(pr)
    return ap


def resolve(args) -> dict:
    """Merge defaults, config file and flags."""
    key = "verify" if args.command == "verify" else args.experiment
    cfg = dict(DEFAULTS[key])
    tol = {}
    if args.config:
        fc = read_config(args.config)
        tol.update(_parse_tol(fc.pop("tol", [])))
        cfg.update(fc)
    for k in KEYS:
        v = getattr(args, k, None)
        if k == "tol":
            tol.update(_parse_tol(v))
        elif v is not None:
            cfg[k] = v
    cfg["tol"] = tol
    if cfg.get("seed") is None:
        raise UsageError("--seed is required (give it as a flag or in the config file)")
    cfg["seed"] = int(cfg["seed"])
    cfg["d"] = int(cfg["d"])
    if "n" in cfg:
        cfg["n"] = int(cfg["n"])
    cfg["command"] = args.command
    cfg["target"] = args.suite if args.command == "verify" else args.experiment
    return cfg


def make_grid(cfg, need_time: bool) -> Grid:
    N = _ints(cfg["grid"], "grid")
    L = _floats(cfg["box"], "box")
    want = 3 if need_time else 2
    if len(N) != want or len(L) != want:
        raise UsageError(f"--grid and --box need {want} entries for this command")
    try:
        if need_time:
            return Grid(cfg["d"], L[0], L[1], N[0], N[1], L[2], N[2])
        return Grid(cfg["d"], L[0], L[1], N[0], N[1])
    except ValueError as e:
        raise UsageError(f"infeasible grid: {e}") from None


def _write(rep, out: Path, cfg: dict):
    out.mkdir(parents=True, exist_ok=True)
    # the output location is left out so that reports do not depend on where they are written
    rep.params = {**rep.params, "config": {k: v for k, v in cfg.items() if k != "out"}}
    (out / "report.json").write_text(rep.to_json(), encoding="utf-8")
    (out / "trials.csv").write_bytes(rep.to_csv().encode("utf-8"))


def _status(rep) -> int:
    failed = [k for k, v in rep.criteria.items() if not v]
    for k, v in rep.criteria.items():
        print(f"{'PASS' if v else 'FAIL'}  {k}")
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def cmd_verify(cfg) -> tuple:
    from . import suites
    from .kernel import gamma1_xyt

    name = cfg["target"]
    kw = {"tol": cfg["tol"]}
    if name == "kernel" and cfg.get("inject_fault") == "gamma1":
        kw["gamma1_fn"] = lambda x, y, t: gamma1_xyt(x, y, t) * (1 + 1e-3)
    if name == "kernel" and cfg["d"] != 1:
        raise UsageError("the kernel suite runs in d = 1")
    if name == "geometry":
        kw["d"] = cfg["d"]
        if "n" in cfg:
            kw["n"] = cfg["n"]
    if name == "solver" and "n" in cfg:
        kw["n_nodes"] = cfg["n"]
    rep, field = suites.run_suite(name, cfg["seed"], **kw)
    return rep, field


def cmd_run(cfg):
    from . import estimator as est

    name = cfg["target"]
    tol = cfg["tol"]
    if name == "regularity":
        g = make_grid(cfg, True)
        p, q = _floats(cfg["p"], "p"), _floats(cfg["q"], "q")
        extra = {k: tol[k] for k in ("drift_tol", "dilation_tol") if k in tol}
        return est.regularity_ratio(p, q, cfg["d"], cfg["n"], g, cfg["seed"], **extra)
    if name == "hormander":
        n_mc = int(tol.get("n_mc", 200_000))
        return est.hormander_experiment(n_pairs=cfg["n"], n_mc=n_mc, seed=cfg["seed"], d=cfg["d"])
    if name == "weak11":
        g = make_grid(cfg, True)
        return est.weak11_experiment((0.2, 0.1, 0.05), g, cfg["seed"])
    if name == "averaging":
        g = make_grid(cfg, False)
        R = _floats(cfg["R"], "R")
        extra = {k: tol[k] for k in ("weak_tol", "pairing_tol", "drift_tol", "dilation_tol") if k in tol}
        return est.averaging_experiment(R, g, cfg["seed"], _floats(cfg["p"], "p"), _floats(cfg["q"], "q"), **extra)
    if name == "lower-order":
        g = make_grid(cfg, True)
        return est.lower_order_norms(g, seed=cfg["seed"], tol=tol.get("stability", 0.05))
    raise UsageError(f"unknown experiment {name!r}")


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:  # argparse already printed the message
        return int(e.code) if e.code is not None else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args)
        cfg["inject_fault"] = args.inject_fault
        t0 = time.perf_counter()
        field = None
        if args.command == "verify":
            rep, field = cmd_verify(cfg)
        else:
            rep = cmd_run(cfg)
    except UsageError as e:
        print(f"kolmo: error: {e}", file=sys.stderr)
        return 2
    except ResolutionError as e:
        print(f"kolmo: infeasible grid: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"kolmo: infeasible configuration: {e}", file=sys.stderr)
        return 2
    log.info("finished in %.1f s", time.perf_counter() - t0)
    out = Path(cfg["out"])
    if not cfg.get("inject_fault"):
        cfg.pop("inject_fault", None)
    _write(rep, out, cfg)
    if field is not None:
        save_field(field, out / "fields" / "manufactured_u", {"source": "manufactured", "seed": cfg["seed"]})
    return _status(rep)


if __name__ == "__main__":
    sys.exit(main())
