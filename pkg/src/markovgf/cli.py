"""Command-line driver: ``markovgf <command> [options]``.

Commands: landscape, flow, basin, verify, sample. Every command writes a
self-describing CSV or JSON file (stdout when ``--out`` is omitted).

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 integrator StepLimit (unless ``--allow-partial``).

Values that start with a minus sign must be attached with ``=``, e.g.
``--init=-0.5,0.3`` or ``--bounds=-2,2,-2,2``.
"""

import argparse
import datetime as _dt
import os
import sys

import numpy as np

from . import __version__
from .attention import attn_classify, attn_grad, attn_loss
from .canonical import (
    CLASSIFY_TOL,
    basin,
    classify_critical,
    energy_values,
    grad,
    loss,
)
from .errors import AmbiguousClass, MarkovGFError
from .flow import (
    FlowConfig,
    Mode,
    TerminatedBy,
    basin_sweep,
    integrate2d,
    integrate3d,
    lattice,
    verify_trajectory,
    with_overrides,
)
from .markov import RNG_ALGORITHM, SwitchKernel, sample_sequence
from .tables import render, render_metadata, write_atomic

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_STEP_LIMIT = 3


class ConfigError(Exception):
    pass


# --------------------------------------------------------------------------
# argument parsing helpers
# --------------------------------------------------------------------------


def _floats(text, what):
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if not all(np.isfinite(vals)):
        raise ConfigError(f"{what}: values must be finite")
    return vals


def parse_grid(text, dim):
    try:
        shape = [int(t) for t in text.lower().split("x")]
    except ValueError:
        raise ConfigError(f"--grid: expected e.g. 41x41, got {text!r}") from None
    if len(shape) != dim or min(shape) < 1:
        raise ConfigError(f"--grid needs {dim} positive sizes for this mode, got {text!r}")
    return shape


def parse_bounds(text, dim):
    vals = _floats(text, "--bounds")
    if len(vals) != 2 * dim:
        raise ConfigError(f"--bounds needs {2 * dim} numbers (lo,hi per coordinate)")
    pairs = list(zip(vals[0::2], vals[1::2]))
    if any(lo > hi for lo, hi in pairs):
        raise ConfigError("--bounds: each lo must be <= hi")
    return pairs


def _kernel(args, allow_degenerate=False):
    try:
        if allow_degenerate:
            return SwitchKernel(args.p, args.q)
        return SwitchKernel.nondegenerate(args.p, args.q)
    except MarkovGFError as exc:
        raise ConfigError(str(exc)) from None


def _flow_config(args):
    try:
        return with_overrides(FlowConfig(), grad_stop=args.tol_grad, t_max=args.t_max)
    except MarkovGFError as exc:
        raise ConfigError(str(exc)) from None


def _metadata(args, command, extra=None):
    meta = {
        "tool": "markovgf",
        "version": __version__,
        "command": command,
        "p": args.p,
        "q": args.q,
        "seed": args.seed,
        "rng": RNG_ALGORITHM,
    }
    if getattr(args, "mode", None):
        meta["mode"] = args.mode
    meta.update(extra or {})
    meta["config"] = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "exclude_timestamp")}
    if not args.exclude_timestamp:
        meta["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return meta


def _tolerances(cfg):
    return {
        "rel_tol": cfg.rel_tol,
        "abs_tol": cfg.abs_tol,
        "grad_stop": cfg.grad_stop,
        "t_max": cfg.t_max,
        "max_steps": cfg.max_steps,
    }


def _suffix(fmt):
    return ".json" if fmt == "json" else ".csv"


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def _safe_class(fn):
    try:
        return str(fn())
    except AmbiguousClass:
        return "Ambiguous"


def cmd_landscape(args):
    kernel = _kernel(args)
    mode = Mode(args.mode)
    shape = parse_grid(args.grid or ("101x101" if mode.dim == 2 else "41x41x5"), mode.dim)
    bounds = parse_bounds(args.bounds or ("-2,2,-2,2" if mode.dim == 2 else "-2,2,-2,2,-1,1"), mode.dim)
    pts = lattice(bounds, shape)
    rows = []
    if mode is Mode.CANONICAL2D:
        columns = ["e", "w", "loss", "energy", "grad_e", "grad_w", "class"]
        e, w = pts[:, 0], pts[:, 1]
        losses = np.asarray(loss(kernel, (e, w)))
        energies = np.asarray(energy_values(e, w))
        ge, gw = (np.asarray(g) for g in grad(kernel, (e, w)))
        for i in range(len(pts)):
            cls = _safe_class(lambda: classify_critical(kernel, (e[i], w[i]), CLASSIFY_TOL))
            rows.append([e[i], w[i], losses[i], energies[i], ge[i], gw[i], cls])
    else:
        columns = ["e", "w", "a", "loss", "energy", "grad_e", "grad_w", "grad_a", "class"]
        e, w, a = pts[:, 0], pts[:, 1], pts[:, 2]
        losses = np.asarray(attn_loss(kernel, e, w, a))
        energies = np.asarray(energy_values(e, w, a))
        ge, gw, ga = (np.asarray(g) for g in attn_grad(kernel, e, w, a))
        for i in range(len(pts)):
            cls = _safe_class(lambda: attn_classify(kernel, e[i], w[i], a[i], CLASSIFY_TOL))
            rows.append([e[i], w[i], a[i], losses[i], energies[i], ge[i], gw[i], ga[i], cls])
    meta = _metadata(args, "landscape", {"grid": "x".join(map(str, shape)), "classify_tol": CLASSIFY_TOL})
    write_atomic(args.out, render(args.format, meta, columns, rows))
    return EXIT_OK


def _flow_inits(args, mode):
    if args.init and args.gauss is not None:
        raise ConfigError("use either --init or --gauss, not both")
    if args.init:
        inits = [_floats(s, "--init") for s in args.init]
        if any(len(x) != mode.dim for x in inits):
            raise ConfigError(f"--init needs {mode.dim} comma-separated coordinates in {mode}")
        return np.array(inits)
    if args.gauss is not None:
        if not args.gauss > 0:
            raise ConfigError("--gauss must be positive")
        if args.count < 1:
            raise ConfigError("--count must be >= 1")
        rng = np.random.Generator(np.random.PCG64(args.seed))
        return rng.normal(0.0, args.gauss, (args.count, mode.dim))
    raise ConfigError("flow needs --init or --gauss")


def _report_dict(rep, kernel, init, mode):
    out = {
        "terminated_by": str(rep.terminated_by),
        "critical_class": str(rep.critical_class),
        "theta_lim": [float(v) for v in rep.theta_lim],
        "loss_final": rep.loss_final,
        "grad_norm_final": rep.grad_norm_final,
        "energy_drift": rep.energy_drift,
        "saddle_suspect": rep.saddle_suspect,
    }
    if rep.flag:
        out["flag"] = rep.flag
    if mode is Mode.CANONICAL2D:
        pred = basin(kernel, init)
        out["predicted_basin"] = str(pred)
        out["agrees_with_prediction"] = rep.critical_class is pred.critical_class
    return out


def _trajectory_paths(out, fmt, count):
    if out is None or out == "-":
        return [None] * count
    if count == 1:
        return [out]
    stem, ext = os.path.splitext(out)
    ext = ext or _suffix(fmt)
    return [f"{stem}_{i:04d}{ext}" for i in range(count)]


def cmd_flow(args):
    kernel = _kernel(args)
    mode = Mode(args.mode)
    cfg = _flow_config(args)
    inits = _flow_inits(args, mode)
    paths = _trajectory_paths(args.out, args.format, len(inits))
    integrate = integrate2d if mode is Mode.CANONICAL2D else integrate3d
    names = ["e", "w"] if mode is Mode.CANONICAL2D else ["e", "w", "a"]
    columns = ["t"] + names + ["loss", "energy", "grad_norm"]
    step_limited = 0
    for i, (init, path) in enumerate(zip(inits, paths)):
        traj = integrate(kernel, init, cfg)
        rep = verify_trajectory(traj, kernel)
        if traj.terminated_by is TerminatedBy.STEP_LIMIT:
            step_limited += 1
        rows = [
            [traj.times[j], *traj.states[j], traj.losses[j], traj.energies[j], traj.grad_norms[j]]
            for j in range(len(traj))
        ]
        meta = _metadata(args, "flow", {**_tolerances(cfg), "index": i, "init": [float(v) for v in init]})
        footer = {"limit_report": _report_dict(rep, kernel, init, mode)}
        write_atomic(path, render(args.format, meta, columns, rows, footer))
        if path is not None:
            print(
                f"{i} {path} {rep.terminated_by} {rep.critical_class} loss_final={rep.loss_final!r}",
                file=sys.stderr,
            )
    if step_limited and not args.allow_partial:
        print(f"{step_limited} trajectories hit the step limit", file=sys.stderr)
        return EXIT_STEP_LIMIT
    return EXIT_OK


def cmd_basin(args):
    kernel = _kernel(args)
    mode = Mode(args.mode)
    cfg = _flow_config(args)
    shape = parse_grid(args.grid or ("41x41" if mode.dim == 2 else "11x11x5"), mode.dim)
    bounds = parse_bounds(args.bounds or ("-2,2,-2,2" if mode.dim == 2 else "-2,2,-2,2,-1,1"), mode.dim)
    if mode is Mode.ATTENTION3D and args.predicted_only:
        raise ConfigError("no basin prediction exists in attention3d mode")
    sweep = basin_sweep(
        kernel, lattice(bounds, shape), cfg, band=args.band, mode=mode, predicted_only=args.predicted_only
    )
    names = ["e", "w"] if mode is Mode.CANONICAL2D else ["e", "w", "a"]
    columns = names + ["predicted", "integrated", "agree"]
    rows = []
    step_limited = 0
    for r in sweep.rows:
        rows.append([*r.init, r.predicted, r.integrated, r.agree])
        if r.report is not None and r.report.terminated_by is TerminatedBy.STEP_LIMIT:
            step_limited += 1
    summary = {
        "cells": len(sweep.rows),
        "excluded_in_band": sweep.n_excluded,
        "agreement_rate": sweep.agreement_rate if not args.predicted_only else None,
        "disagreements": sweep.n_disagree,
    }
    meta = _metadata(args, "basin", {**_tolerances(cfg), "grid": "x".join(map(str, shape)), "band": args.band})
    write_atomic(args.out, render(args.format, meta, columns, rows, {"summary": summary}))
    if args.out not in (None, "-"):
        print(f"agreement_rate={summary['agreement_rate']} cells={summary['cells']}", file=sys.stderr)
    if step_limited and not args.allow_partial:
        return EXIT_STEP_LIMIT
    return EXIT_OK


def cmd_verify(args):
    from .checks import CHECKS, run_all

    if args.fd_h is not None and not args.fd_h > 0:
        raise ConfigError("--fd-h must be positive")
    known = [name for name, _ in CHECKS]
    if args.only:
        bad = [n for n in args.only if n not in known]
        if bad:
            raise ConfigError(f"unknown check(s) {bad}; choose from {known}")
    results = run_all(seed=args.seed, fd_h=args.fd_h, only=args.only)
    columns = ["check", "passed", "worst", "threshold", "detail"]
    rows = []
    for r in results:
        d = r.as_dict()
        detail = ";".join(f"{k}={v}" for k, v in sorted(d["detail"].items()))
        rows.append([r.name, r.passed, r.value, r.threshold, detail.replace(",", " ")])
        print(r.line(), file=sys.stderr)
    all_ok = all(r.passed for r in results)
    meta = _metadata(args, "verify", {"fd_h": args.fd_h if args.fd_h is not None else "default"})
    write_atomic(args.out, render(args.format, meta, columns, rows, {"all_passed": all_ok}))
    return EXIT_OK if all_ok else EXIT_VERIFY_FAILED


def cmd_sample(args):
    # sampling is well defined on p + q = 1 (i.i.d. bits)
    kernel = _kernel(args, allow_degenerate=True)
    if args.n < 1:
        raise ConfigError("--n must be >= 1")
    seq = sample_sequence(kernel, args.n, args.seed)
    meta = _metadata(args, "sample", {"n": args.n})
    if args.format == "json":
        write_atomic(args.out, render("json", meta, ["bits"], [[str(seq)]]))
    else:
        write_atomic(args.out, render_metadata(meta) + str(seq) + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="markovgf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"markovgf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, flow=False):
        sp.add_argument("--p", type=float, required=True, help="0 -> 1 switching probability")
        sp.add_argument("--q", type=float, required=True, help="1 -> 0 switching probability")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None, help="output path ('-' or omitted: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--exclude-timestamp", action="store_true", help="omit the timestamp metadata field")
        if flow:
            sp.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.CANONICAL2D.value)
            sp.add_argument("--tol-grad", type=float, default=None, help="gradient-norm stopping threshold")
            sp.add_argument("--t-max", type=float, default=None, help="maximal integration time")
            sp.add_argument("--allow-partial", action="store_true", help="exit 0 even if a trajectory hits StepLimit")

    sp = sub.add_parser("landscape", help="loss, energy, gradient and class on a grid")
    common(sp)
    sp.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.CANONICAL2D.value)
    sp.add_argument("--grid", default=None, help="resolution, e.g. 101x101 or 41x41x5")
    sp.add_argument("--bounds", default=None, help="lo,hi per coordinate, e.g. --bounds=-2,2,-2,2")
    sp.set_defaults(func=cmd_landscape)

    sp = sub.add_parser("flow", help="integrate gradient-flow trajectories")
    common(sp, flow=True)
    sp.add_argument("--init", action="append", default=None, help="initial point e,w[,a]; repeatable")
    sp.add_argument("--gauss", type=float, default=None, help="std of Gaussian initial points")
    sp.add_argument("--count", type=int, default=1, help="number of Gaussian initial points")
    sp.set_defaults(func=cmd_flow)

    sp = sub.add_parser("basin", help="predicted vs integrated basin map")
    common(sp, flow=True)
    sp.add_argument("--grid", default=None)
    sp.add_argument("--bounds", default=None)
    sp.add_argument("--band", type=float, default=1e-3, help="excluded width around basin boundaries")
    sp.add_argument("--predicted-only", action="store_true", help="skip integration")
    sp.set_defaults(func=cmd_basin)

    sp = sub.add_parser("verify", help="run the verification suite")
    sp.add_argument("--p", type=float, default=0.9, help="recorded in metadata only")
    sp.add_argument("--q", type=float, default=0.9, help="recorded in metadata only")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--exclude-timestamp", action="store_true")
    sp.add_argument("--fd-h", type=float, default=None, help="finite-difference step for the gradient check")
    sp.add_argument("--only", action="append", default=None, help="run only the named check; repeatable")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("sample", help="draw a bit sequence from the chain")
    common(sp)
    sp.add_argument("--n", type=int, required=True)
    sp.set_defaults(func=cmd_sample)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"markovgf: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MarkovGFError as exc:
        print(f"markovgf: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
