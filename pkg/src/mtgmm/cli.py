"""Command-line entry point: ``mtgmm {risk,phase,simulate,estimate}``.

Exit codes: 0 success, 1 usage or config error, 2 solver non-convergence.
Every file written with ``--out`` gets a ``<out>.manifest.json`` companion.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .model import ValidatedEnsemble, load_config, validate
from .phase import Axis, apply_axis, fmt, grid_csv, scan
from .solver import NoConvergenceError, SolverOptions, risk_from_overlaps, risk_report
from .synth import dump_dataset, empirical_risk, estimate_parameters, fit_supervised, generate


class UsageError(Exception):
    pass


def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _encode(x, indent: int = 0) -> str:
    """JSON text with every float printed to 17 significant digits."""
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(x, dict):
        if not x:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in x.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(x, (list, tuple)):
        if not x:
            return "[]"
        return "[" + ", ".join(_encode(v, indent + 1) for v in x) + "]"
    if isinstance(x, (bool, np.bool_)) or x is None:
        return json.dumps(None if x is None else bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if np.isnan(x):
            return "null"
        if np.isinf(x):
            return json.dumps("inf" if x > 0 else "-inf")
        return format(x, ".17g")
    return json.dumps(x)


def dumps(obj) -> str:
    return _encode(obj) + "\n"


def _emit(args, text: str, started: float, ens: ValidatedEnsemble, extra: dict | None = None) -> None:
    if args.out is None:
        sys.stdout.write(text)
        return
    atomic_write(args.out, text)
    manifest = {
        "subcommand": args.command,
        "argv": args.argv,
        "config": ens.config.to_dict(),
        "seed": getattr(args, "seed", None),
        "solver_options": vars(_solver_options(args)),
        "outputs": [os.path.abspath(args.out)],
        "version": __version__,
        "duration_s": time.perf_counter() - started,
    }
    manifest.update(extra or {})
    atomic_write(args.out + ".manifest.json", dumps(manifest))


def _solver_options(args) -> SolverOptions:
    return SolverOptions(damping=args.damping, tol=args.tol, max_iter=args.max_iter)


def _load(args) -> ValidatedEnsemble:
    ens = load_config(args.config)
    cfg = ens.config
    for item in args.param or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects NAME=VALUE, got {item!r}")
        try:
            cfg = apply_axis(cfg, name.strip(), float(value))
        except ValueError as exc:
            raise UsageError(f"--param {item}: {exc}") from None
    return validate(cfg)


def _axes(args, allowed: tuple[int, int]) -> list[Axis]:
    sweeps = args.sweep or []
    lo, hi = allowed
    if not lo <= len(sweeps) <= hi:
        raise UsageError(f"expected {lo}-{hi} --sweep options, got {len(sweeps)}")
    axes = []
    for name, start, stop, steps in sweeps:
        try:
            axes.append(Axis(name, float(start), float(stop), int(steps)))
        except ValueError as exc:
            raise UsageError(f"--sweep {name}: {exc}") from None
    return axes


def _point_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence([seed, k]).generate_state(1, np.uint64)[0])


def _map(fn, items, threads):
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- subcommands ---------------------------------------------------------------

def cmd_risk(args) -> int:
    started = time.perf_counter()
    ens = _load(args)
    code = 0
    try:
        report = risk_report(ens, _solver_options(args))
    except NoConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        report, code = risk_from_overlaps(exc.overlaps), 2
    _emit(args, dumps(report.to_dict()), started, ens)
    return code


def cmd_phase(args) -> int:
    started = time.perf_counter()
    ens = _load(args)
    axes = _axes(args, (1, 2))
    grid = scan(ens, axes, with_risk=args.with_risk, options=_solver_options(args), threads=args.threads)
    _emit(args, grid_csv(grid), started, ens,
          {"axes": [{"name": a.name, "start": a.start, "stop": a.stop, "steps": a.steps} for a in axes]})
    return 0


def cmd_simulate(args) -> int:
    started = time.perf_counter()
    ens = _load(args)
    axes = _axes(args, (0, 1))
    if args.n_test < 1:
        raise UsageError(f"--n-test must be >= 1, got {args.n_test}")
    if args.dump_hidden and not args.dump:
        raise UsageError("--dump-hidden needs --dump DIR")
    if args.D < 2:
        raise UsageError(f"-D must be >= 2, got {args.D}")
    if not np.all(ens.eta == 1):
        warnings.warn("not every task is fully labeled; the classifier is optimal only in the supervised case")

    points = list(axes[0].values) if axes else [None]

    def run(k):
        e = ens if points[k] is None else validate(apply_axis(ens.config, axes[0].name, points[k]))
        N = args.N if args.N else np.maximum(1, np.rint(e.alpha * args.D)).astype(int)
        if len(np.atleast_1d(N)) not in (1, e.T):
            raise UsageError(f"-N needs 1 or {e.T} values")
        theory = risk_report(e, _solver_options(args)).risk
        seed = _point_seed(args.seed, k)
        data = generate(e, args.D, N, seed)
        if args.dump:
            dump_dataset(data, os.path.join(args.dump, f"point{k}"), dump_hidden=args.dump_hidden)
        w = fit_supervised(e, data)
        emp = [empirical_risk(e, data, t, w, args.n_test, seed) for t in range(e.T)]
        return theory, emp

    results = _map(run, list(range(len(points))), args.threads)
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    header = ["param"]
    for t in range(ens.T):
        header += [f"theory_risk_{t + 1}", f"emp_risk_{t + 1}", f"stderr_{t + 1}"]
    out.writerow(header)
    for p, (theory, emp) in zip(points, results):
        row = ["" if p is None else fmt(p)]
        for t in range(ens.T):
            row += [fmt(theory[t]), fmt(emp[t][0]), fmt(emp[t][1])]
        out.writerow(row)
    _emit(args, buf.getvalue(), started, ens,
          {"D": args.D, "N": args.N, "n_test": args.n_test,
           "sweep": None if not axes else vars(axes[0]).copy()})
    return 0


def cmd_estimate(args) -> int:
    started = time.perf_counter()
    ens = _load(args)
    if np.any(ens.eta == 0):
        raise UsageError("estimate needs labeled data in every task (all eta > 0)")
    if args.seeds < 1:
        raise UsageError(f"--seeds must be >= 1, got {args.seeds}")
    N = np.maximum(1, np.rint(ens.alpha * args.D)).astype(int)

    def run(k):
        est = estimate_parameters(generate(ens, args.D, N, args.seed + k))
        c_err = float(np.max(np.abs(est.C_hat - ens.C)))
        return [c_err] + list(np.abs(est.sigma_hat - ens.sigma))

    rows = _map(run, list(range(args.seeds)), args.threads)
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["seed", "c_max_err"] + [f"sigma_err_{t + 1}" for t in range(ens.T)])
    for k, row in enumerate(rows):
        out.writerow([str(args.seed + k)] + [fmt(x) for x in row])
    out.writerow(["median"] + [fmt(x) for x in np.median(np.array(rows), axis=0)])
    _emit(args, buf.getvalue(), started, ens, {"D": args.D, "seeds": args.seeds})
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON ensemble config")
    common.add_argument("--param", action="append", metavar="NAME=VALUE",
                        help="override a config value (e.g. lambda1=0.5, c=0.7); repeatable")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    common.add_argument("--tol", type=float, default=SolverOptions.tol)
    common.add_argument("--damping", type=float, default=SolverOptions.damping)
    common.add_argument("--max-iter", type=int, default=SolverOptions.max_iter)

    sweep = dict(action="append", nargs=4, metavar=("NAME", "MIN", "MAX", "STEPS"),
                 help="swept parameter: lambdaK, sigmaK, alphaK, etaK, c or cST (1-based)")

    p = argparse.ArgumentParser(prog="mtgmm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("risk", parents=[common], help="asymptotic Bayes risk as JSON")

    ph = sub.add_parser("phase", parents=[common], help="feasibility grid as CSV")
    ph.add_argument("--sweep", **sweep)
    ph.add_argument("--with-risk", action="store_true")

    sim = sub.add_parser("simulate", parents=[common], help="finite-D classifier vs theory")
    sim.add_argument("--sweep", **sweep)
    sim.add_argument("-D", type=int, default=1000)
    sim.add_argument("-N", type=int, nargs="+", help="points per task (default: alpha * D)")
    sim.add_argument("--n-test", type=int, default=10_000)
    sim.add_argument("--dump", metavar="DIR", help="write each generated dataset as CSV under DIR/point<k>/")
    sim.add_argument("--dump-hidden", action="store_true", help="with --dump, also write the class means")

    est = sub.add_parser("estimate", parents=[common], help="parameter-estimation errors")
    est.add_argument("-D", type=int, default=1000)
    est.add_argument("--seeds", type=int, default=20)
    return p


_HANDLERS = {"risk": cmd_risk, "phase": cmd_phase, "simulate": cmd_simulate, "estimate": cmd_estimate}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    args.argv = argv
    try:
        SolverOptions(args.damping, args.tol, args.max_iter)
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return _HANDLERS[args.command](args)
    except (ValueError, UsageError, OSError) as exc:
        # config errors and every domain precondition error derive from ValueError
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NoConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
