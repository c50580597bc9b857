"""Command-line interface.

Subcommands: surface, saddles, nondiv, cantor, oracle, billiard. Every run
writes its outputs and a ``manifest.json`` (parameters, seed, version,
timestamps, SHA-256 digests of the outputs) to ``--out-dir``.

Exit codes: 0 success, 1 a check failed, 2 bad input, 3 resource budget
exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import __version__
from .flows import Mat2
from .saddles import ResourceBudgetError
from .surface import SurfaceError, make_torus, polygon_from_json, surface_from_json

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2, 3


class CheckFailed(Exception):
    def __init__(self, report: dict):
        super().__init__(report.get("message", "check failed"))
        self.report = report


# -- helpers ---------------------------------------------------------------------


def _floats(text: str, n: int | None = None) -> list[float]:
    vals = [float(v) for v in text.split(",") if v.strip()]
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _load_json(path: str):
    with open(path) as fh:
        return json.load(fh)


def _surface(path: str | None):
    return make_torus() if path is None else surface_from_json(_load_json(path))


def _polygon(path: str):
    data = _load_json(path)
    return polygon_from_json(data.get("polygon", data))


def _number(text: str):
    from .numbers import parse_number

    return parse_number(text)


class Run:
    """Output directory, written files and the manifest of one invocation."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.outputs: dict[str, str] = {}
        self.start = time.time()

    def path(self, name: str | None, default: str) -> Path:
        p = Path(name or default)
        return p if p.is_absolute() else self.out_dir / p

    def write(self, name: str | None, default: str, text: str) -> Path:
        p = self.path(name, default)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
        self.outputs[str(p)] = hashlib.sha256(text.encode()).hexdigest()
        return p

    def manifest(self, status: int) -> None:
        params = {k: v for k, v in vars(self.args).items() if k != "func"}
        data = {
            "command": self.argv,
            "params": params,
            "seed": self.args.seed,
            "version": __version__,
            "start": self.start,
            "end": time.time(),
            "exit_code": status,
            "outputs": self.outputs,
        }
        (self.out_dir / "manifest.json").write_text(json.dumps(data, indent=1, sort_keys=True, default=str))


def _emit(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True, default=str))


# -- surface -----------------------------------------------------------------------


def cmd_surface(args, run: Run) -> int:
    if args.action == "build":
        if args.kind == "torus":
            data = {"kind": "torus"}
        elif args.kind == "square_tiled":
            right = [int(v) for v in args.right.split(",")]
            up = [int(v) for v in args.up.split(",")]
            data = {"kind": "square_tiled", "n": len(right), "right": right, "up": up}
        else:
            data = {"kind": "unfolded", "polygon": _polygon(args.polygon).to_json()}
        q = surface_from_json(data)
        run.write(args.out, "surface.json", json.dumps(q.to_json(), indent=1, sort_keys=True) + "\n")
    else:
        q = _surface(args.file)
    info = q.describe()
    info["action"] = args.action
    _emit(info)
    return EXIT_OK


# -- saddles -----------------------------------------------------------------------


def cmd_saddles(args, run: Run) -> int:
    from .saddles import enumerate_saddles, systole

    q = _surface(args.surface)
    if args.action == "enumerate":
        S = enumerate_saddles(q, args.L, budget=args.budget)
        if args.format == "json":
            text = json.dumps(
                {"cutoff": args.L, "vectors": [[v.x, v.y, m] for v, m in zip(S.vectors, S.multiplicity)]},
                sort_keys=True,
            )
            run.write(args.out, "saddles.json", text + "\n")
        else:
            run.write(args.out, "saddles.csv", S.to_csv())
        _emit({"count": len(S), "connections": sum(S.multiplicity), "cutoff": args.L})
    else:
        A = Mat2(*_floats(args.A, 4)) if args.A else Mat2.identity()
        if abs(A.det - 1) > 1e-9:
            raise ValueError(f"matrix {A.to_json()} does not have determinant 1")
        s = systole(q, A, budget=args.budget)
        out = {"value": s.value, "witness": s.witness.to_json(), "A": A.to_json()}
        run.write(args.out, "systole.json", json.dumps(out, sort_keys=True) + "\n")
        _emit(out)
    return EXIT_OK


# -- nondiv ------------------------------------------------------------------------


def cmd_nondiv(args, run: Run) -> int:
    from .nondiv import NondivParams, check_hypothesis, fit_decay, sweep_csv

    q = _surface(args.surface)
    I = tuple(_floats(args.I, 2))
    params = NondivParams(
        rho=args.rho,
        eps_list=tuple(_floats(args.eps_sweep)),
        I=I,
        rho0=args.rho0,
        sample_count=args.samples,
        t=args.t,
    )
    if not check_hypothesis(q, I, args.rho, args.t):
        raise CheckFailed({"message": f"hypothesis fails on I={I} for rho={args.rho}"})
    fit = fit_decay(q, params, method=args.method)
    run.write(args.out, "nondiv.csv", sweep_csv(fit, args.rho, I[1] - I[0]))
    by_eps = [m for _, m in sorted(zip(fit.eps, fit.measures))]
    monotone = all(a <= b for a, b in zip(by_eps, by_eps[1:]))
    out = {
        "alpha_hat": fit.alpha_hat,
        "C_hat": fit.C_hat,
        "residual": fit.residual,
        "eps": list(fit.eps),
        "bad_measure": list(fit.measures),
        "monotone": monotone,
    }
    run.write(None, "nondiv_fit.json", json.dumps(out, indent=1, sort_keys=True) + "\n")
    _emit(out)
    return EXIT_OK if fit.alpha_hat > 0 and monotone else EXIT_CHECK


# -- cantor ------------------------------------------------------------------------


def cmd_cantor(args, run: Run) -> int:
    from .cantor import ExtinctionError, construct, derive_params, dim_estimate, reverify, tree_json_dumps

    q = _surface(args.surface)
    P = derive_params(q, Fraction(args.eps), args.eta, Fraction(args.r), Fraction(args.rho0), args.depth)
    try:
        tree = construct(q, P, max_parents=args.max_parents, seed=args.seed, threads=args.threads)
    except ExtinctionError as err:
        report = {
            "message": str(err),
            "extinct_at_level": err.level,
            "counts": err.tree.counts,
            "N": P.N,
            "suggestion": "reduce --eps",
        }
        run.write(args.out, "tree.json", json.dumps(report, indent=1, sort_keys=True) + "\n")
        raise CheckFailed(report) from None
    run.write(args.out, "tree.json", tree_json_dumps(tree) + "\n")
    mc, box = dim_estimate(tree)
    out = {"N": P.N, "t1": P.t1, "counts": tree.counts, "mcmullen_bound": mc, "box_dim_fit": box}
    status = EXIT_OK
    if args.verify:
        n, bad = reverify(q, tree, max_intervals=args.verify_intervals, seed=args.seed)
        out["verify_evaluations"] = n
        out["verify_violations"] = len(bad)
        if bad:
            status = EXIT_CHECK
    _emit(out)
    return status


# -- oracle ------------------------------------------------------------------------


def cmd_oracle(args, run: Run) -> int:
    from .cantor import panel_agreement
    from .cf_oracle import Basis2, cf_expand, is_badly_approximable, shortest_vector

    if args.action == "cf":
        x = _number(args.x)
        exp = cf_expand(x, args.depth)
        out = {
            "x": str(x),
            "a0": exp.a0,
            "partial_quotients": exp.partial_quotients,
            "exact": exp.exact,
            "terminated": exp.terminated,
            "precision_exhausted": exp.precision_exhausted,
            "period": exp.period,
        }
        if args.bound is not None:
            out["badly_approximable"] = is_badly_approximable(x, args.bound, max(10, args.depth))
    elif args.action == "shortest":
        a, b, c, d = _floats(args.basis, 4)
        v, m, e = shortest_vector(Basis2((a, c), (b, d)))
        out = {"vector": [float(v[0]), float(v[1])], "maxnorm": float(m), "eucnorm": float(e)}
    else:
        rows, frac, eps = panel_agreement(args.bound or 20, args.T, args.seed, args.threads)
        lines = ["x,badly_approximable,bounded,min_systole"] + [f'"{x}",{ba},{ok},{val!r}' for x, ba, ok, val in rows]
        run.write(args.out, "panel.csv", "\n".join(lines) + "\n")
        out = {"agreement": frac, "eps": eps, "directions": len(rows)}
        _emit(out)
        return EXIT_OK if frac >= 0.95 else EXIT_CHECK
    run.write(args.out, f"oracle_{args.action}.json", json.dumps(out, indent=1, sort_keys=True) + "\n")
    _emit(out)
    return EXIT_OK


# -- billiard ----------------------------------------------------------------------


def _direction(args) -> float:
    if args.theta is not None:
        return float(args.theta)
    if args.slope is not None:
        from .numbers import to_float

        return math.atan(to_float(_number(args.slope)))
    raise ValueError("give --theta or --slope")


def cmd_billiard(args, run: Run) -> int:
    from concurrent.futures import ThreadPoolExecutor

    from .billiard import BilliardState, _random_starts, corollary_check, flow, recurrence_stat, records_csv

    P = _polygon(args.polygon)
    theta = _direction(args)
    if args.action == "flow":
        start = BilliardState(tuple(_floats(args.start, 2)), 0, 0.0)
        states = flow(P, start, theta, args.T)
        lines = ["t,x,y,sheet"] + [f"{s.time!r},{s.position[0]!r},{s.position[1]!r},{s.sheet}" for s in states]
        run.write(args.out, "flow.csv", "\n".join(lines) + "\n")
        _emit({"reflections": len(states) - 2, "final": [states[-1].position, states[-1].sheet]})
        return EXIT_OK
    if args.action == "recur":
        if args.start:
            starts = [BilliardState(tuple(_floats(args.start, 2)), 0, 0.0)]
        else:
            starts = _random_starts(P, args.trials, args.seed)
        with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
            recs = list(pool.map(lambda p: recurrence_stat(P, p, theta, args.T, args.ignore_sheets), starts))
        run.write(args.out, "rec.csv", records_csv(recs))
        _emit({"min_t_times_d": [r.min_t_times_d for r in recs], "singular": [r.singular for r in recs]})
        return EXIT_OK
    rep = corollary_check(
        P, theta, args.eps, args.T, args.trials, seed=args.seed, c=args.c,
        ignore_sheets=args.ignore_sheets, threads=args.threads,
    )
    out = {
        "theta": rep.theta,
        "eps": rep.eps,
        "c": rep.c,
        "certified": rep.certified,
        "cert_min_systole": rep.cert_min_systole,
        "cert_time": rep.cert_time,
        "cert_vector": rep.cert_vector.to_json() if rep.cert_vector else None,
        "min_t_times_d": [r.min_t_times_d for r in rep.records],
        "violations": [
            {"t": w.t, "d": w.d, "t0": w.t0, "holonomy": w.holonomy.to_json(), "length_at_t0": w.length_at_t0, "kind": w.kind}
            for w in rep.violations
        ],
        "passed": rep.passed,
    }
    run.write(args.out, "corollary.json", json.dumps(out, indent=1, sort_keys=True) + "\n")
    if rep.records:
        run.write(None, "rec.csv", records_csv(rep.records))
    _emit(out)
    return EXIT_OK if rep.passed else EXIT_CHECK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out-dir", default=argparse.SUPPRESS)
    common.add_argument("--format", choices=["json", "csv"], default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="flatlab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out-dir", default=os.environ.get("FLATLAB_OUT_DIR", "."))
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("surface", parents=[common], help="build, validate or describe a surface")
    s.add_argument("action", choices=["build", "validate", "describe"])
    s.add_argument("--file")
    s.add_argument("--kind", choices=["torus", "square_tiled", "unfolded"], default="torus")
    s.add_argument("--right")
    s.add_argument("--up")
    s.add_argument("--polygon")
    s.add_argument("--out")
    s.set_defaults(func=cmd_surface)

    s = sub.add_parser("saddles", parents=[common], help="enumerate saddle connections or compute a systole")
    s.add_argument("action", choices=["enumerate", "systole"])
    s.add_argument("--surface")
    s.add_argument("--L", type=float, default=10.0)
    s.add_argument("--A", help="a11,a12,a21,a22")
    s.add_argument("--budget", type=int, default=5_000_000)
    s.add_argument("--out")
    s.set_defaults(func=cmd_saddles)

    s = sub.add_parser("nondiv", parents=[common], help="bad-measure sweep and decay fit")
    s.add_argument("--surface")
    s.add_argument("--rho", type=float, default=0.1)
    s.add_argument("--rho0", type=float, default=0.1)
    s.add_argument("--eps-sweep", default="0.1,0.05,0.02,0.01,0.005")
    s.add_argument("--I", default="0,1")
    s.add_argument("--t", type=float, default=16.0, help="push time of the arc")
    s.add_argument("--samples", type=int, default=10_000)
    s.add_argument("--method", choices=["exact", "grid"], default="exact")
    s.add_argument("--out")
    s.set_defaults(func=cmd_nondiv)

    s = sub.add_parser("cantor", parents=[common], help="construct the surviving-interval tree")
    s.add_argument("--surface")
    s.add_argument("--eps", type=str, default="0.1")
    s.add_argument("--eta", type=float, default=0.5)
    s.add_argument("--r", type=str, default="0.3")
    s.add_argument("--rho0", type=str, default="0.1")
    s.add_argument("--depth", type=int, default=6)
    s.add_argument("--max-parents", type=int, default=512)
    s.add_argument("--verify", action="store_true")
    s.add_argument("--verify-intervals", type=int, default=200)
    s.add_argument("--out")
    s.set_defaults(func=cmd_cantor)

    s = sub.add_parser("oracle", parents=[common], help="continued fractions, shortest vectors, CF panel")
    s.add_argument("action", choices=["cf", "shortest", "panel"])
    s.add_argument("--x")
    s.add_argument("--depth", type=int, default=40)
    s.add_argument("--bound", type=int)
    s.add_argument("--basis", help="columns: a,b,c,d for [[a,b],[c,d]]")
    s.add_argument("--T", type=float, default=25.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("billiard", parents=[common], help="billiard flow, recurrence and the recurrence bound")
    s.add_argument("action", choices=["flow", "recur", "corollary"])
    s.add_argument("--polygon", required=True)
    s.add_argument("--theta", type=float)
    s.add_argument("--slope")
    s.add_argument("--T", type=float, default=1000.0)
    s.add_argument("--start")
    s.add_argument("--trials", type=int, default=50)
    s.add_argument("--eps", type=float)
    s.add_argument("--c", type=float)
    s.add_argument("--ignore-sheets", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_billiard)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        run = Run(args, argv)
    except OSError as exc:
        print(f"error: cannot use output directory: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        status = args.func(args, run)
    except CheckFailed as exc:
        _emit({"status": "check_failed", **exc.report})
        status = EXIT_CHECK
    except ResourceBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_BUDGET
    except (SurfaceError, ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        status = EXIT_INPUT
    run.manifest(status)
    return status


if __name__ == "__main__":
    sys.exit(main())
