"""Batch command-line interface.

Every subcommand reads/writes files or prints one JSON document to
stdout and exits 0 on success, 1 when a gated check fails or an input
is unusable, 2 on usage errors.  Runs are deterministic for identical
flags and seed; `--no-meta` additionally strips timestamps and timings
so repeated runs are byte-identical.
"""

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import connection, experiments, instanton, neck, spectral, store
from .lattice import Grid, annulus_mask, ball_mask, make_bump_oneform
from .secondvar import assemble

_WEIGHT_ARITY = {"const": 1, "rr": 2, "etak": 6, "etainf": 1, "hatinf": 1}


def _apply_thread_cap():
    cap = os.environ.get("YM_THREADS")
    if cap is None or cap == "":
        return
    try:
        n = int(cap)
        if n < 1:
            raise ValueError
    except ValueError:
        raise SystemExit(f"ym4: YM_THREADS={cap!r} is not a positive integer")
    import threadpoolctl

    threadpoolctl.threadpool_limits(n)


def _grid_arg(text):
    """Parse 'L,N' into a Grid."""
    try:
        left, right = text.split(",")
        return Grid(float(left), int(right))
    except (ValueError, TypeError) as e:
        raise argparse.ArgumentTypeError(f"grid must be 'L,N': {e}")


def _center_arg(text):
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("center must be 'x,y,z,w'")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


def _mask_arg(text):
    kind, _, rest = text.partition(":")
    try:
        vals = [float(p) for p in rest.split(",")] if rest else []
        if kind == "ball" and len(vals) == 1:
            return ("ball", vals[0])
        if kind == "annulus" and len(vals) == 2:
            return ("annulus", vals[0], vals[1])
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))
    raise argparse.ArgumentTypeError("mask must be 'ball:R' or 'annulus:r,R'")


def _annulus_arg(text):
    try:
        r, R = (float(p) for p in text.split(","))
    except (ValueError, TypeError) as e:
        raise argparse.ArgumentTypeError(f"annulus must be 'r,R': {e}")
    if not 0.0 < r < R:
        raise argparse.ArgumentTypeError("annulus needs 0 < r < R")
    return (r, R)


def _weight_arg(text):
    """Validate a weight spec; construction waits for the grid."""
    name, _, rest = text.partition(":")
    if name not in _WEIGHT_ARITY:
        raise argparse.ArgumentTypeError(
            f"unknown weight {name!r}; choose from {sorted(_WEIGHT_ARITY)}"
        )
    try:
        vals = [float(p) for p in rest.split(",")] if rest else []
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))
    if len(vals) != _WEIGHT_ARITY[name]:
        raise argparse.ArgumentTypeError(
            f"weight {name!r} takes {_WEIGHT_ARITY[name]} parameter(s)"
        )
    return (name, vals)


def build_weight(grid, spec):
    """Realize a parsed weight spec on a grid."""
    name, vals = spec
    if name == "const":
        return float(vals[0])
    if name == "rr":
        return neck.omega_Rr(grid, vals[0], vals[1])
    if name == "etak":
        return neck.omega_eta_k(grid, vals[0], vals[1], center=np.asarray(vals[2:]))
    if name == "etainf":
        return neck.omega_limits(grid, vals[0])[0]
    if name == "hatinf":
        return neck.omega_limits(grid, vals[0])[1]
    raise ValueError(f"unknown weight kind {name!r}")


def _read_oneform(path):
    ff = store.read_field(path)
    if ff.kind != "oneform":
        raise store.FieldFormatError(f"{path} holds a {ff.kind}, need a oneform")
    return ff


_TIMING_KEYS = {"runtime_s", "seconds", "created"}


def _scrub_timings(obj):
    if isinstance(obj, dict):
        return {k: _scrub_timings(v) for k, v in obj.items() if k not in _TIMING_KEYS}
    if isinstance(obj, list):
        return [_scrub_timings(v) for v in obj]
    return obj


def _emit(args, report):
    doc = store.report_document(report, meta=not args.no_meta)
    if args.no_meta:
        doc = _scrub_timings(doc)
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if getattr(args, "out", None):
        store._atomic_bytes(args.out, text.encode())
    else:
        sys.stdout.write(text)


def _svg_chart(path, xs, ys, title, xlabel, ylabel):
    """Single-series line/stem chart, no dependencies."""
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    w, h, pad = 640, 400, 56
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys + [0.0]), max(ys + [0.0])
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (w - 2 * pad)

    def sy(y):
        return h - pad - (y - y0) / (y1 - y0) * (h - 2 * pad)

    pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    dots = "".join(
        f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3.5" fill="#1f6f8b"/>'
        for x, y in zip(xs, ys)
    )
    zero = ""
    if y0 < 0.0 < y1:
        zero = (
            f'<line x1="{pad}" y1="{sy(0):.2f}" x2="{w - pad}" y2="{sy(0):.2f}" '
            'stroke="#bbbbbb" stroke-dasharray="4 4"/>'
        )
    svg = f"""<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" font-family="sans-serif">
<rect width="{w}" height="{h}" fill="white"/>
<text x="{w / 2}" y="24" text-anchor="middle" font-size="16">{title}</text>
<line x1="{pad}" y1="{h - pad}" x2="{w - pad}" y2="{h - pad}" stroke="#333"/>
<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{h - pad}" stroke="#333"/>
<text x="{w / 2}" y="{h - 12}" text-anchor="middle" font-size="12">{xlabel}</text>
<text x="16" y="{h / 2}" font-size="12" transform="rotate(-90 16 {h / 2})" text-anchor="middle">{ylabel}</text>
<text x="{pad}" y="{h - pad + 16}" font-size="11" text-anchor="middle">{x0:.4g}</text>
<text x="{w - pad}" y="{h - pad + 16}" font-size="11" text-anchor="middle">{x1:.4g}</text>
<text x="{pad - 6}" y="{sy(y0):.2f}" font-size="11" text-anchor="end">{y0:.4g}</text>
<text x="{pad - 6}" y="{sy(y1):.2f}" font-size="11" text-anchor="end">{y1:.4g}</text>
{zero}
<polyline points="{pts}" fill="none" stroke="#1f6f8b" stroke-width="1.5"/>
{dots}
</svg>
"""
    store._atomic_bytes(path, svg.encode())


def _cmd_energy(args):
    ff = _read_oneform(args.field)
    mask = None
    if args.mask is not None:
        if args.mask[0] == "ball":
            mask = ball_mask(ff.grid, args.mask[1]).astype(float)
        else:
            mask = annulus_mask(ff.grid, args.mask[1], args.mask[2]).astype(float)
    e = connection.ym_energy(ff.grid, ff.values, region_mask=mask)
    _emit(
        args,
        {
            "kind": "energy_report",
            "field": os.path.basename(args.field),
            "mask": None if args.mask is None else list(args.mask),
            "grid": {"L": ff.grid.half_width, "N": ff.grid.n},
            "energy": float(e),
        },
    )
    return 0


def _cmd_instanton(args):
    grid = args.grid
    A = instanton.bpst(grid, args.scale, args.center)
    store.write_field(args.out, grid, A)
    return 0


def _cmd_spectrum(args):
    ff = _read_oneform(args.field)
    P = assemble(ff.grid, ff.values, weight=build_weight(ff.grid, args.weight))
    rep = spectral.smallest_eigs(P, min(args.k, P.dof_map.size), tau=args.tau)
    _emit(args, rep)
    if args.svg:
        _svg_chart(
            args.svg,
            range(1, len(rep.eigenvalues) + 1),
            rep.eigenvalues,
            "smallest pencil eigenvalues",
            "rank",
            "eigenvalue",
        )
    return 0 if rep.valid else 1


def _cmd_signature(args):
    ff = _read_oneform(args.field)
    rep = spectral.extended_signature(
        ff.grid, ff.values, weight=build_weight(ff.grid, args.weight), k=args.k, tau=args.tau
    )
    _emit(args, rep)
    return 0 if rep.valid else 1


def _cmd_inequalities(args):
    grid = args.grid
    if args.which == "scaling":
        a = make_bump_oneform(grid, np.zeros(4), 0.6, 1, [1.0, 0.0, 0.0])
        a += make_bump_oneform(grid, np.zeros(4), 0.45, 3, [0.0, 0.6, 0.8])
        rep = neck.scaling_noncompactness_demo(grid, a, args.eps)
        _emit(args, rep)
        ok = (
            rep.dirichlet_constant
            and rep.l2_scales_quadratically
            and rep.weighted_constant
        )
        if args.svg:
            _svg_chart(
                args.svg, rep.eps, rep.l2, "plain mass along the dilation family",
                "eps", "mass",
            )
        return 0 if ok else 1

    trials = neck.annulus_trials(
        grid, args.R, args.r, superpositions=args.trials, seed=args.seed
    )
    if args.which == "hardy":
        rep = neck.hardy_ratio(grid, args.R, args.r, trials=trials)
    elif args.which == "poincare":
        plain, quartic = neck.poincare_ratios(grid, args.R, args.r, trials=trials)
        _emit(args, {"kind": "poincare_pair", "plain": plain, "quartic": quartic})
        ok = np.isfinite(plain.constant) and np.isfinite(quartic.constant)
        if args.svg:
            _svg_chart(
                args.svg, range(1, plain.ratios.size + 1), np.sort(plain.ratios),
                "poincare trial ratios (sorted)", "trial", "ratio",
            )
        return 0 if ok else 1
    elif args.which == "gaffney":
        rep = neck.gaffney_ratio(grid, p=2, trials=trials, R=args.R, r=args.r)
    else:
        rep = neck.combined_ratio(grid, args.R, args.r, trials=trials)
    _emit(args, rep)
    if args.svg:
        _svg_chart(
            args.svg, range(1, rep.ratios.size + 1), np.sort(rep.ratios),
            f"{rep.inequality} trial ratios (sorted)", "trial", "ratio",
        )
    return 0 if np.isfinite(rep.constant) else 1


def _cmd_neck(args):
    ff = _read_oneform(args.field)
    r, R = args.annulus
    if args.check == "coercivity":
        rep = neck.neck_coercivity(ff.grid, ff.values, R, r)
        # a violating trial is a full 4D field; too big for a JSON report
        slim = dataclasses.replace(
            rep, violating_trial=rep.violating_trial is not None
        )
        _emit(args, slim)
        return 0 if rep.c0 > 0.0 else 1
    if args.check == "decay":
        rep = neck.sharp_decay_check(ff.grid, ff.values, R, r)
        _emit(args, rep)
        return 0 if rep.tighter_at_midpoint else 1
    _, rep = connection.cutoff_connection(ff.grid, ff.values, r, R)
    _emit(args, rep)
    return 0 if np.isfinite(rep.ratio) else 1


def _cmd_bubble_run(args):
    with open(args.config) as f:
        config = json.load(f)
    schedule = experiments.BubbleSchedule.from_config(config)
    if args.check == "quantization":
        rep = experiments.quantization_run(schedule)
        _emit(args, rep)
        if args.svg:
            _svg_chart(
                args.svg, [r.lam for r in rep.rows], [r.neck for r in rep.rows],
                "neck energy along the schedule", "lambda", "energy",
            )
        ok = rep.neck_monotone and rep.mismatch_decreasing and rep.bubble_match_ok
        return 0 if ok else 1
    if args.check == "semicontinuity":
        rep = experiments.semicontinuity_run(schedule)
        _emit(args, rep)
        if args.svg:
            rows = rep.all_rows()
            _svg_chart(
                args.svg, range(1, len(rows) + 1), [r.min_eig for r in rows],
                "pencil floors (glued steps, then limits)", "pencil", "min eigenvalue",
            )
        ok = (
            rep.conclusive
            and rep.index_lower_ok
            and rep.signature_upper_ok
            and rep.floor_ok
        )
        return 0 if ok else 1
    rep = experiments.curvature_weight_bound_run(schedule)
    _emit(args, rep)
    if args.svg:
        rows = rep.blocks[0].rows
        _svg_chart(
            args.svg, [r.lam for r in rows], [r.ratio for r in rows],
            "curvature/weight ratio along the schedule", "lambda", "ratio",
        )
    return 0 if all(b.uniform_ok for b in rep.blocks) else 1


def _cmd_verify_all(args):
    import subprocess

    tests = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(
        os.path.abspath(__file__)))), "tests")
    if not os.path.isdir(tests):
        print(f"ym4: tests directory not found at {tests}", file=sys.stderr)
        return 2
    cmd = [sys.executable, "-m", "pytest", "-q"]
    if args.level == "smoke":
        cmd += [tests, "--ignore", os.path.join(tests, "test_acceptance.py")]
    else:
        cmd += [tests]
    proc = subprocess.run(cmd)
    return 0 if proc.returncode == 0 else 1


def _add_output_flags(p, svg=False):
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument(
        "--no-meta",
        action="store_true",
        help="strip timestamps and timings for byte-identical reruns",
    )
    if svg:
        p.add_argument("--svg", help="also draw a chart to this SVG file")


def build_parser():
    top = argparse.ArgumentParser(
        prog="ym4",
        description="Weighted stability analysis of 4D lattice gauge fields.",
    )
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("energy", help="Yang-Mills energy of a stored field")
    p.add_argument("--field", required=True)
    p.add_argument("--mask", type=_mask_arg, help="ball:R or annulus:r,R")
    _add_output_flags(p)
    p.set_defaults(fn=_cmd_energy)

    p = sub.add_parser("instanton", help="write a standard instanton field file")
    p.add_argument("--lambda", dest="scale", type=float, required=True)
    p.add_argument("--center", type=_center_arg, default=np.zeros(4))
    p.add_argument("--grid", type=_grid_arg, required=True, metavar="L,N")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_instanton)

    p = sub.add_parser("spectrum", help="smallest pencil eigenvalues of a field")
    p.add_argument("--field", required=True)
    p.add_argument("--weight", type=_weight_arg, default=("const", [1.0]),
                   help="const:c | rr:R,r | etak:eta,lambda,px,py,pz,pw | etainf:eta | hatinf:eta")
    p.add_argument("--k", type=int, default=12)
    p.add_argument("--tau", type=float, default=None)
    _add_output_flags(p, svg=True)
    p.set_defaults(fn=_cmd_spectrum)

    p = sub.add_parser("signature", help="morse index + nullity of a field's pencil")
    p.add_argument("--field", required=True)
    p.add_argument("--weight", type=_weight_arg, default=("const", [1.0]))
    p.add_argument("--k", type=int, default=40)
    p.add_argument("--tau", type=float, default=None)
    _add_output_flags(p)
    p.set_defaults(fn=_cmd_signature)

    p = sub.add_parser("inequalities", help="annulus inequality harnesses")
    p.add_argument(
        "--which",
        required=True,
        choices=["hardy", "poincare", "gaffney", "combined", "scaling"],
    )
    p.add_argument("--grid", type=_grid_arg, required=True, metavar="L,N")
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--r", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=50,
                   help="random superposition trials on top of the bump family")
    p.add_argument("--seed", type=int, default=neck.TRIAL_SEED)
    p.add_argument("--eps", type=lambda s: [float(x) for x in s.split(",")],
                   default=[1.0, 0.5, 0.25], help="scaling-family dilations")
    _add_output_flags(p, svg=True)
    p.set_defaults(fn=_cmd_inequalities)

    p = sub.add_parser("neck", help="neck coercivity / decay / cutoff checks")
    p.add_argument("--field", required=True)
    p.add_argument("--annulus", type=_annulus_arg, required=True, metavar="r,R")
    p.add_argument("--check", required=True, choices=["coercivity", "decay", "cutoff"])
    _add_output_flags(p)
    p.set_defaults(fn=_cmd_neck)

    p = sub.add_parser("bubble-run", help="concentrating-sequence experiments")
    p.add_argument("--config", required=True, help="bubble schedule JSON")
    p.add_argument(
        "--check",
        required=True,
        choices=["quantization", "semicontinuity", "floor"],
    )
    _add_output_flags(p, svg=True)
    p.set_defaults(fn=_cmd_bubble_run)

    p = sub.add_parser("verify-all", help="run the test suite")
    p.add_argument("--level", choices=["smoke", "full"], default="smoke")
    p.set_defaults(fn=_cmd_verify_all)

    return top


def main(argv=None):
    args = build_parser().parse_args(argv)
    _apply_thread_cap()
    try:
        return args.fn(args)
    except (store.FieldFormatError, OSError, ValueError, json.JSONDecodeError) as e:
        print(f"ym4: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
