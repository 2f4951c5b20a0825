"""Command-line front end.

Subcommands: bounds (CSV histogram bounds), validate (sandwich check
against importance sampling or an external sample file), plot (CSV to
SVG), types (weighted type report), paths (symbolic path dump).
Exit codes: 0 ok, 2 parse/type error, 3 resource cap, 4 validation
violation.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from typing import List, Optional, Tuple

from gmpy2 import mpq

from .concrete import importance_sample
from .engine import Bin, BinnedBounds, EngineConfig, aggregate
from .intervals import INF, NINF, ext_to_float, is_inf
from .parser import ParseError, parse_decimal, parse_program
from .prims import UnknownPrimitive
from .symexec import ExplorationBudgetExceeded, explore
from .syntax import TypeError_, pretty
from .typesys import infer_with_fix_types, type_to_str


def _load_program(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            src = fh.read()
    except OSError as e:
        print(f"error: cannot read {path}: {e}", file=sys.stderr)
        raise SystemExit(2)
    try:
        return parse_program(src)
    except (ParseError, TypeError_, UnknownPrimitive, ValueError) as e:
        print(f"error: {path}: {e}", file=sys.stderr)
        raise SystemExit(2)


def _parse_range(spec: str):
    try:
        lo_s, hi_s = spec.split(":")
        lo, hi = parse_decimal(lo_s), parse_decimal(hi_s)
    except ValueError:
        print(f"error: bad range '{spec}', expected LO:HI", file=sys.stderr)
        raise SystemExit(2)
    if not lo < hi:
        print("error: range must satisfy LO < HI", file=sys.stderr)
        raise SystemExit(2)
    return lo, hi


def make_bins(lo, hi, count: int) -> List[Bin]:
    """count half-open bins over [lo, hi]; the last one is closed."""
    width = (hi - lo) / count
    out = []
    for i in range(count):
        last = i == count - 1
        out.append(Bin(lo + i * width, lo + (i + 1) * width, hi_open=not last))
    return out


def _fmt(x, up: bool) -> str:
    f = ext_to_float(x, up)
    if math.isinf(f):
        return "inf" if f > 0 else "-inf"
    return repr(f)


def write_csv(out_path: str, result: BinnedBounds):
    lines = ["bin_lo,bin_hi,unnorm_lb,unnorm_ub,norm_lb,norm_ub"]
    for b in result.bins:
        lines.append(
            ",".join(
                [
                    _fmt(b.bin.lo, False),
                    _fmt(b.bin.hi, True),
                    _fmt(b.lb, False),
                    _fmt(b.ub, True),
                    _fmt(b.norm_lb, False),
                    _fmt(b.norm_ub, True),
                ]
            )
        )
    lines.append(f"Z,,{_fmt(result.z_lb, False)},{_fmt(result.z_ub, True)},,")
    data = "\n".join(lines) + "\n"
    if out_path == "-":
        sys.stdout.write(data)
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(data)


def _engine_config(args) -> EngineConfig:
    return EngineConfig(
        depth=args.depth,
        splits_expr=args.splits_expr,
        splits_var=args.splits_var,
        method=args.method,
    )


def cmd_bounds(args) -> int:
    program = _load_program(args.program)
    lo, hi = _parse_range(args.range)
    bins = make_bins(lo, hi, args.bins)
    try:
        result = aggregate(program, bins, _engine_config(args))
    except ExplorationBudgetExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    write_csv(args.out, result)
    if args.out != "-":
        meth = ", ".join(f"{k}:{v}" for k, v in sorted(result.path_methods.items()))
        print(
            f"wrote {args.out} (paths by backend: {meth}; "
            f"Z in [{_fmt(result.z_lb, False)}, {_fmt(result.z_ub, True)}])"
        )
    return 0


def _read_sample_file(path: str) -> List[Tuple[float, float]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            try:
                v = float(parts[0])
                w = float(parts[1]) if len(parts) > 1 else 1.0
            except (ValueError, IndexError):
                print(f"error: {path}:{line_no}: bad sample line", file=sys.stderr)
                raise SystemExit(2)
            out.append((v, w))
    if not out:
        print(f"error: {path}: no samples", file=sys.stderr)
        raise SystemExit(2)
    return out


def cmd_validate(args) -> int:
    program = _load_program(args.program)
    lo, hi = _parse_range(args.range)
    bins = make_bins(lo, hi, args.bins)
    try:
        result = aggregate(program, bins, _engine_config(args))
    except ExplorationBudgetExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return 3

    violations = 0
    if args.sample_file:
        samples = _read_sample_file(args.sample_file)
        total_w = sum(w for _, w in samples)
        if total_w <= 0:
            print("error: sample file has no positive weight", file=sys.stderr)
            return 2
        for b in result.bins:
            blo, bhi = float(b.bin.lo), float(b.bin.hi)
            sel = [
                w
                for v, w in samples
                if (v > blo or (v == blo and not b.bin.lo_open))
                and (v < bhi or (v == bhi and not b.bin.hi_open))
            ]
            est = sum(sel) / total_w
            # delta-method stderr of the normalized ratio estimator
            n = len(samples)
            mean_w = total_w / n
            s = 0.0
            for v, w in samples:
                ind = 1.0 if (
                    (v > blo or (v == blo and not b.bin.lo_open))
                    and (v < bhi or (v == bhi and not b.bin.hi_open))
                ) else 0.0
                s += (w * (ind - est)) ** 2
            se = math.sqrt(s / n) / (math.sqrt(n) * mean_w)
            lo_f = ext_to_float(b.norm_lb, False)
            hi_f = ext_to_float(b.norm_ub, True)
            bad = est - 3 * se > hi_f or est + 3 * se < lo_f
            mark = "VIOLATION" if bad else "ok"
            violations += bad
            print(
                f"bin [{blo:g}, {bhi:g}): est {est:.6f} +- {se:.6f} "
                f"bounds [{lo_f:.6f}, {hi_f:.6f}] {mark}"
            )
    else:
        if args.samples <= 0:
            print("error: --samples must be positive", file=sys.stderr)
            return 2
        samples, truncated = importance_sample(
            program, args.seed, args.samples, budget=args.run_budget
        )
        n = args.samples
        if truncated:
            print(f"note: {truncated} runs hit the step budget (weight 0)")
        ests = []
        for b in result.bins:
            blo, bhi = float(b.bin.lo), float(b.bin.hi)
            tot = 0.0
            tot_sq = 0.0
            for v, w in samples:
                x = w if (
                    w > 0
                    and (v > blo or (v == blo and not b.bin.lo_open))
                    and (v < bhi or (v == bhi and not b.bin.hi_open))
                ) else 0.0
                tot += x
                tot_sq += x * x
            est = tot / n
            var = max(tot_sq / n - est * est, 0.0)
            se = math.sqrt(var / n)
            ests.append((est, se))
            lo_f = ext_to_float(b.lb, False)
            hi_f = ext_to_float(b.ub, True)
            bad = est - 3 * se > hi_f or est + 3 * se < lo_f
            violations += bad
            mark = "VIOLATION" if bad else "ok"
            print(
                f"bin [{blo:g}, {bhi:g}): est {est:.6f} +- {se:.6f} "
                f"bounds [{lo_f:.6f}, {hi_f:.6f}] {mark}"
            )
        # normalizing constant
        tot = sum(w for _, w in samples)
        tot_sq = sum(w * w for _, w in samples)
        est = tot / n
        se = math.sqrt(max(tot_sq / n - est * est, 0.0) / n)
        z_lo = ext_to_float(result.z_lb, False)
        z_hi = ext_to_float(result.z_ub, True)
        bad = est - 3 * se > z_hi or est + 3 * se < z_lo
        violations += bad
        print(
            f"Z: est {est:.6f} +- {se:.6f} bounds [{z_lo:.6f}, {z_hi:.6f}] "
            f"{'VIOLATION' if bad else 'ok'}"
        )
    if violations:
        print(f"{violations} bin(s) violate the bounds")
        return 4
    print("all bins pass")
    return 0


def cmd_plot(args) -> int:
    with open(args.csv_in, encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    bins = [r for r in body if r[0] != "Z"]
    if not bins:
        print("error: no bins in CSV", file=sys.stderr)
        return 2
    width, height, pad = 640, 360, 40
    xs = [float(r[0]) for r in bins] + [float(r[1]) for r in bins]
    x_lo, x_hi = min(xs), max(xs)
    y_hi = max(
        (float(r[5]) for r in bins if not math.isinf(float(r[5]))), default=1.0
    )
    y_hi = max(y_hi, 1e-9)

    def sx(x):
        return pad + (x - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def sy(y):
        y = min(y, y_hi)
        return height - pad - y / y_hi * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height-pad}" x2="{width-pad}" '
        f'y2="{height-pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height-pad}" '
        f'stroke="black"/>',
    ]
    for r in bins:
        lo_x, hi_x = float(r[0]), float(r[1])
        nlb, nub = float(r[4]), float(r[5])
        x0, x1 = sx(lo_x), sx(hi_x)
        # lower bound: filled bar
        parts.append(
            f'<rect x="{x0:.2f}" y="{sy(nlb):.2f}" width="{x1-x0:.2f}" '
            f'height="{height-pad-sy(nlb):.2f}" fill="#4878a8" '
            f'stroke="none"/>'
        )
        # upper bound: whisker
        xm = (x0 + x1) / 2
        parts.append(
            f'<line x1="{xm:.2f}" y1="{sy(nlb):.2f}" x2="{xm:.2f}" '
            f'y2="{sy(nub):.2f}" stroke="#c05040" stroke-width="1.5"/>'
        )
        parts.append(
            f'<line x1="{x0:.2f}" y1="{sy(nub):.2f}" x2="{x1:.2f}" '
            f'y2="{sy(nub):.2f}" stroke="#c05040" stroke-width="1.5"/>'
        )
    parts.append(
        f'<text x="{width/2:.0f}" y="{height-8}" font-size="12" '
        f'text-anchor="middle" font-family="sans-serif">value</text>'
    )
    parts.append("</svg>")
    with open(args.svg_out, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
    print(f"wrote {args.svg_out}")
    return 0


def cmd_types(args) -> int:
    program = _load_program(args.program)
    from .symexec import _inject

    whole, fix_types = infer_with_fix_types(_inject(program))
    print(f"program: {type_to_str(whole)}")
    if fix_types:
        for i, (nid, arrow) in enumerate(sorted(fix_types.items())):
            print(f"fixpoint {i}: {type_to_str(arrow)}")
    return 0


def cmd_paths(args) -> int:
    program = _load_program(args.program)
    try:
        paths, fired = explore(program, args.depth)
    except ExplorationBudgetExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    print(f"{len(paths)} path(s); fixpoint approximation fired: {fired}")
    for p in paths:
        print(repr(p))
    return 0


def _add_engine_args(sp):
    sp.add_argument("--depth", type=int, default=2000,
                    help="symbolic exploration depth limit")
    sp.add_argument("--splits-expr", type=int, default=64, dest="splits_expr",
                    help="chunks per score expression (linear backend)")
    sp.add_argument("--splits-var", type=int, default=16, dest="splits_var",
                    help="grid splits per sample variable (interval backend)")
    sp.add_argument("--method", choices=("auto", "interval", "linear"),
                    default="auto")


def main(argv: Optional[List[str]] = None) -> int:
    ap = argparse.ArgumentParser(
        prog="gbpi",
        description="Guaranteed lower/upper bounds on the posterior of "
        "probabilistic programs.",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    b = sub.add_parser("bounds", help="compute histogram bounds as CSV")
    b.add_argument("program")
    b.add_argument("--range", required=True, help="LO:HI")
    b.add_argument("--bins", type=int, required=True)
    _add_engine_args(b)
    b.add_argument("--out", default="-")
    b.set_defaults(fn=cmd_bounds)

    v = sub.add_parser("validate", help="check a sampler against the bounds")
    v.add_argument("program")
    v.add_argument("--range", required=True)
    v.add_argument("--bins", type=int, required=True)
    v.add_argument("--samples", type=int, default=0)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--sample-file", dest="sample_file")
    v.add_argument("--run-budget", dest="run_budget", type=int, default=20_000)
    _add_engine_args(v)
    v.set_defaults(fn=cmd_validate)

    pl = sub.add_parser("plot", help="render a bounds CSV as SVG")
    pl.add_argument("csv_in")
    pl.add_argument("svg_out")
    pl.set_defaults(fn=cmd_plot)

    ty = sub.add_parser("types", help="print inferred weighted types")
    ty.add_argument("program")
    ty.set_defaults(fn=cmd_types)

    pa = sub.add_parser("paths", help="dump symbolic paths")
    pa.add_argument("program")
    pa.add_argument("--depth", type=int, default=2000)
    pa.set_defaults(fn=cmd_paths)

    args = ap.parse_args(argv)
    if args.cmd == "validate" and not args.sample_file and args.samples <= 0:
        ap.error("validate needs --samples N or --sample-file F")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
