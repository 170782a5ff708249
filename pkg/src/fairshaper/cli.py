"""``fairshaper`` command line: sweeps and scenario runs that write CSV.

Every CSV starts with a ``#`` line recording the invocation, then a header.
Exit status: 0 success, 1 usage error, 2 domain or stability error,
3 infeasible allocation problem.
"""
from __future__ import annotations

import argparse
import csv
import math
import shlex
import sys
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path

from .allocator import FlowSpec, SolverOptions, read_scenario, solve_allocation
from .convexity import default_grid, scan_convexity
from .exceptions import DomainError, InfeasibleProblemError
from .model import ShaperParams, derive, mean_waiting_time, miller_queue_estimate, stability_check
from .simulation import SimConfig, simulate
from .traces import corpus_report, read_trace_csv, synthetic_corpus

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_INFEASIBLE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _fmt(value):
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float) and math.isnan(value):
        return ""
    return value


@contextmanager
def _csv_out(path, argv):
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        fh.write("# fairshaper " + shlex.join(argv) + "\n")
        yield csv.writer(fh, lineterminator="\n")
    finally:
        if fh is not sys.stdout:
            fh.close()


def _write(path, argv, header, rows):
    with _csv_out(path, argv) as w:
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _g_values(args):
    if args.g is not None:
        return [args.g]
    if args.g_from is None or args.g_to is None:
        raise UsageError("give --g or both --g-from and --g-to")
    if args.g_from > args.g_to:
        raise UsageError("--g-from must not exceed --g-to")
    return list(range(args.g_from, args.g_to + 1))


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- model -------------------------------------------------------------------

def cmd_model(args, argv):
    rows = []
    for p in args.p:
        for g in _g_values(args):
            if not stability_check(p, g, args.tau):
                if args.skip_unstable:
                    rows.append((p, g, args.tau, g / args.tau, False, math.nan, math.nan, math.nan))
                    continue
            d = derive(ShaperParams(p, g, args.tau))
            wait = d.mean_wait if p > 0 else math.nan
            rows.append((p, g, args.tau, g / args.tau, True, d.expected_queue, wait, d.dummy_rate))
    _write(args.output, argv,
           ["p", "g", "tau", "c", "stable_flag", "eq_end_green", "mean_wait", "dummy_rate"], rows)


# -- simulate ----------------------------------------------------------------

def _sim_row(job):
    p, g, tau, cycles, warmup, seed = job
    stats = simulate(SimConfig(ShaperParams(p, g, tau), cycles, warmup, seed))
    if stats.stable and p > 0:
        eq = miller_queue_estimate(p, g, tau)
        model_wait = mean_waiting_time(p, g, tau)
    else:
        eq = model_wait = math.nan
    return (p, g, tau, cycles, seed, stats.mean_wait, stats.mean_end_of_green_queue,
            stats.dummy_fraction, stats.stable, model_wait, eq)


def cmd_simulate(args, argv):
    jobs = [(args.p, g, args.tau, args.cycles, args.warmup, args.seed) for g in _g_values(args)]
    rows = _map(_sim_row, jobs, args.workers)
    _write(args.output, argv,
           ["p", "g", "tau", "n_cycles", "seed", "mean_wait", "eq_end_green", "dummy_fraction",
            "stable_flag", "miller_wait", "miller_eq"], rows)


# -- convexity ---------------------------------------------------------------

def cmd_convexity(args, argv):
    if args.point:
        points = [tuple(pt) for pt in args.point]
    else:
        points = default_grid(args.n, (args.p_min, args.p_max), args.margin)
    scan = scan_convexity(points)
    _write(args.output, argv, ["p", "c", "w_pp", "w_cc", "w_pc", "min_eig"], scan.rows)
    print(f"points={scan.n_points} skipped_kink={scan.skipped} min_w_pp={scan.min_w_pp:.6g} "
          f"min_w_cc={scan.min_w_cc:.6g} indefinite_fraction={scan.indefinite_fraction:.4f}",
          file=sys.stderr)


# -- allocate ----------------------------------------------------------------

def _parse_sweep(text):
    try:
        key, span = text.split("=", 1)
        if not key.startswith("sigma"):
            raise ValueError
        index = int(key[len("sigma"):]) - 1
        parts = [float(x) for x in span.split(":")]
        lo, hi = parts[0], parts[1]
        step = parts[2] if len(parts) == 3 else 1.0
        if len(parts) not in (2, 3) or step <= 0 or hi < lo or index < 0:
            raise ValueError
    except ValueError:
        raise UsageError(f"bad --sweep {text!r}; expected sigmaK=LO:HI[:STEP]") from None
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return index, [lo + k * step for k in range(n)]


def _alloc_job(job):
    label, flows, options = job
    return label, flows, solve_allocation(flows, options)


def cmd_allocate(args, argv):
    options = SolverOptions(step_size=args.step_size, inner_iters=args.inner_iters,
                            outer_iters=args.outer_iters, epsilon_d=args.epsilon_d,
                            tolerance=args.tolerance)
    jobs = []
    for path in args.scenario:
        try:
            flows = read_scenario(path)
        except FileNotFoundError:
            raise UsageError(f"scenario file not found: {path}") from None
        stem = Path(path).stem
        if args.sweep is None:
            jobs.append((stem, flows, options))
            continue
        index, values = _parse_sweep(args.sweep)
        if index >= len(flows):
            raise UsageError(f"--sweep refers to flow {index + 1} but {path} has {len(flows)} flows")
        for v in values:
            swept = list(flows)
            f = swept[index]
            swept[index] = FlowSpec(f.id, v, f.psi, f.private)
            jobs.append((f"{stem}:sigma{index + 1}={v:g}", swept, options))
    rows = []
    for label, flows, res in _map(_alloc_job, jobs, args.workers):
        for k, flow in enumerate(flows):
            rows.append((label, flow.id, res.p_star[k], res.d_star[k],
                         res.w[k] if flow.private else math.nan,
                         res.objective, res.converged, res.feasible))
    _write(args.output, argv,
           ["scenario", "flow", "p_star", "d_star", "w_f", "U", "converged", "feasible"], rows)


# -- trace -------------------------------------------------------------------

def cmd_trace(args, argv):
    if args.input:
        try:
            traces = [read_trace_csv(p) for p in args.input]
        except FileNotFoundError as exc:
            raise UsageError(f"trace file not found: {exc.filename}") from None
    else:
        traces = synthetic_corpus(args.synthetic, args.duration, args.rate_scale, args.seed, args.slot)
    report = corpus_report(traces, args.slot, args.g, args.tau, args.window)
    _write(args.output, argv, ["variant", "mean_distance", "variance"], report.rows())
    if args.matrix:
        labels = [t.label for t in traces]
        rows = []
        for variant in ("unmodified", "slotted", "shaped"):
            mat = report.matrices[variant]
            for i in range(len(traces)):
                for k in range(i + 1, len(traces)):
                    rows.append((variant, labels[i], labels[k], mat[i, k]))
        _write(args.matrix, argv, ["variant", "trace_a", "trace_b", "distance"], rows)


def build_parser():
    parser = _Parser(prog="fairshaper", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("-o", "--output", help="CSV destination (default: stdout)")
        return p

    def g_range(p):
        p.add_argument("--g", type=int, help="single on-time")
        p.add_argument("--g-from", type=int, help="first on-time of a sweep")
        p.add_argument("--g-to", type=int, help="last on-time of a sweep (inclusive)")

    m = common(sub.add_parser("model", help="closed-form queue, wait and dummy-rate sweep"))
    m.add_argument("--p", type=float, nargs="+", required=True)
    m.add_argument("--tau", type=int, required=True)
    g_range(m)
    m.add_argument("--skip-unstable", action="store_true",
                   help="emit unstable points with stable_flag=0 instead of failing")
    m.set_defaults(func=cmd_model)

    s = common(sub.add_parser("simulate", help="slot simulator sweep over g"))
    s.add_argument("--p", type=float, default=0.3)
    s.add_argument("--tau", type=int, default=100)
    g_range(s)
    s.add_argument("--cycles", type=int, default=1000)
    s.add_argument("--warmup", type=int, default=None, help="cycles discarded (default 10%%)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    c = common(sub.add_parser("convexity", help="second-derivative scan of the relaxed wait"))
    c.add_argument("--n", type=int, default=50, help="grid points per axis")
    c.add_argument("--p-min", type=float, default=0.05)
    c.add_argument("--p-max", type=float, default=0.9)
    c.add_argument("--margin", type=float, default=0.02, help="smallest c - p on the grid")
    c.add_argument("--point", type=float, nargs=2, action="append", metavar=("P", "C"),
                   help="scan explicit points instead of the grid (repeatable)")
    c.set_defaults(func=cmd_convexity)

    a = common(sub.add_parser("allocate", help="solve proportional-fair allocation scenarios"))
    a.add_argument("--scenario", action="append", required=True,
                   help="flow file with lines 'id sigma psi private' (repeatable)")
    a.add_argument("--sweep", help="deadline sweep, e.g. sigma1=5:15 or sigma1=5:15:0.5")
    a.add_argument("--step-size", type=float, default=1e-3)
    a.add_argument("--inner-iters", type=int, default=10)
    a.add_argument("--outer-iters", type=int, default=40000)
    a.add_argument("--epsilon-d", type=float, default=1e-4)
    a.add_argument("--tolerance", type=float, default=1e-6)
    a.add_argument("--workers", type=int, default=1)
    a.set_defaults(func=cmd_allocate)

    t = common(sub.add_parser("trace", help="pairwise DTW distances of raw, slotted and shaped traces"))
    src = t.add_mutually_exclusive_group()
    src.add_argument("--input", nargs="+", help="CSV files with one timestamp per line")
    src.add_argument("--synthetic", type=int, default=10, help="size of the synthetic corpus")
    t.add_argument("--duration", type=float, default=20.0)
    t.add_argument("--rate-scale", type=float, default=1.0)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--slot", type=float, default=0.01)
    t.add_argument("--g", type=int, default=5)
    t.add_argument("--tau", type=int, default=10)
    t.add_argument("--window", type=float, default=0.2)
    t.add_argument("--matrix", help="also write the per-pair distance matrix here")
    t.set_defaults(func=cmd_trace)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        args.func(args, argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleProblemError as exc:
        print(f"fairshaper: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DomainError as exc:
        print(f"fairshaper: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
