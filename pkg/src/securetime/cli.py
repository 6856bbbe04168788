"""Command-line entry point: run scenarios, print bounds, sweep grids, bench crypto."""

from __future__ import annotations

import argparse
import csv
import os
import statistics
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import crypto, wire
from .analysis import BoundsSet, RunReport, Verdict, check, compute_bounds, evaluate
from .clock import ConfigError, NetParams
from .netsim import Trace
from .scenario import Scenario, load_scenario, parse_scenario, build_simulation
from .units import format_duration, parse_duration, parse_rate

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
SEED_ENV = "SECURETIME_SEED"
REFERENCE_SIGN_VERIFY_US = 75


@dataclass
class Outcome:
    scenario: Scenario
    trace: Trace
    report: RunReport
    bounds: BoundsSet
    verdict: Verdict


def execute(sc: Scenario) -> Outcome:
    trace = build_simulation(sc).run()
    report = evaluate(trace)
    bounds = compute_bounds(sc.net)
    return Outcome(sc, trace, report, bounds, check(report, bounds, 2 * sc.tick))


def _default_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def render_report(o: Outcome) -> str:
    lines = ["--- report ---", f"scenario={o.scenario.name}", f"seed={o.scenario.seed}",
             f"trace_sha256={o.trace.sha256()}", o.bounds.render(), o.report.to_text().rstrip("\n"),
             "--- verdict ---", o.verdict.render().rstrip("\n"), "--- end ---"]
    return "\n".join(lines) + "\n"


def cmd_run_scenario(args) -> int:
    sc = load_scenario(args.path)
    seed = args.seed if args.seed is not None else _default_seed()
    if seed is not None:
        sc = sc.with_seed(seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    o = execute(sc)
    (out / "trace.csv").write_text(o.trace.to_csv())
    text = render_report(o)
    (out / "report.txt").write_text(text)
    if not args.no_plot:
        from .plotting import plot_offsets
        plot_offsets(o.trace, o.bounds, str(out / "offsets.png"), title=sc.name)
    sys.stdout.write(text)
    return EXIT_PASS if o.verdict.passed else EXIT_FAIL


def cmd_bounds(args) -> int:
    net = NetParams(parse_duration(args.dmin), parse_duration(args.dmax), parse_rate(args.rho))
    print(compute_bounds(net).render())
    return EXIT_PASS


# -- grid -----------------------------------------------------------------------

GRID_COLUMNS = ["name", "delta_min", "delta_max", "rho_max", "eps_m", "eps_1", "eps_2", *RunReport.columns(), "verdict"]


def parse_matrix(text: str) -> list[Scenario]:
    """Base ``key = value`` lines, then one ``point NAME key=value ...`` line per grid point."""
    base: list[str] = []
    points: list[tuple[str, list[str]]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("point "):
            parts = stripped.split()
            if len(parts) < 2:
                raise ConfigError(f"line {lineno}: point needs a name")
            overrides = parts[2:]
            if any("=" not in p for p in overrides):
                raise ConfigError(f"line {lineno}: overrides must be key=value")
            points.append((parts[1], overrides))
        else:
            base.append(stripped)
    if not points:
        raise ConfigError("matrix has no 'point' lines")
    names = [n for n, _ in points]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate point names")
    scenarios = []
    for name, overrides in points:
        keys = {o.split("=", 1)[0].strip() for o in overrides} | {"name"}
        lines = [b for b in base if b.split("=", 1)[0].strip() not in keys]
        lines += [f"name = {name}"] + [o.replace("=", " = ", 1) for o in overrides]
        scenarios.append(parse_scenario("\n".join(lines)))
    return scenarios


def grid_row(o: Outcome) -> dict:
    row = {"name": o.scenario.name, "delta_min": o.scenario.net.delta_min, "delta_max": o.scenario.net.delta_max,
           "rho_max": str(o.scenario.net.rho_max), "eps_m": o.bounds.eps_m, "eps_1": o.bounds.eps_1,
           "eps_2": o.bounds.eps_2}
    row.update(zip(RunReport.columns(), o.report.row()))
    row["verdict"] = "pass" if o.verdict.passed else "fail"
    return row


def _grid_worker(sc: Scenario) -> dict:
    return grid_row(execute(sc))


def run_grid(scenarios: list[Scenario], jobs: int = 1) -> list[dict]:
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_grid_worker, scenarios))
    else:
        rows = [_grid_worker(sc) for sc in scenarios]
    return sorted(rows, key=lambda r: r["name"])


def cmd_grid(args) -> int:
    scenarios = parse_matrix(Path(args.matrix).read_text())
    seed = args.seed if args.seed is not None else _default_seed()
    if seed is not None:
        scenarios = [s.with_seed(seed) for s in scenarios]
    rows = run_grid(scenarios, args.jobs)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, GRID_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    if not args.no_plot:
        from .plotting import plot_grid
        plot_grid(rows, str(out / "summary.png"))
    print("--- grid ---")
    for r in rows:
        print(f"{r['name']}: max_unnoticed={format_duration(int(r['max_unnoticed_offset']))} "
              f"eps_1={format_duration(int(r['eps_1']))} verdict={r['verdict']}")
    failed = [r["name"] for r in rows if r["verdict"] != "pass"]
    print(f"points={len(rows)} failed={len(failed)}")
    print("--- end ---")
    return EXIT_FAIL if failed else EXIT_PASS


# -- crypto bench -----------------------------------------------------------------


def bench_crypto(scheme: str, iters: int) -> dict:
    sch = crypto.get_scheme(scheme)
    kp = crypto.generate_keypair(sch, bytes(range(32)))
    sign_ns, verify_ns = [], []
    for i in range(iters):
        msg = wire.unsigned_portion(wire.Sync1Step(crypto.key_id(kp.public), i, 10**18 + i))
        t0 = time.perf_counter_ns()
        sig = sch.sign(kp.secret, msg)
        t1 = time.perf_counter_ns()
        ok = sch.verify(kp.public, msg, sig)
        t2 = time.perf_counter_ns()
        if not ok:
            raise crypto.CryptoError("self-verification failed")
        sign_ns.append(t1 - t0)
        verify_ns.append(t2 - t1)
    both = [a + b for a, b in zip(sign_ns, verify_ns)]

    def q(xs, p):
        return statistics.quantiles(xs, n=100)[p - 1] if len(xs) > 1 else xs[0]

    return {
        "scheme": sch.name, "iters": iters,
        "sign_median_us": statistics.median(sign_ns) / 1e3, "sign_p90_us": q(sign_ns, 90) / 1e3,
        "verify_median_us": statistics.median(verify_ns) / 1e3, "verify_p90_us": q(verify_ns, 90) / 1e3,
        "sign_verify_median_us": statistics.median(both) / 1e3,
        "reference_us": REFERENCE_SIGN_VERIFY_US,
    }


def cmd_bench(args) -> int:
    res = bench_crypto(args.scheme, args.iters)
    print("--- bench-crypto ---")
    for k, v in res.items():
        print(f"{k}={v:.2f}" if isinstance(v, float) else f"{k}={v}")
    print("--- end ---")
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="securetime", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run-scenario", help="simulate one scenario file and check it against the bounds")
    r.add_argument("path")
    r.add_argument("--seed", type=int, default=None, help=f"override the scenario seed (default: ${SEED_ENV})")
    r.add_argument("--out", default="out", help="directory for trace.csv, report.txt, offsets.png")
    r.add_argument("--no-plot", action="store_true")
    r.set_defaults(func=cmd_run_scenario)

    b = sub.add_parser("bounds", help="print eps_m, eps_1, eps_2 for given delay bounds and drift")
    b.add_argument("--dmin", required=True)
    b.add_argument("--dmax", required=True)
    b.add_argument("--rho", required=True)
    b.set_defaults(func=cmd_bounds)

    g = sub.add_parser("grid", help="run every point of a matrix file and write summary.csv")
    g.add_argument("matrix")
    g.add_argument("--out-dir", default="grid-out")
    g.add_argument("--jobs", type=int, default=1)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--no-plot", action="store_true")
    g.set_defaults(func=cmd_grid)

    c = sub.add_parser("bench-crypto", help="time signing and verification (informational)")
    c.add_argument("--scheme", default="ed25519", choices=sorted(crypto.SCHEMES))
    c.add_argument("--iters", type=int, default=1000)
    c.set_defaults(func=cmd_bench)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"securetime: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
