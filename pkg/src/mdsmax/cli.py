"""Command-line entry point.

    mdsmax --config run.toml [--out results.csv] [--threads K] [--only SUITE]

Exit codes: 0 success, 1 suite or row failure, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

from . import harness
from .config import RunConfig, load_config
from .errors import InputError
from .harness import CSV_COLUMNS, MCConfig, SweepResult
from .verify import VerifySettings, run_suites

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _mc(cfg: RunConfig, threads: int) -> MCConfig:
    m = cfg.mc
    return MCConfig(replications=m.replications, base_seed=m.base_seed, delta=m.delta,
                    mode=m.mode, mc_budget=m.mc_budget, threads=threads,
                    timing=cfg.output.timing)


def cmd_verify(cfg: RunConfig, only: list[str] | None = None, out=None,
               quick: bool = False) -> int:
    out = out or sys.stdout
    v = cfg.verify
    settings = VerifySettings(seed=v.seed, scale=v.scale * (0.05 if quick else 1.0),
                              kappas=tuple(v.kappas))
    names = only or v.suites or None
    results = run_suites(settings, names)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        detail = f" ({r.detail})" if r.detail else ""
        print(f"{status:4}  {r.name:20s} worst margin {r.margin:+.6g}{detail}", file=out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_bound(cfg: RunConfig, threads: int = 1) -> list[SweepResult]:
    return harness.evaluate_point(cfg.scenario, cfg.bound.alpha, _mc(cfg, threads),
                                  command="bound", simulate=False, C=cfg.bound.C)


def cmd_simulate(cfg: RunConfig, threads: int = 1) -> list[SweepResult]:
    return harness.evaluate_point(cfg.scenario, cfg.bound.alpha, _mc(cfg, threads),
                                  command="simulate", simulate=True, C=cfg.bound.C)


def _existing_keys(path: str) -> set[tuple]:
    if not os.path.exists(path):
        return set()
    with open(path, newline="", encoding="utf-8") as fh:
        return {(r["kind"], r["d"], r["n"], r["atom"], r["base_seed"])
                for r in csv.DictReader(fh) if not r.get("error")}


def cmd_sweep(cfg: RunConfig, threads: int = 1, done: set[tuple] | None = None,
              progress: bool = True) -> list[SweepResult]:
    """Run the grid, skipping (point, atom, seed) keys already in ``done``."""
    from .martingale import make_scenario

    mc = _mc(cfg, threads)
    done = done or set()
    rows: list[SweepResult] = []
    points = cfg.grid.points()
    for i, point in enumerate(points):
        kind, d, n = point[0], point[1], point[2]
        try:
            scenario = make_scenario(*point)
        except InputError as exc:
            rows.append(SweepResult("sweep", kind, d, n, "", 1.0, mc.base_seed,
                                    cfg.bound.alpha, cfg.bound.C, error=str(exc)))
            continue
        pending = [a.label for a in scenario.atoms
                   if (kind, str(d), str(n), a.label, str(mc.base_seed)) not in done]
        if not pending:
            continue
        if progress:
            print(f"[{i + 1}/{len(points)}] {kind} d={d} n={n}", file=sys.stderr)
        for res in harness.evaluate_point(scenario, cfg.bound.alpha, mc, C=cfg.bound.C):
            if res.atom in pending:
                rows.append(res)
    return rows


def write_rows(results: list[SweepResult], path: str | None, append: bool = False,
               stream=None) -> None:
    if path is None:
        stream = stream or sys.stdout
        writer = csv.DictWriter(stream, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(r.to_row() for r in results)
        return
    exists = append and os.path.exists(path) and os.path.getsize(path) > 0
    with open(path, "a" if exists else "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        if not exists:
            writer.writeheader()
        writer.writerows(r.to_row() for r in results)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mdsmax", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--out", help="CSV output path (overrides output.csv)")
    ap.add_argument("--threads", type=int, default=1,
                    help="worker threads; 0 means one per CPU")
    ap.add_argument("--only", action="append", metavar="SUITE",
                    help="restrict verify to this suite (repeatable)")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.threads < 0:
            raise InputError("--threads must be nonnegative")
        threads = args.threads or os.cpu_count() or 1
        if cfg.command in ("verify", "selftest"):
            return cmd_verify(cfg, args.only, quick=cfg.command == "selftest")
        out_path = args.out or cfg.output.csv
        if cfg.command == "bound":
            results = cmd_bound(cfg, threads)
        elif cfg.command == "simulate":
            results = cmd_simulate(cfg, threads)
        else:
            done = _existing_keys(out_path) if (cfg.output.append and out_path) else set()
            results = cmd_sweep(cfg, threads, done)
        write_rows(results, out_path, cfg.output.append)
    except InputError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_FAIL if any(r.error for r in results) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
