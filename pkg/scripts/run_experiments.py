"""Run every experiment config in configs/ through the CLI and print one line each.

    python scripts/run_experiments.py [--workers N] [--only NAME ...] [--output DIR]
"""
import argparse
import json
import sys
import time
from pathlib import Path

from bresse.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]

# config file -> subcommand
RUNS = {
    "builtin.ini": "verify",
    "equilibria.ini": "equilibria",
    "absorption.ini": "decay-fit",
    "singular_limit.ini": "singular-limit",
    "quasistability.ini": "quasistability",
    "semicontinuity.ini": "semicontinuity",
}


def headline(command, result):
    if command == "verify":
        return f"passed={result['passed']}"
    if command == "equilibria":
        return f"count={result['count']} bounds={result['all_bounds_pass']} fixed={result['all_fixed_points']}"
    if command == "decay-fit":
        return (f"alphas={[round(a, 3) for a in result['alphas']]} spread={result['spread']:.2e} "
                f"uniform={result['uniform']}")
    if command == "singular-limit":
        return f"errors={[f'{e:.2e}' for e in result['errors']]}"
    if command == "quasistability":
        return f"feasible={result['feasible']} alpha_B={result['alpha_B']:.3f} C_B={result['C_B']:.3f}"
    if command == "semicontinuity":
        return (f"semidistances={[f'{d:.2e}' for d in result['semidistances']]} "
                f"nonincreasing={result['nonincreasing']}")
    return ""


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", nargs="*", default=None, help="config stems to run")
    ap.add_argument("--output", type=Path, default=ROOT / "out")
    args = ap.parse_args(argv)
    worst = 0
    for name, command in RUNS.items():
        stem = Path(name).stem
        if args.only and stem not in args.only:
            continue
        out = args.output / stem
        t0 = time.perf_counter()
        code = cli_main([command, "--config", str(ROOT / "configs" / name), "--output", str(out),
                         "--workers", str(args.workers)])
        elapsed = time.perf_counter() - t0
        line = f"{stem:16s} {command:15s} exit={code} {elapsed:6.1f}s"
        summary = out / "summary.json"
        if code == 0 and summary.exists():
            line += "  " + headline(command, json.loads(summary.read_text())["result"])
        print(line, flush=True)
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
