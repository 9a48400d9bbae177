"""Command-line front end: run, compare, ablate, replay.

Output files land in --out-dir (or $CONTACTLOC_OUT_DIR, or the working
directory). Exit code 0 on success, 1 when a replay mismatches, 2 on
validation or I/O failures.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

from .errors import ContactLocError
from .harness import (
    PLANNERS,
    ResultsWriter,
    ablation_heuristics,
    replay_row,
    run_episode,
    run_suite,
)
from .scenario import builtin_names, resolve_scenario, with_overrides


def _out_dir(args) -> Path:
    if args.out_dir:
        return Path(args.out_dir)
    env = os.environ.get("CONTACTLOC_OUT_DIR")
    return Path(env) if env else Path(".")


def _parse_seeds(raw: str) -> list[int]:
    out: list[int] = []
    for part in raw.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise ValueError(f"no seeds in {raw!r}")
    return out


def _progress(record) -> None:
    status = "ok" if record.success else f"FAIL({record.failure})"
    print(
        f"  {record.scenario} {record.planner} seed={record.seed} "
        f"cost={record.cost} iters={record.plan_iterations} {status}",
        flush=True,
    )


def cmd_run(args) -> int:
    scenario = resolve_scenario(args.scenario)
    scenario = with_overrides(scenario, budget=args.budget, seed=args.seed)
    record = run_episode(scenario, args.planner)
    out_dir = _out_dir(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ResultsWriter(out_dir / args.results)
    writer.write(record, str(args.scenario), scenario)
    writer.close()
    _progress(record)
    print(f"results appended to {out_dir / args.results}")
    return 0 if record.success else 1


def cmd_compare(args) -> int:
    seeds = _parse_seeds(args.seeds)
    out_dir = _out_dir(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    records, table = run_suite(
        args.scenarios,
        args.planners,
        seeds,
        results_path=out_dir / args.results,
        progress=_progress if args.verbose else None,
    )
    text = table.render()
    (out_dir / "aggregate.txt").write_text(text)
    print(text, end="")
    print(f"{len(records)} episodes; results in {out_dir / args.results}")
    return 0


def cmd_ablate(args) -> int:
    seeds = _parse_seeds(args.seeds)
    out_dir = _out_dir(args)
    out_dir.mkdir(parents=True, exist_ok=True)
    records, table = ablation_heuristics(
        args.scenarios,
        seeds,
        results_path=out_dir / args.results,
        progress=_progress if args.verbose else None,
    )
    text = table.render()
    (out_dir / "ablation.txt").write_text(text)
    print(text, end="")
    return 0


def cmd_replay(args) -> int:
    path = Path(args.results)
    with path.open() as fh:
        rows = [r for r in csv.DictReader(fh) if int(r["run_id"]) == args.run_id]
    if not rows:
        print(f"no rows with run_id {args.run_id} in {path}", file=sys.stderr)
        return 2
    mismatches = 0
    for row in rows:
        recorded, replayed, matches = replay_row(row)
        tag = "ok" if matches else "MISMATCH"
        print(f"  {recorded.scenario} {recorded.planner} seed={recorded.seed}: {tag}")
        if not matches:
            mismatches += 1
            print(f"    recorded: {recorded}")
            print(f"    replayed: {replayed}")
    print(f"{len(rows)} episodes replayed, {mismatches} mismatches")
    return 0 if mismatches == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="contactloc",
        description="Contact-only localization planning benchmark",
        epilog=f"builtin scenarios: {', '.join(builtin_names())}",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a single episode")
    run.add_argument("--scenario", required=True, help="scenario file or builtin name")
    run.add_argument("--planner", default="rtdp", choices=PLANNERS)
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--budget", type=int, default=None, help="planner budget override")
    run.add_argument("--results", default="results.csv")
    run.add_argument("--out-dir", default=None)
    run.set_defaults(func=cmd_run)

    compare = sub.add_parser("compare", help="suite over planners and seeds")
    compare.add_argument("--scenarios", nargs="+", required=True)
    compare.add_argument("--planners", nargs="+", default=["rtdp", "tbl", "frontier"])
    compare.add_argument("--seeds", default="0..9", help="e.g. 0..29 or 1,2,5")
    compare.add_argument("--results", default="results.csv")
    compare.add_argument("--out-dir", default=None)
    compare.add_argument("--verbose", action="store_true")
    compare.set_defaults(func=cmd_compare)

    ablate = sub.add_parser("ablate", help="dual-heuristic schedule vs greedy-only")
    ablate.add_argument("--scenarios", nargs="+", required=True)
    ablate.add_argument("--seeds", default="0..9")
    ablate.add_argument("--results", default="results.csv")
    ablate.add_argument("--out-dir", default=None)
    ablate.add_argument("--verbose", action="store_true")
    ablate.set_defaults(func=cmd_ablate)

    replay = sub.add_parser("replay", help="re-run recorded episodes and verify")
    replay.add_argument("--results", required=True)
    replay.add_argument("--run-id", type=int, required=True)
    replay.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ContactLocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
