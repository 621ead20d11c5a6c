"""Command line: run scenarios, validate scenario files, list builtins.

Exit status: 0 when every check passes, 1 when any check fails, 2 on
invalid input or a runtime error in the model.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .expr import DomainError
from .model import ModelError
from .runner import RunResult, run_scenario
from .scenario import ScenarioError, builtin_names, builtin_path, load_scenario, resolve

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def write_csv(result: RunResult, path: Path) -> None:
    """Trajectory table, 17 significant digits, comma separated, LF line ends."""
    np.savetxt(
        path,
        result.table(),
        fmt="%.17g",
        delimiter=",",
        newline="\n",
        header=",".join(result.header()),
        comments="",
    )


def write_outputs(result: RunResult, out: Path) -> Path:
    target = out / result.scenario.name
    target.mkdir(parents=True, exist_ok=True)
    if result.trajectory is not None:
        write_csv(result, target / "trajectory.csv")
    (target / "report.txt").write_text(result.report.to_text(), encoding="utf-8", newline="\n")
    (target / "report.json").write_text(result.report.to_json() + "\n", encoding="utf-8", newline="\n")
    return target


def _run_one(job: tuple) -> tuple[str, int, str]:
    """Run one scenario and write its outputs; returns (name, status, message)."""
    name, out, seed, h, steps = job
    try:
        scn = load_scenario(resolve(name))
        result = run_scenario(scn, seed=seed, h=h, steps=steps)
        target = write_outputs(result, Path(out))
    except (ScenarioError, ModelError, DomainError, ArithmeticError, np.linalg.LinAlgError) as err:
        return name, EXIT_ERROR, f"error: {err}"
    lines = [c.line() for c in result.report.checks]
    verdict = "PASS" if result.passed else "FAIL"
    msg = "\n".join([f"{scn.name}: {verdict} ({result.elapsed:.2f} s) -> {target}"] + ["  " + s for s in lines])
    return name, EXIT_OK if result.passed else EXIT_FAIL, msg


def cmd_run(args) -> int:
    jobs = [(s, args.out, args.seed, args.h, args.steps) for s in args.scenarios]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    status = EXIT_OK
    for _, code, msg in results:
        print(msg, file=sys.stderr if code == EXIT_ERROR else sys.stdout)
        status = max(status, code)
    return status


def cmd_check(args) -> int:
    status = EXIT_OK
    for path in args.paths:
        try:
            scn = load_scenario(resolve(path))
        except (ScenarioError, ModelError) as err:
            print(f"error: {err}", file=sys.stderr)
            status = EXIT_ERROR
            continue
        print(
            f"{path}: ok ({scn.name}, n={scn.n}, {scn.system.k} constraint rows, "
            f"{len(scn.symmetries)} symmetries)"
        )
    return status


def list_builtins() -> str:
    lines = []
    for name in builtin_names():
        scn = load_scenario(builtin_path(name))
        lines.append(f"{name:<26} {scn.description}")
        lines.append(f"{'':<26} anchor: {scn.anchor}")
    return "\n".join(lines)


def cmd_list(args) -> int:
    print(list_builtins())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="noetherlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run builtin names or scenario files")
    run.add_argument("scenarios", nargs="+", metavar="scenario|path")
    run.add_argument("--out", default="out", help="output directory (default: out)")
    run.add_argument("--jobs", type=int, default=1, help="scenarios to run concurrently")
    run.add_argument("--seed", type=int, default=None, help="override the sampling seed")
    run.add_argument("--h", type=float, default=None, help="override the step size")
    run.add_argument("--steps", type=int, default=None, help="override the number of steps")
    run.set_defaults(func=cmd_run)

    chk = sub.add_parser("check", help="validate scenario files without running them")
    chk.add_argument("paths", nargs="+", metavar="path")
    chk.set_defaults(func=cmd_check)

    ls = sub.add_parser("list-builtins", help="list the bundled scenarios")
    ls.set_defaults(func=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
