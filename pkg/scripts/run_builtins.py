"""Run every builtin scenario and print one summary line each."""

from __future__ import annotations

import argparse

from noetherlab.runner import run_scenario
from noetherlab.scenario import builtin_names, builtin_path, load_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="subset of builtins (default: all)")
    args = ap.parse_args()
    for name in args.names or builtin_names():
        r = run_scenario(load_scenario(builtin_path(name)))
        failed = [c.name for c in r.report.checks if not c.passed]
        verdict = "PASS" if r.passed else "FAIL"
        print(f"{verdict}  {name:<26} {r.elapsed:6.2f} s  {len(r.report.checks)} checks  {', '.join(failed)}")


if __name__ == "__main__":
    main()
