"""Sweep random polynomial systems: admissible directions versus perturbed ones.

For every (n, k) class, reports the worst annihilator residual of directions
in the admissible set and the smallest residual of the perturbed controls.
"""

from __future__ import annotations

import argparse
from collections import defaultdict

import numpy as np

from noetherlab.randsys import random_system
from noetherlab.verify import subset_check


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--systems", type=int, default=50)
    ap.add_argument("--directions", type=int, default=20)
    ap.add_argument("--samples", type=int, default=64)
    ap.add_argument("--perturbation", type=float, default=1e-2)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    stats = defaultdict(lambda: [0, 0.0, np.inf])
    for i in range(args.systems):
        n = int(rng.integers(2, 5))
        k = int(rng.integers(1, min(2, n - 1) + 1))
        sys = random_system(rng, n, k)
        inc, ctrl = subset_check(
            sys,
            args.directions,
            args.samples,
            seed=i,
            perturbation=args.perturbation,
            q_scale=0.5,
            t_range=(0.0, 1.0),
        )
        s = stats[(n, k)]
        s[0] += 1
        s[1] = max(s[1], inc.residual)
        s[2] = min(s[2], ctrl.residual)
    print(f"{'n':>2} {'k':>2} {'systems':>8} {'worst admissible':>18} {'smallest control':>18}")
    for (n, k), (count, worst, ctrl) in sorted(stats.items()):
        print(f"{n:>2} {k:>2} {count:>8} {worst:>18.3e} {ctrl:>18.3e}")


if __name__ == "__main__":
    main()
