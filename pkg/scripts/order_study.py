"""RK4 convergence study: final-state error against step size.

The free particle in polar coordinates is compared with the exact straight
line; the charged mass (builtin `example1`, projection off) is compared with
a run at one eighth of the smallest step.
"""

from __future__ import annotations

import argparse
import math

import numpy as np

from noetherlab.dynamics import PhaseState, integrate, project_to_manifold
from noetherlab.model import MechSystem, NaturalLagrangian
from noetherlab.scenario import builtin_path, load_scenario


def final_state(sys, init, h, T):
    tr = integrate(sys, init, h, int(round(T / h)), projection=False)
    return np.concatenate([tr.q[-1], tr.p[-1]])


def polar_errors(steps, T):
    sys = MechSystem(NaturalLagrangian.build(2, {(0, 0): "1", (1, 1): "q1^2"}))
    vx, vy = 0.2, 0.9
    x, y = 1.0 + vx * T, vy * T
    r = math.hypot(x, y)
    exact = np.array([r, math.atan2(y, x), (x * vx + y * vy) / r, x * vy - y * vx])
    init = PhaseState(0.0, [1.0, 0.0], [vx, vy])
    return [float(np.max(np.abs(final_state(sys, init, h, T) - exact))) for h in steps]


def charged_mass_errors(steps, T):
    scn = load_scenario(builtin_path("example1"))
    cfg = scn.integration
    init = project_to_manifold(scn.system, PhaseState(cfg.t0, cfg.q0, cfg.p0))
    ref = final_state(scn.system, init, min(steps) / 8, T)
    return [float(np.max(np.abs(final_state(scn.system, init, h, T) - ref))) for h in steps]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=float, nargs="+", default=[2e-2, 1e-2, 5e-3, 2.5e-3])
    ap.add_argument("--horizon", type=float, default=1.0)
    args = ap.parse_args()
    steps = sorted(args.steps, reverse=True)
    for label, errs in [
        ("free particle (polar)", polar_errors(steps, 2 * args.horizon)),
        ("charged mass, no projection", charged_mass_errors(steps, args.horizon)),
    ]:
        slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
        print(f"{label}: slope {slope:.3f}")
        for h, e in zip(steps, errs):
            print(f"  h={h:<8g} error={e:.3e}")


if __name__ == "__main__":
    main()
