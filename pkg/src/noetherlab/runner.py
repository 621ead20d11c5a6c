"""Execute a scenario: integrate, run the requested checks, assemble outputs."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .constraint import sample_manifold_states
from .expr import ZERO
from .dynamics import PhaseState, Trajectory, integrate, manifold_residual, project_to_manifold
from .model import MechSystem, ModelError
from .scenario import Scenario, SymmetryEntry
from .symmetry import (
    bracket_defect,
    generalized_symmetry_residuals,
    invariance_residual,
    lagrangian_invariance_residual,
    lagrangian_noether,
    noether_function,
    noether_lie_derivative,
    solve_gamma_dt,
    weak_noether_residual,
)
from .verify import (
    Check,
    Report,
    _check,
    conservation_report,
    gyroscopic_check,
    manifold_check,
    moving_energy_report,
    momentum_equation_report,
    multiplier_oracle_check,
    noether_series,
    subset_check,
)

__all__ = ["RunResult", "run_scenario", "DEFAULT_TOLERANCES", "TOL_INITIAL"]

TOL_INITIAL = 1e-6

DEFAULT_TOLERANCES = {
    "conservation": 1e-8,
    "momentum": 1e-8,
    "invariance": 1e-10,
    "lagrange": 1e-9,
    "weak-noether": 1e-10,
    "generalized": 1e-9,
    "bracket": 1e-9,
    "moving-energy": 1e-8,
    "manifold": 1e-10,
    "gyroscopic": 1e-12,
    "subset": 1e-8,
    "oracle": 1e-5,
}


@dataclass
class RunResult:
    scenario: Scenario
    report: Report
    trajectory: Trajectory | None
    J: dict  # label -> series along the trajectory
    elapsed: float

    @property
    def passed(self) -> bool:
        return self.report.passed

    def header(self) -> list[str]:
        n, k = self.scenario.n, self.scenario.system.k
        cols = ["t"] + [f"q{i}" for i in range(1, n + 1)] + [f"p{i}" for i in range(1, n + 1)]
        cols += [f"lambda{l}" for l in range(1, k + 1)]
        cols += [f"{label}_J" for label in self.J]
        return cols + ["constraint_drift"]

    def table(self) -> np.ndarray:
        tr = self.trajectory
        parts = [tr.t[:, None], tr.q, tr.p, tr.lam]
        parts += [np.asarray(v)[:, None] for v in self.J.values()]
        parts.append(tr.drift[:, None])
        return np.hstack(parts)


def _tol(scn: Scenario, entry: SymmetryEntry | None, name: str) -> float:
    if entry is not None and name in entry.tolerances:
        return entry.tolerances[name]
    return scn.tolerances.get(name, DEFAULT_TOLERANCES[name])


def _samples(scn: Scenario, seed: int):
    cfg = scn.integration
    if cfg is not None:
        t_end = cfg.t0 + cfg.h * cfg.steps
        kw = dict(t_range=(cfg.t0, t_end), q_center=cfg.q0)
        count = cfg.samples
    else:
        kw = {}
        count = 100
    return sample_manifold_states(scn.system, count, seed=seed, **kw)


def _symmetry_checks(
    scn: Scenario, entry: SymmetryEntry, traj: Trajectory | None, J, seed: int, states
) -> list[Check]:
    sys = scn.system
    spec = entry.spec
    label = spec.label
    cfg = scn.integration
    out: list[Check] = []
    for name in entry.checks:
        tol = _tol(scn, entry, name)
        if name == "conservation":
            out.append(conservation_report(sys, spec, traj, tol, J=J))
        elif name == "momentum":
            out.extend(momentum_equation_report(sys, spec, traj, tol, cfg.check_points, seed))
        elif name == "moving-energy":
            out.extend(moving_energy_report(sys, entry.xi0, traj, spec, tol, cfg.check_points, seed))
        elif name == "invariance":
            worst = max(abs(invariance_residual(spec, sys, s)) for s in states)
            out.append(_check(f"{label}: invariance on manifold", "invariance", worst, tol, len(states)))
        elif name == "lagrange":
            worst_r = worst_j = 0.0
            plain = replace(spec, gauge=ZERO, beta=None)
            for t, q, p in states:
                v = sys.jet(t, q, p).H_p
                rH = invariance_residual(plain, sys, (t, q, p))
                rL = lagrangian_invariance_residual(plain, sys, t, q, v)
                worst_r = max(worst_r, abs(rL + rH) / (1.0 + abs(rH)))
                jH = noether_function(plain, sys, (t, q, p))
                jL = lagrangian_noether(plain, sys, t, q, v)
                worst_j = max(worst_j, abs(jL - jH) / (1.0 + abs(jH)))
            out.append(
                _check(
                    f"{label}: Hamilton/Lagrange equivalence",
                    "lagrange",
                    max(worst_r, worst_j),
                    tol,
                    len(states),
                    invariance_difference=worst_r,
                    noether_difference=worst_j,
                )
            )
        elif name == "weak-noether":
            worst = worst_lie = 0.0
            for s in states:
                worst = max(worst, float(np.max(np.abs(weak_noether_residual(spec, sys, s)))))
                worst_lie = max(worst_lie, abs(noether_lie_derivative(spec, sys, s)))
            out.append(
                _check(f"{label}: weak Noether condition", "weak-noether", worst, tol, len(states), zeta_of_J=worst_lie)
            )
        elif name == "bracket":
            worst = max(float(np.max(np.abs(bracket_defect(spec, sys, s)))) for s in states)
            out.append(_check(f"{label}: bracket defect", "bracket", worst, tol, len(states)))
        elif name == "generalized":
            gamma = solve_gamma_dt if entry.gamma == "solve-dt" else entry.gamma
            wa = wb = 0.0
            for pt, _ in traj.points(sys):
                A, B = generalized_symmetry_residuals(spec, gamma, sys, pt)
                wa = max(wa, float(np.max(np.abs(A))))
                wb = max(wb, abs(B))
            out.append(
                _check(
                    f"{label}: generalized symmetry residuals",
                    "generalized",
                    max(wa, wb),
                    tol,
                    len(traj),
                    residual_form=wa,
                    residual_scalar=wb,
                )
            )
    return out


def run_scenario(
    scn: Scenario,
    seed: int | None = None,
    h: float | None = None,
    steps: int | None = None,
) -> RunResult:
    """Integrate (if configured) and run every requested check."""
    start = time.perf_counter()
    sys: MechSystem = scn.system
    cfg = scn.integration
    if cfg is not None:
        cfg = replace(
            cfg,
            seed=cfg.seed if seed is None else int(seed),
            h=cfg.h if h is None else float(h),
            steps=cfg.steps if steps is None else int(steps),
        )
        scn = replace(scn, integration=cfg)
    seed = cfg.seed if cfg is not None else (seed or 0)
    report = Report(scn.name)
    traj = None
    J: dict = {}
    if cfg is not None:
        r0 = manifold_residual(sys, cfg.t0, cfg.q0, cfg.p0)
        if r0 > TOL_INITIAL:
            raise ModelError(f"initial state is {r0:.3g} off the constraint manifold (limit {TOL_INITIAL:g})")
        init = project_to_manifold(sys, PhaseState(cfg.t0, cfg.q0, cfg.p0))
        traj = integrate(sys, init, cfg.h, cfg.steps, projection=cfg.projection)
        for entry in scn.symmetries:
            J[entry.spec.label] = noether_series(sys, entry.spec, traj)

    needs_states = any(
        c in ("invariance", "lagrange", "weak-noether", "bracket") for e in scn.symmetries for c in e.checks
    )
    states = _samples(scn, seed) if needs_states else []
    for entry in scn.symmetries:
        report.add(*_symmetry_checks(scn, entry, traj, J.get(entry.spec.label), seed, states))

    sample_kw = {}
    if cfg is not None:
        sample_kw = dict(t_range=(cfg.t0, cfg.t0 + cfg.h * cfg.steps), q_center=cfg.q0)
    for name in scn.system_checks:
        tol = _tol(scn, None, name)
        if name == "manifold":
            report.add(manifold_check(sys, traj, tol))
        elif name == "gyroscopic":
            report.add(gyroscopic_check(sys, 64, seed, tol, **sample_kw))
        elif name == "subset":
            report.add(*subset_check(sys, 20, 64, seed, tol, n_points=5, **sample_kw))
        elif name == "oracle":
            count = cfg.samples if cfg is not None else 100
            states_o = sample_manifold_states(sys, count, seed=seed + 1, **sample_kw)
            report.add(multiplier_oracle_check(sys, states_o, tol=tol))

    if traj is not None:
        H = np.array([pt.jet.H for pt, _ in traj.points(sys)])
        report.summaries["steps"] = cfg.steps
        report.summaries["h"] = cfg.h
        report.summaries["projection"] = cfg.projection
        report.summaries["max_constraint_drift"] = float(traj.drift.max())
        report.summaries["energy_drift_absolute"] = float(np.max(np.abs(H - H[0])))
        report.summaries["energy_drift_relative"] = float(np.max(np.abs(H - H[0])) / max(1.0, abs(H[0])))
        for label, series in J.items():
            dev = float(np.max(np.abs(series - series[0])))
            report.summaries[f"{label}_J_drift_absolute"] = dev
            report.summaries[f"{label}_J_drift_relative"] = dev / max(1.0, abs(float(series[0])))
    report.summaries["seed"] = seed
    elapsed = time.perf_counter() - start
    return RunResult(scn, report, traj, J, elapsed)
