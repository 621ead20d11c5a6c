"""Point- and trajectory-level checks with structured reports.

Every check carries a tolerance and passes iff its residual is within it.
Pointwise identities use the normalized residual |lhs - rhs| / (1 + |lhs|);
drifts are reported both absolute and relative to max(1, |J(0)|).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .constraint import (
    TOL_MEMBERSHIP,
    in_reaction_annihilator,
    multipliers_at,
    sample_manifold_states,
)
from .dynamics import Trajectory, manifold_residual
from .expr import Expr, compile_exprs
from .model import MechSystem, ModelError, coordinate_names
from .symmetry import (
    SymmetrySpec,
    _point,
    noether_function,
    noether_gradient,
    weak_noether_residual,
)

__all__ = [
    "Check",
    "Report",
    "ANCHORS",
    "TOL_POINTWISE",
    "TOL_DRIFT",
    "momentum_equation_report",
    "conservation_report",
    "gyroscopic_check",
    "subset_check",
    "moving_energy_report",
    "multiplier_oracle",
    "multiplier_oracle_check",
    "noether_series",
]

TOL_POINTWISE = 1e-8
TOL_DRIFT = 1e-8
TOL_GYRO = 1e-12

ANCHORS = {
    "momentum-full": "momentum equation: dJ/dt = sum_i (F_i + R_i)(xi_i - qdot_i tau)",
    "momentum-reduced": "momentum equation on the reaction annihilator: dJ/dt = sum_i F_i (xi_i - qdot_i tau)",
    "momentum-iff": "reduced momentum equation holds iff (tau, xi) annihilates the reaction",
    "conservation": "Noether function J = p.xi - H tau + beta(zeta) - f is a first integral",
    "gyroscopic": "gyroscopic force: sum_i F_i dH/dp_i = 0",
    "subset": "admissible directions annihilate the reaction force",
    "subset-control": "directions pushed off the admissible set fail the annihilator test",
    "moving-energy-membership": "xi - xi0 lies in the reaction-annihilator distribution",
    "moving-energy-drift": "moving energy p.xi - H is a first integral",
    "moving-energy-iff": "moving energy is conserved iff xi - xi0 annihilates the reaction",
    "multiplier-oracle": "multipliers keep d/dt g = 0 (finite-difference oracle)",
    "invariance": "invariance condition L_zeta H = p.dxi/dt - H dtau/dt on the constraint manifold",
    "lagrange": "invariance conditions and Noether functions agree under the Legendre map",
    "weak-noether": "weak Noether condition L_zeta(alpha + beta) = df",
    "generalized": "generalized symmetry conditions with a 1-form gamma",
    "bracket": "[Z, zeta] is proportional to Z",
    "manifold": "trajectory stays on the constraint manifold",
}


@dataclass
class Check:
    name: str
    anchor: str
    passed: bool
    residual: float
    tolerance: float
    samples: int
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark}  {self.name:<34} residual={self.residual:.3e}  tol={self.tolerance:.1e}  n={self.samples}"


def _check(name, key, residual, tol, samples, **detail) -> Check:
    residual = float(residual)
    ok = bool(np.isfinite(residual) and residual <= tol)
    return Check(name, ANCHORS[key], ok, residual, float(tol), int(samples), detail)


@dataclass
class Report:
    scenario: str
    checks: list = field(default_factory=list)
    summaries: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, *checks: Check) -> "Report":
        self.checks.extend(checks)
        return self

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "summaries": self.summaries,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False, default=float)

    def to_text(self) -> str:
        lines = [f"scenario: {self.scenario}", f"verdict: {'PASS' if self.passed else 'FAIL'}", ""]
        for c in self.checks:
            lines.append(c.line())
            lines.append(f"      {c.anchor}")
        if self.summaries:
            lines.append("")
            for key, val in self.summaries.items():
                lines.append(f"{key}: {val}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# trajectory checks


def _indices(traj: Trajectory, count: int | None) -> np.ndarray:
    N = len(traj)
    if count is None or count >= N:
        return np.arange(N)
    return np.unique(np.linspace(0, N - 1, count).round().astype(int))


def noether_series(sys: MechSystem, spec: SymmetrySpec, traj: Trajectory) -> np.ndarray:
    return np.array([noether_function(spec, sys, pt) for pt, _ in traj.points(sys)])


def _annihilator_along(sys, spec, traj, idx, seed, tol) -> tuple[bool, float]:
    worst = 0.0
    rng = np.random.default_rng(seed)
    ok = True
    for i in idx:
        sp = _point(spec, sys, traj.state(i))
        v = in_reaction_annihilator(sys, traj.t[i], traj.q[i], sp.tau, sp.xi, seed=rng, tol=tol)
        worst = max(worst, v.residual)
        ok &= v.ok
    return ok, worst


def momentum_equation_report(
    sys: MechSystem,
    spec: SymmetrySpec,
    traj: Trajectory,
    tol: float = TOL_POINTWISE,
    membership_points: int | None = 50,
    seed: int = 0,
) -> list[Check]:
    """dJ/dt from the exact gradient of J against the force-weighted right-hand sides.

    The identity dJ/dt = dalpha(P, zeta) + W(Z + P) holds for any spec, W
    being the weak Noether residual; the reported right-hand sides keep
    the W term so that specs with a gauge not satisfying the weak Noether
    condition are still checked exactly.
    """
    full = reduced = 0.0
    worst_w = 0.0
    for pt, sol in traj.points(sys):
        sp = _point(spec, sys, pt)
        R = sol.reaction
        v = np.concatenate([[1.0], pt.jet.H_p, -pt.jet.H_q + pt.F + R])
        lhs = float(noether_gradient(spec, sys, sp) @ v)
        W = weak_noether_residual(spec, sys, sp)
        wv = float(W @ v)
        w = sp.xi - pt.jet.H_p * sp.tau
        rhs_full = float((pt.F + R) @ w) + wv
        rhs_red = float(pt.F @ w) + wv
        scale = 1.0 + abs(lhs)
        full = max(full, abs(lhs - rhs_full) / scale)
        reduced = max(reduced, abs(lhs - rhs_red) / scale)
        worst_w = max(worst_w, abs(wv))
    n = len(traj)
    label = spec.label
    c_full = _check(f"{label}: momentum equation (full)", "momentum-full", full, tol, n, weak_term=worst_w)
    c_red = _check(f"{label}: momentum equation (reduced)", "momentum-reduced", reduced, tol, n)
    idx = _indices(traj, membership_points)
    member, worst = _annihilator_along(sys, spec, traj, idx, seed, TOL_MEMBERSHIP)
    agree = member == c_red.passed
    c_iff = Check(
        f"{label}: reduced <=> annihilator",
        ANCHORS["momentum-iff"],
        agree,
        0.0 if agree else 1.0,
        0.0,
        len(idx),
        {"reduced_passed": c_red.passed, "annihilator_passed": bool(member), "annihilator_residual": worst},
    )
    return [c_full, c_red, c_iff]


def conservation_report(
    sys: MechSystem,
    spec: SymmetrySpec,
    traj: Trajectory,
    tol: float = TOL_DRIFT,
    J: np.ndarray | None = None,
) -> Check:
    """Relative drift max|J - J(0)| / max(1, |J(0)|) against `tol`."""
    if J is None:
        J = noether_series(sys, spec, traj)
    dev = np.abs(J - J[0])
    absolute = float(dev.max())
    relative = absolute / max(1.0, abs(float(J[0])))
    return _check(
        f"{spec.label}: conservation",
        "conservation",
        relative,
        tol,
        len(J),
        absolute_drift=absolute,
        J0=float(J[0]),
        worst_time=float(traj.t[int(dev.argmax())]),
    )


def manifold_check(sys: MechSystem, traj: Trajectory, tol: float = 1e-10) -> Check:
    """Post-projection constraint residual along the trajectory."""
    post = max(manifold_residual(sys, traj.t[i], traj.q[i], traj.p[i]) for i in range(len(traj)))
    return _check("manifold residual", "manifold", post, tol, len(traj), pre_projection_drift=float(traj.drift.max()))


# ---------------------------------------------------------------------------
# sampled structural checks


def gyroscopic_check(
    sys: MechSystem,
    n_samples: int = 64,
    seed: int = 0,
    tol: float = TOL_GYRO,
    **sample_kw,
) -> Check:
    """max |F . H_p| / (1 + |F||H_p|) over seeded states on the manifold."""
    worst = 0.0
    for t, q, p in sample_manifold_states(sys, n_samples, seed=seed, **sample_kw):
        pt = sys.at(t, q, p)
        r = abs(float(pt.F @ pt.jet.H_p)) / (1.0 + np.linalg.norm(pt.F) * np.linalg.norm(pt.jet.H_p))
        worst = max(worst, r)
    return _check("gyroscopic force", "gyroscopic", worst, tol, n_samples)


def admissible_directions(sys: MechSystem, t: float, q, count: int, rng: np.random.Generator) -> np.ndarray:
    """Random (tau, xi) with a0 tau + A xi = 0, rows of shape (count, n + 1)."""
    rows = sys.rows_at(t, q)
    aug = np.hstack([rows.a0[:, None], rows.A])
    if sys.k == 0:
        basis = np.eye(sys.n + 1)
    else:
        _, s, Vt = np.linalg.svd(aug)
        basis = Vt[sys.k :].T
    return (basis @ rng.standard_normal((basis.shape[1], count))).T


def subset_check(
    sys: MechSystem,
    n_directions: int = 20,
    n_samples: int = 64,
    seed: int = 0,
    tol: float = TOL_MEMBERSHIP,
    n_points: int = 1,
    perturbation: float = 1e-2,
    **sample_kw,
) -> list[Check]:
    """Admissible directions pass the annihilator test; perturbed copies fail it."""
    rng = np.random.default_rng(seed)
    if sys.k == 0:
        return [_check("admissible in annihilator", "subset", 0.0, tol, 0, vacuous=True)]
    worst = 0.0
    ctrl_best = np.inf
    total = 0
    states = sample_manifold_states(sys, n_points, seed=rng, **sample_kw)
    for t, q, _ in states:
        rows = sys.rows_at(t, q)
        for d in admissible_directions(sys, t, q, n_directions, rng):
            tau, xi = float(d[0]), d[1:]
            v = in_reaction_annihilator(sys, t, q, tau, xi, n_samples=n_samples, seed=rng, tol=tol)
            worst = max(worst, v.residual)
            # push xi along a row normal, where the reaction does work
            u = rows.A.T @ rng.standard_normal(sys.k)
            xi_c = xi + perturbation * u / np.linalg.norm(u) * max(1.0, np.linalg.norm(d))
            vc = in_reaction_annihilator(sys, t, q, tau, xi_c, n_samples=n_samples, seed=rng, tol=tol)
            ctrl_best = min(ctrl_best, vc.residual)
            total += 1
    inc = _check("admissible in annihilator", "subset", worst, tol, total)
    # controls pass when every perturbed direction is rejected
    ctrl = Check(
        "perturbed directions rejected",
        ANCHORS["subset-control"],
        bool(ctrl_best > tol),
        float(ctrl_best),
        tol,
        total,
        {"smallest_control_residual": float(ctrl_best)},
    )
    return [inc, ctrl]


# ---------------------------------------------------------------------------
# moving energy


def moving_energy_report(
    sys: MechSystem,
    xi0: Sequence[Expr],
    traj: Trajectory,
    spec: SymmetrySpec | None = None,
    tol: float = TOL_DRIFT,
    membership_points: int | None = 50,
    seed: int = 0,
    admissibility_tol: float = 1e-10,
) -> list[Check]:
    """Moving energy p.xi - H for a tau = 1 spec and its membership criterion.

    xi0 must be an admissible velocity field (a particular solution of the
    constraint rows); it is checked along the trajectory.
    """
    n = sys.n
    if spec is None:
        spec = SymmetrySpec.build(n, tau=1.0, label="energy")
    fn = compile_exprs(list(xi0), coordinate_names(n)[: n + 1] + sorted(sys.params))
    idx = _indices(traj, membership_points)
    rng = np.random.default_rng(seed)
    adm = 0.0
    member_ok = True
    member_worst = 0.0
    for i in idx:
        t, q = traj.t[i], traj.q[i]
        x0 = np.asarray(fn(t, *q.tolist(), *sys._pv))
        rows = sys.rows_at(t, q)
        if sys.k:
            adm = max(adm, float(np.max(np.abs(rows.a0 + rows.A @ x0))))
        sp = _point(spec, sys, traj.state(i))
        v = in_reaction_annihilator(sys, t, q, 0.0, sp.xi - x0, seed=rng)
        member_ok &= v.ok
        member_worst = max(member_worst, v.residual)
    if adm > admissibility_tol:
        raise ModelError(f"xi0 is not an admissible velocity field (residual {adm:.3g})")
    c_mem = Check(
        f"{spec.label}: xi - xi0 in annihilator",
        ANCHORS["moving-energy-membership"],
        bool(member_ok),
        member_worst,
        TOL_MEMBERSHIP,
        len(idx),
    )
    c_drift = conservation_report(sys, spec, traj, tol)
    c_drift.name = f"{spec.label}: moving energy drift"
    c_drift.anchor = ANCHORS["moving-energy-drift"]
    agree = c_mem.passed == c_drift.passed
    c_iff = Check(
        f"{spec.label}: conserved <=> membership",
        ANCHORS["moving-energy-iff"],
        agree,
        0.0 if agree else 1.0,
        0.0,
        len(idx),
        {"membership": c_mem.passed, "conserved": c_drift.passed},
    )
    return [c_mem, c_drift, c_iff]


# ---------------------------------------------------------------------------
# multiplier oracle


def multiplier_oracle(sys: MechSystem, t: float, q, p, h_fd: float = 1e-6) -> np.ndarray:
    """Multipliers from finite differences of g alone.

    G(lam) = (g(x + h v(lam)) - g(x)) / h with v(lam) = (1, H_p, -H_q + F + A^T lam)
    is affine in lam up to O(h); its columns are read off by unit probes and
    G(lam) = 0 is solved.
    """
    k = sys.k
    if k == 0:
        return np.zeros(0)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    pt = sys.at(t, q, p)
    A = pt.rows.A
    base_dp = -pt.jet.H_q + pt.F

    def g(tt, qq, pp):
        rows = sys.rows_at(tt, qq)
        return rows.a0 + rows.A @ sys.jet(tt, qq, pp).H_p

    g0 = g(t, q, p)

    def G(lam):
        dp = base_dp + A.T @ lam
        return (g(t + h_fd, q + h_fd * pt.jet.H_p, p + h_fd * dp) - g0) / h_fd

    G0 = G(np.zeros(k))
    K = np.column_stack([G(e) - G0 for e in np.eye(k)])
    return np.linalg.solve(K, -G0)


def multiplier_oracle_check(
    sys: MechSystem,
    states: Sequence,
    h_fd: float = 1e-6,
    tol: float = 1e-5,
) -> Check:
    """Worst |lam - lam_oracle| / (1 + |lam|) over the given (t, q, p) states."""
    worst = 0.0
    for t, q, p in states:
        lam = multipliers_at(sys, sys.at(t, q, p)).lam
        if lam.size == 0:
            continue
        lo = multiplier_oracle(sys, t, q, p, h_fd)
        worst = max(worst, float(np.linalg.norm(lam - lo)) / (1.0 + float(np.linalg.norm(lam))))
    return _check("multiplier oracle", "multiplier-oracle", worst, tol, len(states))
