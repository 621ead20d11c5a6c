"""Perturbed Hamiltonian vector field on the constrained manifold and its RK4 integration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constraint import (
    MultiplierSolution,
    multipliers_at,
    project_configuration,
    project_momentum,
)
from .model import MechSystem, ModelError

__all__ = [
    "IntegrationError",
    "PhaseState",
    "PhaseVectorField",
    "Trajectory",
    "vector_field",
    "integrate",
    "project_to_manifold",
    "manifold_residual",
    "TOL_MANIFOLD",
]

TOL_MANIFOLD = 1e-9


class IntegrationError(ModelError):
    pass


@dataclass
class PhaseState:
    t: float
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.t = float(self.t)
        self.q = np.asarray(self.q, dtype=float)
        self.p = np.asarray(self.p, dtype=float)


@dataclass
class PhaseVectorField:
    """A tangent vector (dt, dq, dp) at a phase point."""

    dt: float
    dq: np.ndarray
    dp: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.dt], self.dq, self.dp])

    @classmethod
    def from_array(cls, v, n: int) -> "PhaseVectorField":
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), v[1 : 1 + n].copy(), v[1 + n :].copy())


@dataclass
class Trajectory:
    t: np.ndarray  # (N,)
    q: np.ndarray  # (N, n)
    p: np.ndarray  # (N, n)
    lam: np.ndarray  # (N, k)
    drift: np.ndarray  # (N,) constraint residual before projection
    h: float
    meta: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self):
        return len(self.t)

    def state(self, i: int) -> PhaseState:
        return PhaseState(self.t[i], self.q[i], self.p[i])

    def points(self, sys: MechSystem) -> list:
        """(PointEval, MultiplierSolution) at every sample, computed once per system."""
        key = id(sys)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not sys:
            pts = []
            for i in range(len(self.t)):
                pt = sys.at(self.t[i], self.q[i], self.p[i])
                pts.append((pt, multipliers_at(sys, pt)))
            hit = (sys, pts)
            self._cache[key] = hit
        return hit[1]


def manifold_residual(sys: MechSystem, t: float, q, p) -> float:
    """max(|g^l|, |f^l|) at a phase point."""
    if sys.k == 0:
        return 0.0
    rows = sys.rows_at(t, q)
    g = rows.a0 + rows.A @ sys.jet(t, q, p).H_p
    r = float(np.max(np.abs(g)))
    if rows.f.size:
        r = max(r, float(np.max(np.abs(rows.f))))
    return r


def _rhs(sys: MechSystem, t: float, q, p) -> tuple[np.ndarray, np.ndarray, MultiplierSolution]:
    pt = sys.at(t, q, p)
    sol = multipliers_at(sys, pt)
    dq = pt.jet.H_p.copy()
    dp = -pt.jet.H_q + pt.F + sol.reaction
    return dq, dp, sol


def vector_field(sys: MechSystem, state: PhaseState) -> PhaseVectorField:
    """qdot = H_p, pdot = -H_q + F + R with R from the multiplier solve."""
    dq, dp, _ = _rhs(sys, state.t, state.q, state.p)
    return PhaseVectorField(1.0, dq, dp)


def project_to_manifold(sys: MechSystem, state: PhaseState, tol: float = 1e-12) -> PhaseState:
    """Newton-project q onto the holonomic set, then correct p in the H_pp metric."""
    q, _ = project_configuration(sys, state.t, state.q, tol=tol)
    p, _ = project_momentum(sys, state.t, q, state.p)
    return PhaseState(state.t, q, p)


def integrate(
    sys: MechSystem,
    initial: PhaseState,
    h: float,
    steps: int,
    projection: bool = True,
    tol_initial: float = TOL_MANIFOLD,
) -> Trajectory:
    """Classical fixed-step RK4; optional projection back onto the manifold after each step."""
    if not h > 0:
        raise ValueError("step size must be positive")
    n, k = sys.n, sys.k
    t, q, p = initial.t, initial.q.copy(), initial.p.copy()
    r0 = manifold_residual(sys, t, q, p)
    if r0 > tol_initial:
        raise IntegrationError(f"initial state is off the constraint manifold (residual {r0:.3g})")

    ts = np.empty(steps + 1)
    qs = np.empty((steps + 1, n))
    ps = np.empty((steps + 1, n))
    lams = np.empty((steps + 1, k))
    drift = np.empty(steps + 1)
    ts[0], qs[0], ps[0], drift[0] = t, q, p, r0

    for i in range(steps):
        rows = sys.rows_at(t, q)
        sys.check_rank(rows, t)
        k1q, k1p, sol = _rhs(sys, t, q, p)
        lams[i] = sol.lam
        k2q, k2p, _ = _rhs(sys, t + 0.5 * h, q + 0.5 * h * k1q, p + 0.5 * h * k1p)
        k3q, k3p, _ = _rhs(sys, t + 0.5 * h, q + 0.5 * h * k2q, p + 0.5 * h * k2p)
        k4q, k4p, _ = _rhs(sys, t + h, q + h * k3q, p + h * k3p)
        # t advanced as t0 + (i+1) h to keep a uniform grid
        t = initial.t + (i + 1) * h
        q = q + (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        p = p + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise IntegrationError(f"non-finite state at t={t}")
        drift[i + 1] = manifold_residual(sys, t, q, p)
        if projection:
            q, _ = project_configuration(sys, t, q)
            p, _ = project_momentum(sys, t, q, p)
        ts[i + 1], qs[i + 1], ps[i + 1] = t, q, p

    _, _, sol = _rhs(sys, t, q, p)
    lams[steps] = sol.lam
    meta = {"method": "rk4", "projection": bool(projection), "steps": int(steps)}
    return Trajectory(ts, qs, ps, lams, drift, float(h), meta)
