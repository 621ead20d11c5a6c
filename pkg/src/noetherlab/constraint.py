"""Constraint residuals, Lagrange multipliers, admissible momenta and distribution membership."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .model import MechSystem, ModelError, PointEval

__all__ = [
    "MultiplierError",
    "MultiplierSolution",
    "AdmissibleMomentumChart",
    "Membership",
    "AnnihilatorVerdict",
    "velocity_residual",
    "momentum_residual",
    "admissible_chart",
    "solve_multipliers",
    "multipliers_at",
    "in_virtual_displacements",
    "in_admissible_hatV",
    "in_reaction_annihilator",
    "sample_manifold_states",
    "COND_MAX",
    "TOL_MEMBERSHIP",
]

COND_MAX = 1e12
TOL_MEMBERSHIP = 1e-8
SAMPLE_RADIUS = 10.0
N_SAMPLES = 64


class MultiplierError(ModelError):
    pass


@dataclass
class MultiplierSolution:
    lam: np.ndarray  # (k,)
    reaction: np.ndarray  # (n,) R_i = sum_l lam_l a_i^l
    conditioning: float
    solve_residual: float = 0.0


@dataclass
class AdmissibleMomentumChart:
    """Admissible momenta at (t, q) are exactly p_star + basis @ c."""

    p_star: np.ndarray
    basis: np.ndarray  # (n, n - k), orthonormal columns

    def momentum(self, c) -> np.ndarray:
        return self.p_star + self.basis @ np.asarray(c, dtype=float)


class Membership(NamedTuple):
    ok: bool
    residual: float


class AnnihilatorVerdict(NamedTuple):
    ok: bool
    residual: float  # worst |sum R_i (xi_i - H_p_i tau)| / (1 + |R|)
    samples: int


def velocity_residual(sys: MechSystem, t: float, q, qdot) -> np.ndarray:
    """r^l = a0^l + sum_i a_i^l qdot_i."""
    rows = sys.rows_at(t, q)
    return rows.a0 + rows.A @ np.asarray(qdot, dtype=float)


def momentum_residual(sys: MechSystem, t: float, q, p) -> np.ndarray:
    """g^l = a0^l + sum_i a_i^l dH/dp_i."""
    rows = sys.rows_at(t, q)
    jet = sys.jet(t, q, p)
    return rows.a0 + rows.A @ jet.H_p


def holonomic_residual(sys: MechSystem, t: float, q) -> np.ndarray:
    return sys.rows_at(t, q).f


def admissible_chart(sys: MechSystem, t: float, q) -> AdmissibleMomentumChart:
    n = sys.n
    if sys.k == 0:
        return AdmissibleMomentumChart(np.zeros(n), np.eye(n))
    rows = sys.rows_at(t, q)
    sys.check_rank(rows, t)
    # H_p is affine in p: H_p(p) = H_p(0) + H_pp p
    jet0 = sys.jet(t, q, np.zeros(n))
    B = rows.A @ jet0.H_pp
    rhs = -(rows.a0 + rows.A @ jet0.H_p)
    U, s, Vt = np.linalg.svd(B)
    if s[-1] <= 1e-8 * s[0]:
        raise ModelError(f"momentum constraints are rank deficient at t={t}")
    k = sys.k
    p_star = Vt[:k].T @ ((U.T @ rhs) / s)
    basis = Vt[k:].T.copy()
    return AdmissibleMomentumChart(p_star, basis)


def multipliers_at(sys: MechSystem, pt: PointEval) -> MultiplierSolution:
    """Multipliers that keep d/dt g^l = 0 along the constrained flow.

    (A H_pp A^T) lam = -[g_t + g_q H_p + A H_pp (-H_q + F)]
    """
    n, k = sys.n, sys.k
    if k == 0:
        return MultiplierSolution(np.zeros(0), np.zeros(n), 1.0)
    jet, rows = pt.jet, pt.rows
    A = rows.A
    Hp, Hpp = jet.H_p, jet.H_pp
    g_t = rows.a0_x[:, 0] + rows.A_x[:, :, 0] @ Hp + A @ jet.H_pt
    g_q = rows.a0_x[:, 1:] + np.einsum("lij,i->lj", rows.A_x[:, :, 1:], Hp) + A @ jet.H_pq
    AHpp = A @ Hpp
    S = AHpp @ A.T
    rhs = -(g_t + g_q @ Hp + AHpp @ (pt.F - jet.H_q))
    if k == 1:
        s = float(S[0, 0])
        # a 1x1 system is singular only if it vanishes against the scale of A H_pp A^T
        scale = float(np.abs(AHpp).max() * np.abs(A).max())
        cond = scale / abs(s) if s != 0.0 else np.inf
        if not cond <= COND_MAX:
            raise MultiplierError(
                f"multiplier system singular at t={pt.t} (condition {cond:.3g}); offending rows: {sys.row_labels}"
            )
        lam = rhs / s
        return MultiplierSolution(lam, A[0] * lam[0], max(cond, 1.0), abs(float(s * lam[0] - rhs[0])))
    sv = np.linalg.svd(S, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if not cond <= COND_MAX:
        _, _, Vt = np.linalg.svd(S)
        weak = [sys.row_labels[l] for l in np.flatnonzero(np.abs(Vt[-1]) > 0.1)]
        raise MultiplierError(
            f"multiplier system singular at t={pt.t} (condition {cond:.3g}); offending rows: {weak}"
        )
    lam = np.linalg.solve(S, rhs)
    res = float(np.linalg.norm(S @ lam - rhs))
    return MultiplierSolution(lam, A.T @ lam, cond, res)


def solve_multipliers(sys: MechSystem, t: float, q, p) -> MultiplierSolution:
    return multipliers_at(sys, sys.at(t, q, p))


def in_virtual_displacements(sys: MechSystem, t: float, q, xi, tol: float = TOL_MEMBERSHIP) -> Membership:
    """sum_i a_i^l xi_i = 0 for every row."""
    rows = sys.rows_at(t, q)
    r = rows.A @ np.asarray(xi, dtype=float)
    res = float(np.max(np.abs(r))) if r.size else 0.0
    return Membership(res <= tol, res)


def in_admissible_hatV(sys: MechSystem, t: float, q, tau: float, xi, tol: float = TOL_MEMBERSHIP) -> Membership:
    """a0^l tau + sum_i a_i^l xi_i = 0 for every row."""
    rows = sys.rows_at(t, q)
    r = rows.a0 * tau + rows.A @ np.asarray(xi, dtype=float)
    res = float(np.max(np.abs(r))) if r.size else 0.0
    return Membership(res <= tol, res)


def in_reaction_annihilator(
    sys: MechSystem,
    t: float,
    q,
    tau: float,
    xi,
    n_samples: int = N_SAMPLES,
    seed: int | np.random.Generator = 0,
    radius: float = SAMPLE_RADIUS,
    tol: float = TOL_MEMBERSHIP,
) -> AnnihilatorVerdict:
    """Sampled test that the reaction force does no work along (tau, xi) for all admissible p.

    This can falsify membership but only supports it; momenta are drawn as
    p_star + basis @ (radius * c) with c standard normal from `seed`.
    """
    xi = np.asarray(xi, dtype=float)
    if sys.k == 0:
        return AnnihilatorVerdict(True, 0.0, 0)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    chart = admissible_chart(sys, t, q)
    worst = 0.0
    for _ in range(n_samples):
        c = radius * rng.standard_normal(chart.basis.shape[1])
        p = chart.momentum(c)
        pt = sys.at(t, q, p)
        R = multipliers_at(sys, pt).reaction
        r = abs(float(R @ (xi - pt.jet.H_p * tau)))
        worst = max(worst, r / (1.0 + float(np.linalg.norm(R))))
    return AnnihilatorVerdict(worst <= tol, worst, n_samples)


def project_configuration(sys: MechSystem, t: float, q, tol: float = 1e-12, max_iter: int = 5):
    """Gauss-Newton projection of q onto the holonomic set {f(t, q) = 0}.

    Returns (q, residual). Raises ModelError if the iteration does not reach
    a small residual.
    """
    q = np.array(q, dtype=float)
    if sys.s == 0:
        return q, 0.0
    s = sys.s
    rows = sys.rows_at(t, q)
    res = float(np.max(np.abs(rows.f)))
    it = 0
    while res > tol and it < max_iter:
        Ah = rows.A[:s]
        q = q - Ah.T @ np.linalg.solve(Ah @ Ah.T, rows.f)
        rows = sys.rows_at(t, q)
        new = float(np.max(np.abs(rows.f)))
        if not np.isfinite(new) or (new > res and it > 0):
            raise ModelError(f"holonomic projection diverged at t={t} (residual {new:.3g})")
        res = new
        it += 1
    if res > 1e3 * tol:
        raise ModelError(f"holonomic projection did not converge at t={t} (residual {res:.3g})")
    return q, res


def project_momentum(sys: MechSystem, t: float, q, p, iterations: int = 1):
    """Least change of p in the H_pp metric that satisfies the momentum constraints.

    g is affine in p, so one correction is exact up to rounding.
    """
    p = np.array(p, dtype=float)
    if sys.k == 0:
        return p, 0.0
    rows = sys.rows_at(t, q)
    for _ in range(iterations):
        jet = sys.jet(t, q, p)
        g = rows.a0 + rows.A @ jet.H_p
        S = rows.A @ jet.H_pp @ rows.A.T
        p = p - rows.A.T @ np.linalg.solve(S, g)
    jet = sys.jet(t, q, p)
    return p, float(np.max(np.abs(rows.a0 + rows.A @ jet.H_p)))


def sample_manifold_states(
    sys: MechSystem,
    count: int,
    seed: int | np.random.Generator = 0,
    t_range: tuple[float, float] = (0.0, 10.0),
    q_scale: float = 1.0,
    p_scale: float = 1.0,
    q_center=None,
):
    """Seeded random (t, q, p) on the constrained manifold.

    Points where the model cannot be evaluated (domain errors, singular
    matrices) are skipped and redrawn.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    center = np.zeros(sys.n) if q_center is None else np.asarray(q_center, dtype=float)
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 50 * count + 100:
            raise ModelError("could not sample enough valid manifold states")
        t = float(rng.uniform(*t_range))
        q = center + q_scale * rng.standard_normal(sys.n)
        try:
            q, _ = project_configuration(sys, t, q)
            chart = admissible_chart(sys, t, q)
            c = p_scale * rng.standard_normal(chart.basis.shape[1])
            p = chart.momentum(c)
            sys.jet(t, q, p)
        except (ModelError, ArithmeticError, ValueError, np.linalg.LinAlgError):
            continue
        out.append((t, q, p))
    return out
