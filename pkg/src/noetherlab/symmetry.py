"""Prolonged symmetry fields on extended phase space, invariance residuals and Noether functions.

Phase-space points are x = (t, q1..qn, p1..pn). A candidate symmetry
tau(t,q) d/dt + xi(t,q) . d/dq is prolonged to

    zeta = tau d/dt + xi . d/dq + eta . d/dp,
    eta_i = H dtau/dq_i - sum_j dxi_j/dq_i p_j,

and paired with the Poincare-Cartan form alpha = p dq - H dt, an optional
closed 1-form beta and a gauge function f.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np

from .constraint import admissible_chart, multipliers_at
from .expr import ZERO, DomainError, Expr, compile_exprs, const, diff, evaluate, sub
from .model import MechSystem, ModelError, PointEval, _check_names, _config_names, coordinate_names

__all__ = [
    "OneForm",
    "SymmetrySpec",
    "SymPoint",
    "ClosedVerdict",
    "bind",
    "prolong_full",
    "prolong_jacobian",
    "invariance_residual",
    "lagrangian_invariance_residual",
    "noether_function",
    "noether_gradient",
    "lagrangian_noether",
    "check_closed",
    "weak_noether_residual",
    "lie_derivative_direct",
    "cartan_identity_residual",
    "d_alpha",
    "generalized_symmetry_residuals",
    "solve_gamma_dt",
    "bracket_defect",
    "noether_lie_derivative",
    "contact_rho",
    "invariance_on_manifold",
]


@dataclass(frozen=True)
class OneForm:
    """beta = bt dt + sum bq_i dq_i + sum bp_i dp_i with coefficients in (t, q, p)."""

    t: Expr
    q: tuple
    p: tuple

    @classmethod
    def zero(cls, n: int) -> "OneForm":
        return cls(ZERO, (ZERO,) * n, (ZERO,) * n)

    @classmethod
    def build(cls, n: int, t=ZERO, q=None, p=None) -> "OneForm":
        q = tuple(const(e) for e in (q if q is not None else [ZERO] * n))
        p = tuple(const(e) for e in (p if p is not None else [ZERO] * n))
        if len(q) != n or len(p) != n:
            raise ModelError(f"1-form needs {n} dq and {n} dp coefficients")
        return cls(const(t), q, p)

    @classmethod
    def exact(cls, g: Expr, n: int) -> "OneForm":
        """dg for a function g(t, q, p)."""
        names = coordinate_names(n)
        d = [diff(g, x) for x in names]
        return cls(d[0], tuple(d[1 : n + 1]), tuple(d[n + 1 :]))

    @property
    def n(self) -> int:
        return len(self.q)

    @property
    def components(self) -> list[Expr]:
        return [self.t, *self.q, *self.p]

    @property
    def is_zero(self) -> bool:
        return all(c == ZERO for c in self.components)


@dataclass(frozen=True)
class SymmetrySpec:
    """Candidate symmetry with optional gauge function and closed 1-form."""

    tau: Expr
    xi: tuple
    gauge: Expr = ZERO
    beta: OneForm | None = None
    label: str = "sym"

    @classmethod
    def build(cls, n: int, tau=ZERO, xi=None, gauge=ZERO, beta=None, label="sym") -> "SymmetrySpec":
        xi = tuple(const(e) for e in (xi if xi is not None else [ZERO] * n))
        if len(xi) != n:
            raise ModelError(f"symmetry {label}: xi needs {n} components, got {len(xi)}")
        if beta is not None and beta.n != n:
            raise ModelError(f"symmetry {label}: beta has the wrong dimension")
        return cls(const(tau), xi, const(gauge), beta, label)

    @property
    def n(self) -> int:
        return len(self.xi)


# ---------------------------------------------------------------------------
# compiled evaluation


class SymPoint(NamedTuple):
    """Everything about a bound symmetry at one phase point."""

    pt: PointEval
    tau: float
    tau_x: np.ndarray  # (N,)
    tau_xx: np.ndarray  # (N, N)
    xi: np.ndarray  # (n,)
    xi_x: np.ndarray  # (n, N)
    xi_xx: np.ndarray  # (n, N, N)
    f: float
    f_x: np.ndarray  # (N,)
    beta: np.ndarray  # (N,)
    beta_x: np.ndarray  # (N, N)  beta_x[a, c] = d beta_a / d x_c
    zeta: np.ndarray  # (N,)


class BoundSymmetry:
    """A SymmetrySpec compiled against one MechSystem."""

    def __init__(self, spec: SymmetrySpec, sys: MechSystem):
        n = sys.n
        if spec.n != n:
            raise ModelError(f"symmetry {spec.label}: dimension {spec.n} does not match system n={n}")
        self.spec, self.sys, self.n = spec, sys, n
        X = _config_names(n)
        full = coordinate_names(n)
        what = f"symmetry {spec.label}"
        _check_names(spec.tau, set(X), n, f"{what} tau", sys.params)
        for i, e in enumerate(spec.xi):
            _check_names(e, set(X), n, f"{what} xi{i + 1}", sys.params)
        _check_names(spec.gauge, set(full), n, f"{what} gauge", sys.params)
        beta = spec.beta or OneForm.zero(n)
        for e in beta.components:
            _check_names(e, set(full), n, f"{what} beta", sys.params)
        self.has_beta = not beta.is_zero

        exprs: list[Expr] = []
        # tau and xi depend on (t, q) only: second partials over X
        for g in (spec.tau, *spec.xi):
            exprs.append(g)
            d1 = [diff(g, x) for x in X]
            exprs.extend(d1)
            for d in d1:
                exprs.extend(diff(d, y) for y in X)
        exprs.append(spec.gauge)
        exprs.extend(diff(spec.gauge, x) for x in full)
        if self.has_beta:
            for b in beta.components:
                exprs.append(b)
                exprs.extend(diff(b, x) for x in full)
        self._fn = compile_exprs(exprs, full + sorted(sys.params))

    def values(self, pt: PointEval) -> SymPoint:
        n = self.n
        N = 2 * n + 1
        m = n + 1
        vals = self._fn(pt.t, *pt.q.tolist(), *pt.p.tolist(), *self.sys._pv)
        block = 1 + m + m * m
        g = np.asarray(vals[: (n + 1) * block]).reshape(n + 1, block)
        g0 = g[:, 0]
        g1 = np.zeros((n + 1, N))
        g1[:, :m] = g[:, 1 : 1 + m]
        g2 = np.zeros((n + 1, N, N))
        g2[:, :m, :m] = g[:, 1 + m :].reshape(n + 1, m, m)
        off = (n + 1) * block
        f = float(vals[off])
        f_x = np.asarray(vals[off + 1 : off + 1 + N])
        off += 1 + N
        if self.has_beta:
            bb = np.asarray(vals[off:]).reshape(N, 1 + N)
            beta, beta_x = bb[:, 0].copy(), bb[:, 1:].copy()
        else:
            beta, beta_x = np.zeros(N), np.zeros((N, N))
        tau, xi = float(g0[0]), g0[1:].copy()
        # eta_i = H tau_{q_i} - sum_j xi_{j, q_i} p_j
        eta = pt.jet.H * g1[0, 1:m] - g1[1:, 1:m].T @ pt.p
        zeta = np.concatenate([[tau], xi, eta])
        return SymPoint(pt, tau, g1[0], g2[0], xi, g1[1:], g2[1:], f, f_x, beta, beta_x, zeta)


@functools.lru_cache(maxsize=256)
def bind(spec: SymmetrySpec, sys: MechSystem) -> BoundSymmetry:
    return BoundSymmetry(spec, sys)


def _point(spec, sys, state) -> SymPoint:
    if isinstance(state, SymPoint):
        return state
    if isinstance(state, PointEval):
        pt = state
    elif hasattr(state, "q"):
        pt = sys.at(state.t, state.q, state.p)
    else:
        t, q, p = state
        pt = sys.at(t, q, p)
    return bind(spec, sys).values(pt)


# ---------------------------------------------------------------------------
# fields and residuals


def prolong_full(spec: SymmetrySpec, sys: MechSystem, state) -> np.ndarray:
    """zeta as a (2n+1)-vector (dt, dq, dp)."""
    return _point(spec, sys, state).zeta.copy()


def prolong_jacobian(spec: SymmetrySpec, sys: MechSystem, state) -> np.ndarray:
    """d zeta^a / d x_c as an (N, N) matrix."""
    sp = _point(spec, sys, state)
    n = sys.n
    N = 2 * n + 1
    m = n + 1
    jet, p = sp.pt.jet, sp.pt.p
    J = np.zeros((N, N))
    J[0] = sp.tau_x
    J[1:m] = sp.xi_x
    # d eta_i/dx_c = H_c tau_{q_i} + H tau_{q_i c} - sum_j xi_{j,q_i c} p_j - [c = p_j] xi_{j,q_i}
    tau_q = sp.tau_x[1:m]
    J[m:] = (
        np.outer(tau_q, jet.grad)
        + jet.H * sp.tau_xx[1:m]
        - np.einsum("jic,j->ic", sp.xi_xx[:, 1:m, :], p)
    )
    J[m:, m:] -= sp.xi_x[:, 1:m].T
    return J


def invariance_residual(spec: SymmetrySpec, sys: MechSystem, state) -> float:
    """tau H_t + xi . H_q + eta . H_p - (p . xi_t - H tau_t); zero for a Noether symmetry."""
    sp = _point(spec, sys, state)
    jet, p = sp.pt.jet, sp.pt.p
    lie_H = float(sp.zeta @ jet.grad)
    return lie_H - (float(p @ sp.xi_x[:, 0]) - jet.H * sp.tau_x[0])


def lagrangian_invariance_residual(spec: SymmetrySpec, sys: MechSystem, t: float, q, qdot) -> float:
    """L_q . xi + L_qdot . nu + L_t tau + L (dtau/dt) along the first prolongation.

    With the residual conventions used here this equals minus
    `invariance_residual` at the Legendre-matched point.
    """
    n = sys.n
    v = np.asarray(qdot, dtype=float)
    p = sys.momentum_from_velocity(t, q, v)
    sp = _point(spec, sys, (t, q, p))
    L, L_t, L_q, L_v = sys.lagrangian_terms(t, q, v)
    m = n + 1
    dtau = sp.tau_x[0] + sp.tau_x[1:m] @ v
    dxi = sp.xi_x[:, 0] + sp.xi_x[:, 1:m] @ v
    nu = dxi - v * dtau
    return float(L_q @ sp.xi + L_v @ nu + L_t * sp.tau + L * dtau)


def noether_function(spec: SymmetrySpec, sys: MechSystem, state) -> float:
    """J = p . xi - H tau + beta(zeta) - f."""
    sp = _point(spec, sys, state)
    return float(sp.pt.p @ sp.xi - sp.pt.jet.H * sp.tau + sp.beta @ sp.zeta - sp.f)


def noether_gradient(spec: SymmetrySpec, sys: MechSystem, state) -> np.ndarray:
    """Exact gradient of J with respect to (t, q, p)."""
    sp = _point(spec, sys, state)
    n = sys.n
    m = n + 1
    jet, p = sp.pt.jet, sp.pt.p
    g = p @ sp.xi_x - jet.grad * sp.tau - jet.H * sp.tau_x - sp.f_x
    g[m:] += sp.xi
    if bind(spec, sys).has_beta:
        g += sp.beta_x.T @ sp.zeta + sp.beta @ prolong_jacobian(spec, sys, sp)
    return g


def lagrangian_noether(spec: SymmetrySpec, sys: MechSystem, t: float, q, qdot) -> float:
    """J = L_qdot . (xi - tau qdot) + L tau."""
    v = np.asarray(qdot, dtype=float)
    p = sys.momentum_from_velocity(t, q, v)
    sp = _point(spec, sys, (t, q, p))
    L, _, _, L_v = sys.lagrangian_terms(t, q, v)
    return float(L_v @ (sp.xi - sp.tau * v) + L * sp.tau)


def contact_rho(sys: MechSystem, state) -> float:
    """rho = p . H_p - H; the Poincare-Cartan form is contact where rho != 0."""
    pt = state if isinstance(state, PointEval) else sys.at(state.t, state.q, state.p)
    return float(pt.p @ pt.jet.H_p - pt.jet.H)


# ---------------------------------------------------------------------------
# closedness of 1-forms


class ClosedVerdict(NamedTuple):
    closed: bool
    method: str  # "symbolic" or "numeric"
    residual: float


def check_closed(
    beta: OneForm,
    params: Mapping[str, float] | None = None,
    n_points: int = 200,
    seed: int = 0,
    tol: float = 1e-10,
) -> ClosedVerdict:
    """d beta = 0: antisymmetrized mixed partials, symbolically, else at sampled points."""
    n = beta.n
    names = coordinate_names(n)
    comps = beta.components
    pending = []
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            r = sub(diff(comps[a], names[b]), diff(comps[b], names[a]))
            if r != ZERO:
                pending.append(r)
    if not pending:
        return ClosedVerdict(True, "symbolic", 0.0)
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    worst = 0.0
    used = 0
    for _ in range(20 * n_points):
        if used >= n_points:
            break
        env = dict(params)
        env.update(zip(names, rng.uniform(-2.0, 2.0, len(names)).tolist()))
        try:
            vals = [evaluate(r, env) for r in pending]
        except DomainError:
            continue
        used += 1
        worst = max(worst, max(abs(v) for v in vals))
    return ClosedVerdict(worst <= tol and used > 0, "numeric", worst)


# ---------------------------------------------------------------------------
# weak Noether residual and friends


def d_alpha(sys: MechSystem, pt: PointEval, u, v) -> float:
    """(dp ^ dq - dH ^ dt)(u, v) at a phase point."""
    n = sys.n
    m = n + 1
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    g = pt.jet.grad
    return float(u[m:] @ v[1:m] - v[m:] @ u[1:m] - (g @ u) * v[0] + (g @ v) * u[0])


def _i_zeta_dalpha(sp: SymPoint, n: int) -> np.ndarray:
    # i_zeta dalpha = eta . dq - xi . dp - dH(zeta) dt + tau dH
    m = n + 1
    g = sp.pt.jet.grad
    out = sp.tau * g
    out[0] -= float(g @ sp.zeta)
    out[1:m] += sp.zeta[m:]
    out[m:] -= sp.xi
    return out


def weak_noether_residual(spec: SymmetrySpec, sys: MechSystem, state) -> np.ndarray:
    """Components of L_zeta(alpha + beta) - df, via i_zeta d(.) + d i_zeta(.)."""
    sp = _point(spec, sys, state)
    # beta closed: L_zeta beta = d(beta(zeta)); the sum collapses to i_zeta dalpha + dJ
    return _i_zeta_dalpha(sp, sys.n) + noether_gradient(spec, sys, sp)


def lie_derivative_direct(spec: SymmetrySpec, sys: MechSystem, state) -> np.ndarray:
    """L_zeta(alpha + beta) - df from the coordinate formula zeta^a d_a theta_c + theta_a d_c zeta^a.

    Independent of Cartan's formula; used to cross-check `weak_noether_residual`.
    """
    sp = _point(spec, sys, state)
    n = sys.n
    N = 2 * n + 1
    m = n + 1
    jet = sp.pt.jet
    theta = np.zeros(N)
    theta[0] = -jet.H
    theta[1:m] = sp.pt.p
    dtheta = np.zeros((N, N))  # dtheta[c, a] = d theta_c / d x_a
    dtheta[0] = -jet.grad
    dtheta[1:m, m:] = np.eye(n)
    theta = theta + sp.beta
    dtheta = dtheta + sp.beta_x
    Jz = prolong_jacobian(spec, sys, sp)
    return dtheta @ sp.zeta + Jz.T @ theta - sp.f_x


def cartan_identity_residual(spec: SymmetrySpec, sys: MechSystem, state) -> np.ndarray:
    """i_zeta dalpha + dJ - W; vanishes identically, a check on the assembled partials."""
    sp = _point(spec, sys, state)
    return _i_zeta_dalpha(sp, sys.n) + noether_gradient(spec, sys, sp) - lie_derivative_direct(spec, sys, sp)


def _field_Z(pt: PointEval) -> np.ndarray:
    return np.concatenate([[1.0], pt.jet.H_p, -pt.jet.H_q])


def _field_P(sys: MechSystem, pt: PointEval) -> np.ndarray:
    R = multipliers_at(sys, pt).reaction
    return np.concatenate([np.zeros(1 + sys.n), pt.F + R])


def solve_gamma_dt(sys: MechSystem, sp: SymPoint, Z: np.ndarray, P: np.ndarray) -> np.ndarray:
    """gamma = c dt with c chosen so that dalpha(P, zeta) + gamma(Z + P) = 0."""
    N = 2 * sys.n + 1
    c = -d_alpha(sys, sp.pt, P, sp.zeta) / (Z[0] + P[0])
    out = np.zeros(N)
    out[0] = c
    return out


@functools.lru_cache(maxsize=64)
def _compile_form(form: OneForm, sys: MechSystem):
    return compile_exprs(form.components, coordinate_names(sys.n) + sorted(sys.params))


def _gamma_at(gamma, sys: MechSystem, sp: SymPoint, Z, P) -> np.ndarray:
    N = 2 * sys.n + 1
    if gamma is None:
        return np.zeros(N)
    if isinstance(gamma, OneForm):
        pt = sp.pt
        return np.asarray(_compile_form(gamma, sys)(pt.t, *pt.q.tolist(), *pt.p.tolist(), *sys._pv))
    if callable(gamma):
        return np.asarray(gamma(sys, sp, Z, P), dtype=float)
    return np.asarray(gamma, dtype=float)


def generalized_symmetry_residuals(
    spec: SymmetrySpec,
    gamma,
    sys: MechSystem,
    state,
    P: np.ndarray | None = None,
) -> tuple[np.ndarray, float]:
    """(L_zeta(alpha+beta) - df - gamma, dalpha(P, zeta) + gamma(Z + P)).

    `gamma` is a OneForm, a fixed covector, a callable (sys, sympoint, Z, P)
    or None. P defaults to the force plus reaction of the constrained system.
    """
    sp = _point(spec, sys, state)
    Z = _field_Z(sp.pt)
    if P is None:
        P = _field_P(sys, sp.pt)
    P = np.asarray(P, dtype=float)
    g = _gamma_at(gamma, sys, sp, Z, P)
    A = weak_noether_residual(spec, sys, sp) - g
    B = d_alpha(sys, sp.pt, P, sp.zeta) + float(g @ (Z + P))
    return A, B


def _hamiltonian_field_jacobian(pt: PointEval, n: int) -> np.ndarray:
    m = n + 1
    hess = pt.jet.hess
    J = np.zeros((2 * n + 1, 2 * n + 1))
    J[1:m] = hess[m:]
    J[m:] = -hess[1:m]
    return J


def bracket_defect(spec: SymmetrySpec, sys: MechSystem, state) -> np.ndarray:
    """[Z, zeta] minus its dt-component times Z, for unconstrained force-free systems."""
    if sys.k:
        raise ValueError("bracket_defect applies to unconstrained systems")
    if not sys.force.is_zero:
        raise ValueError("bracket_defect applies to systems without nonconservative forces")
    sp = _point(spec, sys, state)
    Z = _field_Z(sp.pt)
    Jz = prolong_jacobian(spec, sys, sp)
    JZ = _hamiltonian_field_jacobian(sp.pt, sys.n)
    br = Jz @ Z - JZ @ sp.zeta
    return br - br[0] * Z


def noether_lie_derivative(spec: SymmetrySpec, sys: MechSystem, state) -> float:
    """zeta(J); zero for a weak Noether symmetry of an unconstrained system."""
    sp = _point(spec, sys, state)
    return float(noether_gradient(spec, sys, sp) @ sp.zeta)


def invariance_on_manifold(
    spec: SymmetrySpec,
    sys: MechSystem,
    t: float,
    q,
    n_samples: int = 64,
    seed: int | np.random.Generator = 0,
    radius: float = 10.0,
) -> float:
    """Worst |invariance_residual| over sampled admissible momenta at (t, q)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    chart = admissible_chart(sys, t, q)
    worst = 0.0
    for _ in range(n_samples):
        p = chart.momentum(radius * rng.standard_normal(chart.basis.shape[1]))
        worst = max(worst, abs(invariance_residual(spec, sys, (t, q, p))))
    return worst
