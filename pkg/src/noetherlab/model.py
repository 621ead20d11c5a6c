"""Mechanical systems with natural Lagrangians, forces and affine constraints.

L(t, q, qdot) = 1/2 qdot^T M(t,q) qdot + b(t,q) . qdot - V(t,q)

The Hamiltonian H = 1/2 (p - b)^T M^{-1} (p - b) + V is available through two
routes that are checked against each other in the tests:

* ``SymbolicHamiltonian``: H as an expression tree built with the adjugate
  of M (n <= 4), differentiated exactly.
* ``MatrixHamiltonian``: M^{-1}(p - b) is solved numerically and the
  derivatives of H are assembled from the derivatives of M, b, V.

Phase-space coordinates are ordered x = (t, q1..qn, p1..pn), N = 2n + 1.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .expr import (
    ONE,
    ZERO,
    Const,
    Expr,
    Var,
    add,
    compile_exprs,
    const,
    diff,
    div,
    free_names,
    is_coordinate,
    mul,
    parse,
    sub,
)

__all__ = [
    "ModelError",
    "NaturalLagrangian",
    "Force",
    "ConstraintRow",
    "holonomic",
    "kinematic",
    "holonomic_to_velocity_row",
    "MechSystem",
    "HamJet",
    "legendre_to_hamiltonian",
    "hamiltonian_partials",
    "coordinate_names",
]


class ModelError(ValueError):
    """Invalid model data, or a runtime regularity failure (singular M, rank-deficient A)."""


def coordinate_names(n: int) -> list[str]:
    return ["t"] + [f"q{i}" for i in range(1, n + 1)] + [f"p{i}" for i in range(1, n + 1)]


def _config_names(n: int) -> list[str]:
    return ["t"] + [f"q{i}" for i in range(1, n + 1)]


def _check_names(e: Expr, allowed: set[str], n: int, what: str, params: Mapping[str, float]):
    for name in free_names(e):
        if is_coordinate(name):
            if name not in allowed:
                if name != "t" and int(name[1:]) > n:
                    raise ModelError(f"{what}: coordinate {name!r} exceeds dimension n={n}")
                raise ModelError(f"{what}: may not depend on {name!r}")
        elif name not in params:
            raise ModelError(f"{what}: undeclared parameter {name!r}")


@dataclass(frozen=True)
class NaturalLagrangian:
    """Quadratic kinetic term, linear term and potential, all functions of (t, q).

    Only the upper triangle of M is stored; M[j][i] for j > i mirrors M[i][j].
    """

    n: int
    upper: tuple  # upper[i][j - i] = M_ij for j >= i
    b: tuple
    V: Expr

    @classmethod
    def build(cls, n: int, M, b=None, V=ZERO) -> "NaturalLagrangian":
        """M may be a full nested sequence (must be symmetric) or a dict {(i, j): expr} (0-based, i <= j)."""
        if isinstance(M, Mapping):
            entries = {}
            for (i, j), e in M.items():
                if i > j:
                    i, j = j, i
                entries[(i, j)] = const(e)
            upper = tuple(
                tuple(entries.get((i, j), ZERO) for j in range(i, n)) for i in range(n)
            )
        else:
            full = [[const(e) for e in row] for row in M]
            if len(full) != n or any(len(r) != n for r in full):
                raise ModelError(f"mass matrix must be {n}x{n}")
            for i, j in itertools.combinations(range(n), 2):
                if full[i][j] != full[j][i]:
                    raise ModelError(f"mass matrix not symmetric at ({i + 1},{j + 1})")
            upper = tuple(tuple(full[i][j] for j in range(i, n)) for i in range(n))
        b = tuple(const(e) for e in (b if b is not None else [ZERO] * n))
        if len(b) != n:
            raise ModelError(f"b must have {n} entries")
        return cls(n, upper, b, const(V))

    def M(self, i: int, j: int) -> Expr:
        if i > j:
            i, j = j, i
        return self.upper[i][j - i]

    @property
    def matrix(self) -> list[list[Expr]]:
        return [[self.M(i, j) for j in range(self.n)] for i in range(self.n)]


@dataclass(frozen=True)
class Force:
    """Nonconservative generalized force components F_i(t, q, p)."""

    F: tuple

    @classmethod
    def zero(cls, n: int) -> "Force":
        return cls((ZERO,) * n)

    @property
    def is_zero(self) -> bool:
        return all(e == ZERO for e in self.F)


@dataclass(frozen=True)
class ConstraintRow:
    """One affine velocity constraint a0 + a . qdot = 0; holonomic rows keep f."""

    kind: str  # "holonomic" or "kinematic"
    a0: Expr
    a: tuple
    f: Expr | None = None
    label: str = ""


def holonomic_to_velocity_row(f: Expr, n: int) -> tuple[Expr, list[Expr]]:
    """Velocity form of f(t, q) = 0: a0 = df/dt, a_i = df/dq_i."""
    return diff(f, "t"), [diff(f, f"q{i}") for i in range(1, n + 1)]


def holonomic(f, n: int, label: str = "") -> ConstraintRow:
    f = const(f)
    a0, a = holonomic_to_velocity_row(f, n)
    return ConstraintRow("holonomic", a0, tuple(a), f, label)


def kinematic(a0, a: Sequence, label: str = "") -> ConstraintRow:
    return ConstraintRow("kinematic", const(a0), tuple(const(e) for e in a), None, label)


# ---------------------------------------------------------------------------
# Hamiltonian jets


@dataclass
class HamJet:
    """Value, gradient and Hessian of H in the ordering (t, q, p)."""

    n: int
    H: float
    grad: np.ndarray
    hess: np.ndarray
    positive: bool = True  # leading minors of M positive at this point

    @property
    def H_t(self) -> float:
        return float(self.grad[0])

    @property
    def H_q(self) -> np.ndarray:
        return self.grad[1 : 1 + self.n]

    @property
    def H_p(self) -> np.ndarray:
        return self.grad[1 + self.n :]

    @property
    def H_pp(self) -> np.ndarray:
        n = self.n
        return self.hess[1 + n :, 1 + n :]

    @property
    def H_pt(self) -> np.ndarray:
        return self.hess[1 + self.n :, 0]

    @property
    def H_pq(self) -> np.ndarray:
        """[i, j] = d(H_p_i)/dq_j."""
        n = self.n
        return self.hess[1 + n :, 1 : 1 + n]


def _adjugate_det(M: list[list[Expr]]) -> tuple[list[list[Expr]], Expr]:
    """Symbolic adjugate and determinant via cofactor expansion (small n only)."""
    n = len(M)

    def det(rows: list[int], cols: list[int]) -> Expr:
        if len(rows) == 0:
            return ONE
        if len(rows) == 1:
            return M[rows[0]][cols[0]]
        r0, rest = rows[0], rows[1:]
        total = ZERO
        for k, c in enumerate(cols):
            entry = M[r0][c]
            if entry == ZERO:
                continue
            minor = det(rest, cols[:k] + cols[k + 1 :])
            term = mul(entry, minor)
            total = add(total, term) if k % 2 == 0 else sub(total, term)
        return total

    idx = list(range(n))
    adj = [[ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            # adj[i][j] = (-1)^(i+j) * minor(j, i)
            m = det([r for r in idx if r != j], [c for c in idx if c != i])
            adj[i][j] = m if (i + j) % 2 == 0 else mul(Const(-1.0), m) if m != ZERO else ZERO
    return adj, det(idx, idx)


def legendre_to_hamiltonian(lag: NaturalLagrangian) -> Expr:
    """H = 1/2 (p - b)^T M^{-1} (p - b) + V as an expression (adjugate form)."""
    n = lag.n
    adj, det = _adjugate_det(lag.matrix)
    w = [sub(Var(f"p{i + 1}"), lag.b[i]) for i in range(n)]
    quad = ZERO
    for i in range(n):
        for j in range(n):
            if adj[i][j] == ZERO:
                continue
            quad = add(quad, mul(mul(w[i], adj[i][j]), w[j]))
    return add(div(mul(Const(0.5), quad), det), lag.V)


class SymbolicHamiltonian:
    """H and all of its first and second partials compiled from exact derivatives."""

    route = "symbolic"

    def __init__(self, lag: NaturalLagrangian, params: Mapping[str, float]):
        n = lag.n
        self.n = n
        self.expr = legendre_to_hamiltonian(lag)
        coords = coordinate_names(n)
        grad = [diff(self.expr, c) for c in coords]
        N = len(coords)
        pairs = [(a, b) for a in range(N) for b in range(a, N)]
        hess = [diff(grad[a], coords[b]) for a, b in pairs]
        self.grad_exprs = grad
        self._pairs = pairs
        self._ia = np.array([a for a, _ in pairs], dtype=int)
        self._ib = np.array([b for _, b in pairs], dtype=int)
        self._param_values = [float(params[k]) for k in sorted(params)]
        mat = lag.matrix
        minors = [_adjugate_det([row[:k] for row in mat[:k]])[1] for k in range(1, n + 1)]
        self._nh = 1 + N + len(pairs)
        self._fn = compile_exprs([self.expr] + grad + hess + minors, coords + sorted(params))

    def jet(self, t: float, q, p) -> HamJet:
        n = self.n
        N = 2 * n + 1
        vals = np.array(self._fn(t, *q, *p, *self._param_values))
        grad = vals[1 : 1 + N]
        hess = np.empty((N, N))
        hv = vals[1 + N : self._nh]
        hess[self._ia, self._ib] = hv
        hess[self._ib, self._ia] = hv
        # Sylvester's criterion on M
        positive = bool(np.all(vals[self._nh :] > 0.0))
        return HamJet(n, float(vals[0]), grad, hess, positive)


class LagrangianData:
    """M, b, V with first and second partials in (t, q), compiled once."""

    def __init__(self, lag: NaturalLagrangian, params: Mapping[str, float]):
        n = lag.n
        self.n = n
        X = _config_names(n)
        nx = len(X)
        Mup = [lag.M(i, j) for i in range(n) for j in range(i, n)]
        scalars = Mup + list(lag.b) + [lag.V]
        first = [diff(e, x) for e in scalars for x in X]
        second = [diff(diff(e, X[a]), X[c]) for e in scalars for a in range(nx) for c in range(nx)]
        self._nup = len(Mup)
        self._ns = len(scalars)
        self._nx = nx
        self._param_values = [float(params[k]) for k in sorted(params)]
        self._fn1 = compile_exprs(scalars + first, X + sorted(params))
        self._fn2 = compile_exprs(second, X + sorted(params))
        self._iu = np.triu_indices(n)

    def _sym(self, upper_vals) -> np.ndarray:
        M = np.empty((self.n, self.n))
        M[self._iu] = upper_vals
        M.T[self._iu] = upper_vals
        return M

    def evaluate(self, t: float, q, second: bool = False) -> dict:
        """M, b, V and their (t, q)-partials; second partials on request.

        Layout: M_x[x, i, j], b_x[x, i], V_x[x], M_xx[x, y, i, j], b_xx[x, y, i], V_xx[x, y].
        """
        n, ns, nx, nup = self.n, self._ns, self._nx, self._nup
        vals = np.asarray(self._fn1(t, *q, *self._param_values))
        base = vals[:ns]
        d1 = vals[ns:].reshape(ns, nx)
        out = {
            "M": self._sym(base[:nup]),
            "b": base[nup : nup + n].copy(),
            "V": float(base[nup + n]),
            "M_x": np.stack([self._sym(d1[:nup, x]) for x in range(nx)]),
            "b_x": d1[nup : nup + n, :].T.copy(),
            "V_x": d1[nup + n, :].copy(),
        }
        if second:
            d2 = np.asarray(self._fn2(t, *q, *self._param_values)).reshape(ns, nx, nx)
            out["M_xx"] = np.stack(
                [np.stack([self._sym(d2[:nup, a, c]) for c in range(nx)]) for a in range(nx)]
            )
            out["b_xx"] = np.moveaxis(d2[nup : nup + n], 0, -1).copy()
            out["V_xx"] = d2[nup + n].copy()
        return out


class MatrixHamiltonian:
    """H from a numerical solve of M u = p - b, derivatives by matrix calculus."""

    route = "matrix"

    def __init__(self, lag: NaturalLagrangian, params: Mapping[str, float], data: LagrangianData | None = None):
        self.n = lag.n
        self.data = data or LagrangianData(lag, params)

    def jet(self, t: float, q, p) -> HamJet:
        n = self.n
        nx = n + 1
        d = self.data.evaluate(t, q, second=True)
        M = d["M"]
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            raise ModelError(f"mass matrix not positive definite at t={t}, q={list(q)}") from None
        Minv = np.linalg.inv(M)
        Minv = 0.5 * (Minv + Minv.T)
        w = np.asarray(p, dtype=float) - d["b"]
        u = np.linalg.solve(M, w)
        H = 0.5 * w @ u + d["V"]
        b_x, M_x, V_x = d["b_x"], d["M_x"], d["V_x"]
        # u_x = M^{-1}(-b_x - M_x u); H_x = -b_x.u - 1/2 u M_x u + V_x
        Mxu = M_x @ u  # [x, i]
        u_x = -np.linalg.solve(M, (b_x + Mxu).T).T  # [x, i]
        H_x = -(b_x @ u) - 0.5 * (Mxu @ u) + V_x
        # H_xy = -b_xy.u + u_y M u_x - 1/2 u M_xy u + V_xy
        H_xx = (
            -(d["b_xx"] @ u)
            + u_x @ M @ u_x.T
            - 0.5 * np.einsum("i,xyij,j->xy", u, d["M_xx"], u)
            + d["V_xx"]
        )
        H_xx = 0.5 * (H_xx + H_xx.T)
        N = 2 * n + 1
        grad = np.empty(N)
        grad[:nx] = H_x
        grad[nx:] = u
        hess = np.zeros((N, N))
        hess[:nx, :nx] = H_xx
        hess[nx:, :nx] = u_x.T
        hess[:nx, nx:] = u_x
        hess[nx:, nx:] = Minv
        return HamJet(n, float(H), grad, hess)


# ---------------------------------------------------------------------------
# the system


@dataclass
class RowsEval:
    a0: np.ndarray  # (k,)
    A: np.ndarray  # (k, n)
    a0_x: np.ndarray  # (k, n+1)  partials wrt (t, q)
    A_x: np.ndarray  # (k, n, n+1)
    f: np.ndarray  # (s,) holonomic values


@dataclass
class PointEval:
    """Everything the dynamics needs at one (t, q, p)."""

    t: float
    q: np.ndarray
    p: np.ndarray
    jet: HamJet
    F: np.ndarray
    rows: RowsEval


class MechSystem:
    """A natural Lagrangian system with force F(t,q,p) and constraint rows.

    Holonomic rows must precede kinematic rows. The object is immutable
    after construction and all evaluations are pure.
    """

    def __init__(
        self,
        lagrangian: NaturalLagrangian,
        force: Force | Sequence | None = None,
        rows: Sequence[ConstraintRow] = (),
        params: Mapping[str, float] | None = None,
        hamiltonian: str = "auto",
        name: str = "",
    ):
        n = lagrangian.n
        self.n = n
        self.name = name
        self.lagrangian = lagrangian
        self.params = dict(params or {})
        if force is None:
            force = Force.zero(n)
        elif not isinstance(force, Force):
            force = Force(tuple(const(e) for e in force))
        if len(force.F) != n:
            raise ModelError(f"force must have {n} components, got {len(force.F)}")
        self.force = force
        self.rows = tuple(rows)
        seen_kinematic = False
        for r in self.rows:
            if len(r.a) != n:
                raise ModelError(f"constraint {r.label or '?'}: needs {n} coefficients")
            if r.kind == "kinematic":
                seen_kinematic = True
            elif seen_kinematic:
                raise ModelError("holonomic constraints must precede kinematic ones")
        self.s = sum(r.kind == "holonomic" for r in self.rows)
        self.k = len(self.rows)

        X = set(_config_names(n))
        full = set(coordinate_names(n))
        for i in range(n):
            for j in range(i, n):
                _check_names(lagrangian.M(i, j), X, n, f"M[{i + 1},{j + 1}]", self.params)
            _check_names(lagrangian.b[i], X, n, f"b[{i + 1}]", self.params)
            _check_names(force.F[i], full, n, f"F[{i + 1}]", self.params)
        _check_names(lagrangian.V, X, n, "V", self.params)
        for r in self.rows:
            for e in (r.a0, *r.a) + ((r.f,) if r.f is not None else ()):
                _check_names(e, X, n, f"constraint {r.label or '?'}", self.params)

        self.lagdata = LagrangianData(lagrangian, self.params)
        if hamiltonian == "auto":
            hamiltonian = "symbolic" if n <= 4 else "matrix"
        if hamiltonian == "symbolic":
            if n > 4:
                raise ModelError("symbolic Hamiltonian route supports n <= 4")
            self.hamiltonian = SymbolicHamiltonian(lagrangian, self.params)
        elif hamiltonian == "matrix":
            self.hamiltonian = MatrixHamiltonian(lagrangian, self.params, self.lagdata)
        else:
            raise ModelError(f"unknown Hamiltonian route {hamiltonian!r}")

        self._pv = [float(self.params[k]) for k in sorted(self.params)]
        pnames = sorted(self.params)
        self._force_fn = compile_exprs(list(force.F), coordinate_names(n) + pnames)
        Xl = _config_names(n)
        row_exprs: list[Expr] = []
        for r in self.rows:
            row_exprs.append(r.a0)
            row_exprs.extend(r.a)
        row_d = [diff(e, x) for e in row_exprs for x in Xl]
        hol = [r.f for r in self.rows if r.kind == "holonomic"]
        self._rows_fn = compile_exprs(row_exprs + row_d + hol, Xl + pnames) if self.rows else None

    # -- evaluation ---------------------------------------------------------

    @property
    def N(self) -> int:
        return 2 * self.n + 1

    @property
    def row_labels(self) -> list[str]:
        return [r.label or f"row{l + 1}" for l, r in enumerate(self.rows)]

    def jet(self, t: float, q, p) -> HamJet:
        jet = self.hamiltonian.jet(float(t), _floats(q), _floats(p))
        if not jet.positive:
            raise ModelError(f"mass matrix not positive definite at t={t}, q={list(q)}")
        return jet

    def force_at(self, t: float, q, p) -> np.ndarray:
        return np.array(self._force_fn(float(t), *_floats(q), *_floats(p), *self._pv))

    def rows_at(self, t: float, q) -> RowsEval:
        n, k = self.n, self.k
        if k == 0:
            return RowsEval(np.zeros(0), np.zeros((0, n)), np.zeros((0, n + 1)), np.zeros((0, n, n + 1)), np.zeros(0))
        vals = np.asarray(self._rows_fn(float(t), *_floats(q), *self._pv))
        m = k * (n + 1)
        base = vals[:m].reshape(k, n + 1)
        d = vals[m : m + m * (n + 1)].reshape(k, n + 1, n + 1)
        f = vals[m + m * (n + 1) :]
        return RowsEval(base[:, 0].copy(), base[:, 1:].copy(), d[:, 0, :].copy(), d[:, 1:, :].copy(), f)

    def at(self, t: float, q, p) -> PointEval:
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        return PointEval(float(t), q, p, self.jet(t, q, p), self.force_at(t, q, p), self.rows_at(t, q))

    def check_rank(self, rows: RowsEval, t: float | None = None):
        if self.k == 0:
            return
        if self.k == 1:
            s = [float(np.sqrt(rows.A[0] @ rows.A[0]))] * 2
        else:
            s = np.linalg.svd(rows.A, compute_uv=False)
        if not s[-1] > 1e-8 * s[0]:
            raise ModelError(
                f"constraint rows {self.row_labels} are rank deficient at t={t}"
                f" (singular values {[float(x) for x in s]})"
            )

    # -- Lagrangian side ---------------------------------------------------

    def lagrangian_terms(self, t: float, q, qdot):
        """L and its partials: (L, L_t, L_q, L_qdot)."""
        d = self.lagdata.evaluate(float(t), _floats(q))
        v = np.asarray(qdot, dtype=float)
        M, b = d["M"], d["b"]
        L = 0.5 * v @ M @ v + b @ v - d["V"]
        L_x = 0.5 * np.einsum("i,xij,j->x", v, d["M_x"], v) + d["b_x"] @ v - d["V_x"]
        return float(L), float(L_x[0]), L_x[1:], M @ v + b

    def momentum_from_velocity(self, t: float, q, qdot) -> np.ndarray:
        d = self.lagdata.evaluate(float(t), _floats(q))
        return d["M"] @ np.asarray(qdot, dtype=float) + d["b"]

    def names(self) -> set[str]:
        return set(coordinate_names(self.n)) | set(self.params)

    def parse(self, source: str) -> Expr:
        return parse(source, self.names())


def _floats(x) -> list:
    return np.asarray(x, dtype=float).tolist()


def hamiltonian_partials(sys: MechSystem, t: float, q, p):
    """(H, H_t, H_q, H_p, H_pp) at one phase point."""
    jet = sys.jet(t, q, p)
    return jet.H, jet.H_t, jet.H_q.copy(), jet.H_p.copy(), jet.H_pp.copy()
