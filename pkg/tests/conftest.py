"""Shared systems and strategies."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import strategies as st

from noetherlab.expr import FUNCTIONS, Binary, Const, Unary, Var
from noetherlab.model import MechSystem, NaturalLagrangian, holonomic, kinematic

KNORM = math.sqrt(0.2**2 + 0.5**2 + 0.84261498**2)
EX1_PARAMS = dict(m=1.0, g=9.81, eps=0.5, kx=0.2 / KNORM, ky=0.5 / KNORM, kz=0.84261498 / KNORM)

A_OF_T = "(1 + 0.5*sin(t))"
LORENTZ = ("m*g*kx + eps*p2/m", "m*g*ky - eps*p1/m", "m*g*kz")


def charged_mass(b: str = "0", params=None, hamiltonian: str = "auto", force=LORENTZ) -> MechSystem:
    """Point mass with gravity and Lorentz force on a(t) y xdot - zdot + b(t) = 0."""
    lag = NaturalLagrangian.build(3, {(0, 0): "m", (1, 1): "m", (2, 2): "m"})
    row = kinematic(b, [f"{A_OF_T}*q2", "0", "-1"], label="wire")
    return MechSystem(lag, force, [row], params=params or EX1_PARAMS, hamiltonian=hamiltonian)


def free_particle(n: int = 3, m: float = 1.0) -> MechSystem:
    lag = NaturalLagrangian.build(n, {(i, i): "m" for i in range(n)})
    return MechSystem(lag, params={"m": m})


def polar_particle() -> MechSystem:
    lag = NaturalLagrangian.build(2, {(0, 0): "1", (1, 1): "q1^2"})
    return MechSystem(lag)


def moving_rail() -> MechSystem:
    """Free unit mass with the holonomic row q1 - t = 0."""
    lag = NaturalLagrangian.build(2, {(0, 0): "1", (1, 1): "1"})
    return MechSystem(lag, rows=[holonomic("q1 - t", 2, label="rail")])


@pytest.fixture
def ex1():
    return charged_mass()


@pytest.fixture
def ex1_affine():
    return charged_mass("0.1*cos(t)")


def fd_gradient(fun, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return out


NAMES = ("t", "q1", "q2", "p1", "p2", "a")

numbers = st.one_of(
    st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False),
    st.integers(min_value=-20, max_value=20).map(float),
).map(Const)
leaves = st.one_of(st.sampled_from(NAMES).map(Var), numbers)


def _extend(children, exponents):
    return st.one_of(
        st.tuples(st.sampled_from("+-*/"), children, children).map(lambda a: Binary(*a)),
        st.tuples(children, exponents).map(lambda a: Binary("^", *a)),
        st.tuples(st.sampled_from(sorted(FUNCTIONS) + ["neg"]), children).map(lambda a: Unary(*a)),
    )


# exponents are numeric constant expressions
exponent_trees = st.recursive(
    numbers, lambda c: st.tuples(st.sampled_from("+-*/"), c, c).map(lambda a: Binary(*a)), max_leaves=3
)
expr_trees = st.recursive(leaves, lambda c: _extend(c, exponent_trees), max_leaves=24)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
            terminalreporter.write_line(ACCEPTANCE[key])
