"""Seeded random small systems with polynomial data of degree at most 2."""

from __future__ import annotations

import itertools

import numpy as np

from .model import MechSystem, NaturalLagrangian, kinematic

__all__ = ["random_polynomial", "random_system"]


def random_polynomial(rng: np.random.Generator, names, scale: float = 1.0, density: float = 0.5) -> str:
    """Sum of monomials of degree <= 2 in `names` with random coefficients."""
    names = list(names)
    monomials = ["1"] + names + [f"{a}*{b}" for a, b in itertools.combinations_with_replacement(names, 2)]
    terms = []
    for mono in monomials:
        if rng.random() < density:
            c = float(np.round(scale * rng.uniform(-1.0, 1.0), 6))
            terms.append(f"{c!r}*{mono}" if mono != "1" else f"{c!r}")
    return " + ".join(terms) if terms else "0"


def random_system(rng: np.random.Generator, n: int, k: int, forced: bool = True) -> MechSystem:
    """A natural system with k kinematic rows, all data polynomial of degree <= 2.

    The mass matrix is diagonally dominant (diagonal 2 + c q^2, constant
    off-diagonal entries below 0.3), so it stays positive definite everywhere.
    Row l carries a unit entry in column l, which keeps the rows independent
    near the origin.
    """
    if not 0 <= k < n:
        raise ValueError("need 0 <= k < n")
    q = [f"q{i}" for i in range(1, n + 1)]
    p = [f"p{i}" for i in range(1, n + 1)]
    M = {}
    for i in range(n):
        M[(i, i)] = f"2 + {float(np.round(rng.uniform(0, 1), 6))!r}*{q[rng.integers(n)]}^2"
        for j in range(i + 1, n):
            M[(i, j)] = repr(float(np.round(rng.uniform(-0.3, 0.3), 6)) / max(1, n - 1))
    b = [random_polynomial(rng, ["t"] + q, 0.3, 0.3) for _ in range(n)]
    V = random_polynomial(rng, ["t"] + q, 1.0, 0.5)
    lag = NaturalLagrangian.build(n, M, b, V)
    force = None
    if forced:
        force = [random_polynomial(rng, ["t"] + q + p, 0.5, 0.3) for _ in range(n)]
    rows = []
    for l in range(k):
        a = [random_polynomial(rng, ["t"] + q, 0.3, 0.3) for _ in range(n)]
        a[l] = f"1 + {a[l]}"
        rows.append(kinematic(random_polynomial(rng, ["t"] + q, 0.5, 0.5), a, label=f"row{l + 1}"))
    return MechSystem(lag, force, rows, name=f"random-n{n}-k{k}")
