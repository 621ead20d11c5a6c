"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line."""

from __future__ import annotations

import math

import numpy as np
from conftest import ACCEPTANCE, polar_particle
from noetherlab.cli import main as cli_main
from noetherlab.constraint import sample_manifold_states
from noetherlab.dynamics import PhaseState, integrate, project_to_manifold
from noetherlab.expr import (
    FUNCTIONS,
    Binary,
    Const,
    Unary,
    Var,
    compile_exprs,
    diff,
    evaluate,
    fmt,
    free_names,
    parse,
)
from noetherlab.randsys import random_polynomial, random_system
from noetherlab.runner import run_scenario
from noetherlab.scenario import builtin_names, builtin_path, load_scenario
from noetherlab.symmetry import SymmetrySpec, bracket_defect, invariance_residual, lagrangian_invariance_residual
from noetherlab.verify import multiplier_oracle_check, subset_check

TIME_LIMIT = 10.0


def record(key: str, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {key} {title}: {detail}"
    ACCEPTANCE[key] = line
    print(line)
    assert ok, line


def _run(name: str):
    return run_scenario(load_scenario(builtin_path(name)))


def _check(result, name: str):
    hits = [c for c in result.report.checks if c.name == name]
    assert hits, f"{result.scenario.name} has no check {name!r}"
    return hits[0]


def test_a1_example1_momentum_integral(tmp_path):
    r = _run("example1-momentum")
    cons = _check(r, "integral: conservation")
    full = _check(r, "integral: momentum equation (full)")
    reduced = _check(r, "integral: momentum equation (reduced)")
    J = r.J["integral"]
    drift = float(np.max(np.abs(J - J[0])) / max(1.0, abs(J[0])))
    exit_code = cli_main(["run", "example1-momentum", "--out", str(tmp_path)])
    ok = (
        drift <= 1e-8
        and cons.passed
        and full.residual <= 1e-8
        and reduced.residual <= 1e-8
        and exit_code == 0
        and r.elapsed < TIME_LIMIT
    )
    record(
        "A1",
        "charged-mass momentum integral",
        ok,
        f"relative drift {drift:.2e} (<= 1e-8), momentum identity {max(full.residual, reduced.residual):.2e} "
        f"(<= 1e-8), exit {exit_code}, {r.elapsed:.1f} s",
    )


def test_a2_example1_gauge_symmetry(tmp_path):
    r = _run("example1-gauge")
    inv = _check(r, "gauge: invariance on manifold")
    J = r.J["gauge"]
    drift = float(np.max(np.abs(J - J[0])))
    ctl = _run("example1-gauge-control")
    Jc = ctl.J["gauge"]
    ctl_drift = float(np.max(np.abs(Jc - Jc[0])))
    ctl_exit = cli_main(["run", "example1-gauge-control", "--out", str(tmp_path)])
    ok = (
        inv.samples == 100
        and inv.residual <= 1e-10
        and drift <= 1e-6
        and r.passed
        and ctl_drift > 1e-3
        and ctl_exit == 1
        and max(r.elapsed, ctl.elapsed) < TIME_LIMIT
    )
    record(
        "A2",
        "charged-mass gauge integral",
        ok,
        f"invariance {inv.residual:.2e} at {inv.samples} states (<= 1e-10), drift {drift:.2e} (<= 1e-6), "
        f"control drift {ctl_drift:.2e} (> 1e-3) exit {ctl_exit}",
    )


def test_a3_example2_energy():
    r = _run("example2-energy")
    drift = _check(r, "energy: moving energy drift")
    gyro = _check(r, "gyroscopic force")
    H_drift = r.report.summaries["energy_drift_relative"]
    ok = drift.residual <= 1e-8 and H_drift <= 1e-8 and gyro.passed and r.elapsed < TIME_LIMIT
    record(
        "A3",
        "energy under a homogeneous moving constraint",
        ok,
        f"H drift {H_drift:.2e} (<= 1e-8), gyroscopic residual {gyro.residual:.2e} (<= {gyro.tolerance:.0e}), "
        f"{r.elapsed:.1f} s",
    )


def test_a4_admissible_directions_annihilate_reaction():
    rng = np.random.default_rng(2024)
    worst, ctrl_min, systems, directions = 0.0, np.inf, 0, 0
    for i in range(50):
        n = int(rng.integers(2, 5))
        k = int(rng.integers(1, min(2, n - 1) + 1))
        sys = random_system(rng, n, k)
        inc, ctrl = subset_check(sys, 20, 64, seed=i, n_points=1, q_scale=0.5, t_range=(0.0, 1.0))
        worst = max(worst, inc.residual)
        ctrl_min = min(ctrl_min, ctrl.residual)
        systems += 1
        directions += inc.samples
    ok = worst <= 1e-8 and ctrl_min > 1e-8 and directions == 50 * 20
    record(
        "A4",
        "admissible directions in the reaction annihilator",
        ok,
        f"{systems} systems, {directions} directions, worst {worst:.2e} (<= 1e-8), "
        f"smallest control residual {ctrl_min:.2e} (> 1e-8)",
    )


def test_a5_multiplier_oracle():
    corpus = [n for n in builtin_names() if load_scenario(builtin_path(n)).system.k > 0]
    per = [100 // len(corpus) + (i < 100 % len(corpus)) for i in range(len(corpus))]
    worst, total = 0.0, 0
    for name, count in zip(corpus, per):
        scn = load_scenario(builtin_path(name))
        cfg = scn.integration
        states = sample_manifold_states(
            scn.system, count, seed=17, t_range=(cfg.t0, cfg.t0 + cfg.h * cfg.steps), q_center=cfg.q0
        )
        chk = multiplier_oracle_check(scn.system, states)
        worst = max(worst, chk.residual)
        total += chk.samples
    ok = total == 100 and worst <= 1e-5
    record("A5", "Multiplier oracle", ok, f"{total} states over {len(corpus)} scenarios, worst {worst:.2e} (<= 1e-5)")


EXPRESSIONS = [
    "1/sqrt(1+a^2*q2^2)",
    "q1^2 + sin(t)*p1",
    "(1 + 0.5*sin(t))*q2*p1 - p3",
    "0.1*cos(t)",
    "exp(-q1^2)*cos(a*t)",
    "ln(2 + sin(q2))*p2^3",
    "sqrt(1 + a^2*q2^2)*p1 - q1/(1 + p2^2)",
    "(q1 - t)^3/(2 + cos(p1))",
    "m*g*(0.2*q1 + 0.5*q2) - eps*p2/m",
    "q1^2*p2 - q2*p1*t + a^-1",
]


def test_a6_legendre_and_derivatives():
    rng = np.random.default_rng(6)
    # Legendre round trip on random systems
    legendre = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 5))
        sys = random_system(rng, n, 0)
        t, q, v = float(rng.normal()), rng.normal(size=n), rng.normal(size=n)
        back = sys.jet(t, q, sys.momentum_from_velocity(t, q, v)).H_p
        legendre = max(legendre, float(np.max(np.abs(back - v)) / max(1.0, np.max(np.abs(v)))))
    # symbolic partials against central differences
    partial = 0.0
    h = 1e-6
    for src in EXPRESSIONS:
        e = parse(src)
        for _ in range(10):
            env = {"t": rng.uniform(0, 3), "a": rng.uniform(0.5, 2), "m": 1.0, "g": 9.81, "eps": 0.5}
            env.update({f"q{i}": rng.uniform(-1, 1) for i in (1, 2, 3)})
            env.update({f"p{i}": rng.uniform(-1, 1) for i in (1, 2, 3)})
            for var in sorted(free_names(e)):
                d = evaluate(diff(e, var), env)
                fd = (evaluate(e, {**env, var: env[var] + h}) - evaluate(e, {**env, var: env[var] - h})) / (2 * h)
                partial = max(partial, abs(d - fd) / max(1.0, abs(d)))
    # Hamiltonian partials of every builtin against central differences of H
    for name in builtin_names():
        sys = load_scenario(builtin_path(name)).system
        n = sys.n
        for t, q, p in sample_manifold_states(sys, 5, seed=3):
            x0 = np.concatenate([[t], q, p])
            jet = sys.jet(t, q, p)
            for c in range(2 * n + 1):
                e = np.zeros_like(x0)
                e[c] = h
                hp = sys.jet(*_split(x0 + e, n)).H
                hm = sys.jet(*_split(x0 - e, n)).H
                fd = (hp - hm) / (2 * h)
                partial = max(partial, abs(jet.grad[c] - fd) / max(1.0, abs(jet.grad[c])))
    # Hamilton and Lagrange invariance residuals at matched points
    equiv = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 4))
        sys = random_system(rng, n, 0)
        names = ["t"] + [f"q{i}" for i in range(1, n + 1)]
        spec = SymmetrySpec.build(
            n, tau=random_polynomial(rng, names, 0.5), xi=[random_polynomial(rng, names) for _ in range(n)]
        )
        t, q, v = float(rng.normal()), rng.normal(size=n), rng.normal(size=n)
        rH = invariance_residual(spec, sys, (t, q, sys.momentum_from_velocity(t, q, v)))
        rL = lagrangian_invariance_residual(spec, sys, t, q, v)
        equiv = max(equiv, abs(rL + rH) / (1.0 + abs(rH)))
    ok = legendre <= 1e-10 and partial <= 1e-6 and equiv <= 1e-9
    record(
        "A6",
        "Legendre and derivative cross-checks",
        ok,
        f"Legendre {legendre:.2e} (<= 1e-10), partials vs FD {partial:.2e} (<= 1e-6), "
        f"Hamilton/Lagrange {equiv:.2e} (<= 1e-9)",
    )


def _split(x, n):
    return x[0], x[1 : 1 + n], x[1 + n :]


STEPS = (1e-2, 5e-3, 2.5e-3)


def _slope(hs, errs):
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def _polar_errors(T=2.0):
    sys = polar_particle()
    x0, y0, vx, vy = 1.0, 0.0, 0.2, 0.9
    xT, yT = x0 + vx * T, y0 + vy * T
    r, th = math.hypot(xT, yT), math.atan2(yT, xT)
    pr = (xT * vx + yT * vy) / r
    pth = xT * vy - yT * vx
    exact = np.array([r, th, pr, pth])
    errs = []
    for h in STEPS:
        tr = integrate(sys, PhaseState(0.0, [1.0, 0.0], [vx, vy]), h, int(round(T / h)), projection=False)
        errs.append(float(np.max(np.abs(np.concatenate([tr.q[-1], tr.p[-1]]) - exact))))
    return errs


def _example1_errors(T=1.0):
    scn = load_scenario(builtin_path("example1"))
    sys, cfg = scn.system, scn.integration
    init = project_to_manifold(sys, PhaseState(cfg.t0, cfg.q0, cfg.p0))
    href = STEPS[-1] / 8
    ref = integrate(sys, init, href, int(round(T / href)), projection=False)
    exact = np.concatenate([ref.q[-1], ref.p[-1]])
    errs = []
    for h in STEPS:
        tr = integrate(sys, init, h, int(round(T / h)), projection=False)
        errs.append(float(np.max(np.abs(np.concatenate([tr.q[-1], tr.p[-1]]) - exact))))
    return errs


def test_a7_integrator_order():
    s_free = _slope(STEPS, _polar_errors())
    s_ex1 = _slope(STEPS, _example1_errors())
    ok = abs(s_free - 4) <= 0.2 and abs(s_ex1 - 4) <= 0.2
    record(
        "A7",
        "Integrator order",
        ok,
        f"slope {s_free:.3f} on the free particle (polar), {s_ex1:.3f} on the charged mass without projection (4 +- 0.2)",
    )


VARS = ("t", "q1", "q2", "p1", "p2", "a")
FUNS = sorted(FUNCTIONS)


def _random_const(rng):
    kind = rng.integers(4)
    if kind == 0:
        return Const(float(rng.integers(-9, 10)))
    if kind == 1:
        return Const(float(rng.uniform(-100, 100)))
    if kind == 2:
        return Const(float(10.0 ** rng.integers(-12, 12) * rng.uniform(-1, 1)))
    return Const(float(rng.choice([0.0, -0.0, 0.5, 1e-300, 1.7976931348623157e308])))


def _random_tree(rng, depth):
    if depth == 0 or rng.random() < 0.25:
        return Var(str(rng.choice(VARS))) if rng.random() < 0.6 else _random_const(rng)
    r = rng.random()
    if r < 0.55:
        return Binary(str(rng.choice(list("+-*/"))), _random_tree(rng, depth - 1), _random_tree(rng, depth - 1))
    if r < 0.7:
        exp = _random_const(rng) if rng.random() < 0.7 else Binary("-", _random_const(rng), _random_const(rng))
        return Binary("^", _random_tree(rng, depth - 1), exp)
    op = str(rng.choice(FUNS + ["neg"]))
    return Unary(op, _random_tree(rng, depth - 1))


def test_a8_parser_laws():
    rng = np.random.default_rng(8)
    trees = [_random_tree(rng, int(rng.integers(1, 7))) for _ in range(1000)]
    round_trip = sum(parse(fmt(e)) == e and fmt(parse(fmt(e))) == fmt(e) for e in trees)
    fn_checks = same = 0
    for e in trees:
        env = {v: float(rng.uniform(-2, 2)) for v in VARS}
        try:
            v1 = evaluate(e, env)
        except (ArithmeticError, ValueError):
            continue
        v2 = evaluate(e, dict(reversed(list(env.items()))))
        (v3,) = compile_exprs([e], list(VARS))(*[env[k] for k in VARS])
        fn_checks += 1
        bits = {np.float64(v).tobytes() for v in (v1, v2, v3)}
        same += len(bits) == 1 or all(math.isnan(v) for v in (v1, v2, v3))
    ok = round_trip == 1000 and same == fn_checks and fn_checks >= 500
    record(
        "A8",
        "Parser laws",
        ok,
        f"round trip exact on {round_trip}/1000 trees, evaluation bit-identical on {same}/{fn_checks} evaluable trees",
    )


def test_a9_generalized_symmetry_and_bracket():
    r = _run("gamma-corrected")
    gen = _check(r, "py: generalized symmetry residuals")
    J = r.J["py"]
    drift = float(np.max(np.abs(J - J[0])))
    worst_bracket, points = 0.0, 0
    for name in builtin_names():
        scn = load_scenario(builtin_path(name))
        for entry in scn.symmetries:
            if "bracket" not in entry.checks:
                continue
            states = sample_manifold_states(scn.system, 100, seed=9, q_center=scn.integration.q0)
            for s in states:
                worst_bracket = max(worst_bracket, float(np.max(np.abs(bracket_defect(entry.spec, scn.system, s)))))
                points += 1
    ok = gen.residual <= 1e-9 and drift <= 1e-6 and points > 0 and worst_bracket <= 1e-9 and r.elapsed < TIME_LIMIT
    record(
        "A9",
        "gamma-corrected symmetry and bracket",
        ok,
        f"residuals {gen.residual:.2e} (<= 1e-9), J drift {drift:.2e} (<= 1e-6), "
        f"bracket defect {worst_bracket:.2e} at {points} points (<= 1e-9)",
    )
