"""Line-oriented scenario files.

A scenario is a sequence of ``[section]`` headers followed by ``key = value``
lines; ``#`` starts a comment. Values are expressions in the expression
grammar unless the key is documented as text. See docs/grammar.md.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .expr import DomainError, Expr, ParseError, evaluate, parse, substitute
from .model import (
    Force,
    MechSystem,
    ModelError,
    NaturalLagrangian,
    holonomic,
    kinematic,
)
from .symmetry import OneForm, SymmetrySpec, bind, check_closed

__all__ = [
    "ScenarioError",
    "SymmetryEntry",
    "IntegrationConfig",
    "Scenario",
    "load_scenario",
    "parse_scenario",
    "builtin_names",
    "builtin_path",
    "resolve",
    "SYMMETRY_CHECKS",
    "SYSTEM_CHECKS",
]

SYMMETRY_CHECKS = (
    "conservation",
    "momentum",
    "invariance",
    "lagrange",
    "weak-noether",
    "generalized",
    "bracket",
    "moving-energy",
)
SYSTEM_CHECKS = ("manifold", "gyroscopic", "subset", "oracle")

_NAMED_SECTIONS = {"constraint", "symmetry"}
_SECTIONS = {"scenario", "params", "define", "lagrangian", "force", "integration", "checks", "tolerances"} | _NAMED_SECTIONS

_HEADER = re.compile(r"^\[([A-Za-z][A-Za-z0-9_]*)(?:\.([A-Za-z0-9_\-]+))?\]$")
_KEY = re.compile(r"^([A-Za-z][A-Za-z0-9_\-\.]*)\s*=\s*(.*)$")


class ScenarioError(ValueError):
    """A scenario diagnostic naming file, line, section and key."""


@dataclass
class _Line:
    lineno: int
    key: str
    value: str
    col: int  # byte offset of the value within the line


@dataclass
class _Section:
    kind: str
    name: str | None
    lineno: int
    entries: dict = field(default_factory=dict)  # key -> _Line

    @property
    def title(self) -> str:
        return f"[{self.kind}.{self.name}]" if self.name else f"[{self.kind}]"


@dataclass
class SymmetryEntry:
    spec: SymmetrySpec
    checks: tuple
    xi0: tuple | None = None
    gamma: object = None  # None, "solve-dt" or a OneForm
    tolerances: dict = field(default_factory=dict)


@dataclass
class IntegrationConfig:
    t0: float
    q0: np.ndarray
    p0: np.ndarray
    h: float = 1e-3
    steps: int = 1000
    projection: bool = True
    seed: int = 0
    check_points: int = 50
    samples: int = 100


@dataclass
class Scenario:
    name: str
    description: str
    anchor: str
    n: int
    params: dict
    system: MechSystem
    symmetries: list
    integration: IntegrationConfig | None
    system_checks: tuple
    tolerances: dict
    source: str = ""

    @property
    def row_labels(self) -> list[str]:
        return self.system.row_labels


# ---------------------------------------------------------------------------
# reading


def _split_sections(text: str, origin: str) -> list[_Section]:
    sections: list[_Section] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        line = body.strip()
        if not line:
            continue
        m = _HEADER.match(line)
        if m:
            kind, name = m.group(1), m.group(2)
            if kind not in _SECTIONS:
                raise ScenarioError(f"{origin}:{lineno}: unknown section [{kind}]; expected one of {sorted(_SECTIONS)}")
            if (name is None) == (kind in _NAMED_SECTIONS):
                form = f"[{kind}.<label>]" if kind in _NAMED_SECTIONS else f"[{kind}]"
                raise ScenarioError(f"{origin}:{lineno}: section must be written {form}")
            sections.append(_Section(kind, name, lineno))
            continue
        m = _KEY.match(line)
        if not m:
            raise ScenarioError(f"{origin}:{lineno}: expected '[section]' or 'key = value', got {line!r}")
        if not sections:
            raise ScenarioError(f"{origin}:{lineno}: entry {m.group(1)!r} outside any section")
        sec = sections[-1]
        key, value = m.group(1), m.group(2).strip()
        if key in sec.entries:
            raise ScenarioError(f"{origin}:{lineno}: {sec.title} duplicate key {key!r}")
        col = len(body) - len(body.lstrip()) + m.start(2)
        sec.entries[key] = _Line(lineno, key, value, col)
    return sections


class _Reader:
    def __init__(self, text: str, origin: str):
        self.origin = origin
        self.sections = _split_sections(text, origin)
        self.params: dict[str, float] = {}
        self.macros: dict[str, Expr] = {}
        self.n = 0

    def error(self, sec: _Section, key: str | None, msg: str, line: _Line | None = None) -> ScenarioError:
        where = f"{self.origin}:{line.lineno if line else sec.lineno}: {sec.title}"
        if key:
            where += f" {key}"
        return ScenarioError(f"{where}: {msg}")

    def one(self, kind: str, required: bool = True) -> _Section | None:
        found = [s for s in self.sections if s.kind == kind and s.name is None]
        if len(found) > 1:
            raise ScenarioError(f"{self.origin}:{found[1].lineno}: duplicate section [{kind}]")
        if not found and required:
            raise ScenarioError(f"{self.origin}: missing section [{kind}]")
        return found[0] if found else None

    def named(self, kind: str) -> list[_Section]:
        return [s for s in self.sections if s.kind == kind]

    def text(self, sec: _Section, key: str, default: str | None = None) -> str:
        line = sec.entries.get(key)
        if line is None:
            if default is None:
                raise self.error(sec, key, "missing key")
            return default
        return line.value

    def expr(self, sec: _Section, key: str, extra: set[str] = frozenset(), default: str | None = None) -> Expr:
        line = sec.entries.get(key)
        if line is None:
            if default is None:
                raise self.error(sec, key, "missing key")
            return parse(default)
        names = set(self.params) | set(self.macros) | self.coords() | set(extra)
        try:
            e = parse(line.value, names)
        except ParseError as err:
            raise self.error(
                sec, key, f"{err.message} (offset {line.col + err.offset})", line
            ) from None
        if self.macros:
            e = substitute(e, self.macros)
        return e

    def coords(self) -> set[str]:
        n = self.n
        return {"t"} | {f"q{i}" for i in range(1, n + 1)} | {f"p{i}" for i in range(1, n + 1)}

    def number(self, sec: _Section, key: str, env: dict | None = None, default: float | None = None) -> float:
        line = sec.entries.get(key)
        if line is None:
            if default is None:
                raise self.error(sec, key, "missing key")
            return float(default)
        e = self.expr(sec, key)
        try:
            return evaluate(e, {**self.params, **(env or {})})
        except KeyError as err:
            raise self.error(sec, key, f"value depends on unbound name {err.args[0]!r}", line) from None
        except DomainError as err:
            raise self.error(sec, key, str(err), line) from None

    def unknown(self, sec: _Section, allowed) -> None:
        for key, line in sec.entries.items():
            if not any(re.fullmatch(a, key) for a in allowed):
                raise self.error(sec, key, "unknown key", line)


def _indexed(reader: _Reader, sec: _Section, prefix: str, n: int) -> dict[int, _Line]:
    out = {}
    for key, line in sec.entries.items():
        m = re.fullmatch(prefix + r"([1-9][0-9]*)", key)
        if m:
            i = int(m.group(1))
            if i > n:
                raise reader.error(sec, key, f"index {i} exceeds dimension n={n}", line)
            out[i] = line
    return out


def _flag(reader: _Reader, sec: _Section, key: str, default: bool) -> bool:
    v = reader.text(sec, key, "on" if default else "off").lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise reader.error(sec, key, f"expected on/off, got {v!r}", sec.entries.get(key))


def _checklist(reader: _Reader, sec: _Section, key: str, allowed) -> tuple:
    raw = reader.text(sec, key, "")
    items = tuple(x.strip() for x in raw.split(",") if x.strip())
    for x in items:
        if x not in allowed:
            raise reader.error(sec, key, f"unknown check {x!r}; expected one of {', '.join(allowed)}", sec.entries.get(key))
    return items


def parse_scenario(text: str, origin: str = "<scenario>", hamiltonian: str = "auto") -> Scenario:
    r = _Reader(text, origin)
    head = r.one("scenario")
    r.unknown(head, ["name", "description", "anchor", "n"])
    name = r.text(head, "name")
    try:
        n = int(r.text(head, "n"))
    except ValueError:
        raise r.error(head, "n", "dimension must be an integer") from None
    if n < 1:
        raise r.error(head, "n", "dimension must be positive")
    r.n = n

    # parameters are evaluated in order and may use earlier ones
    psec = r.one("params", required=False)
    if psec is not None:
        for key, line in psec.entries.items():
            if re.fullmatch(r"t|[qp][1-9][0-9]*", key):
                raise r.error(psec, key, "parameter name clashes with a coordinate", line)
            saved, r.n = r.n, 0
            try:
                r.params[key] = r.number(psec, key)
            finally:
                r.n = saved
    dsec = r.one("define", required=False)
    if dsec is not None:
        for key, line in dsec.entries.items():
            if key in r.params or re.fullmatch(r"t|[qp][1-9][0-9]*", key):
                raise r.error(dsec, key, "macro name clashes with a parameter or coordinate", line)
            r.macros[key] = r.expr(dsec, key)

    lsec = r.one("lagrangian")
    r.unknown(lsec, [r"M[1-9][0-9]*_?[1-9][0-9]*", r"b[1-9][0-9]*", "V"])
    M = {}
    for key, line in lsec.entries.items():
        m = re.fullmatch(r"M([1-9][0-9]*?)_?([1-9][0-9]*)", key) if key.startswith("M") else None
        if m is None:
            continue
        if "_" not in key and len(key) != 3:
            raise r.error(lsec, key, "ambiguous index; write M<i>_<j> when n > 9", line)
        i, j = int(m.group(1)), int(m.group(2))
        if i > n or j > n:
            raise r.error(lsec, key, f"index exceeds dimension n={n}", line)
        if i > j:
            raise r.error(lsec, key, "only the upper triangle (i <= j) may be given", line)
        M[(i - 1, j - 1)] = r.expr(lsec, key)
    b = [r.expr(lsec, f"b{i}", default="0") for i in range(1, n + 1)]
    _indexed(r, lsec, "b", n)
    V = r.expr(lsec, "V", default="0")
    lag = NaturalLagrangian.build(n, M, b, V)

    fsec = r.one("force", required=False)
    if fsec is not None:
        r.unknown(fsec, [r"F[1-9][0-9]*"])
        _indexed(r, fsec, "F", n)
        force = Force(tuple(r.expr(fsec, f"F{i}", default="0") for i in range(1, n + 1)))
    else:
        force = Force.zero(n)

    rows = []
    for sec in r.named("constraint"):
        label = sec.name or f"row{len(rows) + 1}"
        kind = r.text(sec, "kind")
        if kind == "holonomic":
            r.unknown(sec, ["kind", "f"])
            rows.append(holonomic(r.expr(sec, "f"), n, label))
        elif kind == "kinematic":
            r.unknown(sec, ["kind", "a0", r"a[1-9][0-9]*"])
            _indexed(r, sec, "a", n)
            a = [r.expr(sec, f"a{i}", default="0") for i in range(1, n + 1)]
            rows.append(kinematic(r.expr(sec, "a0", default="0"), a, label))
        else:
            raise r.error(sec, "kind", f"expected holonomic or kinematic, got {kind!r}", sec.entries.get("kind"))
    rows.sort(key=lambda row: row.kind != "holonomic")

    try:
        system = MechSystem(lag, force, rows, r.params, hamiltonian=hamiltonian, name=name)
    except ModelError as err:
        raise ScenarioError(f"{origin}: {err}") from None

    symmetries = []
    for sec in r.named("symmetry"):
        label = sec.name or f"sym{len(symmetries) + 1}"
        r.unknown(
            sec,
            [
                "tau", r"xi[1-9][0-9]*", "gauge", "beta_t", r"beta_[qp][1-9][0-9]*", "checks",
                r"xi0_[1-9][0-9]*", "gamma", "gamma_t", r"gamma_[qp][1-9][0-9]*", r"tol\.[a-z\-]+",
            ],
        )
        _indexed(r, sec, "xi", n)
        tau = r.expr(sec, "tau", default="0")
        xi = [r.expr(sec, f"xi{i}", default="0") for i in range(1, n + 1)]
        gauge = r.expr(sec, "gauge", default="0")
        beta = None
        if any(k.startswith("beta_") for k in sec.entries):
            beta = OneForm.build(
                n,
                r.expr(sec, "beta_t", default="0"),
                [r.expr(sec, f"beta_q{i}", default="0") for i in range(1, n + 1)],
                [r.expr(sec, f"beta_p{i}", default="0") for i in range(1, n + 1)],
            )
            verdict = check_closed(beta, r.params)
            if not verdict.closed:
                raise r.error(sec, "beta", f"1-form is not closed (residual {verdict.residual:.3g})")
        spec = SymmetrySpec.build(n, tau, xi, gauge, beta, label)
        try:
            bind(spec, system)
        except ModelError as err:
            raise r.error(sec, None, str(err)) from None
        checks = _checklist(r, sec, "checks", SYMMETRY_CHECKS)
        xi0 = None
        if any(k.startswith("xi0_") for k in sec.entries):
            xi0 = tuple(r.expr(sec, f"xi0_{i}", default="0") for i in range(1, n + 1))
        if "moving-energy" in checks and xi0 is None:
            xi0 = tuple(parse("0") for _ in range(n))
        gamma = None
        if "gamma" in sec.entries:
            if r.text(sec, "gamma") != "solve-dt":
                raise r.error(sec, "gamma", "expected 'solve-dt' or component keys", sec.entries["gamma"])
            gamma = "solve-dt"
        elif any(k.startswith("gamma_") for k in sec.entries):
            gamma = OneForm.build(
                n,
                r.expr(sec, "gamma_t", default="0"),
                [r.expr(sec, f"gamma_q{i}", default="0") for i in range(1, n + 1)],
                [r.expr(sec, f"gamma_p{i}", default="0") for i in range(1, n + 1)],
            )
        if "generalized" in checks and gamma is None:
            raise r.error(sec, "checks", "generalized check needs gamma")
        if ("bracket" in checks or "weak-noether" in checks) and (system.k or not system.force.is_zero):
            raise r.error(sec, "checks", "bracket and weak-noether checks need an unconstrained system without forces")
        tols = {}
        for k in sec.entries:
            if k.startswith("tol."):
                if k[4:] not in SYMMETRY_CHECKS:
                    raise r.error(sec, k, f"unknown check {k[4:]!r}", sec.entries[k])
                tols[k[4:]] = r.number(sec, k)
        symmetries.append(SymmetryEntry(spec, checks, xi0, gamma, tols))

    integ = None
    isec = r.one("integration", required=False)
    if isec is not None:
        r.unknown(
            isec,
            ["t0", r"q[1-9][0-9]*", r"p[1-9][0-9]*", "h", "steps", "projection", "seed", "check_points", "samples"],
        )
        _indexed(r, isec, "q", n)
        _indexed(r, isec, "p", n)
        t0 = r.number(isec, "t0", default=0.0)
        env = {"t": t0}
        q0 = []
        for i in range(1, n + 1):
            q0.append(r.number(isec, f"q{i}", env, default=0.0))
            env[f"q{i}"] = q0[-1]
        p0 = []
        for i in range(1, n + 1):
            p0.append(r.number(isec, f"p{i}", env, default=0.0))
            env[f"p{i}"] = p0[-1]
        steps = r.number(isec, "steps", default=1000)
        if steps != int(steps) or steps < 1:
            raise r.error(isec, "steps", "must be a positive integer")
        h = r.number(isec, "h", default=1e-3)
        if not h > 0:
            raise r.error(isec, "h", "must be positive")
        integ = IntegrationConfig(
            t0,
            np.array(q0),
            np.array(p0),
            h,
            int(steps),
            _flag(r, isec, "projection", True),
            int(r.number(isec, "seed", default=0)),
            int(r.number(isec, "check_points", default=50)),
            int(r.number(isec, "samples", default=100)),
        )
    csec = r.one("checks", required=False)
    system_checks: tuple = ()
    if csec is not None:
        r.unknown(csec, list(SYSTEM_CHECKS))
        system_checks = tuple(k for k in SYSTEM_CHECKS if k in csec.entries and _flag(r, csec, k, False))
    tsec = r.one("tolerances", required=False)
    tolerances = {}
    if tsec is not None:
        r.unknown(tsec, list(SYMMETRY_CHECKS + SYSTEM_CHECKS))
        tolerances = {k: r.number(tsec, k) for k in tsec.entries}
    needs_traj = {"conservation", "momentum", "moving-energy", "generalized"}
    if integ is None and (
        any(needs_traj & set(s.checks) for s in symmetries) or "manifold" in system_checks
    ):
        raise ScenarioError(f"{origin}: trajectory checks requested but no [integration] section")
    return Scenario(
        name,
        r.text(head, "description", ""),
        r.text(head, "anchor", ""),
        n,
        dict(r.params),
        system,
        symmetries,
        integ,
        system_checks,
        tolerances,
        origin,
    )


def load_scenario(path, hamiltonian: str = "auto") -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as err:
        raise ScenarioError(f"{path}: not valid UTF-8 ({err.reason} at byte {err.start})") from None
    return parse_scenario(text, str(path), hamiltonian=hamiltonian)


# ---------------------------------------------------------------------------
# builtins


def _builtin_dir():
    return resources.files("noetherlab") / "builtins"


def builtin_names() -> list[str]:
    return sorted(p.name[:-4] for p in _builtin_dir().iterdir() if p.name.endswith(".scn"))


def builtin_path(name: str) -> Path:
    p = _builtin_dir() / f"{name}.scn"
    if not p.is_file():
        raise ScenarioError(f"unknown builtin scenario {name!r}")
    return Path(str(p))


def resolve(name_or_path: str) -> Path:
    """A builtin name, else a filesystem path."""
    if name_or_path in builtin_names():
        return builtin_path(name_or_path)
    p = Path(name_or_path)
    if not p.exists():
        raise ScenarioError(f"no builtin or file named {name_or_path!r}")
    return p
