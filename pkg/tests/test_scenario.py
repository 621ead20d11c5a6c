import math

import numpy as np
import pytest

from noetherlab.scenario import ScenarioError, builtin_names, builtin_path, load_scenario, parse_scenario

MINIMAL = """\
[scenario]
name = minimal
n = 3

[lagrangian]
M11 = 1
M22 = 1
M33 = 1
V = {V}
"""


def test_example1_builtin_parameters():
    scn = load_scenario(builtin_path("example1"))
    P = scn.params
    assert P["m"] == 1.0 and P["g"] == 9.81 and P["eps"] == 0.5
    assert math.hypot(P["kx"], P["ky"], P["kz"]) == pytest.approx(1.0, abs=1e-15)
    assert scn.n == 3 and scn.system.k == 1
    rows = scn.system.rows_at(math.pi / 2, [0.0, 2.0, 0.0])
    assert rows.A[0] == pytest.approx([1.5 * 2.0, 0.0, -1.0])
    assert rows.a0[0] == 0.0


def test_coordinate_beyond_dimension_is_an_arity_error():
    with pytest.raises(ScenarioError, match=r"minimal\.scn:9: .*q5.*dimension"):
        parse_scenario(MINIMAL.format(V="q5"), "minimal.scn")


def test_empty_constraint_list_is_valid():
    scn = parse_scenario(MINIMAL.format(V="0"), "minimal.scn")
    assert scn.system.k == 0 and scn.integration is None and scn.symmetries == []


@pytest.mark.parametrize(
    "extra,pattern",
    [
        ("[bogus]\nx = 1\n", "bogus"),
        ("[constraint.c]\nkind = kinematic\na7 = 1\n", "a7"),
        ("[constraint.c]\nkind = sideways\n", "kind"),
        ("[symmetry.s]\nxi1 = 1\nchecks = telepathy\n", "telepathy"),
        ("[symmetry.s]\nxi1 = 1\ntol.conservatoin = 1e-3\n", "conservatoin"),
        ("[integration]\nq1 = 0\nq9 = 1\n", "q9"),
        ("[constraint]\nkind = kinematic\n", "constraint"),
    ],
)
def test_invalid_sections_give_diagnostics(extra, pattern):
    with pytest.raises(ScenarioError, match=pattern):
        parse_scenario(MINIMAL.format(V="0") + extra, "bad.scn")


def test_parse_error_in_expression_reports_line():
    with pytest.raises(ScenarioError, match=r"bad\.scn:9:"):
        parse_scenario(MINIMAL.format(V="q1 +"), "bad.scn")


def test_lower_triangle_mass_entry_rejected():
    text = MINIMAL.format(V="0") .replace("M33 = 1", "M33 = 1\nM21 = 0.1")
    with pytest.raises(ScenarioError, match="M21"):
        parse_scenario(text, "bad.scn")


def test_params_are_sequential_and_macros_expand():
    text = MINIMAL.format(V="w*q1") + "[params]\nk = 2\nw = k^2 + 1\n[define]\nw2 = w*t\n"
    scn = parse_scenario(text.replace("V = w*q1", "V = w2*q1"), "ok.scn")
    assert scn.params["w"] == 5.0
    assert scn.system.jet(2.0, [1.0, 0.0, 0.0], np.zeros(3)).H == 10.0


def test_holonomic_rows_are_ordered_first():
    text = MINIMAL.format(V="0") + (
        "[constraint.wheel]\nkind = kinematic\na0 = 0\na1 = 1\na2 = -q3\n"
        "[constraint.rail]\nkind = holonomic\nf = q3 - t\n"
    )
    scn = parse_scenario(text, "ok.scn")
    assert scn.system.row_labels == ["rail", "wheel"]
    assert scn.system.s == 1


def test_every_builtin_loads():
    names = builtin_names()
    assert len(names) >= 8
    for name in names:
        scn = load_scenario(builtin_path(name))
        assert scn.name == name
        assert scn.description and scn.anchor
