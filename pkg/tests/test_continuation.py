import csv
import io
import json

import numpy as np
import pytest
from scipy.optimize import brentq

from epibif import bifcoeffs as bc
from epibif import continuation as ct
from epibif import recipes, steadystate
from epibif.models import get_model


@pytest.fixture(scope="module")
def brauer_backward_branch():
    m = get_model("brauer2d")
    p = recipes.brauer_threshold_point(m.defaults, "brauer2d")
    q = {**p, "beta": 1.05 * p["beta"]}
    start = [s for s in steadystate.enumerate(m, q) if s.is_positive][0]
    return m, p, ct.trace_both(m, q, "beta", start)


def _discriminant_fold(p):
    """``beta`` where the steady-state quadratic has a double root (independent of continuation)."""
    def disc(beta):
        a2, a1, a0 = steadystate.brauer_quadratic({**p, "beta": beta}).coeffs
        return a1 * a1 - 4.0 * a2 * a0

    return brentq(disc, 0.3 * p["beta"], p["beta"], xtol=1e-14, rtol=1e-15)


def test_brauer_fold_matches_discriminant(brauer_backward_branch):
    m, p, br = brauer_backward_branch
    folds = ct.fold_points(br)
    assert len(folds) == 1
    assert folds[0].refined == "moore"
    assert folds[0].alpha == pytest.approx(_discriminant_fold(p), rel=1e-9)
    assert folds[0].residual <= 1e-10


def test_fold_state_is_double_root(brauer_backward_branch):
    m, p, br = brauer_backward_branch
    fp = ct.fold_points(br)[0]
    a2, a1, _ = steadystate.brauer_quadratic({**p, "beta": fp.alpha}).coeffs
    assert fp.x[0] == pytest.approx(-a1 / (2 * a2), rel=1e-7)


def test_stability_changes_at_fold(brauer_backward_branch):
    _, _, br = brauer_backward_branch
    i = br.fold_markers[0]
    before = set(br.stability[max(0, i - 5):i - 1])
    after = set(br.stability[i + 2:i + 6])
    assert before != after


def test_forward_branch_has_no_fold():
    m = get_model("brauer2d")
    p = recipes.brauer_threshold_point({**m.defaults, "sigma": 1.0}, "brauer2d")
    p["beta"] *= 1.5
    start = [s for s in steadystate.enumerate(m, p) if s.is_positive][0]
    br = ct.trace_both(m, p, "beta", start)
    assert br.fold_markers == ()
    assert ct.fold_points(br) == []


def test_csv_schema(brauer_backward_branch):
    m, _, br = brauer_backward_branch
    text = br.to_csv()
    lines = text.splitlines()
    assert lines[0].startswith("# epibif branch csv v1")
    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    assert rows[0] == ["s", "beta", "I", "V", "R0", "maxRe", "fold_flag", "stability"]
    body = rows[1:]
    assert len(body) == len(br)
    assert sum(int(r[6]) for r in body) == len(br.fold_markers)
    assert {r[7] for r in body} <= {"stable", "unstable", "nonhyperbolic"}
    s = [float(r[0]) for r in body]
    assert all(b >= a for a, b in zip(s, s[1:]))


def test_json_schema(brauer_backward_branch):
    _, _, br = brauer_backward_branch
    d = json.loads(br.to_json())
    assert d["schema_version"] == 1
    assert d["model"] == "brauer2d" and d["alpha1"] == "beta"
    assert len(d["x"]) == len(d["alpha"]) == len(d["R0"]) == len(br)
    assert d["state_names"] == ["I", "V"]


def test_branch_points_are_steady_states(brauer_backward_branch):
    m, p, br = brauer_backward_branch
    for i in range(0, len(br), 10):
        q = {**br.params, "beta": br.alpha[i]}
        x = br.x[i]
        assert np.max(np.abs(m.rhs(x, m._full(q)))) <= 1e-8 * (1 + np.max(np.abs(x)))


def test_bifurcating_start_is_on_branch():
    m = get_model("hepc3d")
    p = dict(m.defaults)
    x, a = ct.bifurcating_start(m, p, "rho")
    q = m.validate({**p, "rho": a})
    assert np.max(np.abs(m.rhs(x, m._full(q)))) <= 1e-9 * (1 + np.max(np.abs(x)))
    assert np.all(x[1:] > 0)


@pytest.fixture(scope="module")
def hepc_locus():
    m = get_model("hepc3d")
    q = recipes.theorem4_base()
    return bc.center_coefficients(m, q, "rho", "r_I"), ct.fold_locus(m, q, "rho", "r_I")


def test_fold_locus_slope_matches_corrected_e(hepc_locus):
    cc, locus = hepc_locus
    assert locus.slope_u == pytest.approx(cc.e_cm, rel=1e-5)


def test_fold_locus_alpha1_slope(hepc_locus):
    cc, locus = hepc_locus
    assert locus.slope_alpha1 == pytest.approx(cc.fold_alpha1_slope, rel=1e-5)


def test_fold_locus_points_are_folds(hepc_locus):
    _, locus = hepc_locus
    assert len(locus.alpha2) == 4
    # folds sit on the positive side of the DFE for c < 0, e > 0 and alpha2 > 0
    assert np.all(locus.u[locus.alpha2 > 0] > 0)
