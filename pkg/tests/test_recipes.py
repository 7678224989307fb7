import json

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from epibif import bifcoeffs as bc
from epibif import ngm, recipes
from epibif.models import get_model, sample_params

seeds = st.integers(min_value=0, max_value=2 ** 31)


@given(seeds)
def test_hepc_delta_gives_threshold(seed):
    m = get_model("hepc3d")
    p = sample_params(m, np.random.default_rng(seed))
    delta = recipes.hepc_delta_for_r0(p)
    assume(delta is not None)
    q = {**p, "delta": delta}
    assume(m.is_admissible(q))
    assert ngm.r0(m, q).r0 == pytest.approx(1.0, abs=1e-10)


@given(seeds)
def test_hepc_rI_gives_a_zero(seed):
    m = get_model("hepc3d")
    p = sample_params(m, np.random.default_rng(seed))
    p["rho"] = max(p["rho"], 2.0 * recipes.hepc_rho_min(p))
    rI = recipes.hepc_rI_for_a0(p)
    assume(rI is not None)
    assert rI > 0
    q = {**p, "r_I": rI}
    q["delta"] = recipes.hepc_delta_for_r0(q)
    assume(q["delta"] is not None and m.is_admissible(q))
    pair = bc.null_pair(m, q)
    assert abs(bc.coeff_a(m, q, pair)) <= 1e-8 * bc.a_scale(m, q, pair)


@given(seeds)
def test_hepc_rI_absent_below_rho_min(seed):
    m = get_model("hepc3d")
    p = sample_params(m, np.random.default_rng(seed))
    rho_min = recipes.hepc_rho_min(p)
    assume(rho_min > 0)
    assert recipes.hepc_rI_for_a0({**p, "rho": 0.5 * rho_min}) is None


def test_brauer_backward_test_examples():
    base = dict(mu=0.1, theta=0.1, gamma=10.0, phi=10.0)
    assert recipes.brauer_backward_test({**base, "sigma": 0.0}) == pytest.approx((0.1 + 0.1) ** 2)
    assert recipes.brauer_backward_test({**base, "sigma": 1.0}) == pytest.approx((10.0 + 0.2) ** 2)
    assert recipes.brauer_backward_test({**base, "sigma": 0.1}) == pytest.approx(-7.65)


def test_brauer_backward_test_agrees_with_a():
    m = get_model("brauer3d")
    p = recipes.brauer_threshold_point({**m.defaults})
    assert recipes.brauer_backward_test(p) < 0
    assert bc.coeff_a(m, p) > 0


def test_brauer_threshold_point_gives_r0_one():
    for mid in ("brauer2d", "brauer3d"):
        m = get_model(mid)
        p = recipes.brauer_threshold_point(m.defaults, mid)
        assert ngm.r0(m, p).r0 == pytest.approx(1.0, rel=1e-12)


def test_martcheva_sign_expression_matches_a():
    m = get_model("martcheva5d")
    rng = np.random.default_rng(5)
    n = 0
    while n < 30:
        p = sample_params(m, rng)
        p["eta"] = recipes.martcheva_threshold_eta(p)
        pair = bc.null_pair(m, p)
        a = bc.coeff_a(m, p, pair)
        if abs(a) <= 1e-8 * bc.a_scale(m, p, pair):
            continue
        assert np.sign(recipes.martcheva_a1_sign(p)) == np.sign(a)
        n += 1


def test_martcheva_base_point():
    m = get_model("martcheva5d")
    p = recipes.theorem2_base()
    assert ngm.r0(m, p).r0 == pytest.approx(1.0, abs=1e-12)
    assert abs(recipes.martcheva_a1_sign(p)) <= 1e-12 * p["Lambda"]
    pair = bc.null_pair(m, p)
    assert abs(bc.coeff_a(m, p, pair)) <= 1e-9 * bc.a_scale(m, p, pair)


def test_martcheva_base_point_d_symmetry():
    # scaling eta and D together leaves the steady states unchanged
    m = get_model("martcheva5d")
    p = recipes.theorem2_base()
    cc = bc.center_coefficients(m, p, "eta", "D")
    assert abs(cc.e_cm) <= 1e-8 * abs(cc.e)


def test_truncated_special_values():
    m = get_model("hepc3d-truncated")
    p = recipes.truncated_continuum_params(m.defaults)
    b, c = p["b"], p["c"]
    assert p["r_I"] == pytest.approx(c * p["r_T"] / (b + c))
    assert p["delta"] == pytest.approx(b * p["rho"] * p["R_star"] / (b + c))
    assert ngm.r0(m, p).r0 == pytest.approx(1.0, rel=1e-12)
    assert recipes.truncated_unique_root(p) == "continuum"


def test_continuum_states_are_steady():
    m = get_model("hepc3d-truncated")
    p = m.validate(recipes.truncated_continuum_params(m.defaults))
    for X in (0.1, 0.5, 0.9):
        x = recipes.truncated_continuum_state(p, X)
        assert x[0] / (x[0] + x[1]) == pytest.approx(X)
        assert np.max(np.abs(m.rhs(x, m._full(p)))) <= 1e-10 * (1 + np.max(np.abs(x)))


def test_continuum_report_clauses():
    m = get_model("hepc3d-truncated")
    rep = recipes.truncated_continuum_verify(m.defaults)
    by_name = {c.name: c for c in rep.checks}
    assert by_name["continuum residual"].passed
    assert by_name["c = 0"].passed
    assert rep.derived["c_split_k2_relerr"] <= 1e-8


@given(seeds)
def test_truncated_sign_table_property(seed):
    m = get_model("hepc3d-truncated")
    p = sample_params(m, np.random.default_rng(seed))
    A, B = recipes.truncated_AB(p)
    cls = recipes.truncated_unique_root(p)
    if A * B < 0:
        assert cls == "none"
    elif A * B > 0:
        assert cls == "unique-positive"
        X = B / A
        x = recipes.truncated_state_from_X(p, X)
        if np.all(x > 0):
            assert np.max(np.abs(m.rhs(x, m._full(m.validate(p))))) <= 1e-9 * (1 + np.max(np.abs(x)))


def test_theorem3_recipe_passes():
    rep = recipes.theorem3_construct()
    assert rep.passed, rep.summary()


def test_theorem4_recipe_passes():
    rep = recipes.theorem4_construct()
    assert rep.passed, rep.summary()
    assert rep.derived["fold"]["refined"] == "moore"


def test_sign_table_recipe_passes():
    rep = recipes.truncated_sign_table_check()
    assert rep.passed, rep.summary()


def test_brauer_recipe_small():
    rep = recipes.brauer_two_method(n=100, n_zero=5)
    assert rep.passed, rep.summary()


def test_report_json_roundtrip():
    rep = recipes.truncated_continuum_verify(get_model("hepc3d-truncated").defaults)
    d = json.loads(rep.to_json())
    assert d["schema_version"] == recipes.REPORT_SCHEMA_VERSION
    assert d["recipe"] == "continuum"
    assert d["passed"] is False
    assert {c["name"] for c in d["checks"]} >= {"continuum residual", "c = 0"}
    assert rep.summary().startswith("continuum: FAIL")
    assert "[ok] c = 0" in rep.summary()


def test_sweep_rows():
    rows = recipes.sweep_c_sign(n=5, seed=1)
    assert 0 < len(rows) <= 5
    for row in rows:
        assert {"c", "e"} <= set(row)
