import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from epibif import bifcoeffs as bc
from epibif import recipes
from epibif.bifcoeffs import BifurcationError
from epibif.models import get_model, hepc_dfe_quantities

# frozen from an independent run at the hep-C search point (library normalisation)
E_FROZEN = 1683.878317
E_CM_FROZEN = 1673.194088


@pytest.fixture(scope="module")
def hepc_threshold():
    m = get_model("hepc3d")
    p = dict(m.defaults)
    p["delta"] = recipes.hepc_delta_for_r0(p)
    return m, p, bc.null_pair(m, p)


@pytest.fixture(scope="module")
def hepc_a0():
    m = get_model("hepc3d")
    q = recipes.theorem4_base()
    return m, q, bc.center_coefficients(m, q, "rho", "r_I")


def _brauer_a0_points(n, seed=1):
    m = get_model("brauer3d")
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        p = recipes._sample(m, rng)
        g = recipes._brauer_a_zero_gamma(p, "brauer3d")
        if g is None:
            continue
        q = recipes.brauer_threshold_point({**p, "gamma": g})
        if m.is_admissible(q):
            out.append(q)
    return m, out


@pytest.mark.parametrize("model_id", ["brauer2d", "brauer3d", "hepc3d"])
def test_null_pair_residuals_and_normalisation(model_id):
    m = get_model(model_id)
    p = dict(m.defaults)
    if model_id.startswith("brauer"):
        p = recipes.brauer_threshold_point(p, model_id)
    else:
        p["delta"] = recipes.hepc_delta_for_r0(p)
    pair = bc.null_pair(m, p)
    rw, rv = pair.residuals
    scale = np.abs(pair.A).sum()
    assert rw <= 1e-8 * scale and rv <= 1e-8 * scale
    assert pair.v @ pair.w == pytest.approx(1.0, rel=1e-12)
    assert np.max(pair.w[list(m.infected)]) == pytest.approx(1.0)


def test_null_pair_away_from_threshold_raises():
    m = get_model("hepc3d")
    with pytest.raises(BifurcationError, match="zero eigenvalue absent"):
        bc.null_pair(m, m.defaults)


def test_hepc_a_matches_closed_form(hepc_threshold):
    m, p, pair = hepc_threshold
    p0, a11, a12, _ = hepc_dfe_quantities(p)
    b, c, k = p["b"], p["c"], p["rho"] * p["R_star"]
    ref = a11 * (b + c) * ((b + c) * ((b + c) * (a12 - a11) + b * k) * p["r_I"] / p["T_max"]
                           - b * k * c * a11 / p0)
    # closed form uses v_I = b + c and w_I = a11 (b + c)
    lam = pair.w[1] / (a11 * (b + c))
    mu_v = pair.v[1] / (b + c)
    assert bc.coeff_a(m, p, pair) == pytest.approx(ref * lam ** 2 * mu_v, rel=1e-9)


def test_hepc_b_matches_closed_form(hepc_threshold):
    m, p, pair = hepc_threshold
    _, a11, _, _ = hepc_dfe_quantities(p)
    b, c = p["b"], p["c"]
    lam = pair.w[1] / (a11 * (b + c))
    mu_v = pair.v[1] / (b + c)
    ref = b * p["R_star"] * a11 * (b + c) * lam * mu_v
    assert bc.coeff_b(m, p, "rho", pair) == pytest.approx(ref, rel=1e-9)


def test_hepc_left_vector_has_no_T_component(hepc_threshold):
    _, p, pair = hepc_threshold
    assert abs(pair.v[0]) <= 1e-12 * np.max(np.abs(pair.v))
    assert pair.v[1] / pair.v[2] == pytest.approx((p["b"] + p["c"]) / p["b"], rel=1e-10)


@given(st.floats(min_value=-3.0, max_value=3.0).filter(lambda t: abs(t) > 0.05))
def test_scaling_law(lam):
    m, p, pair = _hepc_a0_cached()
    base = bc.center_coefficients(m, p, "rho", "r_I", pair=pair, corrections=False)
    sc = bc.center_coefficients(m, p, "rho", "r_I", pair=pair.scaled(lam), corrections=False)
    assert sc.a == pytest.approx(lam * base.a, abs=1e-12)
    assert sc.b == pytest.approx(base.b, rel=1e-9)
    assert sc.c == pytest.approx(lam ** 2 * base.c, rel=1e-6)
    assert sc.d == pytest.approx(lam * base.d, rel=1e-9)
    assert sc.e == pytest.approx(base.e / lam, rel=1e-6)


_CACHE = {}


def _hepc_a0_cached():
    if not _CACHE:
        m = get_model("hepc3d")
        q = m.validate(recipes.theorem4_base())
        _CACHE["v"] = (m, q, bc.null_pair(m, q))
    return _CACHE["v"]


def test_hepc_a0_point_values(hepc_a0):
    _, _, cc = hepc_a0
    assert cc.a_is_zero
    assert cc.c < 0
    assert cc.fuualpha1 == 0.0 or abs(cc.fuualpha1) <= 1e-8 * abs(cc.d)
    assert cc.sufficient
    assert cc.e == pytest.approx(E_FROZEN, rel=1e-5)
    assert cc.e_cm == pytest.approx(E_CM_FROZEN, rel=1e-5)


def test_hepc_a0_classification(hepc_a0):
    _, _, cc = hepc_a0
    cls = bc.classify(cc)
    assert cls.label == "unfolded-backward"
    assert "two-states-below-threshold" in cls


def test_c_invariant_under_kernel_shift(hepc_a0):
    m, q, cc = hepc_a0
    terms = bc.coeff_c(m, q, cc.pair, full_output=True)
    v, w = cc.pair.v, cc.pair.w
    from epibif import numdiff
    x0 = cc.pair.x0
    for t in (-2.0, 0.5, 7.0):
        c2 = -float(v @ numdiff.d2f(m, x0, q, terms.z + t * w, w))
        assert abs(c2 - terms.c2) <= 1e-10 * max(abs(terms.c2), 1.0) + terms.sensitivity * abs(t) * 1e-6


def test_coeff_c_refuses_nonzero_a(hepc_threshold):
    m, p, pair = hepc_threshold
    with pytest.raises(BifurcationError, match="a != 0"):
        bc.coeff_c(m, p, pair)


def test_coefficients_skip_c_when_a_nonzero(hepc_threshold):
    m, p, pair = hepc_threshold
    cc = bc.center_coefficients(m, p, "rho", "r_I", pair=pair)
    assert cc.c is None and cc.e is None
    assert bc.classify(cc).label == "forward"


def test_alpha1_moving_dfe_rejected():
    m = get_model("brauer3d")
    p = recipes.brauer_threshold_point(m.defaults)
    with pytest.raises(BifurcationError, match="DFE depends"):
        bc.coeff_b(m, p, "Lambda")


def test_unknown_alpha_rejected():
    m = get_model("brauer3d")
    p = recipes.brauer_threshold_point(m.defaults)
    with pytest.raises(BifurcationError, match="unknown parameter"):
        bc.coeff_b(m, p, "nope")
    with pytest.raises(BifurcationError, match="unknown parameter"):
        bc.coeff_d(m, p, "nope")


def test_classify_requires_positive_b(hepc_a0):
    _, _, cc = hepc_a0
    with pytest.raises(BifurcationError, match="hypothesis violated"):
        bc.classify(dataclasses.replace(cc, b=-cc.b))


def test_classify_degenerate_when_e_zero(hepc_a0):
    _, _, cc = hepc_a0
    assert bc.classify(dataclasses.replace(cc, e=0.0)).label == "degenerate"


def test_classify_two_states_above_threshold(hepc_a0):
    _, _, cc = hepc_a0
    cls = bc.classify(dataclasses.replace(cc, c=-cc.c))
    assert cls.label == "unfolded-forward"
    assert "two-states-above-threshold" in cls


def test_brauer_defaults_backward():
    m = get_model("brauer3d")
    p = recipes.brauer_threshold_point(m.defaults)
    cc = bc.center_coefficients(m, p, "beta")
    assert cc.a > 0 and cc.b > 0
    assert bc.classify(cc).label == "backward"


def test_brauer_useless_vaccine_forward():
    m = get_model("brauer3d")
    p = recipes.brauer_threshold_point({**m.defaults, "sigma": 1.0})
    cc = bc.center_coefficients(m, p, "beta")
    assert bc.classify(cc).label == "forward"


def test_brauer_c_closed_form_at_a_zero():
    m, pts = _brauer_a0_points(4)
    for q in pts:
        cc = bc.center_coefficients(m, q, "beta", "sigma")
        ref = -2.0 * q["beta"] ** 2 * q["sigma"] / (q["phi"] + q["mu"] + q["theta"])
        assert cc.c == pytest.approx(ref, rel=1e-6)
        # w = (E, 1, -1 - E) and v = (0, 1, 0)
        E = cc.pair.w[0]
        assert cc.pair.w[2] == pytest.approx(-1.0 - E, rel=1e-9)
        assert np.allclose(cc.pair.v, [0.0, 1.0, 0.0], atol=1e-9)


def test_brauer_e_negative_with_sigma():
    m, pts = _brauer_a0_points(3, seed=2)
    for q in pts:
        cc = bc.center_coefficients(m, q, "beta", "sigma")
        assert cc.d < 0 and cc.c < 0 and cc.b > 0
        assert abs(cc.fuualpha1) <= 1e-8 * abs(cc.d)
        assert cc.e < 0


def test_martcheva_left_vector_shape():
    m = get_model("martcheva5d")
    p = dict(m.defaults)
    p["eta"] = recipes.martcheva_threshold_eta(p)
    pair = bc.null_pair(m, p)
    ref = np.array([0.0, 0.0, p["eta"] / (p["mu"] + p["gamma"]), 0.0, 1.0])
    v = pair.v / pair.v[4]
    assert np.allclose(v, ref, atol=1e-9, rtol=1e-9)


def test_to_dict_fields(hepc_a0):
    _, _, cc = hepc_a0
    d = cc.to_dict()
    for key in ("a", "b", "c", "d", "e", "e_cm", "a_is_zero", "e_is_nonzero", "v", "w"):
        assert key in d
    assert d["a_is_zero"] is True
