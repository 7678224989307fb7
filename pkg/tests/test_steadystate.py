import numpy as np
import pytest
from hypothesis import given, strategies as st

from epibif import ngm, recipes, steadystate
from epibif.models import ModelError, get_model, sample_params

PARITY = ["brauer2d", "brauer3d", "martcheva5d", "hepc3d"]


def _match(states, targets, rtol=1e-6):
    """Every state has exactly one target within tolerance and vice versa."""
    if len(states) != len(targets):
        return False
    used = set()
    for x in states:
        hits = [i for i, t in enumerate(targets)
                if i not in used and np.max(np.abs(x - t)) <= rtol * (1.0 + np.max(np.abs(t)))]
        if not hits:
            return False
        used.add(hits[0])
    return True


@pytest.mark.parametrize("model_id", PARITY)
def test_enumeration_matches_reduction(model_id):
    m = get_model(model_id)
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(60):
        p = m.validate(sample_params(m, rng))
        audit = steadystate.parity_audit(m, p, validated=True)
        if audit.abstained:
            continue
        red = steadystate.reduction_for(m, p, validated=True)
        from_red = [x for x in red.states() if np.all(x[list(m.infected)] > 0)]
        found = [s.x for s in steadystate.enumerate(m, p, validated=True) if s.is_positive]
        assert _match(found, from_red), (p, found, from_red)
        checked += 1
    assert checked >= 40


@pytest.mark.parametrize("model_id", PARITY)
def test_parity_against_r0(model_id):
    m = get_model(model_id)
    rng = np.random.default_rng(99)
    for _ in range(50):
        audit = steadystate.parity_audit(m, sample_params(m, rng))
        assert audit.abstained or audit.parity_ok


@given(st.integers(min_value=0, max_value=2 ** 31))
def test_brauer_constant_term_tracks_r0(seed):
    m = get_model("brauer2d")
    p = m.validate(sample_params(m, np.random.default_rng(seed)))
    red = steadystate.brauer_quadratic(p)
    r0 = ngm.r0(m, p).r0
    ref = (p["mu"] + p["theta"] + p["phi"]) * (p["mu"] + p["gamma"]) * (1.0 - r0)
    assert red.coeffs[2] == pytest.approx(ref, rel=1e-9, abs=1e-12 * red.magnitude)


@given(st.integers(min_value=0, max_value=2 ** 31))
def test_reduction_roots_are_steady_states(seed):
    m = get_model("hepc3d")
    p = m.validate(sample_params(m, np.random.default_rng(seed)))
    red = steadystate.reduction_for(m, p, validated=True)
    full = m._full(p)
    for x in red.states():
        scale = 1.0 + np.max(np.abs(x))
        assert np.max(np.abs(m.rhs(x, full))) <= 1e-7 * scale


def test_hepc_cubic_positive_at_zero():
    m = get_model("hepc3d")
    p = m.validate(m.defaults)
    red = steadystate.hepc_X_reduction(p)
    assert red(0.0) == pytest.approx(p["s"] * p["r_I"] ** 2 * p["c"] ** 2, rel=1e-12)


def test_dfe_always_listed_first_and_stable_below_threshold():
    m = get_model("hepc3d")
    p = m.validate(m.defaults)
    assert ngm.r0(m, p).r0 < 1
    states = steadystate.enumerate(m, p)
    assert np.allclose(states[0].x, m.dfe(p))
    assert states[0].positivity == "boundary"
    assert states[0].stability == "stable"


def test_dfe_unstable_above_threshold():
    m = get_model("brauer3d")
    p = m.validate({**m.defaults, "beta": 800.0})
    dfe = steadystate.classify_state(m, m.dfe(p), p)
    assert dfe.stability == "unstable"


def test_backward_region_has_two_positive_states():
    m = get_model("brauer3d")
    p = recipes.brauer_threshold_point(m.defaults)
    p["beta"] *= 0.99
    states = steadystate.enumerate(m, p)
    pos = [s for s in states if s.is_positive]
    assert len(pos) == 2
    assert sorted(s.stability for s in pos) == ["stable", "unstable"]


def test_continuum_reduction_vanishes():
    m = get_model("hepc3d-truncated")
    p = m.validate(recipes.truncated_continuum_params(m.defaults))
    red = steadystate.reduction_for(m, p, validated=True)
    assert red.is_continuum
    with pytest.raises(ModelError, match="continuum"):
        red.roots()


def test_truncated_reduction_off_continuum_is_linear():
    m = get_model("hepc3d-truncated")
    p = m.validate({**m.defaults, "rho": 2.0})
    red = steadystate.reduction_for(m, p, validated=True)
    assert len(red.coeffs) == 3
    A, B = recipes.truncated_AB(p)
    roots = red.roots(real_only=True)
    assert any(abs(r - B / A) <= 1e-9 * (1 + abs(B / A)) for r in roots)


def test_newton_polish_reduces_residual():
    m = get_model("brauer3d")
    p = m.validate({**m.defaults, "beta": 800.0})
    pos = [s for s in steadystate.enumerate(m, p) if s.is_positive][0]
    x = steadystate.newton_polish(m, pos.x * (1 + 1e-4), p)
    assert np.max(np.abs(m.rhs(x, m._full(p)))) <= 1e-12 * (1 + np.max(np.abs(x)))


def test_state_to_dict_names():
    m = get_model("brauer2d")
    p = m.validate(m.defaults)
    d = steadystate.enumerate(m, p)[0].to_dict(m.state_names)
    assert set(d["state"]) == {"I", "V"}
    assert d["positivity"] in {"positive", "boundary", "infeasible"}


def test_parity_audit_rejects_unknown_model():
    with pytest.raises(ModelError):
        steadystate.parity_audit("hepc3d-truncated", get_model("hepc3d-truncated").defaults)
