import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from epibif import models
from epibif.models import DomainError, InadmissibleParams, ModelError, ParamError, get_model, sample_params
from epibif.spec_loader import compile_expression, load_model, model_from_dict

MODEL_IDS = models.available_models()


@pytest.mark.parametrize("model_id", MODEL_IDS)
def test_defaults_are_admissible_and_dfe_is_steady(model_id):
    m = get_model(model_id)
    p = m.validate(m.defaults)
    x0 = m.dfe(p)
    assert np.all(x0 >= 0)
    assert np.max(np.abs(m.rhs(x0, p))) <= 1e-12 * (1 + np.max(np.abs(x0)))
    assert np.all(x0[list(m.infected)] == 0)


@pytest.mark.parametrize("model_id", MODEL_IDS)
@given(seed=st.integers(0, 2**32 - 1))
def test_dfe_is_steady_on_random_draws(model_id, seed):
    m = get_model(model_id)
    p = m.validate(sample_params(m, np.random.default_rng(seed)))
    x0 = m.dfe(p)
    assert np.max(np.abs(m.rhs(x0, p))) <= 1e-10 * (1 + np.max(np.abs(x0)))


@pytest.mark.parametrize("model_id", MODEL_IDS)
def test_rhs_is_vectorised(model_id, rng):
    m = get_model(model_id)
    p = m.validate(m.defaults)
    X = np.abs(rng.normal(size=(m.n, 4))) + 0.1
    cols = np.column_stack([m.rhs(X[:, j], p) for j in range(4)])
    np.testing.assert_allclose(m.rhs(X, p), cols, rtol=0, atol=1e-12)


@pytest.mark.parametrize("model_id", [i for i in MODEL_IDS if get_model(i).has_fv_split])
def test_fv_split_reproduces_infected_rows(model_id, rng):
    m = get_model(model_id)
    p = m.validate(m.defaults)
    x = np.abs(rng.normal(size=m.n)) + 0.1
    F, V = m.fv(x, p)
    np.testing.assert_allclose(F - V, m.rhs(x, p)[list(m.infected)], rtol=1e-12, atol=1e-12)


def test_unknown_and_missing_parameters_are_rejected():
    m = get_model("hepc3d")
    with pytest.raises(ParamError, match="unknown"):
        m.validate({**m.defaults, "zeta": 1.0})
    p = dict(m.defaults)
    p.pop("b")
    with pytest.raises(ParamError, match="missing"):
        m.validate(p)


def test_sign_rules():
    m = get_model("brauer3d")
    with pytest.raises(InadmissibleParams):
        m.validate({**m.defaults, "sigma": 1.5})
    with pytest.raises(InadmissibleParams):
        m.validate({**m.defaults, "beta": -1.0})
    assert m.is_admissible({**m.defaults, "sigma": 0.0})


def test_truncated_model_pins_s_and_d():
    m = get_model("hepc3d-truncated")
    assert "s" not in m.param_names and "d" not in m.param_names
    assert m.validate({**m.defaults, "s": 0.0})["s"] == 0.0
    with pytest.raises(InadmissibleParams):
        m.validate({**m.defaults, "s": 1.0})


def test_hepc_rejects_singular_states():
    m = get_model("hepc3d")
    p = m.validate(m.defaults)
    with pytest.raises(DomainError):
        m.rhs(np.array([0.0, 0.0, 1.0]), p)


def test_unknown_model():
    with pytest.raises(ModelError, match="unknown model"):
        get_model("sir9000")


@given(seed=st.integers(0, 2**32 - 1))
def test_hepc_a11_exceeds_a12_when_s_positive(seed):
    m = get_model("hepc3d")
    p = sample_params(m, np.random.default_rng(seed))
    _, a11, a12, _ = models.hepc_dfe_quantities(p)
    assert a11 - a12 > 0


def test_hepc_a11_minus_a12_on_500_draws():
    m = get_model("hepc3d")
    rng = np.random.default_rng(0)
    for _ in range(500):
        _, a11, a12, _ = models.hepc_dfe_quantities(sample_params(m, rng))
        assert a11 > a12


def test_brauer_dfe_sums_to_k():
    m = get_model("brauer3d")
    p = m.validate(m.defaults)
    assert np.sum(m.dfe(p)) == pytest.approx(p["Lambda"] / p["mu"], rel=1e-14)


# -- declarative model files ------------------------------------------------

SIS = {
    "id": "sis",
    "states": ["S", "I"],
    "params": ["beta", "gamma", "mu", "N"],
    "infected": ["I"],
    "rhs": {"S": "mu*N - beta*S*I/N - mu*S + gamma*I", "I": "beta*S*I/N - (gamma + mu)*I"},
    "dfe": {"S": "N", "I": "0"},
    "new_infections": {"I": "beta*S*I/N"},
    "transitions": {"I": "(gamma + mu)*I"},
    "defaults": {"beta": 0.3, "gamma": 0.1, "mu": 0.01, "N": 1.0},
}


def test_model_file_roundtrip(tmp_path):
    path = tmp_path / "sis.json"
    path.write_text(json.dumps(SIS))
    m = load_model(path)
    p = m.validate(m.defaults)
    assert m.state_names == ("S", "I")
    np.testing.assert_allclose(m.dfe(p), [1.0, 0.0])
    x = np.array([0.6, 0.4])
    expected = [0.01 - 0.3 * 0.24 - 0.006 + 0.04, 0.3 * 0.24 - 0.11 * 0.4]
    np.testing.assert_allclose(m.rhs(x, p), expected, rtol=1e-14)
    assert get_model(str(path)).id == "sis"


@pytest.mark.parametrize("text", ["__import__('os')", "S.real", "lambda: 1", "S if I else 0", "open(S)", "x[0]"])
def test_expression_sandbox_rejects(text):
    with pytest.raises(ModelError):
        compile_expression(text, {"S", "I"})


def test_expression_unknown_name():
    with pytest.raises(ModelError, match="unknown"):
        compile_expression("S + Q", {"S"})


def test_expression_pow_and_constants():
    f = compile_expression("pow(S, 2) + -I ** 2 / half", {"S", "I", "half"})
    assert f({"S": 3.0, "I": 2.0, "half": 0.5}) == pytest.approx(9.0 - 8.0)


def test_model_file_structure_errors():
    bad = dict(SIS, infected=["X"])
    with pytest.raises(ModelError, match="not a state"):
        model_from_dict(bad)
    bad = dict(SIS, rhs={"S": "0"})
    with pytest.raises(ModelError, match="one expression per state"):
        model_from_dict(bad)
    bad = {k: v for k, v in SIS.items() if k != "dfe"}
    with pytest.raises(ModelError, match="dfe"):
        model_from_dict(bad)
