"""Parameterized epidemic ODE systems.

A :class:`ModelSystem` bundles a vectorised right-hand side, the disease-free
equilibrium, the designated infected variables and (optionally) the split of
the infected equations into new-infection and transition terms.

All right-hand sides accept a state array of shape ``(n,)`` or ``(n, k)`` and a
parameter mapping whose values are floats or arrays broadcastable against
``x[i]``.  That lets the differentiation and Newton code evaluate whole stencils
in a single call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "ModelError",
    "ParamError",
    "InadmissibleParams",
    "DomainError",
    "ModelSystem",
    "evaluate_rhs",
    "hepc_dfe_quantities",
    "brauer2d",
    "brauer3d",
    "martcheva5d",
    "hepc3d",
    "get_model",
    "available_models",
    "sample_params",
]

# hepc3d refuses states with T + I at or below this value
INCIDENCE_FLOOR = 1e-300


class ModelError(Exception):
    """Base class for model-level errors."""


class ParamError(ModelError, KeyError):
    """Missing or unknown parameter name."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class InadmissibleParams(ModelError, ValueError):
    """Parameter values violate the model's admissibility constraints."""


class DomainError(ModelError, ValueError):
    """A state lies outside the domain where the right-hand side is defined."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


RhsFn = Callable[[np.ndarray, Mapping], np.ndarray]


@dataclass(frozen=True)
class ModelSystem:
    """A parameterized vector field ``x' = f(x, p)`` with a disease-free equilibrium.

    Parameters
    ----------
    id : str
        Identifier used by :func:`get_model` and the CLI.
    state_names, param_names : tuple of str
        Ordered names; ``param_names`` excludes parameters pinned in ``fixed``.
    infected : tuple of int
        Indices of the infected variables.
    rhs_fn : callable
        Raw vectorised right-hand side ``(x, p) -> dx``.
    dfe_fn : callable
        ``p -> x0``.
    fv_fn : callable, optional
        ``(x, p) -> (F, V)``, each of length ``m`` over the infected variables,
        with ``F - V`` equal to the infected rows of ``rhs_fn``.
    domain_fn : callable, optional
        ``(x, p) -> bool mask`` over columns; ``False`` marks points where the
        right-hand side is singular.
    nonnegative, unit_interval : frozenset of str
        Parameters allowed to be zero, and parameters restricted to ``[0, 1]``.
        Every other parameter must be strictly positive.
    fixed : mapping
        Parameters pinned to constant values (e.g. the truncated hep-C system).
    defaults : mapping
        An admissible parameter set.
    """

    id: str
    state_names: tuple
    param_names: tuple
    infected: tuple
    rhs_fn: RhsFn
    dfe_fn: Callable[[Mapping], np.ndarray]
    fv_fn: Callable | None = None
    domain_fn: Callable | None = None
    nonnegative: frozenset = frozenset()
    unit_interval: frozenset = frozenset()
    fixed: Mapping = field(default_factory=dict)
    defaults: Mapping = field(default_factory=dict)
    extra_checks: tuple = ()
    sampler: Callable | None = None
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "fixed", MappingProxyType(dict(self.fixed)))
        object.__setattr__(self, "defaults", MappingProxyType(dict(self.defaults)))

    @property
    def n(self) -> int:
        return len(self.state_names)

    @property
    def m(self) -> int:
        return len(self.infected)

    @property
    def has_fv_split(self) -> bool:
        return self.fv_fn is not None

    def state_index(self, name: str) -> int:
        return self.state_names.index(name)

    # -- parameters ---------------------------------------------------------

    def validate(self, params: Mapping) -> dict:
        """Return a complete float parameter dict, or raise.

        Pinned parameters may be passed explicitly only with their pinned value.
        """
        params = dict(params)
        for name, value in self.fixed.items():
            if name in params and float(params.pop(name)) != value:
                raise InadmissibleParams(f"{self.id}: parameter {name!r} is fixed at {value}")
        unknown = sorted(set(params) - set(self.param_names))
        if unknown:
            raise ParamError(f"{self.id}: unknown parameter(s) {', '.join(unknown)}")
        missing = [p for p in self.param_names if p not in params]
        if missing:
            raise ParamError(f"{self.id}: missing parameter(s) {', '.join(missing)}")
        out = {}
        for name in self.param_names:
            value = float(params[name])
            if not math.isfinite(value):
                raise InadmissibleParams(f"{self.id}: parameter {name!r} is not finite")
            if name in self.unit_interval:
                ok = 0.0 <= value <= 1.0
                rule = "in [0, 1]"
            elif name in self.nonnegative:
                ok = value >= 0.0
                rule = ">= 0"
            else:
                ok = value > 0.0
                rule = "> 0"
            if not ok:
                raise InadmissibleParams(f"{self.id}: parameter {name!r}={value} must be {rule}")
            out[name] = value
        out.update(self.fixed)
        for message, check in self.extra_checks:
            if not check(out):
                raise InadmissibleParams(f"{self.id}: {message}")
        return out

    def is_admissible(self, params: Mapping) -> bool:
        try:
            self.validate(params)
        except ModelError:
            return False
        return True

    def with_params(self, params: Mapping, **updates) -> dict:
        """Copy of ``params`` with ``updates`` applied (names restricted to the model)."""
        out = dict(params)
        for key, value in updates.items():
            if key not in self.param_names and key not in self.fixed:
                raise ParamError(f"{self.id}: unknown parameter {key!r}")
            out[key] = value
        return out

    # -- evaluation ---------------------------------------------------------

    def _full(self, params: Mapping) -> Mapping:
        if self.fixed and any(k not in params for k in self.fixed):
            merged = dict(params)
            merged.update(self.fixed)
            return merged
        return params

    def in_domain(self, x: np.ndarray, params: Mapping) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.domain_fn is None:
            return np.ones(x.shape[1:], dtype=bool)
        return np.asarray(self.domain_fn(x, self._full(params)), dtype=bool)

    def rhs(self, x, params: Mapping) -> np.ndarray:
        """Evaluate ``f(x, p)``; ``params`` is assumed already validated."""
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.n:
            raise ValueError(f"{self.id}: state has dimension {x.shape[0]}, expected {self.n}")
        full = self._full(params)
        self._check_domain(x, full)
        return np.asarray(self.rhs_fn(x, full), dtype=float)

    def _check_domain(self, x, full):
        if self.domain_fn is None:
            return
        ok = np.asarray(self.domain_fn(x, full), dtype=bool)
        if not np.all(ok):
            bad = x if x.ndim == 1 else x[:, np.flatnonzero(~ok)[0]]
            raise DomainError(f"{self.id}: right-hand side singular at x={bad.tolist()}", bad)

    def dfe(self, params: Mapping) -> np.ndarray:
        return np.asarray(self.dfe_fn(self._full(params)), dtype=float)

    def fv(self, x, params: Mapping):
        if self.fv_fn is None:
            raise ModelError(f"{self.id}: no new-infection/transition split defined")
        x = np.asarray(x, dtype=float)
        full = self._full(params)
        self._check_domain(x, full)
        F, V = self.fv_fn(x, full)
        return np.asarray(F, dtype=float), np.asarray(V, dtype=float)


def evaluate_rhs(model: ModelSystem, x, params: Mapping) -> np.ndarray:
    """Validate ``params`` and ``x`` and return ``f(x, params)``."""
    p = model.validate(params)
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != model.n:
        raise ValueError(f"{model.id}: expected a state vector of length {model.n}, got shape {x.shape}")
    return model.rhs(x, p)


# ---------------------------------------------------------------------------
# Vaccination model
# ---------------------------------------------------------------------------

def _brauer2d_rhs(x, p):
    I, V = x[0], x[1]
    beta, K, sigma = p["beta"], p["K"], p["sigma"]
    dI = beta * (K - I - (1.0 - sigma) * V) * I - (p["mu"] + p["gamma"]) * I
    dV = p["phi"] * (K - I) - sigma * beta * V * I - (p["mu"] + p["theta"] + p["phi"]) * V
    return np.stack([dI, dV])


def _brauer2d_dfe(p):
    return np.array([0.0, p["phi"] * p["K"] / (p["mu"] + p["theta"] + p["phi"])])


def _brauer2d_fv(x, p):
    I, V = x[0], x[1]
    F = p["beta"] * (p["K"] - I - (1.0 - p["sigma"]) * V) * I
    return np.stack([F]), np.stack([(p["mu"] + p["gamma"]) * I])


def _brauer3d_rhs(x, p):
    S, I, V = x[0], x[1], x[2]
    beta, sigma, mu = p["beta"], p["sigma"], p["mu"]
    dS = p["Lambda"] - beta * S * I - (mu + p["phi"]) * S + p["gamma"] * I + p["theta"] * V
    dI = beta * S * I + sigma * beta * V * I - (mu + p["gamma"]) * I
    dV = p["phi"] * S - sigma * beta * V * I - (mu + p["theta"]) * V
    return np.stack([dS, dI, dV])


def _brauer3d_dfe(p):
    mu, phi, theta, Lam = p["mu"], p["phi"], p["theta"], p["Lambda"]
    tot = mu * (mu + phi + theta)
    return np.array([(mu + theta) * Lam / tot, 0.0, phi * Lam / tot])


def _brauer3d_fv(x, p):
    S, I, V = x[0], x[1], x[2]
    F = p["beta"] * (S + p["sigma"] * V) * I
    return np.stack([F]), np.stack([(p["mu"] + p["gamma"]) * I])


def _sample_brauer_common(rng):
    return {
        "mu": 10 ** rng.uniform(-2, 0),
        "gamma": 10 ** rng.uniform(-1, 1),
        "theta": 10 ** rng.uniform(-2, 0),
        "phi": 10 ** rng.uniform(-1, 1),
        "sigma": rng.uniform(0.0, 1.0),
        "beta": 10 ** rng.uniform(-1, 1),
    }


def _sample_brauer2d(rng):
    p = _sample_brauer_common(rng)
    p["K"] = 10 ** rng.uniform(-1, 1)
    return p


def _sample_brauer3d(rng):
    p = _sample_brauer_common(rng)
    p["Lambda"] = p["mu"] * 10 ** rng.uniform(-1, 1)
    return p


def brauer2d() -> ModelSystem:
    """Reduced two-dimensional vaccination model in ``(I, V)``."""
    return ModelSystem(
        id="brauer2d",
        state_names=("I", "V"),
        param_names=("beta", "K", "mu", "gamma", "sigma", "phi", "theta"),
        infected=(0,),
        rhs_fn=_brauer2d_rhs,
        dfe_fn=_brauer2d_dfe,
        fv_fn=_brauer2d_fv,
        unit_interval=frozenset({"sigma"}),
        defaults={"beta": 80.0, "K": 1.0, "mu": 0.1, "gamma": 10.0, "sigma": 0.1, "phi": 10.0, "theta": 0.1},
        sampler=_sample_brauer2d,
        description="I' = beta[K-I-(1-sigma)V]I-(mu+gamma)I, V' = phi(K-I)-sigma beta VI-(mu+theta+phi)V",
    )


def brauer3d() -> ModelSystem:
    """Full vaccination model in ``(S, I, V)``; ``K = Lambda/mu`` relates it to :func:`brauer2d`."""
    return ModelSystem(
        id="brauer3d",
        state_names=("S", "I", "V"),
        param_names=("Lambda", "beta", "mu", "gamma", "sigma", "phi", "theta"),
        infected=(1,),
        rhs_fn=_brauer3d_rhs,
        dfe_fn=_brauer3d_dfe,
        fv_fn=_brauer3d_fv,
        unit_interval=frozenset({"sigma"}),
        defaults={"Lambda": 0.1, "beta": 80.0, "mu": 0.1, "gamma": 10.0, "sigma": 0.1, "phi": 10.0, "theta": 0.1},
        sampler=_sample_brauer3d,
        description="S' = Lambda-beta SI-(mu+phi)S+gamma I+theta V, I' = beta SI+sigma beta VI-(mu+gamma)I, ...",
    )


# ---------------------------------------------------------------------------
# Cholera model with vaccination
# ---------------------------------------------------------------------------

def _martcheva_rhs(x, p):
    S, V, I, R, B = x
    beta, sigma, mu = p["beta"], p["sigma"], p["mu"]
    sat = B / (B + p["D"])
    dS = p["Lambda"] - beta * S * sat - (mu + p["psi"]) * S + p["w"] * R
    dV = p["psi"] * S - sigma * beta * V * sat - mu * V
    dI = beta * S * sat + sigma * beta * V * sat - (mu + p["gamma"]) * I
    dR = p["gamma"] * I - (mu + p["w"]) * R
    dB = p["eta"] * I - p["delta"] * B
    return np.stack([dS, dV, dI, dR, dB])


def _martcheva_dfe(p):
    mu, psi, Lam = p["mu"], p["psi"], p["Lambda"]
    return np.array([Lam / (mu + psi), Lam * psi / (mu * (mu + psi)), 0.0, 0.0, 0.0])


def _martcheva_fv(x, p):
    S, V, I, R, B = x
    sat = B / (B + p["D"])
    F_I = p["beta"] * (S + p["sigma"] * V) * sat
    F = np.stack([F_I, np.zeros_like(F_I)])
    Vt = np.stack([(p["mu"] + p["gamma"]) * I, p["delta"] * B - p["eta"] * I])
    return F, Vt


def _martcheva_domain(x, p):
    return x[4] + p["D"] > 0


def _sample_martcheva(rng):
    return {
        "Lambda": 10 ** rng.uniform(-1, 2),
        "beta": 10 ** rng.uniform(-1, 1),
        "D": 10 ** rng.uniform(-1, 2),
        "mu": 10 ** rng.uniform(-2, 0),
        "psi": 10 ** rng.uniform(-2, 0),
        "w": 10 ** rng.uniform(-2, 0),
        "sigma": rng.uniform(0.0, 1.0),
        "gamma": 10 ** rng.uniform(-1, 1),
        "eta": 10 ** rng.uniform(-1, 1),
        "delta": 10 ** rng.uniform(-1, 1),
    }


def martcheva5d() -> ModelSystem:
    """Cholera model with vaccination in ``(S, V, I, R, B)``; infected variables ``I`` and ``B``."""
    return ModelSystem(
        id="martcheva5d",
        state_names=("S", "V", "I", "R", "B"),
        param_names=("Lambda", "beta", "D", "mu", "psi", "w", "sigma", "gamma", "eta", "delta"),
        infected=(2, 4),
        rhs_fn=_martcheva_rhs,
        dfe_fn=_martcheva_dfe,
        fv_fn=_martcheva_fv,
        domain_fn=_martcheva_domain,
        unit_interval=frozenset({"sigma"}),
        defaults={
            "Lambda": 10.0, "beta": 1.0, "D": 10.0, "mu": 0.1, "psi": 0.5, "w": 0.1,
            "sigma": 0.5, "gamma": 0.3, "eta": 1.0, "delta": 1.0,
        },
        sampler=_sample_martcheva,
        description="SVIRB cholera model with saturating incidence B/(B+D)",
    )


# ---------------------------------------------------------------------------
# In-host hepatitis C model
# ---------------------------------------------------------------------------

def hepc_dfe_quantities(params: Mapping) -> tuple[float, float, float, float]:
    """Return ``(p0, a11, a12, a22)`` for the hep-C model.

    ``p0`` is the uninfected target-cell level at the disease-free equilibrium,
    ``-a11`` and ``-a12`` are the ``T`` and ``I`` entries of the linearised
    ``T`` equation there, and ``a22`` is the linearised per-capita growth of ``I``.
    """
    s = params.get("s", 0.0)
    d = params.get("d", 0.0)
    r_T, T_max = params["r_T"], params["T_max"]
    a11 = math.sqrt((r_T - d) ** 2 + 4.0 * s * r_T / T_max)
    p0 = (r_T - d + a11) * T_max / (2.0 * r_T)
    a12 = p0 * r_T / T_max
    a22 = -(params["delta"] + params["r_I"] * (p0 / T_max - 1.0))
    return p0, a11, a12, a22


def _hepc_rhs(x, p):
    T, I, V = x
    N = T + I
    inf = p["b"] * T * V / N
    logistic = 1.0 - N / p["T_max"]
    dT = p["s"] + p["r_T"] * T * logistic - p["d"] * T - inf
    dI = p["r_I"] * I * logistic + inf - p["delta"] * I
    dV = p["rho"] * p["R_star"] * I - p["c"] * V - inf
    return np.stack([dT, dI, dV])


def _hepc_dfe(p):
    p0 = hepc_dfe_quantities(p)[0]
    return np.array([p0, 0.0, 0.0])


def _hepc_fv(x, p):
    T, I, V = x
    N = T + I
    inf = p["b"] * T * V / N
    F = np.stack([inf, np.zeros_like(inf)])
    Vt = np.stack([
        p["delta"] * I - p["r_I"] * I * (1.0 - N / p["T_max"]),
        p["c"] * V + inf - p["rho"] * p["R_star"] * I,
    ])
    return F, Vt


def _hepc_domain(x, p):
    return x[0] + x[1] > INCIDENCE_FLOOR


def _hepc_threshold_ok(p):
    p0 = hepc_dfe_quantities(p)[0]
    return p["delta"] > p["r_I"] * (1.0 - p0 / p["T_max"])


def _hepc_p0_ok(p):
    return hepc_dfe_quantities(p)[0] > 0.0


def _sample_hepc(rng, truncated=False):
    p = {
        "s": 0.0 if truncated else 10 ** rng.uniform(-1, 1),
        "r_T": 10 ** rng.uniform(-1, 0.5),
        "T_max": 10 ** rng.uniform(1, 3),
        "d": 0.0 if truncated else 10 ** rng.uniform(-2, -0.5),
        "b": 10 ** rng.uniform(-1, 0.5),
        "c": 10 ** rng.uniform(-1, 1),
        "rho": 10 ** rng.uniform(-1, 1),
        "R_star": 10 ** rng.uniform(-0.5, 0.5),
        "r_I": 10 ** rng.uniform(-1.5, 0.5),
    }
    p0 = hepc_dfe_quantities(p | {"delta": 1.0})[0]
    p["delta"] = max(p["r_I"] * (1.0 - p0 / p["T_max"]), 0.0) + 10 ** rng.uniform(-1.5, 0.5)
    if truncated:
        del p["s"], p["d"]
    return p


_HEPC_PARAMS = ("s", "r_T", "T_max", "d", "b", "c", "delta", "rho", "R_star", "r_I")


def hepc3d(truncated: bool = False) -> ModelSystem:
    """In-host hepatitis C model in ``(T, I, V)`` with standard incidence.

    With ``truncated=True`` the source ``s`` and death rate ``d`` are pinned to zero.
    """
    if truncated:
        names = tuple(n for n in _HEPC_PARAMS if n not in ("s", "d"))
        fixed = {"s": 0.0, "d": 0.0}
        defaults = {"r_T": 1.0, "T_max": 100.0, "b": 0.5, "c": 1.0, "delta": 0.5,
                    "rho": 1.0, "R_star": 1.0, "r_I": 0.5}
    else:
        names = _HEPC_PARAMS
        fixed = {}
        defaults = {"s": 1.0, "r_T": 1.0, "T_max": 100.0, "d": 0.1, "b": 0.5, "c": 1.0,
                    "delta": 0.5, "rho": 1.0, "R_star": 1.0, "r_I": 0.5}
    return ModelSystem(
        id="hepc3d-truncated" if truncated else "hepc3d",
        state_names=("T", "I", "V"),
        param_names=names,
        infected=(1, 2),
        rhs_fn=_hepc_rhs,
        dfe_fn=_hepc_dfe,
        fv_fn=_hepc_fv,
        domain_fn=_hepc_domain,
        nonnegative=frozenset({"s", "d"}),
        fixed=fixed,
        defaults=defaults,
        extra_checks=(
            ("disease-free target-cell level p0 must be positive", _hepc_p0_ok),
            ("requires delta > r_I (1 - p0/T_max)", _hepc_threshold_ok),
        ),
        sampler=lambda rng: _sample_hepc(rng, truncated),
        description="T' = s + r_T T(1-(T+I)/T_max) - dT - bTV/(T+I), ...",
    )


_CATALOG = {
    "brauer2d": brauer2d,
    "brauer3d": brauer3d,
    "martcheva5d": martcheva5d,
    "hepc3d": hepc3d,
    "hepc3d-truncated": lambda: hepc3d(truncated=True),
}


def available_models() -> list[str]:
    return sorted(_CATALOG)


def get_model(model_id: str) -> ModelSystem:
    """Look up a built-in model by id, or load a declarative model file by path."""
    if model_id in _CATALOG:
        return _CATALOG[model_id]()
    if model_id.endswith(".json"):
        from .spec_loader import load_model
        return load_model(model_id)
    raise ModelError(f"unknown model {model_id!r}; choose from {', '.join(available_models())}")


def sample_params(model: ModelSystem, rng: np.random.Generator) -> dict:
    """Draw a random admissible parameter set (log-uniform over moderate ranges)."""
    if model.sampler is None:
        raise ModelError(f"{model.id}: no parameter sampler")
    for _ in range(100):
        p = model.sampler(rng)
        if model.is_admissible(p):
            return p
    raise ModelError(f"{model.id}: sampler failed to produce admissible parameters")
