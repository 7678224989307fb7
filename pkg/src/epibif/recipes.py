"""Parameter constructions for the built-in models, each returning a checkable report.

Every construction picks parameters with its own closed-form algebra and then
re-checks the claimed properties through the independent modules (``ngm``,
``bifcoeffs``, ``steadystate`` and ``continuation``).  A failed check is
reported, never raised.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import bifcoeffs, continuation, ngm, steadystate
from .models import ModelError, get_model, hepc_dfe_quantities

__all__ = [
    "Check",
    "RecipeReport",
    "brauer_backward_test",
    "brauer_threshold_point",
    "brauer_a1",
    "brauer_two_method",
    "martcheva_a1_sign",
    "martcheva_threshold_eta",
    "theorem2_base",
    "theorem4_base",
    "parabola_ratio_spread",
    "truncated_continuum_params",
    "theorem2_construct",
    "hepc_F",
    "hepc_delta_for_r0",
    "hepc_rI_for_a0",
    "hepc_rho_min",
    "theorem3_point",
    "theorem3_construct",
    "theorem4_construct",
    "truncated_continuum_state",
    "truncated_continuum_verify",
    "truncated_AB",
    "truncated_unique_root",
    "truncated_state_from_X",
    "truncated_sign_table_check",
    "sweep_c_sign",
    "perturbed_pair",
]

REPORT_SCHEMA_VERSION = 1
PERTURBATIONS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


@dataclass(frozen=True)
class Check:
    name: str
    target: str
    achieved: float | int | str | None
    passed: bool

    def to_dict(self) -> dict:
        val = self.achieved
        if isinstance(val, (np.floating, np.integer)):
            val = val.item()
        return {"name": self.name, "target": self.target, "achieved": val, "pass": bool(self.passed)}


@dataclass
class RecipeReport:
    name: str
    params: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    derived: dict = field(default_factory=dict)

    def check(self, name, target, achieved, passed) -> bool:
        self.checks.append(Check(name, target, achieved, bool(passed)))
        return bool(passed)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def failed(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "recipe": self.name,
            "passed": self.passed,
            "params": {k: float(v) for k, v in sorted(self.params.items())},
            "checks": [c.to_dict() for c in self.checks],
            "derived": _jsonable(self.derived),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def summary(self) -> str:
        width = max((len(c.name) for c in self.checks), default=10)
        lines = [f"{self.name}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            val = f"{c.achieved:.6g}" if isinstance(c.achieved, (float, np.floating)) else str(c.achieved)
            lines.append(f"  [{'ok' if c.passed else '!!'}] {c.name:<{width}}  {val:>14}  ({c.target})")
        return "\n".join(lines)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


# ---------------------------------------------------------------------------
# Vaccination model
# ---------------------------------------------------------------------------

def brauer_backward_test(params: Mapping) -> float:
    """Quadratic-in-``phi`` expression whose negativity means a backward bifurcation."""
    s, phi = params["sigma"], params["phi"]
    mu, theta, gamma = params["mu"], params["theta"], params["gamma"]
    return s * s * phi * phi + s * phi * (-gamma + mu + 2 * theta + s * (gamma + mu)) + (mu + theta) ** 2


def brauer_threshold_point(params: Mapping, model_id: str = "brauer3d") -> dict:
    """Copy of ``params`` with ``beta`` set so that ``R0 = 1``."""
    p = dict(params)
    mu, theta, phi, sigma = p["mu"], p["theta"], p["phi"], p["sigma"]
    K = p["Lambda"] / mu if model_id == "brauer3d" else p["K"]
    p["beta"] = (mu + p["gamma"]) * (mu + theta + phi) / (K * (mu + theta + sigma * phi))
    return p


def brauer_a1(params: Mapping, model_id: str = "brauer3d") -> float:
    """Linear coefficient of the steady-state quadratic in ``I`` (``K = Lambda/mu`` for the full model)."""
    p = dict(params)
    if model_id == "brauer3d":
        p["K"] = p["Lambda"] / p["mu"]
    return float(steadystate.brauer_quadratic(p).coeffs[1])


def _brauer_a_zero_gamma(p, model_id):
    """``gamma`` with ``a1 = 0`` at ``R0 = 1``, or ``None`` when no sign change is bracketed."""
    def g(gam):
        return brauer_a1(brauer_threshold_point({**p, "gamma": gam}, model_id), model_id)

    grid = np.geomspace(1e-3, 1e4, 71)
    vals = [g(x) for x in grid]
    for i in range(len(grid) - 1):
        if vals[i] == 0:
            return float(grid[i])
        if vals[i] * vals[i + 1] < 0:
            from scipy.optimize import brentq
            return brentq(g, grid[i], grid[i + 1], xtol=1e-14, rtol=1e-14, maxiter=200)
    return None


def brauer_two_method(n: int = 1000, n_zero: int = 50, seed: int = 7, model_id: str = "brauer3d",
                      max_draws: int = 20000) -> RecipeReport:
    """Backward test from the quadratic (``a1 < 0``) against the centre-manifold sign of ``a``.

    Also solves ``gamma`` for ``a = 0`` at ``R0 = 1`` on further draws and
    checks ``c < 0`` at every such point.
    """
    model = get_model(model_id)
    rng = np.random.default_rng(seed)
    rep = RecipeReport("brauer")
    agree = total = skipped = 0
    for _ in range(n):
        p = brauer_threshold_point(_sample(model, rng), model_id)
        pair = bifcoeffs.null_pair(model, p)
        a = bifcoeffs.coeff_a(model, p, pair)
        if abs(a) < 1e-9 * bifcoeffs.a_scale(model, p, pair):
            skipped += 1
            continue
        total += 1
        agree += int(np.sign(a) == np.sign(-brauer_a1(p, model_id)))
    rep.check("sign(a) = sign(-a1)", "100% agreement", f"{agree}/{total}", total > 0 and agree == total)
    rep.derived["skipped_near_zero"] = skipped
    zeros = neg = 0
    worst_a = 0.0
    closed = 0.0
    for _ in range(max_draws):
        if zeros >= n_zero:
            break
        p = _sample(model, rng)
        gam = _brauer_a_zero_gamma(p, model_id)
        if gam is None:
            continue
        q = brauer_threshold_point({**p, "gamma": gam}, model_id)
        if not model.is_admissible(q):
            continue
        try:
            cc = bifcoeffs.center_coefficients(model, q, "beta", corrections=False)
        except ModelError:
            continue
        zeros += 1
        worst_a = max(worst_a, abs(cc.a) / cc.a_scale)
        if cc.c is not None and cc.c < 0:
            neg += 1
    rep.check("a = 0 points found", f">= {n_zero}", zeros, zeros >= n_zero)
    rep.check("c < 0 at every a = 0 point", "all", f"{neg}/{zeros}", zeros > 0 and neg == zeros)
    rep.derived["max_relative_a"] = worst_a
    return rep


# ---------------------------------------------------------------------------
# Cholera model
# ---------------------------------------------------------------------------

def martcheva_a1_sign(params: Mapping) -> float:
    """Expression whose sign is that of the linear coefficient of the steady-state quadratic at ``R0 = 1``."""
    Lam, D, mu, psi = params["Lambda"], params["D"], params["mu"], params["psi"]
    w, sigma, gamma, eta, delta = params["w"], params["sigma"], params["gamma"], params["eta"], params["delta"]
    t1 = -Lam * (mu + sigma * psi) / (D * mu * (mu + psi))
    t2 = -delta * (mu + gamma) / (eta * (mu + sigma * psi)) * psi * sigma ** 2 / mu
    t3 = delta / (eta * (mu + psi)) * (-mu - gamma + w / (mu + w) * gamma * (mu + sigma * psi) / mu)
    return t1 + t2 + t3


def martcheva_threshold_eta(params: Mapping) -> float:
    """``eta`` giving ``R0 = 1``."""
    Lam, D, mu, psi, sigma = params["Lambda"], params["D"], params["mu"], params["psi"], params["sigma"]
    s_plus = Lam * (mu + sigma * psi) / (mu * (mu + psi))
    return D * params["delta"] * (mu + params["gamma"]) / (params["beta"] * s_plus)


def _martcheva_eta_part(params):
    """Coefficient of ``delta/eta`` in the sign expression (it must be positive for ``a = 0``)."""
    return martcheva_a1_sign(dict(params, Lambda=0.0, delta=1.0, eta=1.0))


def theorem2_base(mu=0.1, w=2.0, sigma=0.1, gamma=10.0, D=10.0, delta=1.0, Lambda=10.0, budget=200) -> dict:
    """Staged search for a cholera-model point with ``R0 = 1`` and ``a = 0``.

    ``psi`` is tied to ``sigma`` by ``sigma psi = 2 mu (mu + w) / w``.  ``gamma``
    and ``w`` are doubled in turn until the ``delta/eta`` part ``P`` of the
    sign expression is positive.  Once ``eta`` is rescaled to give ``R0 = 1``
    every term of the sign expression is proportional to ``Lambda``, and it
    vanishes exactly when ``beta = (mu + gamma) / P``; ``beta`` is set to
    that value and ``eta`` is rescaled last.
    """
    p = dict(mu=mu, w=w, sigma=sigma, gamma=gamma, D=D, delta=delta, Lambda=Lambda, beta=1.0, eta=1.0)
    for i in range(budget):
        p["psi"] = 2.0 * p["mu"] * (p["mu"] + p["w"]) / (p["sigma"] * p["w"])
        part = _martcheva_eta_part(p)
        if part > 0:
            break
        if i % 2 == 0:
            p["gamma"] *= 2.0
        else:
            p["w"] *= 2.0
    else:
        raise ModelError(f"no parameters with a positive delta/eta part within the search budget: {p}")
    p["beta"] = (p["mu"] + p["gamma"]) / part
    p["eta"] = martcheva_threshold_eta(p)
    return p


def perturbed_pair(model, base: Mapping, alpha1: str, alpha2: str, sign: float,
                   fractions: Sequence[float] = PERTURBATIONS):
    """Perturb ``alpha2`` by ``sign * f * |alpha2|`` and put ``alpha1`` between the fold and ``R0 = 1``.

    Tries the fractions from largest to smallest and returns
    ``(params, fraction, fold, threshold, states)`` for the first that yields
    exactly two positive steady states with ``R0 < 1``; ``None`` if none does.
    """
    pair = bifcoeffs.null_pair(model, base)
    sx = 1.0 + float(np.max(np.abs(pair.x0)))
    for f in fractions:
        q = dict(base)
        q[alpha2] = base[alpha2] * (1.0 + sign * f)
        if not model.is_admissible(q):
            continue
        try:
            thr = continuation.threshold_alpha1(model, model.validate(q), alpha1, q[alpha1])
            fp, _ = continuation.transcritical_fold(model, model.validate(q), alpha1, pair, 1e-6 * sx,
                                                          max(0.2, 50 * f) * sx)
        except ModelError:
            continue
        q[alpha1] = 0.5 * (fp.alpha + thr)
        try:
            r0 = ngm.r0(model, q).r0
            states = steadystate.enumerate(model, q)
        except ModelError:
            continue
        pos = [s for s in states if s.is_positive]
        if r0 < 1.0 and len(pos) == 2:
            return q, f, fp, thr, states
    return None


def _coefficient_checks(rep, model, p, alpha1, alpha2, tol_a):
    r0 = ngm.r0(model, p).r0
    rep.check("R0 = 1 at base", "|R0-1| <= 1e-8", abs(r0 - 1.0), abs(r0 - 1.0) <= 1e-8)
    cc = bifcoeffs.center_coefficients(model, p, alpha1, alpha2, tol_a=tol_a)
    pair = cc.pair
    A = pair.A
    res_w, res_v = pair.residuals
    nA = float(np.linalg.norm(A))
    rep.check("null pair residual", "<= 1e-10 |A|", max(res_w, res_v) / nA, max(res_w, res_v) <= 1e-10 * nA)
    rep.check("a = 0", f"|a| <= {tol_a:g} * scale", abs(cc.a) / cc.a_scale, cc.a_is_zero)
    rep.check("b > 0", "b > 0", cc.b, cc.b > 0)
    rep.derived["coefficients"] = cc.to_dict()
    return cc


def _perturbed_checks(rep, model, cc, base, alpha1, alpha2):
    sign = 1.0 if (cc.e or 0.0) > 0 else -1.0
    found = perturbed_pair(model, base, alpha1, alpha2, sign)
    if found is None:
        rep.check("perturbed: two positive states", "count = 2 with R0 < 1", 0, False)
        return None
    q, f, fp, thr, states = found
    pos = [s for s in states if s.is_positive]
    r0 = ngm.r0(model, q).r0
    rep.check("perturbed: R0 < 1", "R0 < 1", r0, r0 < 1.0)
    rep.check("perturbed: two positive states", "count = 2", len(pos), len(pos) == 2)
    kinds = sorted(s.stability for s in pos)
    rep.check("perturbed: one stable, one unstable", "stable + unstable", "+".join(kinds),
              kinds == ["stable", "unstable"])
    rep.derived["perturbation"] = {"alpha2": alpha2, "fraction": f, "sign": sign, "params": q,
                                   "fold_alpha1": fp.alpha, "threshold_alpha1": thr,
                                   "states": [s.to_dict(model.state_names) for s in pos]}
    return q, pos


def theorem2_construct(tol_a: float = bifcoeffs.TOL_A, **base_kw) -> RecipeReport:
    """Cholera model: ``R0 = 1``, ``a = 0``, ``c < 0``, ``e != 0`` with ``alpha1 = eta``, ``alpha2 = D``;
    then two positive steady states (one stable, one unstable) for some ``R0 < 1``."""
    model = get_model("martcheva5d")
    rep = RecipeReport("theorem2")
    try:
        p = theorem2_base(**base_kw)
    except ModelError as exc:
        rep.check("base search", "point found", str(exc), False)
        return rep
    p = model.validate(p)
    rep.params = dict(p)
    rep.derived["sign_expression"] = martcheva_a1_sign(p)
    try:
        cc = _coefficient_checks(rep, model, p, "eta", "D", tol_a)
    except ModelError as exc:
        rep.check("coefficients", "computable", str(exc), False)
        return rep
    if cc.c is None:
        return rep
    rep.check("c < 0", "c < 0", cc.c, cc.c < 0)
    if cc.c >= 0:
        rep.derived["contradiction"] = "c >= 0 at the base point; c <= 0 is forced by the root-parity argument"
    ok_e = cc.e is not None and cc.e_is_nonzero
    rep.check("e != 0", "|e| > tol_e", cc.e, ok_e)
    rep.check("f_uu_alpha1 = 0", "sufficient condition", cc.fuualpha1, bool(cc.sufficient))
    # B/D is the natural variable, so steady states see eta and D only through eta/D
    rep.derived["unfolding"] = {"e_center_manifold": cc.e_cm, "e_relative_to_e": (cc.e_cm or 0.0) / cc.e
                                if cc.e else None}
    if cc.c < 0 and ok_e:
        _perturbed_checks(rep, model, cc, p, "eta", "D")
    return rep


# ---------------------------------------------------------------------------
# Hepatitis C
# ---------------------------------------------------------------------------

def hepc_F(params: Mapping) -> float:
    p0, a11, _, _ = hepc_dfe_quantities(params)
    return (params["b"] + params["c"]) * params["r_I"] * p0 / (a11 * params["T_max"]) - params["c"]


def hepc_delta_for_r0(params: Mapping) -> float | None:
    """``delta`` making ``R0 = 1``; ``None`` when ``p0 > T_max``."""
    p0 = hepc_dfe_quantities(params)[0]
    if p0 > params["T_max"]:
        return None
    b, c = params["b"], params["c"]
    return b * params["rho"] * params["R_star"] / (b + c) + params["r_I"] * (1.0 - p0 / params["T_max"])


def hepc_rI_for_a0(params: Mapping) -> float | None:
    """``r_I`` making ``a = 0`` at ``R0 = 1``; ``None`` when that is impossible."""
    p0, a11, a12, _ = hepc_dfe_quantities(params)
    b, c = params["b"], params["c"]
    k = params["rho"] * params["R_star"]
    den = (b + c) * ((b + c) * (a12 - a11) + b * k)
    if den <= 0:
        return None
    return params["T_max"] / p0 * b * k * c * a11 / den


def hepc_rho_min(params: Mapping) -> float:
    """``rho`` below which ``a = 0`` cannot be reached."""
    _, a11, a12, _ = hepc_dfe_quantities(params)
    b, c = params["b"], params["c"]
    return (b + c) * (a11 - a12) / (b * params["R_star"])


def theorem3_point(params: Mapping, factor: float = 2.0) -> dict:
    """A ``R0 = 1`` point whose bifurcation direction follows the sign of ``F``.

    For ``F > 0`` ``rho`` is raised to ``factor`` times the level above which
    ``a > 0``; ``delta`` is then set for ``R0 = 1``.
    """
    p = dict(params)
    F = hepc_F(p)
    if F > 0:
        p0, a11, a12, _ = hepc_dfe_quantities(p)
        b, c = p["b"], p["c"]
        k_min = (b + c) ** 2 * (a11 - a12) * p["r_I"] * p0 / (p["T_max"] * b * a11 * F)
        p["rho"] = max(p["rho"], factor * k_min / p["R_star"])
    p["delta"] = hepc_delta_for_r0(p)
    return p


def theorem3_construct(n_per_sign: int = 20, seed: int = 3, max_draws: int = 5000) -> RecipeReport:
    """Both bifurcation directions in the hep-C model, selected by the sign of ``F``."""
    model = get_model("hepc3d")
    rng = np.random.default_rng(seed)
    rep = RecipeReport("theorem3")
    found = {1: 0, -1: 0}
    agree = {1: 0, -1: 0}
    b_err = 0.0
    for _ in range(max_draws):
        if min(found.values()) >= n_per_sign:
            break
        p = _sample(model, rng)
        F = hepc_F(p)
        sgn = 1 if F > 0 else -1
        if found[sgn] >= n_per_sign or abs(F) < 1e-6 * (p["c"] + 1.0):
            continue
        q = theorem3_point(p)
        if q["delta"] is None or not model.is_admissible(q):
            continue
        try:
            pair = bifcoeffs.null_pair(model, q)
            a = bifcoeffs.coeff_a(model, q, pair)
            b = bifcoeffs.coeff_b(model, q, "rho", pair)
            scale = bifcoeffs.a_scale(model, q, pair)
        except ModelError:
            continue
        if abs(a) <= 1e-9 * scale:
            continue
        found[sgn] += 1
        agree[sgn] += int(np.sign(a) == sgn)
        # closed form for b under the normalisation v = (0, b+c, b), w_I = a11 (b+c)
        p0, a11, a12, _ = hepc_dfe_quantities(q)
        kappa = pair.w[1] / (a11 * (q["b"] + q["c"]))
        lam_v = pair.v[1] / (q["b"] + q["c"])
        b_ref = q["b"] * q["R_star"] * a11 * (q["b"] + q["c"]) * kappa * lam_v
        b_err = max(b_err, abs(b / b_ref - 1.0))
    rep.check("F > 0 points", f">= {n_per_sign}", found[1], found[1] >= n_per_sign)
    rep.check("F < 0 points", f">= {n_per_sign}", found[-1], found[-1] >= n_per_sign)
    rep.check("F > 0 -> a > 0", "all", f"{agree[1]}/{found[1]}", agree[1] == found[1])
    rep.check("F < 0 -> a < 0", "all", f"{agree[-1]}/{found[-1]}", agree[-1] == found[-1])
    rep.check("b closed form", "rel. err <= 1e-6", b_err, b_err <= 1e-6)
    return rep


def _sample(model, rng):
    from .models import sample_params
    return sample_params(model, rng)


def theorem4_base(params: Mapping | None = None, budget: int = 200) -> dict:
    """Staged search for a hep-C point with ``R0 = 1``, ``a = 0`` and ``c < 0``.

    Starting from ``params``, ``rho`` is moved halfway towards the level where
    ``a = 0`` stops being reachable until ``c < 0``; this drives ``r_I`` up
    and the second-order part of ``c`` down.
    """
    model = get_model("hepc3d")
    p = dict(model.defaults if params is None else params)
    rho_min = hepc_rho_min(p)
    rho = max(p["rho"], 2.0 * rho_min)
    for _ in range(budget):
        q = dict(p, rho=rho)
        rho = rho_min + 0.5 * (rho - rho_min)
        rI = hepc_rI_for_a0(q)
        if rI is None:
            continue
        q["r_I"] = rI
        q["delta"] = hepc_delta_for_r0(q)
        if q["delta"] is None or not model.is_admissible(q):
            continue
        try:
            cc = bifcoeffs.center_coefficients(model, q, "rho", "r_I")
        except ModelError:
            continue
        if cc.c is not None and cc.c < 0:
            return q
    raise ModelError("no a = 0 point with c < 0 within the search budget")


def theorem4_construct(params: Mapping | None = None, tol_a: float = bifcoeffs.TOL_A) -> RecipeReport:
    """Hep-C model: ``R0 = 1``, ``a = 0``, ``c < 0``, ``e != 0``, ``f_uu_alpha1 = 0``
    with ``alpha1 = rho``, ``alpha2 = r_I``; then two positive states for ``R0 < 1``
    joined through a single fold."""
    model = get_model("hepc3d")
    rep = RecipeReport("theorem4")
    try:
        p = model.validate(theorem4_base(params))
    except ModelError as exc:
        rep.check("base search", "point found", str(exc), False)
        return rep
    rep.params = dict(p)
    cc = _coefficient_checks(rep, model, p, "rho", "r_I", tol_a)
    if cc.c is None:
        return rep
    rep.check("c < 0", "c < 0", cc.c, cc.c < 0)
    rep.check("c(3) < 0", "third-order part negative", cc.c3, cc.c3 < 0)
    # two routes to c: split terms against a closed form for the third-order part
    p0, a11, a12, _ = hepc_dfe_quantities(p)
    b, c, k = p["b"], p["c"], p["rho"] * p["R_star"]
    lam = cc.pair.w[1] / (a11 * (b + c))
    mu_v = cc.pair.v[1] / (b + c)
    c3_ref = 2.0 / p0 ** 2 * b * c * (b + c) * a11 ** 2 * k * ((a11 - a12) * (b + c) - b * k) * lam ** 3 * mu_v
    rep.check("c(3) closed form", "rel. err <= 1e-5", abs(cc.c3 / c3_ref - 1.0), abs(cc.c3 / c3_ref - 1.0) <= 1e-5)
    ok_e = cc.e is not None and cc.e_is_nonzero
    rep.check("e != 0", "|e| > tol_e", cc.e, ok_e)
    fuu_zero = abs(cc.fuualpha1) <= 1e-8 * max(abs(cc.d), 1e-300)
    rep.check("f_uu_alpha1 = 0", "|f_uu_alpha1| <= 1e-8 |d|", cc.fuualpha1, fuu_zero)
    rep.check("d != 0", "d != 0", cc.d, cc.d != 0)
    if not (cc.c < 0 and ok_e):
        return rep
    out = _perturbed_checks(rep, model, cc, p, "rho", "r_I")
    if out is None:
        return rep
    q, pos = out
    audit = steadystate.parity_audit(model, q)
    rep.check("parity audit count", "count = 2", audit.count, audit.count == 2 and bool(audit.parity_ok))
    # continuation from the unstable state through the fold to the stable one
    uns = [s for s in pos if s.stability == "unstable"][0]
    sta = [s for s in pos if s.stability == "stable"][0]
    branch = continuation.trace_both(model, q, "rho", uns)
    folds = continuation.fold_points(branch)
    rep.check("continuation: one fold", "exactly one", len(folds), len(folds) == 1)
    reach = _passes_through(branch, q["rho"], sta.x)
    rep.check("continuation reaches stable state", "branch passes the stable state", reach, reach)
    if len(folds) == 1:
        i = branch.fold_markers[0]
        cross = _one_eigenvalue_crosses(model, branch, i)
        rep.check("fold: one eigenvalue crosses", "exactly one", cross, cross)
        spread = parabola_ratio_spread(branch, folds[0])
        rep.check("fold: parabola ratio", "spread < 2", spread, spread < 2.0)
        rep.derived["fold"] = folds[0].to_dict()
    rep.derived["branch_points"] = len(branch)
    return rep


def _passes_through(branch, alpha, x_target) -> bool:
    """Whether the branch crosses ``alpha`` at a point close to ``x_target``."""
    a = branch.alpha
    scale = 1.0 + float(np.max(np.abs(x_target)))
    for i in range(len(a) - 1):
        if (a[i] - alpha) * (a[i + 1] - alpha) <= 0 and a[i] != a[i + 1]:
            t = (alpha - a[i]) / (a[i + 1] - a[i])
            x = branch.x[i] + t * (branch.x[i + 1] - branch.x[i])
            if np.max(np.abs(x - x_target)) <= 1e-2 * scale:
                return True
    return False


def _one_eigenvalue_crosses(model, branch, i) -> bool:
    from .steadystate import classify_state
    p = {**branch.params}
    k = []
    for j in (i, i + 1):
        st = classify_state(model, branch.x[j], {**p, branch.alpha1: branch.alpha[j]})
        k.append(int(np.sum(st.eigenvalues.real > 0)))
    return abs(k[0] - k[1]) == 1


def parabola_ratio_spread(branch, fold, distances=None) -> float:
    """Spread (max/min) of ``|alpha - alpha_f| / d^2`` for states at null-vector distance ``d`` from the fold.

    Each state solves the steady-state equations bordered by
    ``phi . (x - x_f) / sx = +-d``; a quadratic fold gives a spread near 1.
    """
    from scipy.optimize import root

    model = branch.model
    sx, sa = branch.scales
    phi = fold.tangent[:-1] if fold.null_vector is None else fold.null_vector / sx
    phi = phi / np.linalg.norm(phi)
    if distances is None:
        distances = np.geomspace(1e-3, 3e-2, 5)
    ratios = []
    for sgn in (1.0, -1.0):
        for d in distances:
            def g(z, d=d, sgn=sgn):
                x, a = fold.x + sx * z[:-1], fold.alpha + sa * z[-1]
                try:
                    f = model.rhs(x, {**branch.params, branch.alpha1: a}) / sx
                except ModelError:
                    return np.full(z.size, 1e6)
                return np.append(f, phi @ z[:-1] - sgn * d)
            z0 = np.append(sgn * d * phi, 0.0)
            sol = root(g, z0, method="hybr", options={"xtol": 1e-13})
            if sol.success and np.max(np.abs(g(sol.x))) < 1e-10:
                ratios.append(abs(sol.x[-1]) / d ** 2)
    if len(ratios) < 2 or min(ratios) == 0:
        return math.inf
    return max(ratios) / min(ratios)


# ---------------------------------------------------------------------------
# Truncated hep-C system
# ---------------------------------------------------------------------------

def truncated_continuum_params(params: Mapping) -> dict:
    """Parameters on the continuum: ``s = d = 0`` with ``delta`` and ``r_I`` at their special values."""
    p = dict(params, s=0.0, d=0.0)
    b, c = p["b"], p["c"]
    p["delta"] = b * p["rho"] * p["R_star"] / (b + c)
    p["r_I"] = c * p["r_T"] / (b + c)
    return p


def truncated_continuum_state(params: Mapping, X: float) -> np.ndarray:
    """Point of the continuum with uninfected fraction ``X`` (``mu`` read as ``rho R*``)."""
    Tm, r_T, b, c = params["T_max"], params["r_T"], params["b"], params["c"]
    mu = params["rho"] * params["R_star"]
    common = Tm * (b * (mu + r_T) * X + c * r_T - b * mu) / (r_T * (b * X + c))
    return np.array([X * common, (1.0 - X) * common, mu * (1.0 - X) * common / (b * X + c)])


def truncated_continuum_verify(params: Mapping, X_grid=None) -> RecipeReport:
    model = get_model("hepc3d-truncated")
    p = model.validate(truncated_continuum_params(params))
    rep = RecipeReport("continuum", params=dict(p))
    if X_grid is None:
        X_grid = np.linspace(0.02, 0.98, 50)
    scale = 1.0
    worst, worst_X = 0.0, None
    full = model._full(p)
    for X in X_grid:
        x = truncated_continuum_state(p, X)
        if np.any(x[:2] < 0):
            continue
        r = float(np.max(np.abs(model.rhs(x, full)))) / (1.0 + float(np.max(np.abs(x))))
        if r > worst:
            worst, worst_X = r, float(X)
        scale = max(scale, float(np.max(np.abs(x))))
    rep.check("continuum residual", "<= 1e-8 scale", worst, worst <= 1e-8)
    rep.derived["worst_X"] = worst_X
    rep.derived["grid_size"] = len(X_grid)

    pair = bifcoeffs.null_pair(model, p)
    cc = bifcoeffs.center_coefficients(model, p, "rho", "r_I")
    b, c, r_T, Tm = p["b"], p["c"], p["r_T"], p["T_max"]
    k = p["rho"] * p["R_star"]
    # convert the computed split to the normalisation v = (0, b+c, b), w_I = r_T (b+c)
    lam = pair.w[1] / (r_T * (b + c))
    mu_v = pair.v[1] / (b + c)
    norm = lam ** 3 * mu_v
    c2, c3 = cc.c2 / norm, cc.c3 / norm
    with_rtk = 2 * r_T ** 2 * b ** 2 * c * (b + c) * k * (r_T + k) / Tm ** 2
    direct = 2 * r_T ** 2 * b ** 2 * c * (b + c) * k * k / Tm ** 2
    rep.check("c(2) = -c(3) closed form with k(r_T + k)", "rel. err <= 1e-6", abs(c2 / with_rtk - 1.0),
              abs(c2 / with_rtk - 1.0) <= 1e-6 and abs(-c3 / with_rtk - 1.0) <= 1e-6)
    rep.derived["c2"] = c2
    rep.derived["c3"] = c3
    rep.derived["c_split_closed_form_k2"] = direct
    rep.derived["c_split_k2_relerr"] = max(abs(c2 / direct - 1.0), abs(-c3 / direct - 1.0))
    rep.check("c = 0", "|c| <= 1e-6 |c(3)|", abs(cc.c) / abs(cc.c3), abs(cc.c) <= 1e-6 * abs(cc.c3))
    return rep


def truncated_AB(params: Mapping) -> tuple[float, float]:
    """``(A, B)`` in the linear equation ``A X = B`` for positive steady states of the truncated system."""
    b, c, r_T, delta, r_I = params["b"], params["c"], params["r_T"], params["delta"], params["r_I"]
    k = params["rho"] * params["R_star"]
    return b * (delta - k) + r_I * b * k / r_T, r_I * b * k / r_T - c * delta


def truncated_unique_root(params: Mapping, tol: float = 1e-12) -> str:
    """``'unique-positive'``, ``'none'`` or ``'continuum'`` from the signs of ``A`` and ``B``."""
    A, B = truncated_AB(params)
    k = params["rho"] * params["R_star"]
    ref = params["b"] * (params["delta"] + k) + params["r_I"] * params["b"] * k / params["r_T"] + params["c"] * params["delta"]
    zA, zB = abs(A) <= tol * ref, abs(B) <= tol * ref
    if zA and zB:
        return "continuum"
    if zA or zB:
        return "none"
    return "unique-positive" if A * B > 0 else "none"


def truncated_state_from_X(params: Mapping, X: float) -> np.ndarray:
    """Steady state of the truncated system with uninfected fraction ``X`` (off the continuum)."""
    Tm, b, c, r_I, delta = params["T_max"], params["b"], params["c"], params["r_I"], params["delta"]
    mu = params["rho"] * params["R_star"]
    N = Tm * (b * mu * X + (c + b * X) * (r_I - delta)) / (r_I * (c + b * X))
    I = N * (1.0 - X)
    return np.array([N * X, I, mu * I / (c + b * X)])


def truncated_sign_table_check(n_per_case: int = 10, seed: int = 11, max_draws: int = 5000) -> RecipeReport:
    """Compare the ``AX = B`` sign table with enumeration over the four sign cases.

    For opposite signs enumeration must find no positive state.  For equal
    signs it must find at most one, located at ``X = B/A``, and find it exactly
    when the state rebuilt from ``X = B/A`` is positive.
    """
    model = get_model("hepc3d-truncated")
    rng = np.random.default_rng(seed)
    cases = {(1, 1): [0, 0], (-1, -1): [0, 0], (1, -1): [0, 0], (-1, 1): [0, 0]}
    found_state = {(1, 1): 0, (-1, -1): 0}
    for _ in range(max_draws):
        if all(v[0] >= n_per_case for v in cases.values()):
            break
        p = _sample(model, rng)
        A, B = truncated_AB(p)
        key = (int(np.sign(A)), int(np.sign(B)))
        if key not in cases or cases[key][0] >= n_per_case or truncated_unique_root(p) == "continuum":
            continue
        try:
            pos = [st for st in steadystate.enumerate(model, p) if st.is_positive]
        except ModelError:
            continue
        cls = truncated_unique_root(p)
        if cls == "none":
            ok = not pos
        else:
            X = B / A
            pred = truncated_state_from_X(p, X)
            pred_pos = bool(np.all(pred > 0) and np.all(np.isfinite(pred)))
            scale = 1.0 + float(np.max(np.abs(pred)))
            ok = len(pos) == int(pred_pos) and all(np.max(np.abs(st.x - pred)) <= 1e-6 * scale for st in pos)
            found_state[key] += int(pred_pos and ok)
        cases[key][0] += 1
        cases[key][1] += int(ok)
    rep = RecipeReport("sign-table")
    for key, (n, ok) in cases.items():
        name = f"A{'+' if key[0] > 0 else '-'} B{'+' if key[1] > 0 else '-'}"
        rep.check(f"{name}: table matches enumeration", f"{n_per_case}/{n_per_case}", f"{ok}/{n}",
                  n >= n_per_case and ok == n)
    rep.derived["positive_states_realised"] = {f"{k[0]:+d}{k[1]:+d}": v for k, v in found_state.items()}
    return rep


# ---------------------------------------------------------------------------
# Sweep for the sign of c
# ---------------------------------------------------------------------------

def sweep_c_sign(n: int = 200, seed: int = 0, jobs: int = 1) -> list[dict]:
    """Random hep-C points with ``R0 = 1`` and ``a = 0``; one row per point with ``c`` and ``e``.

    Whether ``c > 0`` with ``e != 0`` can occur is left open; the rows only
    record what was found.
    """
    model = get_model("hepc3d")
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(n):
        p = _sample(model, rng)
        rI = hepc_rI_for_a0(p)
        if rI is None:
            continue
        p["r_I"] = rI
        p["delta"] = hepc_delta_for_r0(p)
        if p["delta"] is None or not model.is_admissible(p):
            continue
        draws.append(p)

    def one(p):
        try:
            cc = bifcoeffs.center_coefficients(model, p, "rho", "r_I")
        except ModelError as exc:
            return {**p, "c": math.nan, "e": math.nan, "class": f"error: {exc}"}
        label = bifcoeffs.classify(cc).label if cc.b > 0 else "b<=0"
        return {**p, "c": cc.c, "e": cc.e, "class": label}

    if jobs and jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(one, draws))
    else:
        rows = [one(p) for p in draws]
    return rows
