"""Acceptance suites.

Each suite returns a :class:`~epibif.recipes.RecipeReport`; ``run_suite``
dispatches by name.  Suites draw parameters from fixed seeds so repeated runs
give identical reports.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import bifcoeffs, continuation, ngm, numdiff, recipes, steadystate
from .models import ModelError, get_model, hepc_dfe_quantities, sample_params
from .recipes import RecipeReport

__all__ = ["SUITES", "run_suite", "suite_names"]


def _rel(x, ref):
    return abs(x - ref) / max(abs(ref), 1e-300)


class _Tally:
    """Worst relative error per named quantity."""

    def __init__(self):
        self.worst: dict[str, float] = {}

    def add(self, name, value, ref, zero_scale=None):
        # entries that vanish (up to roundoff) are measured against a scale
        if zero_scale and abs(ref) <= 1e-12 * zero_scale:
            err = abs(value - ref) / zero_scale
        else:
            err = _rel(value, ref)
        self.worst[name] = max(self.worst.get(name, 0.0), float(err))


def _e(n, i):
    u = np.zeros(n)
    u[i] = 1.0
    return u


# ---------------------------------------------------------------------------
# 1. hand-computed derivatives
# ---------------------------------------------------------------------------

def _brauer_derivatives(tally, p):
    m = get_model("brauer3d")
    p = m.validate(recipes.brauer_threshold_point(p))
    x0 = m.dfe(p)
    S, _, V = x0
    beta, mu, gamma, sigma = p["beta"], p["mu"], p["gamma"], p["sigma"]
    phi, theta = p["phi"], p["theta"]
    J = numdiff.jacobian(m, x0, p)
    ref = np.array([
        [-(mu + phi), -beta * S + gamma, theta],
        [0.0, beta * S + sigma * beta * V - (mu + gamma), 0.0],
        [phi, -sigma * beta * V, -(mu + theta)],
    ])
    scale = float(np.max(np.abs(ref)))
    for i in range(3):
        for j in range(3):
            tally.add(f"brauer3d J[{i}{j}]", J[i, j], ref[i, j], scale)
    E = (gamma - beta * S - theta) / (mu + phi + theta)
    w = np.array([E, 1.0, -1.0 - E])
    tally.add("brauer3d A w = 0", float(np.max(np.abs(J @ w))) / scale, 0.0, 1.0)
    y = numdiff.d2f(m, x0, p, w, w)
    y_ref = 2 * beta * np.array([-E, -sigma + E * (1 - sigma), sigma * (1 + E)])
    ys = float(np.max(np.abs(y_ref)))
    for i in range(3):
        tally.add(f"brauer3d y[{i}]", y[i], y_ref[i], ys)
    tally.add("brauer3d b = S + sigma V", numdiff.d2f_param(m, x0, p, w, "beta")[1], S + sigma * V)


def _martcheva_derivatives(tally, p):
    m = get_model("martcheva5d")
    p = dict(p)
    p["eta"] = recipes.martcheva_threshold_eta(p)
    p = m.validate(p)
    x0 = m.dfe(p)
    S, V = x0[0], x0[1]
    beta, D, sigma = p["beta"], p["D"], p["sigma"]
    eS, eV, eB = _e(5, 0), _e(5, 1), _e(5, 4)
    tally.add("martcheva f3_SB", numdiff.d2f(m, x0, p, eS, eB)[2], beta / D)
    tally.add("martcheva f3_VB", numdiff.d2f(m, x0, p, eV, eB)[2], sigma * beta / D)
    tally.add("martcheva f3_SBB", numdiff.d3f(m, x0, p, eS, eB, eB)[2], -2 * beta / D ** 2)
    tally.add("martcheva f3_VBB", numdiff.d3f(m, x0, p, eV, eB, eB)[2], -2 * sigma * beta / D ** 2)
    tally.add("martcheva f3_BBB", numdiff.d3f(m, x0, p, eB, eB, eB)[2], 6 * beta * (S + sigma * V) / D ** 3)
    w = bifcoeffs.null_pair(m, p).w
    w = w / w[4]
    y = numdiff.d2f(m, x0, p, w, w)
    ys = float(np.max(np.abs(y)))
    tally.add("martcheva y1", y[0], 2 * beta / D * (-w[0] + S / D), ys)
    tally.add("martcheva y2", y[1], 2 * beta * sigma / D * (-w[1] + V / D), ys)
    tally.add("martcheva y3", y[2], 2 * beta / D * (w[0] + sigma * w[1] - (S + sigma * V) / D), ys)
    tally.add("martcheva y4", y[3], 0.0, ys)
    tally.add("martcheva y5", y[4], 0.0, ys)


def _hepc_derivatives(tally, p):
    m = get_model("hepc3d")
    p = dict(p)
    p["delta"] = recipes.hepc_delta_for_r0(p)
    if p["delta"] is None:
        return False
    p = m.validate(p)
    x0 = m.dfe(p)
    p0, a11, a12, a22 = hepc_dfe_quantities(p)
    b, c, Tm, rI, rT = p["b"], p["c"], p["T_max"], p["r_I"], p["r_T"]
    k = p["rho"] * p["R_star"]
    J = numdiff.jacobian(m, x0, p)
    ref = np.array([[-a11, -a12, -b], [0.0, a22, b], [0.0, k, -c - b]])
    scale = float(np.max(np.abs(ref)))
    for i in range(3):
        for j in range(3):
            tally.add(f"hepc J[{i}{j}]", J[i, j], ref[i, j], scale)
    eT, eI, eV = _e(3, 0), _e(3, 1), _e(3, 2)
    tally.add("hepc f2_TI", numdiff.d2f(m, x0, p, eT, eI)[1], -rI / Tm)
    tally.add("hepc f2_II", numdiff.d2f(m, x0, p, eI, eI)[1], -2 * rI / Tm)
    tally.add("hepc f2_IV", numdiff.d2f(m, x0, p, eI, eV)[1], -b / p0)
    tally.add("hepc f3_IV", numdiff.d2f(m, x0, p, eI, eV)[2], b / p0)
    tally.add("hepc f1_TT", numdiff.d2f(m, x0, p, eT, eT)[0], -2 * rT / Tm)
    tally.add("hepc f1_TI", numdiff.d2f(m, x0, p, eT, eI)[0], -rT / Tm)
    tally.add("hepc f1_IV", numdiff.d2f(m, x0, p, eI, eV)[0], b / p0)
    s3 = b / p0 ** 2
    tally.add("hepc f2_IIV", numdiff.d3f(m, x0, p, eI, eI, eV)[1], 2 * b / p0 ** 2)
    tally.add("hepc f2_ITV", numdiff.d3f(m, x0, p, eI, eT, eV)[1], b / p0 ** 2)
    tally.add("hepc f2_TTV", numdiff.d3f(m, x0, p, eT, eT, eV)[1], 0.0, s3)


def derivatives_suite(n: int = 50, seed: int = 1, tol: float = 1e-5) -> RecipeReport:
    rng = np.random.default_rng(seed)
    tally = _Tally()
    for model_id, fn in (("brauer3d", _brauer_derivatives), ("martcheva5d", _martcheva_derivatives),
                         ("hepc3d", _hepc_derivatives)):
        m = get_model(model_id)
        done = 0
        while done < n:
            done += fn(tally, sample_params(m, rng)) is not False
    rep = RecipeReport("derivatives")
    for name, err in tally.worst.items():
        rep.check(name, f"rel. err <= {tol:g}", err, err <= tol)
    return rep


# ---------------------------------------------------------------------------
# 2. R0 closed forms
# ---------------------------------------------------------------------------

def _r0_closed(model_id, p):
    if model_id == "martcheva5d":
        S, V = get_model(model_id).dfe(p)[:2]
        return p["eta"] * p["beta"] * (S + p["sigma"] * V) / (p["D"] * p["delta"] * (p["mu"] + p["gamma"]))
    if model_id == "hepc3d":
        p0 = hepc_dfe_quantities(p)[0]
        return p["b"] * p["rho"] * p["R_star"] / ((p["b"] + p["c"]) * (p["delta"] - p["r_I"] * (1 - p0 / p["T_max"])))
    K = p["Lambda"] / p["mu"] if model_id == "brauer3d" else p["K"]
    mu, theta, phi = p["mu"], p["theta"], p["phi"]
    return p["beta"] * K * (mu + theta + p["sigma"] * phi) / ((mu + p["gamma"]) * (mu + theta + phi))


def r0_suite(n: int = 500, seed: int = 2, tol: float = 1e-9) -> RecipeReport:
    rng = np.random.default_rng(seed)
    rep = RecipeReport("r0")
    for model_id in ("martcheva5d", "hepc3d", "brauer2d", "brauer3d"):
        m = get_model(model_id)
        worst = 0.0
        for _ in range(n):
            p = m.validate(sample_params(m, rng))
            worst = max(worst, _rel(ngm.r0(m, p, validated=True).r0, _r0_closed(model_id, p)))
        rep.check(f"{model_id} R0", f"rel. err <= {tol:g}", worst, worst <= tol)
    return rep


# ---------------------------------------------------------------------------
# 8. parity
# ---------------------------------------------------------------------------

def parity_suite(n: int = 300, seed: int = 8, max_abstain: float = 0.05) -> RecipeReport:
    rng = np.random.default_rng(seed)
    rep = RecipeReport("parity")
    for model_id in steadystate.PARITY_MODELS:
        m = get_model(model_id)
        done = bad = abstained = 0
        while done < n:
            p = sample_params(m, rng)
            try:
                audit = steadystate.parity_audit(m, p)
            except ModelError:
                continue
            done += 1
            if audit.abstained:
                abstained += 1
            elif not audit.parity_ok:
                bad += 1
        rep.check(f"{model_id} violations", "0", bad, bad == 0)
        rep.check(f"{model_id} abstentions", f"<= {max_abstain:.0%}", abstained / n, abstained / n <= max_abstain)
    return rep


# ---------------------------------------------------------------------------
# 9. fold slope
# ---------------------------------------------------------------------------

def _fold_slope_check(rep, label, model, p, alpha1, alpha2, tol):
    cc = bifcoeffs.center_coefficients(model, p, alpha1, alpha2)
    rep.derived[f"{label}: e"] = cc.e
    rep.derived[f"{label}: e_cm"] = cc.e_cm
    try:
        locus = continuation.fold_locus(model, p, alpha1, alpha2)
        slope = locus.slope_u
    except ModelError as exc:
        rep.derived[f"{label}: fold locus"] = str(exc)
        slope = math.nan
    rep.derived[f"{label}: measured slope"] = slope
    target = 2.0 * cc.e
    err = _rel(slope, target) if math.isfinite(slope) else math.inf
    rep.check(f"{label}: dU/dalpha2 = 2e", f"rel. err <= {tol:.0%}", err, err <= tol)
    if cc.e_cm is not None and math.isfinite(slope):
        rep.derived[f"{label}: rel. err vs e_cm"] = _rel(slope, cc.e_cm)
        rep.derived[f"{label}: rel. err vs e"] = _rel(slope, cc.e)


def foldslope_suite(tol: float = 0.05) -> RecipeReport:
    rep = RecipeReport("foldslope")
    m2 = get_model("martcheva5d")
    _fold_slope_check(rep, "theorem2", m2, m2.validate(recipes.theorem2_base()), "eta", "D", tol)
    m4 = get_model("hepc3d")
    _fold_slope_check(rep, "theorem4", m4, m4.validate(recipes.theorem4_base()), "rho", "r_I", tol)
    return rep


# ---------------------------------------------------------------------------
# 10. numerical hygiene
# ---------------------------------------------------------------------------

def _threshold_points(rng, n):
    out = []
    for model_id in ("brauer3d", "martcheva5d", "hepc3d"):
        m = get_model(model_id)
        k = 0
        while k < n:
            p = sample_params(m, rng)
            if model_id == "brauer3d":
                p = recipes.brauer_threshold_point(p)
            elif model_id == "martcheva5d":
                p["eta"] = recipes.martcheva_threshold_eta(p)
            else:
                p["delta"] = recipes.hepc_delta_for_r0(p)
                if p["delta"] is None:
                    continue
            out.append((m, m.validate(p)))
            k += 1
    return out


def _a_zero_points():
    pts = []
    m = get_model("hepc3d")
    pts.append((m, m.validate(recipes.theorem4_base())))
    m = get_model("martcheva5d")
    pts.append((m, m.validate(recipes.theorem2_base())))
    m = get_model("brauer3d")
    p = dict(m.defaults)
    gam = recipes._brauer_a_zero_gamma(p, "brauer3d")
    pts.append((m, m.validate(recipes.brauer_threshold_point({**p, "gamma": gam}))))
    return pts


def hygiene_suite(n: int = 20, seed: int = 10, cli_runner: Callable | None = None) -> RecipeReport:
    rng = np.random.default_rng(seed)
    rep = RecipeReport("hygiene")
    worst = 0.0
    for m, p in _threshold_points(rng, n):
        pair = bifcoeffs.null_pair(m, p, validated=True)
        nA = float(np.linalg.norm(pair.A))
        worst = max(worst, max(pair.residuals) / nA)
    rep.check("null-pair residuals", "<= 1e-10 |A|", worst, worst <= 1e-10)

    worst = 0.0
    for m, p in _a_zero_points():
        pair = bifcoeffs.null_pair(m, p, validated=True)
        terms = bifcoeffs.coeff_c(m, p, pair, validated=True, full_output=True)
        x0, w, v = pair.x0, pair.w, pair.v
        third = float(v @ numdiff.d3f(m, x0, p, w, w, w)) / 3.0
        for t in (-1.0, 0.5, 2.0):
            z = terms.z + t * w
            c_alt = third - float(v @ numdiff.d2f(m, x0, p, z, w))
            worst = max(worst, _rel(c_alt, terms.c))
    rep.check("c invariant under z -> z + t w", "rel. <= 1e-7", worst, worst <= 1e-7)

    if cli_runner is not None:
        same = all(cli_runner(args) == cli_runner(args) for args in _CLI_RERUNS)
        rep.check("byte-identical CLI reruns", "identical", same, same)
    return rep


_CLI_RERUNS = (
    ["r0", "--model", "hepc3d"],
    ["coeffs", "--model", "brauer3d", "--alpha1", "beta", "--alpha2", "sigma", "--at-threshold"],
    ["branch", "--model", "brauer2d", "--alpha1", "beta", "--format", "csv"],
)


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

def _continuum_suite() -> RecipeReport:
    rep = recipes.truncated_continuum_verify(get_model("hepc3d-truncated").defaults)
    table = recipes.truncated_sign_table_check()
    rep.name = "continuum"
    rep.checks.extend(table.checks)
    rep.derived["sign_table"] = table.derived
    return rep


SUITES: dict[str, Callable[..., RecipeReport]] = {
    "derivatives": derivatives_suite,
    "r0": r0_suite,
    "brauer": recipes.brauer_two_method,
    "theorem2": recipes.theorem2_construct,
    "theorem3": recipes.theorem3_construct,
    "theorem4": recipes.theorem4_construct,
    "continuum": _continuum_suite,
    "parity": parity_suite,
    "foldslope": foldslope_suite,
    "hygiene": hygiene_suite,
}


def suite_names() -> list[str]:
    return list(SUITES)


def run_suite(name: str, **kw) -> RecipeReport:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return SUITES[name](**kw)
