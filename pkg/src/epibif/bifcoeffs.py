"""Null vectors and centre-manifold coefficients at a transcritical point of the DFE.

At a parameter point with ``R0 = 1`` the Jacobian ``A`` of the vector field at
the disease-free equilibrium ``x0`` has a simple zero eigenvalue with right and
left null vectors ``w`` and ``v``.  With ``B(.,.)`` and ``C(.,.,.)`` the second
and third directional derivatives of ``f`` at ``x0``:

    a = 1/2 v.B(w, w)
    b = v.f_{x alpha1} w
    c = 1/3 v.C(w, w, w) - v.B(z, w),     A z = B(w, w)   (only when a = 0)
    d = v.f_{xx alpha2}(w, w)
    e = (-b d + f_uu_alpha1 f_u_alpha2) / (2 b c)

with ``f_uu_alpha1 = v.f_{xx alpha1}(w, w)`` and ``f_u_alpha2 = v.f_{x alpha2} w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import numdiff
from .models import ModelError, ModelSystem

__all__ = [
    "BifurcationError",
    "NullPair",
    "CTerms",
    "CenterCoefficients",
    "BifClass",
    "null_pair",
    "coeff_a",
    "coeff_b",
    "coeff_c",
    "coeff_d",
    "coeff_e",
    "a_scale",
    "center_coefficients",
    "classify",
    "TOL_A",
]

TOL_A = 1e-7
ZERO_EIG_TOL = 1e-6


class BifurcationError(ModelError):
    pass


@dataclass(frozen=True)
class NullPair:
    """Right/left null vectors of the DFE Jacobian ``A``.

    Built by :func:`null_pair` with the largest infected component of ``w``
    equal to one and ``v.w = 1``.  Pairs with any other scaling may be passed
    to the coefficient functions as-is.
    """

    v: np.ndarray
    w: np.ndarray
    A: np.ndarray
    x0: np.ndarray
    eigenvalue: complex = 0.0

    @property
    def residuals(self) -> tuple[float, float]:
        return float(np.linalg.norm(self.A @ self.w)), float(np.linalg.norm(self.v @ self.A))

    def scaled(self, lam: float) -> "NullPair":
        """The pair ``(v / lam, lam w)``."""
        return NullPair(self.v / lam, self.w * lam, self.A, self.x0, self.eigenvalue)


def _prepare(model, params, validated):
    p = params if validated else model.validate(params)
    return p, model.dfe(p)


def null_pair(model: ModelSystem, params: Mapping, validated: bool = False, tol: float = ZERO_EIG_TOL) -> NullPair:
    """Null vectors of the DFE Jacobian at (or very near) ``R0 = 1``."""
    p, x0 = _prepare(model, params, validated)
    A = numdiff.jacobian(model, x0, p)
    scale = max(1.0, float(np.max(np.sum(np.abs(A), axis=1))))
    eig = np.linalg.eigvals(A)
    order = np.argsort(np.abs(eig))
    lam = eig[order[0]]
    if abs(lam) > tol * scale:
        raise BifurcationError(
            f"zero eigenvalue absent: smallest |lambda| = {abs(lam):.3e} "
            f"(> {tol:g} x scale {scale:.3e}); move to R0 = 1 first")
    if len(eig) > 1 and abs(eig[order[1]]) <= tol * scale:
        raise BifurcationError("non-simple zero eigenvalue")

    U, _, Vt = np.linalg.svd(A)
    w = Vt[-1].copy()
    v = U[:, -1].copy()
    inf = list(model.infected)
    if np.sum(w[inf]) < 0:
        w = -w
    w /= np.max(w[inf]) if np.max(w[inf]) > 0 else np.max(np.abs(w))
    v /= v @ w
    return NullPair(v, w, A, x0, complex(lam))


def _pair(model, p, x0, pair):
    if pair is None:
        return null_pair(model, p, validated=True)
    return pair


def a_scale(model: ModelSystem, params: Mapping, pair: NullPair, validated: bool = False) -> float:
    """Magnitude ``1/2 sum_jk |w_j w_k| sum_i |v_i f_i,jk|`` of the terms that make up ``a``."""
    p, x0 = _prepare(model, params, validated)
    n = model.n
    eye = np.eye(n)
    total = 0.0
    for j in range(n):
        for k in range(j, n):
            if pair.w[j] == 0.0 or pair.w[k] == 0.0:
                continue
            H = numdiff.d2f(model, x0, p, eye[j], eye[k])
            mult = 1.0 if j == k else 2.0
            total += mult * abs(pair.w[j] * pair.w[k]) * float(np.sum(np.abs(pair.v * H)))
    return 0.5 * total


def coeff_a(model: ModelSystem, params: Mapping, pair: NullPair | None = None, validated: bool = False) -> float:
    p, x0 = _prepare(model, params, validated)
    pair = _pair(model, p, x0, pair)
    return 0.5 * float(pair.v @ numdiff.d2f(model, x0, p, pair.w, pair.w))


def _check_alpha1(model, p, x0, alpha1):
    if alpha1 not in p:
        raise BifurcationError(f"unknown parameter {alpha1!r}")
    slope, _ = numdiff.scalar_derivative(lambda t: model.dfe({**p, alpha1: t}), p[alpha1])
    if np.max(np.abs(slope)) * max(abs(p[alpha1]), 1.0) > 1e-8 * (1.0 + np.max(np.abs(x0))):
        raise BifurcationError(f"invalid bifurcation parameter {alpha1!r}: the DFE depends on it")


def coeff_b(model: ModelSystem, params: Mapping, alpha1: str, pair: NullPair | None = None,
            validated: bool = False) -> float:
    p, x0 = _prepare(model, params, validated)
    _check_alpha1(model, p, x0, alpha1)
    pair = _pair(model, p, x0, pair)
    return float(pair.v @ numdiff.d2f_param(model, x0, p, pair.w, alpha1))


@dataclass(frozen=True)
class CTerms:
    c: float
    c2: float
    c3: float
    z: np.ndarray
    sensitivity: float  # |change in c| when z is shifted by one unit of w


def _kernel_complement_solve(A, y):
    """Minimum-norm solution of ``A z = y`` with the numerical kernel of ``A`` projected out."""
    U, s, Vt = np.linalg.svd(A)
    r = len(s) - 1
    return Vt[:r].T @ ((U[:, :r].T @ y) / s[:r])


def coeff_c(model: ModelSystem, params: Mapping, pair: NullPair | None = None, validated: bool = False,
            tol_a: float = TOL_A, full_output: bool = False):
    """Cubic coefficient; defined only when ``a = 0``."""
    p, x0 = _prepare(model, params, validated)
    pair = _pair(model, p, x0, pair)
    v, w = pair.v, pair.w
    y = numdiff.d2f(model, x0, p, w, w)
    scale = a_scale(model, p, pair, validated=True)
    if abs(v @ y) > 2.0 * tol_a * scale:
        raise BifurcationError(
            f"a != 0: c ill-defined (v.B(w,w) = {v @ y:.3e}, tolerance {2 * tol_a * scale:.3e})")
    z = _kernel_complement_solve(pair.A, y)
    c3 = float(v @ numdiff.d3f(model, x0, p, w, w, w)) / 3.0
    c2 = -float(v @ numdiff.d2f(model, x0, p, z, w))
    terms = CTerms(c2 + c3, c2, c3, z, abs(float(v @ y)))
    return terms if full_output else terms.c


def coeff_d(model: ModelSystem, params: Mapping, alpha2: str, pair: NullPair | None = None,
            validated: bool = False) -> float:
    p, x0 = _prepare(model, params, validated)
    if alpha2 not in p:
        raise BifurcationError(f"unknown parameter {alpha2!r}")
    pair = _pair(model, p, x0, pair)
    return float(pair.v @ numdiff.d3f_param(model, x0, p, pair.w, pair.w, alpha2))


def _e_tolerance(b, c, d):
    return 1e-6 * (1.0 + abs(b * d) / (2.0 * abs(b * c)))


def coeff_e(model: ModelSystem, params: Mapping, alpha1: str, alpha2: str, pair: NullPair | None = None,
            validated: bool = False, c: float | None = None):
    """Return ``(e, sufficient)``.

    ``sufficient`` is the flag "``f_uu_alpha1 = 0`` and ``d != 0``", which on its own
    guarantees ``e != 0``.
    """
    p, x0 = _prepare(model, params, validated)
    pair = _pair(model, p, x0, pair)
    if c is None:
        c = coeff_c(model, p, pair, validated=True)
    b = coeff_b(model, p, alpha1, pair, validated=True)
    d = coeff_d(model, p, alpha2, pair, validated=True)
    fuu1, fuu1_mag = _fuu(model, p, x0, pair, alpha1)
    fu2 = float(pair.v @ numdiff.d2f_param(model, x0, p, pair.w, alpha2))
    if abs(c) <= 1e-12 * max(abs(b * d), abs(fuu1 * fu2), 1e-300) / max(abs(b), 1e-300):
        raise BifurcationError("degenerate: e undefined (c = 0)")
    e = (-b * d + fuu1 * fu2) / (2.0 * b * c)
    sufficient = _is_zero(fuu1, fuu1_mag, d) and abs(d) > 0
    return e, sufficient


def _fuu(model, p, x0, pair, alpha):
    t = numdiff.d3f_param(model, x0, p, pair.w, pair.w, alpha)
    return float(pair.v @ t), float(np.sum(np.abs(pair.v * t)))


def _is_zero(value, magnitude, reference):
    return abs(value) <= 1e-8 * max(magnitude, abs(reference), 1e-300)


@dataclass(frozen=True)
class CenterCoefficients:
    a: float
    b: float
    c: float | None
    d: float | None
    e: float | None
    alpha1: str
    alpha2: str | None
    fuualpha1: float | None
    fualpha2: float | None
    a_scale: float
    tol_a: float
    pair: NullPair = field(repr=False)
    c2: float | None = None
    c3: float | None = None
    c_sensitivity: float | None = None
    sufficient: bool | None = None
    # centre-manifold corrected unfolding terms
    d_cm: float | None = None
    fuualpha1_cm: float | None = None
    e_cm: float | None = None

    @property
    def a_is_zero(self) -> bool:
        return bool(abs(self.a) <= self.tol_a * self.a_scale)

    @property
    def c_is_zero(self) -> bool:
        return self.c is None or abs(self.c) <= 1e-9 * max(self.a_scale, 1e-300) ** 2 / max(abs(self.b), 1e-300)

    @property
    def e_is_nonzero(self) -> bool:
        if self.e is None or self.c is None or self.c == 0 or self.d is None:
            return False
        return bool(abs(self.e) > _e_tolerance(self.b, self.c, self.d))

    @property
    def fold_slope(self) -> float | None:
        """Predicted d(fold amplitude)/d(alpha2) at alpha2 = 0 (equal to e)."""
        return self.e

    @property
    def fold_alpha1_slope(self) -> float | None:
        """Predicted d(alpha1 at fold)/d(alpha2) at alpha2 = 0."""
        if self.fualpha2 is None:
            return None
        return -self.fualpha2 / self.b

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "a", "b", "c", "d", "e", "alpha1", "alpha2", "fuualpha1", "fualpha2", "a_scale", "tol_a",
            "c2", "c3", "c_sensitivity", "sufficient", "d_cm", "fuualpha1_cm", "e_cm")}
        out["a_is_zero"] = self.a_is_zero
        out["e_is_nonzero"] = self.e_is_nonzero
        out["v"] = self.pair.v.tolist()
        out["w"] = self.pair.w.tolist()
        return out


def _cm_mixed(model, p, x0, pair, alpha, h2):
    """``f_uu alpha`` including the centre-manifold terms 2 v.B(w, q) + v.f_{x alpha} h2."""
    v, w, A = pair.v, pair.w, pair.A
    kappa = float(v @ w)
    vh = v / kappa
    g = numdiff.d2f_param(model, x0, p, w, alpha)
    rhs = g - (vh @ g) * w
    q = -_kernel_complement_solve(A, rhs)
    q -= (vh @ q) * w
    direct = float(vh @ numdiff.d3f_param(model, x0, p, w, w, alpha))
    extra = 2.0 * float(vh @ numdiff.d2f(model, x0, p, w, q)) + float(vh @ numdiff.d2f_param(model, x0, p, h2, alpha))
    return kappa * (direct + extra)


def center_coefficients(model: ModelSystem, params: Mapping, alpha1: str, alpha2: str | None = None,
                        pair: NullPair | None = None, validated: bool = False, tol_a: float = TOL_A,
                        corrections: bool = True) -> CenterCoefficients:
    """All coefficients at a bifurcation point.

    ``c`` and ``e`` are only computed when ``a`` is zero to ``tol_a``; otherwise
    they are ``None``.
    """
    p, x0 = _prepare(model, params, validated)
    pair = _pair(model, p, x0, pair)
    a = coeff_a(model, p, pair, validated=True)
    b = coeff_b(model, p, alpha1, pair, validated=True)
    scale = a_scale(model, p, pair, validated=True)
    kw = dict(a=a, b=b, alpha1=alpha1, alpha2=alpha2, a_scale=scale, tol_a=tol_a, pair=pair)
    d = coeff_d(model, p, alpha2, pair, validated=True) if alpha2 else None
    if abs(a) > tol_a * scale:
        return CenterCoefficients(c=None, d=d, e=None, fuualpha1=None, fualpha2=None, **kw)

    terms = coeff_c(model, p, pair, validated=True, tol_a=tol_a, full_output=True)
    c = terms.c
    e = fuu1 = fu2 = sufficient = None
    d_cm = fuu1_cm = e_cm = None
    if alpha2:
        fuu1, fuu1_mag = _fuu(model, p, x0, pair, alpha1)
        fu2 = float(pair.v @ numdiff.d2f_param(model, x0, p, pair.w, alpha2))
        if c != 0.0:
            e = (-b * d + fuu1 * fu2) / (2.0 * b * c)
        sufficient = _is_zero(fuu1, fuu1_mag, d) and d != 0.0
        if corrections and c != 0.0:
            kappa = float(pair.v @ pair.w)
            h2 = -terms.z - (pair.v @ -terms.z) / kappa * pair.w
            d_cm = _cm_mixed(model, p, x0, pair, alpha2, h2)
            fuu1_cm = _cm_mixed(model, p, x0, pair, alpha1, h2)
            e_cm = (-b * d_cm + fuu1_cm * fu2) / (2.0 * b * c)
    return CenterCoefficients(
        c=c, d=d, e=e, fuualpha1=fuu1, fualpha2=fu2, c2=terms.c2, c3=terms.c3,
        c_sensitivity=terms.sensitivity, sufficient=sufficient, d_cm=d_cm, fuualpha1_cm=fuu1_cm,
        e_cm=e_cm, **kw)


@dataclass(frozen=True)
class BifClass:
    label: str
    flags: frozenset

    def __contains__(self, flag):
        return flag in self.flags


def classify(coeffs: CenterCoefficients) -> BifClass:
    """Bifurcation type at ``R0 = 1``.

    For ``a != 0`` the label is ``forward`` or ``backward``.  For ``a = 0`` the
    label is ``unfolded-backward``/``unfolded-forward`` (sign of ``c e``) and
    the flags also carry ``two-states-below-threshold`` (``c < 0, e > 0``) or
    ``two-states-above-threshold`` (``c > 0, e > 0``).
    """
    if coeffs.b <= 0:
        raise BifurcationError(f"hypothesis violated: b = {coeffs.b:.6g} <= 0")
    if not coeffs.a_is_zero:
        label = "backward" if coeffs.a > 0 else "forward"
        return BifClass(label, frozenset({label}))
    if coeffs.c is None or coeffs.c_is_zero or not coeffs.e_is_nonzero:
        return BifClass("degenerate", frozenset({"degenerate"}))
    c, e = coeffs.c, coeffs.e
    label = "unfolded-backward" if c * e < 0 else "unfolded-forward"
    flags = {label}
    if e > 0:
        flags.add("two-states-below-threshold" if c < 0 else "two-states-above-threshold")
    return BifClass(label, frozenset(flags))
