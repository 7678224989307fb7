"""Pseudo-arclength continuation of steady states and fold detection.

Branches are traced in scaled coordinates ``z = (x / sx, alpha / sa)`` with
``sx = 1 + |x_start|_inf`` and ``sa = |alpha_start|`` so that step bounds are
relative.  Folds are marked where the ``alpha`` component of the tangent
changes sign, refined by bisection along the arc and then polished on the
extended system

    f(x, alpha) = 0,   J(x, alpha) phi = 0,   l . phi = 1.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq

from . import ngm, numdiff
from .bifcoeffs import null_pair
from .models import DomainError, ModelError, ModelSystem, ParamError

__all__ = [
    "ContinuationError",
    "Branch",
    "FoldPoint",
    "FoldLocus",
    "trace",
    "trace_both",
    "fold_points",
    "fold_locus",
    "threshold_alpha1",
    "bifurcating_start",
    "transcritical_fold",
    "moore_refine",
    "CSV_SCHEMA_VERSION",
]

CSV_SCHEMA_VERSION = 1
JSON_SCHEMA_VERSION = 1

DS_MIN = 1e-6
DS_MAX = 1e-1


class ContinuationError(ModelError):
    pass


# ---------------------------------------------------------------------------
# Branch containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldPoint:
    alpha: float
    x: np.ndarray
    tangent: np.ndarray  # unit tangent in scaled coordinates at the fold
    null_vector: np.ndarray | None = None
    residual: float = 0.0
    refined: str = "bisection"  # bisection | moore

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "x": self.x.tolist(), "residual": self.residual, "refined": self.refined}


@dataclass(frozen=True)
class Branch:
    model: ModelSystem = field(repr=False)
    alpha1: str
    params: dict
    s: np.ndarray
    alpha: np.ndarray
    x: np.ndarray  # (k, n)
    tangents: np.ndarray  # (k, n + 1), scaled coordinates
    stability: tuple
    r0: np.ndarray
    max_re: np.ndarray
    fold_markers: tuple  # i such that the tangent alpha-component flips between samples i and i + 1
    scales: tuple  # (sx, sa)
    reason: str = ""

    def __len__(self):
        return len(self.alpha)

    @property
    def fold_flags(self) -> np.ndarray:
        flags = np.zeros(len(self), dtype=int)
        flags[list(self.fold_markers)] = 1
        return flags

    def to_csv(self) -> str:
        names = list(self.model.state_names)
        buf = io.StringIO()
        buf.write(f"# epibif branch csv v{CSV_SCHEMA_VERSION}: model={self.model.id} alpha1={self.alpha1} "
                  f"columns=s,alpha1,{','.join(names)},R0,maxRe,fold_flag,stability\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", self.alpha1, *names, "R0", "maxRe", "fold_flag", "stability"])
        flags = self.fold_flags
        for i in range(len(self)):
            w.writerow([_fmt(self.s[i]), _fmt(self.alpha[i]), *(_fmt(v) for v in self.x[i]),
                        _fmt(self.r0[i]), _fmt(self.max_re[i]), int(flags[i]), self.stability[i]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "schema_version": JSON_SCHEMA_VERSION,
            "model": self.model.id,
            "alpha1": self.alpha1,
            "params": {k: v for k, v in sorted(self.params.items())},
            "state_names": list(self.model.state_names),
            "s": self.s.tolist(),
            "alpha": self.alpha.tolist(),
            "x": self.x.tolist(),
            "stability": list(self.stability),
            "R0": self.r0.tolist(),
            "maxRe": self.max_re.tolist(),
            "fold_markers": list(self.fold_markers),
            "reason": self.reason,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def _fmt(v) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# Numerical kernels
# ---------------------------------------------------------------------------

class _Problem:
    def __init__(self, model, params, alpha1, sx, sa):
        if alpha1 not in params:
            raise ParamError(f"unknown parameter {alpha1!r}")
        self.model = model
        self.p = dict(model._full(params))
        self.alpha1 = alpha1
        self.sx = float(sx)
        self.sa = float(sa)
        self.n = model.n

    def params_at(self, alpha):
        q = dict(self.p)
        q[self.alpha1] = float(alpha)
        return q

    def split(self, z):
        return z[:-1] * self.sx, z[-1] * self.sa

    def join(self, x, alpha):
        return np.append(np.asarray(x, dtype=float) / self.sx, alpha / self.sa)

    def f(self, z):
        x, a = self.split(z)
        return self.model.rhs(x, self.params_at(a))

    def jac(self, z):
        """``n x (n+1)`` Jacobian of ``f`` in scaled coordinates by central differences."""
        x, a = self.split(z)
        n = self.n
        # evaluate all 2(n+1) stencil points in one vectorised call
        h = np.cbrt(np.finfo(float).eps) * np.maximum(1.0, np.abs(z))
        X = np.repeat(x[:, None], 2 * n, axis=1)
        for j in range(n):
            X[j, 2 * j] += h[j] * self.sx
            X[j, 2 * j + 1] -= h[j] * self.sx
        P = self.params_at(a)
        Fx = self.model.rhs(X, P)
        J = np.empty((n, n + 1))
        for j in range(n):
            J[:, j] = (Fx[:, 2 * j] - Fx[:, 2 * j + 1]) / (2.0 * h[j])
        ha = h[-1]
        fp = self.model.rhs(x, self.params_at(a + ha * self.sa))
        fm = self.model.rhs(x, self.params_at(a - ha * self.sa))
        J[:, n] = (fp - fm) / (2.0 * ha)
        return J

    def tangent(self, z, t_prev):
        J = self.jac(z)
        if t_prev is None:
            t = np.linalg.svd(J)[2][-1]
        else:
            M = np.vstack([J, t_prev])
            rhs = np.zeros(self.n + 1)
            rhs[-1] = 1.0
            t = np.linalg.solve(M, rhs)
        return t / np.linalg.norm(t)

    def correct(self, zp, t, maxit=12):
        """Newton on ``[f(z); t.(z - zp)] = 0``; returns ``(z, iterations)`` or raises."""
        z = zp.copy()
        for it in range(1, maxit + 1):
            F = self.f(z)
            J = self.jac(z)
            H = np.append(F, t @ (z - zp))
            M = np.vstack([J, t])
            dz = np.linalg.solve(M, -H)
            if not np.all(np.isfinite(dz)):
                raise ContinuationError("non-finite corrector step")
            z = z + dz
            x, _ = self.split(z)
            if np.max(np.abs(dz)) <= 1e-11 and np.max(np.abs(self.f(z))) <= 1e-10 * (1.0 + np.max(np.abs(x))):
                return z, it
        raise ContinuationError("corrector did not converge")


def _sample_info(prob, z):
    x, a = prob.split(z)
    P = prob.params_at(a)
    J = prob.jac(z)[:, :-1] / prob.sx
    eig = np.linalg.eigvals(J)
    tol = ngm.marginal_tolerance(J)
    lead = float(np.max(eig.real))
    if abs(lead) <= tol:
        stab = "nonhyperbolic"
    else:
        stab = "stable" if lead < 0 else "unstable"
    r0 = math.nan
    if prob.model.has_fv_split:
        try:
            r0 = ngm.r0(prob.model, P, validated=True).r0
        except ModelError:
            pass
    return stab, r0, lead


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------

def trace(model: ModelSystem, params: Mapping, alpha1: str, start, direction: int = 1,
          alpha_range: tuple | None = None, max_steps: int = 10_000, ds: float = 1e-2,
          stop_at_boundary: bool = True, max_folds: int | None = None, scales: tuple | None = None,
          max_arclength: float | None = None) -> Branch:
    """Follow the steady-state branch through ``start`` as ``alpha1`` varies.

    ``direction`` is the initial sign of ``d alpha1 / ds``.  The branch ends
    when it leaves the nonnegative orthant (if ``stop_at_boundary`` and the
    start is nonnegative), when ``alpha1`` leaves ``alpha_range`` or becomes
    inadmissible, after ``max_steps`` steps, after ``max_folds`` folds, or
    when the corrector fails at the minimum step.
    """
    p = model.validate(params)
    x_start = np.asarray(getattr(start, "x", start), dtype=float)
    a0 = float(p[alpha1])
    if alpha_range is None:
        alpha_range = (a0 / 10.0, a0 * 10.0) if a0 > 0 else (a0 - 10.0, a0 + 10.0)
    lo, hi = alpha_range
    sx, sa = scales if scales is not None else (1.0 + float(np.max(np.abs(x_start))), abs(a0) if a0 else 1.0)
    prob = _Problem(model, p, alpha1, sx, sa)
    nonneg = bool(np.all(x_start >= 0))
    bound_tol = 1e-12 * sx

    z = prob.join(x_start, a0)
    if np.max(np.abs(prob.f(z))) > 1e-10 * sx:
        try:
            z, _ = prob.correct(z, np.append(np.zeros(model.n), 1.0))
        except (ContinuationError, np.linalg.LinAlgError, DomainError):
            raise ContinuationError("start is not close to a steady state") from None
    t = prob.tangent(z, None)
    if t[-1] * direction < 0 or (t[-1] == 0 and direction < 0):
        t = -t

    zs, ts, s_list = [z], [t], [0.0]
    markers: list[int] = []
    ds = float(np.clip(ds, DS_MIN, DS_MAX))
    s_total = 0.0
    reason = "max steps reached"
    for _ in range(max_steps):
        try:
            znew, its = prob.correct(z + ds * t, t)
            tnew = prob.tangent(znew, t)
            ok = its <= 8 and t @ tnew > 0.95
        except (ContinuationError, np.linalg.LinAlgError, DomainError):
            ok, its = False, 99
        if not ok:
            ds *= 0.5
            if ds < DS_MIN:
                reason = "corrector failed at minimum step"
                break
            continue
        step = float(np.linalg.norm(znew - z))
        xnew, anew = prob.split(znew)
        if not (lo <= anew <= hi):
            reason = "parameter range exit"
            break
        if not model.is_admissible(prob.params_at(anew)):
            reason = "parameter left admissible set"
            break
        if stop_at_boundary and nonneg and np.any(xnew < -bound_tol):
            reason = "left nonnegative orthant"
            break
        if np.sign(tnew[-1]) != np.sign(t[-1]) and t[-1] != 0:
            markers.append(len(zs) - 1)
        s_total += step
        z, t = znew, tnew
        zs.append(z)
        ts.append(t)
        s_list.append(s_total)
        if its <= 3:
            ds = min(ds * 1.3, DS_MAX)
        if max_folds is not None and len(markers) >= max_folds:
            reason = "fold limit reached"
            break
        if max_arclength is not None and s_total >= max_arclength:
            reason = "arclength limit reached"
            break

    info = [_sample_info(prob, zz) for zz in zs]
    X = np.array([prob.split(zz)[0] for zz in zs])
    A = np.array([prob.split(zz)[1] for zz in zs])
    fixed = {k: v for k, v in p.items() if k != alpha1}
    return Branch(model, alpha1, fixed, np.array(s_list), A, X, np.array(ts),
                  tuple(i[0] for i in info), np.array([i[1] for i in info]), np.array([i[2] for i in info]),
                  tuple(markers), (sx, sa), reason)


def trace_both(model, params, alpha1, start, **kw) -> Branch:
    """Trace in both directions from ``start`` and join the halves into one branch."""
    fwd = trace(model, params, alpha1, start, direction=1, **kw)
    kw = dict(kw)
    kw["scales"] = fwd.scales
    bwd = trace(model, params, alpha1, start, direction=-1, **kw)
    k = len(bwd)
    rev = slice(k - 1, 0, -1)  # drop the shared start sample from the backward half
    s = np.concatenate([-bwd.s[rev], fwd.s])
    s = s - s[0]
    markers = tuple(k - 2 - i for i in reversed(bwd.fold_markers) if i > 0) + \
        tuple(k - 1 + i for i in fwd.fold_markers)
    # the backward half's marker at index 0 would sit on the join; recompute there
    tb = -bwd.tangents[rev]
    tang = np.vstack([tb, fwd.tangents]) if k > 1 else fwd.tangents
    join = k - 1
    extra = ()
    if k > 1 and np.sign(tang[join - 1][-1]) != np.sign(tang[join][-1]) and tang[join - 1][-1] != 0:
        extra = (join - 1,)
    markers = tuple(sorted(set(markers) | set(extra)))
    return Branch(
        model, alpha1, fwd.params, s,
        np.concatenate([bwd.alpha[rev], fwd.alpha]),
        np.vstack([bwd.x[rev], fwd.x]) if k > 1 else fwd.x,
        tang,
        tuple(bwd.stability[rev]) + fwd.stability,
        np.concatenate([bwd.r0[rev], fwd.r0]),
        np.concatenate([bwd.max_re[rev], fwd.max_re]),
        markers, fwd.scales, f"backward: {bwd.reason}; forward: {fwd.reason}")


# ---------------------------------------------------------------------------
# Folds
# ---------------------------------------------------------------------------

def moore_refine(model: ModelSystem, params: Mapping, alpha1: str, x, alpha, phi=None, maxit: int = 20,
                 tol: float = 1e-12):
    """Newton on the extended system ``f = 0, J phi = 0, l . phi = 1``.

    Returns ``(x, alpha, phi)``.  ``l`` is the starting ``phi``.
    """
    p = dict(model._full(params))
    x = np.asarray(x, dtype=float).copy()
    n = model.n
    P = {**p, alpha1: float(alpha)}
    if phi is None:
        J = numdiff.jacobian(model, x, P)
        phi = np.linalg.svd(J)[2][-1]
    phi = np.asarray(phi, dtype=float)
    ell = phi / (phi @ phi)
    eye = np.eye(n)
    for _ in range(maxit):
        P = {**p, alpha1: float(alpha)}
        f = model.rhs(x, P)
        J = numdiff.jacobian(model, x, P)
        G = np.concatenate([f, J @ phi, [ell @ phi - 1.0]])
        M = np.zeros((2 * n + 1, 2 * n + 1))
        M[:n, :n] = J
        M[:n, n] = numdiff.derivative(model, x, P, alpha1)
        M[n:2 * n, :n] = np.column_stack([numdiff.d2f(model, x, P, phi, eye[j]) for j in range(n)])
        M[n:2 * n, n] = numdiff.d2f_param(model, x, P, phi, alpha1)
        M[n:2 * n, n + 1:] = J
        M[2 * n, n + 1:] = ell
        try:
            d = np.linalg.solve(M, -G)
        except np.linalg.LinAlgError:
            raise ContinuationError("extended system singular") from None
        x = x + d[:n]
        alpha = alpha + d[n]
        phi = phi + d[n + 1:]
        if np.max(np.abs(d[:n])) <= tol * (1.0 + np.max(np.abs(x))) and abs(d[n]) <= tol * (1.0 + abs(alpha)):
            P = {**p, alpha1: float(alpha)}
            return x, float(alpha), phi
    raise ContinuationError("extended system did not converge")


def fold_points(branch: Branch, polish: bool = True) -> list[FoldPoint]:
    """Refine every fold marker of ``branch``."""
    out = []
    if not branch.fold_markers:
        return out
    model = branch.model
    sx, sa = branch.scales
    p = {**branch.params, branch.alpha1: float(branch.alpha[0])}
    prob = _Problem(model, p, branch.alpha1, sx, sa)
    for i in branch.fold_markers:
        z0 = prob.join(branch.x[i], branch.alpha[i])
        z1 = prob.join(branch.x[i + 1], branch.alpha[i + 1])
        t0 = branch.tangents[i]
        h = float(t0 @ (z1 - z0))
        lo, hi = 0.0, h
        sign0 = np.sign(t0[-1])
        z_best, t_best = z1, branch.tangents[i + 1]
        a_lo, a_hi = branch.alpha[i], branch.alpha[i + 1]
        for _ in range(80):
            if abs(a_hi - a_lo) <= 1e-9 * sa and hi - lo < 1e-6:
                break
            mid = 0.5 * (lo + hi)
            try:
                zm, _ = prob.correct(z0 + mid * t0, t0)
                tm = prob.tangent(zm, t0)
            except (ContinuationError, np.linalg.LinAlgError, DomainError):
                break
            am = prob.split(zm)[1]
            if np.sign(tm[-1]) == sign0:
                lo, a_lo = mid, am
            else:
                hi, a_hi = mid, am
            z_best, t_best = zm, tm
        x, a = prob.split(z_best)
        fp = FoldPoint(float(a), x, t_best, None, float(np.max(np.abs(prob.f(z_best)))), "bisection")
        if polish:
            try:
                xm, am, phi = moore_refine(model, p, branch.alpha1, x, a, phi=t_best[:-1] * sx)
                if np.max(np.abs(xm - x)) <= 1e-3 * sx and abs(am - a) <= 1e-3 * sa:
                    res = float(np.max(np.abs(model.rhs(xm, {**p, branch.alpha1: am}))))
                    fp = FoldPoint(am, xm, t_best, phi / np.linalg.norm(phi), res, "moore")
            except (ContinuationError, ModelError):
                pass
        out.append(fp)
    return out


# ---------------------------------------------------------------------------
# Fold locus in a second parameter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldLocus:
    alpha2: np.ndarray  # offsets from the base value
    alpha1: np.ndarray  # fold value of alpha1
    u: np.ndarray  # centre-manifold amplitude v.(x - x0) / v.w of the fold state
    x: np.ndarray
    slope_u: float  # dU/d alpha2 at 0
    slope_alpha1: float  # dA1/d alpha2 at 0
    base: dict
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "alpha2": self.alpha2.tolist(), "alpha1": self.alpha1.tolist(), "u": self.u.tolist(),
            "slope_u": self.slope_u, "slope_alpha1": self.slope_alpha1, "reason": self.reason,
        }


def threshold_alpha1(model, p, alpha1, guess):
    """Value of ``alpha1`` with ``R0 = 1`` near ``guess``."""
    def g(t):
        return math.log(ngm.r0(model, {**p, alpha1: t}, validated=True).r0)

    lo, hi = guess, guess
    glo = ghi = g(guess)
    if glo == 0.0:
        return guess
    for _ in range(60):
        if glo * ghi < 0:
            break
        lo, hi = lo / 1.05, hi * 1.05
        glo, ghi = g(lo), g(hi)
    else:
        raise ContinuationError("R0 = 1 not bracketed in alpha1")
    return brentq(g, lo, hi, xtol=1e-15 * abs(guess), rtol=4 * np.finfo(float).eps, maxiter=200)


def bifurcating_start(model: ModelSystem, params: Mapping, alpha1: str, amplitude: float | None = None,
                      sign: float = 1.0) -> tuple[np.ndarray, float]:
    """A point ``(x, alpha1)`` on the branch that leaves the DFE where ``R0 = 1``.

    The point is the DFE shifted by ``sign * amplitude`` along the null vector
    and corrected onto the steady-state set.
    """
    p = model.validate(params)
    a_star = threshold_alpha1(model, p, alpha1, p[alpha1])
    q = {**p, alpha1: a_star}
    pair = null_pair(model, q, validated=True, tol=1e-4)
    sx = 1.0 + float(np.max(np.abs(pair.x0)))
    eps = 1e-4 * sx if amplitude is None else amplitude
    prob = _Problem(model, q, alpha1, sx, abs(a_star) if a_star else 1.0)
    z = prob.join(pair.x0 + sign * eps * pair.w, a_star)
    vz = np.append(pair.v * sx, 0.0)
    try:
        z, _ = prob.correct(z, vz / np.linalg.norm(vz))
    except (np.linalg.LinAlgError, DomainError) as exc:
        raise ContinuationError(f"branch switching failed: {exc}") from None
    return prob.split(z)


def transcritical_fold(model, p, alpha1, pair_base, eps_u, search_u):
    """Fold of the branch leaving the DFE at ``R0 = 1`` for the current parameters."""
    a_star = threshold_alpha1(model, p, alpha1, p[alpha1])
    q = {**p, alpha1: a_star}
    pair = null_pair(model, q, validated=True, tol=1e-4)
    x0 = pair.x0
    sx = 1.0 + float(np.max(np.abs(x0)))
    sa = abs(a_star)
    prob = _Problem(model, q, alpha1, sx, sa)
    folds = []
    for sgn in (1.0, -1.0):
        # branch switching: a point on the bifurcating branch at amplitude sgn * eps_u
        target = sgn * eps_u
        x = x0 + target * pair.w
        z = prob.join(x, a_star)
        vz = np.append(pair.v * sx, 0.0)
        vz /= np.linalg.norm(vz)
        try:
            z, _ = prob.correct(z, vz)
        except (ContinuationError, np.linalg.LinAlgError, DomainError):
            continue
        xs, a_s = prob.split(z)
        span = search_u / sx
        br = trace(model, {**q, alpha1: a_s}, alpha1, xs, direction=1, stop_at_boundary=False,
                   max_folds=1, scales=(sx, sa), ds=min(span / 20, DS_MAX), max_arclength=4 * span,
                   alpha_range=(a_star * 0.5, a_star * 1.5) if a_star > 0 else None)
        br2 = trace(model, {**q, alpha1: a_s}, alpha1, xs, direction=-1, stop_at_boundary=False,
                    max_folds=1, scales=(sx, sa), ds=min(span / 20, DS_MAX), max_arclength=4 * span,
                    alpha_range=(a_star * 0.5, a_star * 1.5) if a_star > 0 else None)
        for b in (br, br2):
            for fp in fold_points(b):
                u = float(pair_base.v @ (fp.x - pair_base.x0) / (pair_base.v @ pair_base.w))
                folds.append((abs(u), fp, u))
        if folds:
            break
    if not folds:
        raise ContinuationError("no fold found near the transcritical point")
    folds.sort(key=lambda f: f[0])
    return folds[0][1], folds[0][2]


def fold_locus(model: ModelSystem, params: Mapping, alpha1: str, alpha2: str, alpha2_range: tuple | None = None,
               step: float | None = None, orientation: int = 1, n_points: int = 2) -> FoldLocus:
    """Fold curve ``(alpha2, A1(alpha2), U(alpha2))`` through an ``a = 0`` point.

    ``params`` must sit at ``R0 = 1`` with ``a = 0``.  Folds are located at
    ``alpha2 = +-h, +-2h, ...`` (``h = step``) by tracing the branch that
    leaves the DFE and refining its turning point; ``alpha2`` itself is never
    set to its base value where the fold merges with the DFE.  With
    ``orientation = -1`` the offsets are applied with the opposite sign, which
    reverses the crossing direction.  The slopes at ``alpha2 = 0`` come from
    Richardson-extrapolated central differences of the computed locus.
    """
    p = model.validate(params)
    base2 = float(p[alpha2])
    h = step if step is not None else 1e-3 * (abs(base2) if base2 else 1.0)
    pair = null_pair(model, p, validated=True)
    sx = 1.0 + float(np.max(np.abs(pair.x0)))
    offsets = [k * h for k in range(-n_points, n_points + 1) if k != 0]
    if alpha2_range is not None:
        lo, hi = alpha2_range
        extra = np.linspace(lo, hi, 9)
        offsets += [float(o) for o in extra if abs(o) > 2.5 * h * n_points]
    offsets = sorted(set(offsets), key=abs)
    rows = []
    reason = ""
    for off in offsets:
        q = {**p, alpha2: base2 + orientation * off}
        if not model.is_admissible(q):
            reason = f"alpha2 offset {off:g} inadmissible"
            continue
        # every locus point is seeded independently: plain continuation of the
        # extended system in alpha2 is attracted by the DFE, which solves it too
        try:
            fp, u = transcritical_fold(model, q, alpha1, pair, 1e-6 * sx, max(0.2, 50 * abs(off)) * sx)
        except (ContinuationError, ModelError) as exc:
            reason = f"stopped at offset {off:g}: {exc}"
            continue
        rows.append((off, fp.alpha, u, fp.x))
    rows.sort(key=lambda r: r[0])
    off = np.array([r[0] for r in rows])
    A1 = np.array([r[1] for r in rows])
    U = np.array([r[2] for r in rows])
    X = np.array([r[3] for r in rows]) if rows else np.zeros((0, model.n))

    def slope(vals):
        table = dict(zip(off.tolist(), vals.tolist()))
        d1 = (table.get(h, np.nan) - table.get(-h, np.nan)) / (2 * h)
        d2 = (table.get(2 * h, np.nan) - table.get(-2 * h, np.nan)) / (4 * h)
        if np.isfinite(d2):
            return (4 * d1 - d2) / 3
        return d1

    s_u = slope(U) if len(rows) else math.nan
    s_a = slope(A1 - p[alpha1]) if len(rows) else math.nan
    return FoldLocus(off, A1, U, X, float(s_u), float(s_a), dict(p), reason)
