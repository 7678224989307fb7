"""Steady-state enumeration, stability labels and scalar polynomial reductions.

``enumerate`` runs a vectorised damped Newton iteration from many seeds at
once (the DFE, roots of the model's reduction polynomial when one is known,
and a ``5**n`` grid), deduplicates the limits and labels each one.

The reductions map every positive steady state of a model to a root of a
polynomial in one scalar unknown:

* ``brauer_quadratic``: the infected level ``I`` of the two-dimensional
  vaccination system,
* ``martcheva_quadratic``: the force of infection ``lam = beta B / (B + D)``,
* ``hepc_X_reduction``: the uninfected fraction ``X = T / (T + I)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import ngm, numdiff
from .models import DomainError, ModelError, ModelSystem, get_model, hepc_dfe_quantities

__all__ = [
    "SteadyState",
    "PolyReduction",
    "ParityAudit",
    "enumerate",
    "classify_state",
    "newton_polish",
    "reduction_for",
    "brauer_quadratic",
    "martcheva_quadratic",
    "hepc_X_reduction",
    "parity_audit",
]

RESIDUAL_TOL = 1e-9
DEDUP_RADIUS = 1e-6


@dataclass(frozen=True)
class SteadyState:
    x: np.ndarray
    eigenvalues: np.ndarray
    stability: str  # stable | unstable | nonhyperbolic
    positivity: str  # positive | boundary | infeasible
    residual: float = 0.0

    @property
    def is_positive(self) -> bool:
        return self.positivity == "positive"

    def to_dict(self, names=None) -> dict:
        out = {
            "x": self.x.tolist(),
            "stability": self.stability,
            "positivity": self.positivity,
            "residual": self.residual,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
        }
        if names is not None:
            out["state"] = dict(zip(names, self.x.tolist()))
        return out


def _scale(x) -> float:
    return 1.0 + float(np.max(np.abs(x)))


def _positivity(x, tol) -> str:
    if np.any(x < -tol):
        return "infeasible"
    if np.all(x > tol):
        return "positive"
    return "boundary"


def classify_state(model: ModelSystem, x, params: Mapping, validated: bool = False) -> SteadyState:
    """Eigenvalues, stability and positivity of a known steady state."""
    p = params if validated else model.validate(params)
    x = np.asarray(x, dtype=float)
    J = numdiff.jacobian(model, x, p)
    eig = np.linalg.eigvals(J)
    eig = eig[np.lexsort((eig.imag, eig.real))]
    tol = ngm.marginal_tolerance(J)
    re = eig.real
    if np.any(np.abs(re) <= tol):
        stability = "nonhyperbolic"
    elif np.all(re < 0):
        stability = "stable"
    else:
        stability = "unstable"
    resid = float(np.max(np.abs(model.rhs(x, p))))
    return SteadyState(x, eig, stability, _positivity(x, 1e-10 * _scale(x)), resid)


# ---------------------------------------------------------------------------
# Newton
# ---------------------------------------------------------------------------

def _residual_cols(model, X, full):
    ok = model.in_domain(X, full)
    F = np.full(X.shape, np.inf)
    if np.any(ok):
        with np.errstate(all="ignore"):
            F[:, ok] = model.rhs_fn(X[:, ok], full)
    F[~np.isfinite(F)] = np.inf
    return F


def _newton_batch(model, X, params, maxit=60):
    """Damped Newton from every column of ``X``; returns ``(X, converged)``."""
    full = model._full(params)
    X = np.array(X, dtype=float)
    F = _residual_cols(model, X, full)
    norm = np.max(np.abs(F), axis=0)
    alive = np.isfinite(norm)
    done = alive & (norm <= 1e-12 * np.maximum(1.0, np.max(np.abs(X), axis=0)))
    for _ in range(maxit):
        act = alive & ~done
        if not np.any(act):
            break
        idx = np.flatnonzero(act)
        J, ok = numdiff.batch_jacobian(model, X[:, idx], params)
        dx = np.zeros((model.n, len(idx)))
        good = ok.copy()
        cols = np.flatnonzero(ok)
        try:
            dx[:, cols] = np.linalg.solve(J[cols], -F[:, idx[cols]].T[:, :, None])[:, :, 0].T
        except np.linalg.LinAlgError:
            for col in cols:
                try:
                    dx[:, col] = np.linalg.solve(J[col], -F[:, idx[col]])
                except np.linalg.LinAlgError:
                    good[col] = False
        good &= np.all(np.isfinite(dx), axis=0)
        alive[idx[~good]] = False
        idx, dx = idx[good], dx[:, good]
        t = np.ones(len(idx))
        pending = np.ones(len(idx), dtype=bool)
        for _ in range(30):
            if not np.any(pending):
                break
            cols = idx[pending]
            trial = X[:, cols] + t[pending] * dx[:, pending]
            Ft = _residual_cols(model, trial, full)
            nt = np.max(np.abs(Ft), axis=0)
            better = nt < norm[cols] * (1.0 - 1e-4 * t[pending]) + 1e-300
            acc = np.flatnonzero(pending)[better]
            X[:, idx[acc]] = trial[:, better]
            F[:, idx[acc]] = Ft[:, better]
            norm[idx[acc]] = nt[better]
            pending[acc] = False
            t[pending] *= 0.5
        # a full step that does not reduce the residual at round-off level is convergence
        stuck = idx[pending]
        xs = np.maximum(1.0, np.max(np.abs(X[:, stuck]), axis=0))
        small = norm[stuck] <= 1e-9 * xs
        done[stuck[small]] = True
        alive[stuck[~small]] = False
        xs = np.maximum(1.0, np.max(np.abs(X), axis=0))
        done |= alive & (norm <= 1e-12 * xs)
        done |= alive & np.isfinite(norm) & (np.max(np.abs(X), axis=0) > 1e12)
        alive &= np.max(np.abs(X), axis=0) <= 1e12
    xs = np.maximum(1.0, np.max(np.abs(X), axis=0))
    conv = alive & (norm <= RESIDUAL_TOL * xs)
    return X, conv


def newton_polish(model: ModelSystem, x, params: Mapping, maxit: int = 20) -> np.ndarray:
    """Refine a near-steady state with accurate Jacobians; raises if it does not converge."""
    p = model._full(params)
    x = np.asarray(x, dtype=float).copy()
    for _ in range(maxit):
        f = model.rhs(x, p)
        if np.max(np.abs(f)) <= 1e-13 * _scale(x):
            return x
        J = numdiff.jacobian(model, x, p)
        try:
            dx = np.linalg.lstsq(J, -f, rcond=None)[0]
        except np.linalg.LinAlgError as exc:  # pragma: no cover - lstsq rarely fails
            raise ModelError(f"polish failed: {exc}") from None
        x_new = x + dx
        try:
            f_new = model.rhs(x_new, p)
        except DomainError:
            break
        if np.max(np.abs(f_new)) >= np.max(np.abs(f)):
            break
        x = x_new
    if np.max(np.abs(model.rhs(x, p))) > RESIDUAL_TOL * _scale(x):
        raise ModelError(f"Newton polish did not converge from {x.tolist()}")
    return x


def _dedup(X, radius):
    kept: list[np.ndarray] = []
    for x in X.T:
        if all(np.max(np.abs(x - y)) > radius * _scale(y) for y in kept):
            kept.append(x.copy())
    return kept


def _grid(model, p, levels=5):
    x0 = model.dfe(p)
    top = 2.0 * max(1.0, float(np.max(np.abs(x0))))
    ticks = (np.arange(levels) + 0.5) / levels * top
    mesh = np.meshgrid(*([ticks] * model.n), indexing="ij")
    return np.stack([m.ravel() for m in mesh])


def enumerate(model: ModelSystem, params: Mapping, validated: bool = False, grid: int = 5,
              use_reduction: bool = True, include_infeasible: bool = False,
              extra_seeds=None) -> list[SteadyState]:
    """All steady states reachable from the seed set, labelled and sorted by infected size."""
    p = params if validated else model.validate(params)
    x0 = model.dfe(p)
    seeds = [x0[:, None]]
    if grid:
        seeds.append(_grid(model, p, grid))
    if use_reduction:
        red = reduction_for(model, p, validated=True)
        if red is not None and not red.is_continuum:
            with np.errstate(divide="ignore", invalid="ignore"):
                states = [red.backmap(r) for r in red.roots(real_only=True)]
            states = [s for s in states if np.all(np.isfinite(s))]
            if states:
                seeds.append(np.column_stack(states))
    if extra_seeds is not None:
        seeds.append(np.asarray(extra_seeds, dtype=float).reshape(model.n, -1))
    X = np.hstack(seeds)
    X, conv = _newton_batch(model, X, p)
    found = X[:, conv]
    # order candidates by residual so the best representative of a cluster wins
    full = model._full(p)
    res = np.max(np.abs(model.rhs_fn(found, full)), axis=0) if found.size else np.zeros(0)
    found = found[:, np.argsort(res, kind="stable")]
    found = np.column_stack([x0, found]) if found.size else x0[:, None]
    out = []
    for x in _dedup(found, DEDUP_RADIUS):
        try:
            x = newton_polish(model, x, p)
            st = classify_state(model, x, p, validated=True)
        except (ModelError, DomainError):
            # limits on the edge of the model domain (e.g. T + I -> 0) are not steady states
            continue
        if st.positivity == "infeasible" and not include_infeasible:
            continue
        out.append(st)
    # polishing can merge clusters
    merged: list[SteadyState] = []
    for st in out:
        if all(np.max(np.abs(st.x - o.x)) > DEDUP_RADIUS * _scale(o.x) for o in merged):
            merged.append(st)
    inf = list(model.infected)
    merged.sort(key=lambda s: (float(np.sum(np.abs(s.x[inf]))), tuple(s.x)))
    return merged


# ---------------------------------------------------------------------------
# Polynomial reductions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolyReduction:
    """A polynomial in one unknown whose admissible roots are the positive steady states.

    ``coeffs`` are ordered from the highest degree down (``numpy.polyval``
    convention).  ``magnitude`` is a reference size for the coefficients used
    for zero tests.  A root ``r`` is admissible when it lies strictly inside
    ``interval`` and ``accept(r)`` holds.
    """

    coeffs: np.ndarray
    variable: str
    interval: tuple
    backmap: Callable[[float], np.ndarray] = field(repr=False)
    accept: Callable[[float], bool] | None = field(default=None, repr=False)
    magnitude: float = 1.0

    @property
    def is_continuum(self) -> bool:
        return bool(np.all(np.abs(self.coeffs) <= 1e-12 * self.magnitude))

    def trimmed(self) -> np.ndarray:
        c = np.asarray(self.coeffs, dtype=float)
        nz = np.flatnonzero(np.abs(c) > 1e-14 * self.magnitude)
        return c[nz[0]:] if nz.size else np.zeros(1)

    def __call__(self, t):
        return np.polyval(self.coeffs, t)

    def roots(self, real_only: bool = False) -> np.ndarray:
        if self.is_continuum:
            raise ModelError("reduction polynomial vanishes identically (continuum of steady states)")
        c = self.trimmed()
        if len(c) < 2:
            return np.zeros(0)
        r = np.roots(c)
        if real_only:
            r = np.sort(r[np.abs(r.imag) <= 1e-9 * (1.0 + np.abs(r.real))].real)
            r = np.array([self._polish(t, c) for t in r])
        return r

    @staticmethod
    def _polish(t, c):
        dc = np.polyder(c)
        for _ in range(3):
            d = np.polyval(dc, t)
            if d == 0:
                break
            step = np.polyval(c, t) / d
            if not np.isfinite(step) or abs(step) > 1e-6 * (1.0 + abs(t)):
                break
            t -= step
        return t

    def admissible_roots(self) -> np.ndarray:
        lo, hi = self.interval
        r = self.roots(real_only=True)
        keep = [t for t in r if lo < t < hi and (self.accept is None or self.accept(t))]
        return np.array(keep)

    def states(self) -> list[np.ndarray]:
        return [self.backmap(t) for t in self.admissible_roots()]

    def min_separation(self) -> float:
        """Smallest gap between two roots (complex ones included) relative to the interval width.

        Only roots within one interval width of the admissible interval count.
        """
        lo, hi = self.interval
        width = hi - lo if np.isfinite(hi - lo) else 1.0 + abs(lo)
        near = [z for z in self.roots() if lo - width <= z.real <= hi + width]
        gaps = [abs(near[i] - near[j]) for i in range(len(near)) for j in range(i + 1, len(near))]
        return min(gaps) / width if gaps else np.inf


def brauer_quadratic(params: Mapping) -> PolyReduction:
    """Quadratic in ``I`` for the two-dimensional vaccination system."""
    beta, K, mu, gamma = params["beta"], params["K"], params["mu"], params["gamma"]
    sigma, phi, theta = params["sigma"], params["phi"], params["theta"]
    a2 = sigma * beta ** 2
    a1 = sigma * beta * (mu + gamma) + beta * (mu + theta + sigma * phi) - sigma * beta ** 2 * K
    a0 = (mu + theta + phi) * (mu + gamma) - beta * (mu + theta + sigma * phi) * K
    mag = max(abs(a2) * K * K, abs(a1) * K, (mu + theta + phi) * (mu + gamma), beta * (mu + theta + phi) * K)

    def backmap(I):
        return np.array([I, phi * (K - I) / (sigma * beta * I + mu + theta + phi)])

    return PolyReduction(np.array([a2, a1, a0]), "I", (0.0, K), backmap, magnitude=mag)


def martcheva_quadratic(params: Mapping) -> PolyReduction:
    """Quadratic in the force of infection ``lam`` in ``(0, beta)``."""
    Lam, beta, D, mu = params["Lambda"], params["beta"], params["D"], params["mu"]
    psi, w, sigma, gamma = params["psi"], params["w"], params["sigma"], params["gamma"]
    eta, delta = params["eta"], params["delta"]
    c0 = delta * D / eta
    k = w * gamma / (mu + w)
    mg = (mu + gamma) * c0
    p2 = sigma * (k * c0 - Lam) - mg * sigma
    p1 = Lam * beta * sigma + (k * c0 - Lam) * (mu + sigma * psi) - mg * (mu + sigma * (mu + psi))
    p0 = Lam * beta * (mu + sigma * psi) - mg * mu * (mu + psi)
    mag = max(Lam, k * c0, mg) * max(1.0, beta) ** 2 * max(1.0, mu + psi + sigma) ** 2

    def backmap(lam):
        B = lam * D / (beta - lam)
        I = delta * B / eta
        R = gamma * I / (mu + w)
        S = (Lam + w * R) / (mu + psi + lam)
        V = psi * S / (mu + sigma * lam)
        return np.array([S, V, I, R, B])

    return PolyReduction(np.array([p2, p1, p0]), "lam", (0.0, beta), backmap, magnitude=mag)


def hepc_X_reduction(params: Mapping) -> PolyReduction:
    """Cubic in ``X = T/(T+I)`` for the hepatitis C model.

    With ``k = rho R*`` and ``L(X) = b k X + (c + b X)(r_I - delta)`` the total
    cell count is ``N = T_max L / (r_I (c + b X))`` and

        p3(X) = s r_I^2 (c + b X)^2 + T_max X L(X) Q(X),
        Q(X) = r_T delta (c + bX) - r_T b k X - d r_I (c + bX) - r_I b k (1 - X).

    Admissible roots lie in ``(0, 1)`` with ``L > 0``.
    """
    s, r_T, T_max, d = params.get("s", 0.0), params["r_T"], params["T_max"], params.get("d", 0.0)
    b, c, delta, r_I = params["b"], params["c"], params["delta"], params["r_I"]
    k = params["rho"] * params["R_star"]
    L = np.array([b * k + b * (r_I - delta), c * (r_I - delta)])
    Q = np.array([r_T * delta * b - r_T * b * k - d * r_I * b + r_I * b * k,
                  r_T * delta * c - d * r_I * c - r_I * b * k])
    lin = np.array([b, c])
    p3 = np.polyadd(s * r_I ** 2 * np.polymul(lin, lin), T_max * np.polymul([1.0, 0.0], np.polymul(L, Q)))
    p3 = np.concatenate([np.zeros(4 - len(p3)), p3])
    lmag = b * k + (b + c) * (r_I + delta)
    qmag = (r_T * delta + d * r_I) * (b + c) + (r_T + r_I) * b * k
    mag = s * r_I ** 2 * (b + c) ** 2 + T_max * lmag * qmag

    def backmap(X):
        N = T_max * np.polyval(L, X) / (r_I * (c + b * X))
        I = (1.0 - X) * N
        return np.array([X * N, I, k * I / (c + b * X)])

    def accept(X):
        # roots of L are the degenerate N = 0 limit, keep a margin above round-off
        return np.polyval(L, X) > 1e-9 * lmag

    return PolyReduction(p3, "X", (0.0, 1.0), backmap, accept, magnitude=mag)


def _truncated_p2(params):
    """``p3(X) / X`` for ``s = 0``."""
    red = hepc_X_reduction({**params, "s": 0.0})
    return PolyReduction(red.coeffs[:-1], "X", red.interval, red.backmap, red.accept, red.magnitude)


def reduction_for(model: ModelSystem, params: Mapping, validated: bool = False) -> PolyReduction | None:
    """The reduction polynomial for a built-in model, or ``None``."""
    p = model._full(params if validated else model.validate(params))
    if model.id == "brauer2d":
        return brauer_quadratic(p)
    if model.id == "brauer3d":
        red = brauer_quadratic({**p, "K": p["Lambda"] / p["mu"]})
        K = p["Lambda"] / p["mu"]

        def lift(I, _b=red.backmap):
            I_, V = _b(I)
            return np.array([K - I_ - V, I_, V])

        return PolyReduction(red.coeffs, "I", red.interval, lift, magnitude=red.magnitude)
    if model.id == "martcheva5d":
        return martcheva_quadratic(p)
    if model.id == "hepc3d":
        return hepc_X_reduction(p)
    if model.id == "hepc3d-truncated":
        return _truncated_p2(p)
    return None


# ---------------------------------------------------------------------------
# Parity audit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParityAudit:
    count: int | None
    r0: float
    parity_ok: bool | None
    abstained: bool
    reason: str = ""
    feasibility: float | None = None  # rho R* + r_I - delta for the hep-C model

    def to_dict(self) -> dict:
        return dict(count=self.count, r0=self.r0, parity_ok=self.parity_ok, abstained=self.abstained,
                    reason=self.reason, feasibility=self.feasibility)


PARITY_MODELS = ("brauer2d", "brauer3d", "martcheva5d", "hepc3d")


def parity_audit(model: ModelSystem | str, params: Mapping, validated: bool = False,
                 min_separation: float = 1e-4) -> ParityAudit:
    """Count positive steady states through the reduction and compare parity with ``R0``.

    The count should be even for ``R0 < 1`` and odd for ``R0 > 1``.  The audit
    abstains near ``R0 = 1``, when roots nearly coincide and (hep-C) when the
    feasibility side condition nearly switches at a root.
    """
    if isinstance(model, str):
        model = get_model(model)
    if model.id not in PARITY_MODELS:
        raise ModelError(f"parity audit is not available for {model.id!r}")
    p = params if validated else model.validate(params)
    r0 = ngm.r0(model, p, validated=True).r0
    feas = None
    if model.id == "hepc3d":
        feas = p["rho"] * p["R_star"] + p["r_I"] - p["delta"]
    if abs(r0 - 1.0) < 1e-6:
        return ParityAudit(None, r0, None, True, "R0 within 1e-6 of 1", feas)
    red = reduction_for(model, p, validated=True)
    sep = red.min_separation()
    if sep < min_separation:
        return ParityAudit(None, r0, None, True, f"near-degenerate roots (separation {sep:.2e})", feas)
    if red.accept is not None:
        # the admissibility side condition must not be close to switching at any root
        for t in red.roots(real_only=True):
            lo, hi = red.interval
            if lo < t < hi and abs(_accept_margin(model, p, t)) < 1e-8:
                return ParityAudit(None, r0, None, True, "root near the feasibility boundary", feas)
    count = len(red.admissible_roots())
    ok = (count % 2 == 0) == (r0 < 1.0)
    return ParityAudit(count, r0, ok, False, "", feas)


def _accept_margin(model, p, X):
    b, c, r_I, delta = p["b"], p["c"], p["r_I"], p["delta"]
    k = p["rho"] * p["R_star"]
    L = b * k * X + (c + b * X) * (r_I - delta)
    return L / (b * k + (b + c) * (r_I + delta))


def count_positive(states) -> int:
    return sum(1 for s in states if s.is_positive)
