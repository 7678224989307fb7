"""Directional finite differences of model right-hand sides.

Every derivative here is a mixed directional derivative

    D^k f(x, p)[u_1, ..., u_k] = d^k/dt_1...dt_k f(x + sum t_i u_i, p + sum t_i q_i) |_{t=0}

where each direction is either a state vector ``u_i`` or a parameter name
(a unit change ``q_i`` in that parameter).  It is estimated with the symmetric
``2^k``-point stencil

    sum_{s in {+1,-1}^k} (prod s) f(x + h sum s_i u_i) / (2h)^k,

whose error is even in ``h``, so Neville/Ridders extrapolation over a geometric
sequence of steps converges quickly.  Directions are rescaled to a common
characteristic length before differencing and the result is scaled back, so
the derivative is exactly multilinear in the directions.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .models import DomainError, ModelError, ModelSystem, ParamError

__all__ = [
    "NumDiffError",
    "Direction",
    "derivative",
    "d2f",
    "d3f",
    "d2f_param",
    "d3f_param",
    "jacobian",
    "scalar_derivative",
    "batch_jacobian",
]

Direction = Union[np.ndarray, Sequence[float], str]

_CON = 2.0
_NTAB = 12
_SAFE = 2.0
_H0 = (1e-1, 1e-2, 1e-3)
_MAX_SHRINK = 80


class NumDiffError(ModelError, ArithmeticError):
    """Finite-difference stencil produced non-finite values or never entered the domain."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


def _extrapolate(quotient: Callable[[float], np.ndarray], h0: float):
    """Ridders extrapolation of ``quotient(h)`` to ``h -> 0``; returns ``(value, error)``."""
    h = h0
    for _ in range(_MAX_SHRINK):
        try:
            first = quotient(h)
            break
        except DomainError:
            h /= _CON
    else:
        raise NumDiffError(f"stencil never entered the model domain (last step {h:g})")

    con2 = _CON * _CON
    prev = [first]
    best, err = first, math.inf
    for i in range(1, _NTAB):
        h /= _CON
        row = [quotient(h)]
        fac = con2
        for j in range(1, i + 1):
            row.append((row[j - 1] * fac - prev[j - 1]) / (fac - 1.0))
            fac *= con2
            errt = max(np.max(np.abs(row[j] - row[j - 1])), np.max(np.abs(row[j] - prev[j - 1])))
            if errt <= err:
                err, best = errt, row[j]
        if np.max(np.abs(row[i] - prev[i - 1])) >= _SAFE * err:
            break
        prev = row
    return best, err


def _best_of(quotient):
    """Extrapolate from several starting steps and keep the smallest error estimate."""
    best = None
    for h0 in _H0:
        value, err = _extrapolate(quotient, h0)
        if best is None or err < best[1]:
            best = (value, err)
        if err == 0.0:
            break
    return best


def _resolve(direction, x, params):
    """Split a direction into ``(state_part, param_name, length)``.

    ``length`` is the characteristic size the unit step is rescaled to.
    """
    if isinstance(direction, str):
        if direction not in params:
            raise ParamError(f"unknown parameter direction {direction!r}")
        value = float(params[direction])
        return None, direction, abs(value) if value != 0.0 else 1.0
    u = np.asarray(direction, dtype=float)
    if u.shape != x.shape:
        raise ValueError(f"direction has shape {u.shape}, state has shape {x.shape}")
    if not np.all(np.isfinite(u)):
        raise ValueError("direction has non-finite entries")
    return u, None, 1.0 + float(np.max(np.abs(x)))


def _generic_derivative(fun, x, params, directions):
    x = np.asarray(x, dtype=float)
    k = len(directions)
    resolved = [_resolve(d, x, params) for d in directions]

    # unit-normalise each direction to its characteristic length
    scaled, factor = [], 1.0
    for u, pname, length in resolved:
        if u is not None:
            norm = float(np.max(np.abs(u)))
            if norm == 0.0:
                out = np.asarray(fun(x, params), dtype=float)
                return np.zeros_like(out), 0.0
            scaled.append((u * (length / norm), None, 0.0))
            factor *= length / norm
        else:
            scaled.append((None, pname, length))
            factor *= length

    signs = np.array(list(itertools.product((1.0, -1.0), repeat=k)))
    weights = np.prod(signs, axis=1)
    shift = np.zeros((x.shape[0], len(signs)))
    pshift: dict[str, np.ndarray] = {}
    for i, (u, pname, length) in enumerate(scaled):
        if u is not None:
            shift += np.outer(u, signs[:, i])
        else:
            pshift[pname] = pshift.get(pname, 0.0) + length * signs[:, i]

    def quotient(h):
        X = x[:, None] + h * shift
        P = dict(params)
        for name, delta in pshift.items():
            P[name] = float(params[name]) + h * delta
        vals = np.asarray(fun(X, P), dtype=float)
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(vals), axis=0))[0])
            point = X[:, bad]
            raise NumDiffError(f"non-finite value at stencil point x={point.tolist()}", point)
        return vals @ weights / (2.0 * h) ** k

    value, err = _best_of(quotient)
    return value / factor, err / abs(factor)


def derivative(model: ModelSystem, x, params: Mapping, *directions: Direction, full_output=False):
    """Mixed directional derivative of ``model.rhs`` of order ``len(directions)`` (1 to 3).

    With ``full_output=True`` returns ``(value, error_estimate)``.
    """
    if not 1 <= len(directions) <= 3:
        raise ValueError("derivative order must be 1, 2 or 3")
    value, err = _generic_derivative(model.rhs, x, params, directions)
    return (value, err) if full_output else value


def function_derivative(fun, x, params: Mapping, *directions: Direction, full_output=False):
    """As :func:`derivative` for an arbitrary vectorised ``fun(x, params)``."""
    value, err = _generic_derivative(fun, x, params, directions)
    return (value, err) if full_output else value


def d2f(model, x, params, u1: Direction, u2: Direction) -> np.ndarray:
    """Second directional derivative ``sum_jk d2f/dx_j dx_k u1_j u2_k``."""
    return derivative(model, x, params, u1, u2)


def d3f(model, x, params, u1: Direction, u2: Direction, u3: Direction) -> np.ndarray:
    return derivative(model, x, params, u1, u2, u3)


def d2f_param(model, x, params, u: Direction, p: str) -> np.ndarray:
    """Mixed derivative ``sum_j d2f/dx_j dp u_j``."""
    if p not in params:
        raise ParamError(f"unknown parameter {p!r}")
    return derivative(model, x, params, u, p)


def d3f_param(model, x, params, u1: Direction, u2: Direction, p: str) -> np.ndarray:
    if p not in params:
        raise ParamError(f"unknown parameter {p!r}")
    return derivative(model, x, params, u1, u2, p)


def jacobian(model: ModelSystem, x, params: Mapping, fun=None) -> np.ndarray:
    """Full Jacobian of ``model.rhs`` (or ``fun``) at ``x`` by extrapolated central differences."""
    x = np.asarray(x, dtype=float)
    fun = model.rhs if fun is None else fun
    n = x.shape[0]
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append(_generic_derivative(fun, x, params, (e,))[0])
    return np.column_stack(cols)


def scalar_derivative(g: Callable[[float], np.ndarray], t0: float, scale: float | None = None):
    """Derivative of ``g`` at ``t0``; returns ``(value, error)``."""
    length = scale if scale is not None else (abs(t0) if t0 != 0.0 else 1.0)

    def quotient(h):
        step = h * length
        return (np.asarray(g(t0 + step), dtype=float) - np.asarray(g(t0 - step), dtype=float)) / (2.0 * step)

    return _best_of(quotient)


def batch_jacobian(model: ModelSystem, X: np.ndarray, params: Mapping):
    """Plain central-difference Jacobians at every column of ``X``.

    Returns ``(J, ok)`` with ``J`` of shape ``(k, n, n)``.  Columns whose
    stencil leaves the model domain are flagged in ``ok`` and their Jacobian
    is left as NaN.  Intended for Newton iterations, not for coefficients.
    """
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    full = model._full(params)
    h = np.cbrt(np.finfo(float).eps) * (1.0 + np.abs(X))
    J = np.full((k, n, n), np.nan)
    ok = model.in_domain(X, full).copy()
    for j in range(n):
        Xp, Xm = X.copy(), X.copy()
        Xp[j] += h[j]
        Xm[j] -= h[j]
        ok &= model.in_domain(Xp, full) & model.in_domain(Xm, full)
    if not np.any(ok):
        return J, ok
    Xo, ho = X[:, ok], h[:, ok]
    for j in range(n):
        Xp, Xm = Xo.copy(), Xo.copy()
        Xp[j] += ho[j]
        Xm[j] -= ho[j]
        with np.errstate(all="ignore"):
            col = (model.rhs_fn(Xp, full) - model.rhs_fn(Xm, full)) / (2.0 * ho[j])
        J[ok, :, j] = col.T
    ok &= np.all(np.isfinite(J), axis=(1, 2))
    return J, ok
