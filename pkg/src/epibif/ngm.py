"""Next-generation matrix, basic reproductive ratio and DFE stability."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import numdiff
from .models import ModelError, ModelSystem

__all__ = ["R0Report", "NGMError", "r0", "dfe_stability", "infected_block_max_real", "marginal_tolerance"]


class NGMError(ModelError):
    pass


@dataclass(frozen=True)
class R0Report:
    r0: float
    F: np.ndarray
    V: np.ndarray
    dfe: np.ndarray
    dfe_eigenvalues: np.ndarray

    @property
    def infected_block(self) -> np.ndarray:
        return self.F - self.V

    def to_dict(self) -> dict:
        return {
            "r0": self.r0,
            "F": self.F.tolist(),
            "V": self.V.tolist(),
            "dfe": self.dfe.tolist(),
            "spectrum": [[float(z.real), float(z.imag)] for z in self.dfe_eigenvalues],
        }


def _spectral_radius(M: np.ndarray) -> float:
    if M.shape == (1, 1):
        return abs(float(M[0, 0]))
    if M.shape == (2, 2):
        # closed form keeps 2x2 cases free of eigensolver noise
        tr = M[0, 0] + M[1, 1]
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        disc = complex(tr * tr - 4.0 * det) ** 0.5
        return max(abs((tr + disc) / 2.0), abs((tr - disc) / 2.0))
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def r0(model: ModelSystem, params: Mapping, validated: bool = False) -> R0Report:
    """Spectral radius of ``F V^-1`` at the disease-free equilibrium."""
    p = params if validated else model.validate(params)
    if not model.has_fv_split:
        raise NGMError(f"{model.id}: r0 needs a new-infection/transition split")
    x0 = model.dfe(p)
    idx = list(model.infected)
    Fx = numdiff.jacobian(model, x0, p, fun=lambda x, q: model.fv(x, q)[0])
    Vx = numdiff.jacobian(model, x0, p, fun=lambda x, q: model.fv(x, q)[1])
    F = Fx[:, idx]
    V = Vx[:, idx]
    if abs(np.linalg.det(V)) <= 1e-14 * max(1.0, np.max(np.abs(V))) ** len(idx):
        raise NGMError("transition matrix not invertible")
    K = F @ np.linalg.inv(V)
    J = numdiff.jacobian(model, x0, p)
    return R0Report(_spectral_radius(K), F, V, x0, np.linalg.eigvals(J))


def marginal_tolerance(J: np.ndarray) -> float:
    return 1e-8 * (1.0 + np.max(np.sum(np.abs(J), axis=1)))


def dfe_stability(model: ModelSystem, params: Mapping, validated: bool = False) -> str:
    """``'stable'``, ``'unstable'`` or ``'marginal'`` from the full Jacobian at the DFE."""
    p = params if validated else model.validate(params)
    J = numdiff.jacobian(model, model.dfe(p), p)
    lead = float(np.max(np.linalg.eigvals(J).real))
    if abs(lead) <= marginal_tolerance(J):
        return "marginal"
    return "stable" if lead < 0 else "unstable"


def infected_block_max_real(report: R0Report) -> float:
    return float(np.max(np.linalg.eigvals(report.infected_block).real))
