"""Dense symmetric eigendecomposition and the spectral functionals built on it.

Every matrix function is evaluated through the eigensystem, so inequalities
checked downstream are exact up to the eigensolver residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .lattice import DENSE_VOLUME_CAP, OperatorMatrix, VolumeCapError

SpectralFunction = Callable[[np.ndarray], np.ndarray]


class EigensolveError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class MissingVectorsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EigenSystem:
    values: np.ndarray
    vectors: np.ndarray | None = None
    residual: float = 0.0

    @property
    def dim(self) -> int:
        return self.values.size

    def require_vectors(self) -> np.ndarray:
        if self.vectors is None:
            raise MissingVectorsError("eigenvectors were not computed; call eigensolve(..., need_vectors=True)")
        return self.vectors


@dataclass(frozen=True)
class EnergyInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"interval needs lower <= upper, got [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def __call__(self, lam):
        lam = np.asarray(lam, dtype=float)
        return ((lam >= self.lower) & (lam <= self.upper)).astype(float)


def indicator(lower: float = -math.inf, upper: float = math.inf) -> EnergyInterval:
    return EnergyInterval(lower, upper)


@dataclass(frozen=True)
class HeatFunction:
    """t ↦ exp(-t λ)."""

    t: float

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("heat time must be >= 0")

    def __call__(self, lam):
        return np.exp(-self.t * np.asarray(lam, dtype=float))


def heat(t: float) -> HeatFunction:
    return HeatFunction(float(t))


def _as_dense(h) -> np.ndarray:
    if isinstance(h, OperatorMatrix):
        return h.to_dense()
    if sp.issparse(h):
        return h.toarray()
    return np.asarray(h, dtype=float)


def eigensolve(h, need_vectors: bool = False, cap: int = DENSE_VOLUME_CAP) -> EigenSystem:
    """Full dense eigendecomposition of a real symmetric operator."""
    a = _as_dense(h)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > cap:
        raise VolumeCapError(f"dimension {a.shape[0]} exceeds the dense cap {cap}")
    if not np.array_equal(a, a.T):
        raise ValueError("operator is not symmetric")
    try:
        if need_vectors:
            w, v = scipy.linalg.eigh(a, check_finite=False)
        else:
            w = scipy.linalg.eigh(a, eigvals_only=True, check_finite=False)
            v = None
    except np.linalg.LinAlgError as exc:
        raise EigensolveError(f"eigensolver did not converge: {exc}", {"dim": a.shape[0], "lapack": str(exc)}) from exc
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    if v is not None:
        residual = float(np.max(np.linalg.norm(a @ v - v * w, axis=0))) if w.size else 0.0
    else:
        # a-priori backward-error bound for Householder tridiagonalisation + QR
        residual = float(a.shape[0] * np.finfo(float).eps * scale)
    return EigenSystem(w, v, residual)


def count_below(eigs, energy: float) -> int:
    """#{i : λ_i <= E} for ascending eigenvalues."""
    values = eigs.values if isinstance(eigs, EigenSystem) else np.asarray(eigs)
    return int(np.searchsorted(values, energy, side="right"))


def spectral_weights(es: EigenSystem, site: int) -> np.ndarray:
    """|v_i(site)|^2 for every eigenvector."""
    return es.require_vectors()[site, :] ** 2


def local_spectral_weight(es: EigenSystem, site: int, g: SpectralFunction) -> float:
    """Σ_i g(λ_i) |v_i(site)|², i.e. ⟨δ_site, g(H) δ_site⟩."""
    v = es.require_vectors()
    return float(np.dot(g(es.values), v[site, :] ** 2))


def operator_entry(es: EigenSystem, site_j: int, site_k: int, g: SpectralFunction) -> float:
    """⟨δ_j, g(H) δ_k⟩ = Σ_i g(λ_i) v_i(j) v_i(k)."""
    v = es.require_vectors()
    return float(np.dot(g(es.values), v[site_j, :] * v[site_k, :]))


def operator_row(es: EigenSystem, site: int, g: SpectralFunction) -> np.ndarray:
    """Row ``site`` of g(H): the entries ⟨δ_site, g(H) δ_k⟩ for every k."""
    v = es.require_vectors()
    return v @ (g(es.values) * v[site, :])


def matrix_function(es: EigenSystem, g: SpectralFunction) -> np.ndarray:
    v = es.require_vectors()
    return (v * g(es.values)) @ v.T


def heat_trace(eigs, t: float) -> float:
    values = eigs.values if isinstance(eigs, EigenSystem) else np.asarray(eigs)
    return float(np.sum(np.exp(-t * values)))
