"""Parametric latent correlation matrices and their Cholesky factors."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NotPositiveDefiniteError, ValidationError

PIVOT_TOL = 1e-12


class StructureKind(enum.Enum):
    EXCHANGEABLE = "exch"
    AR1 = "ar1"
    MARKOV = "markov"
    UNSTRUCTURED = "unstructured"

    @classmethod
    def from_name(cls, name: str) -> "StructureKind":
        key = name.strip().lower()
        key = {"exchangeable": "exch", "ar(1)": "ar1"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValidationError(f"unknown correlation structure {name!r}") from None


def admissible_range(kind: StructureKind, dim: int) -> tuple[float, float]:
    """Open interval of valid rho values."""
    if kind is StructureKind.EXCHANGEABLE:
        return (-1.0 / (dim - 1) if dim > 1 else -1.0, 1.0)
    if kind is StructureKind.AR1:
        return (-1.0, 1.0)
    if kind is StructureKind.MARKOV:
        return (0.0, 1.0)
    raise ValidationError("unstructured matrices have no scalar parameter")


@dataclass(frozen=True)
class CorrelationStructure:
    kind: StructureKind
    dim: int
    rho: float = 0.0
    times: Optional[np.ndarray] = None
    matrix: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("dimension must be >= 1")
        if self.kind is StructureKind.UNSTRUCTURED:
            m = np.asarray(self.matrix, dtype=float)
            if m.shape != (self.dim, self.dim):
                raise ValidationError("matrix shape does not match dim")
            if not np.allclose(m, m.T, atol=1e-12) or not np.allclose(np.diag(m), 1.0, atol=1e-12):
                raise ValidationError("correlation matrix must be symmetric with unit diagonal")
            cholesky(m)
            object.__setattr__(self, "matrix", m)
            return
        if self.kind is StructureKind.MARKOV:
            if self.times is None:
                raise ValidationError("markov structure requires observation times")
            t = np.asarray(self.times, dtype=float)
            if t.shape != (self.dim,) or np.any(np.diff(t) <= 0):
                raise ValidationError("times must be strictly increasing with one entry per coordinate")
            object.__setattr__(self, "times", t)
            if not 0.0 <= self.rho < 1.0:
                raise ValidationError(f"markov rho must lie in [0, 1), got {self.rho}")
            return
        if self.dim == 1:
            return
        lo, hi = admissible_range(self.kind, self.dim)
        if not lo < self.rho < hi:
            raise ValidationError(f"{self.kind.value} rho={self.rho} outside ({lo}, {hi})")


def exchangeable(rho: float, dim: int) -> CorrelationStructure:
    return CorrelationStructure(StructureKind.EXCHANGEABLE, dim, rho)


def ar1(rho: float, dim: int) -> CorrelationStructure:
    return CorrelationStructure(StructureKind.AR1, dim, rho)


def markov(rho: float, times) -> CorrelationStructure:
    times = np.asarray(times, dtype=float)
    return CorrelationStructure(StructureKind.MARKOV, len(times), rho, times=times)


def unstructured(matrix) -> CorrelationStructure:
    matrix = np.asarray(matrix, dtype=float)
    return CorrelationStructure(StructureKind.UNSTRUCTURED, matrix.shape[0], matrix=matrix)


def matrix_from_params(kind: StructureKind, rho, dim: int, times=None) -> np.ndarray:
    """Correlation matrices without validation; vectorized over leading axes of ``times``.

    Used on hot paths where the optimizer transform already guarantees
    admissibility.  ``times`` may have shape (..., dim) for per-cluster Markov
    matrices, giving output (..., dim, dim).
    """
    if kind is StructureKind.EXCHANGEABLE:
        return (1.0 - rho) * np.eye(dim) + rho
    if kind is StructureKind.AR1:
        lag = np.abs(np.subtract.outer(np.arange(dim), np.arange(dim)))
        return np.power(rho, lag, dtype=float)
    if kind is StructureKind.MARKOV:
        t = np.asarray(times, dtype=float)
        lag = np.abs(t[..., :, None] - t[..., None, :])
        with np.errstate(divide="ignore"):
            return np.power(rho, lag) if rho > 0 else (lag == 0).astype(float)
    raise ValidationError("unstructured matrices are not parametric")


def build_matrix(s: CorrelationStructure) -> np.ndarray:
    if s.kind is StructureKind.UNSTRUCTURED:
        return s.matrix.copy()
    return matrix_from_params(s.kind, s.rho, s.dim, s.times)


@dataclass(frozen=True)
class CholeskyFactor:
    matrix: np.ndarray
    corr: np.ndarray
    source: Optional[CorrelationStructure] = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def cholesky(R, source: Optional[CorrelationStructure] = None) -> CholeskyFactor:
    """Lower-triangular C with C C^T = R; rejects pivots at or below 1e-12."""
    R = np.asarray(R, dtype=float)
    try:
        C = np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("matrix is not positive definite") from None
    if np.any(np.diag(C) ** 2 <= PIVOT_TOL):
        raise NotPositiveDefiniteError("matrix is numerically singular (pivot <= 1e-12)")
    return CholeskyFactor(C, R, source)


def structure_cholesky(s: CorrelationStructure) -> CholeskyFactor:
    return cholesky(build_matrix(s), s)
