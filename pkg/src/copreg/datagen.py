"""Simulation from the discretized multivariate normal model.

Z ~ MVN(0, R), U_j = Phi(Z_j), Y_j = F_j^{-1}(U_j).  Replication ``r`` of a
design with seed ``s`` draws from the counter-based substream ``(s, r)``, so
any replication can be regenerated on its own.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special as sc

from ._rng import substream
from .correlation import CorrelationStructure, StructureKind, build_matrix, cholesky
from .errors import ValidationError
from .likelihood import Cluster, Dataset, ModelParams
from .marginals import MarginalFamily, MarginalParams, inverse_cdf_mu, inverse_link


class CovariateScheme(enum.Enum):
    UNIFORM = "uniform"            # intercept + x_ij ~ U[-1, 1], redrawn per cluster and coordinate
    BINARY_CLUSTER = "binary"      # intercept + x_i in {0, 1} w.p. 1/2, constant within a cluster
    TREATMENT_TIME = "treatment-time"  # intercept, trt_i, month t_j, trt_i * t_j

    @classmethod
    def from_name(cls, name: str) -> "CovariateScheme":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValidationError(f"unknown covariate scheme {name!r}") from None


# visit times (months) for the treatment-time scheme
DEFAULT_TIMES = (0.0, 1.0, 2.0, 3.0, 6.0, 9.0, 12.0)


@dataclass(frozen=True)
class SimDesign:
    n: int
    d: int
    family: MarginalFamily
    structure: StructureKind
    theta: ModelParams
    scheme: CovariateScheme = CovariateScheme.UNIFORM
    seed: int = 0
    times: Optional[tuple] = None
    matrix: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValidationError("n and d must be positive")
        if self.scheme is CovariateScheme.TREATMENT_TIME and self.times is None:
            object.__setattr__(self, "times", DEFAULT_TIMES[:self.d] if self.d <= 7 else tuple(range(self.d)))
        if self.structure is StructureKind.MARKOV and self.times is None:
            object.__setattr__(self, "times", tuple(float(t) for t in range(self.d)))
        if self.times is not None and len(self.times) != self.d:
            raise ValidationError("times must have one entry per coordinate")
        if self.theta.beta.shape[0] != self.n_covariates:
            raise ValidationError(f"{self.scheme.value} design needs {self.n_covariates} coefficients")
        if self.family.has_dispersion and not (self.theta.gamma and self.theta.gamma > 0):
            raise ValidationError("negative binomial design needs gamma > 0")
        self.correlation()  # validates rho

    @property
    def n_covariates(self) -> int:
        return 4 if self.scheme is CovariateScheme.TREATMENT_TIME else 2

    @property
    def covariate_names(self) -> list[str]:
        if self.scheme is CovariateScheme.TREATMENT_TIME:
            return ["intercept", "trt", "month", "trt_month"]
        return ["intercept", "x"]

    def correlation(self) -> CorrelationStructure:
        times = np.asarray(self.times, dtype=float) if self.times is not None else None
        if self.structure is StructureKind.UNSTRUCTURED:
            return CorrelationStructure(self.structure, self.d, matrix=self.matrix)
        return CorrelationStructure(self.structure, self.d, self.theta.rho,
                                    times if self.structure is StructureKind.MARKOV else None)


def _covariates(design: SimDesign, rng) -> np.ndarray:
    n, d = design.n, design.d
    one = np.ones((n, d))
    if design.scheme is CovariateScheme.UNIFORM:
        return np.stack([one, rng.uniform(-1.0, 1.0, (n, d))], axis=-1)
    if design.scheme is CovariateScheme.BINARY_CLUSTER:
        x = rng.integers(0, 2, n).astype(float)
        return np.stack([one, np.repeat(x[:, None], d, axis=1)], axis=-1)
    trt = rng.integers(0, 2, n).astype(float)[:, None] * one
    t = np.broadcast_to(np.asarray(design.times, dtype=float), (n, d))
    return np.stack([one, trt, t, trt * t], axis=-1)


def simulate(design: SimDesign, replication: int = 0) -> Dataset:
    """One dataset of ``design.n`` clusters."""
    rng = substream(design.seed, replication)
    X = _covariates(design, rng)
    C = cholesky(build_matrix(design.correlation())).matrix
    Z = rng.standard_normal((design.n, design.d)) @ C.T
    U = sc.ndtr(Z)
    mu = inverse_link(design.family, X @ design.theta.beta)
    Y = inverse_cdf_mu(design.family, U, mu, design.theta.gamma)
    times = np.asarray(design.times, dtype=float) if design.times is not None else None
    clusters = [Cluster(Y[i], X[i], times) for i in range(design.n)]
    return Dataset(clusters, design.covariate_names)


def marginal_params(design: SimDesign) -> MarginalParams:
    return design.theta.marginal
