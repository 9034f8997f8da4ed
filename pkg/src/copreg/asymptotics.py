"""Large-sample limits of the HR, simulated and exact likelihood estimators.

For a model with finitely many (response, covariate) configurations the
n -> infinity limit of n^{-1} times a log-likelihood is a probability-weighted
sum over configurations.  Maximizing that sum gives the limiting estimator;
its negative inverse Hessian gives the limiting covariance per cluster.

The design is one binary covariate shared by all coordinates of a cluster,
with an intercept, under exchangeable latent correlation rho >= 0.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .correlation import StructureKind
from .errors import DomainError, NumericalError, UnsupportedStructureError, ValidationError
from .estimate import (ParamTransform, covariance_from_hessian, hessian_batch, maximize_batch)
from .likelihood import SL_DEFAULT_CONFIG, ModelParams, _bounds_from_cdf
from .marginals import MarginalFamily, MarginalParams, cdf_triple_mu, inverse_link, truncation_point
from .rectprob import RqmcConfig, exchangeable_1d_batch, genz_bretz_batch
from .special import truncnorm_moments

MAX_CASES = 10_000_000
DEFAULT_MASS = 0.999
# tail mass and pruning used when a likelihood limit must recover the truth
LIKELIHOOD_MASS = 1.0 - 1e-10
LIKELIHOOD_MIN_WEIGHT = 1e-12


@dataclass(frozen=True)
class BinaryDesign:
    """Cluster-constant covariate taking ``values`` with probabilities ``probs``."""

    values: tuple = (0.0, 1.0)
    probs: tuple = (0.5, 0.5)

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValidationError("design values and probabilities must align")
        if any(p <= 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValidationError("design probabilities must be positive and sum to 1")


@dataclass(frozen=True)
class CaseEnumeration:
    family: MarginalFamily
    d: int
    y: np.ndarray          # (T, d) representative responses
    x: np.ndarray          # (T,) covariate value
    weight: np.ndarray     # (T,) P(x) * P(orbit of y | x)
    count: np.ndarray      # (T,) number of response vectors represented
    truncation: Optional[int]
    theta: ModelParams

    @property
    def n_cases(self) -> int:
        return self.y.shape[0]

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())

    @property
    def X(self) -> np.ndarray:
        """(T, d, 2) covariate matrices with an intercept column."""
        T = self.n_cases
        return np.stack([np.ones((T, self.d)), np.repeat(self.x[:, None], self.d, axis=1)], axis=-1)


def _response_vectors(support: int, d: int, symmetric: bool):
    if symmetric:
        ys = np.array(list(itertools.combinations_with_replacement(range(support), d)), dtype=np.int64)
        fact = math.factorial(d)
        counts = np.array([fact // math.prod(math.factorial(c) for c in np.bincount(r)) for r in ys],
                          dtype=np.int64)
        return ys, counts
    ys = np.array(list(itertools.product(range(support), repeat=d)), dtype=np.int64)
    return ys, np.ones(len(ys), dtype=np.int64)


def _rectangles(family, theta: ModelParams, y, X):
    mu = inverse_link(family, X @ theta.beta)
    below, f, above = cdf_triple_mu(family, y, mu, theta.gamma)
    lower, upper = _bounds_from_cdf(below, f, above)
    return lower, upper, below, f


def enumerate_cases(family: MarginalFamily, theta: ModelParams, d: int, design: BinaryDesign = BinaryDesign(),
                    truncation: Optional[int] = None, symmetric: bool = True, mass: float = DEFAULT_MASS,
                    min_weight: float = 0.0) -> CaseEnumeration:
    """All response configurations with their model probabilities.

    Count responses run over 0..truncation (default: the truncation point at
    ``mass`` over the design's covariate values).  Cases with weight at or
    below ``min_weight`` are dropped.  With ``symmetric`` the
    response vectors are reduced to sorted representatives, which is exact
    for exchangeable dependence and a cluster-constant covariate.
    """
    if theta.rho < 0:
        raise UnsupportedStructureError("limits are computed for exchangeable rho >= 0")
    if d < 1:
        raise ValidationError("d must be positive")
    if family.is_binary:
        support, truncation = 2, None
    else:
        if truncation is None:
            xs = np.array([[1.0, v] for v in design.values])
            truncation = truncation_point(family, MarginalParams(theta.beta, theta.gamma), xs, mass)
        support = truncation + 1
    full = float(support) ** d * len(design.values)
    if full > MAX_CASES:
        raise DomainError(f"{support}^{d} x {len(design.values)} = {full:.3g} cases exceeds {MAX_CASES:.0e}")
    ys, counts = _response_vectors(support, d, symmetric)
    all_y, all_x, all_w, all_c = [], [], [], []
    for v, px in zip(design.values, design.probs):
        X = np.broadcast_to(np.array([1.0, v]), (len(ys), d, 2))
        lower, upper, _, f = _rectangles(family, theta, ys, X)
        empty = np.any(f <= 0.0, axis=1)
        lo = np.where(empty[:, None], 0.0, lower)
        hi = np.where(empty[:, None], 1.0, upper)
        p, _ = exchangeable_1d_batch(lo, hi, theta.rho)
        p = np.where(empty, 0.0, p)
        all_y.append(ys)
        all_x.append(np.full(len(ys), float(v)))
        all_w.append(px * counts * p)
        all_c.append(counts)
    w = np.concatenate(all_w)
    keep = w > min_weight
    return CaseEnumeration(family, d, np.concatenate(all_y)[keep], np.concatenate(all_x)[keep], w[keep],
                           np.concatenate(all_c)[keep], truncation, theta)


# ---------------------------------------------------------------------------
# limit objectives

def _exch_logdet(rho: float, d: int) -> float:
    return math.log1p((d - 1) * rho) + (d - 1) * math.log1p(-rho)


def limit_hr_objective(cases: CaseEnumeration, theta: ModelParams) -> float:
    """Limit in probability of n^{-1} times the HR surrogate log-likelihood.

    With jitters integrated out each latent score is a truncated standard
    normal on its case interval, so the quadratic form has expectation
    sum_j A_jj xi_j + sum_{j != k} A_jk zeta_j zeta_k with A = I - R^{-1}.
    """
    d, rho = cases.d, float(theta.rho)
    lower, upper, _, f = _rectangles(cases.family, theta, cases.y, cases.X)
    with np.errstate(divide="ignore"):
        logf = np.sum(np.log(f), axis=1)
    if d == 1 or rho == 0.0:
        return float(np.sum(cases.weight * logf))
    zeta, xi = truncnorm_moments(lower, upper)
    c = rho / ((1.0 - rho) * (1.0 + (d - 1) * rho))
    s1 = zeta.sum(axis=1)
    cross = s1 ** 2 - np.sum(zeta ** 2, axis=1)           # sum over j != k
    expected_quad = -c * ((d - 1) * rho * xi.sum(axis=1) - cross)
    log_c = 0.5 * expected_quad - 0.5 * _exch_logdet(rho, d)
    return float(np.sum(cases.weight * (log_c + logf)))


def limit_loglik(cases: CaseEnumeration, theta: ModelParams, exact: bool = True,
                 cfg: RqmcConfig = SL_DEFAULT_CONFIG) -> float:
    """sum_t p_t log h(y_t; x_t, theta) with h exact (1-D engine) or Genz-Bretz."""
    lower, upper, _, f = _rectangles(cases.family, theta, cases.y, cases.X)
    if np.any(f <= 0.0):
        return -np.inf
    if cases.d == 1:
        h = f[:, 0]
    elif exact:
        h, _ = exchangeable_1d_batch(lower, upper, theta.rho)
    else:
        R = (1.0 - theta.rho) * np.eye(cases.d) + theta.rho
        h, _ = genz_bretz_batch(lower, upper, R, cfg, chol=np.linalg.cholesky(R))
    if np.any(h <= 0.0):
        return -np.inf
    return float(np.sum(cases.weight * np.log(h)))


# ---------------------------------------------------------------------------
# limiting estimators

@dataclass
class LimitResult:
    method: str
    names: list
    estimates: dict
    std_errors: Optional[dict]
    objective: float
    params: ModelParams
    n_ref: int
    cov: Optional[np.ndarray] = field(default=None, repr=False)
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)


def _transform(cases: CaseEnumeration) -> ParamTransform:
    has_rho = cases.d > 1
    lo, hi = (0.0, 1.0 - 1e-4) if has_rho else (-1.0, 1.0)
    return ParamTransform(2, cases.family.has_dispersion, has_rho, lo, hi, ("beta0", "beta1"))


def _maximize_limit(cases: CaseEnumeration, objective: Callable[[ModelParams], float], method: str,
                    start: Optional[ModelParams], n_ref: int, tol: float) -> LimitResult:
    tr = _transform(cases)
    start = start if start is not None else cases.theta
    if tr.has_rho and start.rho <= 0.0:
        start = ModelParams(start.beta, start.gamma, 0.05)

    def fun(pts, ids):
        out = np.empty(len(pts))
        for r, x in enumerate(pts):
            try:
                out[r] = objective(tr.from_raw(x))
            except (NumericalError, ValidationError, FloatingPointError):
                out[r] = -np.inf
        return out

    opt = maximize_batch(fun, tr.to_raw(start)[None, :], tol=tol)[0]
    H = hessian_batch(fun, opt.x[None, :])[0]
    diag = {"message": opt.message, "iterations": opt.iterations}
    try:
        ses, cov = limiting_se_from_hessian(H, tr, opt.x, n_ref)
    except NumericalError as exc:
        # e.g. an optimum on the rho = 0 boundary: the estimate stands, the SEs do not exist
        ses, cov = None, None
        diag["hessian"] = str(exc)
    nat = tr.natural(opt.x)
    names = tr.names
    return LimitResult(method, names, dict(zip(names, nat.tolist())), ses, opt.value, tr.from_raw(opt.x),
                       n_ref, cov, opt.converged, diag)


def limiting_se_from_hessian(H, tr: ParamTransform, x, n_ref: int):
    """SE_k = sqrt(H^-_kk / n_ref) on the natural scale; (dict | None, cov | None)."""
    cr = covariance_from_hessian(H, tr.jacobian_diag(x))
    if cr.std_errors is None:
        raise NumericalError(f"limit Hessian is not negative definite; eigenvalues {cr.eigenvalues.tolist()}")
    return dict(zip(tr.names, (cr.std_errors / math.sqrt(n_ref)).tolist())), cr.cov


def limiting_hrmle(cases: CaseEnumeration, start: Optional[ModelParams] = None, n_ref: int = 100,
                   tol: float = 1e-8) -> LimitResult:
    """Maximizer of the limiting HR objective."""
    return _maximize_limit(cases, lambda th: limit_hr_objective(cases, th), "HR", start, n_ref, tol)


def limiting_mle(cases: CaseEnumeration, start: Optional[ModelParams] = None, n_ref: int = 100,
                 tol: float = 1e-8) -> LimitResult:
    """Maximizer of the limiting exact log-likelihood (1-D engine)."""
    return _maximize_limit(cases, lambda th: limit_loglik(cases, th, True), "ML", start, n_ref, tol)


def limiting_msle(cases: CaseEnumeration, cfg: RqmcConfig = SL_DEFAULT_CONFIG, start: Optional[ModelParams] = None,
                  n_ref: int = 100, tol: float = 1e-6) -> LimitResult:
    """Maximizer of the limiting simulated log-likelihood (Genz-Bretz, fixed points)."""
    if cfg.reorder:
        raise ValidationError("the limiting simulated likelihood needs a fixed variable order")
    return _maximize_limit(cases, lambda th: limit_loglik(cases, th, False, cfg), "SL", start, n_ref, tol)


def limiting_se(objective: Callable[[ModelParams], float], theta: ModelParams, cases: CaseEnumeration,
                n_ref: int = 100) -> dict:
    """Standard errors at sample size ``n_ref`` from the Hessian of a limit objective at ``theta``."""
    tr = _transform(cases)
    x = tr.to_raw(theta)

    def fun(pts, ids):
        return np.array([objective(tr.from_raw(p)) for p in pts])
    H = hessian_batch(fun, x[None, :])[0]
    return limiting_se_from_hessian(H, tr, x, n_ref)[0]
