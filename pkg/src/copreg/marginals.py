"""Univariate discrete regression margins.

Five families are supported, named as in the CLI configuration:

=================  ========  ==========================================
name               link      variance
=================  ========  ==========================================
bernoulli-logit    logit     mu (1 - mu)
bernoulli-probit   probit    mu (1 - mu)
poisson            log       mu
nb1                log       mu (1 + gamma)
nb2                log       mu + gamma mu^2
=================  ========  ==========================================

NB2 has size 1/gamma and success probability 1/(1 + gamma mu); NB1 has size
mu/gamma and success probability 1/(1 + gamma).  Probabilities are computed
from log-gamma expressions; cdfs are running sums of the pmf so that
``cdf(y) - cdf(y - 1)`` reproduces ``pmf(y)`` up to rounding.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special as sc

from .errors import DomainError, ValidationError


class MarginalFamily(enum.Enum):
    BERNOULLI_LOGIT = "bernoulli-logit"
    BERNOULLI_PROBIT = "bernoulli-probit"
    POISSON = "poisson"
    NB1 = "nb1"
    NB2 = "nb2"

    @classmethod
    def from_name(cls, name: str) -> "MarginalFamily":
        aliases = {"logit": "bernoulli-logit", "logistic": "bernoulli-logit",
                   "probit": "bernoulli-probit"}
        key = aliases.get(name.strip().lower(), name.strip().lower())
        try:
            return cls(key)
        except ValueError:
            raise ValidationError(f"unknown marginal family {name!r}") from None

    @property
    def is_binary(self) -> bool:
        return self in (MarginalFamily.BERNOULLI_LOGIT, MarginalFamily.BERNOULLI_PROBIT)

    @property
    def has_dispersion(self) -> bool:
        return self in (MarginalFamily.NB1, MarginalFamily.NB2)

    @property
    def link(self) -> str:
        if self is MarginalFamily.BERNOULLI_LOGIT:
            return "logit"
        if self is MarginalFamily.BERNOULLI_PROBIT:
            return "probit"
        return "log"


@dataclass(frozen=True)
class MarginalParams:
    beta: np.ndarray
    gamma: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if self.gamma is not None and not self.gamma > 0:
            raise ValidationError(f"gamma must be positive, got {self.gamma}")


def inverse_link(fam: MarginalFamily, eta):
    eta = np.asarray(eta, dtype=float)
    if fam is MarginalFamily.BERNOULLI_LOGIT:
        return sc.expit(eta)
    if fam is MarginalFamily.BERNOULLI_PROBIT:
        return sc.ndtr(eta)
    return np.exp(eta)


def mean_from_covariates(fam: MarginalFamily, params: MarginalParams, x):
    """Mean for covariate vector(s) ``x``; the last axis must match ``beta``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.beta.shape[0]:
        raise DomainError(f"covariate length {x.shape[-1]} != len(beta) {params.beta.shape[0]}")
    return inverse_link(fam, x @ params.beta)


def _check_gamma(fam, gamma):
    if fam.has_dispersion:
        if gamma is None or not np.all(np.asarray(gamma) > 0):
            raise ValidationError(f"{fam.value} requires gamma > 0")


def logpmf_mu(fam: MarginalFamily, y, mu, gamma=None):
    """Log-pmf at integer ``y`` given mean ``mu`` (broadcasting).

    Values outside the support give -inf.
    """
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    _check_gamma(fam, gamma)
    with np.errstate(divide="ignore", invalid="ignore"):
        if fam.is_binary:
            out = np.where(y == 1, np.log(mu), np.where(y == 0, np.log1p(-mu), -np.inf))
            return out
        valid = y >= 0
        yy = np.where(valid, y, 0.0)
        if fam is MarginalFamily.POISSON:
            out = sc.xlogy(yy, mu) - mu - sc.gammaln(yy + 1.0)
        elif fam is MarginalFamily.NB2:
            size = 1.0 / gamma
            gm = gamma * mu
            out = (sc.gammaln(yy + size) - sc.gammaln(size) - sc.gammaln(yy + 1.0)
                   - size * np.log1p(gm) + sc.xlogy(yy, gm) - yy * np.log1p(gm))
        else:  # NB1
            size = mu / gamma
            out = (sc.gammaln(yy + size) - sc.gammaln(size) - sc.gammaln(yy + 1.0)
                   - size * np.log1p(gamma) + yy * (np.log(gamma) - np.log1p(gamma)))
        return np.where(valid, out, -np.inf)


def pmf_table(fam: MarginalFamily, mu, upto: int, gamma=None):
    """pmf at 0..upto for every entry of ``mu``; shape ``mu.shape + (upto + 1,)``."""
    mu = np.asarray(mu, dtype=float)
    ys = np.arange(upto + 1, dtype=float)
    if gamma is not None and np.ndim(gamma) > 0:
        gamma = np.asarray(gamma, dtype=float)[..., None]
    return np.exp(logpmf_mu(fam, ys, mu[..., None], gamma))


def cdf_table(fam: MarginalFamily, mu, upto: int, gamma=None):
    """Running sums of ``pmf_table`` clipped to [0, 1]."""
    return np.minimum(np.cumsum(pmf_table(fam, mu, upto, gamma), axis=-1), 1.0)


def _pair_by_recursion(fam, y, mu, gamma):
    """(F(y - 1), f(y)) from the pmf ratio recursion, or None if f(0) underflows."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if fam is MarginalFamily.POISSON:
            f = np.exp(-mu)
            size, ratio = None, mu
        elif fam is MarginalFamily.NB2:
            gm = gamma * mu
            size = 1.0 / gamma
            f = np.exp(-size * np.log1p(gm))
            ratio = gm / (1.0 + gm)
        else:
            size = mu / gamma
            f = np.exp(-size * np.log1p(gamma))
            ratio = gamma / (1.0 + gamma)
    if not np.all(f > 1e-250):
        return None
    below = np.zeros(np.broadcast(y, f).shape)
    fy = np.where(y == 0, f, 0.0)
    for t in range(int(y.max())):
        below += np.where(y > t, f, 0.0)
        step = ratio / (t + 1.0) if size is None else (t + size) * ratio / (t + 1.0)
        f = f * step
        fy = np.where(y == t + 1, f, fy)
    return np.minimum(below, 1.0), fy


def cdf_pair_mu(fam: MarginalFamily, y, mu, gamma=None):
    """(F(y - 1), f(y)) for integer arrays ``y`` and means ``mu`` of equal shape.

    The lower cdf value is the running sum of the pmf below ``y``.
    """
    y = np.asarray(y)
    mu = np.asarray(mu, dtype=float)
    y, mu = np.broadcast_arrays(y, mu)
    if fam.is_binary:
        f = np.where(y == 1, mu, 1.0 - mu)
        lower = np.where(y == 1, 1.0 - mu, 0.0)
        return lower, f
    _check_gamma(fam, gamma)
    if y.size and y.min() >= 0:
        pair = _pair_by_recursion(fam, y, mu, gamma)
        if pair is not None:
            return pair
    ymax = int(y.max()) if y.size else 0
    pm = pmf_table(fam, mu, ymax, gamma)
    csum = np.cumsum(pm, axis=-1)
    yi = y.astype(np.intp)[..., None]
    f = np.take_along_axis(pm, yi, axis=-1)[..., 0]
    below = np.take_along_axis(csum, np.maximum(yi - 1, 0), axis=-1)[..., 0]
    below = np.where(y == 0, 0.0, np.minimum(below, 1.0))
    return below, f


def sf_mu(fam: MarginalFamily, y, mu, gamma=None):
    """P(Y > y) from regularized incomplete gamma/beta functions, accurate deep in the upper tail."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if fam.is_binary:
        return np.where(y >= 1, 0.0, np.where(y < 0, 1.0, mu))
    _check_gamma(fam, gamma)
    a = np.maximum(y, -1.0) + 1.0
    with np.errstate(invalid="ignore"):
        if fam is MarginalFamily.POISSON:
            out = sc.gammainc(a, mu)
        elif fam is MarginalFamily.NB2:
            gm = gamma * mu
            out = sc.betainc(a, 1.0 / gamma, gm / (1.0 + gm))
        else:  # NB1
            out = sc.betainc(a, mu / gamma, gamma / (1.0 + gamma))
    return np.where(y < 0, 1.0, out)


def cdf_triple_mu(fam: MarginalFamily, y, mu, gamma=None):
    """(F(y - 1), f(y), P(Y > y)).

    The survival term is evaluated directly where F(y) > 1/2, so it keeps
    full relative precision when F(y) is close to 1.
    """
    below, f = cdf_pair_mu(fam, y, mu, gamma)
    above = np.maximum(1.0 - below - f, 0.0)
    hi = below + f > 0.5
    if np.any(hi):
        shape = above.shape
        yb = np.broadcast_to(np.asarray(y), shape)[hi]
        mb = np.broadcast_to(np.asarray(mu, dtype=float), shape)[hi]
        gb = None if gamma is None else np.broadcast_to(np.asarray(gamma, dtype=float), shape)[hi]
        above[hi] = sf_mu(fam, yb, mb, gb)
    return below, f, above


def _check_support(fam, y):
    y = np.asarray(y)
    if np.any(y != np.floor(y)) or np.any(y < 0):
        raise DomainError("responses must be nonnegative integers")
    if fam.is_binary and np.any(y > 1):
        raise DomainError("binary responses must be 0 or 1")


def pmf(fam: MarginalFamily, params: MarginalParams, y, x):
    _check_support(fam, y)
    mu = mean_from_covariates(fam, params, x)
    return np.exp(logpmf_mu(fam, y, mu, params.gamma))


def cdf(fam: MarginalFamily, params: MarginalParams, y, x):
    """F(y; x) by accumulation of the pmf; zero for y < 0."""
    mu = np.asarray(mean_from_covariates(fam, params, x))
    y = np.floor(np.asarray(y, dtype=float))
    y, mu = np.broadcast_arrays(y, mu)
    if fam.is_binary:
        out = np.where(y < 0, 0.0, np.where(y < 1, 1.0 - mu, 1.0))
        return out[()] if out.ndim == 0 else out
    ymax = int(max(y.max(), 0))
    table = cdf_table(fam, mu, ymax, params.gamma)
    idx = np.clip(y, 0, ymax).astype(np.intp)[..., None]
    out = np.where(y < 0, 0.0, np.take_along_axis(table, idx, axis=-1)[..., 0])
    return out[()] if out.ndim == 0 else out


def truncation_point(fam: MarginalFamily, params: MarginalParams, x_set, mass: float = 0.999,
                     limit: int = 100_000) -> int:
    """Smallest y* such that F(y*; x) >= mass for every x in ``x_set``."""
    if fam.is_binary:
        raise DomainError("binary margins have finite support; no truncation needed")
    if not 0.0 < mass < 1.0:
        raise DomainError("mass must lie in (0, 1)")
    mu = np.atleast_1d(mean_from_covariates(fam, params, np.atleast_2d(x_set)))
    upto = 16
    while True:
        worst = cdf_table(fam, mu, upto, params.gamma).min(axis=0)
        hit = np.nonzero(worst >= mass)[0]
        if hit.size:
            return int(hit[0])
        if upto >= limit:
            raise DomainError("truncation point exceeds search limit")
        upto *= 2


def inverse_cdf_mu(fam: MarginalFamily, u, mu, gamma=None):
    """Smallest integer y with F(y) >= u, elementwise."""
    u = np.asarray(u, dtype=float)
    mu = np.asarray(mu, dtype=float)
    u, mu = np.broadcast_arrays(u, mu)
    if fam.is_binary:
        return (u > 1.0 - mu).astype(np.int64)
    upto = 16
    while True:
        table = cdf_table(fam, mu, upto, gamma)
        y = np.sum(table < u[..., None], axis=-1)
        if np.all(y <= upto):
            return y.astype(np.int64)
        upto *= 2
