"""Objective functions for normal copula models with discrete margins.

Three log-likelihoods are provided:

* :func:`sl_loglik` - the joint log-likelihood, each cluster contributing the
  log of a latent-normal rectangle probability (exact with the 1-D engine,
  simulated with the Genz-Bretz engine);
* :func:`hr_surrogate_loglik` - the jittered surrogate that treats one set of
  uniform jitters as observed;
* :func:`mf_loglik` - the simulated likelihood averaging the jittered joint
  density over all jitter replications.

Randomness is fixed up front (``RqmcConfig.seed`` and :class:`JitterSet`) so
every objective is a deterministic, smooth function of the parameters.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import special as sc

from ._rng import open_uniforms, substream
from .correlation import StructureKind, admissible_range, matrix_from_params
from .errors import DataError, DomainError, UnsupportedStructureError, ValidationError
from .marginals import MarginalFamily, MarginalParams, cdf_triple_mu, inverse_link, logpmf_mu
from .rectprob import Engine, Rectangle, RqmcConfig, exchangeable_1d_batch, genz_bretz_batch

LOG_FLOOR = -746.0
U_CLAMP = 1e-16

# Likelihood evaluations keep the variable order fixed: reordering switches
# discretely with the parameters and would break smoothness under CRN.
SL_DEFAULT_CONFIG = RqmcConfig(reorder=False)


@dataclass(frozen=True)
class Cluster:
    y: np.ndarray
    X: np.ndarray
    times: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y))
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != y.shape[0]:
            raise DataError("response and covariate rows differ in length")
        if np.any(y != np.round(y)) or np.any(y < 0):
            raise DataError("responses must be nonnegative integers")
        object.__setattr__(self, "y", y.astype(np.int64))
        object.__setattr__(self, "X", X)
        if self.times is not None:
            t = np.asarray(self.times, dtype=float)
            if t.shape != y.shape or np.any(np.diff(t) <= 0):
                raise DataError("times must be strictly increasing within a cluster")
            object.__setattr__(self, "times", t)

    @property
    def dim(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class _Group:
    idx: np.ndarray       # positions in the dataset
    y: np.ndarray         # (n_g, d)
    X: np.ndarray         # (n_g, d, p)
    times: Optional[np.ndarray]  # (n_g, d)

    @property
    def dim(self) -> int:
        return self.y.shape[1]


class Dataset:
    """Clusters plus a cached packing into equal-dimension groups."""

    def __init__(self, clusters: Iterable[Cluster], covariate_names: Optional[Sequence[str]] = None):
        self.clusters = list(clusters)
        if not self.clusters:
            raise DataError("dataset has no clusters")
        p = {c.X.shape[1] for c in self.clusters}
        if len(p) != 1:
            raise DataError("all clusters must have the same number of covariates")
        self.n_covariates = p.pop()
        self.covariate_names = list(covariate_names) if covariate_names else [
            f"x{j}" for j in range(self.n_covariates)]

    @classmethod
    def coerce(cls, data) -> "Dataset":
        return data if isinstance(data, Dataset) else cls(data)

    def __len__(self):
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters)

    @property
    def d_max(self) -> int:
        return max(c.dim for c in self.clusters)

    @property
    def has_times(self) -> bool:
        return all(c.times is not None for c in self.clusters)

    @functools.cached_property
    def groups(self) -> list[_Group]:
        by_dim: dict[int, list[int]] = {}
        for i, c in enumerate(self.clusters):
            by_dim.setdefault(c.dim, []).append(i)
        out = []
        for d in sorted(by_dim):
            ids = np.array(by_dim[d])
            cl = [self.clusters[i] for i in ids]
            times = np.stack([c.times for c in cl]) if all(c.times is not None for c in cl) else None
            out.append(_Group(ids, np.stack([c.y for c in cl]), np.stack([c.X for c in cl]), times))
        return out


@dataclass(frozen=True)
class ModelSpec:
    family: MarginalFamily
    structure: StructureKind
    matrix: Optional[np.ndarray] = field(default=None, repr=False)
    shared_margins: bool = True

    def __post_init__(self):
        if not self.shared_margins:
            raise ValidationError("only margins with common (beta, gamma) are supported")
        if self.structure is StructureKind.UNSTRUCTURED and self.matrix is None:
            raise ValidationError("unstructured model requires a fixed correlation matrix")


@dataclass(frozen=True)
class ModelParams:
    beta: np.ndarray
    gamma: Optional[float] = None
    rho: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))

    @property
    def marginal(self) -> MarginalParams:
        return MarginalParams(self.beta, self.gamma)


@dataclass(frozen=True)
class JitterSet:
    """Uniform jitters indexed (replication k, cluster i, coordinate j)."""

    v: np.ndarray
    seed: int

    @classmethod
    def draw(cls, m: int, n: int, d_max: int, seed: int) -> "JitterSet":
        v = open_uniforms(substream(seed, 3), (m, n, d_max))
        v.setflags(write=False)
        return cls(v, seed)

    @property
    def m(self) -> int:
        return self.v.shape[0]

    def subset(self, ks) -> "JitterSet":
        return JitterSet(self.v[np.atleast_1d(ks)], self.seed)


# ---------------------------------------------------------------------------
# shared pieces

def _check_params(spec: ModelSpec, theta: ModelParams, n_cov: int):
    if theta.beta.shape[0] != n_cov:
        raise DomainError(f"beta has length {theta.beta.shape[0]}, data have {n_cov} covariates")
    if spec.family.has_dispersion and not (theta.gamma is not None and theta.gamma > 0):
        raise ValidationError("negative binomial margins need gamma > 0")


def _corr(spec: ModelSpec, rho, g: _Group):
    """Correlation for a group: (d, d) or per-cluster (n_g, d, d)."""
    d = g.dim
    if spec.structure is StructureKind.UNSTRUCTURED:
        return np.asarray(spec.matrix, dtype=float)[:d, :d]
    if spec.structure is StructureKind.MARKOV:
        if g.times is None:
            raise DataError("markov structure needs observation times")
        return matrix_from_params(StructureKind.MARKOV, rho, d, g.times)
    return matrix_from_params(spec.structure, rho, d)


def _group_margins(spec: ModelSpec, theta: ModelParams, g: _Group):
    mu = inverse_link(spec.family, g.X @ theta.beta)
    return cdf_triple_mu(spec.family, g.y, mu, theta.gamma)


def _latent_point(below, f, above, w, floor: float = 0.0):
    """Phi^{-1}(F(y-1) + w f(y)), taken from whichever tail is smaller.

    ``floor`` bounds both tail probabilities from below (clamps the score).
    """
    lo = np.maximum(below + w * f, floor)
    hi = np.maximum(above + (1.0 - w) * f, floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(lo <= hi, sc.ndtri(np.minimum(lo, 1.0)), -sc.ndtri(np.minimum(hi, 1.0)))


def _bounds_from_cdf(below, f, above):
    return _latent_point(below, f, above, 0.0), _latent_point(below, f, above, 1.0)


def latent_rectangle(cluster: Cluster, fam: MarginalFamily, params: MarginalParams):
    """Latent-normal rectangle of a response vector.

    Returns ``(rect, zero_mass)``; ``zero_mass`` is True when some margin
    assigns numerically zero probability to its response.
    """
    mu = inverse_link(fam, cluster.X @ params.beta)
    if fam.is_binary and np.any(cluster.y > 1):
        raise DomainError("binary responses must be 0 or 1")
    below, f, above = cdf_triple_mu(fam, cluster.y, mu, params.gamma)
    lower, upper = _bounds_from_cdf(below, f, above)
    zero = bool(np.any(f <= 0.0) or np.any(lower >= upper))
    return Rectangle(lower, upper), zero


def _resolve_engine(engine, spec: ModelSpec, rho: float) -> Engine:
    engine = Engine.from_name(engine) if isinstance(engine, str) else engine
    if engine is Engine.EXCHANGEABLE_1D:
        if spec.structure is not StructureKind.EXCHANGEABLE:
            raise UnsupportedStructureError("the 1-D engine needs exchangeable correlation")
        if rho < 0:
            raise UnsupportedStructureError("the 1-D engine needs nonnegative correlation")
    elif engine is not Engine.GENZ_BRETZ:
        raise UnsupportedStructureError(f"engine {engine.value} is not a likelihood engine")
    return engine


def _group_probabilities(spec, theta, g: _Group, engine: Engine, cfg: RqmcConfig):
    below, f, above = _group_margins(spec, theta, g)
    if g.dim == 1:
        return f[:, 0].copy(), np.zeros(g.y.shape[0])
    lower, upper = _bounds_from_cdf(below, f, above)
    empty = np.any(f <= 0.0, axis=1) | np.any(lower >= upper, axis=1)
    lower = np.where(empty[:, None], 0.0, lower)
    upper = np.where(empty[:, None], 1.0, upper)
    if engine is Engine.EXCHANGEABLE_1D:
        p, _ = exchangeable_1d_batch(lower, upper, theta.rho)
        err = np.zeros_like(p)
    else:
        R = _corr(spec, theta.rho, g)
        chol = None if cfg.reorder else np.linalg.cholesky(R)
        p, err = genz_bretz_batch(lower, upper, R, cfg, chol=chol)
    p = np.where(empty, 0.0, p)
    return p, err


# ---------------------------------------------------------------------------
# exact / simulated likelihood

@dataclass(frozen=True)
class SLTerms:
    logp: np.ndarray       # per-cluster log-probabilities, dataset order
    std_error: np.ndarray  # per-cluster Monte Carlo error of the probability
    n_floored: int

    @property
    def total(self) -> float:
        return float(np.sum(self.logp))

    @property
    def aggregate_error(self) -> float:
        """Delta-method Monte Carlo error of the summed log-likelihood."""
        p = np.exp(self.logp)
        return float(np.sqrt(np.sum((self.std_error / p) ** 2)))


def sl_terms(data, spec: ModelSpec, theta: ModelParams, engine=Engine.GENZ_BRETZ,
             cfg: RqmcConfig = SL_DEFAULT_CONFIG) -> SLTerms:
    data = Dataset.coerce(data)
    _check_params(spec, theta, data.n_covariates)
    engine = _resolve_engine(engine, spec, theta.rho)
    logp = np.empty(len(data))
    errs = np.empty(len(data))
    floored = 0
    for g in data.groups:
        p, e = _group_probabilities(spec, theta, g, engine, cfg)
        bad = ~(p > 0.0)
        floored += int(bad.sum())
        with np.errstate(divide="ignore"):
            logp[g.idx] = np.where(bad, LOG_FLOOR, np.maximum(np.log(np.where(bad, 1.0, p)), LOG_FLOOR))
        errs[g.idx] = e
    return SLTerms(logp, errs, floored)


def sl_loglik(data, spec: ModelSpec, theta: ModelParams, engine=Engine.GENZ_BRETZ,
              cfg: RqmcConfig = SL_DEFAULT_CONFIG) -> float:
    """Sum over clusters of log P(Y_i = y_i), floored at -746 per cluster."""
    return sl_terms(data, spec, theta, engine, cfg).total


def joint_pmf(cluster: Cluster, spec: ModelSpec, theta: ModelParams, engine=Engine.GENZ_BRETZ,
              cfg: RqmcConfig = SL_DEFAULT_CONFIG, R=None) -> float:
    """Probability of one response vector; ``R`` overrides the structure's matrix."""
    if R is not None:
        eng = Engine.from_name(engine) if isinstance(engine, str) else engine
        if eng is Engine.EXCHANGEABLE_1D:
            raise UnsupportedStructureError("pass rho, not a matrix, to the 1-D engine")
        spec = ModelSpec(spec.family, StructureKind.UNSTRUCTURED, matrix=np.asarray(R, dtype=float))
    data = Dataset([cluster])
    g = data.groups[0]
    _check_params(spec, theta, data.n_covariates)
    eng = _resolve_engine(engine, spec, theta.rho)
    p, _ = _group_probabilities(spec, theta, g, eng, cfg)
    return float(p[0])


# ---------------------------------------------------------------------------
# jittered objectives

def _latent_scores(spec, beta, gamma, g: _Group, v):
    """q = Phi^{-1}(F(y-1) + v f(y)) and log f(y).

    ``beta`` is (K, p); ``v`` is (K, n_g, d).  Returns q (K, n_g, d) and
    the log-pmf sum over coordinates (K, n_g).
    """
    eta = np.einsum("ndp,kp->knd", g.X, beta)
    mu = inverse_link(spec.family, eta)
    gam = None if gamma is None else np.asarray(gamma, dtype=float).reshape(-1, 1, 1)
    y = np.broadcast_to(g.y, mu.shape)
    below, f, above = cdf_triple_mu(spec.family, y, mu, gam)
    q = _latent_point(below, f, above, v, U_CLAMP)
    with np.errstate(divide="ignore"):
        logf = np.sum(np.log(f), axis=-1)
    return q, logf


def _copula_pieces(spec, rho, g: _Group):
    """(I - R^{-1}) and log|R| for one correlation parameter, shaped for the group."""
    R = _corr(spec, rho, g)
    d = g.dim
    if R.ndim == 2:
        chol = np.linalg.cholesky(R)
        logdet = 2.0 * np.sum(np.log(np.diag(chol)))
        inv = np.linalg.inv(R)
        return np.eye(d) - inv, np.full(g.y.shape[0], logdet)
    sign, logdet = np.linalg.slogdet(R)
    if np.any(sign <= 0):
        raise ValidationError("correlation matrix is not positive definite")
    return np.eye(d) - np.linalg.inv(R), logdet


def _log_copula_terms(spec, rho, g: _Group, q):
    """log c(u; R) per cluster for scores q (..., n_g, d)."""
    if g.dim == 1:
        return np.zeros(q.shape[:-1])
    A, logdet = _copula_pieces(spec, rho, g)
    if A.ndim == 2:
        quad = np.einsum("...nd,de,...ne->...n", q, A, q)
    else:
        quad = np.einsum("...nd,nde,...ne->...n", q, A, q)
    return 0.5 * quad - 0.5 * logdet


def _params_array(theta_or_list):
    if isinstance(theta_or_list, ModelParams):
        theta_or_list = [theta_or_list]
    beta = np.stack([t.beta for t in theta_or_list])
    gammas = [t.gamma for t in theta_or_list]
    gamma = None if gammas[0] is None else np.array(gammas, dtype=float)
    rho = np.array([t.rho for t in theta_or_list], dtype=float)
    return beta, gamma, rho


def _corr_rows(spec: ModelSpec, rho, g: _Group):
    """Correlation matrices for a vector of rho values: (M, d, d) or (M, n_g, d, d)."""
    rho = np.asarray(rho, dtype=float)
    d = g.dim
    if spec.structure is StructureKind.UNSTRUCTURED:
        R = np.asarray(spec.matrix, dtype=float)[:d, :d]
        return np.broadcast_to(R, rho.shape + (d, d))
    if spec.structure is StructureKind.EXCHANGEABLE:
        r = rho[:, None, None]
        return (1.0 - r) * np.eye(d) + r
    if spec.structure is StructureKind.AR1:
        lag = np.abs(np.subtract.outer(np.arange(d), np.arange(d)))
        return np.power(rho[:, None, None], lag)
    if g.times is None:
        raise DataError("markov structure needs observation times")
    lag = np.abs(g.times[:, :, None] - g.times[:, None, :])
    return np.power(rho[:, None, None, None], lag)


def hr_loglik_batch(data, spec: ModelSpec, thetas: Sequence[ModelParams], jitters: JitterSet,
                    ks: Sequence[int]) -> np.ndarray:
    """Surrogate log-likelihoods for parameter set ``thetas[r]`` with jitter set ``ks[r]``."""
    data = Dataset.coerce(data)
    beta, gamma, rho = _params_array(list(thetas))
    ks = np.asarray(ks, dtype=np.intp)
    for t in thetas:
        _check_params(spec, t, data.n_covariates)
    out = np.zeros(len(ks))
    for g in data.groups:
        v = jitters.v[ks][:, g.idx, :g.dim]
        q, logf = _latent_scores(spec, beta, gamma, g, v)
        out += logf.sum(axis=1)
        if g.dim == 1:
            continue
        R = _corr_rows(spec, rho, g)
        sign, logdet = np.linalg.slogdet(R)
        if np.any(sign <= 0):
            raise ValidationError("correlation matrix is not positive definite")
        A = np.eye(g.dim) - np.linalg.inv(R)
        if A.ndim == 3:
            quad = np.einsum("knd,kde,kne->k", q, A, q)
            out += 0.5 * quad - 0.5 * g.y.shape[0] * logdet
        else:
            quad = np.einsum("knd,knde,kne->k", q, A, q)
            out += 0.5 * quad - 0.5 * logdet.sum(axis=1)
    return out


def hr_surrogate_loglik(data, spec: ModelSpec, theta: ModelParams, jitters: JitterSet, k: int) -> float:
    """Surrogate log-likelihood treating jitter set ``k`` as observed."""
    return float(hr_loglik_batch(data, spec, [theta], jitters, [k])[0])


def _logmeanexp(a, axis=0):
    return sc.logsumexp(a, axis=axis) - np.log(a.shape[axis])


def mf_loglik(data, spec: ModelSpec, theta: ModelParams, jitters: JitterSet, joint: bool = True) -> float:
    """Jitter-averaged simulated log-likelihood, evaluated in log space.

    With ``joint=True`` one jitter replication covers all clusters at once
    (a single importance sample for the whole likelihood).  ``joint=False``
    averages each cluster's density separately, for comparison only.
    """
    data = Dataset.coerce(data)
    _check_params(spec, theta, data.n_covariates)
    beta = theta.beta[None, :]
    gamma = None if theta.gamma is None else np.array([theta.gamma])
    total_logf = 0.0
    per_k = np.zeros(jitters.m)
    separate = 0.0
    for g in data.groups:
        v = jitters.v[:, g.idx, :g.dim]  # (m, n_g, d)
        eta = np.einsum("ndp,p->nd", g.X, theta.beta)
        mu = inverse_link(spec.family, eta)
        below, f, above = cdf_triple_mu(spec.family, g.y, mu, theta.gamma)
        with np.errstate(divide="ignore"):
            total_logf += float(np.sum(np.log(f)))
        q = _latent_point(below[None], f[None], above[None], v, U_CLAMP)
        terms = _log_copula_terms(spec, theta.rho, g, q)  # (m, n_g)
        if joint:
            per_k += terms.sum(axis=1)
        else:
            separate += float(np.sum(_logmeanexp(terms, axis=0)))
    if joint:
        return total_logf + float(_logmeanexp(per_k))
    return total_logf + separate


def rho_bounds(spec: ModelSpec, d_max: int, engine: Optional[Engine] = None) -> tuple[float, float]:
    """Open interval used by the optimizer for rho (see estimate.RHO_MARGIN)."""
    lo, hi = admissible_range(spec.structure, max(d_max, 2))
    if engine is Engine.EXCHANGEABLE_1D:
        lo = max(lo, 0.0)
    return lo, hi
