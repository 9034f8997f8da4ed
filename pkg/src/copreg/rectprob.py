"""Multivariate normal rectangle probabilities P(a_j < Z_j < b_j, j = 1..d).

Four engines with a common :class:`ProbEstimate` result:

``exchangeable_1d``
    Deterministic one-dimensional reduction for positive exchangeable
    correlation, integrated with a batched adaptive Gauss-Kronrod rule.
``genz_bretz``
    Sequential conditioning transform to a bounded integrand on the unit
    cube, integrated by randomly shifted quasi-random points with baker's
    (tent) folding and antithetic pairs.
``naive_mc``
    Indicator average over multivariate normal draws.
``mf_importance``
    Uniform importance sampling on the marginal probability scale; its
    weights are unbounded, which is what makes it a poor estimator.

Batch variants (``*_batch``) evaluate many rectangles at once and are what the
likelihood code calls.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special as sc

from ._rng import open_uniforms, substream
from .correlation import CholeskyFactor, cholesky
from .errors import DomainError, UnsupportedStructureError
from .special import interval_mass

QUANTILE_CLAMP = 1e-16


class Engine(enum.Enum):
    EXCHANGEABLE_1D = "exchangeable_1d"
    GENZ_BRETZ = "genz_bretz"
    NAIVE = "naive"
    MF = "mf"

    @classmethod
    def from_name(cls, name: str) -> "Engine":
        key = name.strip().lower()
        key = {"exact": "exchangeable_1d", "1d": "exchangeable_1d", "gb": "genz_bretz",
               "genz": "genz_bretz"}.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise DomainError(f"unknown engine {name!r}") from None


@dataclass(frozen=True)
class Rectangle:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DomainError("rectangle bounds must be 1-d arrays of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise DomainError("rectangle bounds must not be NaN")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, a: float, d: int) -> "Rectangle":
        return cls(np.full(d, -a), np.full(d, a))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


@dataclass(frozen=True)
class RqmcConfig:
    lattice_size: int = 127
    randomizations: int = 10
    seed: int = 20130101
    antithetic: bool = True
    reorder: bool = True

    def __post_init__(self):
        if self.lattice_size < 2 or self.randomizations < 2:
            raise DomainError("lattice_size and randomizations must both be >= 2")

    @property
    def points_per_rectangle(self) -> int:
        return self.lattice_size * self.randomizations * (2 if self.antithetic else 1)


@dataclass(frozen=True)
class ProbEstimate:
    value: float
    std_error: float
    engine: Engine
    evaluations: int


# ---------------------------------------------------------------------------
# one-dimensional reduction for exchangeable correlation

_XGK = np.array([0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                 0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                 0.207784955007898467600689403773245, 0.0])
_WGK = np.array([0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                 0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                 0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG = np.array([0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                0.381830050505118944950369775488975, 0.417959183673469387755102040816327])

GK_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
GK_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss weights on the Kronrod grid: odd-indexed Kronrod nodes are the Gauss nodes
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[1::2] = np.concatenate([_WG[:-1], _WG[::-1]])

Z_RANGE = 8.0


def adaptive_gk15(integrand, n_problems: int, lo: float = -Z_RANGE, hi: float = Z_RANGE,
                  abs_tol: float = 1e-8, rel_tol: float = 1e-10, n_init: int = 16,
                  max_rounds: int = 40):
    """Integrate ``n_problems`` scalar functions over [lo, hi] simultaneously.

    ``integrand(pid, z)`` receives problem indices ``pid`` (M,) and nodes
    ``z`` (M, 15) and returns values (M, 15).  A panel is accepted once its
    |Kronrod - Gauss| difference is below its width-proportional share of
    min(abs_tol, rel_tol * |I|).  Returns ``(integral, error_estimate,
    n_evaluations)``.
    """
    edges = np.linspace(lo, hi, n_init + 1)
    pid = np.repeat(np.arange(n_problems), n_init)
    a = np.tile(edges[:-1], n_problems)
    b = np.tile(edges[1:], n_problems)
    total = np.zeros(n_problems)
    err_total = np.zeros(n_problems)
    scale = None
    evals = 0
    span = hi - lo
    for rnd in range(max_rounds):
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        z = mid[:, None] + half[:, None] * GK_NODES
        vals = integrand(pid, z)
        evals += vals.size
        kron = half * (vals @ GK_WEIGHTS)
        gauss = half * (vals @ GAUSS_WEIGHTS)
        err = np.abs(kron - gauss)
        if scale is None:
            scale = np.abs(np.bincount(pid, weights=kron, minlength=n_problems))
        tol = np.minimum(abs_tol, rel_tol * scale[pid])
        accept = (err <= tol * (2.0 * half) / span) | (half < 1e-7) | (rnd == max_rounds - 1)
        total += np.bincount(pid[accept], weights=kron[accept], minlength=n_problems)
        err_total += np.bincount(pid[accept], weights=err[accept], minlength=n_problems)
        refine = ~accept
        if not refine.any():
            break
        pid = np.repeat(pid[refine], 2)
        ra, rm, rb = a[refine], mid[refine], b[refine]
        a = np.column_stack([ra, rm]).ravel()
        b = np.column_stack([rm, rb]).ravel()
    return total, err_total, evals


def exchangeable_1d_batch(lower, upper, rho: float, abs_tol: float = 1e-8, rel_tol: float = 1e-10):
    """Rectangle probabilities for equicorrelated standard normals, rho in [0, 1).

    ``lower``/``upper`` have shape (N, d).  Returns ``(values, n_evaluations)``.
    """
    lower = np.atleast_2d(np.asarray(lower, dtype=float))
    upper = np.atleast_2d(np.asarray(upper, dtype=float))
    if not 0.0 <= rho < 1.0:
        raise UnsupportedStructureError(
            f"one-dimensional reduction needs 0 <= rho < 1, got {rho}")
    n = lower.shape[0]
    if n == 0:
        return np.zeros(0), 0
    if rho == 0.0:
        return np.prod(np.maximum(interval_mass(lower, upper), 0.0), axis=1), 0
    s = np.sqrt(rho)
    t = np.sqrt(1.0 - rho)
    lo_s = lower / t
    hi_s = upper / t
    ratio = s / t

    def integrand(pid, z):
        shift = ratio * z[..., None]
        mass = interval_mass(lo_s[pid][:, None, :] - shift, hi_s[pid][:, None, :] - shift)
        return np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi) * np.prod(np.maximum(mass, 0.0), axis=-1)

    vals, _, evals = adaptive_gk15(integrand, n, abs_tol=abs_tol, rel_tol=rel_tol)
    return np.clip(vals, 0.0, 1.0), evals


def exchangeable_1d(rect: Rectangle, rho: float) -> ProbEstimate:
    """Deterministic probability for equicorrelation ``rho`` via the 1-D integral."""
    vals, evals = exchangeable_1d_batch(rect.lower[None, :], rect.upper[None, :], rho)
    return ProbEstimate(float(vals[0]), 0.0, Engine.EXCHANGEABLE_1D, evals)


# ---------------------------------------------------------------------------
# Genz-Bretz transformed integrand with randomized quasi-Monte Carlo

def _primes(k: int) -> np.ndarray:
    out = []
    cand = 2
    while len(out) < k:
        if all(cand % p for p in out if p * p <= cand):
            out.append(cand)
        cand += 1
    return np.array(out, dtype=float)


def richtmyer_points(n_points: int, dim: int) -> np.ndarray:
    """Quasi-random points frac(p * sqrt(prime_j)), p = 1..n_points."""
    gen = np.sqrt(_primes(dim))
    p = np.arange(1, n_points + 1, dtype=float)[:, None]
    return np.mod(p * gen, 1.0)


@functools.lru_cache(maxsize=64)
def _folded_points(lattice_size: int, randomizations: int, seed: int, antithetic: bool,
                   dim: int) -> np.ndarray:
    """Integration nodes of shape (m, 2P or P, dim) for a given configuration.

    Shift k is drawn from substream (seed, k) so shifts do not depend on the
    order in which they are generated.
    """
    lattice = richtmyer_points(lattice_size, dim)
    shifts = np.stack([substream(seed, k).random(dim) for k in range(randomizations)])
    folded = np.abs(2.0 * np.mod(lattice[None, :, :] + shifts[:, None, :], 1.0) - 1.0)
    if antithetic:
        folded = np.concatenate([folded, 1.0 - folded], axis=1)
    folded.setflags(write=False)
    return folded


def _mass_and_base(lo_arg, hi_arg):
    """Interval mass plus the cdf at the tail-side endpoint.

    Intervals with a positive lower end are reflected so both cdf calls are
    made in the lower half-line, where ndtr has full relative accuracy.
    """
    flip = lo_arg > 0.0
    a = np.where(flip, -hi_arg, lo_arg)
    b = np.where(flip, -lo_arg, hi_arg)
    fa = sc.ndtr(a)
    fb = sc.ndtr(b)
    return fb - fa, np.where(flip, fb, fa), flip


def _conditional_sample(base, mass, flip, w):
    """Phi^{-1}(Phi(lo) + w * mass), using the reflected cdf value when flipped."""
    p = np.where(flip, base - w * mass, base + w * mass)
    p = np.clip(p, QUANTILE_CLAMP, 1.0 - QUANTILE_CLAMP)
    q = sc.ndtri(p)
    return np.where(flip, -q, q)


def _gb_integrand(lower, upper, chol, nodes):
    """Integrand values e(w) of shape (N, K) for bounds (N, d) and nodes (K, d-1).

    ``chol`` is either (d, d) shared or (N, d, d) per rectangle.
    """
    n, d = lower.shape
    shared = chol.ndim == 2
    diag = np.diagonal(chol, axis1=-2, axis2=-1)  # (d,) or (N, d)
    k = nodes.shape[0]
    ys = np.empty((n, k, d - 1))
    c0 = diag[0] if shared else diag[:, 0:1]
    lo_arg = np.broadcast_to((lower[:, 0:1] / c0), (n, k))
    hi_arg = np.broadcast_to((upper[:, 0:1] / c0), (n, k))
    mass, base, flip = _mass_and_base(lo_arg, hi_arg)
    prob = mass.copy()
    for j in range(1, d):
        ys[:, :, j - 1] = _conditional_sample(base, mass, flip, nodes[:, j - 1])
        if shared:
            s = ys[:, :, :j] @ chol[j, :j]
            cjj = diag[j]
        else:
            s = np.einsum("nkj,nj->nk", ys[:, :, :j], chol[:, j, :j])
            cjj = diag[:, j:j + 1]
        lo_arg = (lower[:, j:j + 1] - s) / cjj
        hi_arg = (upper[:, j:j + 1] - s) / cjj
        mass, base, flip = _mass_and_base(lo_arg, hi_arg)
        prob *= mass
    return prob


_CHUNK_ELEMENTS = 1_500_000


def genz_bretz_batch(lower, upper, corr, cfg: RqmcConfig, chol=None):
    """Randomized QMC rectangle probabilities for many rectangles.

    ``corr`` is a (d, d) correlation matrix shared by all rectangles or a
    (N, d, d) stack.  ``chol`` may supply the matching Cholesky factor(s)
    when no reordering is requested.  Returns ``(values, std_errors)``; the
    standard error is the spread of the per-shift means divided by sqrt(m).
    """
    lower = np.atleast_2d(np.asarray(lower, dtype=float))
    upper = np.atleast_2d(np.asarray(upper, dtype=float))
    corr = np.asarray(corr, dtype=float)
    n, d = lower.shape
    values = np.zeros(n)
    errors = np.zeros(n)
    if n == 0:
        return values, errors
    marg = interval_mass(lower, upper)
    live = np.all(marg > 0.0, axis=1)
    if d == 1:
        values[live] = marg[live, 0]
        return np.clip(values, 0.0, 1.0), errors
    lower, upper, marg = lower[live], upper[live], marg[live]
    if corr.ndim == 3:
        corr = corr[live]
    if cfg.reorder:
        order = np.argsort(marg, axis=1, kind="stable")
        lower = np.take_along_axis(lower, order, axis=1)
        upper = np.take_along_axis(upper, order, axis=1)
        base = corr if corr.ndim == 3 else np.broadcast_to(corr, (lower.shape[0], d, d))
        rows = order[:, :, None]
        cols = order[:, None, :]
        permuted = np.take_along_axis(np.take_along_axis(base, rows, axis=1), cols, axis=2)
        factor = np.linalg.cholesky(permuted)
    elif chol is not None:
        factor = np.asarray(chol, dtype=float)
        if factor.ndim == 3:
            factor = factor[live]
    else:
        factor = np.linalg.cholesky(corr)
    nodes = _folded_points(cfg.lattice_size, cfg.randomizations, int(cfg.seed), cfg.antithetic, d - 1)
    m, per_shift, _ = nodes.shape
    flat = nodes.reshape(-1, d - 1)
    n_live = lower.shape[0]
    step = max(1, _CHUNK_ELEMENTS // (flat.shape[0] * d))
    shift_means = np.empty((n_live, m))
    for start in range(0, n_live, step):
        sl = slice(start, start + step)
        f = factor if factor.ndim == 2 else factor[sl]
        vals = _gb_integrand(lower[sl], upper[sl], f, flat)
        shift_means[sl] = vals.reshape(-1, m, per_shift).mean(axis=2)
    values[live] = shift_means.mean(axis=1)
    errors[live] = shift_means.std(axis=1, ddof=1) / np.sqrt(m)
    return np.clip(values, 0.0, 1.0), errors


def genz_bretz(rect: Rectangle, chol: CholeskyFactor, cfg: Optional[RqmcConfig] = None) -> ProbEstimate:
    cfg = cfg or RqmcConfig()
    if chol.dim != rect.dim:
        raise DomainError("Cholesky factor and rectangle dimensions differ")
    vals, errs = genz_bretz_batch(rect.lower[None, :], rect.upper[None, :], chol.corr, cfg,
                                  chol=chol.matrix)
    evals = cfg.points_per_rectangle if rect.dim > 1 else 0
    return ProbEstimate(float(vals[0]), float(errs[0]), Engine.GENZ_BRETZ, evals)


# ---------------------------------------------------------------------------
# simulation baselines

def naive_mc(rect: Rectangle, chol: CholeskyFactor, m: int, seed: int) -> ProbEstimate:
    """Fraction of m draws z = C e (e iid standard normal) inside the rectangle."""
    if m < 100:
        raise DomainError("naive simulation needs m >= 100")
    rng = substream(seed, 1)
    z = rng.standard_normal((m, rect.dim)) @ chol.matrix.T
    inside = np.all((z > rect.lower) & (z < rect.upper), axis=1)
    p = float(inside.mean())
    return ProbEstimate(p, float(np.sqrt(p * (1.0 - p) / m)), Engine.NAIVE, m)


def mf_weights(rect: Rectangle, R, m: int, seed: int) -> np.ndarray:
    """Importance weights phi_R(z) prod(Phi(b)-Phi(a)) / prod phi(z_j) with z_j = Phi^{-1}(omega_j)."""
    R = np.asarray(R, dtype=float)
    mass = interval_mass(rect.lower, rect.upper)
    if np.any(mass <= 0.0):
        raise DomainError("importance sampler needs Phi(a_j) < Phi(b_j) for every coordinate")
    rng = substream(seed, 2)
    u = open_uniforms(rng, (m, rect.dim))
    mass_b, base, flip = _mass_and_base(np.broadcast_to(rect.lower, u.shape),
                                        np.broadcast_to(rect.upper, u.shape))
    z = _conditional_sample(base, mass_b, flip, u)
    chol = cholesky(R)
    logdet = 2.0 * np.sum(np.log(np.diag(chol.matrix)))
    solved = np.linalg.solve(R, z.T).T
    quad = np.sum(z * z, axis=1) - np.sum(z * solved, axis=1)
    return np.exp(np.sum(np.log(mass)) - 0.5 * logdet + 0.5 * quad)


def mf_importance(rect: Rectangle, R, m: int, seed: int) -> ProbEstimate:
    """Importance-sampling estimate with SD = sqrt(Var[w] / m); not clamped to [0, 1]."""
    if m < 100:
        raise DomainError("importance sampling needs m >= 100")
    w = mf_weights(rect, R, m, seed)
    return ProbEstimate(float(w.mean()), float(np.sqrt(w.var(ddof=1) / m)), Engine.MF, m)
