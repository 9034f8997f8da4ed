"""Quasi-Newton maximization, parameter transforms and standard errors.

The optimizer is a variable-metric (BFGS inverse-Hessian) method with
backtracking line search and central finite-difference gradients.  It is
written for a *batch* of independent problems advanced in lockstep so that
the m surrogate fits of the HR protocol share every objective call; a single
maximization is a batch of one.

Parameters are optimized on an unconstrained scale: beta as is,
gamma = exp(raw), rho = lo + (hi - lo) * expit(raw).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special as sc

from .correlation import StructureKind, admissible_range
from .errors import NumericalError, ValidationError
from .likelihood import (SL_DEFAULT_CONFIG, Dataset, JitterSet, ModelParams, ModelSpec,
                         hr_loglik_batch, mf_loglik, sl_terms)
from .marginals import MarginalFamily, cdf_pair_mu, inverse_link
from .rectprob import Engine, RqmcConfig

RHO_MARGIN = 1e-4
FD_STEP = 1e-6
HESS_STEP = 1e-4
DEFAULT_TOL = 1e-5
DEFAULT_MAX_ITER = 500
_ACCTOL = 1e-4
_SHRINK = 0.2
_MAX_BACKTRACK = 40


# ---------------------------------------------------------------------------
# parameter transforms

@dataclass(frozen=True)
class ParamVector:
    beta: np.ndarray
    gamma_log: Optional[float] = None
    rho_raw: Optional[float] = None

    def to_array(self) -> np.ndarray:
        parts = [np.asarray(self.beta, dtype=float)]
        if self.gamma_log is not None:
            parts.append([self.gamma_log])
        if self.rho_raw is not None:
            parts.append([self.rho_raw])
        return np.concatenate(parts)


@dataclass(frozen=True)
class ParamTransform:
    """Map between natural parameters and the unconstrained optimizer scale."""

    n_beta: int
    has_gamma: bool
    has_rho: bool
    rho_lower: float = -1.0
    rho_upper: float = 1.0
    beta_names: tuple = ()

    @classmethod
    def for_model(cls, spec: ModelSpec, data: Dataset, engine: Optional[Engine] = None) -> "ParamTransform":
        has_rho = spec.structure is not StructureKind.UNSTRUCTURED and data.d_max > 1
        lo, hi = rho_interval(spec.structure, data.d_max, engine) if has_rho else (-1.0, 1.0)
        return cls(data.n_covariates, spec.family.has_dispersion, has_rho, lo, hi,
                   tuple(data.covariate_names))

    @property
    def size(self) -> int:
        return self.n_beta + int(self.has_gamma) + int(self.has_rho)

    @property
    def names(self) -> list[str]:
        out = list(self.beta_names) if len(self.beta_names) == self.n_beta else [
            f"beta{j}" for j in range(self.n_beta)]
        if self.has_gamma:
            out.append("gamma")
        if self.has_rho:
            out.append("rho")
        return out

    def rho_to_raw(self, rho):
        s = (np.asarray(rho, dtype=float) - self.rho_lower) / (self.rho_upper - self.rho_lower)
        return sc.logit(s)

    def rho_from_raw(self, raw):
        return self.rho_lower + (self.rho_upper - self.rho_lower) * sc.expit(raw)

    def to_raw(self, theta: ModelParams) -> np.ndarray:
        pv = ParamVector(theta.beta,
                         float(np.log(theta.gamma)) if self.has_gamma else None,
                         float(self.rho_to_raw(theta.rho)) if self.has_rho else None)
        return pv.to_array()

    def natural(self, x) -> np.ndarray:
        """Natural-scale values for raw rows ``x`` (..., size)."""
        x = np.asarray(x, dtype=float)
        out = x.copy()
        j = self.n_beta
        if self.has_gamma:
            with np.errstate(over="ignore"):  # oversized trial steps give inf, rejected by the line search
                out[..., j] = np.exp(x[..., j])
            j += 1
        if self.has_rho:
            out[..., j] = self.rho_from_raw(x[..., j])
        return out

    def from_raw(self, x) -> ModelParams:
        nat = self.natural(x)
        j = self.n_beta
        gamma = None
        if self.has_gamma:
            gamma = float(nat[j])
            j += 1
        rho = float(nat[j]) if self.has_rho else 0.0
        return ModelParams(nat[:self.n_beta].copy(), gamma, rho)

    def jacobian_diag(self, x) -> np.ndarray:
        """d natural / d raw, elementwise (the transform is coordinatewise)."""
        x = np.asarray(x, dtype=float)
        jac = np.ones_like(x)
        j = self.n_beta
        if self.has_gamma:
            jac[..., j] = np.exp(x[..., j])
            j += 1
        if self.has_rho:
            s = sc.expit(x[..., j])
            jac[..., j] = (self.rho_upper - self.rho_lower) * s * (1.0 - s)
        return jac


def rho_interval(kind: StructureKind, d_max: int, engine: Optional[Engine] = None) -> tuple[float, float]:
    """Optimizer bounds for rho: the admissible range shrunk by ``RHO_MARGIN``."""
    if kind is StructureKind.MARKOV:
        lo, hi = RHO_MARGIN, 1.0 - RHO_MARGIN
    else:
        lo, hi = admissible_range(kind, max(d_max, 2))
        lo, hi = lo + RHO_MARGIN, hi - RHO_MARGIN
    if engine is Engine.EXCHANGEABLE_1D:
        lo = max(lo, 0.0)
    return lo, hi


# ---------------------------------------------------------------------------
# batched BFGS

@dataclass
class OptResult:
    x: np.ndarray
    value: float
    gradient: np.ndarray
    iterations: int
    evaluations: int
    converged: bool
    message: str


BatchObjective = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _fd_steps(x, rel):
    return rel * np.maximum(1.0, np.abs(x))


def _batch_gradient(fun: BatchObjective, X, ids, rel=FD_STEP):
    """Central differences for each row of ``X``; one objective call."""
    K, p = X.shape
    h = _fd_steps(X, rel)                          # (K, p)
    eye = np.eye(p)
    plus = X[:, None, :] + h[:, :, None] * eye     # (K, p, p)
    minus = X[:, None, :] - h[:, :, None] * eye
    pts = np.concatenate([plus, minus], axis=1).reshape(K * 2 * p, p)
    vals = np.asarray(fun(pts, np.repeat(ids, 2 * p)), dtype=float).reshape(K, 2, p)
    # exact step actually taken, to cancel representation error
    hp = (plus - X[:, None, :])[:, np.arange(p), np.arange(p)]
    hm = (X[:, None, :] - minus)[:, np.arange(p), np.arange(p)]
    return (vals[:, 0] - vals[:, 1]) / (hp + hm)


def maximize_batch(fun: BatchObjective, X0, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER, fd_step: float = FD_STEP) -> list[OptResult]:
    """Maximize K independent problems sharing one vectorized objective.

    ``fun(X, ids)`` returns objective values for rows ``X`` (M, p), row r
    belonging to problem ``ids[r]``.  Non-finite values are treated as -inf.
    """
    X = np.array(X0, dtype=float, ndmin=2)
    K, p = X.shape
    ids_all = np.arange(K)

    def f(pts, ids):
        v = np.asarray(fun(pts, ids), dtype=float)
        return np.where(np.isfinite(v), -v, np.inf)  # minimize the negative

    def grad(pts, ids):
        g = -_batch_gradient(fun, pts, ids, fd_step)
        return np.where(np.isfinite(g), g, np.nan)

    F = f(X, ids_all)
    if not np.all(np.isfinite(F)):
        bad = np.nonzero(~np.isfinite(F))[0]
        raise NumericalError(f"objective is not finite at the starting point of problem(s) {bad.tolist()}")
    G = grad(X, ids_all)
    evals = np.full(K, 1 + 2 * p)
    B = np.tile(np.eye(p), (K, 1, 1))
    iters = np.zeros(K, dtype=int)
    done = np.zeros(K, dtype=bool)
    conv = np.zeros(K, dtype=bool)
    msg = [""] * K
    fresh = np.ones(K, dtype=bool)   # B was just reset

    for k in range(K):
        if np.all(np.abs(G[k]) <= tol):
            done[k] = conv[k] = True
            msg[k] = "gradient below tolerance"

    while not np.all(done):
        act = np.nonzero(~done)[0]
        bad_grad = act[np.any(np.isnan(G[act]), axis=1)]
        for k in bad_grad:
            done[k] = True
            msg[k] = "non-finite gradient"
        act = np.nonzero(~done)[0]
        if act.size == 0:
            break
        T = -np.einsum("kij,kj->ki", B[act], G[act])
        slope = np.einsum("ki,ki->k", T, G[act])
        # not a descent direction: reset the metric
        reset = slope >= 0
        if np.any(reset):
            for j in np.nonzero(reset)[0]:
                k = act[j]
                if fresh[k]:
                    done[k] = True
                    msg[k] = "no descent direction"
                B[k] = np.eye(p)
                fresh[k] = True
                T[j] = -G[k]
                slope[j] = -G[k] @ G[k]
            keep = ~done[act]
            act, T, slope = act[keep], T[keep], slope[keep]
            if act.size == 0:
                continue
        step = np.ones(act.size)
        accepted = np.zeros(act.size, dtype=bool)
        stalled = np.zeros(act.size, dtype=bool)
        Xn = X[act].copy()
        Fn = F[act].copy()
        for _ in range(_MAX_BACKTRACK):
            pend = np.nonzero(~accepted & ~stalled)[0]
            if pend.size == 0:
                break
            cand = X[act[pend]] + step[pend, None] * T[pend]
            same = np.all(cand == X[act[pend]], axis=1)
            stalled[pend[same]] = True
            pend, cand = pend[~same], cand[~same]
            if pend.size == 0:
                break
            fc = f(cand, act[pend])
            evals[act[pend]] += 1
            ok = fc <= F[act[pend]] + _ACCTOL * step[pend] * slope[pend]
            Xn[pend[ok]] = cand[ok]
            Fn[pend[ok]] = fc[ok]
            accepted[pend[ok]] = True
            step[pend[~ok]] *= _SHRINK
        stalled |= ~accepted
        for j in np.nonzero(stalled)[0]:
            k = act[j]
            if fresh[k]:
                done[k] = True
                msg[k] = "line search failed"
            else:
                B[k] = np.eye(p)   # retry along steepest ascent
                fresh[k] = True
        moved = act[accepted]
        if moved.size == 0:
            continue
        Gn = grad(Xn[accepted], moved)
        evals[moved] += 2 * p
        s = Xn[accepted] - X[moved]
        y = Gn - G[moved]
        for j, k in enumerate(moved):
            sy = s[j] @ y[j]
            if sy > 0:
                By = B[k] @ y[j]
                yBy = y[j] @ By
                B[k] = (B[k] + ((1.0 + yBy / sy) * np.outer(s[j], s[j]) - np.outer(By, s[j])
                               - np.outer(s[j], By)) / sy)
                fresh[k] = False
            else:
                B[k] = np.eye(p)
                fresh[k] = True
        X[moved] = Xn[accepted]
        F[moved] = Fn[accepted]
        G[moved] = Gn
        iters[moved] += 1
        for k in moved:
            if np.all(np.abs(G[k]) <= tol):
                done[k] = conv[k] = True
                msg[k] = "gradient below tolerance"
            elif iters[k] >= max_iter:
                done[k] = True
                msg[k] = "iteration limit reached"
    return [OptResult(X[k].copy(), float(-F[k]), -G[k].copy(), int(iters[k]), int(evals[k]),
                      bool(conv[k]), msg[k]) for k in range(K)]


def maximize(objective: Callable[[np.ndarray], float], x0, tol: float = DEFAULT_TOL,
             max_iter: int = DEFAULT_MAX_ITER) -> OptResult:
    """Maximize a scalar objective of a raw parameter vector."""
    def fun(pts, ids):
        return np.array([objective(r) for r in pts])
    return maximize_batch(fun, np.atleast_1d(np.asarray(x0, dtype=float))[None, :], tol, max_iter)[0]


# ---------------------------------------------------------------------------
# Hessians and standard errors

def hessian_batch(fun: BatchObjective, X, rel: float = HESS_STEP) -> np.ndarray:
    """Central-difference Hessians (K, p, p) of ``fun`` at each row of ``X``."""
    X = np.array(X, dtype=float, ndmin=2)
    K, p = X.shape
    h = _fd_steps(X, rel)
    pts, tags = [], []
    pts.append(X)
    for i in range(p):
        for sgn in (1, -1):
            Y = X.copy()
            Y[:, i] += sgn * h[:, i]
            pts.append(Y)
    for i in range(p):
        for j in range(i + 1, p):
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                Y = X.copy()
                Y[:, i] += si * h[:, i]
                Y[:, j] += sj * h[:, j]
                pts.append(Y)
    P = np.stack(pts, axis=1)               # (K, n_pts, p)
    n_pts = P.shape[1]
    vals = np.asarray(fun(P.reshape(K * n_pts, p), np.repeat(np.arange(K), n_pts)),
                      dtype=float).reshape(K, n_pts)
    f0 = vals[:, 0]
    H = np.empty((K, p, p))
    pos = 1
    for i in range(p):
        H[:, i, i] = (vals[:, pos] - 2.0 * f0 + vals[:, pos + 1]) / h[:, i] ** 2
        pos += 2
    for i in range(p):
        for j in range(i + 1, p):
            pp, pm, mp, mm = vals[:, pos:pos + 4].T
            H[:, i, j] = H[:, j, i] = (pp - pm - mp + mm) / (4.0 * h[:, i] * h[:, j])
            pos += 4
    return 0.5 * (H + np.swapaxes(H, 1, 2))


@dataclass(frozen=True)
class CovarianceResult:
    cov: Optional[np.ndarray]          # natural scale
    std_errors: Optional[np.ndarray]
    eigenvalues: np.ndarray            # of the raw-scale Hessian
    message: str = ""


def covariance_from_hessian(H, jac_diag) -> CovarianceResult:
    """Delta-method covariance on the natural scale from a raw-scale Hessian."""
    H = np.asarray(H, dtype=float)
    eig = np.linalg.eigvalsh(H)
    if not np.all(np.isfinite(H)) or not np.all(eig < 0):
        return CovarianceResult(None, None, eig, "Hessian is not negative definite")
    cov_raw = np.linalg.inv(-H)
    J = np.asarray(jac_diag, dtype=float)
    cov = cov_raw * np.outer(J, J)
    return CovarianceResult(cov, np.sqrt(np.diag(cov)), eig)


def standard_errors(objective: Callable[[np.ndarray], float], x_hat, transform: Optional[ParamTransform] = None,
                    rel: float = HESS_STEP) -> CovarianceResult:
    """SEs from the numerical Hessian of ``objective`` at the raw optimum."""
    x_hat = np.atleast_1d(np.asarray(x_hat, dtype=float))

    def fun(pts, ids):
        return np.array([objective(r) for r in pts])
    H = hessian_batch(fun, x_hat[None, :], rel)[0]
    jac = transform.jacobian_diag(x_hat) if transform is not None else np.ones_like(x_hat)
    return covariance_from_hessian(H, jac)


# ---------------------------------------------------------------------------
# fits

@dataclass
class FitResult:
    names: list
    estimates: dict
    std_errors: Optional[dict]
    loglik: float
    iterations: int
    converged: bool
    method: str
    engine: Optional[str] = None
    seed: Optional[int] = None
    cov: Optional[np.ndarray] = field(default=None, repr=False)
    params: Optional[ModelParams] = field(default=None, repr=False)
    raw: Optional[np.ndarray] = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict)

    def estimate_vector(self) -> np.ndarray:
        return np.array([self.estimates[k] for k in self.names])

    def se_vector(self) -> Optional[np.ndarray]:
        if self.std_errors is None:
            return None
        return np.array([self.std_errors[k] for k in self.names])


def _make_result(tr: ParamTransform, opt: OptResult, covres: Optional[CovarianceResult], method: str,
                 engine=None, seed=None, **diag) -> FitResult:
    nat = tr.natural(opt.x)
    names = tr.names
    ses = None
    cov = None
    if covres is not None and covres.std_errors is not None:
        ses = dict(zip(names, covres.std_errors.tolist()))
        cov = covres.cov
    d = {"message": opt.message, "evaluations": opt.evaluations,
         "gradient_norm": float(np.max(np.abs(opt.gradient))) if opt.gradient.size else 0.0}
    if covres is not None and covres.message:
        d["hessian"] = covres.message
        d["hessian_eigenvalues"] = covres.eigenvalues.tolist()
    d.update(diag)
    return FitResult(names, dict(zip(names, nat.tolist())), ses, opt.value, opt.iterations, opt.converged,
                     method, engine, seed, cov, tr.from_raw(opt.x), opt.x.copy(), d)


def glm_fit(family: MarginalFamily, y, X, max_iter: int = 100, tol: float = 1e-10) -> np.ndarray:
    """Independence GLM coefficients by Fisher scoring (Poisson score for count families)."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if family.is_binary:
        ybar = np.clip(y.mean(), 0.01, 0.99)
        beta = np.zeros(X.shape[1])
        beta[0] = sc.logit(ybar) if family is MarginalFamily.BERNOULLI_LOGIT else sc.ndtri(ybar)
    else:
        beta = np.zeros(X.shape[1])
        beta[0] = np.log(max(y.mean(), 0.01))
    for _ in range(max_iter):
        eta = X @ beta
        mu = inverse_link(family, eta)
        if family is MarginalFamily.BERNOULLI_LOGIT:
            mu = np.clip(mu, 1e-12, 1 - 1e-12)
            w = mu * (1.0 - mu)
            z = eta + (y - mu) / w
        elif family is MarginalFamily.BERNOULLI_PROBIT:
            mu = np.clip(mu, 1e-12, 1 - 1e-12)
            dens = np.exp(-0.5 * eta ** 2) / np.sqrt(2 * np.pi)
            dens = np.maximum(dens, 1e-300)
            w = dens ** 2 / (mu * (1.0 - mu))
            z = eta + (y - mu) / dens
        else:
            w = mu
            z = eta + (y - mu) / mu
        XtW = X.T * w
        try:
            new = np.linalg.solve(XtW @ X, XtW @ z)
        except np.linalg.LinAlgError:
            raise NumericalError("covariate matrix is singular in the GLM start") from None
        if not np.all(np.isfinite(new)):
            raise NumericalError("GLM start diverged (separated data?)")
        step = new - beta
        beta = new
        if np.max(np.abs(step)) < tol:
            break
    return beta


def _stacked(data: Dataset):
    y = np.concatenate([c.y for c in data.clusters])
    X = np.concatenate([c.X for c in data.clusters])
    return y, X


def starting_values(data, spec: ModelSpec, engine: Optional[Engine] = None) -> ModelParams:
    """Independence-GLM beta, moment gamma and normal-scores rho."""
    data = Dataset.coerce(data)
    y, X = _stacked(data)
    beta = glm_fit(spec.family, y, X)
    mu = inverse_link(spec.family, X @ beta)
    gamma = None
    if spec.family.has_dispersion:
        excess = np.sum((y - mu) ** 2 - mu)
        denom = np.sum(mu ** 2) if spec.family is MarginalFamily.NB2 else np.sum(mu)
        gamma = float(np.clip(excess / denom, 0.05, 20.0))
    rho = 0.0
    if spec.structure is not StructureKind.UNSTRUCTURED and data.d_max > 1:
        rho = _normal_scores_rho(data, spec, beta, gamma)
        lo, hi = rho_interval(spec.structure, data.d_max, engine)
        pad = 0.05 * (hi - lo)
        rho = float(np.clip(rho, lo + pad, hi - pad))
    return ModelParams(beta, gamma, rho)


def _normal_scores_rho(data: Dataset, spec: ModelSpec, beta, gamma) -> float:
    num = den = 0.0
    lag_sum = 0.0
    for g in data.groups:
        if g.dim < 2:
            continue
        mu = inverse_link(spec.family, g.X @ beta)
        below, f = cdf_pair_mu(spec.family, g.y, mu, gamma)
        z = sc.ndtri(np.clip(below + 0.5 * f, 1e-12, 1 - 1e-12))
        if spec.structure is StructureKind.EXCHANGEABLE:
            s = z.sum(axis=1)
            num += float(np.sum(s ** 2 - np.sum(z ** 2, axis=1)))
            den += float(np.sum(z ** 2)) * (g.dim - 1)
        else:
            num += float(np.sum(z[:, 1:] * z[:, :-1]))
            den += float(np.sum(0.5 * (z[:, 1:] ** 2 + z[:, :-1] ** 2)))
            if g.times is not None:
                lag_sum += float(np.sum(np.diff(g.times, axis=1)))
    r = num / den if den > 0 else 0.0
    if spec.structure is StructureKind.MARKOV and lag_sum > 0:
        n_pairs = sum(g.y.shape[0] * (g.dim - 1) for g in data.groups if g.dim > 1)
        mean_lag = lag_sum / n_pairs
        r = max(r, 1e-3) ** (1.0 / mean_lag)
    return r


def _scalar_batch(tr: ParamTransform, loglik: Callable[[ModelParams], float]) -> BatchObjective:
    def fun(pts, ids):
        out = np.empty(len(pts))
        for r, x in enumerate(pts):
            try:
                out[r] = loglik(tr.from_raw(x))
            except (ValidationError, NumericalError, FloatingPointError):
                out[r] = -np.inf
        return out
    return fun


def _fit_scalar(data: Dataset, spec: ModelSpec, tr: ParamTransform, loglik, start, tol, max_iter, method,
                engine=None, seed=None, compute_se=True, **diag) -> FitResult:
    fun = _scalar_batch(tr, loglik)
    x0 = tr.to_raw(start)
    opt = maximize_batch(fun, x0[None, :], tol, max_iter)[0]
    covres = None
    if compute_se:
        H = hessian_batch(fun, opt.x[None, :])[0]
        covres = covariance_from_hessian(H, tr.jacobian_diag(opt.x))
    return _make_result(tr, opt, covres, method, engine, seed, **diag)


def fit_sl(data, spec: ModelSpec, engine=Engine.GENZ_BRETZ, cfg: RqmcConfig = SL_DEFAULT_CONFIG,
           start: Optional[ModelParams] = None, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
           compute_se: bool = True) -> FitResult:
    """Maximize the exact (1-D engine) or simulated (Genz-Bretz) likelihood."""
    data = Dataset.coerce(data)
    engine = Engine.from_name(engine) if isinstance(engine, str) else engine
    tr = ParamTransform.for_model(spec, data, engine)
    start = start if start is not None else starting_values(data, spec, engine)
    method = "ML" if engine is Engine.EXCHANGEABLE_1D else "SL"
    floors = []

    def loglik(theta):
        t = sl_terms(data, spec, theta, engine, cfg)
        floors.append(t.n_floored)
        return t.total
    seed = None if engine is Engine.EXCHANGEABLE_1D else cfg.seed
    res = _fit_scalar(data, spec, tr, loglik, start, tol, max_iter, method, engine.value, seed, compute_se)
    final = sl_terms(data, spec, res.params, engine, cfg)
    res.loglik = final.total
    res.diagnostics["floored_clusters"] = final.n_floored
    res.diagnostics["mc_error"] = final.aggregate_error
    return res


def fit_mf(data, spec: ModelSpec, jitters: JitterSet, start: Optional[ModelParams] = None, joint: bool = True,
           tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, compute_se: bool = True) -> FitResult:
    """Maximize the jitter-averaged simulated likelihood."""
    data = Dataset.coerce(data)
    tr = ParamTransform.for_model(spec, data)
    start = start if start is not None else starting_values(data, spec)
    return _fit_scalar(data, spec, tr, lambda th: mf_loglik(data, spec, th, jitters, joint), start, tol,
                       max_iter, "MF", None, jitters.seed, compute_se, m=jitters.m)


@dataclass
class HRFitResult(FitResult):
    runs: list = field(default_factory=list)


def hr_batch_objective(data: Dataset, spec: ModelSpec, tr: ParamTransform, jitters: JitterSet,
                       ks: Sequence[int]) -> BatchObjective:
    ks = np.asarray(ks)

    def fun(pts, ids):
        thetas = [tr.from_raw(x) for x in pts]
        try:
            return hr_loglik_batch(data, spec, thetas, jitters, ks[ids])
        except (ValidationError, NumericalError, np.linalg.LinAlgError):
            out = np.empty(len(pts))
            for r in range(len(pts)):
                try:
                    out[r] = hr_loglik_batch(data, spec, [thetas[r]], jitters, [ks[ids[r]]])[0]
                except (ValidationError, NumericalError, np.linalg.LinAlgError):
                    out[r] = -np.inf
            return out
    return fun


def fit_hr(data, spec: ModelSpec, jitters: JitterSet, start: Optional[ModelParams] = None,
           tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER, compute_se: bool = True) -> HRFitResult:
    """Fit the surrogate once per jitter set and average.

    Estimates and per-run delta-method variances are averaged over the
    converged runs; the reported SEs are square roots of the averaged
    variances.
    """
    data = Dataset.coerce(data)
    tr = ParamTransform.for_model(spec, data)
    start = start if start is not None else starting_values(data, spec)
    m = jitters.m
    fun = hr_batch_objective(data, spec, tr, jitters, np.arange(m))
    X0 = np.tile(tr.to_raw(start), (m, 1))
    opts = maximize_batch(fun, X0, tol, max_iter)
    runs = []
    covs = [None] * m
    if compute_se:
        Hs = hessian_batch(fun, np.stack([o.x for o in opts]))
        covs = [covariance_from_hessian(Hs[k], tr.jacobian_diag(opts[k].x)) for k in range(m)]
    for k, o in enumerate(opts):
        runs.append(_make_result(tr, o, covs[k], "HR", None, jitters.seed, jitter_index=k))
    ok = [r for r in runs if r.converged]
    if not ok:
        raise NumericalError("no HR run converged")
    est = np.mean([r.estimate_vector() for r in ok], axis=0)
    var_runs = [r.se_vector() ** 2 for r in ok if r.std_errors is not None]
    names = tr.names
    ses = dict(zip(names, np.sqrt(np.mean(var_runs, axis=0)).tolist())) if var_runs else None
    diag = {"runs": m, "converged_runs": len(ok), "excluded_runs": m - len(ok),
            "runs_without_se": len(ok) - len(var_runs)}
    res = HRFitResult(names, dict(zip(names, est.tolist())), ses, float(np.mean([r.loglik for r in ok])),
                      int(max(r.iterations for r in runs)), len(ok) == m, "HR", None, jitters.seed,
                      None, None, None, diag, runs)
    nat = np.array([res.estimates[k] for k in names])
    res.params = ModelParams(nat[:tr.n_beta], nat[tr.n_beta] if tr.has_gamma else None,
                             nat[-1] if tr.has_rho else 0.0)
    return res
