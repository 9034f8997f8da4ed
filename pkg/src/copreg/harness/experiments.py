"""The four table-producing programs behind the CLI subcommands."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .._rng import derive_seed
from ..asymptotics import (LIKELIHOOD_MASS, LIKELIHOOD_MIN_WEIGHT, BinaryDesign, enumerate_cases,
                           limiting_hrmle, limiting_mle, limiting_msle)
from ..correlation import StructureKind
from ..datagen import CovariateScheme, SimDesign, simulate
from ..errors import ConfigError, CopregError, DataError, DomainError, UnsupportedStructureError, ValidationError
from ..estimate import FitResult, fit_hr, fit_mf, fit_sl
from ..likelihood import SL_DEFAULT_CONFIG, Dataset, JitterSet, ModelParams, ModelSpec
from ..marginals import MarginalFamily
from ..rectprob import (Engine, Rectangle, RqmcConfig, exchangeable_1d, genz_bretz, mf_importance, naive_mc)
from ..correlation import exchangeable, structure_cholesky
from .config import RunConfig
from .csvio import read_longitudinal_csv
from .report import Table

log = logging.getLogger(__name__)

DEFAULT_SEED = 20130101


def _family(cfg: RunConfig, default=None) -> MarginalFamily:
    try:
        return MarginalFamily.from_name(cfg.get_str("family", default) if default else cfg.get_str("family"))
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def _structure(cfg: RunConfig, default=None) -> StructureKind:
    try:
        return StructureKind.from_name(cfg.get_str("structure", default) if default else cfg.get_str("structure"))
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def _rqmc(cfg: RunConfig, prefix: str = "", base: RqmcConfig = SL_DEFAULT_CONFIG) -> RqmcConfig:
    try:
        return RqmcConfig(lattice_size=cfg.get_int(prefix + "lattice_size", base.lattice_size),
                          randomizations=cfg.get_int(prefix + "randomizations", base.randomizations),
                          seed=cfg.get_int("seed", DEFAULT_SEED),
                          antithetic=cfg.get_bool(prefix + "antithetic", base.antithetic),
                          reorder=cfg.get_bool(prefix + "reorder", base.reorder))
    except (ValidationError, DomainError) as exc:
        raise ConfigError(str(exc)) from None


def _meta(cfg: RunConfig, **extra) -> dict:
    meta = {"command": cfg.command, "config_hash": cfg.digest(), "seed": cfg.values.get("seed", DEFAULT_SEED)}
    meta.update(extra)
    return meta


# ---------------------------------------------------------------------------
# rectangle probabilities

def cmd_rectprob(cfg: RunConfig) -> Table:
    """Equicorrelated cube probabilities P(-a <= Z_j <= a) by each engine."""
    dims = cfg.get_list("dims", "5,10,20", int)
    limits = cfg.get_list("limits", "1,2,4", float)
    rhos = cfg.get_list("rhos", "0.3,0.6,0.8", float)
    try:
        engines = [Engine.from_name(e) for e in cfg.get_list("engines", "genz_bretz,exchangeable_1d,mf,naive")]
    except (ValidationError, DomainError) as exc:
        raise ConfigError(str(exc)) from None
    mf_ms = cfg.get_list("mf_m", "1000,10000", int)
    naive_m = cfg.get_int("naive_m", 10000)
    seed = cfg.get_int("seed", DEFAULT_SEED)
    rq = _rqmc(cfg, base=RqmcConfig())
    table = Table(["engine", "d", "a", "rho", "m", "estimate", "sd", "exact"], title="Rectangle probabilities",
                  meta=_meta(cfg))
    for d in dims:
        for a in limits:
            for rho in rhos:
                try:
                    struct = exchangeable(rho, d)
                except ValidationError as exc:
                    raise ConfigError(str(exc)) from None
                rect = Rectangle.cube(a, d)
                exact = exchangeable_1d(rect, rho).value if rho >= 0 else float("nan")
                cell = derive_seed(seed, d, int(round(a * 1000)), int(round(rho * 1000)))
                for eng in engines:
                    if eng is Engine.EXCHANGEABLE_1D:
                        table.add(eng.value, d, a, rho, 0, exact, 0.0, exact)
                    elif eng is Engine.GENZ_BRETZ:
                        est = genz_bretz(rect, structure_cholesky(struct), rq)
                        table.add(eng.value, d, a, rho, est.evaluations, est.value, est.std_error, exact)
                    elif eng is Engine.NAIVE:
                        est = naive_mc(rect, structure_cholesky(struct), naive_m, cell)
                        table.add(eng.value, d, a, rho, naive_m, est.value, est.std_error, exact)
                    else:
                        R = (1.0 - rho) * np.eye(d) + rho
                        for m in mf_ms:
                            est = mf_importance(rect, R, m, derive_seed(cell, m))
                            table.add(eng.value, d, a, rho, m, est.value, est.std_error, exact)
    return table


# ---------------------------------------------------------------------------
# asymptotic limits

def cmd_asymlimit(cfg: RunConfig) -> Table:
    """Limiting HR / exact / simulated-likelihood estimators and SEs on a (d, rho) grid."""
    family = _family(cfg, "bernoulli-logit")
    dims = cfg.get_list("dims", "2,5,10" if family.is_binary else "2,3", int)
    rhos = cfg.get_list("rhos", "0.3,0.6,0.8", float)
    beta = cfg.get_list("beta", "-0.5,0.5", float)
    gamma = cfg.get_float("gamma", 0.5) if family.has_dispersion else None
    truncation = cfg.get_int("truncation", 10) if not family.is_binary else None
    se_n = cfg.get_int("se_n", 200)
    methods = [m.upper() for m in cfg.get_list("methods", "HR,ML")]
    bad = set(methods) - {"HR", "ML", "SL"}
    if bad:
        raise ConfigError(f"unknown asymlimit method(s) {sorted(bad)}")
    try:
        design = BinaryDesign(tuple(cfg.get_list("design_values", "0,1", float)),
                              tuple(cfg.get_list("design_probs", "0.5,0.5", float)))
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    if len(beta) != 2:
        raise ConfigError("beta must have two entries (intercept, covariate)")
    sl_cfg = _rqmc(cfg, "sl_", RqmcConfig(lattice_size=1021, randomizations=10, reorder=False))
    pnames = ["beta0", "beta1"] + (["gamma"] if gamma is not None else []) + ["rho"]
    cols = ["d", "rho_true"] + [f"{p}_true" for p in pnames if p != "rho"]
    for m in methods:
        cols += [f"{p}_{m}" for p in pnames] + [f"se_{p}_{m}" for p in pnames]
    table = Table(cols, title=f"Limiting estimators ({family.value})",
                  meta=_meta(cfg, se_n=se_n, truncation=truncation))
    for d in dims:
        for rho in rhos:
            theta = ModelParams(beta, gamma, rho)
            row = [d, rho] + beta + ([gamma] if gamma is not None else [])
            try:
                hr_cases = enumerate_cases(family, theta, d, design, truncation=truncation)
                lik_cases = hr_cases if family.is_binary else enumerate_cases(
                    family, theta, d, design, mass=LIKELIHOOD_MASS, min_weight=LIKELIHOOD_MIN_WEIGHT)
            except (DomainError, UnsupportedStructureError, ValidationError) as exc:
                raise ConfigError(str(exc)) from None
            for m in methods:
                if m == "HR":
                    res = limiting_hrmle(hr_cases, n_ref=se_n)
                elif m == "ML":
                    res = limiting_mle(lik_cases, n_ref=se_n)
                else:
                    res = limiting_msle(lik_cases, sl_cfg, n_ref=se_n)
                row += [res.estimates[p] for p in pnames]
                row += [res.std_errors[p] if res.std_errors else float("nan") for p in pnames]
            table.add(*row)
    return table


# ---------------------------------------------------------------------------
# simulation studies

@dataclass
class _SimSetup:
    design: SimDesign
    spec: ModelSpec
    methods: list
    hr_m: int
    mf_m: int
    sl_cfg: RqmcConfig
    seed: int


def _sim_setup(cfg: RunConfig) -> _SimSetup:
    family = _family(cfg, "bernoulli-logit")
    structure = _structure(cfg, "exch")
    n = cfg.get_int("n", 100)
    d = cfg.get_int("d", 2)
    beta = cfg.get_list("beta", "-0.5,0.5", float)
    gamma = cfg.get_float("gamma", None) if family.has_dispersion else None
    rho = cfg.get_float("rho", 0.5)
    seed = cfg.get_int("seed", DEFAULT_SEED)
    try:
        scheme = CovariateScheme.from_name(cfg.get_str("covariates", "uniform"))
        times = cfg.get_list("times", None, float) if "times" in cfg.values else None
        design = SimDesign(n, d, family, structure, ModelParams(beta, gamma, rho), scheme, seed,
                           tuple(times) if times else None)
        spec = ModelSpec(family, structure)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    methods = [m.upper() for m in cfg.get_list("methods", "ML,HR")]
    bad = set(methods) - {"ML", "SL", "HR", "MF"}
    if bad:
        raise ConfigError(f"unknown simstudy method(s) {sorted(bad)}")
    if "ML" in methods and structure is not StructureKind.EXCHANGEABLE:
        raise ConfigError("ML (exact 1-D engine) needs exchangeable structure; use SL")
    return _SimSetup(design, spec, methods, cfg.get_int("hr_m", 100), cfg.get_int("mf_m", 1000),
                     _rqmc(cfg, "sl_"), seed)


def _fit_one(method: str, data: Dataset, s: _SimSetup, jitter_seed: int, m: Optional[int] = None) -> FitResult:
    if method == "ML":
        return fit_sl(data, s.spec, Engine.EXCHANGEABLE_1D)
    if method == "SL":
        return fit_sl(data, s.spec, Engine.GENZ_BRETZ, s.sl_cfg)
    mm = m if m is not None else (s.hr_m if method == "HR" else s.mf_m)
    jit = JitterSet.draw(mm, len(data), data.d_max, jitter_seed)
    if method == "HR":
        return fit_hr(data, s.spec, jit)
    return fit_mf(data, s.spec, jit)


def _true_vector(design: SimDesign, names: list) -> np.ndarray:
    th = design.theta
    vals = list(th.beta) + ([th.gamma] if th.gamma is not None else []) + [th.rho]
    return np.array(vals[:len(names)], dtype=float)


def cmd_simstudy(cfg: RunConfig) -> Table:
    mode = cfg.get_str("mode", "bias").lower()
    if mode == "bias":
        return _simstudy_bias(cfg)
    if mode == "jitter":
        return _simstudy_jitter(cfg)
    raise ConfigError(f"simstudy mode must be 'bias' or 'jitter', got {mode!r}")


def _replicate(s: _SimSetup, r: int) -> list:
    """Fit every method on replication ``r``; one (names, estimate, variance) or error string per method."""
    data = simulate(s.design, r)
    out = []
    for mi, m in enumerate(s.methods):
        try:
            fit = _fit_one(m, data, s, derive_seed(s.seed, r, 1 + mi))
        except (CopregError, np.linalg.LinAlgError, FloatingPointError) as exc:
            out.append(f"failed: {exc}")
            continue
        if not fit.converged:
            out.append(f"did not converge ({fit.diagnostics.get('message', '')})")
            continue
        se = fit.se_vector()
        out.append((fit.names, fit.estimate_vector(),
                    se ** 2 if se is not None else np.full(len(fit.names), np.nan)))
    return out


def _simstudy_bias(cfg: RunConfig) -> Table:
    s = _sim_setup(cfg)
    reps = cfg.get_int("replications", 500)
    workers = cfg.get_int("workers", 1)
    if reps < 2:
        raise ConfigError("replications must be at least 2")
    if workers < 1:
        raise ConfigError("workers must be at least 1")
    n = s.design.n
    est = {m: [] for m in s.methods}
    var = {m: [] for m in s.methods}
    failed = {m: 0 for m in s.methods}
    names = None
    if workers == 1:
        results = (_replicate(s, r) for r in range(reps))
    else:
        pool = ProcessPoolExecutor(workers)
        results = pool.map(_replicate, [s] * reps, range(reps))
    # results arrive in replication order either way, so the table is deterministic
    for r, res in enumerate(results):
        for m, item in zip(s.methods, res):
            if isinstance(item, str):
                failed[m] += 1
                log.warning("replication %d, method %s %s", r, m, item)
                continue
            names = item[0]
            est[m].append(item[1])
            var[m].append(item[2])
    if workers > 1:
        pool.shutdown()
    if names is None:
        raise CopregError("every replication failed")
    truth = _true_vector(s.design, names)
    table = Table(["method", "param", "true", "mean", "n_bias", "n_var", "n_mse", "n_vbar", "ok", "failed"],
                  title=f"Simulation study: n={n}, R={reps}",
                  meta=_meta(cfg, replications=reps, n=n, hr_m=s.hr_m, mf_m=s.mf_m))
    for m in s.methods:
        E = np.array(est[m])
        V = np.array(var[m])
        ok = len(E)
        for j, p in enumerate(names):
            if ok == 0:
                table.add(m, p, truth[j], np.nan, np.nan, np.nan, np.nan, np.nan, 0, failed[m])
                continue
            e = E[:, j]
            bias = e.mean() - truth[j]
            v = e.var(ddof=1) if ok > 1 else np.nan
            mse = np.mean((e - truth[j]) ** 2)
            vbar = np.nanmean(V[:, j]) if np.any(np.isfinite(V[:, j])) else np.nan
            table.add(m, p, truth[j], e.mean(), n * bias, n * v, n * mse, n * vbar, ok, failed[m])
    return table


def _simstudy_jitter(cfg: RunConfig) -> Table:
    s = _sim_setup(cfg)
    sets = cfg.get_int("jitter_sets", 5)
    m_values = cfg.get_list("m_values", "10,100", int)
    replication = cfg.get_int("replication", 0)
    data = simulate(s.design, replication)
    jit_methods = [m for m in s.methods if m in ("HR", "MF")] or ["HR", "MF"]
    ref_method = "ML" if s.spec.structure is StructureKind.EXCHANGEABLE else "SL"
    ref = _fit_one(ref_method, data, s, 0)
    names = ref.names
    table = Table(["method", "m", "set"] + names, title="Estimates across jitter sets",
                  meta=_meta(cfg, replication=replication, n=s.design.n))
    table.add(ref_method, 0, "estimate", *ref.estimate_vector())
    se = ref.se_vector()
    table.add(ref_method, 0, "se", *(se if se is not None else [np.nan] * len(names)))
    for m in m_values:
        for meth in jit_methods:
            vals = []
            for k in range(1, sets + 1):
                fit = _fit_one(meth, data, s, derive_seed(s.seed, replication, 1000 + k, m), m=m)
                vals.append(fit.estimate_vector())
                table.add(meth, m, str(k), *vals[-1])
            V = np.array(vals)
            table.add(meth, m, "span", *(V.max(axis=0) - V.min(axis=0)))
    return table


# ---------------------------------------------------------------------------
# fitting a data file

def cmd_fit(cfg: RunConfig, data: Optional[Dataset] = None) -> Table:
    if data is None:
        data = read_longitudinal_csv(cfg.get_str("data"))
    family = _family(cfg, "bernoulli-logit")
    structure = _structure(cfg, "exch")
    if structure is StructureKind.UNSTRUCTURED:
        raise ConfigError("fit supports exch, ar1 and markov structures")
    if structure is StructureKind.MARKOV and not data.has_times:
        raise DataError("markov structure needs a 'time' column")
    engine_name = cfg.get_str("engine", "auto").lower()
    if engine_name == "auto":
        engine = Engine.EXCHANGEABLE_1D if structure is StructureKind.EXCHANGEABLE else Engine.GENZ_BRETZ
    else:
        try:
            engine = Engine.from_name(engine_name)
        except (ValidationError, DomainError) as exc:
            raise ConfigError(str(exc)) from None
    spec = ModelSpec(family, structure)
    n_par = data.n_covariates + int(family.has_dispersion) + int(data.d_max > 1)
    if len(data) < n_par + 1:
        raise DataError(f"{len(data)} cluster(s) cannot identify {n_par} parameters")
    if family.is_binary and any(np.any(c.y > 1) for c in data):
        raise DataError("binary family requires responses in {0, 1}")
    try:
        fit = fit_sl(data, spec, engine, _rqmc(cfg))
    except UnsupportedStructureError as exc:
        raise ConfigError(str(exc)) from None
    table = Table(["parameter", "estimate", "std_error"], title=f"{family.value} / {structure.value} fit",
                  meta=_meta(cfg, loglik=f"{fit.loglik:.6f}", engine=engine.value, clusters=len(data),
                             converged=fit.converged, mc_error=f"{fit.diagnostics.get('mc_error', 0.0):.3g}",
                             floored_clusters=fit.diagnostics.get("floored_clusters", 0)))
    ses = fit.std_errors or {}
    for name in fit.names:
        table.add(name, fit.estimates[name], ses.get(name, float("nan")))
    table.payload = fit
    return table
