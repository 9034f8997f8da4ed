import numpy as np
import pytest
from scipy import stats

from copreg.correlation import StructureKind
from copreg.datagen import CovariateScheme, SimDesign, simulate
from copreg.errors import ValidationError
from copreg.likelihood import ModelParams
from copreg.marginals import MarginalFamily


def _design(**kw):
    base = dict(n=2000, d=3, family=MarginalFamily.BERNOULLI_LOGIT, structure=StructureKind.EXCHANGEABLE,
                theta=ModelParams([-0.5, 0.5], rho=0.5), seed=1)
    base.update(kw)
    return SimDesign(**base)


def test_replications_are_reproducible_and_distinct():
    d = _design(n=50)
    a, b, c = simulate(d, 0), simulate(d, 0), simulate(d, 1)
    assert all(np.array_equal(x.y, y.y) and np.array_equal(x.X, y.X) for x, y in zip(a, b))
    assert any(not np.array_equal(x.y, y.y) for x, y in zip(a, c))


def test_uniform_covariates_vary_within_cluster():
    data = simulate(_design(n=20))
    xs = np.stack([c.X[:, 1] for c in data])
    assert np.all(np.abs(xs) <= 1) and np.all(np.ptp(xs, axis=1) > 0)
    np.testing.assert_array_equal(np.stack([c.X[:, 0] for c in data]), 1.0)


def test_marginal_frequencies():
    data = simulate(_design(scheme=CovariateScheme.BINARY_CLUSTER, n=20000))
    y = np.stack([c.y for c in data])
    x = np.array([c.X[0, 1] for c in data])
    for v in (0.0, 1.0):
        p = 1 / (1 + np.exp(-(-0.5 + 0.5 * v)))
        assert y[x == v].mean() == pytest.approx(p, abs=0.01)


def test_latent_dependence_nb2():
    th = ModelParams([0.3, 0.0], gamma=0.5, rho=0.7)
    data = simulate(_design(family=MarginalFamily.NB2, theta=th, n=20000, d=2))
    y = np.stack([c.y for c in data])
    mu = np.exp(0.3)
    ref = stats.nbinom(2.0, 1 / (1 + 0.5 * mu))
    assert y.mean() == pytest.approx(ref.mean(), rel=0.03)
    assert y.var() == pytest.approx(ref.var(), rel=0.06)
    assert np.corrcoef(y.T)[0, 1] > 0.4


def test_treatment_time_scheme():
    th = ModelParams([-0.587, -0.006, -0.208, -0.048], rho=0.952)
    d = _design(n=30, d=7, structure=StructureKind.MARKOV, theta=th, scheme=CovariateScheme.TREATMENT_TIME)
    data = simulate(d)
    assert data.covariate_names == ["intercept", "trt", "month", "trt_month"]
    c = data.clusters[0]
    np.testing.assert_array_equal(c.times, [0, 1, 2, 3, 6, 9, 12])
    np.testing.assert_array_equal(c.X[:, 3], c.X[:, 1] * c.X[:, 2])


def test_design_validation():
    with pytest.raises(ValidationError):
        _design(theta=ModelParams([0.1, 0.2, 0.3], rho=0.5))
    with pytest.raises(ValidationError):
        _design(family=MarginalFamily.NB2)
    with pytest.raises(ValidationError):
        _design(theta=ModelParams([0.1, 0.2], rho=-0.6))
