import math

import numpy as np
import pytest
from scipy import integrate

from srtlab.errors import DomainError
from srtlab.stable import (StableLaw, limit_constant_green, limit_constant_srt, moment_closed_form,
                           moment_density, moment_mellin, sample_positive_stable, stable_density)


def levy_half(y):
    """One-sided 1/2-stable density with Laplace exponent sqrt(pi lam) (c_L = Gamma(1/2))."""
    c = math.sqrt(math.pi)
    return c / (2 * math.sqrt(math.pi)) * y ** -1.5 * math.exp(-c * c / (4 * y))


@pytest.mark.parametrize("y", [0.5, 1.0, 2.0, 0.05, 40.0])
def test_half_stable_closed_form(y):
    assert stable_density(StableLaw(0.5), y) == pytest.approx(levy_half(y), rel=1e-8)


def test_support_and_normalisation():
    for a in (0.3, 0.5, 0.7, 0.9):
        law = StableLaw(a)
        assert stable_density(law, 0.0) == 0.0 and stable_density(law, -1.0) == 0.0
        total = integrate.quad(lambda t: math.exp(t) * stable_density(law, math.exp(t)), -12, 60, limit=400)[0]
        assert total == pytest.approx(1.0, abs=1e-6)


def test_laplace_transform_by_quadrature():
    law = StableLaw(0.7)
    val = integrate.quad(lambda t: math.exp(t - math.exp(t)) * stable_density(law, math.exp(t)), -12, 6,
                         limit=400)[0]
    assert val == pytest.approx(math.exp(-law.c_L), rel=1e-7)


def test_power_tail_ratio_settles():
    law = StableLaw(0.6)
    y = np.geomspace(10, 1e3, 8)
    r = y ** 1.6 * np.asarray(stable_density(law, y))
    limit = 0.6 * law.c_L / math.gamma(1 - 0.6)  # tail P(Y > y) ~ c_L y^-alpha / Gamma(1-alpha)
    assert np.all(np.diff(np.abs(r - limit)) < 0)
    assert r[-1] == pytest.approx(limit, rel=2e-2)


def test_symmetric_density():
    law = StableLaw(1.5, rho=0.5)
    y = np.array([0.3, 1.0, 4.0])
    assert np.allclose(stable_density(law, y), stable_density(law, -y), rtol=1e-10)
    assert np.all(np.asarray(stable_density(law, y)) > 0)


def test_sampler():
    law = StableLaw(0.7)
    a = sample_positive_stable(law, 10 ** 6, 7)
    b = sample_positive_stable(law, 10 ** 6, 7)
    assert np.array_equal(a, b) and np.all(a > 0)
    lap = np.exp(-a)
    se = lap.std(ddof=1) / 1e3
    assert abs(lap.mean() - math.exp(-law.c_L)) <= 3 * se
    v = 0.7 * a ** -0.7
    assert abs(v.mean() - limit_constant_srt(law)) <= 3 * v.std(ddof=1) / 1e3


def test_srt_constant_half():
    assert limit_constant_srt(StableLaw(0.5)) == pytest.approx(1 / math.pi, rel=1e-9)


@pytest.mark.parametrize("a", [0.2, 0.4, 0.7, 0.9])
def test_srt_constant_routes(a):
    c = limit_constant_srt(StableLaw(a), detail=True)
    assert c.discrepancy <= 1e-6
    assert c.value == pytest.approx(math.sin(math.pi * a) / math.pi, rel=1e-8)


def test_green_constant():
    law = StableLaw(0.7)
    assert limit_constant_green(law, 0.0) == limit_constant_srt(law)
    c = limit_constant_green(law, 1.0, detail=True)
    assert c.discrepancy <= 1e-6
    # alpha Gamma(1 + s/alpha) / Gamma(1 + s) c_L^(-s/alpha) with s = 1.4
    ref = 0.7 * math.gamma(3.0) / math.gamma(2.4) * math.gamma(0.3) ** -2
    assert c.value == pytest.approx(ref, rel=1e-9)
    with pytest.raises(DomainError):
        limit_constant_green(law, -2.0)


@pytest.mark.parametrize("s", [-0.3, 0.2, 1.0, 2.5])
def test_moment_routes(s):
    law = StableLaw(0.6)
    ref = moment_closed_form(law, s)
    assert moment_mellin(law, s) == pytest.approx(ref, rel=1e-7)
    assert moment_density(law, s) == pytest.approx(ref, rel=1e-7)


def test_invalid_laws():
    with pytest.raises(DomainError):
        StableLaw(1.2)
    with pytest.raises(DomainError):
        StableLaw(0.7, rho=0.5)
    with pytest.raises(DomainError):
        moment_mellin(StableLaw(0.5), -0.6)
