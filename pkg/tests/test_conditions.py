import math

import numpy as np
import pytest

from srtlab.conditions import (RatioCurve, check_r1, check_rz, decade_grid, head_delta_trend, midpoints,
                               r3_asymptote, r3_companion, r3_delta_curve, r3_sum, spike_points, split_sum,
                               split_tail_limit, srt_ratio, trend_statistic)
from srtlab.convolution import conv_table, renewal_fast
from srtlab.errors import PreconditionError, RangeError
from srtlab.laws import TailSpec, build_law, build_norming, custom_law
from srtlab.stable import StableLaw


@pytest.fixture(scope="module")
def big04():
    return build_law(TailSpec(0.4), 10 ** 6)


@pytest.fixture(scope="module")
def spike():
    return build_law(TailSpec(0.3, family="spike-perturbed"), 1 << 20)


def test_trend_statistic_power_law():
    x = decade_grid(1e3, 1e6, 5)
    t = trend_statistic(x, x ** -0.5)
    assert t.slope == pytest.approx(-0.5, abs=1e-9) and t.decreasing
    assert not trend_statistic(x, np.ones(x.size)).decreasing
    short = trend_statistic([10, 20, 40], [3.0, 2.0, 1.0])
    assert short.last_max == 1.0 and short.first_min == 3.0 and short.decreasing


def test_ratio_curve_validation():
    with pytest.raises(ValueError):
        RatioCurve(np.array([1, 1]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        RatioCurve(np.array([1, 2]), np.array([1.0, -2.0]))
    with pytest.raises(ValueError):
        RatioCurve(np.array([1, 2]), np.array([1.0, np.nan]))


def test_srt_ratio_rejects_degenerate():
    law = custom_law([0.0, 1.0], 20)
    with pytest.raises(PreconditionError):
        srt_ratio(law, renewal_fast(law, 20), [5, 10])


def test_srt_ratio_horizon(pure07):
    seq = renewal_fast(pure07, 1000)
    with pytest.raises(RangeError):
        srt_ratio(pure07, seq, [10, 2000])


def test_srt_ratio_dominates_rz(pure07):
    x = decade_grid(10, 60000, 6)
    s = srt_ratio(pure07, renewal_fast(pure07, 60000), x)
    assert np.all(s.values >= check_rz(pure07, x).values)


def test_rz_slope_alpha_04(big04):
    c = check_rz(big04, decade_grid(1e3, 1e6, 6))
    assert c.trend.slope == pytest.approx(-0.8, abs=0.01)
    assert c.trend.decreasing
    x = 10 ** 5
    assert c.at(100000) == pytest.approx(0.4 * x ** -0.8, rel=1e-4)


def test_rz_out_of_class():
    law = custom_law([0.0, 0.2, 0.3, 0.5], 50)
    c = check_rz(law, [5, 10, 20])
    assert c.out_of_class and np.all(c.values == 0)


def test_r1_reductions(pure04):
    x = decade_grid(100, 60000, 5)
    t = conv_table(pure04, 5, 60000)
    assert np.array_equal(check_r1(pure04, t, 1, x).values, check_rz(pure04, x).values)
    r1 = check_r1(pure04, t, 5, x)
    assert r1.trend.slope == pytest.approx(check_rz(pure04, x).trend.slope, abs=0.05)


def test_r1_spikes(spike):
    sp = spike_points(spike)[-4:]
    t = conv_table(spike, 3, int(sp.max()))
    v = check_r1(spike, t, 3, sp).values
    assert v.min() > 1.0


def test_r3_empty_and_monotone(pure07):
    assert r3_sum(pure07, 0.1, 5) == 0.0
    vals = [r3_sum(pure07, d, 50000) for d in (0.02, 0.05, 0.1, 0.2, 0.5)]
    assert np.all(np.diff(vals) > 0)
    with pytest.raises(PreconditionError):
        r3_sum(pure07, 1.5, 100)


def test_r3_alpha_04(big04):
    v = r3_sum(big04, 0.1, 10 ** 6)
    assert abs(v - 0.1 ** 0.8 / 2) <= 0.3 * 0.1 ** 0.8 / 2
    # binomial series of alpha int_0^delta u^(2a-1) (1-u)^(-a-1) du
    a, d = 0.4, 0.1
    series = a * sum(math.gamma(a + 1 + k) / (math.gamma(a + 1) * math.factorial(k)) * d ** (2 * a + k) / (2 * a + k)
                     for k in range(60))
    assert r3_asymptote(a, d) == pytest.approx(series, rel=1e-10)
    assert v == pytest.approx(series, rel=1e-2)
    assert r3_delta_curve(big04, 10 ** 6).trend.decreasing


def test_r3_companion_ratio(big04):
    scale = build_norming(big04.spec)
    for d in (0.05, 0.2):
        assert r3_companion(big04, scale, d, 10 ** 6) / r3_sum(big04, d, 10 ** 6) == pytest.approx(1, rel=1e-9)
    spec = TailSpec(0.4, family="log-power", beta_l=1.0)
    law = build_law(spec, 10 ** 5)
    r = r3_companion(law, build_norming(spec), 0.1, 10 ** 5) / r3_sum(law, 0.1, 10 ** 5)
    assert r == pytest.approx(1, rel=1e-6)


def test_spike_srt_excess(spike):
    sp = spike_points(spike)[-5:]
    seq = renewal_fast(spike, int(sp.max()))
    at = srt_ratio(spike, seq, sp[1:]).values
    mid = srt_ratio(spike, seq, midpoints(sp)).values
    assert np.all(at / mid >= 2)
    assert check_rz(spike, sp).values.min() > 1.0


def test_split_sum_alpha_07():
    spec = TailSpec(0.7)
    law = build_law(spec, 10 ** 5)
    scale = build_norming(spec)
    N = int(0.1 * scale.A(1e5))
    s = split_sum(law, conv_table(law, N, 10 ** 5), renewal_fast(law, 10 ** 5), 0.1, 10 ** 5, scale)
    assert s.defect <= 1e-9
    limit = split_tail_limit(StableLaw(0.7), 0.1)
    assert abs(s.tail - limit) <= 0.1 * limit
    with pytest.raises(RangeError):
        split_sum(law, conv_table(law, 10, 1000), renewal_fast(law, 1000), 0.1, 1000, scale)


def test_spike_head_does_not_vanish(spike):
    x = int(spike_points(spike)[-3])
    scale = build_norming(spike.spec)
    N = int(0.2 * scale.A(float(x))) + 1
    conv = conv_table(spike, N, x)
    seq = renewal_fast(spike, x)
    heads = head_delta_trend(spike, conv, seq, x, scale, n0=1)
    assert not heads.trend.decreasing
    assert heads.values.min() > 1.5
    smooth = build_law(TailSpec(0.7), 10 ** 5)
    sc = build_norming(smooth.spec)
    N = int(0.2 * sc.A(1e5)) + 1
    h = head_delta_trend(smooth, conv_table(smooth, N, 10 ** 5), renewal_fast(smooth, 10 ** 5), 10 ** 5, sc, n0=1)
    assert h.trend.decreasing
