import numpy as np
import pytest

from srtlab.convolution import (conv_table, convolve, load_cache, load_renewal, power_array,
                                power_series_reciprocal, renewal_fast, renewal_naive, save_renewal,
                                save_table, truncated_event_prob)
from srtlab.errors import PreconditionError, RangeError, ResourceError
from srtlab.laws import TailSpec, build_law, custom_law

from conftest import all_family_specs, brute_power


def test_two_step_convolution_by_enumeration(two_step):
    t = conv_table(two_step, 2, 8)
    assert t.value(2, 2) == 0.25 and t.value(2, 3) == 0.5 and t.value(2, 4) == 0.25


def test_row_one_is_pmf(pure07):
    t = conv_table(pure07, 3, 2000)
    assert np.array_equal(t.row(1), pure07.pmf[:2001])


def test_triple_sum_alpha_07(pure07):
    p = pure07.pmf
    brute = sum(p[a] * p[b] * p[10 - a - b] for a in range(11) for b in range(11 - a))
    assert abs(conv_table(pure07, 3, 100).value(3, 10) - brute) <= 1e-14


def test_rows_consistent_with_recursion(pure07):
    t = conv_table(pure07, 6, 50000)  # FFT path
    rng = np.random.default_rng(0)
    xs = rng.integers(1, 50001, 100)
    for n in range(1, 6):
        nxt = convolve(t.row(n), pure07.pmf[:50001], 50001, "direct")
        assert np.max(np.abs(nxt[xs] - t.row(n + 1)[xs])) <= 1e-12
    assert np.all(t.rows.sum(axis=1) <= 1 + 1e-10)


def test_row_sums_one_when_nothing_truncated():
    t = conv_table(custom_law([0, 1 / 3, 1 / 3, 1 / 3], 20), 4, 20)
    assert np.allclose(t.rows.sum(axis=1), 1.0, atol=1e-10)


def test_two_sided_rows(sym15):
    t = conv_table(sym15, 3, 3000)
    p = sym15.pmf
    W = sym15.xmax
    ref = sum(p[a + W] * p[7 - a + W] for a in range(-W, W + 1) if -W <= 7 - a <= W)
    assert t.value(2, 7) == pytest.approx(ref, rel=1e-12)


def test_conv_table_budget(pure07):
    with pytest.raises(ResourceError):
        conv_table(pure07, 1000, 1 << 16, memory_budget=1 << 20)
    with pytest.raises(RangeError):
        conv_table(pure07, 2, 1 << 20)


def test_renewal_hand_values(two_step):
    g = renewal_naive(two_step, 8).g
    assert g[0] == 1 and g[1] == 0.5 and g[2] == 0.75 and g[3] == 0.625


def test_renewal_deterministic():
    deterministic = custom_law([0.0, 1.0], 100)
    assert np.all(renewal_naive(deterministic, 100).g == 1.0)
    assert np.all(renewal_fast(deterministic, 100).g == 1.0)


def test_renewal_geometric():
    r = 0.3
    x = np.arange(1, 400)
    law = custom_law(np.concatenate(([0.0], r * (1 - r) ** (x - 1))), 300)
    g = renewal_naive(law, 300).g
    assert np.max(np.abs(g[1:] - 0.3)) <= 1e-12


def test_renewal_fast_matches_naive_two_step(two_step):
    law = custom_law([0.0, 0.5, 0.5], 4096)
    d = np.abs(renewal_fast(law, 4096).g - renewal_naive(law, 4096).g).max()
    assert d <= 1e-12


@pytest.mark.parametrize("spec", all_family_specs(), ids=lambda s: s.family)
def test_renewal_fast_matches_naive(spec):
    law = build_law(spec, 4096)
    fast, naive = renewal_fast(law, 4096), renewal_naive(law, 4096)
    assert fast.method == "series-reciprocal" and not fast.fallback
    assert np.abs(fast.g - naive.g).max() <= 1e-10
    assert naive.residual <= 1e-12
    assert np.all(fast.g[1:] >= law.pmf[1:4097] - 1e-15)
    assert np.all((0 <= fast.g) & (fast.g <= 1 + 1e-12))


def test_renewal_fast_residual(pure07):
    seq = renewal_fast(pure07, 1 << 16)
    assert seq.residual <= 1e-10 and seq.g[0] == 1.0


def test_partial_sums_below_renewal(pure07):
    t = conv_table(pure07, 10, 5000)
    g = renewal_fast(pure07, 5000).g
    assert np.all(t.rows.sum(axis=0) <= g + 1e-10)


def test_renewal_preconditions(sym15):
    with pytest.raises(PreconditionError):
        renewal_naive(custom_law([0.5, 0.5]), 10)
    with pytest.raises(PreconditionError):
        renewal_fast(sym15, 10)
    with pytest.raises(RangeError):
        renewal_fast(custom_law([0, 0.5, 0.5]), 100)


def test_series_reciprocal_known():
    # 1/(1 - s) = sum s^k
    h = power_series_reciprocal(np.array([1.0, -1.0]), 300)
    assert np.allclose(h, 1.0, atol=1e-13)


def test_truncated_event_examples(uniform3, pure07):
    assert truncated_event_prob(uniform3, 2, 4, 0.75) == pytest.approx(1 / 3, abs=1e-15)
    assert truncated_event_prob(pure07, 1, 100, 0.75) == 0.0
    assert truncated_event_prob(pure07, 1, 100, 1.0) == pure07.pmf[100]
    assert truncated_event_prob(pure07, 1, 100, 2.5) == pure07.pmf[100]


def test_truncated_event_at_most_untruncated(pure07):
    t = conv_table(pure07, 4, 3000)
    for n in (2, 3, 4):
        for x in (50, 700, 3000):
            for gm in (0.2, 0.5, 0.9):
                assert truncated_event_prob(pure07, n, x, gm) <= t.value(n, x) + 1e-14


def test_truncated_direct_vs_fft(pure07):
    a = truncated_event_prob(pure07, 5, 4000, 0.5, method="direct")
    b = truncated_event_prob(pure07, 5, 4000, 0.5, method="fft")
    assert b == pytest.approx(a, rel=1e-9)


def test_power_array_against_recursion(pure07):
    p = pure07.pmf[:30]
    arr = power_array(p, 4, 30)
    for x in (4, 9, 17, 29):
        assert arr[x] == pytest.approx(brute_power(p, 4, x), rel=1e-12)


def test_cache_round_trip(tmp_path, pure07):
    seq = renewal_fast(pure07, 1000)
    path = tmp_path / "g.bin"
    save_renewal(path, pure07, seq)
    raw = path.read_bytes()
    assert raw[:8] == b"SRTLAB\x00\x01"
    back, meta = load_renewal(path)
    assert np.array_equal(back.g, seq.g) and meta["method"] == "series-reciprocal" and meta["xmax"] == 1000
    t = conv_table(pure07, 3, 100)
    save_table(tmp_path / "t.bin", t)
    rows, meta = load_cache(tmp_path / "t.bin")
    assert np.array_equal(rows, t.rows)
    with pytest.raises(ValueError):
        (tmp_path / "bad").write_bytes(b"nope" * 8)
        load_cache(tmp_path / "bad")
