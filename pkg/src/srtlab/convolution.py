"""Exact convolution powers, renewal mass functions and truncated-step sums.

Two kernels are used throughout: direct summation (``np.convolve``; every term
is a nonnegative probability so the result keeps full relative accuracy) and
real-input FFT convolution (absolute accuracy ~1e-16 of the operands' norms,
needed once horizons reach 1e5..1e7).
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import fft as sfft

from .errors import PreconditionError, RangeError, ResourceError
from .laws import LatticeLaw, write_csv

NEG_CLAMP = 1e-12
MEMORY_BUDGET = 1 << 31  # bytes for a single ConvTable
CACHE_MAGIC = b"SRTLAB\x00\x01"


def fft_workers() -> int:
    """Thread count for scipy.fft, from ``SRTLAB_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("SRTLAB_THREADS", "1")))
    except ValueError:
        return 1


def clamp_negative(v: np.ndarray) -> bool:
    """Zero tiny negative round-off in place; return True if a value is <= -1e-12."""
    bad = bool((v <= -NEG_CLAMP).any())
    np.maximum(v, 0.0, out=v, where=v > -NEG_CLAMP)
    return bad


def fft_convolve(a: np.ndarray, b: np.ndarray, n_out: int | None = None) -> np.ndarray:
    """Linear convolution of two real sequences via rfft, truncated to ``n_out`` terms."""
    full = a.size + b.size - 1
    n_out = full if n_out is None else min(n_out, full)
    a = a[:n_out]
    b = b[:n_out]
    size = sfft.next_fast_len(a.size + b.size - 1, real=True)
    w = fft_workers()
    fa = sfft.rfft(a, size, workers=w)
    if a is b:
        fa *= fa
    else:
        fa *= sfft.rfft(b, size, workers=w)
    return sfft.irfft(fa, size, workers=w)[:n_out]


def fft_square(a: np.ndarray, n_out: int) -> np.ndarray:
    a = a[:n_out]
    size = sfft.next_fast_len(2 * a.size - 1, real=True)
    w = fft_workers()
    fa = sfft.rfft(a, size, workers=w)
    fa *= fa
    return sfft.irfft(fa, size, workers=w)[:n_out]


def convolve(a: np.ndarray, b: np.ndarray, n_out: int | None = None, method: str = "auto") -> np.ndarray:
    """Linear convolution, direct or FFT; ``auto`` picks direct for small work."""
    full = a.size + b.size - 1
    n_out = full if n_out is None else min(n_out, full)
    if method == "auto":
        method = "direct" if min(a.size, b.size, n_out) * n_out <= 4_000_000 else "fft"
    if method == "direct":
        return np.convolve(a[:n_out], b[:n_out])[:n_out]
    if method == "fft":
        out = fft_convolve(a, b, n_out)
        clamp_negative(out)
        return out
    raise ValueError(f"unknown convolution method {method!r}")


def power_array(q: np.ndarray, n: int, L: int, method: str = "fft") -> np.ndarray:
    """First ``L`` coefficients of ``q**n`` (n-fold self-convolution), ``n >= 0``."""
    base = np.zeros(L)
    m = min(L, q.size)
    base[:m] = q[:m]
    acc = np.zeros(L)
    acc[0] = 1.0
    first = True
    k = int(n)
    while k:
        if k & 1:
            acc = base.copy() if first else convolve(acc, base, L, method)
            first = False
            if method == "fft":
                clamp_negative(acc)
        k >>= 1
        if k:
            base = fft_square(base, L) if method == "fft" else np.convolve(base, base)[:L]
            if method == "fft":
                clamp_negative(base)
    return acc


def power_points(q: np.ndarray, n: int, xs, method: str = "fft") -> np.ndarray:
    """Values of the n-fold self-convolution of a nonnegative-support ``q`` at ``xs``.

    Binary powering with every intermediate truncated to ``0..max(xs)``; the
    last factor is applied as a dot product per point.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=np.int64))
    L = int(xs.max()) + 1
    base = np.zeros(L)
    m = min(L, q.size)
    base[:m] = q[:m]
    acc = None
    k = int(n)
    while True:
        if k & 1:
            if k == 1:
                break
            acc = base.copy() if acc is None else convolve(acc, base, L, method)
        k >>= 1
        base = fft_square(base, L) if method == "fft" else np.convolve(base, base)[:L]
        if method == "fft":
            clamp_negative(base)
    if acc is None:
        return base[xs].copy()
    return np.array([np.dot(acc[: x + 1], base[x::-1]) for x in xs.tolist()])


def _windowed_power_point(q: np.ndarray, lo: int, n: int, x: int) -> float:
    """(q^{*n})(x) for q supported on lo..lo+len(q)-1, direct summation with pruning."""
    hi = lo + q.size - 1
    cur, clo = q.copy(), lo
    for k in range(1, n):
        rest = n - k
        # partial sums that can still reach x after `rest` more steps
        wlo = max(clo, x - rest * hi)
        whi = min(clo + cur.size - 1, x - rest * lo)
        if whi < wlo:
            return 0.0
        cur = cur[wlo - clo: whi - clo + 1]
        clo = wlo
        if k == n - 1:
            # last step evaluated only at x
            zlo, zhi = max(lo, x - (clo + cur.size - 1)), min(hi, x - clo)
            if zhi < zlo:
                return 0.0
            z = np.arange(zlo, zhi + 1)
            return float(np.dot(q[z - lo], cur[x - z - clo]))
        cur = np.convolve(cur, q)
        clo += lo
    return float(q[x - lo]) if lo <= x <= hi else 0.0


# ---------------------------------------------------------------------------
# tables


@dataclass(frozen=True)
class ConvTable:
    """Rows ``P(S_n = x)`` for ``1 <= n <= nmax`` and ``x`` in ``x_lo..x_hi``."""

    law: LatticeLaw = field(repr=False)
    nmax: int
    x_lo: int
    x_hi: int
    rows: np.ndarray = field(repr=False)

    @property
    def xs(self) -> np.ndarray:
        return np.arange(self.x_lo, self.x_hi + 1)

    def row(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.nmax:
            raise RangeError(f"row n={n} outside 1..{self.nmax}", required=n)
        return self.rows[n - 1]

    def value(self, n, x):
        n = np.asarray(n)
        x = np.asarray(x)
        if np.any(n < 1) or np.any(n > self.nmax):
            raise RangeError(f"n outside 1..{self.nmax}", required=int(np.max(n)))
        if np.any(x < self.x_lo) or np.any(x > self.x_hi):
            raise RangeError(f"x outside {self.x_lo}..{self.x_hi}", required=int(np.max(np.abs(x))))
        return self.rows[n - 1, x - self.x_lo]

    def column_sum(self, n_from: int, n_to: int, x) -> np.ndarray:
        """Sum of ``P(S_n = x)`` over ``n_from <= n <= n_to`` (empty range gives 0)."""
        x = np.asarray(x)
        n_from = max(n_from, 1)
        if n_to < n_from:
            return np.zeros(x.shape)
        if n_to > self.nmax:
            raise RangeError(f"need rows up to {n_to}, table has {self.nmax}", required=n_to)
        return self.rows[n_from - 1: n_to, x - self.x_lo].sum(axis=0)

    def to_csv(self, path, n: int) -> None:
        write_csv(path, ("x", f"P(S_{n}=x)"), self.xs, self.row(n))


def conv_table(law: LatticeLaw, nmax: int, xmax: int, memory_budget: int = MEMORY_BUDGET) -> ConvTable:
    """Convolution powers of ``law`` on ``0..xmax`` (``-xmax..xmax`` when two-sided)."""
    nmax, xmax = int(nmax), int(xmax)
    if nmax < 1:
        raise PreconditionError("nmax must be >= 1")
    if not law.aperiodic:
        raise PreconditionError("law is not aperiodic")
    if law.xmax < xmax:
        raise RangeError(f"law tabulated to {law.xmax}, table needs {xmax}", required=xmax)
    if law.nonnegative:
        width = xmax + 1
        if nmax * width * 8 > memory_budget:
            raise ResourceError(
                f"table of {nmax}x{width} floats exceeds budget; slice the n range or lower xmax")
        p = law.pmf[:width]
        rows = np.empty((nmax, width))
        rows[0] = p
        direct = width * min(width, np.count_nonzero(p)) <= 4_000_000
        if not direct:
            size = sfft.next_fast_len(2 * width - 1, real=True)
            w = fft_workers()
            fp = sfft.rfft(p, size, workers=w)
        for n in range(1, nmax):
            if direct:
                rows[n] = np.convolve(rows[n - 1], p)[:width]
            else:
                r = sfft.irfft(sfft.rfft(rows[n - 1], size, workers=w) * fp, size, workers=w)[:width]
                clamp_negative(r)
                rows[n] = r
        return ConvTable(law, nmax, 0, xmax, rows)
    # two-sided: propagate the full range so that no path is lost, then slice
    span = law.xmax - law.xmin + 1
    if nmax * (nmax * span) * 8 > memory_budget:
        raise ResourceError("two-sided table too large; reduce nmax or the law's xmax")
    width = 2 * xmax + 1
    rows = np.zeros((nmax, width))
    cur, clo = law.pmf.copy(), law.xmin
    for n in range(nmax):
        if n:
            cur = convolve(cur, law.pmf)
            clo += law.xmin
        lo, hi = max(clo, -xmax), min(clo + cur.size - 1, xmax)
        if lo <= hi:
            rows[n, lo + xmax: hi + xmax + 1] = cur[lo - clo: hi - clo + 1]
    return ConvTable(law, nmax, -xmax, xmax, rows)


# ---------------------------------------------------------------------------
# renewal mass function


@dataclass(frozen=True)
class RenewalSequence:
    """``g(x) = sum_n P(S_n = x)`` on ``0..xmax``."""

    g: np.ndarray = field(repr=False)
    method: str
    residual: float
    fallback: bool = False

    @property
    def xmax(self) -> int:
        return self.g.size - 1

    def __call__(self, x):
        x = np.asarray(x)
        if np.any(x > self.xmax) or np.any(x < 0):
            raise RangeError(f"x beyond renewal horizon {self.xmax}", required=int(np.max(x)))
        return self.g[x]

    def to_csv(self, path) -> None:
        write_csv(path, ("x", "g"), np.arange(self.g.size), self.g)


def _renewal_pre(law: LatticeLaw, xmax: int) -> np.ndarray:
    if not law.nonnegative:
        raise PreconditionError("renewal mass functions need a nonnegative law")
    if law.pmf[0] > 0:
        raise PreconditionError("renewal recursion needs p(0) = 0")
    if law.xmax < xmax:
        raise RangeError(f"law tabulated to {law.xmax}, renewal needs {xmax}", required=xmax)
    return law.pmf[: xmax + 1]


def renewal_residual(p: np.ndarray, g: np.ndarray) -> float:
    """max |g(x) - 1{x=0} - sum_{w>=1} p(w) g(x-w)| over the horizon."""
    rhs = convolve(p, g, g.size)
    rhs[0] += 1.0
    return float(np.abs(g - rhs).max())


def renewal_naive(law: LatticeLaw, xmax: int) -> RenewalSequence:
    """Renewal recursion ``g(x) = sum_{w=1}^x p(w) g(x-w)``, quadratic cost."""
    p = _renewal_pre(law, int(xmax))
    g = np.zeros(p.size)
    g[0] = 1.0
    for x in range(1, p.size):
        g[x] = np.dot(p[1: x + 1], g[x - 1:: -1])
    resid = renewal_residual(p, g)
    return RenewalSequence(g, "naive-recursion", resid)


def _renewal_blocked(p: np.ndarray, block: int = 2048) -> np.ndarray:
    n = p.size
    g = np.zeros(n)
    g[0] = 1.0
    for s in range(1, n, block):
        e = min(s + block, n)
        # contribution of g[0:s] to x in [s, e), summed directly
        carry = np.convolve(g[:s], p[:e])[s:e]
        for x in range(s, e):
            g[x] = carry[x - s] + np.dot(p[1: x - s + 1], g[x - 1: s - 1: -1]) if x > s else carry[0]
    return g


def power_series_reciprocal(q: np.ndarray, n: int) -> np.ndarray:
    """First n coefficients of 1/q(s) by Newton iteration (requires q[0] != 0).

    Each round doubles the accurate prefix: ``h <- h - h (q h - 1)`` mod ``s^2m``.
    """
    q = np.asarray(q, dtype=float)
    if q[0] == 0:
        raise PreconditionError("series has no reciprocal (zero constant term)")
    h = np.array([1.0 / q[0]])
    nz = np.flatnonzero(q[:n])
    sparse = nz.size <= 64  # few atoms: shifted sums are exact and cheaper than FFT
    m = 1
    while m < n:
        m2 = min(2 * m, n)
        if sparse:
            e = np.zeros(m2)
            for k in nz[nz < m2]:
                e[k:k + h.size] += q[k] * h[: m2 - k]
        else:
            e = fft_convolve(q[:m2], h, m2) if m2 > 64 else np.convolve(q[:m2], h)[:m2]
        # q h - 1 vanishes below s^m; only the upper block feeds the correction
        upper = e[m:m2]
        unz = np.flatnonzero(upper)
        if unz.size <= 64:
            corr = np.zeros(m2 - m)
            for k in unz:
                corr[k:] += upper[k] * h[: m2 - m - k]
        else:
            corr = fft_convolve(h, upper, m2 - m) if m2 > 64 else np.convolve(h, upper)[: m2 - m]
        h = np.concatenate((h, -corr))
        m = m2
    return h


def renewal_fast(law: LatticeLaw, xmax: int, tol: float = 1e-8) -> RenewalSequence:
    """``g = 1/(1 - P(s))`` by Newton iteration with FFT products.

    If the renewal-equation residual exceeds ``tol`` (or a value is negative
    beyond round-off) the blocked direct recursion is used instead and the
    result is tagged ``fallback=True``.
    """
    p = _renewal_pre(law, int(xmax))
    q = -p.copy()
    q[0] = 1.0
    g = power_series_reciprocal(q, p.size)
    bad = clamp_negative(g)
    resid = renewal_residual(p, g)
    if bad or resid > tol:
        g = _renewal_blocked(p)
        return RenewalSequence(g, "naive-recursion", renewal_residual(p, g), fallback=True)
    return RenewalSequence(g, "series-reciprocal", resid)


# ---------------------------------------------------------------------------
# truncated events


def truncated_event_prob(law: LatticeLaw, n: int, x: int, gamma: float, method: str = "auto") -> float:
    """``P(S_n = x, max_r |X_r| <= gamma x)``: the n-fold convolution at x of the
    mass function restricted (not renormalised) to ``|z| <= gamma x``."""
    n, x = int(n), int(x)
    if n < 1 or x < 1 or gamma <= 0:
        raise PreconditionError("need n >= 1, x >= 1, gamma > 0")
    T = int(np.floor(gamma * x + 1e-9))
    q, lo = restricted_pmf(law, T, x)
    if q.size == 0:
        return 0.0
    return _power_point(q, lo, n, x, method)


def restricted_pmf(law: LatticeLaw, T: int, x: int | None = None):
    """Mass function on ``|z| <= T`` (and ``z <= x`` for nonnegative laws), with its offset."""
    lo = max(law.xmin, -T)
    hi = min(T, x) if (law.nonnegative and x is not None) else T
    if hi > law.xmax:
        raise RangeError(f"law tabulated to {law.xmax}, truncation needs {hi}", required=hi)
    if hi < lo:
        return np.zeros(0), lo
    return law.pmf[lo - law.xmin: hi - law.xmin + 1].copy(), lo


def _power_point(q: np.ndarray, lo: int, n: int, x: int, method: str) -> float:
    hi = lo + q.size - 1
    if not n * lo <= x <= n * hi:
        return 0.0
    if method == "auto":
        work = n * q.size * (x + 1) if lo >= 0 else (n * q.size) ** 2 // 2
        method = "direct" if work <= 300_000_000 else "fft"
    if method == "direct":
        return max(_windowed_power_point(q, lo, n, x), 0.0)
    if lo >= 0:
        padded = np.concatenate((np.zeros(lo), q)) if lo else q
        return float(max(power_points(padded, n, [x], "fft")[0], 0.0))
    # two-sided FFT: shift to nonnegative support, x -> x - n*lo
    return float(max(power_points(q, n, [x - n * lo], "fft")[0], 0.0))


# ---------------------------------------------------------------------------
# binary cache


def law_hash(law: LatticeLaw) -> str:
    payload = json.dumps({**law.spec.to_config(), "xmax": law.xmax}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def save_cache(path, values: np.ndarray, meta: dict) -> None:
    """Magic header, little-endian u64 metadata length, JSON metadata, then <f8 data."""
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(Path(path), "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())


def load_cache(path):
    data = Path(path).read_bytes()
    if data[:8] != CACHE_MAGIC:
        raise ValueError("not an srtlab cache file")
    (mlen,) = struct.unpack("<Q", data[8:16])
    meta = json.loads(data[16: 16 + mlen])
    values = np.frombuffer(data[16 + mlen:], dtype="<f8").astype(float)
    if "shape" in meta:
        values = values.reshape(meta["shape"])
    return values, meta


def save_renewal(path, law: LatticeLaw, seq: RenewalSequence) -> None:
    save_cache(path, seq.g, {"law_hash": law_hash(law), "xmax": seq.xmax, "method": seq.method,
                             "residual": seq.residual})


def load_renewal(path) -> tuple[RenewalSequence, dict]:
    g, meta = load_cache(path)
    return RenewalSequence(g, meta["method"], meta.get("residual", float("nan"))), meta


def save_table(path, table: ConvTable) -> None:
    save_cache(path, table.rows, {"law_hash": law_hash(table.law), "xmax": table.x_hi, "x_lo": table.x_lo,
                                  "method": "conv-table", "shape": list(table.rows.shape)})
