"""The SRT ratio, the conditions (rz), (r1), (r3) and the split-sum reduction.

Double limits ("lim sup over x, then delta -> 0") are never evaluated; curves on
fixed grids are reported together with a trend statistic.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate

from .convolution import ConvTable, RenewalSequence, convolve, power_array
from .errors import PreconditionError, RangeError
from .laws import LatticeLaw, NormingScale, write_csv
from .stable import StableLaw, stable_density

N0_DEFAULT = 10
SLOPE_DECREASE = -0.05


@dataclass(frozen=True)
class Trend:
    """Log-log slope over the last two decades and decade-wise extremes.

    Grids spanning less than a factor 100 fall back to a fit over the whole
    grid and compare the last point against the first.
    """

    slope: float
    oscillation: float
    last_max: float
    first_min: float

    @property
    def decreasing(self) -> bool:
        return self.slope <= SLOPE_DECREASE and self.last_max < self.first_min

    def flat(self, tol: float = 0.05) -> bool:
        """No growth: slope at most ``tol``."""
        return bool(self.slope <= tol)

    def as_dict(self) -> dict:
        return {"slope": self.slope, "oscillation": self.oscillation, "last_decade_max": self.last_max,
                "first_decade_min": self.first_min, "decreasing": self.decreasing}


def loglog_slope(x, v) -> float:
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    ok = v > 0
    if ok.sum() < 2:
        return -math.inf if np.all(v == 0) else math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(v[ok]), 1)[0])


def trend_statistic(grid, values) -> Trend:
    x = np.asarray(grid, dtype=float)
    v = np.asarray(values, dtype=float)
    if x.size < 2:
        return Trend(math.nan, math.nan, float(v.max()), float(v.min()))
    if x[-1] / x[0] >= 100:
        fit = x >= x[-1] / 100
        last = v[x >= x[-1] / 10]
        first = v[x <= x[0] * 10]
    else:
        fit = np.ones(x.size, bool)
        last, first = v[-1:], v[:1]
    lo = last.min()
    osc = float(last.max() / lo) if lo > 0 else math.inf
    return Trend(loglog_slope(x[fit], v[fit]), osc, float(last.max()), float(first.min()))


@dataclass(frozen=True)
class RatioCurve:
    grid: np.ndarray
    values: np.ndarray = field(repr=False)
    label: str = "value"
    out_of_class: bool = False

    def __post_init__(self):
        g = np.asarray(self.grid)
        v = np.asarray(self.values, dtype=float)
        if g.ndim != 1 or g.size != v.size or g.size == 0:
            raise ValueError("grid and values must be matching non-empty 1-d arrays")
        if np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("curve values must be finite and >= 0")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    @cached_property
    def trend(self) -> Trend:
        return trend_statistic(self.grid, self.values)

    def at(self, x) -> float:
        i = np.searchsorted(self.grid, x)
        if i >= self.grid.size or self.grid[i] != x:
            raise KeyError(x)
        return float(self.values[i])

    def to_csv(self, path) -> None:
        write_csv(path, ("x", self.label), self.grid, self.values)

    def summary(self) -> dict:
        return {"label": self.label, "points": int(self.grid.size), "out_of_class": self.out_of_class,
                "trend": self.trend.as_dict()}

    def to_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True)


def _grid(xgrid) -> np.ndarray:
    g = np.unique(np.asarray(xgrid, dtype=np.int64))
    if g.size == 0 or g[0] < 1:
        raise PreconditionError("x grid must be non-empty with x >= 1")
    return g


def decade_grid(lo: float, hi: float, per_decade: int = 10) -> np.ndarray:
    """Integer grid, geometric between ``lo`` and ``hi`` (both included)."""
    k = max(2, int(round(per_decade * math.log10(hi / lo))) + 1)
    return np.unique(np.rint(np.geomspace(lo, hi, k)).astype(np.int64))


def _require_nonneg(law: LatticeLaw):
    if not law.nonnegative:
        raise PreconditionError("condition checks are stated for nonnegative laws")


def srt_ratio(law: LatticeLaw, renewal: RenewalSequence, xgrid) -> RatioCurve:
    """``x F(x) g(x)`` with ``F`` the tail ``P(X > x)``."""
    _require_nonneg(law)
    x = _grid(xgrid)
    tail = law.tail_at(x)
    if np.any(tail <= 0):
        raise PreconditionError("tail vanishes on the grid: law has no regularly varying tail")
    return RatioCurve(x, x * tail * renewal(x), "x*tail*g")


def check_rz(law: LatticeLaw, xgrid) -> RatioCurve:
    """``x F(x) p(x)``; a vanishing tail marks the law as outside the class."""
    _require_nonneg(law)
    x = _grid(xgrid)
    tail = law.tail_at(x)
    return RatioCurve(x, x * tail * law.p(x), "x*tail*p", out_of_class=bool(np.any(tail <= 0)))


def check_r1(law: LatticeLaw, conv: ConvTable, n0: int, xgrid) -> RatioCurve:
    """``x F(x) sum_{n <= n0} P(S_n = x)``."""
    _require_nonneg(law)
    x = _grid(xgrid)
    if n0 < 1:
        raise PreconditionError("n0 must be >= 1")
    tail = law.tail_at(x)
    s = conv.column_sum(1, n0, x)
    return RatioCurve(x, x * tail * s, f"x*tail*sum_n<={n0}", out_of_class=bool(np.any(tail <= 0)))


def _r3_window(law: LatticeLaw, delta: float, x: int):
    if not 0 < delta < 1:
        raise PreconditionError("delta must lie in (0, 1)")
    if x < 2:
        raise PreconditionError("x must be >= 2")
    m = int(math.floor(delta * x + 1e-9))
    if m < 1:
        return None
    if x > law.xmax:
        raise RangeError(f"law tabulated to {law.xmax}, sum needs {x}", required=int(x))
    w = np.arange(1, m + 1)
    return w, law.p(x - w)


def r3_sum(law: LatticeLaw, delta: float, x: int) -> float:
    """``x F(x) sum_{w=1}^{delta x} p(x-w) / (w F(w)**2)`` (empty sum gives 0)."""
    _require_nonneg(law)
    win = _r3_window(law, delta, int(x))
    if win is None:
        return 0.0
    w, pw = win
    tw = law.tail_at(w)
    terms = pw / (w * tw * tw)
    return float(x * law.tail_at(int(x)) * math.fsum(terms))


def r3_companion(law: LatticeLaw, scale: NormingScale, delta: float, x: int) -> float:
    """``(x / A(x)) sum_{w=1}^{delta x} p(x-w) A(w)**2 / w``, the A-weighted form of r3."""
    _require_nonneg(law)
    win = _r3_window(law, delta, int(x))
    if win is None:
        return 0.0
    w, pw = win
    terms = pw * scale.A(w) ** 2 / w
    return float(x / scale.A(float(x)) * math.fsum(terms))


def r3_asymptote(alpha: float, delta: float) -> float:
    """Pure-power limit of :func:`r3_sum`: ``alpha int_0^delta u**(2 alpha-1) (1-u)**(-alpha-1) du``."""
    val, _ = integrate.quad(lambda u: u ** (2 * alpha - 1) * (1 - u) ** (-alpha - 1), 0.0, delta,
                            epsabs=0, epsrel=1e-12, limit=200)
    return alpha * val


def r3_delta_curve(law: LatticeLaw, x: int, deltas=(0.2, 0.1, 0.05, 0.02)) -> RatioCurve:
    """r3 at fixed ``x`` against ``1/delta`` (grid must be integers), for trend checks in delta."""
    inv = np.array([round(1 / d) for d in deltas], dtype=np.int64)
    order = np.argsort(inv)
    vals = np.array([r3_sum(law, 1.0 / k, x) for k in inv[order]])
    return RatioCurve(inv[order], vals, f"r3(1/grid,{x})")


# ---------------------------------------------------------------------------
# split-sum reduction


@dataclass(frozen=True)
class SplitSum:
    x: int
    delta: float
    n0: int
    N: int  # floor(delta A(x))
    low: float  # (x/A) sum_{n <= n0}
    head: float  # (x/A) sum_{n0 < n <= N}
    tail: float  # (x/A) sum_{n > N}
    total: float  # (x/A) g(x)

    @property
    def defect(self) -> float:
        return abs(self.low + self.head + self.tail - self.total) / self.total

    def as_dict(self) -> dict:
        return {"x": self.x, "delta": self.delta, "n0": self.n0, "N": self.N, "low": self.low,
                "head": self.head, "tail": self.tail, "total": self.total, "defect": self.defect}


def split_sum(law: LatticeLaw, conv: ConvTable, renewal: RenewalSequence, delta: float, x: int,
              scale: NormingScale, n0: int = N0_DEFAULT) -> SplitSum:
    """Split ``(x/A(x)) g(x)`` at ``n0`` and ``N = floor(delta A(x))``.

    ``low`` and ``head`` come from the convolution table; ``tail`` is the
    coefficient of ``s**x`` in ``P(s)**(N+1) / (1 - P(s))``, computed
    independently from the renewal sequence, so the partition check is not
    circular.
    """
    _require_nonneg(law)
    x = int(x)
    if not 0 < delta < 1:
        raise PreconditionError("delta must lie in (0, 1)")
    Ax = float(scale.A(float(x)))
    N = int(math.floor(delta * Ax))
    if max(N, n0) > conv.nmax:
        raise RangeError(f"convolution table needs rows up to {max(N, n0)}", required=max(N, n0))
    if x > renewal.xmax:
        raise RangeError(f"renewal horizon {renewal.xmax} below x={x}", required=x)
    k = x / Ax
    low = k * float(conv.column_sum(1, n0, x))
    head = k * float(conv.column_sum(n0 + 1, N, x))
    pN = power_array(law.pmf[: x + 1], N + 1, x + 1)
    tail = k * float(np.dot(pN[: x + 1], renewal.g[x::-1]))
    return SplitSum(x, delta, n0, N, low, head, tail, k * float(renewal.g[x]))


def split_tail_limit(stable: StableLaw, delta: float) -> float:
    """``alpha int_0^{delta**(-1/alpha)} y**(-alpha) f(y) dy``, the large-x value of the tail part."""
    a = stable.alpha
    top = delta ** (-1.0 / a)

    def h(t):
        y = math.exp(t)
        return y ** (1 - a) * stable_density(stable, y)

    lo = math.log(stable.scale) - 8.0
    pts = np.linspace(lo, math.log(top), 6)
    return a * sum(integrate.quad(h, u, v, epsabs=1e-12, epsrel=1e-9, limit=200)[0]
                   for u, v in zip(pts[:-1], pts[1:]))


def spike_points(law: LatticeLaw, k_min: int | None = None) -> np.ndarray:
    """Spike locations ``2**k`` of a spike-perturbed law inside its tabulated range."""
    if law.spec.family != "spike-perturbed":
        raise PreconditionError("law has no spikes")
    k0 = law.spec.spike_k0 if k_min is None else max(k_min, law.spec.spike_k0)
    ks = np.arange(k0, int(math.log2(law.xmax)) + 1)
    return 2 ** ks


def head_delta_trend(law, conv, renewal, x, scale, deltas=(0.2, 0.1, 0.05, 0.02), n0=N0_DEFAULT) -> RatioCurve:
    """``(x/A(x)) sum_{n <= delta A(x)} P(S_n = x)`` (``low + head``) against ``1/delta``.

    This is the small-n part that must vanish for the renewal theorem; along the
    spikes of the counterexample family the ``n = 1`` term keeps it bounded below.
    """
    inv = sorted(round(1 / d) for d in deltas)
    parts = [split_sum(law, conv, renewal, 1.0 / k, x, scale, n0) for k in inv]
    vals = [s.low + s.head for s in parts]
    return RatioCurve(np.array(inv), np.array(vals), f"head(1/grid,{x})")


def midpoints(points) -> np.ndarray:
    p = np.asarray(points, dtype=np.int64)
    return (p[:-1] + p[1:]) // 2
