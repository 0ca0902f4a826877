"""Generalised Green's functions ``g_b(x) = sum_n b_n P(S_n = x)`` and their conditions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .conditions import RatioCurve, _grid, _r3_window, _require_nonneg
from .convolution import ConvTable, RenewalSequence, convolve, power_array
from .errors import DomainError, PreconditionError, RangeError
from .laws import LatticeLaw, NormingScale, build_norming, write_csv
from .stable import StableLaw, stable_density

REMAINDER_TOL = 1e-3


@dataclass(frozen=True)
class WeightSpec:
    """Weights ``b_n = n**beta (log(1+n))**beta_l``, or a user table ``b_1..b_m``.

    A table is continued past its end by ``b_m (n/m)**beta``.
    """

    beta: float
    beta_l: float = 0.0
    table: tuple = ()

    def __post_init__(self):
        if not self.beta > -2:
            raise DomainError("weight index beta must exceed -2")
        if self.table:
            t = np.asarray(self.table, dtype=float)
            if np.any(t < 0) or not np.all(np.isfinite(t)):
                raise DomainError("weight table must be finite and nonnegative")
            m = t.size
            if m >= 4:
                # envelope check: n^-beta b_n stays within a factor 10 on the upper half
                n = np.arange(1, m + 1, dtype=float)
                r = (t / n ** self.beta)[m // 2:]
                if r.min() <= 0 or r.max() / r.min() > 10:
                    raise DomainError("weight table is not regularly varying of the stated index")

    @property
    def exact_integer(self) -> bool:
        """Plain ``n**beta`` with integer ``beta >= 0`` (closed-form generating function)."""
        return not self.table and self.beta_l == 0 and self.beta >= 0 and float(self.beta).is_integer()

    def b(self, n):
        """Weights at (real) ``n >= 1``."""
        n = np.asarray(n, dtype=float)
        if self.table:
            t = np.asarray(self.table, dtype=float)
            m = t.size
            idx = np.clip(np.rint(n).astype(np.int64), 1, m)
            return np.where(n <= m, t[idx - 1], t[-1] * (n / m) ** self.beta)
        out = n ** self.beta
        if self.beta_l:
            out = out * np.log1p(n) ** self.beta_l
        return out

    @property
    def b0(self) -> float:
        return 1.0 if (self.beta == 0 and self.beta_l == 0 and not self.table) else 0.0

    def B(self, scale: NormingScale, x):
        """``B(x) = b(A(x))``."""
        return self.b(scale.A(np.asarray(x, dtype=float)))


def eulerian_row(m: int) -> list[int]:
    """Eulerian numbers ``E(m, k)``, ``k = 0..m-1`` (``[1]`` for ``m = 0``)."""
    row = [1]
    for j in range(2, m + 1):
        row = [(k + 1) * (row[k] if k < len(row) else 0) + (j - k) * (row[k - 1] if k >= 1 else 0)
               for k in range(j)]
    return row


@dataclass(frozen=True)
class GreenSequence:
    """``g_b(0..xmax)`` as partial sum plus the reported tail correction."""

    partial: np.ndarray = field(repr=False)
    correction: np.ndarray = field(repr=False)
    method: str
    nmax: int | None = None

    @property
    def values(self) -> np.ndarray:
        return self.partial + self.correction

    @property
    def xmax(self) -> int:
        return self.partial.size - 1

    def __call__(self, x):
        x = np.asarray(x)
        if np.any(x < 0) or np.any(x > self.xmax):
            raise RangeError(f"x beyond horizon {self.xmax}", required=int(np.max(x)))
        return self.values[x]

    @property
    def max_correction_share(self) -> float:
        v = self.values
        ok = v > 0
        return float((self.correction[ok] / v[ok]).max()) if ok.any() else 0.0

    def to_csv(self, path) -> None:
        write_csv(path, ("x", "g_b"), np.arange(self.partial.size), self.values)


def _exact_integer(law: LatticeLaw, beta: int, renewal: RenewalSequence, xmax: int) -> np.ndarray:
    """``sum_n n**beta P^n = sum_k E(beta,k) P^(k+1) U^(beta+1)`` truncated to ``0..xmax``."""
    L = xmax + 1
    g = renewal.g[:L]
    if beta == 0:
        return g.copy()
    upow = g.copy()
    for _ in range(beta):
        upow = convolve(upow, g, L, "fft")
    p = law.pmf[:L]
    poly = np.zeros(L)
    pk = p.copy()
    for k, e in enumerate(eulerian_row(beta)):
        if k:
            pk = convolve(pk, p, L)
        poly += e * pk
    return convolve(poly, upow, L, "fft")


def _density_table(stable: StableLaw, ymin: float, ymax: float, k: int = 600):
    ys = np.geomspace(ymin, ymax, k)
    f = np.asarray(stable_density(stable, ys), dtype=float)
    return np.log(ys), f


def llt_correction(law, weights: WeightSpec, scale: NormingScale, stable: StableLaw, nmax: int, xs,
                   points: int = 400) -> np.ndarray:
    """``sum_{n > nmax} b_n f(x/a_n) / a_n`` by quadrature in ``log n`` (one value per ``x``)."""
    xs = np.asarray(xs, dtype=float)
    out = np.zeros(xs.size)
    pos = xs > 0
    if not pos.any():
        return out
    xp = xs[pos]
    # f(y) is negligible below y ~ ymin; beyond n_top every x has x/a_n < ymin
    ymin = 1e-3 * stable.scale
    while stable_density(stable, ymin) > 1e-300 and ymin > 1e-12:
        ymin /= 2
    n_lo = nmax + 0.5
    n_top = max(float(scale.A(xp.max() / ymin)), 4 * n_lo)
    t = np.geomspace(n_lo, n_top, points)
    lt = np.log(t)
    an = scale.a(t)
    w = weights.b(t) / an * t  # dn = n dlog n
    ly, fy = _density_table(stable, ymin, max(xp.max() / an.min(), 2 * ymin))
    res = np.empty(xp.size)
    for s in range(0, xp.size, 4096):
        y = xp[s: s + 4096, None] / an[None, :]
        f = np.interp(np.log(y), ly, fy, left=0.0, right=0.0)
        res[s: s + 4096] = trapezoid(w[None, :] * f, lt, axis=1)
    out[pos] = res
    return out


def green_mass(law: LatticeLaw, weights: WeightSpec, conv: ConvTable | None, renewal: RenewalSequence | None,
               xmax: int, scale: NormingScale | None = None, stable: StableLaw | None = None,
               method: str = "auto") -> GreenSequence:
    """``g_b`` on ``0..xmax``.

    ``exact``: integer ``beta >= 0`` without slowly varying factor, from the
    renewal sequence via Eulerian numbers (``beta = 0`` returns ``g`` itself).
    ``llt``: rows ``n <= conv.nmax`` summed exactly plus the local limit
    tail correction, which must stay below 1e-3 of the value at ``xmax``.
    """
    _require_nonneg(law)
    xmax = int(xmax)
    if method == "auto":
        method = "exact" if weights.exact_integer else "llt"
    if method == "exact":
        if not weights.exact_integer:
            raise PreconditionError("exact route needs plain integer weights n**beta, beta >= 0")
        if renewal is None or renewal.xmax < xmax:
            raise RangeError("renewal sequence must cover xmax", required=xmax)
        vals = _exact_integer(law, int(weights.beta), renewal, xmax)
        return GreenSequence(vals, np.zeros_like(vals), "generating-function")
    if method != "llt":
        raise ValueError(f"unknown method {method!r}")
    if conv is None or conv.x_hi < xmax:
        raise RangeError("convolution table must cover xmax", required=xmax)
    scale = scale or build_norming(law.spec)
    stable = stable or StableLaw(law.alpha)
    N = conv.nmax
    b = weights.b(np.arange(1, N + 1))
    partial = b @ conv.rows[:, : xmax + 1]
    partial[0] += weights.b0
    corr = llt_correction(law, weights, scale, stable, N, np.arange(xmax + 1))
    top = partial[-1] + corr[-1]
    if top > 0 and corr[-1] / top > REMAINDER_TOL:
        need = _suggest_nmax(law, weights, scale, stable, N, xmax)
        raise RangeError(f"tail correction {corr[-1] / top:.3g} of g_b(xmax); use nmax >= {need}", required=need)
    return GreenSequence(partial, corr, "partial+llt", N)


def _suggest_nmax(law, weights, scale, stable, N, xmax) -> int:
    n = N
    for _ in range(60):
        n = int(n * 1.5) + 1
        c = llt_correction(law, weights, scale, stable, n, [xmax])[0]
        head = llt_correction(law, weights, scale, stable, 0, [xmax])[0]
        if head > 0 and c / head < REMAINDER_TOL:
            return n
    return n


def check_g2(law: LatticeLaw, weights: WeightSpec, xgrid, scale: NormingScale | None = None) -> RatioCurve:
    """``x F(x) p(x) / B(x)``."""
    _require_nonneg(law)
    scale = scale or build_norming(law.spec)
    x = _grid(xgrid)
    tail = law.tail_at(x)
    return RatioCurve(x, x * tail * law.p(x) / weights.B(scale, x), "x*tail*p/B",
                      out_of_class=bool(np.any(tail <= 0)))


def check_g3(law: LatticeLaw, weights: WeightSpec, delta: float, x: int,
             scale: NormingScale | None = None) -> float:
    """``(x F(x) / B(x)) sum_{w=1}^{delta x} p(x-w) B(w) / (w F(w)**2)``."""
    _require_nonneg(law)
    scale = scale or build_norming(law.spec)
    win = _r3_window(law, delta, int(x))
    if win is None:
        return 0.0
    w, pw = win
    tw = law.tail_at(w)
    s = math.fsum(pw * weights.B(scale, w) / (w * tw * tw))
    return float(x * law.tail_at(int(x)) / weights.B(scale, float(x)) * s)


def omega_curve(law: LatticeLaw, xgrid) -> RatioCurve:
    """``x p(x) / F(x)``: a diagnostic only, no hypothesis is placed on it."""
    _require_nonneg(law)
    x = _grid(xgrid)
    tail = law.tail_at(x)
    if np.any(tail <= 0):
        raise PreconditionError("tail vanishes on the grid")
    return RatioCurve(x, x * law.p(x) / tail, "x*p/tail")


def regime_classifier(alpha: float, beta: float) -> str:
    """``unconditional`` when ``alpha (2 + beta) > 1``, otherwise ``conditional``."""
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    if not beta > -2:
        raise DomainError("beta must exceed -2")
    return "unconditional" if alpha * (2 + beta) > 1 else "conditional"


def green_ratio(law: LatticeLaw, weights: WeightSpec, green: GreenSequence, xgrid,
                scale: NormingScale | None = None) -> RatioCurve:
    """``x F(x) g_b(x) / B(x)``, the quantity whose limit is the Green constant."""
    scale = scale or build_norming(law.spec)
    x = _grid(xgrid)
    return RatioCurve(x, x * law.tail_at(x) * green(x) / weights.B(scale, x), "x*tail*g_b/B")
