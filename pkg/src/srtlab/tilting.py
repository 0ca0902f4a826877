"""Local large deviations: the associated (tilted) law, the change-of-measure
identity, tilted moments, bound scans and the local limit sanity check."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .conditions import loglog_slope
from .convolution import _windowed_power_point, power_array, restricted_pmf, truncated_event_prob
from .errors import DomainError, PreconditionError, RangeError, ResourceError
from .laws import LatticeLaw, NormingScale
from .stable import StableLaw, stable_density

MAX_SHIFTED = 1 << 26  # longest array for exact two-sided powering


@dataclass(frozen=True)
class TiltedLaw:
    """``p~(z) = exp(mu z) p(z) / m0`` on ``|z| <= gamma x`` with ``mu = log(Lambda)/(gamma x)``."""

    law: LatticeLaw = field(repr=False)
    n: float
    x: int
    gamma: float
    T: int
    lo: int
    Lambda: float
    mu: float
    m0: float
    pmf: np.ndarray = field(repr=False)

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.lo, self.lo + self.pmf.size)

    @property
    def base(self) -> np.ndarray:
        """The restricted (unnormalised) base mass function on the same support."""
        q, _ = restricted_pmf(self.law, self.T)
        return q

    def tilt_defect(self) -> float:
        """Relative defect of ``exp(gamma mu x) = Lambda`` in floating point."""
        return abs(math.exp(self.gamma * self.mu * self.x) - self.Lambda) / self.Lambda


def make_tilted(law: LatticeLaw, n: float, x: int, gamma: float, Lambda: float | None = None) -> TiltedLaw:
    """Associated law for the event ``{S_n = x}``; ``n`` may be real (only ``n F(x)`` enters).

    ``Lambda`` overrides ``1/(n F(x))``; the change-of-measure identity holds
    for any ``Lambda >= 1``, which is how laws with ``F(x) = 0`` are tilted.
    """
    x = int(x)
    if x < 1 or gamma <= 0 or n <= 0:
        raise PreconditionError("need x >= 1, gamma > 0, n > 0")
    nf = n * float(law.tail_at(x))
    if not nf < 1:
        raise DomainError(f"n P(X > x) = {nf:.6g} >= 1: no tilt toward large x")
    T = int(math.floor(gamma * x + 1e-9))
    q, lo = restricted_pmf(law, T)
    if q.size == 0 or not np.any(q > 0):
        raise DomainError("truncated support carries no mass")
    if Lambda is not None:
        if not Lambda >= 1:
            raise DomainError("Lambda must be >= 1")
        Lam = float(Lambda)
        mu = math.log(Lam) / (gamma * x)
    elif nf == 0:
        # x beyond a finite support: Lambda is infinite; the identity holds for
        # every mu, so the zero tilt (Lambda = 1) is used
        Lam, mu = 1.0, 0.0
    else:
        Lam = 1.0 / nf
        mu = math.log(Lam) / (gamma * x)
    z = np.arange(lo, lo + q.size)
    w = q * np.exp(mu * z)
    m0 = math.fsum(w)
    pt = w / m0
    pt.flags.writeable = False
    return TiltedLaw(law, float(n), x, float(gamma), T, lo, Lam, mu, m0, pt)


@dataclass(frozen=True)
class TiltCheck:
    left: float
    right: float

    @property
    def discrepancy(self) -> float:
        if self.left == 0 and self.right == 0:
            return 0.0
        return abs(self.left - self.right) / max(abs(self.left), abs(self.right))


def tilt_identity_sides(law: LatticeLaw, n: int, x: int, gamma: float) -> TiltCheck:
    """Both sides of ``P(S_n=x, max|X| <= gamma x) = m0**n Lambda**(-1/gamma) P~(S_n=x)``.

    Both n-fold convolutions are direct positive-term sums, so each side is
    accurate to a few ulps relative.
    """
    n, x = int(n), int(x)
    tl = make_tilted(law, n, x, gamma)
    left = truncated_event_prob(law, n, x, gamma, method="direct")
    pt, lo = tl.pmf, tl.lo
    if law.nonnegative and lo + pt.size - 1 > x:
        pt = pt[: x - lo + 1]  # steps beyond x cannot occur on {S_n = x}
    pn = _windowed_power_point(pt, lo, n, x)
    if pn <= 0:
        return TiltCheck(left, 0.0)
    log_right = n * math.log(tl.m0) - math.log(tl.Lambda) / gamma + math.log(pn)
    return TiltCheck(left, math.exp(log_right))


def tilt_identity_check(law: LatticeLaw, n: int, x: int, gamma: float) -> float:
    """Relative discrepancy between the two sides of the change-of-measure identity."""
    return tilt_identity_sides(law, n, x, gamma).discrepancy


@dataclass(frozen=True)
class MomentReport:
    m1: float
    m2: float
    m3: float
    sigma2_tilde: float
    nu_tilde: float
    m0_power: float  # m0**n
    moment_constants: tuple  # n |m~_k| / x**k, k = 1..3 (m~_k unnormalised)
    variance_constant: float  # n sigma~^2 / x^2
    third_constant: float  # n nu~ / x^3
    flags: dict

    def as_dict(self) -> dict:
        return {"m1": self.m1, "m2": self.m2, "m3": self.m3, "sigma2_tilde": self.sigma2_tilde,
                "nu_tilde": self.nu_tilde, "m0_power": self.m0_power,
                "moment_constants": list(self.moment_constants),
                "variance_constant": self.variance_constant, "third_constant": self.third_constant,
                "flags": dict(self.flags)}


def tilted_moments(tilted: TiltedLaw, C: float = 10.0, c: float = 0.01, d: float = 0.5) -> MomentReport:
    """Exact tilted moments with the diagnostic bound flags.

    Flags: ``n |m~_k| <= C x**k`` for each k, and ``c x**2 / Lambda**d <= n sigma~^2 <= C x**2``
    (likewise for the third absolute central moment); the constants are
    inputs, not theorems.
    """
    z = tilted.support.astype(float)
    p = tilted.pmf
    m1 = math.fsum(z * p)
    m2 = math.fsum(z * z * p)
    m3 = math.fsum(z ** 3 * p)
    s2 = max(math.fsum((z - m1) ** 2 * p), 0.0)
    nu = math.fsum(np.abs(z - m1) ** 3 * p)
    n, x, Lam = tilted.n, float(tilted.x), tilted.Lambda
    raw = [abs(m) * tilted.m0 for m in (m1, m2, m3)]
    mk = tuple(n * r / x ** k for k, r in enumerate(raw, start=1))
    vc = n * s2 / x ** 2
    tc = n * nu / x ** 3
    lower = c / Lam ** d
    flags = {f"m{k}_bounded": bool(v <= C) for k, v in enumerate(mk, start=1)}
    flags["variance_window"] = bool(lower <= vc <= C)
    flags["third_window"] = bool(lower <= tc <= C)
    flags["moment_order"] = bool(m2 >= m1 * m1 - 1e-12 * abs(m2) and nu >= 0)
    return MomentReport(m1, m2, m3, s2, nu, tilted.m0 ** n, mk, vc, tc, flags)


# ---------------------------------------------------------------------------
# bound scans


@dataclass(frozen=True)
class Surface:
    """Ratio surface over ``n`` (rows) and ``theta`` (columns)."""

    n_grid: np.ndarray
    theta_grid: np.ndarray
    x: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    label: str

    @property
    def sup(self) -> float:
        return float(np.max(self.values))

    def row_slopes(self) -> np.ndarray:
        """Log-log slope in theta for each n row (zero rows give -inf)."""
        return np.array([loglog_slope(self.theta_grid, r) for r in self.values])

    @property
    def theta_slope(self) -> float:
        """Worst (largest) theta-trend slope over rows with positive values."""
        s = self.row_slopes()
        s = s[np.isfinite(s)]
        return float(s.max()) if s.size else -math.inf

    def flat(self, tol: float = 0.05) -> bool:
        return bool(np.isfinite(self.sup) and self.theta_slope <= tol)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("n", "theta", self.label))
            for i, n in enumerate(self.n_grid.tolist()):
                for j, t in enumerate(self.theta_grid.tolist()):
                    w.writerow((n, format(t, ".17g"), format(float(self.values[i, j]), ".17g")))

    def summary(self) -> dict:
        return {"label": self.label, "sup": self.sup, "theta_slope": self.theta_slope,
                "row_slopes": self.row_slopes().tolist(), "n_grid": self.n_grid.tolist(),
                "theta_grid": self.theta_grid.tolist()}


def _cell_points(scale: NormingScale, n_range, theta_range):
    ns = np.asarray(sorted(set(int(n) for n in n_range)), dtype=np.int64)
    th = np.asarray(sorted(set(float(t) for t in theta_range)))
    if ns.size == 0 or th.size == 0 or ns[0] < 1 or th[0] <= 0:
        raise PreconditionError("n and theta grids must be non-empty and positive")
    an = scale.a(ns.astype(float))
    xs = np.rint(np.outer(an, th)).astype(np.int64)
    return ns, th, np.atleast_1d(an), xs


def _point_probs(law: LatticeLaw, n: int, xs: np.ndarray) -> np.ndarray:
    """``P(S_n = x)`` for the tabulated law at integer points ``xs``."""
    top = int(xs.max())
    if law.nonnegative:
        if law.xmax < top:
            raise RangeError(f"law tabulated to {law.xmax}, scan needs {top}", required=top)
        arr = power_array(law.pmf[: top + 1], n, top + 1)
        return arr[xs]
    length = top - n * law.xmin + 1
    if length > MAX_SHIFTED:
        raise ResourceError(f"two-sided powering needs {length} points; reduce n or the law's xmax")
    arr = power_array(law.pmf, n, length)
    return arr[xs - n * law.xmin]


def lld_scan(law: LatticeLaw, scale: NormingScale, n_range, theta_range) -> Surface:
    """``R(n, theta) = a_n P(S_n = x) / (n F(x))`` at ``x = round(theta a_n)``."""
    ns, th, an, xs = _cell_points(scale, n_range, theta_range)
    vals = np.empty(xs.shape)
    for i, n in enumerate(ns.tolist()):
        pts = _point_probs(law, n, xs[i]) if n > 1 else law.p(xs[i])
        vals[i] = an[i] * pts / (n * law.tail_at(xs[i]))
    return Surface(ns, th, xs, vals, "a_n*P(S_n=x)/(n*tail)")


def truncated_lld_scan(law: LatticeLaw, scale: NormingScale, gamma: float, n_range, theta_range) -> Surface:
    """``a_n P(S_n = x, max X <= gamma x) / (n F(x))**(1/gamma)`` over the grid."""
    if gamma <= 0:
        raise PreconditionError("gamma must be positive")
    ns, th, an, xs = _cell_points(scale, n_range, theta_range)
    vals = np.empty(xs.shape)
    for i, n in enumerate(ns.tolist()):
        for j, x in enumerate(xs[i].tolist()):
            p1 = truncated_event_prob(law, n, x, gamma)
            vals[i, j] = an[i] * p1 / (n * float(law.tail_at(x))) ** (1.0 / gamma)
    return Surface(ns, th, xs, vals, f"a_n*P1/(n*tail)^(1/{gamma:g})")


# ---------------------------------------------------------------------------
# local limit sanity check


@dataclass(frozen=True)
class GnedenkoReport:
    n: int
    a_n: float
    y: np.ndarray
    x: np.ndarray
    scaled: np.ndarray  # a_n P(S_n = x)
    density: np.ndarray  # f(y)

    @property
    def deviation(self) -> np.ndarray:
        return np.abs(self.scaled - self.density)

    @property
    def relative(self) -> np.ndarray:
        return self.deviation / self.density

    def as_dict(self) -> dict:
        return {"n": self.n, "a_n": self.a_n, "y": self.y.tolist(), "x": self.x.tolist(),
                "scaled": self.scaled.tolist(), "density": self.density.tolist(),
                "deviation": self.deviation.tolist(), "relative": self.relative.tolist()}


def gnedenko_sanity(law: LatticeLaw, scale: NormingScale, stable: StableLaw, n: int, y_list) -> GnedenkoReport:
    """Compare ``a_n P(S_n = floor(y a_n))`` with ``f(y)``."""
    n = int(n)
    an = float(scale.a(float(n)))
    if an < 1e3:
        raise PreconditionError(f"a_n = {an:.4g} < 1e3: n too small for the local limit check")
    y = np.asarray(list(y_list), dtype=float)
    xs = np.floor(y * an).astype(np.int64)
    if law.nonnegative and np.any(xs < 0):
        raise PreconditionError("negative points for a nonnegative law")
    if law.nonnegative:
        probs = _point_probs(law, n, xs)
    else:
        probs = _windowed_probs(law, n, xs)
    dens = np.atleast_1d(stable_density(stable, y))
    return GnedenkoReport(n, an, y, xs, an * probs, dens)


def _windowed_probs(law: LatticeLaw, n: int, xs: np.ndarray) -> np.ndarray:
    """Two-sided ``P(S_n = x)`` by binary powering on ``[-W, W]``, ``W = law.xmax``.

    Paths that leave the window and come back are dropped; this needs two
    jumps beyond ``W`` and is negligible when ``W`` is many times ``a_n``.
    """
    from .convolution import convolve

    W = law.xmax
    if np.any(np.abs(xs) > W):
        raise RangeError("points outside the law's window", required=int(np.abs(xs).max()))
    width = 2 * W + 1

    def mult(a, b):
        return convolve(a, b, None, "fft")[W: W + width]

    base = np.zeros(width)
    base[law.xmin + W: law.xmax + W + 1] = law.pmf
    acc = None
    k = n
    while k:
        if k & 1:
            acc = base.copy() if acc is None else mult(acc, base)
        k >>= 1
        if k:
            base = mult(base, base)
    return acc[xs + W]
