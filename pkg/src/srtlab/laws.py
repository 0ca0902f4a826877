"""Aperiodic lattice laws with regularly varying tails and their norming scales.

Every nonnegative family is parametrised through a monotone function
``A0(x) = x**alpha * L0(x)`` with ``A0(1) = 1`` and tail ``P(X > x) = 1/A0(x)``
for ``x >= 1``.  The mass function is obtained by differencing the tail, done
in log space so that small probabilities keep their relative accuracy.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import ConfigurationError, ConstructionError

FAMILIES = (
    "pure-power",
    "log-power",
    "boundary-half",
    "oscillating",
    "spike-perturbed",
    "custom-table",
)
SUPPORTS = ("nonnegative", "centered-two-sided")

_E = math.e
_TOL = 1e-12


@dataclass(frozen=True)
class TailSpec:
    """Parameters of a lattice law.

    ``beta_l`` is the log exponent of the log-power and boundary-half families,
    ``osc_amplitude``/``osc_exponent`` drive ``L(x) = exp(a sin(log(e+x)**g))``,
    and the spike family places extra mass ``spike_c * 2**(k*(alpha-1))`` on
    ``x = 2**k`` for ``k >= spike_k0``.  ``table`` holds tail values
    ``P(X > x)`` for ``x = 0..K`` (custom-table family only); beyond ``K`` the
    tail continues as ``table[-1] * (x/K)**-alpha``.
    """

    alpha: float
    family: str = "pure-power"
    support: str = "nonnegative"
    beta_l: float = 0.0
    osc_amplitude: float = 0.0
    osc_exponent: float = 0.5
    spike_c: float = 4.0
    spike_k0: int = 6
    table: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "table", tuple(float(t) for t in self.table))
        a = self.alpha
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.support not in SUPPORTS:
            raise ConfigurationError(f"unknown support {self.support!r}; expected one of {SUPPORTS}")
        if not (0.0 < a < 1.0 or 1.0 < a < 2.0):
            raise ConfigurationError(f"alpha must lie in (0,1) or (1,2), got {a}")
        if self.support == "nonnegative" and not a < 1.0:
            raise ConfigurationError("nonnegative laws need alpha in (0,1)")
        if self.support == "centered-two-sided" and self.family != "pure-power":
            raise ConfigurationError("two-sided laws are only available for the pure-power family")
        if self.family == "boundary-half":
            if a != 0.5:
                raise ConfigurationError("boundary-half family has alpha = 1/2")
            if self.beta_l < 0:
                raise ConfigurationError("boundary-half family needs beta_l >= 0")
        if self.family == "log-power" and self.beta_l < -a / 0.33:
            # d log L0 / d log x >= -0.33 |beta_l| on x >= 1
            raise ConfigurationError("log-power beta_l too negative for a monotone tail")
        if self.family == "oscillating":
            g, amp = self.osc_exponent, self.osc_amplitude
            if not 0.0 < g < 1.0:
                raise ConfigurationError("oscillation exponent must lie in (0,1)")
            if amp < 0 or amp * g >= a:
                raise ConfigurationError("need 0 <= osc_amplitude * osc_exponent < alpha for a monotone tail")
        if self.family == "spike-perturbed":
            if not a < 0.5:
                raise ConfigurationError("spike-perturbed family needs alpha < 1/2")
            if self.spike_c <= 0 or int(self.spike_k0) != self.spike_k0 or self.spike_k0 < 1:
                raise ConfigurationError("spike_c must be positive and spike_k0 a positive integer")
        if self.family == "custom-table":
            t = np.asarray(self.table)
            if t.size < 2:
                raise ConfigurationError("custom-table needs at least two tail values")
            if not np.all(np.isfinite(t)) or t[0] > 1 + _TOL or t.min() < 0:
                raise ConfigurationError("custom-table tail values must lie in [0, 1]")

    @property
    def two_sided(self) -> bool:
        return self.support == "centered-two-sided"

    # flat key-value form used by experiment configs
    def to_config(self) -> dict[str, str]:
        out = {"family": self.family, "alpha": repr(self.alpha), "support": self.support}
        if self.family in ("log-power", "boundary-half"):
            out["beta_l"] = repr(float(self.beta_l))
        if self.family == "oscillating":
            out["osc_amplitude"] = repr(float(self.osc_amplitude))
            out["osc_exponent"] = repr(float(self.osc_exponent))
        if self.family == "spike-perturbed":
            out["spike_c"] = repr(float(self.spike_c))
            out["spike_k0"] = str(int(self.spike_k0))
        if self.family == "custom-table":
            out["table"] = ",".join(repr(t) for t in self.table)
        return out

    @classmethod
    def from_config(cls, items: Mapping[str, str]) -> "TailSpec":
        known = {"family", "alpha", "support", "beta_l", "osc_amplitude", "osc_exponent",
                 "spike_c", "spike_k0", "table"}
        kwargs = {}
        try:
            for key, raw in items.items():
                if key not in known:
                    continue
                if key in ("family", "support"):
                    kwargs[key] = raw.strip()
                elif key == "spike_k0":
                    kwargs[key] = int(raw)
                elif key == "table":
                    kwargs[key] = tuple(float(t) for t in raw.split(",") if t.strip())
                else:
                    kwargs[key] = float(raw)
        except ValueError as exc:
            raise ConfigurationError(f"malformed law parameter: {exc}") from None
        if "alpha" not in kwargs:
            raise ConfigurationError("law config needs 'alpha'")
        return cls(**kwargs)


# ---------------------------------------------------------------------------
# closed-form ingredients


def _log_a0(spec: TailSpec, x):
    """log A0(x) for real x > 0, normalised so that A0(1) = 1."""
    x = np.asarray(x, dtype=float)
    a = spec.alpha
    lx = np.log(x)
    fam = spec.family
    if fam in ("pure-power", "spike-perturbed"):
        return a * lx
    if fam == "log-power":
        return a * lx + spec.beta_l * (np.log(np.log(_E + x)) - math.log(math.log(_E + 1)))
    if fam == "boundary-half":
        return 0.5 * lx - 0.5 * spec.beta_l * (np.log(np.log(_E + x)) - math.log(math.log(_E + 1)))
    if fam == "oscillating":
        g, amp = spec.osc_exponent, spec.osc_amplitude
        return a * lx + amp * (np.sin(np.log(_E + x) ** g) - math.sin(math.log(_E + 1) ** g))
    raise ConfigurationError(f"family {fam!r} has no closed-form A0")


def _dlog_a0(spec: TailSpec, x):
    """log A0(x) - log A0(x-1) for integer x >= 2, without cancellation."""
    x = np.asarray(x, dtype=float)
    a = spec.alpha
    d = -a * np.log1p(-1.0 / x)
    fam = spec.family
    if fam in ("pure-power", "spike-perturbed"):
        return d
    l0 = np.log(_E + x - 1.0)
    dl = np.log1p(1.0 / (_E + x - 1.0))
    if fam == "log-power":
        return d + spec.beta_l * np.log1p(dl / l0)
    if fam == "boundary-half":
        return -0.5 * np.log1p(-1.0 / x) - 0.5 * spec.beta_l * np.log1p(dl / l0)
    if fam == "oscillating":
        g, amp = spec.osc_exponent, spec.osc_amplitude
        u0 = l0**g
        du = u0 * np.expm1(g * np.log1p(dl / l0))
        return d + amp * 2.0 * np.cos(u0 + 0.5 * du) * np.sin(0.5 * du)
    raise ConfigurationError(f"family {fam!r} has no closed-form A0")


def _spike_geometry(spec: TailSpec):
    r = 2.0 ** (spec.alpha - 1.0)
    k0 = int(spec.spike_k0)
    total = spec.spike_c * r**k0 / (1.0 - r)
    return r, k0, 1.0 + total


def _spike_tail_extra(spec: TailSpec, x):
    """Spike mass strictly above x (before renormalisation)."""
    r, k0, _ = _spike_geometry(spec)
    x = np.asarray(x, dtype=float)
    kstar = np.where(x >= 1, np.floor(np.log2(np.maximum(x, 1.0))) + 1, 0)
    # guard log2 rounding at exact powers of two
    kstar = np.where(2.0**kstar <= x, kstar + 1, kstar)
    kstar = np.where(2.0 ** (kstar - 1) > x, kstar - 1, kstar)
    kstar = np.maximum(kstar, k0)
    return spec.spike_c * r**kstar / (1.0 - r)


def _table_tail(spec: TailSpec, x):
    t = np.asarray(spec.table)
    K = t.size - 1
    x = np.asarray(x, dtype=float)
    inside = np.clip(x, 0, K).astype(np.int64)
    out = np.where(x <= K, t[inside], t[-1] * (np.maximum(x, 1.0) / max(K, 1)) ** (-spec.alpha))
    return np.where(x < 0, 1.0, out)


def tail_function(spec: TailSpec, x):
    """P(X > x) for integer x (vectorised); the two-sided case returns the right tail."""
    x = np.asarray(x, dtype=float)
    fam = spec.family
    if fam == "custom-table":
        return _table_tail(spec, x)
    if spec.two_sided:
        ax = np.where(x >= 0, x, -x - 1.0)
        half = 0.5 * np.where(ax >= 1, np.maximum(ax, 1.0) ** (-spec.alpha), 1.0)
        return np.where(x >= 0, half, 1.0 - half)
    base = np.where(x >= 1, np.exp(-_log_a0(spec, np.maximum(x, 1.0))), 1.0)
    base = np.where(x < 0, 1.0, base)
    if fam == "spike-perturbed":
        _, _, Z = _spike_geometry(spec)
        return np.where(x < 0, 1.0, (base + _spike_tail_extra(spec, x)) / Z)
    return base


def _nonneg_arrays(spec: TailSpec, xmax: int):
    xs = np.arange(xmax + 1, dtype=float)
    if spec.family == "custom-table":
        tail = _table_tail(spec, xs)
        prev = np.concatenate(([1.0], tail[:-1]))
        pmf = prev - tail
        if pmf.min() < -_TOL:
            raise ConstructionError("custom tail table is not non-increasing (negative mass)")
        return np.maximum(pmf, 0.0), tail
    tail = np.ones(xmax + 1)
    tail[1:] = np.exp(-_log_a0(spec, xs[1:]))
    pmf = np.zeros(xmax + 1)
    pmf[1] = 1.0 - tail[1]
    if xmax >= 2:
        pmf[2:] = tail[2:] * np.expm1(_dlog_a0(spec, xs[2:]))
    if spec.family == "spike-perturbed":
        r, k0, Z = _spike_geometry(spec)
        tail = (tail + _spike_tail_extra(spec, xs)) / Z
        tail[0] = 1.0
        k = np.arange(k0, int(math.log2(max(xmax, 1))) + 1)
        k = k[2.0**k <= xmax]
        pmf[(2**k).astype(np.int64)] += spec.spike_c * r**k
        pmf /= Z
    if pmf.min() < -_TOL:
        raise ConstructionError("family parameters produce negative mass")
    return np.maximum(pmf, 0.0), tail


@dataclass(frozen=True)
class LatticeLaw:
    """A probability mass function on ``xmin..xmax`` with its exact tail.

    ``tail[i]`` is ``P(X > xmin + i)``; ``truncated_mass`` is the probability
    of ``|X| > xmax``, which is never silently dropped.
    """

    spec: TailSpec
    xmin: int
    xmax: int
    pmf: np.ndarray = field(repr=False)
    tail: np.ndarray = field(repr=False)
    truncated_mass: float
    aperiodic: bool

    @property
    def nonnegative(self) -> bool:
        return self.xmin >= 0

    @property
    def alpha(self) -> float:
        return self.spec.alpha

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.xmin, self.xmax + 1)

    @property
    def truncated_right(self) -> float:
        return self.truncated_mass / 2 if self.spec.two_sided else self.truncated_mass

    def p(self, x):
        """Mass at integer x (zero outside the stored range)."""
        x = np.asarray(x, dtype=np.int64)
        ok = (x >= self.xmin) & (x <= self.xmax)
        idx = np.where(ok, x - self.xmin, 0)
        return np.where(ok, self.pmf[idx], 0.0)

    def tail_at(self, x):
        """P(X > x), from the stored array where possible and the closed form beyond it."""
        x = np.asarray(x, dtype=np.int64)
        ok = (x >= self.xmin) & (x <= self.xmax)
        idx = np.where(ok, x - self.xmin, 0)
        return np.where(ok, self.tail[idx], tail_function(self.spec, x))

    def to_csv(self, path) -> None:
        write_csv(path, ("x", "p"), self.support, self.pmf)


def build_law(spec: TailSpec, xmax: int) -> LatticeLaw:
    """Tabulate ``spec`` on ``0..xmax`` (or ``-xmax..xmax`` for two-sided laws)."""
    xmax = int(xmax)
    if xmax < 8:
        raise ConfigurationError("xmax must be at least 8")
    if spec.two_sided:
        apmf, atail = _abs_pure_power(spec.alpha, xmax)
        pmf = np.concatenate((apmf[:0:-1] / 2, [apmf[0]], apmf[1:] / 2))
        # P(X > -m) = 1 - P(|X| > m-1)/2 for m >= 1
        tail = np.concatenate((1.0 - atail[:-1][::-1] / 2, atail / 2))
        law = LatticeLaw(spec, -xmax, xmax, pmf, tail, float(atail[-1]), False)
    else:
        pmf, tail = _nonneg_arrays(spec, xmax)
        law = LatticeLaw(spec, 0, xmax, pmf, tail, float(tail[-1]), False)
    for arr in (law.pmf, law.tail):
        arr.setflags(write=False)
    object.__setattr__(law, "aperiodic", _is_aperiodic(law))
    return law


def _abs_pure_power(alpha: float, xmax: int):
    xs = np.arange(xmax + 1, dtype=float)
    atail = np.ones(xmax + 1)
    atail[1:] = xs[1:] ** (-alpha)
    apmf = np.zeros(xmax + 1)
    apmf[2:] = atail[2:] * np.expm1(-alpha * np.log1p(-1.0 / xs[2:]))
    return apmf, atail


def _is_aperiodic(law: LatticeLaw) -> bool:
    pts = law.support[law.pmf > 0].astype(np.int64)
    if pts.size == 0:
        return False
    if not law.nonnegative:
        # the walk lives on pts[0]*n + gcd(differences) Z
        pts = pts - pts[0]
    return int(np.gcd.reduce(pts)) == 1


def custom_law(pmf: Iterable[float], xmax: int | None = None, alpha: float = 0.5) -> LatticeLaw:
    """Law on ``0..len(pmf)-1`` given by its mass function (test and demo helper)."""
    p = np.asarray(list(pmf), dtype=float)
    if p.min() < 0:
        raise ConstructionError("negative probability in custom mass function")
    # tail(x) = 1 - P(X <= x); keeps tail(0) == 1 exactly when p(0) == 0
    tail = np.maximum(1.0 - np.cumsum(p), 0.0)
    if abs(p.sum() - 1) <= _TOL:
        tail[-1] = 0.0
    spec = TailSpec(alpha=alpha, family="custom-table", table=tuple(tail))
    return build_law(spec, max(xmax or 0, 8, p.size - 1))


def write_csv(path, header, xs, values) -> None:
    """Two-column CSV with 17 significant digits (byte-stable across runs)."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for x, v in zip(np.asarray(xs).tolist(), np.asarray(values, dtype=float).tolist()):
            w.writerow((x, format(v, ".17g")))


# ---------------------------------------------------------------------------
# norming


@dataclass(frozen=True)
class NormingScale:
    """``A(x) = x**alpha L0(x) ~ 1/P(X > x)`` and its functional inverse ``a``.

    ``a(n)`` is the norming sequence: ``A(a(n)) = n``, so ``n P(X > a(n)) -> 1``.
    """

    alpha: float
    log_A: Callable[[np.ndarray], np.ndarray] = field(repr=False)

    @property
    def eta(self) -> float:
        return 1.0 / self.alpha

    def A(self, x):
        return np.exp(self.log_A(np.asarray(x, dtype=float)))

    def a(self, y):
        """Solve ``A(a) = y`` by bisection in log space (vectorised)."""
        y = np.asarray(y, dtype=float)
        ly = np.log(y)
        guess = ly / self.alpha
        lo, hi = guess - 5.0, guess + 5.0
        for _ in range(200):
            bad = self.log_A(np.exp(lo)) > ly
            if not bad.any():
                break
            lo = np.where(bad, lo - 10.0, lo)
        for _ in range(200):
            bad = self.log_A(np.exp(hi)) < ly
            if not bad.any():
                break
            hi = np.where(bad, hi + 10.0, hi)
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            below = self.log_A(np.exp(mid)) < ly
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = np.exp(0.5 * (lo + hi))
        return out if out.ndim else float(out)

    def tail_product(self, law: LatticeLaw, x):
        """A(x) * P(X > x); tends to 1 along the tail."""
        return self.A(x) * law.tail_at(x)


def build_norming(spec: TailSpec) -> NormingScale:
    """Norming scale for ``spec``; ``A`` is exactly ``1/P(X>x)`` except for spikes and tables."""
    a = spec.alpha
    if spec.two_sided:
        log2 = math.log(2.0)
        return NormingScale(a, lambda x: log2 + a * np.log(x))
    if spec.family == "spike-perturbed":
        logZ = math.log(_spike_geometry(spec)[2])
        return NormingScale(a, lambda x: logZ + a * np.log(x))
    if spec.family == "custom-table":
        t = np.asarray(spec.table)
        if t[-1] <= 0:
            raise ConstructionError("finite-support table is outside every domain of attraction")
        K = t.size - 1
        if np.any(t <= 0):
            raise ConstructionError("tail table hits zero")
        lt = -np.log(t)
        ks = np.arange(K + 1, dtype=float)

        def log_A(x):
            x = np.asarray(x, dtype=float)
            inner = np.interp(x, ks, lt)
            outer = lt[-1] + a * np.log(np.maximum(x, 1e-300) / max(K, 1))
            return np.where(x <= K, inner, outer)

        scale = NormingScale(a, log_A)
    else:
        scale = NormingScale(a, lambda x: _log_a0(spec, x))
    grid = np.geomspace(1.0, 1e12, 2000)
    if np.any(np.diff(scale.log_A(grid)) < -1e-12):
        raise ConstructionError("A is not monotone on [1, 1e12]")
    return scale


@dataclass(frozen=True)
class PotterReport:
    eps: float
    c: float
    lambdas: np.ndarray = field(repr=False)
    c_by_lambda: np.ndarray = field(repr=False)
    growth_slope: float
    violated: bool


def potter_envelope(scale: NormingScale, eps: float, xgrid, lambdas=None, tol: float = 0.01) -> PotterReport:
    """Tightest constant ``c`` with ``c^-1 l^(a-eps) <= A(l x)/A(x) <= c l^(a+eps)`` on a grid.

    Pairs are ``(x, l x)`` for ``l`` in ``lambdas``, or all ordered grid pairs
    when ``lambdas`` is None.  The envelope is flagged as violated when the
    per-``l`` constant keeps growing with ``l`` (log-log slope above ``tol``),
    i.e. no single ``c`` works for the given ``eps``.
    """
    if eps < 0:
        raise ConfigurationError("eps must be non-negative")
    x = np.asarray(xgrid, dtype=float)
    a = scale.alpha
    if lambdas is None:
        i, j = np.triu_indices(x.size, k=1)
        lo, hi = x[i], x[j]
        lam = hi / lo
    else:
        lam_in = np.asarray(lambdas, dtype=float)
        lo = np.repeat(x, lam_in.size)
        lam = np.tile(lam_in, x.size)
        hi = lo * lam
    logr = scale.log_A(hi) - scale.log_A(lo)
    ll = np.log(lam)
    need = np.maximum(logr - (a + eps) * ll, (a - eps) * ll - logr)
    need = np.maximum(need, 0.0)
    keys = np.round(ll, 9)
    uniq, inv = np.unique(keys, return_inverse=True)
    per = np.zeros(uniq.size)
    np.maximum.at(per, inv, need)
    c_by = np.exp(per)
    lam_u = np.exp(uniq)
    if uniq.size >= 2:
        top = lam_u >= lam_u.max() / 10 if lam_u.max() / lam_u.min() >= 10 else np.ones(uniq.size, bool)
        if top.sum() < 2:
            top = np.ones(uniq.size, bool)
        slope = float(np.polyfit(uniq[top], per[top], 1)[0])
    else:
        slope = 0.0
    return PotterReport(eps, float(c_by.max()), lam_u, c_by, slope, slope > tol)
