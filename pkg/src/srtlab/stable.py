"""Limiting stable laws: density, one-sided sampling and the SRT limit constants.

Scale convention: with ``A(a_n) = n`` (so ``n P(X > a_n) -> 1``) the one-sided
limit ``Y`` has Laplace transform ``E exp(-lam Y) = exp(-Gamma(1-alpha) lam**alpha)``.
The symmetric two-sided limit (``alpha`` in (1,2), both tails ``x**-alpha / 2``
per side of ``|X|``) has characteristic function ``exp(-sigma**alpha |t|**alpha)``
with ``sigma**alpha = 2 Gamma(1-alpha) cos(pi alpha / 2)``; see :func:`symmetric_scale`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, special

from .errors import DomainError, NumericalError, PreconditionError

QUAD_TOL = 1e-9
ROUTE_AGREE = 1e-6
ROUTE_FAIL = 1e-5


@dataclass(frozen=True)
class StableLaw:
    """Stable law of index ``alpha`` with positivity parameter ``rho``.

    ``rho = 1`` is the one-sided (renewal) case with Laplace exponent
    ``c_L lam**alpha``; ``rho = 1/2`` is the symmetric case for ``alpha`` in (1,2)
    used by the two-sided local limit checks.
    """

    alpha: float
    rho: float = 1.0
    c_L: float | None = None

    def __post_init__(self):
        a = self.alpha
        if self.rho == 1.0:
            if not 0 < a < 1:
                raise DomainError("one-sided stable laws need alpha in (0,1)")
            if self.c_L is None:
                object.__setattr__(self, "c_L", math.gamma(1 - a))
        elif self.rho == 0.5:
            if not 1 < a < 2:
                raise DomainError("symmetric laws are supported for alpha in (1,2) only")
            if self.c_L is None:
                object.__setattr__(self, "c_L", symmetric_scale(a) ** a)
        else:
            raise DomainError("rho must be 1 (one-sided) or 1/2 (symmetric)")
        if not self.c_L > 0:
            raise DomainError("scale coefficient must be positive")

    @property
    def one_sided(self) -> bool:
        return self.rho == 1.0

    @property
    def scale(self) -> float:
        """Multiplier turning the unit law (coefficient 1) into this one."""
        return self.c_L ** (1.0 / self.alpha)

    @cached_property
    def _levy(self):
        # symmetric case only; scipy's S1 parameterisation, beta = 0
        from scipy.stats import levy_stable

        return levy_stable(self.alpha, 0.0, loc=0.0, scale=self.scale)


def symmetric_scale(alpha: float) -> float:
    """``sigma`` for the symmetric limit when ``P(|X| > x) = x**-alpha`` and ``A = 2 x**alpha``.

    Each side carries Levy tail ``y**-alpha``; summing the two one-sided
    exponents gives ``|t|**alpha * 2 Gamma(1-alpha) cos(pi alpha/2)``.
    """
    return (2.0 * math.gamma(1 - alpha) * math.cos(math.pi * alpha / 2)) ** (1.0 / alpha)


def _kanter_A(u, alpha):
    """Zolotarev's function ``A(u)`` on (0, pi) for the unit one-sided law."""
    s = np.sin(u)
    return (np.sin(alpha * u) / s) ** (1.0 / (1 - alpha)) * np.sin((1 - alpha) * u) / np.sin(alpha * u)


def _log_kanter_A_reflected(v, alpha):
    """``log A(pi - v)``, accurate for tiny ``v`` (uses ``sin(pi - v) = sin v``)."""
    if v >= math.pi - 1e-7:
        return math.log(1 - alpha) + alpha / (1 - alpha) * math.log(alpha)  # A(0+)
    su = math.sin(v)
    if su == 0:
        return math.inf
    sa = math.sin(alpha * (math.pi - v))
    return (math.log(sa / su) / (1 - alpha) + math.log(math.sin((1 - alpha) * (math.pi - v)) / sa))


def _unit_density(y: float, alpha: float, relative: bool = False) -> float:
    """Density of the unit law (``c_L = 1``); ``relative`` drops the absolute tolerance.

    ``f(y) = alpha/((1-alpha) pi y) int t e^{-t} du`` with ``t = A(u) z`` and
    ``z = y**(-alpha/(1-alpha))``.  With ``v = pi - u = exp(w)`` the spike near
    ``u = pi`` (large ``y``) becomes a bump of width O(1) in ``w``.
    """
    if y <= 0:
        return 0.0
    k = 1.0 / (1 - alpha)
    log_z = -alpha * k * math.log(y)
    if log_z + _log_kanter_A_reflected(math.pi, alpha) > math.log(745.0):
        return 0.0  # exp(-A z) underflows for every angle
    pre = alpha * k / (math.pi * y)

    def log_t(w):
        return _log_kanter_A_reflected(math.exp(w), alpha) + log_z

    def integrand(w):
        lt = log_t(w)
        if lt > 6.6:  # t > 745
            return 0.0
        t = math.exp(lt)
        return t * math.exp(w - t)

    def level(c):
        # w at which A z = c (A decreases in w), clipped to the interval
        lc = math.log(c)
        lo_, hi_ = -700.0, math.log(math.pi)
        if log_t(hi_) >= lc:
            return hi_
        for _ in range(100):
            m = 0.5 * (lo_ + hi_)
            lo_, hi_ = (m, hi_) if log_t(m) > lc else (lo_, m)
        return 0.5 * (lo_ + hi_)

    w_lo = level(800.0)
    w_hi = math.log(math.pi)
    peak = level(1.0)
    pts = [peak] if w_lo < peak < w_hi else None
    epsabs = 0.0 if relative else QUAD_TOL / pre
    val, err, info = _quad(integrand, w_lo, w_hi, pts, epsabs)
    if info is not None:
        raise NumericalError(f"density quadrature did not converge at y={y}",
                             diagnostics={"y": y, "alpha": alpha, "abserr": err * pre, "message": info})
    return pre * val


def _quad(f, a, b, points, epsabs):
    with np.errstate(over="ignore", under="ignore"):
        out = integrate.quad(f, a, b, points=points, epsabs=epsabs, epsrel=1e-11, limit=400, full_output=1)
    val, err = out[0], out[1]
    msg = out[3] if len(out) > 3 else None
    if msg is not None and err > max(10 * epsabs, 1e-8 * abs(val)):
        return val, err, msg
    return val, err, None


def stable_density(law: StableLaw, y):
    """Density of the stable law at ``y`` (scalar or array).

    One-sided laws use the angular representation (quadrature tolerance 1e-9
    absolute); the symmetric law uses scipy's ``levy_stable``.
    """
    arr = np.asarray(y, dtype=float)
    if law.one_sided:
        s = law.scale
        out = np.array([_unit_density(v / s, law.alpha) / s for v in arr.ravel().tolist()])
        out = out.reshape(arr.shape)
    else:
        out = np.asarray(law._levy.pdf(arr), dtype=float)
        if not np.all(np.isfinite(out)):
            raise NumericalError("symmetric stable density not finite", diagnostics={"y": arr.tolist()})
    return float(out) if out.ndim == 0 else out


def sample_positive_stable(law: StableLaw, count: int, seed) -> np.ndarray:
    """Kanter's representation ``(A(U)/E)**((1-alpha)/alpha)``, rescaled to ``c_L``."""
    if not law.one_sided:
        raise PreconditionError("positive stable sampling needs rho = 1")
    if count < 1:
        raise PreconditionError("count must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.0, math.pi, count)
    e = rng.standard_exponential(count)
    a = law.alpha
    with np.errstate(divide="ignore"):
        y = (_kanter_A(u, a) / e) ** ((1 - a) / a)
    return law.scale * y


# ---------------------------------------------------------------------------
# negative moments and limit constants


def moment_closed_form(law: StableLaw, s: float) -> float:
    """``E(Y**-s) = Gamma(1 + s/alpha) / Gamma(1 + s) * c_L**(-s/alpha)``, ``s > -alpha``."""
    a = law.alpha
    if s <= -a:
        return math.inf
    return math.exp(special.gammaln(1 + s / a) - special.gammaln(1 + s) - (s / a) * math.log(law.c_L))


def moment_mellin(law: StableLaw, s: float) -> float:
    """``E(Y**-s)`` from the Laplace transform.

    ``s > 0``: ``Gamma(s)**-1 int lam**(s-1) exp(-c lam**alpha) dlam``.
    ``-alpha < s < 0`` (``r = -s``): ``r / Gamma(1-r) int lam**(-r-1) (1 - exp(-c lam**alpha)) dlam``.
    """
    a, c = law.alpha, law.c_L
    if s == 0:
        return 1.0
    if s <= -a:
        raise DomainError(f"E(Y^{-s}) diverges for s <= -alpha")
    # substitute lam = (t/c)**(1/alpha) so the exponential becomes exp(-t)
    j = 1.0 / a
    if s > 0:
        def f(t):
            return t ** (s * j - 1) * math.exp(-t)
        val = _two_piece(f) * j * c ** (-s * j)
        return val / math.gamma(s)
    r = -s

    def h(t):
        return t ** (-r * j - 1) * -math.expm1(-t)
    val = _two_piece(h) * j * c ** (r * j)
    return val * r / math.gamma(1 - r)


def _two_piece(f) -> float:
    v1, e1 = integrate.quad(f, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=400)
    v2, e2 = integrate.quad(f, 1.0, math.inf, epsabs=1e-13, epsrel=1e-12, limit=400)
    return v1 + v2


def moment_density(law: StableLaw, s: float) -> float:
    """``E(Y**-s) = int y**-s f(y) dy`` with ``f`` from :func:`stable_density` (nested quadrature).

    Integrated in ``t = log(y / scale)`` so both tails decay exponentially.
    """
    a, sc = law.alpha, law.scale
    if s <= -a:
        raise DomainError("E(Y^{-s}) diverges for s <= -alpha")

    def f(t):  # noqa: E306
        y = math.exp(t)
        return y ** (1 - s) * _unit_density(y, a, relative=True)

    # left tail of the unit density dies like exp(-c y**(-alpha/(1-alpha)))
    lo = -(math.log(800.0) * (1 - a) / a) - 2.0
    # right tail ~ y**(-alpha-s): need (alpha+s) t to exceed ~37
    hi = min(40.0 / (a + s), 690.0 / max(1 - s, 1.0))
    pieces = np.linspace(lo, hi, 9)
    total = 0.0
    for u, v in zip(pieces[:-1], pieces[1:]):
        val, _ = integrate.quad(f, u, v, epsabs=1e-12, epsrel=1e-10, limit=200)
        total += val
    # beyond exp(hi) the unit density is alpha y**(-alpha-1) / Gamma(1-alpha) to high order
    total += math.exp(-(a + s) * hi) * a / math.gamma(1 - a) / (a + s)
    return total * sc ** (-s)


@dataclass(frozen=True)
class LimitConstant:
    """A limit constant with both evaluation routes recorded."""

    value: float
    mellin: float
    density: float
    closed_form: float
    s: float

    @property
    def discrepancy(self) -> float:
        return abs(self.mellin - self.density) / abs(self.mellin)

    def as_dict(self) -> dict:
        return {"value": self.value, "route_mellin": self.mellin, "route_density": self.density,
                "closed_form": self.closed_form, "moment_order": self.s,
                "route_discrepancy": self.discrepancy}


def _dual_route(law: StableLaw, s: float) -> LimitConstant:
    if not law.one_sided:
        raise PreconditionError("limit constants need rho = 1")
    m1 = moment_mellin(law, s)
    m2 = moment_density(law, s)
    d = abs(m1 - m2) / abs(m1)
    if d > ROUTE_FAIL:
        raise NumericalError(f"evaluation routes disagree (relative {d:.3g})",
                             diagnostics={"mellin": m1, "density": m2, "s": s})
    a = law.alpha
    return LimitConstant(a * m1, a * m1, a * m2, a * moment_closed_form(law, s), s)


def limit_constant_srt(law: StableLaw, detail: bool = False):
    """``alpha E(Y**-alpha)``; equals ``sin(pi alpha)/pi`` under the default scale."""
    r = _dual_route(law, law.alpha)
    return r if detail else r.value


def limit_constant_green(law: StableLaw, beta: float, detail: bool = False):
    """``alpha E(Y**(-alpha (beta + 1)))`` for weights of index ``beta > -2``."""
    if not beta > -2:
        raise DomainError("beta must exceed -2: the moment E(Y^{-alpha(beta+1)}) is infinite")
    r = _dual_route(law, law.alpha * (beta + 1))
    return r if detail else r.value
