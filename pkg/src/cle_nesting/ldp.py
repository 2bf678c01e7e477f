"""Large-deviation primitives for scalar random variables.

The central object is :class:`MgfSpec`, a log moment generating function
``Λ(λ) = log E[exp(λX)]`` together with its finiteness domain and the
essential support ``(a, b)`` of ``X``.  On top of it sit the numerical
Fenchel-Legendre transform ``Λ*(x) = sup_λ (λx - Λ(λ))``, the first-passage
rate ``ν ↦ ν Λ*(1/ν)`` and its infimum over an interval.

Infinite rates are returned as ``math.inf``; every branch that can produce
one does so explicitly, and no arithmetic is ever performed on an infinite
intermediate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from scipy.optimize import brentq

from .errors import DomainError

__all__ = [
    "MgfSpec",
    "ConjugateResult",
    "legendre_transform",
    "rate_nu",
    "cramer_interval_rate",
    "golden_section_min",
    "gaussian_mgf",
    "symmetric_bernoulli_mgf",
]

INF = math.inf

# Relative step for central differences of Λ when no analytic derivative is given.
_FD_STEP = 1e-6
# Probe offset used to classify the behavior of Λ at a finite right endpoint.
_EDGE_PROBE = 1e-8
_EDGE_DIVERGENCE = 1e6
_MAX_DOUBLINGS = 1100


@dataclass(frozen=True)
class MgfSpec:
    """Log moment generating function of a real random variable.

    Parameters
    ----------
    func : callable
        ``λ ↦ Λ(λ)``, finite on the open interval ``domain``.
    domain : (float, float)
        Open finiteness interval ``(λ_lo, λ_hi)``; endpoints may be infinite.
    deriv : callable, optional
        Analytic ``λ ↦ Λ'(λ)``.  Central differences are used otherwise.
    support : (float, float)
        Essential infimum and supremum of the variable.
    """

    func: Callable[[float], float]
    domain: tuple[float, float] = (-INF, INF)
    deriv: Optional[Callable[[float], float]] = None
    support: tuple[float, float] = (-INF, INF)

    def __post_init__(self):
        lo, hi = self.domain
        if not lo < hi:
            raise DomainError(f"empty finiteness domain {self.domain}")
        a, b = self.support
        if a > b:
            raise DomainError(f"support endpoints out of order {self.support}")

    def __call__(self, lam: float) -> float:
        return self.func(lam)

    def contains(self, lam: float) -> bool:
        lo, hi = self.domain
        return lo < lam < hi

    @property
    def search_domain(self) -> tuple[float, float]:
        """Domain shrunk so that finite differences never leave it."""
        lo, hi = self.domain
        if self.deriv is not None:
            return lo, hi
        if math.isfinite(lo):
            lo = lo + _FD_STEP * max(1.0, abs(lo))
        if math.isfinite(hi):
            hi = hi - _FD_STEP * max(1.0, abs(hi))
        return lo, hi

    def derivative(self, lam: float) -> float:
        if self.deriv is not None:
            return self.deriv(lam)
        h = _FD_STEP * max(1.0, abs(lam))
        return (self.func(lam + h) - self.func(lam - h)) / (2.0 * h)

    def base_point(self) -> float:
        """A point of the search domain, 0 whenever possible."""
        lo, hi = self.search_domain
        if lo < 0.0 < hi:
            return 0.0
        if math.isfinite(lo) and math.isfinite(hi):
            return 0.5 * (lo + hi)
        return (lo + 1.0) if math.isinf(hi) else (hi - 1.0)

    def mean(self) -> float:
        """``Λ'(0)``, the mean of the underlying variable."""
        if not self.contains(0.0):
            raise DomainError("0 is not an interior point of the domain")
        return self.derivative(0.0)


@dataclass(frozen=True)
class ConjugateResult:
    """Value of ``Λ*(x)`` and where the supremum is attained.

    ``boundary`` is ``None`` for an interior maximizer, ``"outside"`` when
    ``x`` lies off the support (value is infinite), ``"infinity"`` when the
    supremum is only approached as ``λ → ±∞`` and ``"domain_edge"`` when it
    sits on a finite endpoint of the domain (the affine extension).
    """

    value: float
    maximizer: Optional[float]
    boundary: Optional[str] = None
    residual: float = 0.0

    @property
    def is_infinite(self) -> bool:
        return self.value == INF


def _limit_along(mgf: MgfSpec, x: float, direction: int, start: float) -> ConjugateResult:
    # λx - Λ(λ) is concave; along the unbounded direction it increases to its supremum.
    prev = start * x - mgf(start)
    lam = start
    for k in range(_MAX_DOUBLINGS):
        lam = start + direction * 2.0**k
        try:
            cur = lam * x - mgf(lam)
        except (OverflowError, ValueError):
            break
        if not math.isfinite(cur):
            break
        if cur > _EDGE_DIVERGENCE:
            return ConjugateResult(INF, None, "infinity")
        if abs(cur - prev) <= 1e-13 * max(1.0, abs(cur)):
            return ConjugateResult(max(cur, 0.0), None, "infinity")
        prev = cur
    # Increments never vanished: logarithmic or slower divergence.
    return ConjugateResult(INF, None, "infinity")


def _edge_is_divergent(mgf: MgfSpec, edge: float, inner: float) -> bool:
    width = abs(edge - inner) if math.isfinite(inner) else max(1.0, abs(edge))
    probe = edge - math.copysign(_EDGE_PROBE * width, edge - inner)
    try:
        v = mgf(probe)
    except (OverflowError, ValueError, ZeroDivisionError):
        return True
    return (not math.isfinite(v)) or v > _EDGE_DIVERGENCE


def _candidates(base: float, edge: float, direction: int):
    """Points marching from ``base`` toward ``edge`` (possibly infinite)."""
    if math.isinf(edge):
        for k in range(_MAX_DOUBLINGS):
            yield base + direction * 2.0**k
        return
    gap = edge - base
    prev = None
    for k in range(1, _MAX_DOUBLINGS):
        lam = edge - gap * 2.0**-k
        if lam == prev or lam == edge:
            return
        prev = lam
        yield lam


def legendre_transform(mgf: MgfSpec, x: float) -> ConjugateResult:
    """Fenchel-Legendre transform ``sup_λ (λx - Λ(λ))`` at a finite ``x``.

    Interior maximizers are found by bracketing the root of ``Λ'(λ) = x``
    outward from ``λ = 0`` and refining with Brent's method.  When ``Λ'``
    stays below (above) ``x`` up to a finite domain endpoint at which Λ is
    finite, the transform is the affine extension through that endpoint.
    """
    if not math.isfinite(x):
        raise DomainError("x must be finite")
    a, b = mgf.support
    if x < a or x > b:
        return ConjugateResult(INF, None, "outside")
    if a == b:
        # Point mass: Λ(λ) = λa, so the transform vanishes at a.
        return ConjugateResult(0.0, 0.0)

    base = mgf.base_point()
    lo, hi = mgf.search_domain
    if (x == b and math.isinf(hi)) or (x == a and math.isinf(lo)):
        # At a support endpoint the supremum -log P[X = x] is only a limit.
        return _limit_along(mgf, x, 1 if x == b else -1, base)
    d0 = mgf.derivative(base)
    if d0 == x:
        return ConjugateResult(max(base * x - mgf(base), 0.0), base)
    direction = 1 if d0 < x else -1
    edge = hi if direction > 0 else lo

    prev = base
    bracket = None
    for lam in _candidates(base, edge, direction):
        try:
            d = mgf.derivative(lam)
        except (OverflowError, ValueError, ZeroDivisionError):
            break
        if (d - x) * direction >= 0.0:
            bracket = (prev, lam) if prev < lam else (lam, prev)
            break
        prev = lam

    if bracket is None:
        if math.isinf(edge):
            return _limit_along(mgf, x, direction, prev)
        # Λ' never reached x before the finite edge: affine extension.
        if _edge_is_divergent(mgf, edge, base) and abs(edge - prev) > 1e-12 * max(1.0, abs(edge)):
            raise DomainError("Λ diverges at the domain edge but Λ' stays bounded")
        value = x * prev - mgf(prev)
        return ConjugateResult(max(value, 0.0), edge, "domain_edge")

    lam_lo, lam_hi = bracket
    f = lambda t: mgf.derivative(t) - x  # noqa: E731
    f_lo, f_hi = f(lam_lo), f(lam_hi)
    if f_lo == 0.0:
        root = lam_lo
    elif f_hi == 0.0:
        root = lam_hi
    else:
        root = brentq(f, lam_lo, lam_hi, xtol=1e-300, rtol=4.0 * 2.0**-52, maxiter=500)
    value = root * x - mgf(root)
    residual = abs(mgf.derivative(root) - x)
    return ConjugateResult(max(value, 0.0), root, None, residual)


def rate_nu(mgf: MgfSpec, nu: float) -> float:
    """First-passage rate ``ν Λ*(1/ν)``, extended to ``ν = 0`` by ``sup domain``."""
    if nu < 0.0:
        raise DomainError("nu must be nonnegative")
    if nu == 0.0:
        return mgf.domain[1]
    res = legendre_transform(mgf, 1.0 / nu)
    if res.is_infinite:
        return INF
    return nu * res.value


def golden_section_min(f: Callable[[float], float], lo: float, hi: float,
                       xtol: float = 1e-10, rtol: float = 0.0, maxiter: int = 500):
    """Minimize a unimodal ``f`` on ``[lo, hi]``; returns ``(x, f(x))``.

    Infinite values are allowed and compare as larger than any finite one.
    """
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if b - a <= max(xtol, rtol * abs(b)):
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def cramer_interval_rate(mgf: MgfSpec, nu1: float, nu2: float) -> float:
    """``inf_{ν ∈ [ν1, ν2]} ν Λ*(1/ν)`` for ``0 < ν1 ≤ ν2``."""
    if nu1 <= 0.0:
        raise DomainError("nu1 must be positive")
    if nu1 > nu2:
        raise DomainError("window must satisfy nu1 <= nu2")
    if nu1 == nu2:
        return rate_nu(mgf, nu1)
    if mgf.contains(0.0):
        m = mgf.mean()
        if m > 0.0 and nu1 <= 1.0 / m <= nu2:
            return 0.0
    # Restrict to where 1/ν lies in the support, i.e. the finiteness region.
    a, b = mgf.support
    lo = max(nu1, 1.0 / b) if b > 0.0 else INF
    hi = min(nu2, 1.0 / a) if a > 0.0 else nu2
    if lo > hi:
        return INF
    g = lambda nu: rate_nu(mgf, nu)  # noqa: E731
    if lo == hi:
        return g(lo)
    _, best = golden_section_min(g, lo, hi, xtol=0.0, rtol=1e-10)
    return min(best, g(lo), g(hi))


def gaussian_mgf(mean: float = 0.0, var: float = 1.0) -> MgfSpec:
    return MgfSpec(
        func=lambda lam: mean * lam + 0.5 * var * lam * lam,
        deriv=lambda lam: mean + var * lam,
    )


def _log_cosh(t: float) -> float:
    t = abs(t)
    return t + math.log1p(math.exp(-2.0 * t)) - math.log(2.0)


def symmetric_bernoulli_mgf(sigma: float = 1.0) -> MgfSpec:
    """log-MGF ``log cosh(σ λ)`` of the ±σ coin."""
    return MgfSpec(
        func=lambda lam: _log_cosh(sigma * lam),
        deriv=lambda lam: sigma * math.tanh(sigma * lam),
        support=(-sigma, sigma),
    )
