"""Law of the log conformal radius increment ``T`` between nested CLE loops.

``T`` has log moment generating function

    Λ_κ(λ) = log(-cos(4π/κ)) - log g(s),   s = (1 - 4/κ)^2 + 8λ/κ,

with ``g(s) = cos(π√s)`` for ``s ≥ 0`` and ``cosh(π√-s)`` for ``s < 0``,
finite for ``λ < 1 - 2/κ - 3κ/32``.  Its density is the alternating
exponential series

    f(x) = C Σ_j (-1)^j (j + 1/2) exp(-c_j x),
    C = -κ cos(4π/κ) / (4π),  c_j = ((j + 1/2)^2 - (1 - 4/κ)^2) κ/8,

which integrates term by term to the CDF and tilts term by term under
``exp(λx - Λ_κ(λ))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConvergenceError, DomainError
from .ldp import MgfSpec

__all__ = [
    "KappaParam",
    "RadiusLaw",
    "radius_law",
    "lambda_kappa",
    "lambda_kappa_deriv",
    "mean_T",
    "density_T",
    "cdf_T",
    "sample_T",
    "X_FLOOR",
]

X_FLOOR = 1e-3
DENSITY_TOL = 1e-15
MIN_TERMS = 8
MAX_TERMS = 100_000
N_KNOTS = 4096
# Survival level at which the interpolation table stops and the lead term takes over.
TAIL_SURVIVAL = 1e-13
_SEAM = 1e-6


@dataclass(frozen=True)
class KappaParam:
    """CLE parameter κ ∈ (8/3, 8)."""

    kappa: float

    def __post_init__(self):
        k = float(self.kappa)
        if not (8.0 / 3.0 < k < 8.0):
            raise DomainError(f"kappa must lie in (8/3, 8), got {self.kappa}")
        object.__setattr__(self, "kappa", k)

    @property
    def lambda_crit(self) -> float:
        """Blow-up point ``1 - 2/κ - 3κ/32`` of Λ_κ."""
        k = self.kappa
        return 1.0 - 2.0 / k - 3.0 * k / 32.0

    @property
    def gasket_dim(self) -> float:
        k = self.kappa
        return 1.0 + 2.0 / k + 3.0 * k / 32.0


def _as_param(p) -> KappaParam:
    return p if isinstance(p, KappaParam) else KappaParam(p)


def _s_of(p: KappaParam, lam: float) -> float:
    k = p.kappa
    return (1.0 - 4.0 / k) ** 2 + 8.0 * lam / k


def _g(s: float) -> float:
    if s >= 0.0:
        return math.cos(math.pi * math.sqrt(s))
    return math.cosh(math.pi * math.sqrt(-s))


def _log_g(s: float) -> float:
    if s >= 0.0:
        return math.log(math.cos(math.pi * math.sqrt(s)))
    u = math.pi * math.sqrt(-s)
    # log cosh without overflow
    return u + math.log1p(math.exp(-2.0 * u)) - math.log(2.0)


def _h(s: float) -> float:
    """``tan(π√s)/√s``, continued through ``s = 0`` by ``tanh(π√-s)/√-s``."""
    if abs(s) < _SEAM:
        z2 = math.pi**2 * s
        return math.pi * (1.0 + z2 / 3.0 + 2.0 * z2 * z2 / 15.0)
    if s > 0.0:
        r = math.sqrt(s)
        return math.tan(math.pi * r) / r
    r = math.sqrt(-s)
    return math.tanh(math.pi * r) / r


def _check_lam(p: KappaParam, lam: float):
    if not lam < p.lambda_crit:
        raise DomainError(f"lambda must be < {p.lambda_crit}, got {lam}")


def lambda_kappa(p, lam: float) -> float:
    """Λ_κ(λ) = log E[exp(λT)]."""
    p = _as_param(p)
    _check_lam(p, lam)
    return math.log(-math.cos(4.0 * math.pi / p.kappa)) - _log_g(_s_of(p, lam))


def lambda_kappa_deriv(p, lam: float) -> float:
    """Λ_κ'(λ) = (4π/κ) h(s)."""
    p = _as_param(p)
    _check_lam(p, lam)
    return 4.0 * math.pi / p.kappa * _h(_s_of(p, lam))


def _series_sum(x: np.ndarray, coef: np.ndarray, rates: np.ndarray, tol: float,
                with_abs: bool = False):
    """``Σ_j (-1)^j coef_j exp(-rates_j x)`` with per-point truncation.

    A point stops accumulating once its next term falls below ``tol`` and at
    least ``MIN_TERMS`` terms are in.  ``with_abs`` also returns ``Σ_j |term_j|``,
    the scale of the cancellation error.
    """
    out = np.zeros_like(x)
    mag = np.zeros_like(x) if with_abs else None
    idx = np.arange(x.size)
    xs = x
    for j in range(MAX_TERMS):
        term = coef[j] * np.exp(-rates[j] * xs)
        if j >= MIN_TERMS:
            keep = term >= tol
            if not keep.all():
                idx, xs, term = idx[keep], xs[keep], term[keep]
                if idx.size == 0:
                    return (out, mag) if with_abs else out
        if j % 2:
            out[idx] -= term
        else:
            out[idx] += term
        if with_abs:
            mag[idx] += term
    raise ConvergenceError(f"density series did not reach {tol} within {MAX_TERMS} terms")


@dataclass(frozen=True)
class RadiusLaw:
    """The law of ``T`` for one κ, optionally exponentially tilted by ``tilt``.

    The tilted law has density ``exp(tilt·x - Λ_κ(tilt)) f(x)``; each series
    exponent ``c_j`` becomes ``c_j - tilt`` and stays positive because
    ``tilt < λ_c = c_0``.
    """

    param: KappaParam
    tilt: float = 0.0
    density_tolerance: float = DENSITY_TOL
    _table: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "param", _as_param(self.param))
        _check_lam(self.param, self.tilt)
        k = self.param.kappa
        q2 = (1.0 - 4.0 / k) ** 2
        j = np.arange(MAX_TERMS + 1, dtype=float) + 0.5
        rates = (j * j - q2) * k / 8.0 - self.tilt
        scale = -k * math.cos(4.0 * math.pi / k) / (4.0 * math.pi)
        scale *= math.exp(-lambda_kappa(self.param, self.tilt)) if self.tilt != 0.0 else 1.0
        object.__setattr__(self, "_rates", rates)
        object.__setattr__(self, "_dens_coef", scale * j)
        object.__setattr__(self, "_surv_coef", scale * j / rates)

    # -- analytic quantities ---------------------------------------------------

    @property
    def kappa(self) -> float:
        return self.param.kappa

    @property
    def as_mgf(self) -> MgfSpec:
        """MgfSpec view of the (untilted) law: domain (-∞, λ_c), support (0, ∞)."""
        p = self.param
        return _mgf_for(p.kappa)

    @property
    def mean(self) -> float:
        """Mean of this (possibly tilted) law, ``Λ_κ'(tilt)``."""
        return lambda_kappa_deriv(self.param, self.tilt)

    def log_mgf(self, lam: float) -> float:
        """log-MGF of this law: ``Λ_κ(tilt + λ) - Λ_κ(tilt)``."""
        return lambda_kappa(self.param, self.tilt + lam) - lambda_kappa(self.param, self.tilt)

    @property
    def tail_rate(self) -> float:
        """Exponential decay rate of the survival function, ``λ_c - tilt``."""
        return float(self._rates[0])

    # -- density and CDF ------------------------------------------------------

    def density(self, x):
        """Density at ``x > 0`` (scalar or array)."""
        arr = np.asarray(x, dtype=float)
        if np.any(arr <= 0.0):
            raise DomainError("density is defined for x > 0")
        flat = arr.ravel()
        vals = _series_sum(flat, self._dens_coef, self._rates, self.density_tolerance)
        vals = np.where((vals < 0.0) & (vals > -1e-12), 0.0, vals)
        out = vals.reshape(arr.shape)
        return float(out) if np.ndim(x) == 0 else out

    def _survival_series(self, x: np.ndarray) -> np.ndarray:
        return _series_sum(x, self._surv_coef, self._rates, self.density_tolerance)

    def survival(self, x):
        """``P[T > x]``."""
        arr = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
        out = np.ones_like(arr)
        hi = arr >= X_FLOOR
        if hi.any():
            out[hi] = self._survival_series(arr[hi])
        low = (arr > 0.0) & ~hi
        if low.any():
            out[low] = 1.0 - self._low_cdf(arr[low])
        out = np.clip(out, 0.0, 1.0)
        return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))

    def cdf(self, x):
        """``P[T ≤ x]``; the mass below ``X_FLOOR`` is a cubic extrapolation."""
        s = self.survival(x)
        return 1.0 - s

    def _low_cdf(self, x: np.ndarray) -> np.ndarray:
        knots = np.linspace(X_FLOOR, 4.0 * X_FLOOR, 4)
        vals = 1.0 - self._survival_series(knots)
        coef = np.polyfit(knots, vals, 3)
        f_floor = max(vals[0], 0.0)
        return np.clip(np.polyval(coef, x), 0.0, f_floor)

    # -- sampling -------------------------------------------------------------

    def _inverse_table(self):
        if self._table is not None:
            return self._table
        # Table ends where the lead-term survival reaches TAIL_SURVIVAL.
        a0 = self._surv_coef[0]
        x_max = max(math.log(a0 / TAIL_SURVIVAL) / self.tail_rate, 10 * X_FLOOR)
        u = np.linspace(0.0, 1.0, N_KNOTS)
        xs = X_FLOOR + (x_max - X_FLOOR) * u**2
        y = -np.log(np.clip(self._survival_series(xs), 1e-300, None))
        # Interpolate x against log(-log S); drop the flat onset and any rounding dips.
        keep = y > 1e-10
        xs, y = xs[keep], y[keep]
        inc = np.concatenate([[True], y[1:] > np.maximum.accumulate(y)[:-1]])
        xs, y = xs[inc], y[inc]
        spline = CubicSpline(np.log(y), xs)
        table = {"y_min": float(y[0]), "y_max": float(y[-1]), "x_min": float(xs[0]),
                 "spline": spline, "a0": float(a0)}
        object.__setattr__(self, "_table", table)
        return table

    def _invert_survival(self, v: np.ndarray) -> np.ndarray:
        """Solve ``P[T > x] = v`` for each ``v ∈ (0, 1]``."""
        tab = self._inverse_table()
        target = -np.log(v)
        x = np.empty_like(target)
        lowv = target <= tab["y_min"]
        tail = target >= tab["y_max"]
        mid = ~lowv & ~tail
        x[lowv] = tab["x_min"]
        x[mid] = tab["spline"](np.log(target[mid]))
        x[tail] = (math.log(tab["a0"]) + target[tail]) / self.tail_rate
        # Newton on log-survival from the interpolated start.
        work = np.flatnonzero(~lowv)
        for _ in range(12):
            if work.size == 0:
                break
            xw = x[work]
            s, s_mag = _series_sum(xw, self._surv_coef, self._rates, self.density_tolerance,
                                   with_abs=True)
            f = _series_sum(xw, self._dens_coef, self._rates, self.density_tolerance)
            ok = (s > 0.0) & (f > 0.0)
            step = np.zeros_like(xw)
            step[ok] = (np.log(s[ok]) + target[work][ok]) * s[ok] / f[ok]
            new = np.maximum(xw + step, 0.5 * xw)
            x[work] = new
            # S carries rounding error ~eps·Σ|terms|; x is pinned at best to that over f.
            floor = np.where(f > 0.0, 8e-16 * s_mag / np.where(f > 0.0, f, 1.0), np.inf)
            done = np.abs(new - xw) <= np.maximum(1e-12 * np.maximum(1.0, xw), floor)
            work = work[~done]
        if work.size:
            raise ConvergenceError("inverse-CDF polish did not converge")
        return x

    def sample(self, rng: np.random.Generator, size=None):
        """Exact inverse-CDF draws from this (possibly tilted) law."""
        n = 1 if size is None else int(np.prod(size))
        v = 1.0 - rng.random(n)
        x = self._invert_survival(v)
        if size is None:
            return float(x[0])
        return x.reshape(size)


@lru_cache(maxsize=None)
def _mgf_for(kappa: float) -> MgfSpec:
    p = KappaParam(kappa)
    return MgfSpec(
        func=lambda lam: lambda_kappa(p, lam),
        deriv=lambda lam: lambda_kappa_deriv(p, lam),
        domain=(-math.inf, p.lambda_crit),
        support=(0.0, math.inf),
    )


@lru_cache(maxsize=64)
def radius_law(kappa: float, tilt: float = 0.0) -> RadiusLaw:
    """Shared immutable :class:`RadiusLaw` for ``(κ, tilt)``."""
    return RadiusLaw(KappaParam(kappa), float(tilt))


def mean_T(p) -> float:
    """``E[T] = Λ_κ'(0)``."""
    return lambda_kappa_deriv(_as_param(p), 0.0)


def density_T(p, x):
    return radius_law(_as_param(p).kappa).density(x)


def cdf_T(p, x):
    return radius_law(_as_param(p).kappa).cdf(x)


def sample_T(p, rng: np.random.Generator, tilt: float = 0.0, size=None):
    """Draw from the law of ``T`` tilted by ``exp(tilt·x - Λ_κ(tilt))``."""
    p = _as_param(p)
    _check_lam(p, tilt)
    return radius_law(p.kappa, float(tilt)).sample(rng, size)
