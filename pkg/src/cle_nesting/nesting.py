"""Nesting-rate function γ_κ, the constants ν_typical and ν_max, and the
dimension spectrum ``ν ↦ 2 - γ_κ(ν)`` of points with nesting density ν."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError
from .ldp import rate_nu
from .radius_law import KappaParam, _as_param, _check_lam, lambda_kappa, lambda_kappa_deriv, mean_T, radius_law

__all__ = [
    "Empty",
    "EMPTY",
    "NestingCurve",
    "gamma_nu",
    "nu_typical",
    "nu_max",
    "dim_phi",
    "curve_parametric",
    "second_derivative_check",
    "nesting_curve",
    "default_lambda_grid",
]


class Empty:
    """Marker for a set that is almost surely empty (no dimension)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "EMPTY"

    def __str__(self):
        return "empty"

    def __bool__(self):
        return False

    def __reduce__(self):
        return (Empty, ())


EMPTY = Empty()


def gamma_nu(p, nu: float) -> float:
    """γ_κ(ν) = ν Λ_κ*(1/ν), equal to ``λ_c`` at ν = 0."""
    p = _as_param(p)
    if nu < 0.0:
        raise DomainError("nu must be nonnegative")
    if nu == 0.0:
        return p.lambda_crit
    return rate_nu(radius_law(p.kappa).as_mgf, nu)


def nu_typical(p) -> float:
    """Almost-everywhere nesting density ``1/E[T]``."""
    return 1.0 / mean_T(p)


@lru_cache(maxsize=None)
def _nu_max(kappa: float) -> float:
    p = KappaParam(kappa)
    lo = nu_typical(p)
    hi = 2.0 * lo
    while gamma_nu(p, hi) <= 2.0:
        lo, hi = hi, 2.0 * hi
    return brentq(lambda nu: gamma_nu(p, nu) - 2.0, lo, hi, xtol=1e-15, rtol=4.0 * 2.0**-52)


def nu_max(p) -> float:
    """The unique ν ≥ 0 with γ_κ(ν) = 2; it lies to the right of ν_typical."""
    return _nu_max(_as_param(p).kappa)


def dim_phi(p, nu: float):
    """Hausdorff dimension ``2 - γ_κ(ν)`` of Φ_ν, or :data:`EMPTY` beyond ν_max."""
    p = _as_param(p)
    if nu < 0.0:
        raise DomainError("nu must be nonnegative")
    if nu > nu_max(p):
        return EMPTY
    if nu == 0.0:
        return p.gasket_dim
    return 2.0 - gamma_nu(p, nu)


def curve_parametric(p, lam_grid) -> list[tuple[float, float]]:
    """Points ``(1/Λ'(λ), λ - Λ(λ)/Λ'(λ))`` on the graph of γ_κ."""
    p = _as_param(p)
    out = []
    for lam in lam_grid:
        lam = float(lam)
        d = lambda_kappa_deriv(p, lam)
        out.append((1.0 / d, lam - lambda_kappa(p, lam) / d))
    return out


def _convexity_kernel(u: float) -> float:
    # sin²t·tan t / (2t - sin 2t) as a function of u = t², continued to u < 0.
    if abs(u) < 1e-4:
        return 0.75 + 3.0 * u / 20.0 + 23.0 * u * u / 350.0 + 283.0 * u**3 / 10500.0
    if u > 0.0:
        t = math.sqrt(u)
        return math.sin(t) ** 2 * math.tan(t) / (2.0 * t - math.sin(2.0 * t))
    t = math.sqrt(-u)
    return math.sinh(t) ** 2 * math.tanh(t) / (math.sinh(2.0 * t) - 2.0 * t)


def second_derivative_check(p, lam: float) -> float:
    """Closed-form d²γ_κ/dν² at ``ν = 1/Λ_κ'(λ)``.

    Evaluates 8π² sin²t tan t / (2πR - κ sin 2t) with R = √(8κλ + (κ-4)²) and
    t = πR/κ, i.e. (8π²/κ)·sin²t tan t/(2t - sin 2t), continued hyperbolically
    when the radicand is negative.
    """
    p = _as_param(p)
    _check_lam(p, lam)
    k = p.kappa
    u = (math.pi / k) ** 2 * (8.0 * k * lam + (k - 4.0) ** 2)
    return 8.0 * math.pi**2 / k * _convexity_kernel(u)


def default_lambda_grid(p, n: int = 512) -> np.ndarray:
    """λ grid for curve output, log-spaced toward λ_c so that ν → 0 is resolved.

    Half the points march down from ``λ_c`` at gaps ``10^-8 .. λ_c + 1``;
    the rest cover ``[-60, 0)`` deep into the large-ν side.  λ = 0 (the
    point ν_typical) is always included.
    """
    p = _as_param(p)
    lc = p.lambda_crit
    n_near = n // 2
    gaps = np.logspace(-8, math.log10(lc + 1.0), n_near)
    near = lc - gaps
    far = -np.logspace(math.log10(60.0), -3, n - n_near)
    grid = np.unique(np.concatenate([near, far, [0.0]]))
    return grid[grid < lc]


@dataclass(frozen=True)
class NestingCurve:
    """Samples ``(ν, γ_κ(ν), dim)`` along the dimension spectrum, ordered by ν."""

    kappa: KappaParam
    points: tuple
    nu_typical: float
    nu_max: float

    @property
    def gasket_dim(self) -> float:
        return self.kappa.gasket_dim


def nesting_curve(p, lam_grid=None) -> NestingCurve:
    """Sample the spectrum through the parametrization, with direct γ as the value."""
    p = _as_param(p)
    if lam_grid is None:
        lam_grid = default_lambda_grid(p)
    pts = []
    for nu, _ in curve_parametric(p, lam_grid):
        g = gamma_nu(p, nu)
        pts.append((nu, g, dim_phi(p, nu)))
    pts.sort(key=lambda t: t[0])
    return NestingCurve(p, tuple(pts), nu_typical(p), nu_max(p))
