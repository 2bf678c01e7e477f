"""Weighted loop counts: the joint rate γ_κ(α, ν), its minimizer over ν,
the weighted dimension and the κ = 4 Gaussian-free-field closed forms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError
from .ldp import INF, MgfSpec, golden_section_min, legendre_transform
from .nesting import EMPTY, gamma_nu, nu_typical
from .radius_law import KappaParam, _as_param

__all__ = [
    "WeightLaw",
    "GffParams",
    "gamma_joint",
    "minimize_nu",
    "dim_weighted",
    "gff_dim_closed",
    "gff_nu_profile",
    "gff_saddle",
    "lambda_4",
    "GFF_SIGMA",
]

GFF_SIGMA = math.sqrt(math.pi / 2.0)
_ZERO_LIMIT_STEPS = 60
_DIVERGENCE = 1e6
_WALL = 1e-12


class WeightLaw:
    """Law μ of the i.i.d. loop weights.

    Either finitely many atoms (``values``, ``probs``) or an analytic
    :class:`MgfSpec`, whose support must be declared on the spec itself.
    """

    def __init__(self, values: Optional[Sequence[float]] = None,
                 probs: Optional[Sequence[float]] = None, mgf: Optional[MgfSpec] = None,
                 support: Optional[tuple[float, float]] = None):
        if (values is None) == (mgf is None):
            raise ValueError("give either atoms or an analytic mgf")
        if mgf is not None:
            if support is None:
                raise ValueError("analytic weight laws must declare their support")
            self.values = None
            self.probs = None
            self.mgf = MgfSpec(mgf.func, mgf.domain, mgf.deriv, tuple(map(float, support)))
            return
        v = np.asarray(values, dtype=float)
        pr = np.asarray(probs, dtype=float)
        if v.shape != pr.shape or v.ndim != 1 or v.size == 0:
            raise ValueError("values and probs must be equal-length 1-d sequences")
        if np.any(pr <= 0.0):
            raise ValueError("atom probabilities must be positive")
        if abs(pr.sum() - 1.0) > 1e-12:
            raise ValueError(f"atom probabilities sum to {pr.sum()}, not 1")
        order = np.argsort(v)
        self.values = v[order]
        self.probs = pr[order]
        self._logp = np.log(self.probs)
        self.mgf = MgfSpec(
            func=self._atom_log_mgf,
            deriv=self._atom_log_mgf_deriv,
            support=(float(self.values[0]), float(self.values[-1])),
        )

    @classmethod
    def point_mass(cls, value: float = 1.0) -> "WeightLaw":
        return cls([value], [1.0])

    @classmethod
    def signed_bernoulli(cls, sigma: float = GFF_SIGMA) -> "WeightLaw":
        return cls([-sigma, sigma], [0.5, 0.5])

    @classmethod
    def parse_atoms(cls, text: str) -> "WeightLaw":
        """Parse ``"v:p,v:p,..."``."""
        vals, probs = [], []
        for item in text.split(","):
            item = item.strip()
            if not item:
                continue
            v, sep, q = item.partition(":")
            if not sep:
                raise ValueError(f"atom {item!r} is not of the form value:prob")
            vals.append(float(v))
            probs.append(float(q))
        return cls(vals, probs)

    @property
    def is_atomic(self) -> bool:
        return self.values is not None

    @property
    def support(self) -> tuple[float, float]:
        return self.mgf.support

    def _atom_log_mgf(self, eta: float) -> float:
        if self.values.size == 1:
            return eta * float(self.values[0])
        return float(logsumexp(eta * self.values + self._logp))

    def _atom_log_mgf_deriv(self, eta: float) -> float:
        if self.values.size == 1:
            return float(self.values[0])
        z = eta * self.values + self._logp
        w = np.exp(z - z.max())
        return float(np.dot(w, self.values) / w.sum())

    def tilted_probs(self, eta: float) -> np.ndarray:
        z = eta * self.values + self._logp
        w = np.exp(z - z.max())
        return w / w.sum()

    def conjugate(self, x: float) -> float:
        return legendre_transform(self.mgf, x).value

    def __repr__(self):
        if self.is_atomic:
            atoms = ", ".join(f"{v:g}:{q:g}" for v, q in zip(self.values, self.probs))
            return f"WeightLaw([{atoms}])"
        return f"WeightLaw(mgf={self.mgf!r})"


@dataclass(frozen=True)
class GffParams:
    """Magnitude σ of the ±σ loop weights."""

    sigma: float = GFF_SIGMA

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise DomainError("sigma must be positive")

    @property
    def is_gff(self) -> bool:
        """True for σ = √(π/2), the weights that build the free field."""
        return math.isclose(self.sigma, GFF_SIGMA, rel_tol=1e-14)


def _weight_term(mu: WeightLaw, alpha: float, nu: float) -> float:
    res = legendre_transform(mu.mgf, alpha / nu)
    return INF if res.is_infinite else nu * res.value


def _joint_positive(p: KappaParam, mu: WeightLaw, alpha: float, nu: float) -> float:
    w = _weight_term(mu, alpha, nu)
    if w == INF:
        return INF
    g = gamma_nu(p, nu)
    return INF if g == INF else w + g


def gamma_joint(p, mu: WeightLaw, alpha: float, nu: float) -> float:
    """γ_κ(α, ν) = ν Λ_μ*(α/ν) + ν Λ_κ*(1/ν), with the ν ↓ 0 limits at ν = 0."""
    p = _as_param(p)
    if nu < 0.0:
        raise DomainError("nu must be nonnegative")
    if nu > 0.0:
        return _joint_positive(p, mu, alpha, nu)
    if alpha == 0.0:
        return p.lambda_crit
    prev = None
    for k in range(1, _ZERO_LIMIT_STEPS + 1):
        cur = _joint_positive(p, mu, alpha, 2.0**-k)
        if cur == INF or cur > _DIVERGENCE:
            return INF
        if prev is not None and abs(cur - prev) <= 1e-12 * max(1.0, abs(cur)):
            return cur
        prev = cur
    return prev


def _reflect(mu: WeightLaw, alpha: float):
    """Express the problem with α > 0: flip the weights when α < 0."""
    a, b = mu.support
    if alpha >= 0.0:
        return alpha, a, b
    return -alpha, -b, -a


def _finiteness_bracket(alpha: float, a: float, b: float, nu_hi_default: float):
    # α > 0: α/ν must stay in [a, b], i.e. ν ∈ [α/b, α/max(0, a)].
    lo = alpha / b if math.isfinite(b) else 0.0
    hi = alpha / a if a > 0.0 else INF
    lo = lo * (1.0 + _WALL) if lo > 0.0 else _WALL * nu_hi_default
    if math.isfinite(hi):
        hi = hi * (1.0 - _WALL)
    return lo, hi


def _expand_right(f, lo: float, start: float) -> float:
    """Grow an upper bracket end until the convex ``f`` is increasing past it."""
    hi = max(start, 2.0 * lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(hi) > f(mid):
            return hi
        hi *= 2.0
    return hi


def minimize_nu(p, mu: WeightLaw, alpha: float, bracket=None):
    """Minimize ``ν ↦ γ_κ(α, ν)`` over ν ≥ 0; returns ``(ν₀, γ_min)``.

    ``bracket`` overrides the search interval (used to check that the
    minimizer does not depend on where the search starts).
    """
    p = _as_param(p)
    f = lambda nu: gamma_joint(p, mu, alpha, nu)  # noqa: E731
    a, b = mu.support
    nu_typ = nu_typical(p)

    if alpha == 0.0:
        w0 = mu.conjugate(0.0)
        if w0 == INF:
            return 0.0, p.lambda_crit
        if w0 == 0.0:
            return nu_typ, 0.0
        # The weight term adds w0·ν, pushing the minimizer below ν_typical.
        lo, hi = ((_WALL * nu_typ, nu_typ) if bracket is None else bracket)
        nu0, val = golden_section_min(f, lo, hi, xtol=1e-10)
        return nu0, val

    alpha_pos, a_r, b_r = _reflect(mu, alpha)
    if b_r <= 0.0:
        # Weights never carry the sign of α.
        return 0.0, INF
    if a_r == b_r:
        nu0 = alpha_pos / b_r
        return nu0, f(nu0)

    if bracket is None:
        lo, hi = _finiteness_bracket(alpha_pos, a_r, b_r, nu_typ)
        if math.isinf(hi):
            hi = _expand_right(f, lo, max(4.0 * nu_typ, 4.0 * lo))
    else:
        lo, hi = bracket
    nu0, val = golden_section_min(f, lo, hi, xtol=1e-10)
    return nu0, val


def dim_weighted(p, mu: WeightLaw, alpha: float):
    """``2 - min_ν γ_κ(α, ν)``, or :data:`EMPTY` when that minimum exceeds 2."""
    _, g = minimize_nu(p, mu, alpha)
    if g > 2.0:
        return EMPTY
    return 2.0 - g


def gff_dim_closed(g: GffParams, alpha: float) -> float:
    """max(0, 2 - π²α²/(2σ²))."""
    return max(0.0, 2.0 - math.pi**2 * alpha**2 / (2.0 * g.sigma**2))


def gff_nu_profile(alpha: float, sigma: float = GFF_SIGMA) -> float:
    """ν(α) = (α/σ) coth(π²α/σ) for |α| ≤ 2σ/π (σ = √(π/2) gives √(2/π))."""
    limit = 2.0 * sigma / math.pi
    if abs(alpha) > limit * (1.0 + 1e-15):
        raise DomainError(f"|alpha| must be at most {limit}")
    if alpha == 0.0:
        return 1.0 / math.pi**2
    z = math.pi**2 * alpha / sigma
    return (alpha / sigma) / math.tanh(z)


def lambda_4(lam: float) -> float:
    """Λ_4(λ): -log cosh(π√(-2λ)) for λ < 0, -log cos(π√(2λ)) for 0 ≤ λ < 1/8."""
    if not lam < 0.125:
        raise DomainError("lambda_4 is finite only for lambda < 1/8")
    if lam < 0.0:
        u = math.pi * math.sqrt(-2.0 * lam)
        return -(u + math.log1p(math.exp(-2.0 * u)) - math.log(2.0))
    return -math.log(math.cos(math.pi * math.sqrt(2.0 * lam)))


def _lambda_b(sigma: float, eta: float) -> float:
    u = abs(sigma * eta)
    return u + math.log1p(math.exp(-2.0 * u)) - math.log(2.0)


def gff_saddle(g: GffParams, alpha: float):
    """Saddle point ``(η*, λ*)`` of the κ = 4 minimax problem.

    λ* = -α²π²/(2σ²) maximizes ``α π √(-2λ)/σ + λ`` along the constraint
    Λ_4(λ) + log cosh(ση) = 0, on which ση = π√(-2λ).
    """
    if alpha == 0.0:
        raise DomainError("the saddle is degenerate at alpha = 0")
    s = g.sigma
    lam = -(alpha**2) * math.pi**2 / (2.0 * s**2)
    eta = math.copysign(math.pi * math.sqrt(-2.0 * lam) / s, alpha)
    residual = lambda_4(lam) + _lambda_b(s, eta)
    if abs(residual) > 1e-10:
        raise ArithmeticError(f"saddle constraint residual {residual:.3e}")
    return eta, lam
