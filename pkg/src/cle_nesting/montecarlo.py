"""Monte Carlo checks of the nesting rates over the renewal process of log
conformal radius increments.

``S_n = T_1 + ... + T_n`` with i.i.d. ``T_i`` and ``N_r = min{n : S_n ≥ r}``.
Window probabilities ``P[ν₁r ≤ N_r ≤ ν₂r]`` are estimated with exponential
tilting of the increments and compared against the interval rate
``inf ν Λ*(1/ν)``; a convolution oracle gives exact values at small ``r``.

Samples are processed in fixed-size chunks, each driven by its own Philox
stream spawned from ``(seed, chunk index)``.  Partial sums are merged in chunk
order, so estimates do not depend on the number of workers.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.signal import fftconvolve

from .errors import ConfigError, ResourceError
from .ldp import INF, cramer_interval_rate, legendre_transform
from .nesting import gamma_nu, nu_typical
from .radius_law import KappaParam, _as_param, lambda_kappa, radius_law
from .weighted import WeightLaw, gamma_joint

__all__ = [
    "SimConfig",
    "SimReport",
    "simulate_window",
    "simulate_weighted_window",
    "convolution_oracle",
    "first_passage",
    "renewal_paths",
    "overshoot_tail_test",
    "geometric_sum_tail_test",
    "fit_log_slope",
    "chunk_generators",
]

CHUNK_SIZE = 1 << 16
MAX_CONVOLUTIONS = 64
ESTIMATORS = ("conditional", "indicator")
REPORT_FIELDS = ("p_hat", "stderr", "implied_rate", "theory_rate", "n_effective",
                 "seed", "r", "window", "wallclock_ms")


@dataclass(frozen=True)
class SimConfig:
    """Configuration of a window-probability simulation.

    ``tilt`` is ``"auto"``, ``None`` (no tilting) or an explicit λ < λ_c.
    For weighted runs supply ``weight`` and ``alpha_window``.
    """

    kappa: Union[KappaParam, float]
    r: float
    window: tuple[float, float]
    n_samples: int = 100_000
    seed: int = 0
    tilt: Union[str, float, None] = "auto"
    weight: Optional[WeightLaw] = None
    alpha_window: Optional[tuple[float, float]] = None
    workers: int = 1
    chunk_size: int = CHUNK_SIZE
    estimator: str = "conditional"

    def __post_init__(self):
        object.__setattr__(self, "kappa", _as_param(self.kappa))
        nu1, nu2 = self.window
        if not (0.0 < nu1 <= nu2) or not math.isfinite(nu2):
            raise ConfigError(f"window must satisfy 0 < nu1 <= nu2, got {self.window}")
        if not (self.r > 0.0 and math.isfinite(self.r)):
            raise ConfigError("r must be positive and finite")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.workers < 1 or self.chunk_size < 1:
            raise ConfigError("workers and chunk_size must be positive")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}")
        if isinstance(self.tilt, str):
            if self.tilt != "auto":
                raise ConfigError(f"unknown tilt mode {self.tilt!r}")
        elif self.tilt is not None and not self.tilt < self.kappa.lambda_crit:
            raise ConfigError(f"tilt must be < lambda_c = {self.kappa.lambda_crit}")
        if self.alpha_window is not None:
            a1, a2 = self.alpha_window
            if not a1 <= a2:
                raise ConfigError("alpha_window must be ordered")

    @property
    def nu_lo(self) -> float:
        return self.window[0]

    @property
    def nu_hi(self) -> float:
        return self.window[1]


@dataclass
class SimReport:
    p_hat: float
    stderr: float
    implied_rate: float
    theory_rate: float
    n_effective: float
    seed: int
    r: float
    window: tuple[float, float]
    wallclock_ms: float
    tilt: Optional[float] = None
    eta: Optional[float] = None
    alpha_window: Optional[tuple[float, float]] = None
    n_samples: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def rate_stderr(self) -> float:
        """Delta-method standard error of ``implied_rate``."""
        if self.p_hat <= 0.0:
            return INF
        return self.stderr / (self.r * self.p_hat)

    def to_dict(self) -> dict:
        out = {}
        for name in REPORT_FIELDS:
            v = getattr(self, name)
            if name == "window":
                v = list(v)
            elif isinstance(v, float) and math.isinf(v):
                v = "inf"
            out[name] = v
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


# -- random streams -------------------------------------------------------------

def _chunk_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed), spawn_key=(int(index),))


def chunk_generators(seed: int, index: int):
    """``(increment_rng, weight_rng)`` Philox generators of one chunk."""
    inc, wt = _chunk_seed(seed, index).spawn(2)
    return np.random.Generator(np.random.Philox(inc)), np.random.Generator(np.random.Philox(wt))


def _chunks(n: int, size: int):
    return [(i, min(size, n - i * size)) for i in range((n + size - 1) // size)]


def _run_chunks(fn, n: int, size: int, workers: int):
    parts = _chunks(n, size)
    if workers == 1 or len(parts) == 1:
        results = [fn(i, m) for i, m in parts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda im: fn(*im), parts))
    # Merge in chunk order so the floating-point sums are schedule independent.
    total = np.zeros(3)
    for res in results:
        total += res
    return total


# -- core path simulation ------------------------------------------------------

def first_passage(law, r: float, n: int, rng: np.random.Generator, max_steps: Optional[int] = None):
    """Simulate ``n`` walks up to ``N_r`` (or ``max_steps``).

    Returns ``(N, S, crossed)``: the step count, the sum at that step and
    whether level ``r`` was reached.  Walks that are still below ``r`` after
    ``max_steps`` stop there with ``crossed = False``.
    """
    s = np.zeros(n)
    steps = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    k = 0
    while active.size and (max_steps is None or k < max_steps):
        k += 1
        s[active] += law.sample(rng, active.size)
        steps[active] = k
        active = active[s[active] < r]
    crossed = np.ones(n, dtype=bool)
    crossed[active] = False
    return steps, s, crossed


def renewal_paths(law, n_paths: int, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """Partial sums ``S_1..S_n`` of ``n_paths`` walks, shape ``(n_paths, n_steps)``."""
    return np.cumsum(law.sample(rng, (n_paths, n_steps)), axis=1)


def _window_counts(r: float, window: tuple[float, float]):
    nu1, nu2 = window
    lo = math.ceil(nu1 * r - 1e-12)
    hi = math.floor(nu2 * r + 1e-12)
    return lo, hi


def _auto_tilt(p: KappaParam, window) -> float:
    nu1, nu2 = window
    nt = nu_typical(p)
    if nu1 <= nt <= nu2:
        return 0.0
    nu_hat = nu1 if nu1 > nt else nu2
    res = legendre_transform(radius_law(p.kappa).as_mgf, 1.0 / nu_hat)
    return float(res.maximizer)


def _resolve_tilt(cfg: SimConfig) -> float:
    if cfg.tilt is None:
        return 0.0
    if cfg.tilt == "auto":
        return _auto_tilt(cfg.kappa, cfg.window)
    return float(cfg.tilt)


def _summarize(total, n: int, r: float, theory: float, cfg: SimConfig, started: float,
               **kw) -> SimReport:
    sw, sw2, _ = total
    p_hat = sw / n
    var = max(sw2 / n - p_hat * p_hat, 0.0) * n / max(n - 1, 1)
    stderr = math.sqrt(var / n)
    n_eff = sw * sw / sw2 if sw2 > 0.0 else 0.0
    implied = -math.log(p_hat) / r if p_hat > 0.0 else INF
    return SimReport(
        p_hat=float(min(p_hat, 1.0)),
        stderr=float(stderr),
        implied_rate=float(implied),
        theory_rate=float(theory),
        n_effective=float(n_eff),
        seed=int(cfg.seed),
        r=float(r),
        window=tuple(cfg.window),
        wallclock_ms=(time.perf_counter() - started) * 1e3,
        tilt=kw.get("tilt"),
        eta=kw.get("eta"),
        alpha_window=cfg.alpha_window,
        n_samples=n,
    )


def _indicator_run(cfg, law, lam, log_m, n_lo, n_hi):
    def run(index: int, m: int):
        rng, _ = chunk_generators(cfg.seed, index)
        steps, s, crossed = first_passage(law, cfg.r, m, rng, max_steps=n_hi)
        hit = crossed & (steps >= n_lo) & (steps <= n_hi)
        w = np.zeros(m)
        w[hit] = np.exp(-lam * s[hit] + steps[hit] * log_m) if lam != 0.0 else 1.0
        return np.array([w.sum(), np.dot(w, w), hit.sum()], dtype=float)
    return run


def _conditional_run(cfg, law, base, lam, log_m, n_lo, n_hi, weights=None):
    """Per-trajectory estimator with the crossing step integrated out.

    After ``k`` tilted steps with ``S_k < r`` the path contributes
    ``LR_k · P[T > r - S_k]`` for every ``k + 1`` in the count window, where
    ``LR_k = exp(-λ S_k + k Λ_κ(λ))`` only involves the first ``k`` steps.
    ``weights``, when given, is ``(values, probs, tilted_probs, eta, log_mu,
    (lo, hi))`` and folds the final weight into the same conditional term.
    """
    r = cfg.r

    def run(index: int, m: int):
        rng, wrng = chunk_generators(cfg.seed, index)
        s = np.zeros(m)
        xi = np.zeros(m)
        acc = np.zeros(m)
        active = np.arange(m)
        for k in range(n_hi):
            if k >= n_lo - 1 and active.size:
                sa = s[active]
                log_lr = -lam * sa + k * log_m if lam != 0.0 else np.zeros(active.size)
                term = base.survival(r - sa)
                if weights is not None:
                    values, probs, _, eta, log_mu, (a_lo, a_hi) = weights
                    xa = xi[active]
                    if eta != 0.0:
                        log_lr = log_lr - eta * xa + k * log_mu
                    tot = xa[:, None] + values[None, :]
                    inside = (tot >= a_lo - 1e-12) & (tot <= a_hi + 1e-12)
                    term = term * (inside @ probs)
                acc[active] += np.exp(log_lr) * term
            if k == n_hi - 1 or not active.size:
                break
            s[active] += law.sample(rng, active.size)
            if weights is not None:
                values, _, tprobs, _, _, _ = weights
                if values.size == 1:
                    xi[active] += values[0]
                else:
                    xi[active] += values[wrng.choice(values.size, size=active.size, p=tprobs)]
            active = active[s[active] < r]
        return np.array([acc.sum(), np.dot(acc, acc), np.count_nonzero(acc)], dtype=float)
    return run


def simulate_window(cfg: SimConfig) -> SimReport:
    """Estimate ``P[ν₁r ≤ N_r ≤ ν₂r]`` under increments tilted by λ.

    ``estimator="indicator"`` weights the window indicator by
    ``exp(-λ S_{N_r} + N_r Λ_κ(λ))``.  That weight grows like ``e^{|λ| S}``
    in the overshoot, whose tail only decays at rate ``λ_c``, so its variance
    is infinite once ``λ < -λ_c``.  The default ``"conditional"`` estimator
    replaces the crossing step by its exact survival probability, which
    keeps the weights bounded.
    """
    started = time.perf_counter()
    p = cfg.kappa
    lam = _resolve_tilt(cfg)
    log_m = lambda_kappa(p, lam) if lam != 0.0 else 0.0
    law = radius_law(p.kappa, lam)
    n_lo, n_hi = _window_counts(cfg.r, cfg.window)
    n_lo = max(n_lo, 1)
    theory = cramer_interval_rate(radius_law(p.kappa).as_mgf, cfg.nu_lo, cfg.nu_hi)
    if n_lo > n_hi:
        return _summarize(np.zeros(3), cfg.n_samples, cfg.r, theory, cfg, started, tilt=lam)
    if cfg.estimator == "indicator":
        run = _indicator_run(cfg, law, lam, log_m, n_lo, n_hi)
    else:
        run = _conditional_run(cfg, law, radius_law(p.kappa), lam, log_m, n_lo, n_hi)
    total = _run_chunks(run, cfg.n_samples, cfg.chunk_size, cfg.workers)
    return _summarize(total, cfg.n_samples, cfg.r, theory, cfg, started, tilt=lam)


# -- weighted runs ---------------------------------------------------------------

def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    n = max(int(round((hi - lo) / step)), 0)
    return np.linspace(lo, hi, n + 1) if n else np.array([lo])


def _rectangle_min(p: KappaParam, mu: WeightLaw, window, alpha_window, step: float = 1e-3):
    """Grid minimum of γ_κ(α, ν) over the window rectangle.

    Returns ``(value, α*, ν*)``; ``value`` is infinite when no grid point is finite.
    """
    nus = _grid(window[0], window[1], step)
    alphas = _grid(alpha_window[0], alpha_window[1], step)
    # The zero of the rate sits at (ν_typ, ν_typ·E[ξ]); add it when inside the rectangle.
    nt = nu_typical(p)
    if window[0] <= nt <= window[1]:
        nus = np.sort(np.append(nus, nt))
        a_typ = nt * float(np.dot(mu.values, mu.probs))
        if alpha_window[0] <= a_typ <= alpha_window[1]:
            alphas = np.sort(np.append(alphas, a_typ))
    best = (INF, None, None)
    for nu in nus:
        g = gamma_nu(p, float(nu))
        if g >= best[0]:
            continue
        for a in alphas:
            res = legendre_transform(mu.mgf, float(a) / float(nu))
            if res.is_infinite:
                continue
            v = float(nu) * res.value + g
            if v < best[0]:
                best = (v, float(a), float(nu))
    return best


def simulate_weighted_window(cfg: SimConfig) -> SimReport:
    """Estimate ``P[ν₁r ≤ N_r ≤ ν₂r, α₁r ≤ Σ_{i≤N_r} ξ_i ≤ α₂r]``.

    Increments and weights are tilted jointly by ``(λ, η)`` taken at the
    rectangle point where γ_κ(α, ν) is smallest: ``Λ_κ'(λ) = 1/ν*`` and
    ``Λ_μ'(η) = α*/ν*``.  An explicit ``tilt`` sets λ and leaves η at 0.
    Single-atom weight laws consume no weight randomness, so such runs use
    exactly the increments of :func:`simulate_window` with the same seed.
    """
    if cfg.weight is None or cfg.alpha_window is None:
        raise ConfigError("weighted simulation needs weight and alpha_window")
    mu = cfg.weight
    if not mu.is_atomic:
        raise ConfigError("weighted simulation samples atomic weight laws only")
    started = time.perf_counter()
    p = cfg.kappa
    theory, a_star, nu_star = _rectangle_min(p, mu, cfg.window, cfg.alpha_window)

    lam, eta = 0.0, 0.0
    if cfg.tilt == "auto":
        if nu_star is not None:
            lam = float(legendre_transform(radius_law(p.kappa).as_mgf, 1.0 / nu_star).maximizer)
            if mu.values.size > 1:
                res = legendre_transform(mu.mgf, a_star / nu_star)
                eta = float(res.maximizer) if res.boundary is None else 0.0
    elif cfg.tilt is not None:
        lam = float(cfg.tilt)
    log_m = lambda_kappa(p, lam) if lam != 0.0 else 0.0
    log_mu = mu.mgf(eta) if eta != 0.0 else 0.0
    law = radius_law(p.kappa, lam)
    n_lo, n_hi = _window_counts(cfg.r, cfg.window)
    n_lo = max(n_lo, 1)
    if n_lo > n_hi:
        return _summarize(np.zeros(3), cfg.n_samples, cfg.r, theory, cfg, started, tilt=lam, eta=eta)
    a_win = (cfg.alpha_window[0] * cfg.r, cfg.alpha_window[1] * cfg.r)
    weights = (mu.values, mu.probs, mu.tilted_probs(eta), eta, log_mu, a_win)
    run = _conditional_run(cfg, law, radius_law(p.kappa), lam, log_m, n_lo, n_hi, weights)
    total = _run_chunks(run, cfg.n_samples, cfg.chunk_size, cfg.workers)
    return _summarize(total, cfg.n_samples, cfg.r, theory, cfg, started, tilt=lam, eta=eta)


# -- exact finite-r oracle -------------------------------------------------------

def _prob_sums_below(p: KappaParam, r: float, counts, h: float) -> dict:
    """``P[S_n < r]`` for each ``n`` in ``counts`` on a grid of step ≤ h."""
    law = radius_law(p.kappa)
    m = max(int(math.ceil(r / h)), 2)
    h = r / m
    x = np.arange(m + 1) * h
    f = np.zeros(m + 1)
    f[1:] = law.density(x[1:])
    # F(r - x_k), with F(0) = 0.
    tail_cdf = np.zeros(m + 1)
    tail_cdf[:-1] = law.cdf(r - x[:-1])
    out = {0: 1.0}
    need = sorted(set(int(n) for n in counts if n > 0))
    if not need:
        return out
    g = f.copy()  # density of S_1 on [0, r]
    current = 1
    for n in need:
        while current < n - 1:
            g = fftconvolve(g, f)[: m + 1] * h
            g[0] = 0.0
            current += 1
        if n == 1:
            out[n] = float(law.cdf(r))
        else:
            # Both ends of g·F vanish, so the trapezoid rule is a plain sum.
            out[n] = float(h * np.dot(g, tail_cdf))
    return out


def convolution_oracle(p, r: float, window, h: float = 1e-3, rtol: float = 1e-6,
                       max_halvings: int = 3) -> float:
    """Exact ``P[ν₁r ≤ N_r ≤ ν₂r]`` by iterated numerical convolution.

    Uses ``P[N_r ≥ n] = P[S_{n-1} < r]``, so only the density of ``T`` on
    ``[0, r]`` enters and no tail truncation is needed.  The grid is halved
    until two successive answers agree to ``rtol``.
    """
    p = _as_param(p)
    nu1, nu2 = window
    if not (0.0 < nu1 <= nu2):
        raise ConfigError("window must satisfy 0 < nu1 <= nu2")
    n_lo, n_hi = _window_counts(r, window)
    if n_hi > MAX_CONVOLUTIONS:
        raise ResourceError(f"floor(nu2*r) = {n_hi} exceeds the {MAX_CONVOLUTIONS}-convolution cap")
    n_lo = max(n_lo, 1)
    if n_lo > n_hi:
        return 0.0

    def at(step):
        probs = _prob_sums_below(p, r, (n_lo - 1, n_hi), step)
        return max(probs[n_lo - 1] - probs[n_hi], 0.0)

    prev = at(h)
    for _ in range(max_halvings):
        h *= 0.5
        cur = at(h)
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    return prev


# -- overshoot property tests ---------------------------------------------------

def fit_log_slope(points, n: int):
    """Weighted least-squares slope of ``log survival`` against ``a``.

    Weights use the delta-method variance ``(1 - S)/(n S)`` of ``log Ŝ``.
    Returns ``(slope, stderr)``.
    """
    a = np.array([pt[0] for pt in points], dtype=float)
    s = np.array([pt[1] for pt in points], dtype=float)
    ok = (s > 0.0) & (s < 1.0)
    a, s = a[ok], s[ok]
    if a.size < 2:
        raise ValueError("need at least two survival values strictly inside (0, 1)")
    var = (1.0 - s) / (n * s)
    w = 1.0 / var
    y = np.log(s)
    abar = np.sum(w * a) / w.sum()
    ybar = np.sum(w * y) / w.sum()
    sxx = np.sum(w * (a - abar) ** 2)
    slope = np.sum(w * (a - abar) * (y - ybar)) / sxx
    return float(slope), float(math.sqrt(1.0 / sxx))


def _survival_at(samples: np.ndarray, a_grid) -> list[tuple[float, float]]:
    srt = np.sort(samples)
    n = srt.size
    return [(float(a), float(n - np.searchsorted(srt, a, side="left")) / n) for a in a_grid]


def overshoot_tail_test(p, x: float, a_grid, n: int, seed: int):
    """Empirical survival ``P[S_{τ_x} - x ≥ a]`` of the overshoot over level ``x``."""
    if n < 10_000:
        raise ConfigError("overshoot test needs n >= 1e4")
    p = _as_param(p)
    rng, _ = chunk_generators(seed, 0)
    _, s, _ = first_passage(radius_law(p.kappa), x, n, rng)
    return _survival_at(s - x, a_grid)


def geometric_sum_tail_test(p, q: float, a_grid, n: int, seed: int):
    """Empirical survival of ``S_N`` with ``P[N ≥ k] = q^{k-1}``."""
    if not 0.0 <= q < 1.0:
        raise ConfigError("q must lie in [0, 1)")
    p = _as_param(p)
    rng, nrng = chunk_generators(seed, 0)
    counts = nrng.geometric(1.0 - q, size=n) if q > 0.0 else np.ones(n, dtype=np.int64)
    draws = radius_law(p.kappa).sample(rng, int(counts.sum()))
    owner = np.repeat(np.arange(n), counts)
    sums = np.bincount(owner, weights=draws, minlength=n)
    return _survival_at(sums, a_grid)
