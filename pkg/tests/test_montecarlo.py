import json
import math

import numpy as np
import pytest

from cle_nesting.errors import ConfigError, ResourceError
from cle_nesting.montecarlo import (
    REPORT_FIELDS,
    SimConfig,
    _prob_sums_below,
    chunk_generators,
    convolution_oracle,
    first_passage,
    fit_log_slope,
    geometric_sum_tail_test,
    overshoot_tail_test,
    renewal_paths,
    simulate_weighted_window,
    simulate_window,
)
from cle_nesting.nesting import nu_typical
from cle_nesting.radius_law import KappaParam, radius_law
from cle_nesting.weighted import WeightLaw, gff_nu_profile

WINDOW = (0.5, 0.6)


# -- configuration ------------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(window=(0.6, 0.5)),
    dict(window=(0.0, 0.5)),
    dict(r=-1.0),
    dict(n_samples=0),
    dict(tilt=0.2),
    dict(tilt="sometimes"),
    dict(seed=-1),
    dict(workers=0),
    dict(estimator="naive"),
])
def test_config_rejects(kw):
    base = dict(kappa=6.0, r=5.0, window=WINDOW)
    base.update(kw)
    with pytest.raises(ConfigError):
        SimConfig(**base)


def test_report_fields():
    rep = simulate_window(SimConfig(6.0, 5.0, WINDOW, n_samples=2000, seed=1))
    d = rep.to_dict()
    assert tuple(d) == REPORT_FIELDS
    assert 0.0 <= d["p_hat"] <= 1.0 and d["stderr"] >= 0.0
    assert d["implied_rate"] == pytest.approx(-math.log(rep.p_hat) / 5.0)
    json.loads(rep.to_json())


def test_report_infinite_rate_serialized():
    # ν₂ r < 1: no admissible count, p_hat = 0.
    rep = simulate_window(SimConfig(6.0, 1.0, (0.2, 0.5), n_samples=100, seed=0))
    assert rep.p_hat == 0.0
    assert rep.to_dict()["implied_rate"] == "inf"


# -- streams and determinism ------------------------------------------------------------

def test_chunk_streams_distinct_and_stable():
    a, wa = chunk_generators(3, 0)
    b, _ = chunk_generators(3, 1)
    a2, _ = chunk_generators(3, 0)
    x, y, z = a.random(4), b.random(4), a2.random(4)
    np.testing.assert_array_equal(x, z)
    assert not np.array_equal(x, y)
    assert not np.array_equal(x, wa.random(4))


@pytest.mark.parametrize("estimator", ["conditional", "indicator"])
def test_worker_count_invariance(estimator):
    reps = [simulate_window(SimConfig(6.0, 5.0, WINDOW, n_samples=20_000, seed=11, workers=w,
                                      chunk_size=4096, estimator=estimator))
            for w in (1, 4, 8)]
    keys = ("p_hat", "stderr", "n_effective")
    for rep in reps[1:]:
        assert all(getattr(rep, k) == getattr(reps[0], k) for k in keys)


def test_seed_changes_estimate():
    a = simulate_window(SimConfig(6.0, 5.0, WINDOW, n_samples=5000, seed=1))
    b = simulate_window(SimConfig(6.0, 5.0, WINDOW, n_samples=5000, seed=2))
    assert a.p_hat != b.p_hat


# -- path bookkeeping ----------------------------------------------------------------

def test_renewal_identity_on_same_paths():
    rng, _ = chunk_generators(4, 0)
    r = 20.0
    s = renewal_paths(radius_law(6.0), 20_000, 40, rng)
    crossed = s >= r
    n_r = np.where(crossed.any(axis=1), crossed.argmax(axis=1) + 1, 10**9)
    s0 = np.hstack([np.zeros((s.shape[0], 1)), s])
    for n in range(1, 12):
        assert np.mean(n_r >= n) == np.mean(s0[:, n - 1] < r)


def test_first_passage_matches_paths():
    law = radius_law(4.0)
    rng1, _ = chunk_generators(9, 0)
    n, s, crossed = first_passage(law, 15.0, 500, rng1)
    assert crossed.all() and np.all(s >= 15.0) and np.all(n >= 1)


def test_lln_overshoot_corrected():
    # κ = 4: E[T] = π², Var T = 2π⁴/3; Wald gives E[N_r] E[T] = r + E[overshoot].
    r = 200.0
    mu = math.pi**2
    second = 2 * math.pi**4 / 3 + mu**2
    rng, _ = chunk_generators(21, 0)
    n, _, _ = first_passage(radius_law(4.0), r, 10_000, rng)
    ratio = n.mean() * mu / (r + second / (2 * mu))
    assert ratio == pytest.approx(1.0, abs=0.01)
    assert n.mean() / r == pytest.approx(nu_typical(4.0), rel=0.06)


def test_clt_variance_stable():
    law = radius_law(4.0)
    v = []
    for i, r in enumerate((50.0, 100.0, 200.0)):
        rng, _ = chunk_generators(30 + i, 0)
        n, _, _ = first_passage(law, r, 10_000, rng)
        v.append(np.var(n / math.sqrt(r)))
    for a in v:
        for b in v:
            assert 0.5 <= a / b <= 2.0


# -- oracle ------------------------------------------------------------------------

def test_oracle_trivial_cases():
    assert _prob_sums_below(KappaParam(6.0), 3.0, [0], 1e-3)[0] == 1.0
    assert convolution_oracle(6.0, 1.0, (0.2, 0.5)) == 0.0


def test_oracle_single_step_is_cdf():
    # Window {N_r = 1}: P[S_0 < r] - P[S_1 < r] = P[T ≥ r].
    r = 4.0
    p = convolution_oracle(6.0, r, (0.2, 0.3))
    assert p == pytest.approx(1.0 - radius_law(6.0).cdf(r), abs=1e-10)


def test_oracle_resource_cap():
    with pytest.raises(ResourceError):
        convolution_oracle(6.0, 200.0, (0.1, 0.5))


def test_oracle_two_step_against_quadrature():
    from scipy import integrate

    law = radius_law(6.0)
    r = 5.0
    # P[S_2 < r] = ∫ f(y) F(r - y) dy
    want, _ = integrate.quad(lambda y: law.density(y) * law.cdf(r - y), 1e-9, r, epsabs=1e-13, limit=200)
    got = _prob_sums_below(KappaParam(6.0), r, [2], 1e-3)[2]
    assert got == pytest.approx(want, rel=1e-7)


def test_oracle_against_plain_monte_carlo():
    o = convolution_oracle(6.0, 5.0, WINDOW)
    rep = simulate_window(SimConfig(6.0, 5.0, WINDOW, n_samples=200_000, seed=3, tilt=None,
                                    estimator="indicator"))
    assert abs(rep.p_hat - o) < 4 * rep.stderr


def test_tilted_and_untilted_agree():
    kw = dict(kappa=6.0, r=8.0, window=(0.45, 0.55), n_samples=100_000)
    plain = simulate_window(SimConfig(seed=5, tilt=None, estimator="indicator", **kw))
    tilted = simulate_window(SimConfig(seed=6, tilt="auto", **kw))
    assert plain.n_effective >= 1e3 and tilted.n_effective >= 1e3
    se = math.hypot(plain.stderr, tilted.stderr)
    assert abs(plain.p_hat - tilted.p_hat) < 3 * se


def test_conditional_estimator_reduces_variance():
    kw = dict(kappa=6.0, r=5.0, window=WINDOW, n_samples=50_000, seed=8, tilt=None)
    ind = simulate_window(SimConfig(estimator="indicator", **kw))
    cond = simulate_window(SimConfig(estimator="conditional", **kw))
    assert cond.stderr < ind.stderr


def test_typical_window_has_small_rate():
    rep = simulate_window(SimConfig(6.0, 30.0, (0.05, 0.15), n_samples=20_000, seed=7))
    assert rep.tilt == 0.0 and rep.theory_rate == 0.0
    assert rep.implied_rate < 0.03


def test_auto_tilt_side():
    below = simulate_window(SimConfig(6.0, 5.0, (0.02, 0.05), n_samples=1000, seed=1))
    above = simulate_window(SimConfig(6.0, 5.0, WINDOW, n_samples=1000, seed=1))
    assert below.tilt > 0.0 and above.tilt < 0.0


# -- weighted ----------------------------------------------------------------------

def test_point_mass_weights_reproduce_unweighted():
    kw = dict(kappa=6.0, r=5.0, window=WINDOW, n_samples=20_000, seed=4, tilt=-0.5)
    a = simulate_window(SimConfig(**kw))
    b = simulate_weighted_window(SimConfig(weight=WeightLaw.point_mass(1.0), alpha_window=WINDOW, **kw))
    assert a.p_hat == b.p_hat and a.stderr == b.stderr


def test_weighted_requires_weight():
    with pytest.raises(ConfigError):
        simulate_weighted_window(SimConfig(6.0, 5.0, WINDOW))


def test_weighted_typical_window():
    mu = WeightLaw.signed_bernoulli()
    rep = simulate_weighted_window(SimConfig(6.0, 30.0, (0.05, 0.15), n_samples=20_000, seed=9,
                                             weight=mu, alpha_window=(-0.2, 0.2)))
    assert rep.theory_rate == pytest.approx(0.0, abs=1e-12)
    assert rep.implied_rate < 0.03


def test_weighted_gff_rate():
    mu = WeightLaw.signed_bernoulli()
    nu0 = gff_nu_profile(0.3)
    rep = simulate_weighted_window(SimConfig(4.0, 20.0, (nu0 - 0.05, nu0 + 0.05), n_samples=50_000,
                                             seed=2, weight=mu, alpha_window=(0.25, 0.35)))
    assert rep.eta != 0.0
    assert rep.implied_rate == pytest.approx(rep.theory_rate, rel=0.2)


# -- overshoot tails -----------------------------------------------------------------

def test_overshoot_survival_shape():
    pts = overshoot_tail_test(6.0, 10.0, [0.0, 1.0, 2.0, 4.0], 10_000, seed=1)
    assert pts[0] == (0.0, 1.0)
    s = [v for _, v in pts]
    assert all(b <= a for a, b in zip(s, s[1:]))
    with pytest.raises(ConfigError):
        overshoot_tail_test(6.0, 10.0, [0.0], 100, seed=1)


def test_overshoot_slope():
    lc = KappaParam(6.0).lambda_crit
    grid = np.linspace(0.0, 5.0, 11)
    slope, se = fit_log_slope(overshoot_tail_test(6.0, 10.0, grid, 100_000, seed=2), 100_000)
    assert slope + 2.326 * se < -lc / 4


def test_geometric_sum_degenerate_q():
    law = radius_law(6.0)
    pts = geometric_sum_tail_test(6.0, 0.0, [0.0, 5.0, 20.0], 50_000, seed=3)
    assert pts[0][1] == 1.0
    for a, s in pts[1:]:
        ref = law.survival(a)
        assert abs(s - ref) < 4 * math.sqrt(ref * (1 - ref) / 50_000)


def test_geometric_sum_slope():
    grid = np.linspace(0.0, 40.0, 21)
    slope, se = fit_log_slope(geometric_sum_tail_test(6.0, 0.5, grid, 100_000, seed=4), 100_000)
    assert slope + 2.326 * se < 0.0


def test_fit_log_slope_exact_exponential():
    pts = [(a, math.exp(-0.3 * a)) for a in np.linspace(0, 5, 6)]
    slope, _ = fit_log_slope(pts, 1000)
    assert slope == pytest.approx(-0.3, rel=1e-12)
