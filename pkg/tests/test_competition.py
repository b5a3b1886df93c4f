import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, optimize, special, stats

from perfpower.core import ActionSet, Metric, estimate_power
from perfpower.competition import (
    CompetitionScenario,
    NoFiniteRootError,
    PowerCost,
    TwoFirmSimulator,
    competition_power_bound,
    deviation_scan,
    feasible_min_threshold,
    firm_utility,
    participant_choice,
    sample_population,
    verify_zero_power,
    xi_inverse,
    zero_profit_equilibrium,
)
from perfpower.strategic import BaseDistribution, CostModel, Posterior

ABS = CostModel()


def oracle_theta_star():
    # E[sigma(2x) | x >= xi] = 1/2 for x ~ N(-1, 1), then theta* = xi + gamma
    f = lambda x: stats.norm.pdf(x, -1, 1) * special.expit(2 * x)
    h = lambda xi: integrate.quad(f, xi, np.inf, epsabs=1e-14, epsrel=1e-12)[0] / stats.norm.sf(xi, -1, 1) - 0.5
    return optimize.brentq(h, -5.0, 5.0, xtol=1e-15) + 1.0


THETA_STAR = oracle_theta_star()


@pytest.fixture(scope="module")
def sc(normal_base):
    return CompetitionScenario(normal_base, ABS, 1.0, 1.0)


# xi ------------------------------------------------------------------------

@pytest.mark.parametrize("theta, b, cost, want", [
    (1.0, 1.0, ABS, 0.0),
    (-1.0, 1.0, ABS, -2.0),
    (0.0, 0.25, PowerCost(2.0), -0.5),
    (1.0, 1.0, PowerCost(1.0), 0.0),
])
def test_xi_inverse_examples(theta, b, cost, want):
    assert xi_inverse(theta, b, cost) == pytest.approx(want, abs=1e-9)


def test_xi_inverse_errors():
    with pytest.raises(ValueError):
        xi_inverse(0.0, 0.0, ABS)
    bounded = lambda x, x2: np.minimum(np.abs(np.asarray(x2) - np.asarray(x)), 0.5)
    with pytest.raises(ValueError, match="theta=0.0"):
        xi_inverse(0.0, 1.0, bounded)


def test_xi_inverse_random_probes():
    rng = np.random.default_rng(7)
    cost = PowerCost(1.7, 0.6)
    prev = None
    for theta, b in zip(rng.uniform(-5, 5, 1000), rng.uniform(0.01, 4, 1000)):
        xi = xi_inverse(theta, b, cost)
        assert xi < theta and abs(float(cost(xi, theta)) - b) <= 1e-9
    for theta in np.linspace(-3, 3, 50):
        xi = xi_inverse(theta, 1.0, cost)
        assert prev is None or xi > prev
        prev = xi


# choice ---------------------------------------------------------------------

def test_choice_prefers_lower_threshold():
    x = np.linspace(-4, 4, 401)
    rng = np.random.default_rng(0)
    assert np.all(participant_choice(0.0, 1.0, x, 1.0, ABS, rng) == 0)
    assert np.all(participant_choice(2.0, 1.0, x, 1.0, ABS, rng) == 1)


def test_choice_fair_coin_on_equal_thresholds():
    n = 10_000
    pick = participant_choice(0.5, 0.5, np.zeros(n), 1.0, ABS, np.random.default_rng(3))
    assert abs(pick.mean() - 0.5) <= 3 * math.sqrt(0.25 / n)


# utilities ------------------------------------------------------------------

def test_utility_zero_when_above_other(sc):
    assert firm_utility(1.0, 0.5, sc, method="quad") == 0.0
    m, se = firm_utility(1.0, 0.5, sc, n=50_000)
    assert m == 0.0 and se == 0.0


def test_utility_quad_matches_mc(sc):
    for a, b in [(0.0, 1.0), (0.8, 0.8), (-0.5, 2.0)]:
        q = firm_utility(a, b, sc, method="quad")
        m, se = firm_utility(a, b, sc, n=400_000, seed=1)
        assert abs(m - q) <= 3 * se


def test_undercutting_profitable_symmetric_point_doubles(sc):
    th = THETA_STAR + 1.0
    u_sym = firm_utility(th, th, sc, method="quad")
    assert u_sym > 0
    below = [firm_utility(th - e, th, sc, method="quad") for e in (1e-2, 1e-4, 1e-6)]
    gaps = [abs(u - 2 * u_sym) for u in below]
    assert gaps[0] > gaps[1] > gaps[2] and gaps[-1] <= 1e-5


# equilibrium ----------------------------------------------------------------

def test_zero_profit_matches_oracle(sc):
    assert zero_profit_equilibrium(sc) == pytest.approx(THETA_STAR, abs=1e-9)
    assert sc.xi(THETA_STAR) == pytest.approx(THETA_STAR - 1.0, abs=1e-15)


def test_zero_profit_utility_vanishes(sc):
    th = zero_profit_equilibrium(sc)
    assert abs(firm_utility(th, th, sc, method="quad")) <= 1e-9
    m, se = firm_utility(th, th, sc, n=1_000_000)
    assert abs(m) <= 3 * se


def test_no_finite_root():
    sym = CompetitionScenario(BaseDistribution("normal", (0.0, 1.0), Posterior("logistic", 1.0, 0.0)), ABS)
    with pytest.raises(NoFiniteRootError, match="no finite root"):
        zero_profit_equilibrium(sym)


def test_equilibrium_with_power_cost(normal_base):
    sc2 = CompetitionScenario(normal_base, PowerCost(2.0), 1.0)
    th = zero_profit_equilibrium(sc2)
    assert abs(firm_utility(th, th, sc2, method="quad")) <= 1e-9
    assert sc2.xi(th) == pytest.approx(th - 1.0, abs=1e-9)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_alpha_invariance(normal_base, sc, alpha):
    sca = CompetitionScenario(normal_base, ABS, 1.0, alpha)
    assert zero_profit_equilibrium(sca) == zero_profit_equilibrium(sc)
    for a, b in [(0.0, 1.0), (1.0, 2.0), (THETA_STAR + 0.5, 3.0)]:
        u1 = firm_utility(a, b, sc, n=20_000, seed=4)[0]
        ua = firm_utility(a, b, sca, n=20_000, seed=4)[0]
        assert np.sign(ua) == np.sign(u1) and ua == pytest.approx(alpha * u1, rel=1e-12)


# feasible set -----------------------------------------------------------------

def test_feasible_min_at_equilibrium(sc):
    assert feasible_min_threshold(THETA_STAR, sc) == pytest.approx(THETA_STAR, abs=1e-6)


def test_feasible_min_far_competitor(sc):
    far = THETA_STAR + 2.0
    got = feasible_min_threshold(far, sc)
    assert got < far and got == pytest.approx(THETA_STAR, abs=1e-6)
    # scan oracle: first grid point with non-negative undercutting utility
    g = np.linspace(THETA_STAR - 1, far, 3001)
    u = np.array([firm_utility(t, far + 1, sc, method="quad") for t in g])
    assert abs(g[np.argmax(u >= 0)] - got) <= g[1] - g[0]


def test_feasible_min_all_negative_base():
    neg = CompetitionScenario(BaseDistribution("uniform", (-2.0, 2.0), Posterior("constant", 0.0, 0.0)), ABS)
    assert feasible_min_threshold(0.0, neg) == math.inf


# bound ----------------------------------------------------------------------

def test_bound_examples(uniform_base, sc):
    usc = CompetitionScenario(uniform_base, ABS, 1.0)
    assert competition_power_bound(0.3, 0.3, usc) == 0.0
    # density 1/4 over the reach interval of length 0.5
    assert competition_power_bound(0.0, 0.5, usc) == pytest.approx(0.5 + 0.25 * 0.5, abs=1e-15)
    sat = competition_power_bound(0.0, 1.5, sc, L=2.0)
    reach = stats.norm.cdf(0.5, -1, 1) - stats.norm.cdf(-1.0, -1, 1)
    assert sat == pytest.approx(2.0 * 1.0 + 1.0 * 2.0 * reach, rel=1e-12)
    with pytest.raises(ValueError):
        competition_power_bound(1.0, 0.0, sc)


def test_bound_dominates_estimate(sc):
    lo, hi = THETA_STAR, THETA_STAR + 1.5
    x, coin = sample_population(sc, 100_000, 0)
    sim = TwoFirmSimulator(sc, x, hi, hi, coin)
    for sub in (np.linspace(lo, hi, 16), np.linspace(lo + 0.5, hi, 6)):
        p = estimate_power(sim, ActionSet.from_values(sub), Metric("absolute-difference"))
        assert p.value <= competition_power_bound(float(sub[0]), hi, sc) + p.ci_halfwidth


# zero power ------------------------------------------------------------------

def test_verify_zero_power(sc):
    rep = verify_zero_power(sc, resolution=0.05, n=100_000)
    assert rep["power"] == 0.0 and rep["power_ok"] and rep["bound_ok"]
    assert rep["monopoly_power"] > rep["monopoly_ci"] > 0
    assert rep["grid_min"] == rep["theta_star"]


def test_verify_zero_power_single_point(sc):
    rep = verify_zero_power(sc, resolution=0.01, span=0.0, n=10_000)
    assert rep["grid_points"] == 1 and rep["power"] == 0.0 and rep["monopoly_power"] == 0.0


def test_deviation_scan(sc):
    rep = deviation_scan(sc, THETA_STAR, n=200_000, n_points=20)
    assert rep["passed"]
    assert all(r["utility"] < 0 for r in rep["rows"] if not r["feasible"])


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_utility_sign_structure(a, b):
    sc = CompetitionScenario(BaseDistribution("normal", (-1.0, 1.0), Posterior("logistic", 2.0, 0.0)), ABS)
    u = firm_utility(a, b, sc, method="quad")
    if a > b:
        assert u == 0.0
    elif a < THETA_STAR - 1e-6:
        assert u < 0
    elif a > THETA_STAR + 1e-6:
        assert u > 0
