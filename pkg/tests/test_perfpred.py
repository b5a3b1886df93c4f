import math
from fractions import Fraction

import numpy as np
import pytest

from perfpower.perfpred import (
    NO_DEPLOYMENT,
    LocationShiftMap,
    LossSpec,
    RegressionShiftMap,
    StrategicMap,
    StrategicRealization,
    check_prop_sl,
    decompose_risk,
    decoupled_risk,
    ex_ante_optimize,
    ex_post_optimize,
    performative_risk,
    stable_point,
)
from perfpower.strategic import ParticipantRecord, Threshold, UtilitySpec, CostModel, best_response

from oracles import strategic_population_risk

N = 100_000
GRID = np.round(np.linspace(-3, 3, 601), 12)
STEP = 0.01


@pytest.fixture(scope="module")
def strat(uniform_base):
    m = StrategicMap(uniform_base, 1.0)
    return m, m.realize(N, 0)


@pytest.fixture(scope="module")
def loc():
    m = LocationShiftMap(1.0, 0.5, 1.0)
    return m, m.realize(N, 0)


@pytest.fixture(scope="module")
def reg():
    m = RegressionShiftMap(1.0, 0.5, 1.0, 1.0)
    return m, m.realize(N, 0)


def _se(samples):
    return float(np.std(samples, ddof=1) / math.sqrt(samples.size))


# risks ------------------------------------------------------------------------

def test_location_pr_at_mean_is_variance(loc):
    m0 = LocationShiftMap(1.0, 0.0, 1.5)
    r = m0.realize(N, 1)
    ls = r.loss_samples(1.0, 1.0)
    assert abs(r.performative_risk(1.0) - 1.5 ** 2) <= 3 * _se(ls)


def test_location_pr_closed_form(loc):
    m, r = loc
    for t in (-1.0, 0.5, 2.0, 3.5):
        truth = ((1 - 0.5) * t - 1) ** 2 + 1.0
        assert abs(r.performative_risk(t) - truth) <= 3 * _se(r.loss_samples(t, t))


def test_location_decoupled_closed_form(loc):
    m, r = loc
    for phi, t in [(0.0, 1.0), (2.0, 0.0), (-1.0, 3.0)]:
        truth = (t - 1.0 - 0.5 * phi) ** 2 + 1.0
        assert abs(r.decoupled_risk(phi, t) - truth) <= 3 * _se(r.loss_samples(phi, t))


@pytest.mark.parametrize("which", ["strat", "loc", "reg"])
def test_risk_matrix_matches_direct_mean(which, request):
    m, r = request.getfixturevalue(which)
    phis = [0.0, 0.7, -1.2] + ([NO_DEPLOYMENT] if which == "strat" else [])
    thetas = [-0.5, 0.3, 1.1, 2.0]
    R = r.risk_matrix(phis, thetas)
    for a, phi in enumerate(phis):
        for b, t in enumerate(thetas):
            direct = float(np.mean(r.loss_samples(phi, t)))
            assert R[a, b] == pytest.approx(direct, rel=1e-10, abs=1e-12)


def test_strategic_risk_vs_quadrature(strat, uniform_base):
    m, _ = strat
    reals = [m.realize(N, s) for s in range(10)]
    for phi, t in [(NO_DEPLOYMENT, 0.0), (0.0, 0.0), (1.0, 1.0), (0.5, -0.3), (1.5, 0.8)]:
        truth = strategic_population_risk(uniform_base, phi, t, 1.0)
        # pooled over independent realizations
        est = np.mean([r.decoupled_risk(phi, t) for r in reals])
        se = math.sqrt(np.mean([_se(r.loss_samples(phi, t)) ** 2 for r in reals]) / len(reals))
        assert abs(est - truth) <= 3 * se


def test_zero_one_degenerate_is_zero():
    x = np.linspace(-1, 1, 50)
    r = StrategicRealization(x, np.zeros(50, dtype=int), np.zeros(50), 0.5, 1.0)
    assert r.decoupled_risk(NO_DEPLOYMENT, 5.0) == 0.0
    assert r.performative_risk(5.0) == 0.0


def test_strategic_responses_match_best_response(strat, uniform_base):
    _, r = strat
    idx = np.arange(0, N, 997)
    xf = r.responses(0.4)[idx]
    ref = [float(best_response(ParticipantRecord(0, np.asarray(r.x[i])), Threshold(0.4), UtilitySpec(1.0),
                               CostModel())) for i in idx]
    assert np.array_equal(xf, np.array(ref))


@pytest.mark.parametrize("which", ["strat", "loc", "reg"])
def test_decoupled_diagonal_is_performative_bitwise(which, request):
    _, r = request.getfixturevalue(which)
    g = GRID[::5]
    R = r.risk_matrix(g, g)
    assert np.array_equal(np.diag(R), r.performative_risks(g))
    for t in g[::10]:
        assert r.decoupled_risk(t, t) == r.performative_risk(t)


@pytest.mark.parametrize("which", ["strat", "loc", "reg"])
def test_decomposition(which, request):
    _, r = request.getfixturevalue(which)
    n_sterbenz = 0
    for phi in GRID[::40]:
        for t in GRID[::40]:
            d = decompose_risk(r, phi, t)
            a, s, pr = d["ex_ante"], d["shift"], d["performative"]
            assert Fraction(a) + (Fraction(pr) - Fraction(a)) == Fraction(pr)
            # two roundings, each at most half an ulp of the largest term
            assert abs((a + s) - pr) <= np.spacing(max(abs(a), abs(s), abs(pr)))
            if pr / 2 <= a <= 2 * pr:
                # the shift is computed without rounding here, so the float identity is exact
                assert a + s == pr
                n_sterbenz += 1
    assert n_sterbenz > 0


def test_module_level_risks_share_realization(loc):
    m, r = loc
    assert performative_risk(1.3, m, N, 0) == r.performative_risk(1.3)
    assert decoupled_risk(0.2, 1.3, m, N, 0) == r.decoupled_risk(0.2, 1.3)


def test_loss_spec_validation():
    with pytest.raises(ValueError):
        LossSpec("hinge")
    with pytest.raises(ValueError):
        LossSpec("zero-one", 1.0, 2.0)
    with pytest.raises(ValueError):
        LocationShiftMap(0.0, 1.0)


# optimization ----------------------------------------------------------------------

def test_ex_ante_location(loc):
    m, r = loc
    for phi in (0.0, 2.0):
        res = ex_ante_optimize(phi, r, GRID)
        assert res.theta == pytest.approx(1.0 + 0.5 * phi + r.s1, abs=1e-7)
        assert not res.on_boundary


def test_ex_ante_strategic_on_base(strat):
    m, r = strat
    res = ex_ante_optimize(NO_DEPLOYMENT, r, GRID)
    assert abs(res.theta - m.theta_sl) <= STEP


def test_no_performativity_sl_equals_po():
    m = LocationShiftMap(1.0, 0.0)
    r = m.realize(N, 2)
    assert ex_ante_optimize(0.0, r, GRID).theta == pytest.approx(ex_post_optimize(r, GRID).theta, abs=1e-7)
    rep = check_prop_sl(m, r, GRID, 0.0)
    assert rep["gap"] == pytest.approx(0.0, abs=1e-12) and rep["distance"] <= 1e-7 and rep["risk_ok"]


def test_ex_post_strategic_identity(strat):
    m, r = strat
    res = ex_post_optimize(r, GRID)
    assert abs(res.theta - (m.theta_sl + 1.0)) <= STEP


def test_ex_post_location(loc):
    m, r = loc
    res = ex_post_optimize(r, GRID)
    assert res.theta == pytest.approx((1.0 + r.s1) / 0.5, abs=1e-7)
    assert abs(res.theta - 2.0) <= 3 * 2 / math.sqrt(N) * 3


def test_boundary_flag(loc):
    _, r = loc
    res = ex_post_optimize(r, np.linspace(-1, 0.5, 16))
    assert res.on_boundary and res.theta == 0.5


def test_regression_closed_forms(reg):
    m, r = reg
    po = ex_post_optimize(r, GRID)
    st_ = stable_point(r, GRID)
    assert abs(po.theta - m.theta_po) <= 0.02
    assert abs(st_ - m.theta_st) <= 0.02
    assert abs(m.theta_po - m.theta_st) > 0.1


def test_strategic_stable_point(strat):
    _, r = strat
    # population fixed point is 0.5: the posterior is odd-symmetric around zero on a symmetric base
    assert abs(stable_point(r, GRID) - 0.5) <= 0.02


def test_argmin_stable_across_seeds(uniform_base):
    m = StrategicMap(uniform_base, 1.0)
    ref = ex_post_optimize(m.realize(20_000, 0), GRID).theta
    for s in range(1, 21):
        assert abs(ex_post_optimize(m.realize(20_000, s), GRID).theta - ref) <= STEP + 1e-12


# the learning-vs-steering bound ----------------------------------------------------

@pytest.mark.parametrize("dg", [0.25, 0.5, 1.0])
def test_prop_sl_strategic(dg, uniform_base):
    m = StrategicMap(uniform_base, dg)
    r = m.realize(N, 0)
    rep = check_prop_sl(m, r, GRID, NO_DEPLOYMENT)
    assert rep["risk_ok"] and rep["distance_ok"] is None
    assert rep["pr_po"] <= rep["pr_sl"]
    assert abs(rep["theta_po"] - m.theta_po) <= STEP


@pytest.mark.parametrize("eps", [0.0, 0.25, 0.5])
def test_prop_sl_location(eps):
    m = LocationShiftMap(1.0, eps)
    r = m.realize(N, 0)
    for phi in (0.0, m.theta_po):
        rep = check_prop_sl(m, r, np.round(np.linspace(-1, 5, 601), 12), phi)
        assert rep["risk_ok"] and rep["distance_ok"]
        assert rep["pr_po"] <= rep["pr_sl"] + 1e-15


def test_prop_sl_location_gap_closed_form():
    # population gap for phi = 0: PR(mu0) - PR(mu0 / (1 - eps))
    m = LocationShiftMap(1.0, 0.5)
    r = m.realize(N, 0)
    rep = check_prop_sl(m, r, np.round(np.linspace(-1, 5, 601), 12), 0.0)
    truth = ((0.5 * 1.0 - 1) ** 2 + 1) - 1.0
    assert rep["gap"] == pytest.approx(truth, abs=0.02)


def test_prop_sl_regression_distance(reg):
    m, r = reg
    rep = check_prop_sl(m, r, np.round(np.linspace(-1, 3, 401), 12), 0.0)
    assert rep["strong_convexity"] == pytest.approx(2 * r.sxx) and rep["distance_ok"] and rep["risk_ok"]
