import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from perfpower.core import (
    NULL_ACTION,
    ActionSet,
    CounterfactualSimulator,
    DataPoint,
    Metric,
    NonFiniteDistanceError,
    PowerEstimate,
    TableSimulator,
    check_wasserstein_bound,
    derive_rng,
    estimate_power,
    fmt_float,
    l1_histogram_distance,
    lipschitz_ratio,
    wasserstein1,
)


class NoisyShift(CounterfactualSimulator):
    """Outcome = reference + action + N(0, 1) noise."""

    def _respond(self, action, rng):
        return self.reference + action + rng.standard_normal(self.n_units)


def test_two_unit_table_power():
    sim = TableSimulator(np.array([0.0, 0.0]), {"a": np.array([1.0, 0.0]), "b": np.array([1.0, 1.0])})
    p = estimate_power(sim, ActionSet([("a", "a"), ("b", "b")]), Metric("absolute-difference"))
    assert p.value == 1.0
    assert p.argmax_action == "b"
    assert p.per_action == {"a": 0.5, "b": 1.0}


def test_null_only_is_zero():
    sim = TableSimulator(np.array([3.0, -1.0]), {})
    p = estimate_power(sim, ActionSet([]).with_null(), Metric("absolute-difference"))
    assert p.value == 0.0 and p.ci_halfwidth == 0.0 and p.argmax_action == "null"


def test_ties_go_to_first_action():
    sim = TableSimulator(np.zeros(2), {"x": np.ones(2), "y": -np.ones(2)})
    assert estimate_power(sim, ActionSet([("x", "x"), ("y", "y")]), Metric("absolute-difference")).argmax_action == "x"
    assert estimate_power(sim, ActionSet([("y", "y"), ("x", "x")]), Metric("absolute-difference")).argmax_action == "y"


def test_ci_is_three_standard_errors():
    ref = np.zeros(4)
    sim = TableSimulator(ref, {"a": np.array([0.0, 1.0, 2.0, 3.0])})
    p = estimate_power(sim, ActionSet([("a", "a")]), Metric("absolute-difference"))
    se = np.std([0, 1, 2, 3], ddof=1) / 2.0
    assert p.value == 1.5
    assert p.ci_halfwidth == pytest.approx(3 * se, rel=1e-15)
    assert p.sigma == pytest.approx(se, rel=1e-15)


def test_mc_ci_covers_known_mean():
    # E|N(mu, 1)| with |mu| = 0.5 via the folded-normal mean
    mu = 0.5
    truth = math.sqrt(2 / math.pi) * math.exp(-mu * mu / 2) + mu * (1 - 2 * (0.5 * math.erfc(mu / math.sqrt(2))))
    sim = NoisyShift(np.zeros(50_000))
    p = estimate_power(sim, ActionSet([("s", mu)]), Metric("absolute-difference"), n_rep=1, seed=3)
    assert abs(p.value - truth) <= p.ci_halfwidth


def test_empty_action_set_rejected():
    with pytest.raises(ValueError):
        estimate_power(TableSimulator(np.zeros(2), {}), ActionSet([]), Metric("absolute-difference"))


def test_empty_population_rejected():
    with pytest.raises(ValueError):
        estimate_power(TableSimulator(np.zeros(0), {"a": np.zeros(0)}), ActionSet([("a", "a")]),
                       Metric("absolute-difference"))


def test_non_finite_distance_names_unit():
    sim = TableSimulator(np.zeros(3), {"a": np.array([0.0, np.inf, 1.0])})
    with pytest.raises(NonFiniteDistanceError, match="unit 1"):
        estimate_power(sim, ActionSet([("a", "a")]), Metric("absolute-difference"))


def test_seed_determinism_and_label_keyed_streams():
    sim = NoisyShift(np.zeros(500))
    acts = ActionSet([("a", 0.1), ("b", 0.4), ("c", -0.2)])
    p1 = estimate_power(sim, acts, Metric("absolute-difference"), n_rep=3, seed=9)
    p2 = estimate_power(sim, acts, Metric("absolute-difference"), n_rep=3, seed=9)
    assert p1 == p2
    rev = ActionSet(list(acts)[::-1])
    p3 = estimate_power(sim, rev, Metric("absolute-difference"), n_rep=3, seed=9)
    assert p3.per_action == p1.per_action


def test_derive_rng_independent_paths():
    a = derive_rng(0, "x", 1).random(4)
    b = derive_rng(0, "x", 2).random(4)
    c = derive_rng(1, "x", 1).random(4)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)
    assert np.array_equal(a, derive_rng(0, "x", 1).random(4))


def test_metrics():
    assert Metric("absolute-difference")(1.0, -2.0) == 3.0
    assert Metric("euclidean")([0.0, 0.0], [3.0, 4.0]) == 5.0
    assert Metric("l1-histogram")([0.5, 0.5], [1.0, 0.0]) == 1.0
    t = Metric("user-supplied-table", [[0, 2], [2, 0]])
    assert t(0, 1) == 2.0
    with pytest.raises(ValueError):
        Metric("user-supplied-table", [[0, 1, 2]])
    with pytest.raises(ValueError):
        Metric("cosine")


def test_l1_histogram_examples():
    assert l1_histogram_distance([1, 0, 0], [0, 1, 0]) == 2.0
    assert l1_histogram_distance([0.2, 0.8], [0.2, 0.8]) == 0.0
    with pytest.raises(ValueError):
        l1_histogram_distance([1, 0], [1, 0, 0])
    h = DataPoint("histogram", [0.5, 0.5])
    with pytest.raises(ValueError):
        l1_histogram_distance(h, DataPoint("vector", [0.5, 0.5]))


def test_datapoint_validation():
    with pytest.raises(ValueError):
        DataPoint("histogram", [0.5, 0.6])
    with pytest.raises(ValueError):
        DataPoint("scalar", [1.0, 2.0])
    with pytest.raises(ValueError):
        DataPoint("vector", [np.nan])


def test_wasserstein_translation_exact():
    x = np.random.default_rng(0).random(1000)
    # (x + 0.3) - x equals 0.3 only up to rounding of each addition
    assert wasserstein1(x, x + 0.3) == pytest.approx(0.3, abs=1e-15)
    assert wasserstein1([0, 1], [1, 0]) == 0.0
    with pytest.raises(ValueError):
        wasserstein1([0, 1], [0, 1, 2])
    with pytest.raises(ValueError):
        wasserstein1([], [])


def test_wasserstein_matches_scipy():
    from scipy.stats import wasserstein_distance

    rng = np.random.default_rng(1)
    a, b = rng.normal(size=300), rng.exponential(size=300)
    assert wasserstein1(a, b) == pytest.approx(wasserstein_distance(a, b), rel=1e-12)


def test_lipschitz_ratio():
    d = Metric("absolute-difference")
    c = lambda x, y: 2 * abs(x - y)
    assert lipschitz_ratio(d, c, [(0.0, 1.0), (1.0, 3.0)]) == 0.5
    assert lipschitz_ratio(d, lambda x, y: 0.0, [(0.0, 1.0)]) == math.inf
    assert lipschitz_ratio(d, lambda x, y: 0.0, [(1.0, 1.0)]) == 0.0


def test_action_set_labels_unique():
    with pytest.raises(ValueError):
        ActionSet([("a", 1), ("a", 2)])
    s = ActionSet.from_values([0.1, 0.2])
    assert s.labels == ["theta=0.10000000000000001", "theta=0.20000000000000001"]
    assert s.with_null().labels[0] == "null" and len(s.with_null().with_null()) == 3
    assert s.subset(["theta=0.20000000000000001"]).actions == [0.2]


def test_null_action_singleton_pickles():
    assert pickle.loads(pickle.dumps(NULL_ACTION)) is NULL_ACTION


def test_power_estimate_validation():
    with pytest.raises(ValueError):
        PowerEstimate(-1.0, "exact-mc", 0.0, "a", 1)
    with pytest.raises(ValueError):
        PowerEstimate(1.0, "guess", 0.0, "a", 1)


def test_fmt_float_round_trips():
    for x in (0.1, 1 / 3, 1e-300, 2.0 ** 0.5):
        assert float(fmt_float(x)) == x


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6, unique=True), st.integers(0, 5))
def test_power_monotone_in_action_set(shifts, k):
    sim = NoisyShift(np.zeros(64))
    full = ActionSet.from_values(shifts)
    sub = full.subset(full.labels[: 1 + k % len(shifts)])
    m = Metric("absolute-difference")
    assert estimate_power(sim, sub, m, n_rep=2, seed=4).value <= estimate_power(sim, full, m, n_rep=2, seed=4).value


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=5, unique=True))
def test_null_adds_nothing_and_power_nonnegative(shifts):
    sim = NoisyShift(np.zeros(32))
    acts = ActionSet.from_values(shifts)
    m = Metric("absolute-difference")
    p = estimate_power(sim, acts, m, seed=1)
    q = estimate_power(sim, acts.with_null(), m, seed=1)
    assert p.value >= 0 and q.value == p.value


def test_wasserstein_bound_on_table():
    rng = np.random.default_rng(2)
    ref = rng.normal(size=200)
    outs = {k: ref + rng.normal(scale=0.5, size=200) for k in "abcd"}
    sim = TableSimulator(ref, outs)
    acts = ActionSet([(k, k) for k in "abcd"])
    r = check_wasserstein_bound(sim, acts, Metric("absolute-difference"), max_pairs=5)
    assert r["n_pairs"] == 5 and r["passed"] and r["max_ratio"] <= 1.0


def test_wasserstein_zero_power():
    sim = TableSimulator(np.zeros(3), {"a": np.zeros(3)})
    r = check_wasserstein_bound(sim, ActionSet([("a", "a")]).with_null(), Metric("absolute-difference"))
    assert r["passed"] and r["max_ratio"] == 0.0


def test_l1_hand_sum():
    assert l1_histogram_distance([0.5, 0.3, 0.2], [0.4, 0.4, 0.2]) == pytest.approx(0.2, abs=1e-15)


def test_lipschitz_ratio_quadratic_cost_probes():
    probes = [(0.0, x) for x in (0.1, 0.25, 0.5, 1.0)]
    r = lipschitz_ratio(Metric("absolute-difference"), lambda a, b: (a - b) ** 2, probes)
    assert r == pytest.approx(10.0, rel=1e-12)


def _random_points(kind, rng, n):
    if kind == "absolute-difference":
        return rng.normal(size=(3, n))
    if kind == "euclidean":
        return rng.normal(size=(3, n, 4))
    if kind == "l1-histogram":
        return rng.dirichlet(np.ones(5), size=(3, n))
    return rng.integers(0, 6, size=(3, n))


@pytest.mark.parametrize("kind", Metric.KINDS)
def test_metric_axioms(kind):
    rng = np.random.default_rng(7)
    table = None
    if kind == "user-supplied-table":
        pts = rng.normal(size=(6, 2))
        table = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    m = Metric(kind, table)
    a, b, c = _random_points(kind, rng, 10_000)
    dab, dba, dbc, dac = m(a, b), m(b, a), m(b, c), m(a, c)
    assert np.all(dab >= 0)
    np.testing.assert_array_equal(dab, dba)
    assert np.all(m(a, a) == 0)
    assert np.all(dac <= dab + dbc + 1e-12)


def test_wasserstein_axioms():
    rng = np.random.default_rng(8)
    for _ in range(50):
        a, b, c = rng.normal(size=(3, 40)) * rng.uniform(0.1, 3, size=(3, 1))
        assert wasserstein1(a, a) == 0
        assert wasserstein1(a, b) == wasserstein1(b, a)
        assert wasserstein1(a, c) <= wasserstein1(a, b) + wasserstein1(b, c) + 1e-12


def test_wasserstein_point_masses_and_single_action():
    assert wasserstein1([0.0], [1.0]) == 1.0
    sim = TableSimulator(np.zeros(4), {"a": np.arange(4.0)})
    r = check_wasserstein_bound(sim, ActionSet([("a", "a")]), Metric("absolute-difference"))
    assert r["n_pairs"] == 0 and r["max_ratio"] == 0.0 and r["passed"]


def test_wasserstein_two_null_copies():
    sim = TableSimulator(np.ones(3), {})
    acts = ActionSet([("n1", NULL_ACTION), ("n2", NULL_ACTION)])
    r = check_wasserstein_bound(sim, acts, Metric("absolute-difference"))
    assert r["passed"] and r["max_ratio"] == 0.0
