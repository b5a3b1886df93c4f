"""Monopoly strategic classification.

Participants move their features to the cheapest accepted point when that
costs no more than their surplus utility. Costs are measured from the
original features; distances for power are measured from the current ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize, special

from . import kernels
from .core import (
    NULL_ACTION,
    ActionSet,
    CounterfactualSimulator,
    Metric,
    PowerEstimate,
    estimate_power,
)

BUDGET_TOL = 1e-12
_SQRT2PI = math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class Posterior:
    """Monotone label posterior ``p(x) = link(slope * x + offset)``.

    ``link`` is ``logistic`` or ``probit``; ``constant`` ignores x and is only
    meant for degenerate test cases.
    """

    kind: str = "logistic"
    slope: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("logistic", "probit", "constant"):
            raise ValueError(f"unknown posterior kind {self.kind!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "logistic":
            return special.expit(self.slope * x + self.offset)
        if self.kind == "probit":
            return special.ndtr(self.slope * x + self.offset)
        return np.full_like(x, self.offset)

    def is_regular(self, scale=10.0) -> bool:
        """Strictly increasing with limits 0 and 1, checked at +-scale."""
        if self.kind == "constant" or self.slope <= 0:
            return False
        lo, hi = self(-scale), self(scale)
        return bool(lo < 1e-3 and hi > 1 - 1e-3)


@dataclass(frozen=True)
class BaseDistribution:
    """Original-feature distribution with a label posterior.

    ``family`` is ``uniform`` (params a, b), ``normal`` (mu, sigma) or
    ``logistic`` (mu, s).
    """

    family: str
    params: tuple
    posterior: Posterior = field(default_factory=Posterior)

    def __post_init__(self):
        if self.family not in ("uniform", "normal", "logistic"):
            raise ValueError(f"unknown base family {self.family!r}")
        p = tuple(float(v) for v in self.params)
        if len(p) != 2 or not p[1] > (p[0] if self.family == "uniform" else 0.0):
            raise ValueError(f"bad parameters {self.params!r} for {self.family}")
        object.__setattr__(self, "params", p)

    @property
    def scale(self) -> float:
        a, b = self.params
        return (b - a) / 2 if self.family == "uniform" else b

    @property
    def support(self) -> tuple[float, float]:
        if self.family == "uniform":
            return self.params
        return (-math.inf, math.inf)

    def _z(self, x):
        a, b = self.params
        return (np.asarray(x, dtype=float) - a) / b

    def pdf(self, x):
        a, b = self.params
        if self.family == "uniform":
            x = np.asarray(x, dtype=float)
            return np.where((x >= a) & (x <= b), 1.0 / (b - a), 0.0)
        z = self._z(x)
        if self.family == "normal":
            return np.exp(-0.5 * z * z) / (b * _SQRT2PI)
        return special.expit(z) * special.expit(-z) / b

    def cdf(self, x):
        a, b = self.params
        if self.family == "uniform":
            return np.clip((np.asarray(x, dtype=float) - a) / (b - a), 0.0, 1.0)
        z = self._z(x)
        return special.ndtr(z) if self.family == "normal" else special.expit(z)

    def sf(self, x):
        a, b = self.params
        if self.family == "uniform":
            return np.clip((b - np.asarray(x, dtype=float)) / (b - a), 0.0, 1.0)
        z = self._z(x)
        return special.ndtr(-z) if self.family == "normal" else special.expit(-z)

    def prob(self, lo, hi) -> float:
        """``Pr[lo <= x <= hi]`` from the CDF."""
        if hi <= lo:
            return 0.0
        return float(self.cdf(hi) - self.cdf(lo))

    def sample(self, n, rng):
        a, b = self.params
        if self.family == "uniform":
            return rng.uniform(a, b, size=n)
        if self.family == "normal":
            return rng.normal(a, b, size=n)
        return rng.logistic(a, b, size=n)

    def sample_labels(self, x, rng):
        return (rng.random(np.shape(x)) < self.posterior(x)).astype(np.int64)


@dataclass(frozen=True)
class UtilitySpec:
    gamma: float
    beta: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0 or self.beta < 0:
            raise ValueError("need gamma > 0 and beta >= 0")

    @property
    def delta_gamma(self) -> float:
        return max(0.0, self.gamma - self.beta)


def surplus(delta_gamma: float) -> UtilitySpec:
    """Utility spec with the given surplus and no outside option."""
    if delta_gamma <= 0:
        return UtilitySpec(gamma=1.0, beta=1.0)
    return UtilitySpec(gamma=float(delta_gamma))


class CostModel:
    """Metric cost of moving features.

    ``absolute-difference`` is ``scale * |x - x'|`` on scalars;
    ``weighted-l1`` is ``sum_j w_j |x_j - x'_j|`` on vectors. Coordinates in
    ``immutable_coords`` cost infinity to change.
    """

    def __init__(self, kind="absolute-difference", weights=None, immutable_coords=(), scale=1.0):
        if kind not in ("absolute-difference", "weighted-l1"):
            raise ValueError(f"unknown cost kind {kind!r}")
        if not scale > 0:
            raise ValueError("cost scale must be positive")
        self.kind = kind
        self.scale = float(scale)
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        if self.weights is not None and np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        self.immutable_coords = tuple(int(i) for i in immutable_coords)
        if kind == "absolute-difference" and self.immutable_coords:
            raise ValueError("scalar cost has no coordinates to freeze")

    def _w(self, d):
        if self.weights is None:
            return np.ones(d)
        if self.weights.shape != (d,):
            raise ValueError("weights do not match feature dimension")
        return self.weights

    def __call__(self, x, x2):
        x = np.asarray(x, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if self.kind == "absolute-difference":
            return self.scale * np.abs(x - x2)
        diff = np.abs(x - x2)
        c = np.sum(self._w(diff.shape[-1]) * diff, axis=-1)
        for j in self.immutable_coords:
            c = np.where(diff[..., j] > 0, np.inf, c)
        return c

    def mutable(self, d):
        return [j for j in range(d) if j not in self.immutable_coords]

    def ball_vertices(self, x0, budget):
        """Extreme points of ``{x : c(x0, x) <= budget}``."""
        if budget <= 0:
            return np.asarray(x0, dtype=float)[None, ...]
        if self.kind == "absolute-difference":
            r = budget / self.scale
            x0 = float(x0)
            return np.array([x0 - r, x0 + r])
        x0 = np.asarray(x0, dtype=float)
        w = self._w(x0.shape[0])
        verts = []
        for j in self.mutable(x0.shape[0]):
            for sign in (-1.0, 1.0):
                v = x0.copy()
                v[j] += sign * budget / w[j]
                verts.append(v)
        if not verts:
            return x0[None, :]
        return np.array(verts)


@dataclass
class ParticipantRecord:
    id: int
    x_orig: np.ndarray
    y: int = 0
    x_current: np.ndarray | None = None

    def __post_init__(self):
        self.x_orig = np.asarray(self.x_orig, dtype=float)
        if self.x_current is None:
            self.x_current = self.x_orig.copy()
        else:
            self.x_current = np.asarray(self.x_current, dtype=float)
        if self.y not in (0, 1):
            raise ValueError("label must be 0 or 1")


class Threshold:
    """Accept when ``x[coord] >= theta``; scalars use the value itself."""

    def __init__(self, theta, coord=0):
        self.theta = float(theta)
        self.coord = coord

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        v = x if x.ndim == 0 else x[..., self.coord]
        return (v >= self.theta).astype(int)

    def __repr__(self):
        return f"Threshold({self.theta!r})"


class PersonalizedPredictor:
    """Accept exactly one target point per unit, keyed by the id coordinate."""

    def __init__(self, targets: dict, id_coord=0):
        self.targets = {int(k): np.asarray(v, dtype=float) for k, v in targets.items()}
        self.id_coord = id_coord

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        t = self.targets.get(int(x[self.id_coord]))
        return int(t is not None and np.array_equal(t, x))


def threshold_best_response(x_orig, theta, budget, scale=1.0):
    """Vectorized best response of scalar features to a threshold."""
    x_orig = np.asarray(x_orig, dtype=float)
    with np.errstate(invalid="ignore"):
        move = (x_orig < theta) & (scale * (theta - x_orig) <= np.asarray(budget) + BUDGET_TOL)
    return np.where(move, theta, x_orig)


def _lexmin(points):
    order = np.lexsort(points.T[::-1]) if points.ndim == 2 else np.argsort(points, kind="stable")
    return points[order[0]]


def best_response(p: ParticipantRecord, f, u: UtilitySpec, c: CostModel, candidates=None):
    """Feature vector chosen by a participant facing predictor ``f``.

    Moving happens iff some accepted point costs at most the surplus; the
    cheapest accepted point wins, ties broken by smallest coordinates.
    Thresholds and personalized predictors are solved exactly; other
    predictors need a ``candidates`` grid to search.
    """
    dg = u.delta_gamma if isinstance(u, UtilitySpec) else float(u)
    x0 = p.x_orig
    if f(x0) == 1:
        return x0.copy()
    if dg <= 0:
        return x0.copy()
    if isinstance(f, Threshold):
        if x0.ndim == 0:
            return np.asarray(threshold_best_response(x0, f.theta, dg, c.scale))
        if f.coord in c.immutable_coords:
            return x0.copy()
        target = x0.copy()
        target[f.coord] = f.theta
        pts = target[None, :]
    elif isinstance(f, PersonalizedPredictor):
        t = f.targets.get(int(x0[f.id_coord]))
        if t is None:
            return x0.copy()
        pts = t[None, :]
    else:
        if candidates is None:
            raise ValueError("generic predictors need a candidate grid")
        pts = np.asarray(candidates, dtype=float)
        acc = np.array([f(q) for q in pts], dtype=bool)
        pts = pts[acc]
        if pts.shape[0] == 0:
            return x0.copy()
    costs = c(x0, pts)
    if not np.isfinite(np.min(costs)) and math.isinf(dg):
        raise ValueError("infinite surplus cannot buy an infinite-cost move")
    cmin = np.min(costs)
    if cmin > dg + BUDGET_TOL:
        return x0.copy()
    return _lexmin(pts[costs == cmin]).copy()


def _sup_vertex(p, dg, c, dist):
    verts = c.ball_vertices(p.x_orig if p.x_orig.ndim else float(p.x_orig), dg)
    cur = p.x_current if p.x_current.ndim else float(p.x_current)
    d = np.asarray(dist(cur, verts) if p.x_orig.ndim else dist(cur, verts), dtype=float)
    return verts, d


def reachable_sup(p: ParticipantRecord, u, c: CostModel, dist: Metric) -> float:
    """Sup of ``dist(x_current, x')`` over the reachable set.

    The reachable set is a cost ball around ``x_orig``; for norm-induced
    distances the sup sits on a vertex of that ball, which is what is searched.
    """
    dg = u.delta_gamma if isinstance(u, UtilitySpec) else float(u)
    _, d = _sup_vertex(p, dg, c, dist)
    return float(np.max(d))


def _budgets(pop, u):
    if isinstance(u, UtilitySpec) or np.ndim(u) == 0:
        dg = u.delta_gamma if isinstance(u, UtilitySpec) else float(u)
        return [dg] * len(pop)
    out = [x.delta_gamma if isinstance(x, UtilitySpec) else float(x) for x in u]
    if len(out) != len(pop):
        raise ValueError("one utility spec per unit expected")
    return out


def monopoly_upper_bound(pop: Sequence[ParticipantRecord], u, c: CostModel, dist: Metric) -> float:
    """Population mean of the reachable-set sup; bounds power for any action set."""
    dgs = _budgets(pop, u)
    vals = np.array([reachable_sup(p, dg, c, dist) for p, dg in zip(pop, dgs)])
    return float(np.sum(vals) / len(vals))


class PredictorSimulator(CounterfactualSimulator):
    """Per-unit best responses to arbitrary predictors (small populations)."""

    deterministic = True

    def __init__(self, pop, u, c, candidates=None):
        self.pop = list(pop)
        self.budgets = _budgets(self.pop, u)
        self.cost = c
        self.candidates = candidates
        super().__init__(np.array([p.x_current for p in self.pop]))

    def _respond(self, f, rng):
        return np.array([best_response(p, f, dg, self.cost, self.candidates)
                         for p, dg in zip(self.pop, self.budgets)])


def personalized_power(pop: Sequence[ParticipantRecord], u, c: CostModel, dist: Metric) -> PowerEstimate:
    """Power of a firm that can target each unit through an immutable id coordinate.

    Builds the predictor accepting exactly each unit's farthest reachable
    point and evaluates it; the result matches :func:`monopoly_upper_bound`.
    """
    if c.kind != "weighted-l1" or 0 not in c.immutable_coords:
        raise ValueError("personalization needs an immutable id in coordinate 0")
    dgs = _budgets(pop, u)
    targets = {}
    for p, dg in zip(pop, dgs):
        if p.x_orig.ndim != 1 or p.x_orig[0] != p.id or p.x_current[0] != p.id:
            raise ValueError(f"unit {p.id}: coordinate 0 must equal the unit id")
        if p.id in targets:
            raise ValueError(f"duplicate unit id {p.id}")
        verts, d = _sup_vertex(p, dg, c, dist)
        targets[p.id] = _lexmin(verts[d == np.max(d)])
    f_star = PersonalizedPredictor(targets)
    sim = PredictorSimulator(pop, dgs, c)
    actions = ActionSet([("null", NULL_ACTION), ("personalized", f_star)])
    return estimate_power(sim, actions, dist, n_rep=1, seed=0, kind="exact-mc")


def corollary_bound(L: float, delta_gamma: float) -> float:
    if not math.isfinite(L):
        raise ValueError("Lipschitz ratio must be finite")
    return 2.0 * L * delta_gamma


def solve_theta_sl(base: BaseDistribution, tol=1e-12) -> float:
    """Threshold where the posterior crosses one half."""
    p = base.posterior

    def g(t):
        return float(p(t)) - 0.5

    lo, hi = -1.0, 1.0
    for _ in range(60):
        if g(lo) < 0 < g(hi) or g(lo) == 0 or g(hi) == 0:
            break
        lo, hi = 2 * lo, 2 * hi
    else:
        raise ValueError("posterior does not cross 0.5 on the search bracket")
    if g(lo) == 0:
        return lo
    if g(hi) == 0:
        return hi
    if not g(lo) < 0 < g(hi):
        raise ValueError("posterior does not cross 0.5 on the search bracket")
    return float(optimize.bisect(g, lo, hi, xtol=tol, maxiter=500))


def one_d_bounds(base: BaseDistribution, theta_sl: float, delta_gamma: float) -> tuple[float, float]:
    """Sandwich for 1-d threshold power when the firm currently deploys ``theta_sl``.

    Lower bound: half the surplus times the base mass in
    ``[theta_sl, theta_sl + delta_gamma / 2]``. Upper bound: twice the surplus.
    """
    if abs(float(base.posterior(theta_sl)) - 0.5) > 1e-6:
        raise ValueError("theta_sl is not where the posterior crosses 0.5")
    if delta_gamma <= 0:
        return 0.0, 0.0
    lower = 0.5 * delta_gamma * base.prob(theta_sl, theta_sl + 0.5 * delta_gamma)
    return lower, 2.0 * delta_gamma


def one_d_bound_variants(base, theta_sl, gamma, delta_gamma) -> dict:
    """Both stated forms of the 1-d sandwich, for reporting side by side."""
    mass = base.prob(theta_sl, theta_sl + 0.5 * delta_gamma) if delta_gamma > 0 else 0.0
    return {
        "lower_surplus": 0.5 * delta_gamma * mass,
        "lower_gamma": 0.5 * gamma * mass,
        "upper_twice_surplus": 2.0 * delta_gamma,
        "upper_surplus": float(delta_gamma),
    }


class StrategicSimulator(CounterfactualSimulator):
    """Scalar-feature population responding to threshold classifiers.

    ``theta_current`` is the deployed threshold defining the status quo
    (``inf`` for no deployment). Budgets may be per unit.
    """

    deterministic = True

    def __init__(self, x_orig, delta_gamma, cost_scale=1.0, theta_current=math.inf, backend=None):
        self.x_orig = np.asarray(x_orig, dtype=float)
        self.budget = np.broadcast_to(np.asarray(delta_gamma, dtype=float), self.x_orig.shape).copy()
        self.cost_scale = float(cost_scale)
        self.theta_current = float(theta_current)
        self.backend = backend
        super().__init__(threshold_best_response(self.x_orig, self.theta_current, self.budget, self.cost_scale))

    def _respond(self, theta, rng):
        return threshold_best_response(self.x_orig, float(theta), self.budget, self.cost_scale)

    def sweep(self, actions, metric):
        if metric.kind != "absolute-difference":
            return None
        vals = []
        for a in actions.actions:
            if a is NULL_ACTION:
                vals.append(self.theta_current)
            elif isinstance(a, (int, float, np.floating)):
                vals.append(float(a))
            else:
                return None
        n = self.n_units
        sums, sumsq = kernels.threshold_displacement(
            self.x_orig, self.reference, self.budget + BUDGET_TOL, self.cost_scale,
            np.array(vals), backend=self.backend)
        means = sums / n
        if n < 2:
            return [(float(m), 0.0) for m in means]
        var = np.maximum(sumsq - n * means ** 2, 0.0) / (n - 1)
        return [(float(m), float(np.sqrt(v / n))) for m, v in zip(means, var)]


def default_theta_grid(theta_sl, delta_gamma, n=601):
    span = 3.0 * max(delta_gamma, 1e-12)
    return np.linspace(theta_sl - span, theta_sl + span, n)


@dataclass
class MonopolyScenario:
    """Sampled 1-d monopoly economy with the firm currently at ``theta_sl``."""

    base: BaseDistribution
    delta_gamma: float
    n: int = 100_000
    seed: int = 0
    cost_scale: float = 1.0

    def __post_init__(self):
        from .core import derive_rng

        rng = derive_rng(self.seed, "population")
        self.x_orig = self.base.sample(self.n, rng)
        self.y = self.base.sample_labels(self.x_orig, rng)
        self.theta_sl = solve_theta_sl(self.base)

    def simulator(self, theta_current=None, backend=None):
        tc = self.theta_sl if theta_current is None else theta_current
        return StrategicSimulator(self.x_orig, self.delta_gamma, self.cost_scale, tc, backend=backend)

    def grid(self, n=601):
        return default_theta_grid(self.theta_sl, self.delta_gamma / self.cost_scale, n)

    def lemma_bound(self, theta_current=None) -> float:
        """Vectorized reachable-set bound for scalar features with ``|.|`` distance."""
        sim = self.simulator(theta_current)
        r = self.delta_gamma / self.cost_scale
        far = np.maximum(np.abs(sim.reference - (self.x_orig - r)), np.abs(sim.reference - (self.x_orig + r)))
        return float(np.sum(far) / self.n)
