"""Two firms competing with thresholds on a strategic population.

Participants know both thresholds, adapt toward the firm that gives them
the larger utility and break ties toward the lower threshold (a fair coin
when thresholds coincide). Firms earn ``+alpha`` per accepted positive and
``-alpha`` per accepted negative; with labels averaged over the posterior a
participant at ``x`` is worth ``alpha * (2 p(x) - 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .core import ActionSet, CounterfactualSimulator, Metric, estimate_power, derive_rng
from .strategic import BUDGET_TOL, BaseDistribution, CostModel, StrategicSimulator

QUAD_KW = dict(epsabs=1e-14, epsrel=1e-12, limit=200)


class PowerCost:
    """``scale * |x' - x| ** exponent``; exponent 1 is the absolute-difference metric."""

    def __init__(self, exponent=1.0, scale=1.0):
        if not exponent > 0 or not scale > 0:
            raise ValueError("exponent and scale must be positive")
        self.exponent = float(exponent)
        self.scale = float(scale)
        self.kind = "power"

    def __call__(self, x, x2):
        return self.scale * np.abs(np.asarray(x2, dtype=float) - np.asarray(x, dtype=float)) ** self.exponent


def _closed_form_xi(cost, theta, budget):
    if isinstance(cost, CostModel) and cost.kind == "absolute-difference":
        return theta - budget / cost.scale
    return None


def xi_inverse(theta, budget, cost, bracket_span=1.0, max_doublings=60, tol=1e-13):
    """Lowest original feature that can just afford to reach ``theta``.

    Solves ``c(xi, theta) = budget`` for ``xi < theta`` by bisection, growing
    the bracket below ``theta`` until the cost exceeds the budget.
    """
    if not budget > 0:
        raise ValueError("budget must be positive")
    theta = float(theta)
    g = lambda x: float(cost(x, theta)) - budget
    span = float(bracket_span)
    for _ in range(max_doublings):
        if g(theta - span) > 0:
            break
        span *= 2
    else:
        raise ValueError(f"cost stays below the budget below theta={theta!r}; bracket exhausted")
    return float(optimize.bisect(g, theta - span, theta, xtol=tol * max(1.0, abs(theta)), maxiter=500))


@dataclass
class CompetitionScenario:
    base: BaseDistribution
    cost: object
    gamma: float = 1.0
    alpha: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0 or not self.alpha > 0:
            raise ValueError("gamma and alpha must be positive")

    def xi(self, theta):
        cf = _closed_form_xi(self.cost, theta, self.gamma)
        return cf if cf is not None else xi_inverse(theta, self.gamma, self.cost)

    def reaches(self, x, theta):
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            return (x >= theta) | (np.asarray(self.cost(x, theta)) <= self.gamma + BUDGET_TOL)

    def utility_of_firm(self, x, theta):
        """Participant utility from applying to a firm with threshold ``theta``."""
        x = np.asarray(x, dtype=float)
        c = np.where(x >= theta, 0.0, np.asarray(self.cost(x, theta), dtype=float))
        return np.where(c <= self.gamma + BUDGET_TOL, self.gamma - np.minimum(c, self.gamma), 0.0)

    def best_response(self, x, theta):
        x = np.asarray(x, dtype=float)
        move = (x < theta) & self.reaches(x, theta)
        return np.where(move, theta, x)

    def value_density(self, x):
        return self.base.pdf(x) * (2.0 * self.base.posterior(x) - 1.0)


def participant_choice(theta1, theta2, x_orig, gamma, cost, rng):
    """Index (0 or 1) of the firm each participant picks."""
    sc = CompetitionScenario(BaseDistribution("uniform", (0, 1)), cost, gamma)
    return _choice(sc, theta1, theta2, x_orig, rng.random(np.shape(x_orig)))


def _choice(sc, theta1, theta2, x, coin):
    u1 = sc.utility_of_firm(x, theta1)
    u2 = sc.utility_of_firm(x, theta2)
    if theta1 == theta2:
        return np.where(coin < 0.5, 0, 1)
    lower_first = theta1 < theta2
    pick_first = (u1 > u2) | ((u1 == u2) & lower_first)
    return np.where(pick_first, 0, 1)


def share(theta_self, theta_other):
    """Fraction of participants a firm wins once utilities tie toward the lower threshold."""
    if theta_self < theta_other:
        return 1.0
    if theta_self == theta_other:
        return 0.5
    return 0.0


def accepted_value(sc: CompetitionScenario, xi) -> float:
    """``int_xi^inf pdf(x) (2 p(x) - 1) dx`` by adaptive quadrature."""
    lo, hi = sc.base.support
    a = max(xi, lo)
    if a >= hi:
        return 0.0
    val, _ = integrate.quad(sc.value_density, a, hi, **QUAD_KW)
    return float(val)


def firm_utilities(theta1, theta2, sc: CompetitionScenario, n, seed=0):
    """MC payoffs ``[(mean, se), (mean, se)]`` of both firms on one shared draw."""
    if n < 1:
        raise ValueError("Monte Carlo needs n >= 1")
    rng = derive_rng(seed, "firm-utility")
    x = sc.base.sample(n, rng)
    coin = rng.random(n)
    pick = _choice(sc, theta1, theta2, x, coin)
    worth = sc.alpha * (2.0 * sc.base.posterior(x) - 1.0)
    out = []
    for i, th in enumerate((theta1, theta2)):
        v = worth * (sc.reaches(x, th) & (pick == i))
        mean = float(np.sum(v) / n)
        se = float(np.sqrt(np.sum((v - mean) ** 2) / (n - 1) / n)) if n > 1 else 0.0
        out.append((mean, se))
    return out


def firm_utility(theta_self, theta_other, sc: CompetitionScenario, n=None, seed=0, method="mc"):
    """Expected firm payoff; ``method="mc"`` returns ``(mean, se)``, ``"quad"`` a float."""
    if method == "quad":
        s = share(theta_self, theta_other)
        return 0.0 if s == 0 else sc.alpha * s * accepted_value(sc, sc.xi(theta_self))
    if n is None:
        raise ValueError("Monte Carlo needs n >= 1")
    return firm_utilities(theta_self, theta_other, sc, n, seed)[0]


def conditional_positive_rate(sc: CompetitionScenario, xi) -> float:
    """``E[p(x) | x >= xi]`` under the base distribution."""
    lo, hi = sc.base.support
    a = max(xi, lo)
    mass = sc.base.prob(a, hi) if math.isfinite(hi) else float(sc.base.sf(a))
    if mass <= 0:
        raise ValueError(f"no base mass above xi={xi!r}")
    num, _ = integrate.quad(lambda x: sc.base.pdf(x) * sc.base.posterior(x), a, hi, **QUAD_KW)
    return float(num) / mass


def _unconditional_rate(sc):
    lo, hi = sc.base.support
    num, _ = integrate.quad(lambda x: sc.base.pdf(x) * sc.base.posterior(x), lo, hi, **QUAD_KW)
    return float(num)


class NoFiniteRootError(ValueError):
    pass


def zero_profit_equilibrium(sc: CompetitionScenario, tol=1e-9) -> float:
    """Symmetric threshold where accepted participants are positive half the time.

    Bisects over ``theta`` on ``E[p | x >= xi(theta)] - 1/2``, which is
    increasing in ``theta``; raises :class:`NoFiniteRootError` when the
    unconditional positive rate is already at least one half.
    """
    if _unconditional_rate(sc) >= 0.5 - 1e-12:
        raise NoFiniteRootError("no finite root: unconditional positive rate is at least 1/2")
    h = lambda t: conditional_positive_rate(sc, sc.xi(t)) - 0.5
    loc = sc.base.params[0] if sc.base.family != "uniform" else 0.5 * sum(sc.base.params)
    span = max(sc.base.scale, sc.gamma)
    lo, hi = loc - span, loc + span
    lo_s, hi_s = sc.base.support
    for _ in range(60):
        try:
            if h(hi) > 0:
                break
        except ValueError:
            raise NoFiniteRootError("conditional positive rate never exceeds 1/2") from None
        hi += span
        span *= 2
    else:
        raise NoFiniteRootError("conditional positive rate never exceeds 1/2")
    span = max(sc.base.scale, sc.gamma)
    for _ in range(60):
        if sc.xi(lo) <= lo_s or h(lo) < 0:
            break
        lo -= span
        span *= 2
    if not h(lo) < 0:
        raise NoFiniteRootError("could not bracket the zero-profit threshold from below")
    theta = float(optimize.bisect(h, lo, hi, xtol=1e-14, maxiter=500))
    if abs(h(theta)) > tol:
        raise RuntimeError(f"zero-profit residual {h(theta):.3g} above tolerance")
    return theta


def feasible_min_threshold(theta_other, sc: CompetitionScenario, tol=1e-12) -> float:
    """Infimum of thresholds giving a firm non-negative utility against ``theta_other``.

    Thresholds above ``theta_other`` win nobody and earn exactly zero, so the
    infimum never exceeds ``theta_other``; below it the firm wins everyone
    and the utility sign is found by bisection. Returns ``inf`` when no
    acceptance is ever profitable (the posterior stays below one half).
    """
    lo_s, hi_s = sc.base.support
    probe = hi_s if math.isfinite(hi_s) else sc.base.params[0] + 50 * sc.base.scale
    if float(sc.base.posterior(probe)) < 0.5:
        return math.inf
    u = lambda t: firm_utility(t, theta_other + 1.0, sc, method="quad")
    if u(theta_other) < 0:
        return float(theta_other)
    span = max(sc.base.scale, sc.gamma)
    lo = theta_other - span
    for _ in range(60):
        if u(lo) < 0 or sc.xi(lo) <= lo_s:
            break
        lo -= span
        span *= 2
    if u(lo) >= 0:
        return float(lo)
    return float(optimize.bisect(u, lo, theta_other, xtol=tol, maxiter=500))


def competition_power_bound(theta_min, theta, sc: CompetitionScenario, L=1.0) -> float:
    if theta < theta_min:
        raise ValueError("need theta_min <= theta")
    if theta == theta_min:
        return 0.0
    reach = float(sc.base.cdf(sc.xi(theta)) - sc.base.cdf(sc.xi(theta_min)))
    return L * min(float(sc.cost(theta_min, theta)), sc.gamma) + sc.gamma * L * reach


class TwoFirmSimulator(CounterfactualSimulator):
    """Firm 0 changes its threshold while firm 1 stays at ``theta_other``.

    Coins for equal-threshold ties are fixed per unit, so the status quo and
    every counterfactual share them.
    """

    deterministic = True

    def __init__(self, sc: CompetitionScenario, x_orig, theta_current, theta_other, coin):
        self.sc = sc
        self.x = np.asarray(x_orig, dtype=float)
        self.theta_other = float(theta_other)
        self.coin = np.asarray(coin, dtype=float)
        self.theta_current = float(theta_current)
        super().__init__(self._outcome(self.theta_current))

    def _outcome(self, theta):
        pick = _choice(self.sc, theta, self.theta_other, self.x, self.coin)
        target = np.where(pick == 0, theta, self.theta_other)
        move = (self.x < target) & self.sc.reaches(self.x, target)
        return np.where(move, target, self.x)

    def _respond(self, theta, rng):
        return self._outcome(float(theta))


def sample_population(sc, n, seed):
    rng = derive_rng(seed, "population")
    x = sc.base.sample(n, rng)
    coin = derive_rng(seed, "coin").random(n)
    return x, coin


def feasible_grid(theta_star, resolution, span):
    k = int(math.floor(span / resolution + 1e-9))
    return theta_star + resolution * np.arange(k + 1)


def verify_zero_power(sc: CompetitionScenario, resolution=0.01, span=None, n=100_000, seed=0,
                      eps_zero=1e-6) -> dict:
    """Power of a firm at the zero-profit equilibrium over its feasible thresholds.

    Also runs the monopoly control (the other firm removed) on the same
    population and grid, and the competition bound at the equilibrium.
    """
    theta_star = zero_profit_equilibrium(sc)
    span = 3.0 * sc.gamma if span is None else span
    grid = feasible_grid(theta_star, resolution, span)
    actions = ActionSet.from_values(grid)
    x, coin = sample_population(sc, n, seed)
    metric = Metric("absolute-difference")
    duo = TwoFirmSimulator(sc, x, theta_star, theta_star, coin)
    p = estimate_power(duo, actions, metric, seed=seed)
    if isinstance(sc.cost, CostModel) and sc.cost.kind == "absolute-difference":
        mono = StrategicSimulator(x, sc.gamma, sc.cost.scale, theta_current=theta_star)
    else:
        mono = _GenericMonopoly(sc, x, theta_star)
    pm = estimate_power(mono, actions, metric, seed=seed)
    bound = competition_power_bound(theta_star, theta_star, sc)
    return {
        "theta_star": theta_star,
        "xi_star": sc.xi(theta_star),
        "grid_min": float(grid[0]),
        "grid_max": float(grid[-1]),
        "grid_points": int(grid.size),
        "power": p.value,
        "power_ci": p.ci_halfwidth,
        "power_ok": bool(p.value <= eps_zero + p.ci_halfwidth),
        "monopoly_power": pm.value,
        "monopoly_ci": pm.ci_halfwidth,
        "monopoly_argmax": pm.argmax_action,
        "bound_at_equilibrium": bound,
        "bound_ok": bound == 0.0,
    }


class _GenericMonopoly(CounterfactualSimulator):
    deterministic = True

    def __init__(self, sc, x, theta_current):
        self.sc = sc
        self.x = x
        super().__init__(sc.best_response(x, theta_current))

    def _respond(self, theta, rng):
        return self.sc.best_response(self.x, float(theta))


def deviation_scan(sc: CompetitionScenario, theta_star, n=1_000_000, seed=0, n_points=50, span=None):
    """Utilities of unilateral deviations from the symmetric equilibrium.

    Feasible deviations (at or above ``theta_star``) are checked by MC with
    three-standard-error slack; deviations below are checked on the
    quadrature path, where they must lose money.
    """
    span = 3.0 * sc.gamma if span is None else span
    above = np.linspace(theta_star, theta_star + span, n_points)
    below = np.linspace(theta_star - span, theta_star, n_points + 1)[:-1]
    rows = []
    for t in above:
        m, se = firm_utility(float(t), theta_star, sc, n=n, seed=seed)
        rows.append({"theta": float(t), "utility": m, "se": se, "feasible": True,
                     "ok": bool(m <= 3 * se)})
    for t in below:
        u = firm_utility(float(t), theta_star, sc, method="quad")
        rows.append({"theta": float(t), "utility": u, "se": 0.0, "feasible": False, "ok": bool(u < 0)})
    return {"rows": rows, "passed": all(r["ok"] for r in rows)}
