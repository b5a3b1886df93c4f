"""Performative risk on seeded distribution maps.

A map's ``realize(n, seed)`` fixes the randomness once (common random
numbers), so every risk evaluated on the returned realization compares
thetas on the same coupled population.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import kernels
from .core import ActionSet, CounterfactualSimulator, Metric, PowerEstimate, derive_rng, estimate_power
from .strategic import BUDGET_TOL, BaseDistribution, StrategicSimulator, solve_theta_sl, threshold_best_response

NO_DEPLOYMENT = math.inf


@dataclass(frozen=True)
class LossSpec:
    kind: str
    lipschitz_z: float | None = None
    strong_convexity: float = 0.0

    def __post_init__(self):
        if self.kind not in ("squared", "zero-one"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "zero-one" and self.strong_convexity != 0:
            raise ValueError("zero-one loss is not strongly convex")
        if self.strong_convexity < 0:
            raise ValueError("strong convexity must be >= 0")


class Realization:
    """Fixed draw from a distribution map; subclasses supply the risk matrix."""

    n: int

    def risk_matrix(self, phis, thetas) -> np.ndarray:
        raise NotImplementedError

    def decoupled_risk(self, phi, theta) -> float:
        return float(self.risk_matrix([phi], [theta])[0, 0])

    def performative_risk(self, theta) -> float:
        return self.decoupled_risk(theta, theta)

    def performative_risks(self, thetas) -> np.ndarray:
        return np.array([self.performative_risk(t) for t in np.atleast_1d(thetas)])

    def loss_samples(self, phi, theta) -> np.ndarray:
        raise NotImplementedError

    def power_simulator(self, phi) -> CounterfactualSimulator:
        raise NotImplementedError

    metric = Metric("absolute-difference")


class DistributionMap:
    loss: LossSpec
    smooth = False

    def realize(self, n: int, seed: int) -> Realization:
        raise NotImplementedError

    def lipschitz_z(self, real, thetas, phis) -> float:
        if self.loss.lipschitz_z is None:
            raise ValueError("no declared Lipschitz constant")
        return self.loss.lipschitz_z

    def strong_convexity(self, real) -> float:
        return self.loss.strong_convexity


# strategic classification -------------------------------------------------

class StrategicRealization(Realization):
    def __init__(self, x, y, weights, budget, scale):
        order = np.argsort(x, kind="stable")
        self.x = x[order]
        self.y = y[order]
        self.w = weights[order]
        self.n = self.x.shape[0]
        self.budget = float(budget)
        self.scale = float(scale)

    def risk_matrix(self, phis, thetas):
        return kernels.zero_one_risk_sums(self.x, self.w, self.budget + BUDGET_TOL, self.scale,
                                          phis, thetas) / self.n

    def performative_risks(self, thetas):
        return np.array([self.risk_matrix([t], [t])[0, 0] for t in np.atleast_1d(thetas)])

    def responses(self, phi):
        return threshold_best_response(self.x, phi, self.budget, self.scale)

    def loss_samples(self, phi, theta):
        acc = self.responses(phi) >= theta
        return np.where(acc, 1.0 - self.w, self.w)

    def power_simulator(self, phi):
        return StrategicSimulator(self.x, self.budget, self.scale, theta_current=phi)


class StrategicMap(DistributionMap):
    """Threshold classifiers facing strategic participants with scalar features.

    Loss is zero-one. With ``labels="expected"`` each unit's loss is averaged
    over its label posterior, which keeps the estimator unbiased and removes
    label noise from argmin comparisons; ``"sampled"`` uses drawn labels.
    """

    def __init__(self, base: BaseDistribution, delta_gamma: float, cost_scale=1.0,
                 labels="expected", lipschitz_z=1.0):
        if labels not in ("expected", "sampled"):
            raise ValueError("labels must be 'expected' or 'sampled'")
        self.base = base
        self.delta_gamma = float(delta_gamma)
        self.cost_scale = float(cost_scale)
        self.labels = labels
        self.loss = LossSpec("zero-one", lipschitz_z, 0.0)
        self.theta_sl = solve_theta_sl(base)

    @property
    def theta_po(self):
        return self.theta_sl + self.delta_gamma / self.cost_scale

    def realize(self, n, seed):
        rng = derive_rng(seed, "population")
        x = self.base.sample(n, rng)
        y = self.base.sample_labels(x, rng)
        w = self.base.posterior(x) if self.labels == "expected" else y.astype(float)
        return StrategicRealization(x, y, w, self.delta_gamma, self.cost_scale)


# squared-loss shift families ----------------------------------------------

class ShiftSimulator(CounterfactualSimulator):
    deterministic = True

    def __init__(self, outcome, phi):
        self.outcome = outcome
        super().__init__(outcome(phi))

    def _respond(self, theta, rng):
        return self.outcome(float(theta))


class LocationShiftRealization(Realization):
    def __init__(self, mu0, eps, sigma, xi):
        self.mu0, self.eps, self.sigma = mu0, eps, sigma
        self.xi = xi
        self.n = xi.shape[0]
        self.s1 = float(np.sum(xi) / self.n)
        self.v = float(np.sum((xi - self.s1) ** 2) / self.n)

    def risk_matrix(self, phis, thetas):
        phis = np.asarray(phis, dtype=float)[:, None]
        thetas = np.asarray(thetas, dtype=float)[None, :]
        m = self.mu0 + self.eps * phis + self.sigma * self.s1
        return (thetas - m) ** 2 + self.sigma ** 2 * self.v

    def performative_risks(self, thetas):
        t = np.asarray(thetas, dtype=float)
        return (t - (self.mu0 + self.eps * t + self.sigma * self.s1)) ** 2 + self.sigma ** 2 * self.v

    def z(self, phi):
        return self.mu0 + self.eps * phi + self.sigma * self.xi

    def loss_samples(self, phi, theta):
        return (theta - self.z(phi)) ** 2

    def power_simulator(self, phi):
        return ShiftSimulator(self.z, phi)


class LocationShiftMap(DistributionMap):
    """``z ~ N(mu0 + eps * theta, sigma^2)`` with loss ``(theta - z)^2``."""

    smooth = True

    def __init__(self, mu0, eps, sigma=1.0):
        if not sigma > 0:
            raise ValueError("sigma must be positive")
        if eps >= 1:
            raise ValueError("need eps < 1 for a finite performative optimum")
        self.mu0, self.eps, self.sigma = float(mu0), float(eps), float(sigma)
        self.loss = LossSpec("squared", None, 2.0)

    @property
    def theta_po(self):
        return self.mu0 / (1 - self.eps)

    theta_st = theta_po

    def realize(self, n, seed):
        xi = derive_rng(seed, "population").standard_normal(n)
        return LocationShiftRealization(self.mu0, self.eps, self.sigma, xi)

    def lipschitz_z(self, real, thetas, phis):
        zs = [self.mu0 + self.eps * p + self.sigma * e
              for p in (np.min(phis), np.max(phis)) for e in (real.xi.min(), real.xi.max())]
        return float(2 * max(abs(t - z) for t in (np.min(thetas), np.max(thetas)) for z in zs))


class RegressionRealization(Realization):
    metric = Metric("euclidean")

    def __init__(self, beta, eps, noise_sd, x, e):
        self.beta, self.eps, self.sd = beta, eps, noise_sd
        self.x, self.e = x, e
        self.n = x.shape[0]
        n = self.n
        self.sxx = float(np.sum(x * x) / n)
        self.sx = float(np.sum(x) / n)
        self.sxe = float(np.sum(x * e) / n)
        self.se = float(np.sum(e) / n)
        self.see = float(np.sum(e * e) / n)

    def _risk(self, phi, theta):
        a = self.beta - theta
        s = self.eps * phi
        return (a * a * self.sxx + 2 * a * (s * self.sx + self.sd * self.sxe)
                + s * s + 2 * s * self.sd * self.se + self.sd ** 2 * self.see)

    def risk_matrix(self, phis, thetas):
        return self._risk(np.asarray(phis, dtype=float)[:, None], np.asarray(thetas, dtype=float)[None, :])

    def performative_risks(self, thetas):
        t = np.asarray(thetas, dtype=float)
        return self._risk(t, t)

    def y(self, phi):
        return self.beta * self.x + self.eps * phi + self.sd * self.e

    def z(self, phi):
        return np.column_stack([self.x, self.y(phi)])

    def loss_samples(self, phi, theta):
        return (self.y(phi) - theta * self.x) ** 2

    def power_simulator(self, phi):
        return ShiftSimulator(self.z, phi)


class RegressionShiftMap(DistributionMap):
    """Linear regression whose outcomes shift with the deployed slope.

    ``x ~ N(mu_x, 1)``, ``y = beta x + eps theta + noise``, loss
    ``(y - theta x)^2``. Stable and optimal slopes differ whenever
    ``eps * mu_x != 0``, so retraining and steering genuinely disagree.
    """

    smooth = True

    def __init__(self, beta=1.0, eps=0.5, mu_x=1.0, noise_sd=1.0):
        self.beta, self.eps, self.mu_x, self.noise_sd = float(beta), float(eps), float(mu_x), float(noise_sd)
        s = 1 + self.mu_x ** 2
        if s - 2 * self.eps * self.mu_x + self.eps ** 2 <= 0 or s - self.eps * self.mu_x == 0:
            raise ValueError("degenerate regression shift")
        self.loss = LossSpec("squared", None, 2.0 * s)

    @property
    def theta_st(self):
        s = 1 + self.mu_x ** 2
        return self.beta * s / (s - self.eps * self.mu_x)

    @property
    def theta_po(self):
        s = 1 + self.mu_x ** 2
        return self.beta * (s - self.eps * self.mu_x) / (s - 2 * self.eps * self.mu_x + self.eps ** 2)

    def realize(self, n, seed):
        rng = derive_rng(seed, "population")
        x = self.mu_x + rng.standard_normal(n)
        e = rng.standard_normal(n)
        return RegressionRealization(self.beta, self.eps, self.noise_sd, x, e)

    def lipschitz_z(self, real, thetas, phis):
        ts = (float(np.min(thetas)), float(np.max(thetas)))
        res = max(np.max(np.abs(real.y(p) - t * real.x)) for p in (np.min(phis), np.max(phis)) for t in ts)
        return float(2 * res * math.sqrt(1 + max(t * t for t in ts)))

    def strong_convexity(self, real):
        return 2.0 * real.sxx


# optimization ---------------------------------------------------------------

@dataclass
class OptResult:
    theta: float
    risk: float
    index: int
    on_boundary: bool


def _grid_argmin(values, grid):
    values = np.asarray(values)
    k = int(np.argmin(values))  # first occurrence, i.e. smallest theta on an ascending grid
    return k, k == 0 or k == len(grid) - 1


def _refine(fun, grid, k):
    lo, hi = grid[k - 1], grid[k + 1]
    res = optimize.minimize_scalar(fun, bracket=(lo, grid[k], hi), method="golden", tol=1e-10)
    if lo <= res.x <= hi and res.fun <= fun(grid[k]):
        return float(res.x), float(res.fun)
    return float(grid[k]), float(fun(grid[k]))


def ex_ante_optimize(phi, real: Realization, theta_grid, refine=True) -> OptResult:
    """Minimize ``R(phi, .)``: the model learned from data induced by ``phi``."""
    grid = np.asarray(theta_grid, dtype=float)
    vals = real.risk_matrix([phi], grid)[0]
    k, edge = _grid_argmin(vals, grid)
    theta, risk = float(grid[k]), float(vals[k])
    if refine and not edge and isinstance(real, (LocationShiftRealization, RegressionRealization)):
        theta, risk = _refine(lambda t: float(real.risk_matrix([phi], [t])[0, 0]), grid, k)
    return OptResult(theta, risk, k, edge)


def ex_post_optimize(real: Realization, theta_grid, refine=True) -> OptResult:
    """Minimize the performative risk over the grid, with local refinement for smooth maps."""
    grid = np.asarray(theta_grid, dtype=float)
    vals = real.performative_risks(grid)
    k, edge = _grid_argmin(vals, grid)
    theta, risk = float(grid[k]), float(vals[k])
    if refine and not edge and isinstance(real, (LocationShiftRealization, RegressionRealization)):
        theta, risk = _refine(lambda t: float(real.performative_risks([t])[0]), grid, k)
    return OptResult(theta, risk, k, edge)


def performative_risk(theta, dmap: DistributionMap, n, seed) -> float:
    return dmap.realize(n, seed).performative_risk(theta)


def decoupled_risk(phi, theta, dmap: DistributionMap, n, seed) -> float:
    return dmap.realize(n, seed).decoupled_risk(phi, theta)


def decompose_risk(real: Realization, phi, theta) -> dict:
    """Split ``PR(theta)`` into ``R(phi, theta)`` plus a distribution-shift term.

    ``R(theta, theta)`` is taken from the decoupled path, which agrees with
    ``PR(theta)`` exactly on a shared realization. The float sum
    ``ex_ante + shift`` is exact when the two risks are within a factor of
    two of each other, and otherwise off by at most an ulp of the largest term.
    """
    a = float(real.decoupled_risk(phi, theta))
    diag = float(real.decoupled_risk(theta, theta))
    return {"ex_ante": a, "shift": diag - a, "performative": float(real.performative_risk(theta))}


def retraining_displacement(phi, real, theta_grid):
    return ex_ante_optimize(phi, real, theta_grid).theta - phi


def stable_point(real: Realization, theta_grid, tol=1e-9):
    """Fixed point of retraining, bracketed on the grid and refined by bisection.

    Scans the displacement ``d(phi) = argmin R(phi, .) - phi`` for the first
    change from positive to non-positive, then bisects. Returns ``None`` when
    the grid holds no such bracket or the bracket comes from an argmin clipped
    to the grid edge.
    """
    grid = np.asarray(theta_grid, dtype=float)
    d = np.array([retraining_displacement(p, real, grid) for p in grid])
    if d[0] <= 0:
        # a zero displacement from an argmin clipped to the grid edge is not a fixed point
        ok = d[0] == 0 and not ex_ante_optimize(grid[0], real, grid).on_boundary
        return float(grid[0]) if ok else None
    idx = np.flatnonzero(d <= 0)
    if idx.size == 0:
        return None
    lo, hi = float(grid[idx[0] - 1]), float(grid[idx[0]])
    if ex_ante_optimize(hi, real, grid).on_boundary:
        return None
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if retraining_displacement(mid, real, grid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


def map_power(real: Realization, phi, theta_grid, seed=0) -> PowerEstimate:
    """Power of the firm over the threshold/parameter grid when ``phi`` is deployed."""
    sim = real.power_simulator(phi)
    return estimate_power(sim, ActionSet.from_values(theta_grid), real.metric, n_rep=1, seed=seed)


def check_prop_sl(dmap: DistributionMap, real: Realization, theta_grid, phi,
                  power: PowerEstimate | None = None) -> dict:
    """Risk gap and parameter distance between learning and steering, against the power bound.

    The learned model minimizes ``R(phi, .)``; the steering model minimizes
    the performative risk. Both inequalities get three-standard-error slack:
    the risk gap from the per-unit loss differences, the bound from the
    power estimate's CI.
    """
    grid = np.asarray(theta_grid, dtype=float)
    if power is None:
        power = map_power(real, phi, grid)
    sl = ex_ante_optimize(phi, real, grid)
    po = ex_post_optimize(real, grid)
    pr_sl = real.performative_risk(sl.theta)
    pr_po = real.performative_risk(po.theta)
    lz = dmap.lipschitz_z(real, grid, [phi if math.isfinite(phi) else grid[0], grid[0], grid[-1]])
    diff = real.loss_samples(sl.theta, sl.theta) - real.loss_samples(po.theta, po.theta)
    n = diff.shape[0]
    se = float(np.sqrt(np.sum((diff - np.sum(diff) / n) ** 2) / (n - 1) / n)) if n > 1 else 0.0
    bound = 4.0 * lz * power.value
    slack = 3.0 * se + 4.0 * lz * power.ci_halfwidth
    step = float(np.max(np.diff(grid))) if grid.size > 1 else 0.0
    out = {
        "phi": phi,
        "theta_sl": sl.theta,
        "theta_po": po.theta,
        "boundary_flag": bool(sl.on_boundary or po.on_boundary),
        "pr_sl": pr_sl,
        "pr_po": pr_po,
        "gap": pr_sl - pr_po,
        "lipschitz_z": lz,
        "power": power.value,
        "power_ci": power.ci_halfwidth,
        "risk_bound": bound,
        "slack": slack,
        "risk_ok": bool(pr_sl - pr_po <= bound + slack),
        "grid_step": step,
    }
    gsc = dmap.strong_convexity(real)
    out["strong_convexity"] = gsc
    if gsc > 0:
        dist = abs(sl.theta - po.theta)
        dbound = math.sqrt(8.0 * lz * power.value / gsc)
        out.update(distance=dist, distance_bound=dbound, distance_ok=bool(dist <= dbound + step))
    else:
        out.update(distance=abs(sl.theta - po.theta), distance_bound=None, distance_ok=None,
                   notice="loss not strongly convex; distance check skipped")
    return out
