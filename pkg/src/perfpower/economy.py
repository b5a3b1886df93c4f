"""Multi-firm prediction economies built on a monopoly distribution map.

Participants pick one of C firms uniformly at random and respond to that
firm's model as in the monopoly map. Firm ``i`` deploying ``theta`` against
the rest of a profile therefore faces risk
``(1/C) * (sum_{j != i} R(theta_j, theta) + R(theta, theta))``, which is the
exact expectation over the assignment on a fixed realization.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .core import ActionSet, CounterfactualSimulator, PowerEstimate, estimate_power
from .perfpred import (
    LocationShiftRealization,
    RegressionRealization,
    Realization,
    ex_post_optimize,
    map_power,
    stable_point,
)


class MixtureSimulator(CounterfactualSimulator):
    """One firm's counterfactuals in a C-firm uniform mixture.

    Units that picked the firm (drawn per replicate) respond to its new
    model; everyone else keeps their status-quo outcome. Only the firm's own
    customers can move, so the reference is the monopoly response to the
    firm's current model and distances match the full mixture exactly.
    With ``C = 1`` every unit is assigned and outcomes equal the monopoly
    simulator's.
    """

    def __init__(self, mono: CounterfactualSimulator, C: int):
        if C < 1:
            raise ValueError("need at least one firm")
        self.mono = mono
        self.C = int(C)
        super().__init__(mono.reference)

    def _respond(self, theta, rng):
        assigned = rng.integers(self.C, size=self.n_units) == 0
        out = self.mono.respond(theta, rng)
        mask = assigned.reshape((-1,) + (1,) * (out.ndim - 1))
        return np.where(mask, out, self.reference)


def mixture_power(real: Realization, phi, C, theta_grid, n_rep=4, seed=0) -> PowerEstimate:
    sim = MixtureSimulator(real.power_simulator(phi), C)
    return estimate_power(sim, ActionSet.from_values(theta_grid), real.metric, n_rep=n_rep, seed=seed)


class MixtureGame:
    """Grid game between C firms sharing a monopoly realization."""

    def __init__(self, real: Realization, C: int, theta_grid):
        if C < 1:
            raise ValueError("need at least one firm")
        self.real = real
        self.C = int(C)
        self.grid = np.asarray(theta_grid, dtype=float)
        self._pr = None
        self._rows = {}

    @property
    def pr(self):
        if self._pr is None:
            self._pr = np.asarray(self.real.performative_risks(self.grid), dtype=float)
        return self._pr

    def _row(self, phi):
        key = float(phi)
        if key not in self._rows:
            self._rows[key] = self.real.risk_matrix([key], self.grid)[0]
        return self._rows[key]

    def objective(self, others):
        """Firm risk over the grid given the other firms' models."""
        acc = np.zeros_like(self.grid)
        for phi in others:
            acc = acc + self._row(phi)
        return (acc + self.pr) / self.C

    def frozen_objective(self, profile):
        """Risk over the grid on the mixture distribution of a fixed profile."""
        acc = np.zeros_like(self.grid)
        for phi in profile:
            acc = acc + self._row(phi)
        return acc / self.C

    def value_at(self, others, theta):
        r = sum(float(self.real.decoupled_risk(p, theta)) for p in others)
        return (r + float(self.real.performative_risk(theta))) / self.C

    def best_response(self, others, current=None, tol=0.0):
        obj = self.objective(others)
        k = int(np.argmin(obj))
        if current is not None:
            kc = int(np.searchsorted(self.grid, current))
            if kc < self.grid.size and self.grid[kc] == current and obj[kc] <= obj[k] + tol:
                return float(current), 0.0
            improvement = float(self.value_at(others, current) - obj[k])
            return float(self.grid[k]), max(improvement, 0.0)
        return float(self.grid[k]), 0.0

    def residuals(self, thetas):
        out = []
        for i, th in enumerate(thetas):
            others = [t for j, t in enumerate(thetas) if j != i]
            obj = self.objective(others)
            out.append(max(0.0, self.value_at(others, th) - float(np.min(obj))))
        return out

    def symmetric_residuals(self):
        """Unilateral improvement available at every symmetric grid profile."""
        R = self.real.risk_matrix(self.grid, self.grid)
        obj = ((self.C - 1) * R + self.pr[None, :]) / self.C
        own = np.diag(obj)
        return np.maximum(own - obj.min(axis=1), 0.0)


@dataclass
class EquilibriumProfile:
    thetas: list
    residual: float
    converged: bool
    iterations: int
    symmetric: bool = field(init=False)

    def __post_init__(self):
        self.symmetric = len(set(self.thetas)) <= 1


def best_response_dynamics(real: Realization, C, theta_grid, max_iter=200, tol=1e-12, init=None):
    """Round-robin grid best responses until no firm can improve by more than ``tol``."""
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    game = MixtureGame(real, C, theta_grid)
    if init is None:
        init = ex_post_optimize(real, theta_grid, refine=False).theta
    thetas = list(np.broadcast_to(np.asarray(init, dtype=float), (C,)).astype(float))
    thetas = [float(game.grid[np.argmin(np.abs(game.grid - t))]) for t in thetas]
    for it in range(1, max_iter + 1):
        changed = False
        for i in range(C):
            others = thetas[:i] + thetas[i + 1:]
            new, _ = game.best_response(others, current=thetas[i], tol=tol)
            if new != thetas[i]:
                thetas[i] = new
                changed = True
        if not changed:
            res = max(game.residuals(thetas))
            return EquilibriumProfile(thetas, res, res <= tol, it)
    res = max(game.residuals(thetas))
    if res > tol:
        warnings.warn(f"best-response dynamics did not converge for C={C} (residual {res:.3g})")
    return EquilibriumProfile(thetas, res, res <= tol, max_iter)


def _smooth(real):
    return isinstance(real, (LocationShiftRealization, RegressionRealization))


def _refine_symmetric(real, C, grid, k):
    """Continuous symmetric equilibrium near grid index ``k`` for smooth maps."""
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]

    def argmin_given(phi):
        f = lambda t: ((C - 1) * real.decoupled_risk(phi, t) + real.performative_risk(t)) / C
        res = optimize.minimize_scalar(f, bounds=(grid[0], grid[-1]), method="bounded",
                                       options={"xatol": 1e-12})
        return float(res.x)

    h = lambda phi: argmin_given(phi) - phi
    if h(lo) * h(hi) > 0:
        return float(grid[k])
    return float(optimize.brentq(h, lo, hi, xtol=1e-12))


def symmetric_equilibrium(real: Realization, C, theta_grid, tol=1e-12, n_starts=8, max_iter=200):
    """Symmetric equilibrium reached from the learned model, plus all others on the grid.

    Returns ``(theta_star, info)``; ``theta_star`` is ``None`` when the grid
    holds no symmetric equilibrium. Smooth maps are refined off the grid.
    """
    grid = np.asarray(theta_grid, dtype=float)
    game = MixtureGame(real, C, grid)
    R = real.risk_matrix(grid, grid)
    obj = ((C - 1) * R + game.pr[None, :]) / C
    res = np.maximum(np.diag(obj) - obj.min(axis=1), 0.0)
    eq_idx = np.flatnonzero(res <= tol)

    def iterate(k):
        seen = set()
        for _ in range(max_iter):
            if res[k] <= tol:
                return k
            if k in seen:
                return None
            seen.add(k)
            k = int(np.argmin(obj[k]))
        return None

    theta_sl_k = int(np.argmin(R[np.argmin(game.pr)]))  # learned on the optimum's data
    starts = [theta_sl_k] + list(np.linspace(0, grid.size - 1, n_starts).round().astype(int))
    found = [iterate(int(s)) for s in starts]
    primary = found[0]
    if primary is None and eq_idx.size:
        primary = int(eq_idx[np.argmin(np.abs(eq_idx - theta_sl_k))])
    info = {
        "grid_equilibria": [float(grid[i]) for i in eq_idx],
        "multistart": [None if f is None else float(grid[f]) for f in found[1:]],
        "from_learned_start": found[0] is not None,
        "residual": None if primary is None else float(res[primary]),
    }
    if primary is None:
        return None, info
    theta = float(grid[primary])
    if _smooth(real) and 0 < primary < grid.size - 1:
        theta = _refine_symmetric(real, C, grid, primary)
    return theta, info


def retraining_gap(real, theta, theta_grid):
    """``R(theta, theta) - min_t R(theta, t)`` with the min refined for smooth maps."""
    grid = np.asarray(theta_grid, dtype=float)
    row = real.risk_matrix([theta], grid)[0]
    best = float(np.min(row))
    if _smooth(real):
        res = optimize.minimize_scalar(lambda t: float(real.decoupled_risk(theta, t)),
                                       bounds=(grid[0], grid[-1]), method="bounded",
                                       options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    own = float(real.performative_risk(theta))
    return max(own - best, 0.0)


def check_equilibrium_suboptimality(profile: EquilibriumProfile, real, dmap, theta_grid,
                                    power_per_firm) -> list:
    """Each firm's loss on the frozen equilibrium distribution vs the best model plus ``L_z P_i``."""
    grid = np.asarray(theta_grid, dtype=float)
    game = MixtureGame(real, len(profile.thetas), grid)
    frozen = game.frozen_objective(profile.thetas)
    lz = dmap.lipschitz_z(real, grid, [grid[0], grid[-1]] + list(profile.thetas))
    rows = []
    for i, th in enumerate(profile.thetas):
        p = power_per_firm[i]
        pval, pci = (p.value, p.ci_halfwidth) if isinstance(p, PowerEstimate) else (float(p), 0.0)
        own = sum(float(real.decoupled_risk(phi, th)) for phi in profile.thetas) / len(profile.thetas)
        best = float(np.min(frozen))
        rows.append({
            "firm": i,
            "theta": th,
            "loss": own,
            "best_loss": best,
            "excess": own - best,
            "bound": lz * pval,
            "slack": lz * pci,
            "ok": bool(own - best <= lz * pval + lz * pci + 1e-12),
        })
    return rows


def mixture_convergence_experiment(dmap, real: Realization, Cs, theta_grid, seed=0,
                                   n_rep=1, tol=1e-12) -> dict:
    """Symmetric equilibria and retraining gaps as the number of firms grows.

    The bound compares each gap with ``L_z * P / C`` where ``P`` is the
    monopoly power at the equilibrium model; the slack is ``L_z`` times the
    power CI over ``C``. The trend is summarized by the Spearman correlation
    of the gaps with ``1/C``.
    """
    Cs = [int(c) for c in Cs]
    if Cs != sorted(Cs):
        raise ValueError("Cs must be sorted ascending")
    grid = np.asarray(theta_grid, dtype=float)
    rows = []
    for C in Cs:
        theta, info = symmetric_equilibrium(real, C, grid, tol=tol)
        if theta is None:
            rows.append({"C": C, "theta_star": None, "flag": "no symmetric equilibrium on grid", **info})
            continue
        g = retraining_gap(real, theta, grid)
        p = map_power(real, theta, grid, seed=seed)
        lz = dmap.lipschitz_z(real, grid, [theta, grid[0], grid[-1]])
        bound = lz * p.value / C
        slack = lz * p.ci_halfwidth / C
        rows.append({
            "C": C,
            "theta_star": theta,
            "gap": g,
            "power": p.value,
            "power_ci": p.ci_halfwidth,
            "lipschitz_z": lz,
            "bound": bound,
            "slack": slack,
            "ok": bool(g <= bound + slack),
            "flag": None,
            **info,
        })
    ok_rows = [r for r in rows if r["theta_star"] is not None]
    gaps = np.array([r["gap"] for r in ok_rows])
    inv = np.array([1.0 / r["C"] for r in ok_rows])
    if len(ok_rows) >= 2 and np.ptp(gaps) > 0:
        rho = float(stats.spearmanr(gaps, inv).statistic)
    else:
        rho = math.nan
    return {"rows": rows, "spearman_gap_vs_invC": rho,
            "all_ok": all(r.get("ok", False) for r in rows)}


def collusion_comparison(real: Realization, theta_grid) -> dict:
    """Steering optimum vs retraining fixed point of the monopoly map."""
    grid = np.asarray(theta_grid, dtype=float)
    po = ex_post_optimize(real, grid)
    st = stable_point(real, grid)
    out = {"theta_po": po.theta, "pr_po": po.risk, "boundary_flag": po.on_boundary}
    if st is None:
        out.update(theta_st=None, distance=None, risk_difference=None,
                   flag="no stable point bracketed on grid")
        return out
    pr_st = float(real.performative_risk(st))
    out.update(theta_st=st, pr_st=pr_st, distance=abs(po.theta - st),
               risk_difference=pr_st - po.risk, flag=None)
    return out
