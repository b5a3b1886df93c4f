"""Top-2 recommender worlds, position effects and discontinuity estimates.

Each viewer sees the two highest-scoring items (ties go to the lower item
index) and clicks at most once: slot 1 with probability
``base_click[i1] * m1``, slot 2 with ``base_click[i2] * m2``. Item 0 is the
empty slot and never gets clicked, so its histogram coordinate collects the
no-consumption mass.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .core import ActionSet, CounterfactualSimulator, Metric, derive_rng, estimate_power, fmt_float

log = logging.getLogger(__name__)

CHAIN_TOL = 1e-12


@dataclass
class RecommenderWorld:
    base_click: np.ndarray
    m1: float
    m2: float
    scores: np.ndarray

    def __post_init__(self):
        self.base_click = np.asarray(self.base_click, dtype=float)
        self.scores = np.asarray(self.scores, dtype=float)
        n, C = self.base_click.shape
        if C < 3:
            raise ValueError("need the empty item plus at least two content items")
        if self.scores.shape != (n, C):
            raise ValueError("scores must be viewers x items")
        if np.any(self.base_click < 0) or np.any(self.base_click > 1):
            raise ValueError("base click probabilities must lie in [0, 1]")
        if np.any(self.base_click[:, 0] != 0):
            raise ValueError("item 0 is the empty slot and cannot be clicked")
        if not (self.m1 >= self.m2 >= 0 and self.m1 + self.m2 <= 1):
            raise ValueError("need m1 >= m2 >= 0 and m1 + m2 <= 1")

    @property
    def n_viewers(self):
        return self.base_click.shape[0]

    @property
    def n_items(self):
        return self.base_click.shape[1]

    @property
    def delta(self) -> float:
        """Largest gap between a viewer's top two scores."""
        top = np.sort(self.scores, axis=1)[:, -2:]
        return float(np.max(top[:, 1] - top[:, 0]))


def random_world(n_viewers, C, rng, m_max=0.5) -> RecommenderWorld:
    bc = rng.random((n_viewers, C))
    bc[:, 0] = 0.0
    m1 = rng.uniform(0, m_max)
    m2 = rng.uniform(0, m1)
    return RecommenderWorld(bc, m1, m2, rng.random((n_viewers, C)))


def kappa(scores):
    """Top-2 item indices per viewer, ties broken toward the lower index."""
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    order = np.argsort(-scores, axis=1, kind="stable")
    return order[:, 0], order[:, 1]


def histograms(world: RecommenderWorld, scores) -> np.ndarray:
    """Consumption histograms of every viewer under a score matrix."""
    i1, i2 = kappa(scores)
    rows = np.arange(world.n_viewers)
    a = world.base_click[rows, i1] * world.m1
    b = world.base_click[rows, i2] * world.m2
    h = np.zeros((world.n_viewers, world.n_items))
    h[rows, i1] += a
    h[rows, i2] += b
    h[:, 0] += 1.0 - a - b
    return h


def consumption_histogram(world: RecommenderWorld, viewer: int, score_fn) -> np.ndarray:
    s = score_fn(viewer) if callable(score_fn) else np.asarray(score_fn, dtype=float)[viewer]
    s = np.asarray(s, dtype=float)
    i1, i2 = kappa(s[None, :])
    i1, i2 = int(i1[0]), int(i2[0])
    a = world.base_click[viewer, i1] * world.m1
    b = world.base_click[viewer, i2] * world.m2
    if not (0 <= a <= 1 and 0 <= b <= 1 and a + b <= 1):
        raise ValueError(f"click probabilities out of range for viewer {viewer}")
    h = np.zeros(world.n_items)
    h[i1] += a
    h[i2] += b
    h[0] += 1.0 - a - b
    return h


def build_swap_action(world: RecommenderWorld) -> np.ndarray:
    """Scores with every viewer's top two exchanged."""
    s = world.scores
    i1, i2 = kappa(s)
    rows = np.arange(world.n_viewers)
    ties = s[rows, i1] == s[rows, i2]
    if ties.any():
        log.info("%d viewers have tied top scores; order fixed by item index", int(ties.sum()))
    out = s.copy()
    out[rows, i1] = s[rows, i2]
    out[rows, i2] = s[rows, i1]
    if np.max(np.abs(out - s)) > world.delta:
        raise AssertionError("swap left the local perturbation set")
    return out


class DisplaySimulator(CounterfactualSimulator):
    """Exact consumption histograms under alternative score functions."""

    deterministic = True

    def __init__(self, world: RecommenderWorld):
        self.world = world
        super().__init__(histograms(world, world.scores))

    def _respond(self, scores, rng):
        return histograms(self.world, scores)


def causal_effect_position(world: RecommenderWorld, n_rep=0, seed=0) -> dict:
    """Effect on the initially-top item of flipping the first two slots.

    ``n_rep = 0`` evaluates probabilities exactly; otherwise click outcomes
    under both slot orders are simulated ``n_rep`` times per viewer with
    shared uniforms. ``beta`` takes the absolute value of the population
    mean; ``mean_abs_effect`` averages per-viewer absolute effects.
    """
    i1, i2 = kappa(world.scores)
    rows = np.arange(world.n_viewers)
    b1 = world.base_click[rows, i1]
    b2 = world.base_click[rows, i2]
    if n_rep == 0:
        per = b1 * (world.m2 - world.m1)
        mean = float(np.sum(per) / per.size)
        return {"beta": abs(mean), "signed": mean, "se": 0.0,
                "mean_abs_effect": float(np.sum(np.abs(per)) / per.size), "exact": True}
    acc = np.zeros(world.n_viewers)
    for r in range(n_rep):
        u = derive_rng(seed, "flip", r).random(world.n_viewers)
        y0 = u < b1 * world.m1
        a_flip = b2 * world.m1
        y1 = (u >= a_flip) & (u < a_flip + b1 * world.m2)
        acc += y1.astype(float) - y0.astype(float)
    per = acc / n_rep
    n = per.size
    mean = float(np.sum(per) / n)
    se = float(np.sqrt(np.sum((per - mean) ** 2) / (n - 1) / n)) if n > 1 else 0.0
    return {"beta": abs(mean), "signed": mean, "se": se,
            "mean_abs_effect": float(np.sum(np.abs(per)) / n), "exact": False}


def perturbation_actions(world: RecommenderWorld, n_random=8, fractions=(0.25, 0.5, 0.75), seed=0):
    """Score functions inside the local perturbation set, swap last."""
    d = world.delta
    s = world.scores
    items = []
    for k in range(n_random):
        rng = derive_rng(seed, "perturb", k)
        items.append((f"perturb-{k}", s + d * rng.uniform(-1, 1, size=s.shape)))
    swap = build_swap_action(world)
    for frac in fractions:
        pick = derive_rng(seed, "partial", fmt_float(frac)).random(world.n_viewers) < frac
        items.append((f"partial-swap-{frac}", np.where(pick[:, None], swap, s)))
    items.append(("swap", swap))
    return ActionSet(items)


def power_lower_bound_ddd(world: RecommenderWorld, n_rep=0, seed=0, n_random=8) -> dict:
    """Power over local perturbations versus the causal effect of position.

    Checks the chain power >= l1 swap effect >= mean |top-item effect| >=
    beta, with ``CHAIN_TOL`` slack for the exact links and three standard
    errors of the effect estimate for the final comparison.
    """
    sim = DisplaySimulator(world)
    actions = perturbation_actions(world, n_random=n_random, seed=seed)
    p = estimate_power(sim, actions, Metric("l1-histogram"), seed=seed)
    swap_h = histograms(world, build_swap_action(world))
    l1_swap = float(np.sum(np.sum(np.abs(swap_h - sim.reference), axis=1)) / world.n_viewers)
    exact = causal_effect_position(world, 0)
    eff = exact if n_rep == 0 else causal_effect_position(world, n_rep, seed)
    chain = [p.value + CHAIN_TOL >= l1_swap,
             l1_swap + CHAIN_TOL >= exact["mean_abs_effect"],
             exact["mean_abs_effect"] + CHAIN_TOL >= exact["beta"]]
    return {
        "power": p.value,
        "power_ci": p.ci_halfwidth,
        "argmax_action": p.argmax_action,
        "l1_swap_effect": l1_swap,
        "mean_abs_effect": exact["mean_abs_effect"],
        "beta_exact": exact["beta"],
        "beta_hat": eff["beta"],
        "beta_se": eff["se"],
        "delta": world.delta,
        "chain_ok": all(chain),
        "bound_ok": bool(p.value >= eff["beta"] - 3 * eff["se"]),
    }


# synthetic impression logs ------------------------------------------------

@dataclass
class LogModel:
    """Click model for the impressions around a slot boundary.

    Click probability is ``baseline + effect * [slot 1] + slope * z +
    slope_jump * z * [slot 1] + g(k)`` with ``z`` the score centered at the
    threshold and ``g`` zero-mean keyword effects, clipped to [0, 1].
    """

    baseline: float = 0.023260
    effect: float = 0.0048
    slope: float = 0.0
    slope_jump: float = 0.0
    n_keywords: int = 200
    keyword_sd: float = 0.005
    score_sd: float = 0.5
    threshold: float = 0.0


@dataclass
class ImpressionLog:
    keyword_id: np.ndarray
    position: np.ndarray
    score: np.ndarray
    click: np.ndarray

    def __len__(self):
        return int(self.click.shape[0])

    HEADER = ("keyword_id", "position", "score", "click")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(",".join(self.HEADER) + "\n")
            fh.writelines(f"{k},{p},{repr(float(z))},{c}\n" for k, p, z, c in
                          zip(self.keyword_id.tolist(), self.position.tolist(),
                              self.score.tolist(), self.click.tolist()))

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != cls.HEADER:
                raise ValueError(f"unexpected log header {header!r}")
            data = np.loadtxt(fh, delimiter=",", dtype=str, ndmin=2)
        if data.size == 0:
            raise ValueError("log file has no rows")
        return cls(data[:, 0].astype(np.int64), data[:, 1].astype(np.int64),
                   data[:, 2].astype(float), data[:, 3].astype(np.int64))


def click_probability(model: LogModel, position, score, g):
    z = score - model.threshold
    top = (position == 1).astype(float)
    p = model.baseline + model.effect * top + model.slope * z + model.slope_jump * z * top + g
    return np.clip(p, 0.0, 1.0)


def keyword_effects(model: LogModel, seed):
    g = derive_rng(seed, "keywords").normal(0.0, model.keyword_sd, model.n_keywords)
    return g - np.sum(g) / g.size if g.size > 1 else np.zeros_like(g)


def generate_logs(model: LogModel, n_impressions, seed=0) -> ImpressionLog:
    """Impressions with scores around the threshold; slot 1 iff the score clears it."""
    if n_impressions < 1:
        raise ValueError("need at least one impression")
    g = keyword_effects(model, seed)
    rng = derive_rng(seed, "impressions")
    k = rng.integers(model.n_keywords, size=n_impressions)
    z = model.threshold + model.score_sd * rng.standard_normal(n_impressions)
    pos = np.where(z >= model.threshold, 1, 2)
    p = click_probability(model, pos, z, g[k])
    click = (rng.random(n_impressions) < p).astype(np.int64)
    return ImpressionLog(k.astype(np.int64), pos.astype(np.int64), z, click)


@dataclass
class RddFit:
    alpha: float
    xi: float
    gamma1: float
    gamma2: float
    keyword_effects: dict
    window: float
    stderr_xi: float
    n_obs: int
    n_above: int
    n_below: int
    threshold: float

    def to_dict(self):
        d = asdict(self)
        d["keyword_effects"] = {str(k): v for k, v in self.keyword_effects.items()}
        return d


def infer_threshold(logs: ImpressionLog) -> float:
    top = logs.score[logs.position == 1]
    bottom = logs.score[logs.position == 2]
    if top.size == 0 or bottom.size == 0:
        raise ValueError("both positions are needed to locate the threshold")
    lo, hi = float(np.max(bottom)), float(np.min(top))
    if lo >= hi:
        raise ValueError("positions are not separated by a score threshold")
    return hi


def default_window(logs: ImpressionLog, threshold, min_frac=0.01):
    """Smallest window keeping at least ``min_frac`` of impressions on each side."""
    d = logs.score - threshold
    need = max(1, int(math.ceil(min_frac * len(logs))))
    above = np.sort(d[d >= 0])
    below = np.sort(-d[d < 0])
    if above.size < need or below.size < need:
        raise ValueError("not enough impressions on one side of the threshold")
    return float(max(above[need - 1], below[need - 1]))


def _demean(v, groups, n_groups):
    cnt = np.bincount(groups, minlength=n_groups)
    s = np.bincount(groups, weights=v, minlength=n_groups)
    mean = np.divide(s, cnt, out=np.zeros(n_groups), where=cnt > 0)
    return v - mean[groups]


def rdd_local_linear(logs: ImpressionLog, lam, with_keyword_effects=True, threshold=None,
                     local_slopes=True, min_side=10) -> RddFit:
    """Local linear discontinuity fit of clicks on position within ``|z - t| <= lam``.

    Scores are centered at the threshold so ``xi`` is the jump at the
    boundary. Keyword effects are absorbed by demeaning within keyword. The
    standard error is the homoskedastic OLS one.
    """
    if not lam > 0:
        raise ValueError("window must be positive")
    t = infer_threshold(logs) if threshold is None else float(threshold)
    z = logs.score - t
    keep = np.abs(z) <= lam
    z = z[keep]
    y = logs.click[keep].astype(float)
    top = (logs.position[keep] == 1).astype(float)
    k = logs.keyword_id[keep]
    n_above, n_below = int(top.sum()), int((1 - top).sum())
    if n_above < min_side or n_below < min_side:
        raise ValueError(f"window {lam!r} leaves {n_above} above / {n_below} below; need {min_side} each")
    cols = [top, z, z * top] if local_slopes else [top]
    X = np.column_stack(cols)
    n = y.size
    if with_keyword_effects:
        codes, g_idx = np.unique(k, return_inverse=True)
        n_fe = codes.size
        Xd = np.column_stack([_demean(c, g_idx, n_fe) for c in cols])
        yd = _demean(y, g_idx, n_fe)
    else:
        n_fe = 1
        Xd = X - np.sum(X, axis=0) / n
        yd = y - np.sum(y) / n
    XtX = Xd.T @ Xd
    if np.linalg.matrix_rank(XtX) < XtX.shape[0]:
        raise np.linalg.LinAlgError("rank-deficient design; check positions and window")
    b = np.linalg.solve(XtX, Xd.T @ yd)
    alpha = float(np.sum(y - X @ b) / n)
    resid = yd - Xd @ b
    dof = n - Xd.shape[1] - n_fe
    if dof <= 0:
        raise ValueError("too few observations for the fixed effects")
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(XtX)
    effects = {}
    if with_keyword_effects:
        fe = np.bincount(g_idx, weights=y - X @ b, minlength=n_fe) / np.bincount(g_idx, minlength=n_fe)
        effects = {int(c): float(v - alpha) for c, v in zip(codes, fe)}
    g1 = float(b[1]) if local_slopes else 0.0
    g2 = float(b[2]) if local_slopes else 0.0
    return RddFit(alpha, float(b[0]), g1, g2, effects, float(lam), float(math.sqrt(cov[0, 0])),
                  n, n_above, n_below, t)


def nk15_report(fit: RddFit, baseline_ctr: float) -> dict:
    if not baseline_ctr > 0:
        raise ValueError("baseline click-through rate must be positive")
    return {
        "beta_hat": fit.xi,
        "power_lower_bound": fit.xi,
        "relative_effect": fit.xi / baseline_ctr,
        "stderr": fit.stderr_xi,
        "n_obs": fit.n_obs,
    }


def format_report(report: dict) -> str:
    """``key: value`` lines with floats at 17 significant digits."""
    lines = []
    for key, val in report.items():
        if isinstance(val, float):
            val = fmt_float(val)
        lines.append(f"{key}: {val}")
    return "\n".join(lines) + "\n"
