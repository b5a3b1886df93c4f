"""Performative power as a Monte Carlo estimator over a finite action set.

A counterfactual simulator maps an action to the potential outcomes of every
unit in a fixed population. Performative power is the largest mean distance,
over the enumerated actions, between the status-quo data points and those
potential outcomes.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator

import numpy as np

__all__ = [
    "NULL_ACTION",
    "ActionSet",
    "CounterfactualSimulator",
    "DataPoint",
    "Metric",
    "NonFiniteDistanceError",
    "PowerEstimate",
    "TableSimulator",
    "Unit",
    "check_wasserstein_bound",
    "derive_rng",
    "estimate_power",
    "fmt_float",
    "l1_histogram_distance",
    "lipschitz_ratio",
    "wasserstein1",
]

SIMPLEX_TOL = 1e-9


class _NullAction:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NULL_ACTION"

    def __reduce__(self):
        return (_NullAction, ())


NULL_ACTION = _NullAction()
"""Keep the status quo: every unit's potential outcome is its current data point."""


class NonFiniteDistanceError(ValueError):
    pass


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.blake2b(label.encode(), digest_size=8).digest(), "little")


def derive_rng(master_seed: int, *keys: int | str) -> np.random.Generator:
    """Independent generator for a (master seed, key...) path.

    String keys are hashed, so the stream for an action depends on its label
    and not on where it sits in an action set.
    """
    spawn_key = tuple(_label_key(k) if isinstance(k, str) else int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=spawn_key))


@dataclass(frozen=True)
class DataPoint:
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("scalar", "vector", "histogram"):
            raise ValueError(f"unknown data point kind {self.kind!r}")
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if not np.all(np.isfinite(values)):
            raise ValueError("data point values must be finite")
        if self.kind == "scalar" and values.shape != (1,):
            raise ValueError("scalar data point must hold exactly one value")
        if self.kind == "histogram":
            if np.any(values < 0) or abs(values.sum() - 1.0) > SIMPLEX_TOL:
                raise ValueError("histogram must be nonnegative and sum to 1")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class Unit:
    id: int
    z_current: DataPoint


class Metric:
    """Distance between data points, vectorized over a leading unit axis.

    Kinds: ``absolute-difference`` (scalars), ``euclidean`` and
    ``l1-histogram`` (last axis holds coordinates), and
    ``user-supplied-table`` (integer-coded data points indexing a matrix).
    """

    KINDS = ("absolute-difference", "euclidean", "l1-histogram", "user-supplied-table")

    def __init__(self, kind: str, table: Any = None):
        if kind not in self.KINDS:
            raise ValueError(f"unknown metric kind {kind!r}")
        self.kind = kind
        self.table = None
        if kind == "user-supplied-table":
            if table is None:
                raise ValueError("table metric needs a distance table")
            t = np.asarray(table, dtype=float)
            if t.ndim != 2 or t.shape[0] != t.shape[1]:
                raise ValueError("distance table must be square")
            self.table = t

    def __call__(self, a, b):
        a = np.asarray(a, dtype=float) if self.kind != "user-supplied-table" else np.asarray(a)
        b = np.asarray(b, dtype=float) if self.kind != "user-supplied-table" else np.asarray(b)
        if self.kind == "absolute-difference":
            return np.abs(a - b)
        if self.kind == "euclidean":
            return np.sqrt(np.sum((a - b) ** 2, axis=-1))
        if self.kind == "l1-histogram":
            if a.shape[-1] != b.shape[-1]:
                raise ValueError("histograms differ in length")
            return np.sum(np.abs(a - b), axis=-1)
        return self.table[a.astype(int), b.astype(int)]

    def __repr__(self):
        return f"Metric({self.kind!r})"


def l1_histogram_distance(a, b) -> float:
    if isinstance(a, DataPoint) or isinstance(b, DataPoint):
        if not (isinstance(a, DataPoint) and isinstance(b, DataPoint)):
            raise TypeError("both arguments must be data points")
        if a.kind != "histogram" or b.kind != "histogram":
            raise ValueError("l1 histogram distance needs histogram data points")
        a, b = a.values, b.values
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.sum(np.abs(a - b)))


def wasserstein1(samples_a, samples_b) -> float:
    """Exact W1 between two equal-size empirical measures on the line."""
    a = np.sort(np.asarray(samples_a, dtype=float).ravel())
    b = np.sort(np.asarray(samples_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    if a.size != b.size:
        raise ValueError(f"sample sizes differ ({a.size} vs {b.size}); resample first")
    return float(np.mean(np.abs(a - b)))


def lipschitz_ratio(dist, cost, probe_pairs) -> float:
    """Largest ``dist/cost`` over the probes.

    This only ever under-estimates the true supremum. Returns ``inf`` as soon
    as a zero-cost pair has positive distance.
    """
    best = 0.0
    for x, y in probe_pairs:
        d = float(np.asarray(dist(x, y)))
        c = float(np.asarray(cost(x, y)))
        if c == 0.0:
            if d > 0.0:
                return math.inf
            continue
        if c < 0:
            raise ValueError("negative cost")
        best = max(best, d / c)
    return best


class ActionSet:
    """Finite, labelled family of actions.

    Labels identify actions for seeding and reporting, so they must be unique.
    """

    def __init__(self, items: Iterable[tuple[str, Any]]):
        self._items = list(items)
        labels = [lab for lab, _ in self._items]
        if len(set(labels)) != len(labels):
            raise ValueError("action labels must be unique")

    @classmethod
    def from_values(cls, values, prefix="theta="):
        return cls((prefix + fmt_float(v), float(v)) for v in values)

    @classmethod
    def grid(cls, lo, hi, n, prefix="theta="):
        return cls.from_values(np.linspace(lo, hi, n), prefix=prefix)

    def with_null(self) -> "ActionSet":
        if any(a is NULL_ACTION for _, a in self._items):
            return self
        return ActionSet([("null", NULL_ACTION)] + self._items)

    def __add__(self, other: "ActionSet") -> "ActionSet":
        return ActionSet(self._items + list(other))

    def subset(self, labels: Iterable[str]) -> "ActionSet":
        keep = set(labels)
        return ActionSet([(lab, a) for lab, a in self._items if lab in keep])

    def __iter__(self) -> Iterator[tuple[str, Any]]:
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]

    @property
    def labels(self):
        return [lab for lab, _ in self._items]

    @property
    def actions(self):
        return [a for _, a in self._items]


class CounterfactualSimulator:
    """Base class for potential-outcome simulators.

    Subclasses hold ``reference`` (status-quo data points, one row per unit)
    and implement ``_respond(action, rng)`` returning outcomes for all units.
    ``deterministic`` simulators ignore the generator.
    """

    deterministic = False

    def __init__(self, reference):
        self.reference = np.asarray(reference)

    @property
    def n_units(self) -> int:
        return int(self.reference.shape[0])

    def respond(self, action, rng: np.random.Generator | None = None):
        if action is NULL_ACTION:
            return self.reference
        return self._respond(action, rng)

    def _respond(self, action, rng):
        raise NotImplementedError

    def sweep(self, actions: ActionSet, metric: Metric):
        """Optional fast path: per-action (mean, standard error) or ``None``."""
        return None


class TableSimulator(CounterfactualSimulator):
    """Deterministic simulator backed by a dict of precomputed outcomes."""

    deterministic = True

    def __init__(self, reference, outcomes: dict):
        super().__init__(reference)
        self.outcomes = {k: np.asarray(v) for k, v in outcomes.items()}

    def _respond(self, action, rng):
        return self.outcomes[action]


@dataclass
class PowerEstimate:
    value: float
    kind: str
    ci_halfwidth: float
    argmax_action: str
    n_replicates: int
    per_action: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in ("exact-mc", "lower-bound", "upper-bound"):
            raise ValueError(f"unknown estimate kind {self.kind!r}")
        if not self.value >= 0 or not self.ci_halfwidth >= 0:
            raise ValueError("power and its CI half-width must be nonnegative")

    @property
    def sigma(self) -> float:
        return self.ci_halfwidth / 3.0

    def to_dict(self):
        return {
            "value": self.value,
            "kind": self.kind,
            "ci_halfwidth": self.ci_halfwidth,
            "argmax_action": self.argmax_action,
            "n_replicates": self.n_replicates,
        }


def _unit_stats(per_unit: np.ndarray) -> tuple[float, float]:
    n = per_unit.shape[0]
    mean = float(np.sum(per_unit) / n)
    if n < 2:
        return mean, 0.0
    se = float(np.sqrt(np.sum((per_unit - mean) ** 2) / (n - 1) / n))
    return mean, se


def estimate_power(sim: CounterfactualSimulator, actions: ActionSet, metric: Metric,
                   n_rep: int = 1, seed: int = 0, kind: str = "exact-mc") -> PowerEstimate:
    """Largest mean distance to the status quo over ``actions``.

    Each action's randomness comes from ``derive_rng(seed, label, replicate)``.
    The CI half-width is three standard errors of the per-unit mean distances
    of the maximizing action (units treated as draws from the population).
    Ties go to the first action in set order.
    """
    if len(actions) == 0:
        raise ValueError("action set is empty")
    if n_rep < 1:
        raise ValueError("n_rep must be >= 1")
    if sim.n_units == 0:
        raise ValueError("population is empty")

    stats = sim.sweep(actions, metric)
    if stats is None:
        stats = []
        for label, action in actions:
            per_unit = np.zeros(sim.n_units)
            reps = 1 if (sim.deterministic or action is NULL_ACTION) else n_rep
            for r in range(reps):
                out = sim.respond(action, derive_rng(seed, label, r))
                d = np.asarray(metric(sim.reference, out), dtype=float)
                bad = ~np.isfinite(d)
                if bad.any():
                    u = int(np.flatnonzero(bad)[0])
                    raise NonFiniteDistanceError(
                        f"non-finite distance for unit {u} under action {label!r}")
                per_unit += d
            stats.append(_unit_stats(per_unit / reps))

    best = 0
    for i, (m, _) in enumerate(stats):
        if m > stats[best][0]:
            best = i
    value, se = stats[best]
    return PowerEstimate(
        value=max(value, 0.0),
        kind=kind,
        ci_halfwidth=3.0 * se,
        argmax_action=actions[best][0],
        n_replicates=n_rep,
        per_action={lab: m for (lab, _), (m, _) in zip(actions, stats)},
    )


def check_wasserstein_bound(sim: CounterfactualSimulator, actions: ActionSet, metric: Metric,
                            n_rep: int = 1, seed: int = 0, max_pairs: int = 100,
                            power: PowerEstimate | None = None) -> dict:
    """Check ``W1(D(a), D(b)) <= 2 P`` on ordered pairs from the action set.

    ``D(a)`` is the empirical distribution of the potential outcomes of all
    units under action ``a`` (one replicate). Pairs are subsampled
    deterministically when there are more than ``max_pairs``. The bound is
    checked with the power estimate's CI half-width as slack.
    """
    if sim.reference.ndim != 1:
        raise ValueError("Wasserstein check needs scalar data points")
    if power is None:
        power = estimate_power(sim, actions, metric, n_rep=n_rep, seed=seed)
    k = len(actions)
    pairs = [(i, j) for i in range(k) for j in range(k) if i != j]
    if len(pairs) > max_pairs:
        pick = derive_rng(seed, "wasserstein-pairs").choice(len(pairs), size=max_pairs, replace=False)
        pairs = [pairs[p] for p in sorted(pick)]
    samples = {}

    def draw(i):
        if i not in samples:
            label, action = actions[i]
            samples[i] = np.asarray(sim.respond(action, derive_rng(seed, label, 0)), dtype=float)
        return samples[i]

    bound = 2.0 * power.value
    slack = power.ci_halfwidth
    rows = []
    for i, j in pairs:
        w = wasserstein1(draw(i), draw(j))
        rows.append({"a": actions[i][0], "b": actions[j][0], "w1": w, "ok": w <= bound + slack})
    if bound > 0:
        max_ratio = max((r["w1"] / bound for r in rows), default=0.0)
    else:
        # 0/0 counts as a pass; any positive W1 against zero power is infinite
        max_ratio = math.inf if any(r["w1"] > 0 for r in rows) else 0.0
    return {
        "power": power.value,
        "slack": slack,
        "n_pairs": len(rows),
        "max_ratio": max_ratio,
        "passed": all(r["ok"] for r in rows),
        "pairs": rows,
    }
