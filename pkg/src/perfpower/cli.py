"""Command-line entry point: ``perfpower <group> <command> --config FILE``.

Every run writes ``report.json`` (resolved config, results, checks) and
CSV tables to ``--out``. Exit status is 0 when all checks pass, 2 when a
check fails and 1 on configuration errors, in which case nothing is written.
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import os
import shutil
import sys
import tempfile
import time
from importlib import resources

import jsonschema
import numpy as np

from . import competition as comp
from . import ddd
from . import economy as econ
from . import perfpred as pp
from . import strategic as st
from .core import ActionSet, Metric, check_wasserstein_bound, derive_rng, estimate_power, fmt_float
from .kernels import BACKEND

UNIFORM_BASE = {"family": "uniform", "params": [-2.0, 2.0],
                "posterior": {"kind": "logistic", "slope": 4.0, "offset": 0.0}}
NORMAL_BASE = {"family": "normal", "params": [-1.0, 1.0],
               "posterior": {"kind": "logistic", "slope": 2.0, "offset": 0.0}}
MAP_DEFAULTS = {
    "strategic-1d": {"base": UNIFORM_BASE, "delta_gamma": 1.0, "cost_scale": 1.0,
                     "labels": "expected", "lipschitz_z": 1.0},
    "location-shift": {"mu0": 1.0, "eps": 0.5, "sigma": 1.0},
    "regression-shift": {"beta": 1.0, "eps": 0.5, "mu_x": 1.0, "noise_sd": 1.0},
}
DEFAULTS = {
    "monopoly-strategic": {"master_seed": 0, "n_samples": 100_000, "n_rep": 1, "base": UNIFORM_BASE,
                           "utility": {"gamma": 1.0, "beta": 0.0}, "cost": {"scale": 1.0},
                           "current": "theta_sl", "wasserstein_pairs": 100},
    "personalized": {"master_seed": 0, "n_samples": 1, "n_rep": 1, "n_units": 200, "dim": 3,
                     "weights": [1.0, 2.0], "budget": {"min": 0.5, "max": 2.0}, "adapted_fraction": 0.3},
    "competition": {"master_seed": 0, "n_samples": 1_000_000, "n_rep": 1, "base": NORMAL_BASE,
                    "gamma": 1.0, "alpha": 1.0, "cost": {"kind": "absolute-difference", "scale": 1.0,
                                                           "exponent": 1.0},
                    "power_samples": 100_000, "deviation_points": 50, "grid": {"step": 0.01, "span": 3.0}},
    "perfpred": {"master_seed": 0, "n_samples": 100_000, "n_rep": 1, "phis": ["none", "theta_sl"]},
    "economy-mixture": {"master_seed": 0, "n_samples": 100_000, "n_rep": 4,
                        "Cs": [1, 2, 4, 8, 16, 32], "power_stride": 10},
    "ddd": {"master_seed": 0, "n_samples": 1, "n_rep": 200, "n_worlds": 50, "n_viewers": 100,
            "n_items": 10, "n_impressions": 1_000_000, "log_model": {}, "window": 1.0,
            "keyword_effects": True, "local_slopes": True, "baseline_ctr": 0.023260,
            "relative_band": [0.18, 0.24]},
}
COMMANDS = {
    "power": {"monopoly": "monopoly-strategic", "personalized": "personalized"},
    "compete": {"equilibrium": "competition", "zero-power": "competition"},
    "learnsteer": {"check": "perfpred"},
    "economy": {"mixture": "economy-mixture", "collude": "economy-mixture"},
    "ddd": {"simulate": "ddd", "estimate": "ddd", "nk15": "ddd"},
}


class ConfigError(Exception):
    pass


# config ---------------------------------------------------------------------

def load_schema(kind):
    text = resources.files("perfpower").joinpath("schemas", f"{kind}.json").read_text()
    return json.loads(text)


def _merge(defaults, user):
    out = copy.deepcopy(defaults)
    for k, v in user.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(raw: dict, kind: str, seed=None, replicates=None) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if raw.get("scenario") != kind:
        raise ConfigError(f"command expects scenario {kind!r}, config has {raw.get('scenario')!r}")
    try:
        jsonschema.validate(raw, load_schema(kind))
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {e.message}") from None
    cfg = _merge(DEFAULTS[kind], raw)
    if "map" in cfg:
        cfg["map"] = _merge(MAP_DEFAULTS[cfg["map"]["kind"]], cfg["map"])
    if seed is not None:
        cfg["master_seed"] = int(seed)
    if replicates is not None:
        cfg["n_rep"] = int(replicates)
    try:
        jsonschema.validate(cfg, load_schema(kind))
    except jsonschema.ValidationError as e:
        raise ConfigError(f"resolved config invalid: {e.message}") from None
    return cfg


def make_grid(g):
    lo, hi, step = float(g["min"]), float(g["max"]), float(g["step"])
    if hi < lo:
        raise ConfigError("grid max below min")
    k = int(round((hi - lo) / step))
    return np.round(lo + step * np.arange(k + 1), 12)


def make_base(b):
    post = b.get("posterior", {})
    return st.BaseDistribution(b["family"], tuple(b["params"]),
                               st.Posterior(post.get("kind", "logistic"), post.get("slope", 1.0),
                                            post.get("offset", 0.0)))


def make_map(m):
    kind = m["kind"]
    if kind == "strategic-1d":
        return pp.StrategicMap(make_base(m["base"]), m["delta_gamma"], m["cost_scale"],
                               labels=m["labels"], lipschitz_z=m["lipschitz_z"])
    if kind == "location-shift":
        return pp.LocationShiftMap(m["mu0"], m["eps"], m["sigma"])
    return pp.RegressionShiftMap(m["beta"], m["eps"], m["mu_x"], m["noise_sd"])


def map_grid(dmap, cfg):
    if "grid" in cfg:
        return make_grid(cfg["grid"])
    if isinstance(dmap, pp.StrategicMap):
        span = 3.0 * max(dmap.delta_gamma / dmap.cost_scale, 1.0)
        center = dmap.theta_sl
    else:
        span, center = 3.0, dmap.theta_po
    return make_grid({"min": center - span, "max": center + span, "step": 0.01})


# commands -------------------------------------------------------------------

def cmd_power_monopoly(cfg):
    base = make_base(cfg["base"])
    u = st.UtilitySpec(cfg["utility"]["gamma"], cfg["utility"]["beta"])
    dg = u.delta_gamma
    scale = cfg["cost"]["scale"]
    theta_sl = st.solve_theta_sl(base)
    sc = st.MonopolyScenario(base, dg, n=cfg["n_samples"], seed=cfg["master_seed"], cost_scale=scale)
    cur = cfg["current"]
    theta_cur = theta_sl if cur == "theta_sl" else (math.inf if cur == "none" else float(cur))
    if "grid" in cfg:
        grid = make_grid(cfg["grid"])
    else:
        grid = np.round(st.default_theta_grid(theta_sl, dg / scale), 12)
    grid = np.unique(np.append(grid, theta_sl + dg / scale))
    actions = ActionSet.from_values(grid)
    sim = sc.simulator(theta_current=theta_cur)
    metric = Metric("absolute-difference")
    p = estimate_power(sim, actions, metric, n_rep=cfg["n_rep"], seed=cfg["master_seed"])
    lemma = sc.lemma_bound(theta_current=theta_cur)
    L = 1.0 / scale
    cor = st.corollary_bound(L, dg)
    lower = upper = None
    checks = {
        "power_le_lemma": p.value <= lemma + p.ci_halfwidth,
        "lemma_le_corollary": lemma <= cor + 1e-12,
    }
    results = {"theta_sl": theta_sl, "theta_current": theta_cur, "delta_gamma": dg, "power": p.to_dict(),
               "lemma_bound": lemma, "corollary_bound": cor, "lipschitz": L}
    if theta_cur == theta_sl and scale == 1.0:
        lower, upper = st.one_d_bounds(base, theta_sl, dg)
        results.update(lower=lower, upper=upper,
                       bound_variants=st.one_d_bound_variants(base, theta_sl, u.gamma, dg))
        checks["sandwich"] = lower - p.ci_halfwidth <= p.value <= upper + p.ci_halfwidth
    w = check_wasserstein_bound(sim, actions, metric, n_rep=1, seed=cfg["master_seed"],
                                max_pairs=cfg["wasserstein_pairs"], power=p)
    results["wasserstein"] = {k: w[k] for k in ("power", "slack", "n_pairs", "max_ratio", "passed")}
    checks["wasserstein"] = w["passed"]
    table = [(float(a), p.per_action[lab]) for lab, a in actions]
    return results, {"power_grid.csv": (("theta", "mean_shift"), table)}, checks


def cmd_power_personalized(cfg):
    rng = derive_rng(cfg["master_seed"], "units")
    d = cfg["dim"]
    w = np.resize(np.asarray(cfg["weights"], dtype=float), d - 1)
    cost = st.CostModel("weighted-l1", weights=np.concatenate(([1.0], w)), immutable_coords=(0,))
    dist = Metric("euclidean")
    lo, hi = cfg["budget"]["min"], cfg["budget"]["max"]
    if hi < lo:
        raise ConfigError("budget max below min")
    pop, budgets = [], []
    for i in range(cfg["n_units"]):
        x0 = np.concatenate(([float(i)], rng.standard_normal(d - 1)))
        b = float(rng.uniform(lo, hi))
        xc = x0.copy()
        if rng.random() < cfg["adapted_fraction"] and b > 0:
            j = 1 + int(rng.integers(d - 1))
            xc[j] += rng.uniform(-1, 1) * b / w[j - 1]
        pop.append(st.ParticipantRecord(i, x0, 0, xc))
        budgets.append(b)
    pe = st.personalized_power(pop, budgets, cost, dist)
    lemma = st.monopoly_upper_bound(pop, budgets, cost, dist)
    L = 1.0 / float(np.min(w))
    cor = st.corollary_bound(L, max(budgets))
    results = {"personalized_power": pe.to_dict(), "lemma_bound": lemma, "corollary_bound": cor,
               "lipschitz": L, "difference": pe.value - lemma}
    checks = {"tight": abs(pe.value - lemma) <= 1e-12, "lemma_le_corollary": lemma <= cor + 1e-12}
    table = [(p.id, b, st.reachable_sup(p, b, cost, dist)) for p, b in zip(pop, budgets)]
    return results, {"units.csv": (("id", "budget", "reachable_sup"), table)}, checks


def make_competition(cfg):
    c = cfg["cost"]
    if c["kind"] == "absolute-difference":
        cost = st.CostModel("absolute-difference", scale=c["scale"])
    else:
        cost = comp.PowerCost(c["exponent"], c["scale"])
    return comp.CompetitionScenario(make_base(cfg["base"]), cost, cfg["gamma"], cfg["alpha"])


def cmd_compete_equilibrium(cfg):
    sc = make_competition(cfg)
    try:
        ts = comp.zero_profit_equilibrium(sc)
    except comp.NoFiniteRootError as e:
        return {"theta_star": None, "diagnostic": str(e)}, {}, {"finite_root": False}
    xi = sc.xi(ts)
    resid = comp.conditional_positive_rate(sc, xi) - 0.5
    m, se = comp.firm_utility(ts, ts, sc, n=cfg["n_samples"], seed=cfg["master_seed"])
    span = cfg["grid"]["span"]
    scan = comp.deviation_scan(sc, ts, n=cfg["n_samples"], seed=cfg["master_seed"],
                               n_points=cfg["deviation_points"], span=span)
    fmin = comp.feasible_min_threshold(ts, sc)
    results = {"theta_star": ts, "xi_star": xi, "conditional_residual": resid,
               "utility_at_equilibrium": m, "utility_se": se,
               "utility_quadrature": comp.firm_utility(ts, ts, sc, method="quad"),
               "feasible_min_threshold": fmin}
    checks = {"conditional_mean": abs(resid) <= 1e-9, "zero_utility": abs(m) <= 3 * se,
              "no_profitable_deviation": scan["passed"], "feasible_set": abs(fmin - ts) <= 1e-6}
    table = [(r["theta"], r["utility"], r["se"], int(r["feasible"])) for r in scan["rows"]]
    return results, {"deviations.csv": (("theta", "utility", "se", "feasible"), table)}, checks


def cmd_compete_zero_power(cfg):
    sc = make_competition(cfg)
    try:
        r = comp.verify_zero_power(sc, resolution=cfg["grid"]["step"], span=cfg["grid"]["span"],
                                   n=cfg["power_samples"], seed=cfg["master_seed"])
    except comp.NoFiniteRootError as e:
        return {"theta_star": None, "diagnostic": str(e)}, {}, {"finite_root": False}
    checks = {"zero_power": r["power_ok"], "bound_zero": r["bound_ok"],
              "monopoly_separates": r["monopoly_power"] > r["power"] + r["monopoly_ci"] + r["power_ci"]}
    return r, {}, checks


def _phi_value(phi, dmap, real, grid):
    """Named deployments: ``none`` is the undeployed base (``0`` for shift maps),
    ``theta_sl`` the model learned on it, ``theta_po`` the steering optimum."""
    none = pp.NO_DEPLOYMENT if isinstance(dmap, pp.StrategicMap) else 0.0
    if phi == "none":
        return none
    if phi == "theta_sl":
        return pp.ex_ante_optimize(none, real, grid).theta
    if phi == "theta_po":
        return dmap.theta_po
    return float(phi)


def cmd_learnsteer_check(cfg):
    dmap = make_map(cfg["map"])
    grid = map_grid(dmap, cfg)
    real = dmap.realize(cfg["n_samples"], cfg["master_seed"])
    rows = []
    for phi in cfg["phis"]:
        rep = pp.check_prop_sl(dmap, real, grid, _phi_value(phi, dmap, real, grid))
        rep["phi_spec"] = phi
        rows.append(rep)
    po = pp.ex_post_optimize(real, grid)
    results = {"theta_po": po.theta, "grid_step": float(grid[1] - grid[0]), "rows": rows}
    checks = {"risk_bound": all(r["risk_ok"] for r in rows),
              "distance_bound": all(r["distance_ok"] is not False for r in rows),
              "no_boundary_argmin": not any(r["boundary_flag"] for r in rows)}
    if isinstance(dmap, pp.StrategicMap):
        results["theta_po_expected"] = dmap.theta_po
        checks["theta_po_identity"] = abs(po.theta - dmap.theta_po) <= results["grid_step"] + 1e-12
    cols = ("phi", "theta_sl", "theta_po", "pr_sl", "pr_po", "gap", "risk_bound", "slack", "risk_ok",
            "distance", "distance_bound")
    table = [tuple(r[c] for c in cols) for r in rows]
    return results, {"prop_sl.csv": (cols, table)}, checks


def cmd_economy_mixture(cfg):
    dmap = make_map(cfg["map"])
    grid = map_grid(dmap, cfg)
    real = dmap.realize(cfg["n_samples"], cfg["master_seed"])
    res = econ.mixture_convergence_experiment(dmap, real, cfg["Cs"], grid, seed=cfg["master_seed"])
    po = pp.ex_post_optimize(real, grid)
    step = float(grid[1] - grid[0])
    sub = grid[::cfg["power_stride"]]
    for row in res["rows"]:
        if row["theta_star"] is None:
            continue
        mp = econ.mixture_power(real, row["theta_star"], row["C"], sub, n_rep=cfg["n_rep"],
                                seed=cfg["master_seed"])
        mono = pp.map_power(real, row["theta_star"], sub)
        row["mixture_power"] = mp.value
        row["mixture_power_ci"] = mp.ci_halfwidth
        row["monopoly_power_subgrid"] = mono.value
    rows = res["rows"]
    gaps = [r.get("gap") for r in rows]
    rho = res["spearman_gap_vs_invC"]
    flat = all(g == 0 for g in gaps)
    c1 = [r for r in rows if r["C"] == 1]
    checks = {
        "gap_bound": res["all_ok"],
        "trend": flat or (not math.isnan(rho) and rho > 0),
    }
    if c1 and c1[0]["theta_star"] is not None:
        checks["c1_matches_optimum"] = abs(c1[0]["theta_star"] - po.theta) <= step + 1e-12
    results = {"theta_po": po.theta, "spearman_gap_vs_invC": rho, "rows": rows}
    cols = ("C", "theta_star", "gap", "bound", "slack", "power", "mixture_power", "monopoly_power_subgrid")
    table = [tuple(r.get(c) for c in cols) for r in rows]
    return results, {"mixture.csv": (cols, table)}, checks


def cmd_economy_collude(cfg):
    dmap = make_map(cfg["map"])
    grid = map_grid(dmap, cfg)
    real = dmap.realize(cfg["n_samples"], cfg["master_seed"])
    rep = econ.collusion_comparison(real, grid)
    checks = {"stable_point_found": rep["theta_st"] is not None}
    return rep, {}, checks


def cmd_ddd_simulate(cfg):
    rows = []
    for w in range(cfg["n_worlds"]):
        world = ddd.random_world(cfg["n_viewers"], cfg["n_items"], derive_rng(cfg["master_seed"], "world", w))
        exact = ddd.power_lower_bound_ddd(world, 0, seed=cfg["master_seed"])
        mc = ddd.power_lower_bound_ddd(world, cfg["n_rep"], seed=cfg["master_seed"])
        rows.append((w, world.m1, world.m2, exact["power"], exact["l1_swap_effect"], exact["beta_exact"],
                     mc["beta_hat"], mc["beta_se"], int(exact["chain_ok"]), int(mc["bound_ok"])))
    checks = {"exact_chain": all(r[8] for r in rows), "mc_bound": all(r[9] for r in rows)}
    results = {"n_worlds": len(rows), "exact_violations": sum(1 - r[8] for r in rows),
               "mc_violations": sum(1 - r[9] for r in rows)}
    cols = ("world", "m1", "m2", "power", "l1_swap", "beta_exact", "beta_mc", "beta_mc_se", "chain_ok", "bound_ok")
    return results, {"worlds.csv": (cols, rows)}, checks


def _logs(cfg, config_dir):
    model = ddd.LogModel(**cfg["log_model"])
    if "log_file" in cfg:
        path = os.path.join(config_dir, cfg["log_file"])
        if not os.path.exists(path):
            raise ConfigError(f"log file not found: {path}")
        return model, ddd.ImpressionLog.from_csv(path)
    return model, ddd.generate_logs(model, cfg["n_impressions"], seed=cfg["master_seed"])


def _fit(cfg, model, logs):
    return ddd.rdd_local_linear(logs, cfg["window"], cfg["keyword_effects"], threshold=model.threshold,
                                local_slopes=cfg["local_slopes"])


def cmd_ddd_estimate(cfg, config_dir="."):
    model, logs = _logs(cfg, config_dir)
    fit = _fit(cfg, model, logs)
    results = {k: v for k, v in fit.to_dict().items() if k != "keyword_effects"}
    checks = {"fit_ok": math.isfinite(fit.xi)}
    return results, {}, checks, logs


def cmd_ddd_nk15(cfg, config_dir="."):
    model, logs = _logs(cfg, config_dir)
    fit = _fit(cfg, model, logs)
    rep = ddd.nk15_report(fit, cfg["baseline_ctr"])
    top = logs.position == 1
    rep["slot1_ctr"] = float(np.mean(logs.click[top]))
    rep["slot2_ctr"] = float(np.mean(logs.click[~top]))
    lo, hi = cfg["relative_band"]
    checks = {
        "within_3se": abs(fit.xi - model.effect) <= 3 * fit.stderr_xi,
        "relative_band": lo <= rep["relative_effect"] <= hi,
        "bound_equals_estimate": rep["power_lower_bound"] == rep["beta_hat"],
    }
    return rep, {}, checks


# output ---------------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def _csv_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return "" if v is None else v


def write_outputs(out_dir, report, tables, extra=None):
    parent = os.path.dirname(os.path.abspath(out_dir)) or "."
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".perfpower-", dir=parent)
    try:
        with open(os.path.join(tmp, "report.json"), "w") as fh:
            json.dump(_jsonable(report), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(tmp, "config.resolved.json"), "w") as fh:
            json.dump(report["config"], fh, indent=2, sort_keys=True)
            fh.write("\n")
        for name, (header, rows) in tables.items():
            with open(os.path.join(tmp, name), "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(header)
                for r in rows:
                    wr.writerow([_csv_cell(v) for v in r])
        if extra:
            extra(tmp)
        os.makedirs(out_dir, exist_ok=True)
        for name in os.listdir(tmp):
            shutil.move(os.path.join(tmp, name), os.path.join(out_dir, name))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


HANDLERS = {
    ("power", "monopoly"): cmd_power_monopoly,
    ("power", "personalized"): cmd_power_personalized,
    ("compete", "equilibrium"): cmd_compete_equilibrium,
    ("compete", "zero-power"): cmd_compete_zero_power,
    ("learnsteer", "check"): cmd_learnsteer_check,
    ("economy", "mixture"): cmd_economy_mixture,
    ("economy", "collude"): cmd_economy_collude,
    ("ddd", "simulate"): cmd_ddd_simulate,
}


def execute(group, command, cfg, config_dir="."):
    """Run a command on a resolved config; returns ``(report, tables, extra_writer)``."""
    extra = None
    t0 = time.perf_counter()
    if (group, command) == ("ddd", "estimate"):
        results, tables, checks, logs = cmd_ddd_estimate(cfg, config_dir)
        if "log_file" not in cfg:
            extra = lambda d: logs.to_csv(os.path.join(d, "logs.csv"))
    elif (group, command) == ("ddd", "nk15"):
        results, tables, checks = cmd_ddd_nk15(cfg, config_dir)
        text = ddd.format_report({k: results[k] for k in
                                  ("beta_hat", "power_lower_bound", "relative_effect", "stderr", "n_obs")})
        extra = lambda d: open(os.path.join(d, "nk15.txt"), "w").write(text)
    else:
        results, tables, checks = HANDLERS[(group, command)](cfg)
    checks = {k: bool(v) for k, v in checks.items()}
    report = {
        "command": f"{group} {command}",
        "config": cfg,
        "results": results,
        "checks": checks,
        "passed": all(checks.values()),
    }
    elapsed = time.perf_counter() - t0
    return report, tables, extra, elapsed


def build_parser():
    ap = argparse.ArgumentParser(prog="perfpower", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="group", required=True)
    for group, cmds in COMMANDS.items():
        g = sub.add_parser(group)
        gs = g.add_subparsers(dest="command", required=True)
        for name in cmds:
            c = gs.add_parser(name)
            c.add_argument("--config", required=True)
            c.add_argument("--out", default="out")
            c.add_argument("--seed", type=int, default=None, help="override master_seed")
            c.add_argument("--replicates", type=int, default=None, help="override n_rep")
    return ap


def run(group, command, config_path, out_dir, seed=None, replicates=None) -> int:
    kind = COMMANDS[group][command]
    try:
        with open(config_path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        print(f"error: config file not found: {config_path}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as e:
        print(f"error: {config_path} is not valid JSON: {e}", file=sys.stderr)
        return 1
    try:
        if replicates is not None and replicates < 1:
            raise ConfigError("--replicates must be >= 1")
        cfg = resolve_config(raw, kind, seed=seed, replicates=replicates)
        report, tables, extra, elapsed = execute(group, command, cfg, os.path.dirname(os.path.abspath(config_path)))
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, np.linalg.LinAlgError) as e:
        print(f"error in {group} {command}: {e}", file=sys.stderr)
        return 1
    write_outputs(out_dir, report, tables, extra)
    status = "PASS" if report["passed"] else "FAIL"
    failed = [k for k, v in report["checks"].items() if not v]
    print(f"{group} {command}: {status} ({elapsed:.1f}s, backend {BACKEND})"
          + (f" failed: {', '.join(failed)}" if failed else ""))
    return 0 if report["passed"] else 2


def main(argv=None):
    args = build_parser().parse_args(argv)
    sys.exit(run(args.group, args.command, args.config, args.out, args.seed, args.replicates))


if __name__ == "__main__":
    main()
