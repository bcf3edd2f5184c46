"""``xfpt`` command line: exact, simulate, compare, diagnose, sweep.

Usage::

    xfpt <command> --config run.json [--key.path=value ...] --out DIR

Exit codes: 0 success, 1 usage or config error (JSON error on stderr),
2 statistical comparison failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import bethe_family, comet_family, diagnose, estimate_drift, leaky_family
from .evt import (
    ExtremeQuery,
    F_from_pmf,
    NonConvergentError,
    DivergentMeanError,
    default_truncation,
    extreme_tail_table,
    mean_asymptotic,
    mean_exact,
    moment_asymptotic,
    moment_exact,
    n_for_lambda,
    tail_asymptotic_table,
    variance_asymptotic,
    variance_exact,
)
from .fpt import fpt
from .graphs import BetheSpec, CometSpec, InvalidModelError, LeakyLoopSpec
from .io import ConfigError, apply_overrides, load_config, model_from_config, write_csv, write_distribution, write_json
from .mc import McConfig, NoArrivalError, run_trials, simulate_walkers

log = logging.getLogger("xfpt")

COMMANDS = ("exact", "simulate", "compare", "diagnose", "sweep")

STATS_DEFAULTS = {
    "k_max": 15,
    "horizon": 200,
    "moments": [1, 2],
    "mean_mode": "conditional",
    "K": None,
    "asym_tol": 0.02,
}
MC_DEFAULTS = {"trials": 10000, "seed": 0, "t_max": None, "mode": "direct-walk"}
OUTPUT_DEFAULTS = {"dir": None, "formats": ["csv", "json"], "precision": 17}
DIAGNOSE_DEFAULTS = {
    "k_max": 10,
    "invariance_tol": 1e-9,
    "slope_sigma": 5.0,
    "fit_k": 2,
    "drift_d": None,
}
COMPARE_DEFAULTS = {"z_max": 3.0, "mean_sigma": 3.0}


class StatisticalFailure(Exception):
    pass


# ------------------------------------------------------------ resolution


def resolve_config(cfg: dict, command: str, out: str | None = None) -> dict:
    """Fill defaults and check the run-level invariants."""
    cfg = copy.deepcopy(cfg)
    if "model" not in cfg:
        raise ConfigError("config needs exactly one model block")
    if isinstance(cfg["model"], list):
        raise ConfigError("config needs exactly one model block, got a list")
    model_from_config(cfg["model"])
    if cfg.get("mc_model") is not None:
        model_from_config(cfg["mc_model"])
    stats = {**STATS_DEFAULTS, **cfg.get("stats", {})}
    has_lam, has_n = stats.get("lambda") is not None, stats.get("N") is not None
    if command in ("exact", "simulate", "compare"):
        if has_lam == has_n:
            raise ConfigError("stats block needs exactly one of lambda or N")
    if stats["mean_mode"] not in ("conditional", "truncated"):
        raise ConfigError("stats.mean_mode must be conditional or truncated")
    cfg["stats"] = stats
    cfg["mc"] = {**MC_DEFAULTS, **cfg.get("mc", {})}
    cfg["output"] = {**OUTPUT_DEFAULTS, **cfg.get("output", {})}
    if out is not None:
        cfg["output"]["dir"] = out
    if not cfg["output"]["dir"]:
        raise ConfigError("no output directory (use --out or output.dir)")
    if command == "diagnose":
        cfg["diagnose"] = {**DIAGNOSE_DEFAULTS, **cfg.get("diagnose", {})}
        if len(set(cfg["diagnose"].get("d_list") or [])) < 3:
            raise ConfigError("diagnose.d_list needs at least 3 distinct distances")
    if command == "compare":
        cfg["compare"] = {**COMPARE_DEFAULTS, **cfg.get("compare", {})}
    if command == "sweep":
        sweep = cfg.get("sweep", {})
        grids = [k for k in ("lambda", "N") if sweep.get(k)]
        if len(grids) != 1:
            raise ConfigError("sweep block needs exactly one nonempty grid: lambda or N")
    return cfg


def _prepare_out(cfg) -> Path:
    out = Path(cfg["output"]["dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".xfpt-write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} not writable: {exc}") from exc
    return out


def _header(cfg, command) -> dict:
    resolved = {k: v for k, v in cfg.items() if k != "output"}
    resolved["output"] = {k: v for k, v in cfg["output"].items() if k != "dir"}
    return {"tool": "xfpt", "version": __version__, "command": command, "config": resolved, "seed": cfg["mc"]["seed"]}


def _population(model, stats) -> tuple[int, float | None]:
    """(N, lambda as supplied or None); lambda-mode resolves N via n_for_lambda."""
    if stats.get("lambda") is not None:
        lam = float(stats["lambda"])
        dist = fpt(model, 0)
        return n_for_lambda(dist, lam), lam
    return int(stats["N"]), None


# ------------------------------------------------------------ computation


def exact_stats(model, N: int, lam: float | None, stats: dict) -> dict:
    """Exact and asymptotic statistics for one (model, N)."""
    d = model.distance
    dist = fpt(model, int(stats["horizon"]))
    q = ExtremeQuery(dist, N)
    lam_used = q.lam if lam is None else lam
    F = F_from_pmf(dist)
    K = stats["K"] if stats["K"] is not None else default_truncation(N)
    k_max = min(int(stats["k_max"]), dist.K)

    try:
        mean_unc = mean_exact(q, "unconditional")
    except (DivergentMeanError, ValueError):
        mean_unc = None
    asym = {}
    for mode in ("truncated", "conditional"):
        try:
            asym[mode] = {
                "mean": mean_asymptotic(d, lam_used, F, mode, K),
                "var": variance_asymptotic(lam_used, F, K, mode),
                "moments": {str(m): moment_asymptotic(m, lam_used, F, K, mode) for m in stats["moments"]},
            }
        except NonConvergentError as exc:
            asym[mode] = {"mean": None, "var": None, "moments": {}, "error": str(exc)}
    chosen = stats["mean_mode"]
    return {
        "dist": dist,
        "profile": F,
        "tail_exact": extreme_tail_table(q)[: k_max + 1],
        "tail_asymptotic": tail_asymptotic_table(lam_used, F)[: k_max + 1],
        "summary": {
            "d": d,
            "N": N,
            "lambda": lam_used,
            "lambda_experiment": q.lam,
            "p_d": dist.p_d,
            "defect": dist.defect,
            "residual_bound": dist.residual_bound,
            "mode": chosen,
            "truncation_K": K,
            "mean_exact": mean_exact(q, "conditional"),
            "mean_exact_unconditional": mean_unc,
            "var_exact": variance_exact(q, "conditional"),
            "mean_asymptotic": asym[chosen]["mean"],
            "var_asymptotic": asym[chosen]["var"],
            "asymptotic": asym,
            "moments_exact": {str(m): moment_exact(q, m) for m in stats["moments"]},
            "F": F.F[: k_max + 1].tolist(),
            "F_limit": F.limit,
        },
    }


def _mc_config(cfg, model, N) -> McConfig:
    mc = cfg["mc"]
    mc_model = model_from_config(cfg["mc_model"]) if cfg.get("mc_model") else model
    return McConfig(
        model=mc_model,
        N=N,
        trials=int(mc["trials"]),
        seed=int(mc["seed"]),
        t_max=None if mc["t_max"] is None else int(mc["t_max"]),
        mode=mc["mode"],
        k_max=int(cfg["stats"]["k_max"]),
    )


# -------------------------------------------------------------- commands


def cmd_exact(cfg: dict) -> int:
    out = _prepare_out(cfg)
    header = _header(cfg, "exact")
    prec = int(cfg["output"]["precision"])
    model = model_from_config(cfg["model"])
    N, lam = _population(model, cfg["stats"])
    res = exact_stats(model, N, lam, cfg["stats"])
    write_distribution(out / "distribution.csv", res["dist"], header, prec)
    k = np.arange(len(res["tail_exact"]))
    write_csv(
        out / "tail.csv",
        ["k", "tail_exact", "tail_asymptotic"],
        zip(k, res["tail_exact"], res["tail_asymptotic"]),
        header,
        prec,
    )
    write_json(out / "summary.json", res["summary"], header)
    return 0


def cmd_simulate(cfg: dict) -> int:
    out = _prepare_out(cfg)
    header = _header(cfg, "simulate")
    prec = int(cfg["output"]["precision"])
    model = model_from_config(cfg["model"])
    N, _ = _population(model, cfg["stats"])
    result = run_trials(_mc_config(cfg, model, N))
    write_json(out / "mc_result.json", result.to_dict(), header)
    k = np.arange(result.k_max + 1)
    write_csv(
        out / "mc_tail.csv",
        ["k", "p_hat", "se", "n_trials"],
        zip(k, result.tail, result.tail_se, [result.trials] * len(k)),
        header,
        prec,
    )
    return 0


def compare_tables(tail_exact, tail_asym, tail_mc, trials, mean_exact_c, mean_mc, mean_se, cmp: dict, asym_tol: float):
    """Joined comparison table and verdict; a pure function of its inputs."""
    tail_exact = np.asarray(tail_exact, dtype=float)
    tail_mc = np.asarray(tail_mc, dtype=float)
    # binomial SE under the null hypothesis p = tail_exact
    se = np.sqrt(tail_exact * (1.0 - tail_exact) / trials)
    diff = tail_mc - tail_exact
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff == 0, 0.0, np.inf))
    tails_ok = bool(np.all(np.abs(z) <= cmp["z_max"]))
    mean_diff = abs(mean_mc - mean_exact_c)
    mean_bound = cmp["mean_sigma"] * (mean_se if math.isfinite(mean_se) else 0.0) + 1e-12
    mean_ok = bool(mean_diff <= mean_bound)
    asym_gap = float(np.max(np.abs(np.asarray(tail_asym) - tail_exact)))
    report = {
        "pass": tails_ok and mean_ok,
        "tails_pass": tails_ok,
        "max_abs_z": float(np.max(np.abs(z))),
        "z_max": cmp["z_max"],
        "mean_pass": mean_ok,
        "mean_exact": mean_exact_c,
        "mean_mc": mean_mc,
        "mean_se": mean_se,
        "mean_discrepancy": mean_diff,
        "mean_bound": mean_bound,
        "asymptotic_max_gap": asym_gap,
        "asymptotic_divergence": asym_gap > asym_tol,
    }
    return se, z, report


def cmd_compare(cfg: dict) -> int:
    out = _prepare_out(cfg)
    header = _header(cfg, "compare")
    prec = int(cfg["output"]["precision"])
    model = model_from_config(cfg["model"])
    N, lam = _population(model, cfg["stats"])
    res = exact_stats(model, N, lam, cfg["stats"])
    mc = run_trials(_mc_config(cfg, model, N))
    n = min(len(res["tail_exact"]), mc.k_max + 1)
    te, ta, tm = res["tail_exact"][:n], res["tail_asymptotic"][:n], mc.tail[:n]
    # mean SE under the null, from the exact conditional variance
    mean_se = math.sqrt(res["summary"]["var_exact"] / mc.trials_used)
    se, z, report = compare_tables(
        te, ta, tm, mc.trials, res["summary"]["mean_exact"], mc.mean, mean_se,
        cfg["compare"], float(cfg["stats"]["asym_tol"]),
    )
    write_csv(
        out / "compare.csv",
        ["k", "tail_exact", "tail_asymptotic", "tail_mc", "se", "z_score"],
        zip(np.arange(n), te, ta, tm, se, z),
        header,
        prec,
    )
    report["no_arrival_count"] = mc.no_arrival_count
    report["trials"] = mc.trials
    write_json(out / "compare.json", report, header)
    if report["asymptotic_divergence"]:
        log.warning("asymptotic tail departs from exact by %.3g (small-N regime)", report["asymptotic_max_gap"])
    if not report["pass"]:
        log.error("Monte Carlo disagrees with exact theory (max |z| = %.2f)", report["max_abs_z"])
        return 2
    return 0


def _family(model):
    if isinstance(model, LeakyLoopSpec):
        return leaky_family(model.stay, model.survival)
    if isinstance(model, CometSpec):
        return comet_family(model.head, model.survival)
    if isinstance(model, BetheSpec):
        return bethe_family(model.z)
    raise ConfigError(f"cannot sweep d for {type(model).__name__}")


def cmd_diagnose(cfg: dict) -> int:
    out = _prepare_out(cfg)
    header = _header(cfg, "diagnose")
    prec = int(cfg["output"]["precision"])
    dcfg = cfg["diagnose"]
    model = model_from_config(cfg["model"])
    family = _family(model)
    report = diagnose(
        family,
        dcfg["d_list"],
        k_max=int(dcfg["k_max"]),
        invariance_tol=float(dcfg["invariance_tol"]),
        slope_sigma=float(dcfg["slope_sigma"]),
        fit_k=int(dcfg["fit_k"]),
    )
    body = report.to_dict()
    if dcfg.get("drift_d") is not None:
        spec = family.at(int(dcfg["drift_d"]))
        mc = cfg["mc"]
        t_max = mc["t_max"] or spec.distance + 200
        t = simulate_walkers(spec, int(mc["trials"]), int(mc["seed"]), int(t_max))
        body["drift"] = vars(estimate_drift(spec, t[t >= 0], seed=int(mc["seed"])))
    write_json(out / "regime.json", body, header)
    ds = list(report.d_values)
    write_csv(
        out / "F_table.csv",
        ["k"] + [f"d={d}" for d in ds],
        ([k] + list(report.F[:, k]) for k in range(report.F.shape[1])),
        header,
        prec,
    )
    return 0


def cmd_sweep(cfg: dict) -> int:
    out = _prepare_out(cfg)
    header = _header(cfg, "sweep")
    prec = int(cfg["output"]["precision"])
    model = model_from_config(cfg["model"])
    sweep = cfg["sweep"]
    with_mc = int(cfg["mc"]["trials"]) > 0
    points = [("lambda", float(v)) for v in sweep.get("lambda") or []] + [("N", int(v)) for v in sweep.get("N") or []]
    rows = []
    for key, value in points:
        stats = {**cfg["stats"], "lambda": None, "N": None, key: value}
        N, lam = _population(model, stats)
        s = exact_stats(model, N, lam, stats)["summary"]
        row = {
            "lambda": s["lambda"],
            "N": N,
            "mean_exact": s["mean_exact"],
            "mean_asym": s["mean_asymptotic"],
            "var_exact": s["var_exact"],
            "var_asym": s["var_asymptotic"],
            "mean_mc": math.nan,
            "var_mc": math.nan,
            "mean_mc_se": math.nan,
            "var_mc_se": math.nan,
        }
        if with_mc:
            mc = run_trials(_mc_config(cfg, model, N))
            row.update(
                mean_mc=mc.mean,
                var_mc=mc.variance,
                mean_mc_se=mc.mean_se,
                var_mc_se=mc.bootstrap_variance_se(seed=int(cfg["mc"]["seed"])),
            )
        rows.append(row)
        log.info("sweep point %s=%s done", key, value)
    cols = list(rows[0])
    write_csv(out / "sweep.csv", cols, ([r[c] if r[c] is not None else math.nan for c in cols] for r in rows), header, prec)
    write_json(out / "sweep.json", {"rows": rows}, header)
    return 0


HANDLERS = {
    "exact": cmd_exact,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "diagnose": cmd_diagnose,
    "sweep": cmd_sweep,
}


def _fail(kind: str, message: str, **extra) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}) + "\n")
    return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="xfpt", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run config")
    parser.add_argument("--out", help="output directory (overrides output.dir)")
    parser.add_argument("-v", "--verbose", action="store_true")
    try:
        args, rest = parser.parse_known_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    bad = [a for a in rest if not (a.startswith("--") and "=" in a)]
    if bad:
        return _fail("usage", f"unrecognized arguments: {' '.join(bad)}")
    try:
        cfg = apply_overrides(load_config(args.config), [a[2:] for a in rest])
        cfg = resolve_config(cfg, args.command, args.out)
        return HANDLERS[args.command](cfg)
    except NoArrivalError as exc:
        return _fail("no-arrival", str(exc), no_arrival_count=exc.no_arrival_count)
    except (ConfigError, InvalidModelError) as exc:
        return _fail("config", str(exc))
    except (OSError, ValueError) as exc:
        return _fail(type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
