"""Running configured experiments and writing tidy CSV / JSON reports."""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .config import EstimatorSpec, ExperimentConfig, build_game, reference_phi, resolve_pairs
from .errors import ConfigError
from .estimators import EstimationResult, run_estimator
from .fairness import FairnessReport, FidelityReport, fairness_report, fidelity_report, json_float, jsonable
from .game import CooperativeGame, SubprocessGame

ESTIMATE_COLUMNS = [
    "estimator", "trial", "epsilon1", "budget_used", "min_fs", "delta_independent", "delta_dependent",
    "delta_union", "a1_violations", "a2_rate", "a2_logsum", "n_infinite_rho", "a3_rate", "eps_abs",
    "nl_nsw", "n_infinite_fs", "n_inv", "eps_inv", "mape", "mse",
]
METRIC_COLUMNS = ESTIMATE_COLUMNS[3:]
AGGREGATE_COLUMNS = ["estimator", "epsilon1", "metric", "count", "mean", "se"]
PHI_COLUMNS = ["estimator", "trial", "player", "phi_ref", "phi_hat", "m", "fs"]
SWEEP_COLUMNS = [
    "axis", "axis_value", "estimator", "trial", "epsilon1", "min_fs", "a2_rate", "a2_logsum", "mape", "mse", "nl_nsw",
]
SWEEP_METRICS = SWEEP_COLUMNS[5:]
SWEEP_AGGREGATE_COLUMNS = ["axis", "axis_value", "estimator", "epsilon1", "metric", "count", "mean", "se"]


@dataclass
class TrialOutcome:
    estimator: str
    trial: int
    result: EstimationResult
    fidelity: FidelityReport
    fairness: FairnessReport | None

    def rows(self) -> list[dict]:
        if self.fairness is None:
            return []
        return [
            {"estimator": self.estimator, "trial": self.trial, "budget_used": self.result.budget_used,
             "min_fs": self.fidelity.min_fs, "a2_logsum": r.pop("deviation_ratio_logsum"), **r}
            for r in self.fairness.rows()
        ]


def versions() -> dict:
    return {"shapfair": __version__, "numpy": np.__version__, "python": platform.python_version()}


def worker_count(threads: int | None, game: CooperativeGame) -> int:
    if isinstance(game, SubprocessGame):
        # one child process answers queries serially
        return 1
    return max(1, threads or 1)


def run_trials(
    game: CooperativeGame,
    cfg: ExperimentConfig,
    estimators: Sequence[EstimatorSpec],
    phi_ref,
    sym,
    des,
    threads: int = 1,
    epsilon1_grid: Sequence[float] | None = None,
) -> list[TrialOutcome]:
    """Every (estimator, trial) run, in config order regardless of scheduling."""
    grid = cfg.epsilon1_grid if epsilon1_grid is None else list(epsilon1_grid)
    jobs = [(spec, t) for spec in estimators for t in range(cfg.trials)]

    def one(job):
        spec, t = job
        config = cfg.estimator_config(spec)
        res = run_estimator(spec.kind, game, config, trial=t)
        fid = fidelity_report(res, config.xi)
        fair = None if phi_ref is None else fairness_report(phi_ref, res, grid, config.xi, sym, des)
        return TrialOutcome(spec.name, t, res, fid, fair)

    workers = worker_count(threads, game)
    if workers == 1:
        return [one(j) for j in jobs]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(one, jobs))


def mean_se(values: Iterable[float]) -> tuple[int, float, float]:
    """Count, mean and sample-std / sqrt(count) of the finite values."""
    x = np.array([v for v in values if v is not None and math.isfinite(v)], dtype=float)
    if x.size == 0:
        return 0, math.nan, math.nan
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    return int(x.size), float(x.mean()), se


def aggregate(rows: list[dict], keys: Sequence[str], metrics: Sequence[str]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for key, members in groups.items():
        for m in metrics:
            count, mean, se = mean_se(float(r[m]) for r in members)
            out.append({**dict(zip(keys, key)), "metric": m, "count": count, "mean": mean, "se": se})
    return out


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def csv_text(columns: Sequence[str], rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _report(cfg: ExperimentConfig, game, phi_ref, sym, des, outcomes, extra: dict | None = None) -> dict:
    doc = {
        "config": cfg.to_dict(),
        "versions": versions(),
        "game": {"name": game.name, "n": game.n},
        "reference_phi": None if phi_ref is None else [float(x) for x in phi_ref],
        "symmetric_pairs": [list(p) for p in sym],
        "desirable_pairs": [list(p) for p in des],
        "runs": [
            {
                "estimator": o.estimator,
                "trial": o.trial,
                "phi_hat": [json_float(x) for x in o.result.phi_hat],
                "m_per_player": o.result.m_per_player.tolist(),
                "budget_used": o.result.budget_used,
                "proposal": None if o.result.proposal is None else o.result.proposal.to_dict(),
                "fidelity": o.fidelity.to_dict(),
                "fairness": None if o.fairness is None else o.fairness.to_dict(),
            }
            for o in outcomes
        ],
    }
    if extra:
        doc.update(extra)
    return doc


def _setup(cfg: ExperimentConfig):
    game = build_game(cfg)
    phi_ref = reference_phi(cfg, game)
    sym, des = resolve_pairs(cfg, game) if phi_ref is not None else ([], [])
    return game, phi_ref, sym, des


def run_estimate(cfg: ExperimentConfig, out_dir: str | Path | None = None, threads: int = 1) -> dict:
    """Run every estimator for every trial; write report.json, estimate.csv, aggregate.csv, phi.csv."""
    out = Path(out_dir) if out_dir is not None else cfg.resolve(cfg.outputs)
    game, phi_ref, sym, des = _setup(cfg)
    try:
        outcomes = run_trials(game, cfg, cfg.estimators, phi_ref, sym, des, threads)
    finally:
        if isinstance(game, SubprocessGame):
            game.close()
    rows = [r for o in outcomes for r in o.rows()]
    agg = aggregate(rows, ["estimator", "epsilon1"], METRIC_COLUMNS)
    agg_rows = [
        {"estimator": est, "trial": "aggregate", "epsilon1": eps,
         **{m: next(a["mean"] for a in agg if (a["estimator"], a["epsilon1"], a["metric"]) == (est, eps, m))
            for m in METRIC_COLUMNS}}
        for est, eps in dict.fromkeys((r["estimator"], r["epsilon1"]) for r in rows)
    ]
    phi_rows = [
        {"estimator": o.estimator, "trial": o.trial, "player": i,
         "phi_ref": math.nan if phi_ref is None else phi_ref[i], "phi_hat": o.result.phi_hat[i],
         "m": o.result.m_per_player[i], "fs": o.result.fs_per_player[i]}
        for o in outcomes for i in range(game.n)
    ]
    report = _report(cfg, game, phi_ref, sym, des, outcomes, {"aggregates": agg})
    _write(out / "estimate.csv", csv_text(ESTIMATE_COLUMNS, rows + agg_rows))
    _write(out / "aggregate.csv", csv_text(AGGREGATE_COLUMNS, agg))
    _write(out / "phi.csv", csv_text(PHI_COLUMNS, phi_rows))
    _write(out / "report.json", json.dumps(jsonable(report), indent=2, sort_keys=True) + "\n")
    return report


def _variants(cfg: ExperimentConfig, axis: str, value) -> list[EstimatorSpec]:
    out = []
    for spec in cfg.estimators:
        s = copy.deepcopy(spec)
        if axis == "budget":
            s.config.m_budget = int(value)
        elif axis == "alpha":
            s.config.alpha = float(value)
        out.append(s)
    return out


def run_sweep(cfg: ExperimentConfig, out_dir: str | Path | None = None, threads: int = 1) -> list[dict]:
    """Long-format table: one row per (axis value, estimator, trial, epsilon1).

    Writes sweep.csv, sweep_aggregate.csv and sweep_report.json.
    """
    if cfg.sweep is None:
        raise ConfigError(["sweep: the sweep command needs a 'sweep' section with 'axis' and 'values'"])
    out = Path(out_dir) if out_dir is not None else cfg.resolve(cfg.outputs)
    axis, values = cfg.sweep["axis"], cfg.sweep["values"]
    game, phi_ref, sym, des = _setup(cfg)
    if phi_ref is None:
        raise ConfigError(["reference: sweeps need a reference vector"])
    rows: list[dict] = []
    runs: list[TrialOutcome] = []
    try:
        if axis == "epsilon1":
            outcomes = run_trials(game, cfg, cfg.estimators, phi_ref, sym, des, threads, epsilon1_grid=values)
            runs.extend(outcomes)
            for v_index, value in enumerate(values):
                for o in outcomes:
                    rows.append(_sweep_row(axis, value, o, o.rows()[v_index]))
        else:
            for value in values:
                outcomes = run_trials(game, cfg, _variants(cfg, axis, value), phi_ref, sym, des, threads)
                runs.extend(outcomes)
                for o in outcomes:
                    rows.extend(_sweep_row(axis, value, o, r) for r in o.rows())
    finally:
        if isinstance(game, SubprocessGame):
            game.close()
    agg = aggregate(rows, ["axis", "axis_value", "estimator", "epsilon1"], SWEEP_METRICS)
    _write(out / "sweep.csv", csv_text(SWEEP_COLUMNS, rows))
    _write(out / "sweep_aggregate.csv", csv_text(SWEEP_AGGREGATE_COLUMNS, agg))
    report = _report(cfg, game, phi_ref, sym, des, runs, {"aggregates": agg})
    _write(out / "sweep_report.json", json.dumps(jsonable(report), indent=2, sort_keys=True) + "\n")
    return rows


def _sweep_row(axis: str, value, o: TrialOutcome, r: dict) -> dict:
    return {
        "axis": axis, "axis_value": value, "estimator": o.estimator, "trial": o.trial, "epsilon1": r["epsilon1"],
        "min_fs": r["min_fs"], "a2_rate": r["a2_rate"], "a2_logsum": r["a2_logsum"],
        "mape": r["mape"], "mse": r["mse"], "nl_nsw": r["nl_nsw"],
    }
