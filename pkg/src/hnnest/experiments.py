"""Scenario generation, paired Monte Carlo trials and aggregation.

Every trial derives two independent random streams from
``SeedSequence(master_seed, spawn_key=(i,))``: one for the scenario draws
(initial estimate, disturbance moments, stiffness frequency) and one for the
disturbance samples. All estimators in a trial consume the same snapshot
stream, so their metrics are paired.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .baselines import KalmanEstimator, MheConfig, MheEstimator, RlsEstimator
from .config import HNN_TYPES, EstimatorSpec, RunConfig
from .constraints import BoxConstraints, from_box
from .errors import HnnError
from .hnn import GainConfig, HnnEstimator
from .metrics import MetricRecord, evaluate, zoh_resample
from .monitor import IdentifiabilityMonitor
from .plant import H_DIST, DisturbanceSpec, MsdParams, MsdSimulator, ParameterSchedule

METRIC_KEYS = ("final_mse", "auc_mse", "t5", "t1", "viol_pct")
PARAM_NAMES = ("k1", "b1", "k2", "b2")
CHUNK = 200_000


@dataclass
class TrialInputs:
    index: int
    theta0: np.ndarray
    disturbance: DisturbanceSpec
    schedule: ParameterSchedule
    noise_seed: np.random.SeedSequence
    draws: dict = field(default_factory=dict)


@dataclass
class TrialResult:
    index: int
    trial_seed: list
    draws: dict
    metrics: dict               # name -> MetricRecord | None
    failures: dict              # name -> message
    monitor: dict               # name -> summary
    saturation: dict            # name -> counts
    c_star: dict                # name -> observed curvature floor
    raw_viol_pct: dict          # name -> violation of unprojected outputs
    checksum: str
    traces: dict | None = None  # name -> arrays, only when requested
    truth: np.ndarray | None = None
    t: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {"index": self.index, "trial_seed": self.trial_seed, "draws": self.draws,
                "metrics": {k: (None if v is None else v.to_dict()) for k, v in self.metrics.items()},
                "failures": self.failures, "monitor": self.monitor,
                "saturation": self.saturation, "c_star": self.c_star,
                "raw_viol_pct": self.raw_viol_pct,
                "checksum": self.checksum}


@dataclass
class AggregateStats:
    """Per estimator and metric: mean, population std and the count of trials used."""

    trials: int
    table: dict

    def to_dict(self) -> dict:
        return {"trials": self.trials, "std_convention": "population", "estimators": self.table}


# ---------------------------------------------------------------- inputs

def box_of(cfg: RunConfig) -> BoxConstraints:
    return BoxConstraints(lower=np.array(cfg.box["lower"]), upper=np.array(cfg.box["upper"]))


def _streams(master_seed: int, i: int):
    parent = np.random.SeedSequence(master_seed, spawn_key=(i,))
    draw_ss, noise_ss = parent.spawn(2)
    return np.random.default_rng(draw_ss), noise_ss


def generate_trial(cfg: RunConfig, i: int) -> TrialInputs:
    """Deterministic inputs of trial ``i`` (or of the single run when no scenario is set)."""
    sc = cfg.scenario
    dist = DisturbanceSpec(cfg.disturbance.kind, cfg.disturbance.mu, cfg.disturbance.sigma2)
    sched = ParameterSchedule(cfg.schedule.kind, cfg.schedule.omega)
    theta0 = np.array(cfg.theta0, dtype=float)
    if sc is None:
        return TrialInputs(index=0, theta0=theta0, disturbance=dist, schedule=sched,
                           noise_seed=np.random.SeedSequence(cfg.seed))
    if not 0 <= i < sc.trials:
        raise IndexError(f"trial index {i} outside [0, {sc.trials})")
    rng, noise_ss = _streams(sc.master_seed, i)
    draws = {}
    if sc.id == "S1":
        box = box_of(cfg)
        theta0 = rng.uniform(box.lower, box.upper)
        draws["theta0"] = theta0.tolist()
    elif sc.id == "S2":
        mu = rng.uniform(*sc.mu_range)
        sigma2 = rng.uniform(*sc.sigma2_range)
        dist = DisturbanceSpec("gaussian", mu, sigma2)
        draws.update(mu=mu, sigma2=sigma2)
    else:
        omega = rng.uniform(*sc.omega_range)
        sched = ParameterSchedule("cosine", omega)
        draws["omega"] = omega
    return TrialInputs(index=i, theta0=theta0, disturbance=dist, schedule=sched,
                       noise_seed=noise_ss, draws=draws)


# ---------------------------------------------------------------- estimators

def make_estimator(spec: EstimatorSpec, cfg: RunConfig, theta0, emit_every: int):
    """Instantiate one estimator from its config entry."""
    o = spec.options
    box = box_of(cfg)
    if spec.type in HNN_TYPES:
        eta = o.get("eta", 0.0)
        gains = GainConfig(alpha=o["alpha"], beta=o["beta"], eta=eta if eta else 1.0, h=cfg.h,
                           integrator=cfg.integrator)
        cs = from_box(box)
        monitor = None
        if o.get("monitor"):
            monitor = IdentifiabilityMonitor(cs.A_theta, gains.eta, theta0=theta0, **o["monitor"])
        return HnnEstimator(
            4, gains, theta0,
            constraints=None if spec.type == "ls-hnn" else cs,
            compensation=H_DIST if spec.type == "ca2-hnn" else None,
            mode="ls" if spec.type == "ls-hnn" else "projector",
            monitor=monitor, diag_every=o["diag_every"], emit_every=emit_every,
            name=spec.name, slack_init=o.get("slack_init", "zero"),
            output_box=box if o.get("project_output") else None)
    if spec.type == "pb-rls":
        return RlsEstimator(theta0, box, lam=o["lam"], p0=o["p0"], emit_every=emit_every,
                            name=spec.name)
    if spec.type == "da-pb-kf":
        return KalmanEstimator(theta0, box, q_theta=o["q_theta"], q_d=o["q_d"], r=o["r"],
                               p0_theta=o["p0_theta"], p0_d=o["p0_d"], emit_every=emit_every,
                               name=spec.name)
    mcfg = MheConfig(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in o.items()})
    return MheEstimator(theta0, box, mcfg, emit_every=emit_every, name=spec.name)


def _hnn_summary(est: HnnEstimator, h: float):
    diag = est.diag
    mon = None
    if est.monitor is not None and diag["score"]:
        reg = np.asarray(diag["regime"])
        mon = {"min_score": float(np.min(diag["score"])),
               "fraction": {r: float(np.mean(reg == r)) for r in ("nominal", "soft", "hard")},
               "max_eta": float(np.max(diag["eta"]))}
    c = est.c_star()
    return mon, est.saturation_summary(h), (None if math.isnan(c) else c)


# ---------------------------------------------------------------- trials

def run_trial(cfg: RunConfig, inputs: TrialInputs, horizon: float | None = None,
              keep_traces: bool = False) -> TrialResult:
    """Simulate one plant realization and feed it to every configured estimator."""
    horizon = cfg.horizon if horizon is None else horizon
    n_steps = int(round(horizon / cfg.h))
    emit = cfg.emit_every
    params = MsdParams(**{k: getattr(cfg.plant, k) for k in ("m1", "m2", "k1", "b1", "k2", "b2")})
    sim = MsdSimulator(params=params, schedule=inputs.schedule, disturbance=inputs.disturbance,
                       h=cfg.h, x0=tuple(cfg.plant.x0), rng=np.random.default_rng(inputs.noise_seed))
    ests = [make_estimator(s, cfg, inputs.theta0, emit) for s in cfg.estimators]
    alive = [True] * len(ests)
    failures = {}
    t_emit, truth = [], []
    digest = hashlib.sha256()
    for chunk in sim.chunks(n_steps, CHUNK):
        digest.update(chunk.checksum().encode())
        sel = np.flatnonzero((chunk.offset + np.arange(len(chunk))) % emit == 0)
        t_emit.append(chunk.t[sel])
        truth.append(chunk.theta_true[sel])
        for j, est in enumerate(ests):
            if not alive[j]:
                continue
            try:
                est.process(chunk)
            except (HnnError, FloatingPointError, np.linalg.LinAlgError) as exc:
                alive[j] = False
                failures[est.name] = f"{type(exc).__name__}: {exc}"
    t = np.concatenate(t_emit)
    truth = np.concatenate(truth)
    box = box_of(cfg)
    metrics, monitor, sat, cstar, traces, raw = {}, {}, {}, {}, {}, {}
    for j, est in enumerate(ests):
        arr = est.trace.arrays()
        if alive[j] and arr["t"].size >= 10:
            theta = zoh_resample(arr["t"], arr["theta"], t)
            metrics[est.name] = evaluate(t, theta, truth, box, dwell=cfg.dwell)
        else:
            metrics[est.name] = None
        if isinstance(est, HnnEstimator):
            monitor[est.name], sat[est.name], cstar[est.name] = _hnn_summary(est, cfg.h)
            if est.output_box is not None:
                raw[est.name] = est.raw_violation
        if keep_traces:
            traces[est.name] = _trace_columns(est, arr, t)
    return TrialResult(index=inputs.index,
                       trial_seed=[cfg.scenario.master_seed if cfg.scenario else cfg.seed,
                                   inputs.index],
                       draws=inputs.draws, metrics=metrics, failures=failures, monitor=monitor,
                       saturation=sat, c_star=cstar, raw_viol_pct=raw, checksum=digest.hexdigest(),
                       traces=traces if keep_traces else None, truth=truth, t=t)


def _trace_columns(est, arr: dict, t: np.ndarray) -> dict:
    """Per-emission columns on the common grid; absent signals are NaN."""
    n = t.size
    nan = np.full(n, np.nan)
    theta = np.full((n, 4), np.nan)
    k = min(arr["t"].size, n)
    if k:
        theta[:k] = zoh_resample(arr["t"], arr["theta"], t)[:k]
    cols = {PARAM_NAMES[i]: theta[:, i] for i in range(4)}

    def col(key, j=None):
        if key not in arr or arr[key].size == 0:
            return nan
        v = arr[key]
        v = v[:, 0] if v.ndim > 1 and v.shape[1] else (v if v.ndim == 1 else nan)
        out = np.full(n, np.nan)
        out[:min(v.size, n)] = v[:n]
        return out

    cols["d"] = col("v_d")
    cols["energy"] = col("energy")
    cols["eta"] = col("eta")
    cols["regime"] = np.full(n, "", dtype=object)
    if "regime" in arr:
        r = arr["regime"]
        cols["regime"][:min(r.size, n)] = r[:n]
    cols["score"] = nan
    cols["c"] = nan
    if isinstance(est, HnnEstimator) and est.diag["t"]:
        dt = np.asarray(est.diag["t"])
        cols["c"] = zoh_resample(dt, np.asarray(est.diag["c"]), t)
        if est.diag["score"]:
            cols["score"] = zoh_resample(dt, np.asarray(est.diag["score"]), t)
    return cols


def run_single(cfg: RunConfig, horizon: float | None = None) -> TrialResult:
    """One run with traces kept; scenario draws are ignored."""
    return run_trial(replace(cfg, scenario=None), generate_trial(replace(cfg, scenario=None), 0),
                     horizon=horizon, keep_traces=True)


def _trial_job(args):
    cfg_dict, i, horizon, keep = args
    cfg = RunConfig.from_dict(cfg_dict)
    return run_trial(cfg, generate_trial(cfg, i), horizon=horizon, keep_traces=keep)


def run_montecarlo(cfg: RunConfig, horizon: float | None = None, workers: int | None = None,
                   keep_traces: bool = False) -> list[TrialResult]:
    """Run every trial of the scenario; results are ordered by trial index."""
    if cfg.scenario is None:
        raise ValueError("Monte Carlo runs need a scenario")
    n = cfg.scenario.trials
    jobs = [(cfg.to_dict(), i, horizon, keep_traces) for i in range(n)]
    workers = workers or cfg.workers or os.cpu_count() or 1
    workers = min(workers, n)
    if workers <= 1:
        return [_trial_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trial_job, jobs))


# ---------------------------------------------------------------- aggregation

def aggregate(results: list[TrialResult]) -> AggregateStats:
    """Mean and population std per metric; settling times only where defined."""
    if not results:
        raise ValueError("no trial results to aggregate")
    names = list(results[0].metrics)
    table = {}
    for name in names:
        recs = [r.metrics.get(name) for r in results]
        done = [m for m in recs if m is not None]
        row = {"completed": len(done), "failed": len(recs) - len(done)}
        for key in METRIC_KEYS:
            vals = [getattr(m, key) for m in done if getattr(m, key) is not None]
            if vals:
                a = np.asarray(vals, dtype=float)
                row[key] = {"mean": float(a.mean()), "std": float(a.std()), "count": len(vals)}
            else:
                row[key] = {"mean": None, "std": None, "count": 0}
        table[name] = row
    return AggregateStats(trials=len(results), table=table)


def format_table(stats: AggregateStats) -> str:
    """Aligned text table; settling cells show ``--`` unless every trial settled."""
    head = ["Method", "Final MSE", "AUC-MSE", "Time->5% [s]", "Time->1% [s]", "Viol. [%]"]
    rows = [head]
    for name, row in stats.table.items():
        cells = [name]
        for key in METRIC_KEYS:
            m = row[key]
            settle = key in ("t5", "t1")
            if m["mean"] is None or (settle and m["count"] < stats.trials):
                cells.append("--")
            else:
                cells.append(f"{m['mean']:.1e}+-{m['std']:.1e}")
        rows.append(cells)
    widths = [max(len(r[c]) for r in rows) for c in range(len(head))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows)


# ---------------------------------------------------------------- output

def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_trace_csv(path, result: TrialResult) -> None:
    """Time series of the truth and every estimator, 17 significant digits."""
    if result.traces is None:
        raise ValueError("trial was run without traces")
    header = ["t"] + [f"true.{p}" for p in PARAM_NAMES]
    cols = [result.t] + [result.truth[:, i] for i in range(4)]
    for name, tr in result.traces.items():
        for key in PARAM_NAMES + ("d", "energy", "score", "regime", "c", "eta"):
            header.append(f"{name}.{key}")
            cols.append(tr[key])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for k in range(result.t.size):
            wr.writerow([_cell(c[k]) for c in cols])


def _cell(x) -> str:
    if isinstance(x, str):
        return x
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:.17g}"


def montecarlo_report(cfg: RunConfig, results: list[TrialResult], horizon: float) -> dict:
    stats = aggregate(results)
    return {"name": cfg.name, "scenario": cfg.scenario.id, "master_seed": cfg.scenario.master_seed,
            "horizon": horizon, "h": cfg.h, "integrator": cfg.integrator,
            "aggregate": stats.to_dict(), "per_trial": [r.to_dict() for r in results]}
