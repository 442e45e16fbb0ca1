"""Command-line entry point: ``hnnest {run,montecarlo,tune,bode}``.

Exit codes: 0 on success, 2 for configuration errors, 3 when an estimator
or the plant fails numerically.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .config import HNN_TYPES, TUNE_DEFAULTS, RunConfig, load_config, preset_names
from .constraints import from_box, lift
from .errors import ConfigError, HnnError, ZeroCurvature
from .experiments import (aggregate, box_of, format_table, generate_trial, montecarlo_report,
                          run_montecarlo, run_single, write_json, write_trace_csv)
from .hnn import GainConfig
from .plant import H_DIST, MsdParams, MsdSimulator, ParameterSchedule, bode_d_to_x2
from .stability import (BudgetAccumulator, curvature, max_step, select_beta,
                        select_beta_frequency, select_eta)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file or preset name")
    common.add_argument("--out", help="output directory (default runs/<name>)")
    common.add_argument("--seed", type=int, help="run seed, or master seed for Monte Carlo")
    common.add_argument("--trials", type=int, help="number of Monte Carlo trials")
    common.add_argument("--horizon", type=float, help="simulated seconds")
    common.add_argument("--emit-every", type=int, help="plant steps between trace records")
    common.add_argument("--workers", type=int, help="parallel trial workers")
    common.add_argument("--integrator", choices=("rk4", "euler"))
    common.add_argument("--full", action="store_true",
                        help="use the full-length horizon and a 1 s settling dwell")
    p = argparse.ArgumentParser(prog="hnnest", description="Hopfield-network parameter estimation")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="single run, writes a time-series CSV")
    sub.add_parser("montecarlo", parents=[common], help="paired trials, writes JSON and CSVs")
    sub.add_parser("tune", parents=[common], help="gain and step-size report")
    sub.add_parser("bode", parents=[common], help="disturbance-to-x2 frequency response CSV")
    sub.add_parser("presets", help="list bundled presets")
    return p


def _apply_overrides(cfg: RunConfig, args) -> tuple[RunConfig, float]:
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg.seed = args.seed
        if cfg.scenario is not None:
            cfg.scenario.master_seed = args.seed
    if args.trials is not None:
        if args.trials < 1 or cfg.scenario is None:
            raise ConfigError("--trials needs a positive count and a scenario config")
        cfg.scenario.trials = args.trials
    if args.emit_every is not None:
        if args.emit_every < 1:
            raise ConfigError("--emit-every must be positive")
        cfg.emit_every = args.emit_every
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError("--workers must be positive")
        cfg.workers = args.workers
    if args.integrator is not None:
        cfg.integrator = args.integrator
    horizon = cfg.horizon
    if args.full:
        horizon = cfg.full_horizon or cfg.horizon
        cfg.dwell = 1.0
    if args.horizon is not None:
        if not args.horizon > 0:
            raise ConfigError("--horizon must be positive")
        horizon = args.horizon
    return cfg, horizon


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out) if args.out else Path("runs") / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _report_failures(failures: dict) -> bool:
    for name, msg in failures.items():
        print(f"error: {name} failed: {msg}", file=sys.stderr)
    return bool(failures)


def cmd_run(cfg: RunConfig, args) -> int:
    cfg, horizon = _apply_overrides(cfg, args)
    res = run_single(cfg, horizon)
    out = _out_dir(args, cfg)
    write_trace_csv(out / "trace.csv", res)
    summary = {"name": cfg.name, "horizon": horizon, "h": cfg.h, "checksum": res.checksum,
               **res.to_dict()}
    write_json(out / "summary.json", _jsonable(summary))
    for name, m in res.metrics.items():
        if m is not None:
            tr = res.traces[name]
            end = [round(float(tr[k][-1]), 4) for k in ("k1", "b1", "k2", "b2")]
            print(f"{name}: final MSE {m.final_mse:.3e}  AUC {m.auc_mse:.3e}  "
                  f"viol {m.viol_pct:.1f}%  final estimate {end}")
    print(f"wrote {out / 'trace.csv'}")
    return EXIT_NUMERIC if _report_failures(res.failures) else EXIT_OK


def cmd_montecarlo(cfg: RunConfig, args) -> int:
    if cfg.scenario is None:
        raise ConfigError("montecarlo needs a config with a scenario")
    cfg, horizon = _apply_overrides(cfg, args)
    results = run_montecarlo(cfg, horizon=horizon, workers=cfg.workers, keep_traces=True)
    out = _out_dir(args, cfg)
    for r in results:
        write_trace_csv(out / f"trial_{r.index:03d}.csv", r)
    write_json(out / "aggregate.json", _jsonable(montecarlo_report(cfg, results, horizon)))
    print(f"{cfg.scenario.id}: {len(results)} trials, horizon {horizon:g} s, h {cfg.h:g}")
    print(format_table(aggregate(results)))
    failed = {f"trial {r.index} {k}": v for r in results for k, v in r.failures.items()}
    return EXIT_NUMERIC if _report_failures(failed) else EXIT_OK


def _probe_snapshots(cfg: RunConfig, horizon: float, every: int):
    params = MsdParams(**{k: getattr(cfg.plant, k) for k in ("m1", "m2", "k1", "b1", "k2", "b2")})
    inputs = generate_trial(dataclasses.replace(cfg, scenario=None), 0)
    sim = MsdSimulator(params=params, schedule=ParameterSchedule("constant"),
                       disturbance=inputs.disturbance, h=cfg.h, x0=tuple(cfg.plant.x0),
                       rng=np.random.default_rng(inputs.noise_seed))
    for chunk in sim.chunks(int(round(horizon / cfg.h))):
        sel = np.flatnonzero((chunk.offset + np.arange(len(chunk))) % every == 0)
        for k in sel:
            yield float(chunk.t[k]), chunk.W[k], chunk.theta_true[k], float(chunk.d[k])


def cmd_tune(cfg: RunConfig, args) -> int:
    cfg, _ = _apply_overrides(cfg, args)
    spec = next((e for e in cfg.estimators if e.type in HNN_TYPES), None)
    if spec is None:
        raise ConfigError("tune needs at least one Hopfield estimator in the config")
    t = {**TUNE_DEFAULTS, **(cfg.tune or {})}
    o = spec.options
    eta = o.get("eta", 0.0) if spec.type != "ls-hnn" else 0.0
    gains = GainConfig(alpha=o["alpha"], beta=o["beta"], eta=max(eta, 1e-12), h=cfg.h,
                       integrator=cfg.integrator)
    lc = lift(from_box(box_of(cfg)))
    P_th = lc.P_A_theta if eta > 0 else np.zeros_like(lc.P_A_theta)
    H = H_DIST if spec.type == "ca2-hnn" else None
    acc = BudgetAccumulator(P_th, lc.b_ctr[:lc.p], eta, H=H)
    Ws = []
    for tk, W, th, d in _probe_snapshots(cfg, t["probe_horizon"], o.get("diag_every", 100)):
        acc.observe(tk, W, th, d)
        Ws.append(W)
    lam_max = 1.0 + eta
    report = {"estimator": spec.name, "alpha": gains.alpha, "beta": gains.beta, "eta": eta,
              "h": cfg.h, "h_max": max_step(gains, lam_max, t["fprime_bar"]),
              "c_star": None if not np.isfinite(acc.c_min) else acc.c_min,
              "advisories": []}
    if cfg.h > report["h_max"]:
        report["advisories"].append(f"h={cfg.h:g} exceeds the RK4 bound {report['h_max']:.3g}")

    def curv(e):
        vals = []
        for W in Ws:
            Wa = W if H is None else np.hstack([W, H])
            P = Wa.T @ np.linalg.solve(Wa @ Wa.T, Wa)
            Pt = np.zeros_like(P)
            Pt[:lc.p, :lc.p] = lc.P_A_theta
            vals.append(curvature(P, Pt, e))
        return min(vals) if vals else 0.0

    sel = select_eta(curv, t["tau_c"], gains, zeta=t["zeta"], fprime_bar=t["fprime_bar"])
    report["eta_selection"] = dataclasses.asdict(sel)
    if sel.advisory:
        report["advisories"].append(sel.advisory)
    try:
        rep = acc.report(gains, delta=t["delta"], compensated=H is not None)
        report.update(gamma_star=rep.gamma_star, rho=rep.rho, budgets=rep.budgets)
        c = acc.c_min
        if t["gamma_des"] is not None:
            report["beta_for_gamma_des"] = select_beta(t["gamma_des"], gains.alpha, t["delta"], c)
        if t["eps"] is not None and t["omega_max"] is not None:
            report["beta_for_frequency"] = select_beta_frequency(t["omega_max"], t["eps"],
                                                                 gains.alpha, t["delta"], c)
    except ZeroCurvature as exc:
        report["advisories"].append(f"ZeroCurvature: {exc}")
    for key in ("estimator", "alpha", "beta", "eta", "h", "h_max", "c_star", "gamma_star", "rho",
                "beta_for_gamma_des", "beta_for_frequency"):
        if key in report:
            val = report[key]
            print(f"{key:>20}: {val:.6g}" if isinstance(val, float) else f"{key:>20}: {val}")
    print(f"{'selected eta':>20}: {sel.eta:g} (curvature {sel.c_star:.4g}, "
          f"{'reached' if sel.reached else 'not reached'})")
    for msg in report["advisories"]:
        print(f"advisory: {msg}")
    if args.out:
        write_json(_out_dir(args, cfg) / "tune.json", _jsonable(report))
    return EXIT_OK


def cmd_bode(cfg: RunConfig, args) -> int:
    b = cfg.bode or {}
    if "omegas" in b:
        om = np.asarray(b["omegas"], dtype=float)
    else:
        lo, hi, n = b.get("omega_min", 0.01), b.get("omega_max", 100.0), int(b.get("points", 2001))
        if not 0 < lo <= hi or n < 1:
            raise ConfigError("bode grid needs 0 < omega_min <= omega_max and points >= 1")
        om = np.geomspace(lo, hi, n)
    if om.size == 0 or np.any(om <= 0):
        raise ConfigError("bode frequencies must be positive")
    params = MsdParams(**{k: getattr(cfg.plant, k) for k in ("m1", "m2", "k1", "b1", "k2", "b2")})
    rows = bode_d_to_x2(params, om)
    out = _out_dir(args, cfg)
    with open(out / "bode.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["omega", "magnitude", "phase_deg"])
        for r in rows:
            wr.writerow([f"{r['omega']:.17g}", f"{r['magnitude']:.17g}",
                         f"{np.degrees(r['phase']):.17g}"])
    peak = max(rows, key=lambda r: r["magnitude"])
    print(f"peak |G| = {peak['magnitude']:.4g} at omega = {peak['omega']:.4g} rad/s "
          f"(period {2 * np.pi / peak['omega']:.3g} s)")
    print(f"wrote {out / 'bode.csv'}")
    return EXIT_OK


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    try:
        if args.config is None:
            if args.command != "bode":
                raise ConfigError("--config is required")
            cfg = load_config("fig6")
        else:
            cfg = load_config(args.config)
        handler = {"run": cmd_run, "montecarlo": cmd_montecarlo, "tune": cmd_tune,
                   "bode": cmd_bode}[args.command]
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HnnError, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
