"""JSON run configuration: schema, validation and presets.

Every object level rejects unknown keys. A config describes one plant, the
constraint box, a list of estimators and, optionally, a Monte Carlo
scenario (``S1``, ``S2`` or ``S3``) whose per-trial draws replace the fixed
initial estimate, disturbance or stiffness schedule.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

from .errors import ConfigError

ESTIMATOR_TYPES = ("ca-hnn", "ca2-hnn", "ls-hnn", "pb-rls", "da-pb-kf", "da-pb-mhe")
HNN_TYPES = ("ca-hnn", "ca2-hnn", "ls-hnn")
DEFAULT_NAMES = {"ca-hnn": "CA-HNN", "ca2-hnn": "CA2-HNN", "ls-hnn": "LS-HNN",
                 "pb-rls": "PB-RLS", "da-pb-kf": "DA-PB-KF", "da-pb-mhe": "DA-PB-MHE"}

# option keys allowed per estimator type, with defaults
_HNN_OPTS = {"alpha": 10.0, "beta": 250.0, "eta": 50.0, "slack_init": "zero", "monitor": None,
             "diag_every": 100, "project_output": False}
OPTION_DEFAULTS = {
    "ca-hnn": _HNN_OPTS,
    "ca2-hnn": _HNN_OPTS,
    "ls-hnn": {"alpha": 6.0, "beta": 1.0, "diag_every": 100},
    "pb-rls": {"lam": 0.995, "p0": 1e6},
    "da-pb-kf": {"q_theta": 1e-8, "q_d": 1e12, "r": 1e12, "p0_theta": 1e6, "p0_d": None},
    "da-pb-mhe": {"N": 20, "M": 100, "prefilter": 0.9, "q_theta": [9e-4, 1e-12, 1e-12, 1e-12],
                  "p0_theta": [9.0, 1e-8, 1e-8, 1e-8], "r": 1e6, "rho": 0.98, "sigma_w": 5.0,
                  "sigma_d0": 50.0, "damping0": 1e-3, "max_iter": 30, "grad_tol": 1e-8,
                  "ridge": 1e-10},
}
MONITOR_DEFAULTS = {"tau_warn": 1e-2, "tau_freeze": 1e-3, "leak": 1e-3, "eta_cap": None,
                    "zeta": 0.6, "anchor_dwell": 1.0, "eta_decay": 0.5}
TUNE_DEFAULTS = {"gamma_des": None, "tau_c": 0.05, "zeta": 0.6, "eps": None, "omega_max": None,
                 "probe_horizon": 1.0, "delta": 0.75, "fprime_bar": 1.0}


def _check_keys(obj: dict, allowed, where: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")


def _num(x, where: str, positive: bool = False, nonneg: bool = False) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {x!r}")
    x = float(x)
    if positive and not x > 0:
        raise ConfigError(f"{where}: must be positive")
    if nonneg and x < 0:
        raise ConfigError(f"{where}: must be nonnegative")
    return x


def _vec(x, n: int | None, where: str) -> list:
    if not isinstance(x, list) or (n is not None and len(x) != n):
        raise ConfigError(f"{where}: expected a list of {n} numbers")
    return [_num(v, where) for v in x]


@dataclass
class EstimatorSpec:
    type: str
    name: str
    options: dict

    @classmethod
    def from_dict(cls, d: dict, where: str) -> "EstimatorSpec":
        _check_keys(d, ("type", "name", "options"), where)
        typ = d.get("type")
        if typ not in ESTIMATOR_TYPES:
            raise ConfigError(f"{where}.type: expected one of {ESTIMATOR_TYPES}, got {typ!r}")
        defaults = OPTION_DEFAULTS[typ]
        opts = d.get("options", {}) or {}
        _check_keys(opts, defaults, f"{where}.options")
        merged = copy.deepcopy(defaults)
        merged.update(opts)
        for key in ("alpha", "beta", "eta", "lam", "p0", "r", "p0_theta", "q_d", "rho",
                    "sigma_w", "sigma_d0", "damping0", "grad_tol", "ridge"):
            if key in merged and not isinstance(merged[key], list):
                merged[key] = _num(merged[key], f"{where}.options.{key}", positive=True)
        for key in ("diag_every", "N", "M", "max_iter"):
            if key in merged:
                v = merged[key]
                if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                    raise ConfigError(f"{where}.options.{key}: expected a positive integer")
        if typ == "pb-rls" and not merged["lam"] <= 1:
            raise ConfigError(f"{where}.options.lam: must lie in (0, 1]")
        if "project_output" in merged and not isinstance(merged["project_output"], bool):
            raise ConfigError(f"{where}.options.project_output: expected true or false")
        if "slack_init" in merged and merged["slack_init"] not in ("zero", "consistent"):
            raise ConfigError(f"{where}.options.slack_init: expected 'zero' or 'consistent'")
        if merged.get("monitor") is not None:
            mon = merged["monitor"]
            _check_keys(mon, MONITOR_DEFAULTS, f"{where}.options.monitor")
            full = dict(MONITOR_DEFAULTS)
            full.update(mon)
            if not 0 < full["tau_freeze"] < full["tau_warn"]:
                raise ConfigError(f"{where}.options.monitor: need 0 < tau_freeze < tau_warn")
            merged["monitor"] = full
        return cls(type=typ, name=d.get("name") or DEFAULT_NAMES[typ], options=merged)

    def to_dict(self) -> dict:
        return {"type": self.type, "name": self.name, "options": copy.deepcopy(self.options)}


@dataclass
class PlantSpec:
    m1: float = 1.0
    m2: float = 1.0
    k1: float = 1.0
    b1: float = 0.15
    k2: float = 0.5
    b2: float = 0.25
    x0: list = field(default_factory=lambda: [0.0, 0.3, 0.0, 0.0])

    @classmethod
    def from_dict(cls, d: dict, where: str = "plant") -> "PlantSpec":
        _check_keys(d, [f.name for f in fields(cls)], where)
        out = cls()
        for f in fields(cls):
            if f.name in d:
                if f.name == "x0":
                    out.x0 = _vec(d["x0"], 4, f"{where}.x0")
                else:
                    setattr(out, f.name, _num(d[f.name], f"{where}.{f.name}", positive=True))
        return out


@dataclass
class DisturbanceCfg:
    kind: str = "none"
    mu: float = 0.0
    sigma2: float = 0.0

    @classmethod
    def from_dict(cls, d: dict, where: str = "disturbance") -> "DisturbanceCfg":
        _check_keys(d, ("kind", "mu", "sigma2"), where)
        kind = d.get("kind", "none")
        if kind not in ("none", "gaussian"):
            raise ConfigError(f"{where}.kind: expected 'none' or 'gaussian'")
        return cls(kind=kind, mu=_num(d.get("mu", 0.0), f"{where}.mu"),
                   sigma2=_num(d.get("sigma2", 0.0), f"{where}.sigma2", nonneg=True))


@dataclass
class ScheduleCfg:
    kind: str = "constant"
    omega: float = 0.05

    @classmethod
    def from_dict(cls, d: dict, where: str = "schedule") -> "ScheduleCfg":
        _check_keys(d, ("kind", "omega"), where)
        kind = d.get("kind", "constant")
        if kind not in ("constant", "cosine"):
            raise ConfigError(f"{where}.kind: expected 'constant' or 'cosine'")
        return cls(kind=kind, omega=_num(d.get("omega", 0.05), f"{where}.omega", positive=True))


@dataclass
class ScenarioCfg:
    id: str
    trials: int = 10
    master_seed: int = 2024
    mu_range: list = field(default_factory=lambda: [1.0, 5.0])
    sigma2_range: list = field(default_factory=lambda: [1.0, 10.0])
    omega_range: list = field(default_factory=lambda: [0.01, 1.0])

    @classmethod
    def from_dict(cls, d: dict, where: str = "scenario") -> "ScenarioCfg":
        _check_keys(d, [f.name for f in fields(cls)], where)
        sid = d.get("id")
        if sid not in ("S1", "S2", "S3"):
            raise ConfigError(f"{where}.id: expected S1, S2 or S3")
        out = cls(id=sid)
        if "trials" in d:
            if isinstance(d["trials"], bool) or not isinstance(d["trials"], int) or d["trials"] < 1:
                raise ConfigError(f"{where}.trials: expected a positive integer")
            out.trials = d["trials"]
        if "master_seed" in d:
            if isinstance(d["master_seed"], bool) or not isinstance(d["master_seed"], int) \
                    or d["master_seed"] < 0:
                raise ConfigError(f"{where}.master_seed: expected a nonnegative integer")
            out.master_seed = d["master_seed"]
        for key in ("mu_range", "sigma2_range", "omega_range"):
            if key in d:
                lo, hi = _vec(d[key], 2, f"{where}.{key}")
                if not lo <= hi:
                    raise ConfigError(f"{where}.{key}: lower end exceeds upper end")
                setattr(out, key, [lo, hi])
        if out.omega_range[0] <= 0:
            raise ConfigError(f"{where}.omega_range: frequencies must be positive")
        return out


@dataclass
class RunConfig:
    name: str = "run"
    kind: str = "run"
    horizon: float = 1.0
    full_horizon: float | None = None
    h: float = 1e-5
    emit_every: int = 100
    integrator: str = "rk4"
    seed: int = 0
    dwell: float = 1.0
    theta0: list = field(default_factory=lambda: [0.25, 0.05, 0.3, 0.15])
    box: dict = field(default_factory=lambda: {"lower": [0.25, 0.05, 0.3, 0.15],
                                                     "upper": [1.75, 0.25, 0.7, 0.35]})
    plant: PlantSpec = field(default_factory=PlantSpec)
    disturbance: DisturbanceCfg = field(default_factory=DisturbanceCfg)
    schedule: ScheduleCfg = field(default_factory=ScheduleCfg)
    estimators: list = field(default_factory=list)
    scenario: ScenarioCfg | None = None
    tune: dict | None = None
    bode: dict | None = None
    workers: int | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        _check_keys(d, [f.name for f in fields(cls)], "config")
        out = cls()
        kind = d.get("kind", "run")
        if kind not in ("run", "montecarlo", "bode"):
            raise ConfigError("config.kind: expected 'run', 'montecarlo' or 'bode'")
        out.kind = kind
        if "name" in d:
            if not isinstance(d["name"], str):
                raise ConfigError("config.name: expected a string")
            out.name = d["name"]
        out.horizon = _num(d.get("horizon", out.horizon), "config.horizon", positive=True)
        if d.get("full_horizon") is not None:
            out.full_horizon = _num(d["full_horizon"], "config.full_horizon", positive=True)
        out.h = _num(d.get("h", out.h), "config.h", positive=True)
        out.dwell = _num(d.get("dwell", out.dwell), "config.dwell", positive=True)
        for key in ("emit_every", "seed"):
            if key in d:
                v = d[key]
                if isinstance(v, bool) or not isinstance(v, int) or v < (1 if key == "emit_every" else 0):
                    raise ConfigError(f"config.{key}: expected an integer")
                setattr(out, key, v)
        if "workers" in d and d["workers"] is not None:
            if isinstance(d["workers"], bool) or not isinstance(d["workers"], int) or d["workers"] < 1:
                raise ConfigError("config.workers: expected a positive integer")
            out.workers = d["workers"]
        out.integrator = d.get("integrator", out.integrator)
        if out.integrator not in ("rk4", "euler"):
            raise ConfigError("config.integrator: expected 'rk4' or 'euler'")
        if "theta0" in d:
            out.theta0 = _vec(d["theta0"], 4, "config.theta0")
        if "box" in d:
            box = d["box"]
            _check_keys(box, ("lower", "upper"), "config.box")
            lo = _vec(box.get("lower"), 4, "config.box.lower")
            up = _vec(box.get("upper"), 4, "config.box.upper")
            if any(a >= b for a, b in zip(lo, up)):
                raise ConfigError("config.box: need lower < upper")
            out.box = {"lower": lo, "upper": up}
        if "plant" in d:
            out.plant = PlantSpec.from_dict(d["plant"])
        if "disturbance" in d:
            out.disturbance = DisturbanceCfg.from_dict(d["disturbance"])
        if "schedule" in d:
            out.schedule = ScheduleCfg.from_dict(d["schedule"])
        ests = d.get("estimators", [])
        if not isinstance(ests, list):
            raise ConfigError("config.estimators: expected a list")
        out.estimators = [EstimatorSpec.from_dict(e, f"config.estimators[{i}]")
                          for i, e in enumerate(ests)]
        names = [e.name for e in out.estimators]
        if len(set(names)) != len(names):
            raise ConfigError(f"config.estimators: duplicate names {names}")
        if kind != "bode" and not out.estimators:
            raise ConfigError("config.estimators: at least one estimator is required")
        if d.get("scenario") is not None:
            out.scenario = ScenarioCfg.from_dict(d["scenario"])
        if kind == "montecarlo" and out.scenario is None:
            raise ConfigError("config.scenario: required for montecarlo runs")
        if d.get("tune") is not None:
            _check_keys(d["tune"], TUNE_DEFAULTS, "config.tune")
            out.tune = dict(TUNE_DEFAULTS, **d["tune"])
        if d.get("bode") is not None:
            _check_keys(d["bode"], ("omega_min", "omega_max", "points", "omegas"), "config.bode")
            out.bode = dict(d["bode"])
        return out

    def to_dict(self) -> dict:
        d = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name == "estimators":
                d[f.name] = [e.to_dict() for e in val]
            elif hasattr(val, "__dataclass_fields__"):
                d[f.name] = asdict(val)
            else:
                d[f.name] = copy.deepcopy(val)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def load_config(path) -> RunConfig:
    """Read and validate a JSON config file (or a preset name)."""
    p = Path(path)
    if not p.exists():
        if str(path) in preset_names():
            return load_preset(str(path))
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return RunConfig.from_dict(data)


def preset_names() -> list[str]:
    root = resources.files("hnnest") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> RunConfig:
    root = resources.files("hnnest") / "presets"
    f = root / f"{name}.json"
    if not f.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {preset_names()}")
    return RunConfig.from_dict(json.loads(f.read_text()))
