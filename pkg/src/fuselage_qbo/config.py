"""Experiment configuration files.

The format is a flat ``key = value`` text file.  ``#`` starts a comment,
blank lines are ignored, keys are case-sensitive and may appear once.
Values are typed by the key:

* integers and reals in Python literal syntax (``20000``, ``1e-3``);
* lists as comma-separated values (``sigma = 0.1, 0.2``);
* ``none`` for an optional value left unset (``eps0 = none``);
* everything else as a bare word (``mode = continuous8``).

:func:`format_config` writes every effective value, and parsing its output
returns an equal :class:`ExperimentConfig`.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .estimators import EMULATION_MODES, EMULATION_TARGETS
from .optimizer import BETA_SCHEDULES, METHODS, OptimizerConfig

MODES = ("discrete2", "continuous8")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "continuous8"
    sigma: tuple[float, ...] = (0.1,)
    budget: int = 20_000
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    n_conditions: int = 10
    runs_per_condition: int = 5
    condition_base: int = 0
    methods: tuple[str, ...] = METHODS
    n_points: int = 177
    m_actuators: int = 8
    levels: int = 21
    active_actuators: tuple[int, ...] = (0, 4)
    c1: float = 1.0
    c2: float = 1.0
    lam: float = 1.0
    lengthscale: float = 0.5
    n_features: int = 1024
    beta: float = 2.0
    beta_schedule: str = "constant"
    beta_offset: float = 0.0
    eta: float = 1.0
    delta: float = 0.05
    emulation: str = "uniform"
    emulation_target: str = "noisefree"
    eps0: float | None = None
    calibration_samples: int = 1000
    restarts: int = 64
    refine_top: int = 64
    sweeps: int = 3
    golden_iters: int = 12
    output_dir: str = "results"

    def __post_init__(self):
        def need(name, ok):
            if not ok:
                raise ConfigError(f"invalid value for {name}: {getattr(self, name)!r}")

        need("mode", self.mode in MODES)
        need("sigma", len(self.sigma) > 0 and all(s >= 0 for s in self.sigma))
        need("seeds", len(self.seeds) > 0 and len(set(self.seeds)) == len(self.seeds))
        need("n_conditions", self.n_conditions >= 1)
        need("runs_per_condition", 1 <= self.runs_per_condition <= len(self.seeds))
        need("methods", len(self.methods) > 0 and all(m in METHODS for m in self.methods))
        need("n_points", self.n_points >= 2)
        need("m_actuators", self.m_actuators >= 1)
        need("levels", self.levels >= 2)
        need("active_actuators", len(self.active_actuators) == 2
             and len(set(self.active_actuators)) == 2
             and all(0 <= a < self.m_actuators for a in self.active_actuators))
        need("beta_schedule", self.beta_schedule in BETA_SCHEDULES)
        need("emulation", self.emulation in EMULATION_MODES)
        need("emulation_target", self.emulation_target in EMULATION_TARGETS)
        need("output_dir", bool(self.output_dir))
        # the remaining ranges are owned by OptimizerConfig
        self.optimizer_config(self.seeds[0])

    @property
    def run_seeds(self) -> tuple[int, ...]:
        return self.seeds[:self.runs_per_condition]

    def optimizer_config(self, seed: int) -> OptimizerConfig:
        return OptimizerConfig(
            budget=self.budget, lam=self.lam, lengthscale=self.lengthscale,
            n_features=self.n_features, beta=self.beta, beta_schedule=self.beta_schedule,
            beta_offset=self.beta_offset, eta=self.eta, delta=self.delta, c1=self.c1,
            c2=self.c2, emulation=self.emulation, emulation_target=self.emulation_target,
            eps0=self.eps0, calibration_samples=self.calibration_samples,
            restarts=self.restarts, refine_top=self.refine_top, sweeps=self.sweeps,
            golden_iters=self.golden_iters, seed=int(seed))

    def config_hash(self) -> str:
        return hashlib.sha256(format_config(self).encode()).hexdigest()


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_INT = {"budget", "n_conditions", "runs_per_condition", "condition_base", "n_points",
        "m_actuators", "levels", "n_features", "calibration_samples", "restarts",
        "refine_top", "sweeps", "golden_iters"}
_FLOAT = {"c1", "c2", "lam", "lengthscale", "beta", "beta_offset", "eta", "delta"}
_OPT_FLOAT = {"eps0"}
_INT_LIST = {"seeds", "active_actuators"}
_FLOAT_LIST = {"sigma"}
_STR_LIST = {"methods"}


def _convert(key, raw):
    try:
        if key in _INT:
            return int(raw)
        if key in _FLOAT:
            return float(raw)
        if key in _OPT_FLOAT:
            return None if raw.lower() == "none" else float(raw)
        if key in _INT_LIST:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if key in _FLOAT_LIST:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if key in _STR_LIST:
            return tuple(v.strip() for v in raw.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"cannot parse value {raw!r} for {key}") from None
    return raw


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    if "seeds" not in values and "runs_per_condition" in values:
        values["seeds"] = tuple(range(values["runs_per_condition"]))
    if "runs_per_condition" not in values and "seeds" in values:
        values["runs_per_condition"] = len(values["seeds"])
    return ExperimentConfig(**values)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


def _format_value(v):
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ", ".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_config(config: ExperimentConfig) -> str:
    lines = [f"{name} = {_format_value(getattr(config, name))}" for name in _FIELDS]
    return "\n".join(lines) + "\n"
