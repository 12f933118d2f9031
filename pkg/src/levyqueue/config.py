"""Experiment configuration: JSON round-trip, validation and bundled presets."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .correction import InitialState
from .errors import ConfigError, LevyQueueError
from .model import InputModel, make_mpareto
from .simulate import SimConfig
from .stationary import benchmark_congestion, check_alpha

__all__ = ["ExperimentConfig", "PRESETS", "preset", "load_config", "resolve_initial"]

COMMANDS = ("tables", "curves", "figure1", "validate", "gap-scaling")


@dataclass
class ExperimentConfig:
    """Everything a CLI run needs.  Grids and tolerances live here, not in code.

    ``initial_states`` entries are ``{"kind": "deterministic", "value": x}``,
    ``{"kind": "exponential", "value": mean}``, ``{"kind": "warmup", "value":
    burn_in}`` or ``{"kind": "benchmark", "factor": f}``; the last resolves to
    ``x = f * benchmark congestion`` for each ``alpha``.
    """

    command: str
    name: str
    model: dict
    alphas: list = field(default_factory=list)
    horizons: list = field(default_factory=list)
    initial_states: list = field(default_factory=list)
    sim: dict = field(default_factory=dict)
    mu_grid: dict | None = None
    t_grid: dict | None = None
    mu: float | None = None
    method: str = "auto"
    fixture: str | None = None
    saa_column: bool = False
    tolerances: dict = field(default_factory=dict)
    gap_objective: str = "exact"
    out_dir: str = "results"

    # ------------------------------------------------------------------
    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key in ("command", "name", "model"):
            if key not in d:
                raise ConfigError(f"config is missing {key!r}")
        return cls(**copy.deepcopy(d))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc

    def digest(self) -> str:
        """Hash of everything that affects results (the output directory does not)."""
        d = self.to_dict()
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    # ------------------------------------------------------------------
    def input_model(self) -> InputModel:
        try:
            return InputModel.from_dict(self.model)
        except KeyError as exc:
            raise ConfigError(f"model is missing parameter {exc}") from exc
        except (LevyQueueError, ValueError, TypeError) as exc:
            raise ConfigError(f"invalid model: {exc}") from exc

    def sim_config(self, jobs: int = 1) -> SimConfig:
        allowed = {"replications", "master_seed", "bm_step", "ci_level"}
        unknown = set(self.sim) - allowed
        if unknown:
            raise ConfigError(f"unknown sim keys: {sorted(unknown)}")
        return SimConfig(jobs=jobs, **self.sim)

    def tolerance(self, key: str) -> float:
        if key not in self.tolerances:
            raise ConfigError(f"tolerance {key!r} missing from config")
        return float(self.tolerances[key])

    def validate(self) -> None:
        """Check every referenced parameter before any work starts."""
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        model = self.input_model()
        self.sim_config()
        if self.method not in ("auto", "mc", "rbm"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.method == "rbm" and not model.is_brownian:
            raise ConfigError("method 'rbm' needs Brownian input")
        for a in self.alphas:
            try:
                check_alpha(float(a))
            except (LevyQueueError, TypeError, ValueError) as exc:
                raise ConfigError(str(exc)) from exc
        for T in self.horizons:
            if not (isinstance(T, (int, float)) and math.isfinite(T) and T > 0):
                raise ConfigError(f"horizon must be positive and finite, got {T!r}")
        for spec in self.initial_states:
            for alpha in self.alphas or [1.0]:
                resolve_initial(spec, model, float(alpha))
        if self.command in ("tables", "curves") and not (self.alphas or self.command == "curves"):
            raise ConfigError("empty alpha grid")
        if self.command in ("tables", "curves", "gap-scaling") and not self.horizons:
            raise ConfigError("empty horizon grid")
        if self.command in ("tables", "curves", "figure1", "gap-scaling") and not self.initial_states:
            raise ConfigError("empty initial-state grid")
        if self.command == "curves":
            _check_grid(self.mu_grid, "mu_grid", allow_zero=True)
        if self.command == "figure1":
            _check_grid(self.t_grid, "t_grid", allow_zero=False)
            if self.mu is None or not self.mu > model.lam:
                raise ConfigError("figure1 needs a stable speed 'mu' > lambda")
        if self.command == "gap-scaling":
            if self.gap_objective not in ("proxy", "exact"):
                raise ConfigError(f"unknown gap objective {self.gap_objective!r}")
            if len(self.alphas) != 1:
                raise ConfigError("gap-scaling takes exactly one alpha")
        if self.command == "tables":
            for key in ("mu_abs", "pi_abs", "ci_factor"):
                self.tolerance(key)
        if self.fixture is not None and self.command != "tables":
            raise ConfigError("fixtures apply to the tables command only")


def _check_grid(grid, name, allow_zero):
    if not isinstance(grid, dict) or set(grid) != {"start", "stop", "points"}:
        raise ConfigError(f"{name} must be {{start, stop, points}}")
    lo, hi, n = grid["start"], grid["stop"], grid["points"]
    if not (isinstance(n, int) and n >= 2):
        raise ConfigError(f"{name}.points must be an integer >= 2")
    if not (lo >= 0 if allow_zero else lo > 0) or not hi > lo:
        raise ConfigError(f"{name} needs 0 <= start < stop")


def resolve_initial(spec: dict, model: InputModel, alpha: float) -> InitialState:
    try:
        kind = spec["kind"]
        if kind == "benchmark":
            return InitialState.deterministic(float(spec["factor"]) * benchmark_congestion(model, alpha))
        if kind in ("deterministic", "exponential", "warmup"):
            return InitialState(kind, float(spec["value"]))
    except KeyError as exc:
        raise ConfigError(f"initial state {spec!r} is missing {exc}") from exc
    except (LevyQueueError, ValueError, TypeError) as exc:
        raise ConfigError(f"invalid initial state {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown initial-state kind {spec.get('kind')!r}")


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from exc
    return ExperimentConfig.from_json(text)


# --------------------------------------------------------------------------
# presets

_PARETO = make_mpareto(1.0, 3.2, 11.0 / 16.0)
MODELS = {
    "mm1": {"kind": "CompoundPoissonExp", "lambda": 1.0},
    "mpareto": _PARETO.to_dict(),
    "rbm1": {"kind": "BrownianDrift", "lambda": 1.0, "sigma2": 1.0},
    "rbm2": {"kind": "BrownianDrift", "lambda": 1.0, "sigma2": 4.0},
}
_SIM = {"replications": 200_000, "master_seed": 20240601, "bm_step": None, "ci_level": 0.95}
_TABLE_INIT = [{"kind": "deterministic", "value": 0.0}, {"kind": "benchmark", "factor": 2.0}]


def _table(n, model, pi_abs):
    return ExperimentConfig(
        command="tables",
        name=f"table{n}",
        model=MODELS[model],
        alphas=[0.1, 1.0, 2.0],
        horizons=[1.0, 2.0, 5.0, 10.0],
        initial_states=_TABLE_INIT,
        sim=dict(_SIM),
        fixture=f"table{n}",
        tolerances={"mu_abs": 5e-4 + 1e-9, "pi_abs": pi_abs, "ci_factor": 3.0},
    )


def _curves(model):
    return ExperimentConfig(
        command="curves",
        name=f"curves-{model}",
        model=MODELS[model],
        alphas=[],
        horizons=[2.0, 5.0, 10.0],
        initial_states=[{"kind": "deterministic", "value": 0.0}, {"kind": "deterministic", "value": 2.5}],
        sim=dict(_SIM, replications=50_000),
        mu_grid={"start": 0.25, "stop": 4.0, "points": 31},
    )


def _gap(name, model, replications):
    return ExperimentConfig(
        command="gap-scaling",
        name=name,
        model=MODELS[model],
        alphas=[1.0],
        horizons=[10.0, 20.0, 40.0, 80.0],
        initial_states=[{"kind": "deterministic", "value": 0.0}],
        sim=dict(_SIM, replications=replications),
        tolerances={"ratio_band": 0.3},
    )


PRESETS = {
    "table1": _table(1, "mm1", 0.03),
    "table2": _table(2, "mpareto", 0.05),
    "table3": _table(3, "rbm1", 5e-3),
    "table4": _table(4, "rbm2", 5e-3),
    "curves-mm1": _curves("mm1"),
    "curves-mpareto": _curves("mpareto"),
    "curves-rbm": _curves("rbm1"),
    "figure1": ExperimentConfig(
        command="figure1",
        name="figure1",
        model={"kind": "CompoundPoissonExp", "lambda": 10.0},
        mu=11.0,
        initial_states=[
            {"kind": "deterministic", "value": 0.0},
            {"kind": "deterministic", "value": 10.0},
            {"kind": "deterministic", "value": 20.0},
            {"kind": "exponential", "value": 15.0},
        ],
        sim=dict(_SIM, replications=20_000),
        t_grid={"start": 0.5, "stop": 50.0, "points": 100},
    ),
    "gap-mm1": _gap("gap-mm1", "mm1", 100_000),
    "gap-rbm": _gap("gap-rbm", "rbm1", 10_000),
    "validate": ExperimentConfig(
        command="validate",
        name="validate",
        model=MODELS["mm1"],
        sim=dict(_SIM, replications=100_000),
        tolerances={
            "psi_abs": 0.05,
            "moment_se": 3.0,
            "ci_factor": 3.0,
            "rbm_abs": 1e-2,
        },
    ),
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig.from_dict(PRESETS[name].to_dict())
