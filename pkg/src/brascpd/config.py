"""Flat ``key = value`` experiment configuration.

Lines are ``key = value``; ``#`` starts a comment. Regularizers are given as
``reg.kind`` / ``reg.lambda`` / ``reg.rho`` for every mode, with per-mode
overrides ``reg.<n>.kind`` etc. (n is 1-based).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .data import DEFAULT_MEMORY_LIMIT, SyntheticSpec
from .errors import ConfigError
from .prox import Regularizer
from .sampling import BatchSchedule
from .solvers import SolverConfig, StepSchedule, StoppingRule

_INT = int
_FLOAT = float


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.replace("x", ",").split(",") if x.strip())


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {options}, got {text!r}")
        return text
    return parse


FIELDS = {
    "algorithm": _choice("adacpd", "brascpd"),
    "rank": _INT,
    "batch": _INT,
    "batch_schedule": _choice("fixed", "growing"),
    "batch_growth": _FLOAT,
    "alpha": _FLOAT,
    "beta": _FLOAT,
    "eta": _FLOAT,
    "b": _FLOAT,
    "epsilon": _FLOAT,
    "ada_history": _choice("inclusive", "exclusive"),
    "safeguard_mu": _FLOAT,
    "mode_weights": _floats,
    "seed": _INT,
    "max_iterations": _INT,
    "max_mttkrp": _FLOAT,
    "max_wall_seconds": _FLOAT,
    "target_cost": _FLOAT,
    "trace_every": _FLOAT,
    "wall_clock": _bool,
    "trials": _INT,
    "parallel": _INT,
    "plot": _bool,
    "source": _choice("synthetic", "file"),
    "shape": _ints,
    "data_rank": _INT,
    "snr_db": _FLOAT,
    "factor_distribution": _choice("uniform", "gaussian"),
    "truth_column_sum": _FLOAT,
    "memory_limit": _INT,
    "tensor_path": str,
    "truth_path": str,
    "init_path": str,
}

_REG_FIELDS = {"kind": str, "lambda": _FLOAT, "rho": _FLOAT}

# execution settings that cannot change results; left out of file headers
RUNTIME_KEYS = frozenset({"parallel", "plot"})

DEFAULTS = {
    "algorithm": "adacpd",
    "rank": 10,
    "batch": 20,
    "batch_schedule": "fixed",
    "batch_growth": 0.1,
    "alpha": 0.1,
    "beta": 1e-6,
    "eta": 1.0,
    "b": 1e-6,
    "epsilon": 0.0,
    "ada_history": "inclusive",
    "safeguard_mu": 0.0,
    "seed": 0,
    "trace_every": 1.0,
    "wall_clock": False,
    "trials": 1,
    "parallel": 1,
    "plot": True,
    "source": "synthetic",
    "factor_distribution": "uniform",
    "memory_limit": DEFAULT_MEMORY_LIMIT,
}


@dataclass
class ExperimentConfig:
    """Parsed experiment: instance source, solver settings, stopping rule, trials."""

    values: dict
    regs_spec: dict = field(default_factory=dict)
    output: Optional[Path] = None

    def get(self, key, default=None):
        return self.values.get(key, DEFAULTS.get(key, default))

    @property
    def trials(self) -> int:
        return self.get("trials")

    @property
    def seed(self) -> int:
        return self.get("seed")

    def override(self, **kw) -> "ExperimentConfig":
        vals = dict(self.values)
        for k, v in kw.items():
            if v is not None:
                vals[k] = v
        cfg = ExperimentConfig(vals, dict(self.regs_spec), self.output)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.get("parallel") < 1:
            raise ConfigError("parallel must be >= 1")
        if self.get("source") == "synthetic" and "shape" not in self.values:
            raise ConfigError("synthetic source needs 'shape'")
        if self.get("source") == "file" and "tensor_path" not in self.values:
            raise ConfigError("file source needs 'tensor_path'")
        if "shape" in self.values and len(self.values["shape"]) < 3:
            raise ConfigError("shape needs at least three modes")
        try:
            self.stopping()
            self.solver_config(0)
            self.regularizers(3 if "shape" not in self.values else len(self.values["shape"]))
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def stopping(self) -> StoppingRule:
        return StoppingRule(
            max_iterations=self.get("max_iterations"),
            max_mttkrp=self.get("max_mttkrp"),
            max_wall_seconds=self.get("max_wall_seconds"),
            target_cost=self.get("target_cost"),
        )

    def step_schedule(self) -> StepSchedule:
        if self.get("algorithm") == "adacpd":
            return StepSchedule(
                kind="adagrad", eta=self.get("eta"), b=self.get("b"), epsilon=self.get("epsilon"),
                include_current=self.get("ada_history") == "inclusive",
            )
        return StepSchedule(kind="power_decay", alpha=self.get("alpha"), beta=self.get("beta"))

    def batch_schedule(self) -> BatchSchedule:
        return BatchSchedule(self.get("batch_schedule"), self.get("batch"), self.get("batch_growth"))

    def solver_config(self, seed) -> SolverConfig:
        return SolverConfig(
            algorithm=self.get("algorithm"),
            rank=self.get("rank"),
            batch=self.batch_schedule(),
            schedule=self.step_schedule(),
            seed=seed,
            mode_weights=self.get("mode_weights"),
            safeguard_mu=self.get("safeguard_mu"),
            trace_every=self.get("trace_every"),
        )

    def regularizers(self, ndim: int) -> list:
        base = self.regs_spec.get(0, {})
        out = []
        for n in range(1, ndim + 1):
            spec = {**base, **self.regs_spec.get(n, {})}
            out.append(Regularizer(spec.get("kind", "none"), spec.get("lambda", 0.0), spec.get("rho", 1.0)))
        extra = [n for n in self.regs_spec if n > ndim]
        if extra:
            raise ConfigError(f"regularizer given for mode {extra[0]} but the tensor has {ndim} modes")
        return out

    def synthetic_spec(self, seed) -> SyntheticSpec:
        return SyntheticSpec(
            shape=tuple(self.get("shape")),
            rank=self.get("data_rank", self.get("rank")),
            snr_db=self.get("snr_db"),
            seed=seed,
            distribution=self.get("factor_distribution"),
            column_sum=self.get("truth_column_sum"),
            memory_limit=self.get("memory_limit"),
        )

    def echo_lines(self) -> list:
        """Normalized ``key = value`` lines, sorted, for file headers."""
        lines = []
        for k in sorted((set(self.values) | set(DEFAULTS)) - RUNTIME_KEYS):
            v = self.get(k)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        for n in sorted(self.regs_spec):
            for k, v in sorted(self.regs_spec[n].items()):
                prefix = "reg" if n == 0 else f"reg.{n}"
                lines.append(f"{prefix}.{k} = {v!r}" if isinstance(v, float) else f"{prefix}.{k} = {v}")
        return lines


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict = {}
    regs: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        where = f"{source}:{lineno}: field {key!r}"
        if key.startswith("reg."):
            parts = key.split(".")
            if len(parts) == 2:
                mode, name = 0, parts[1]
            elif len(parts) == 3 and parts[1].isdigit() and int(parts[1]) >= 1:
                mode, name = int(parts[1]), parts[2]
            else:
                raise ConfigError(f"{where}: expected reg.<field> or reg.<mode>.<field>")
            if name not in _REG_FIELDS:
                raise ConfigError(f"{where}: unknown regularizer field {name!r}")
            try:
                regs.setdefault(mode, {})[name] = _REG_FIELDS[name](val)
            except ValueError as exc:
                raise ConfigError(f"{where}: {exc}") from exc
            continue
        if key not in FIELDS:
            raise ConfigError(f"{where}: unknown key")
        try:
            values[key] = FIELDS[key](val)
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    cfg = ExperimentConfig(values, regs)
    try:
        cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))
