"""Experiment configuration: TOML file, then CLI overrides, then defaults."""

from __future__ import annotations

import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..ensemble import ModelParams
from ..errors import ConfigError, DomainError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("staircase", "density", "bulk", "edge", "ldp", "minloss")
SEED_ENV = "LANDSCAPE_SEED"

# per-experiment defaults; grid meaning differs by experiment (see GRID_MEANING)
DEFAULTS = {
    "staircase": dict(N=5, M=8, sigma2=0.1, samples=2_000, grid="1e-3:1e2:41:log"),
    "density": dict(N=20, M=30, sigma2=0.25, samples=10_000, grid=[0.005, 0.25, 0.70], bins=60),
    "bulk": dict(N=400, M=900, sigma2=0.0, samples=200, grid=[0.0, 0.5, 1.0, 2.0, 5.0, 50.0]),
    "edge": dict(N=300, M=675, sigma2=0.0, samples=1_000, grid=[0.5, 1.0, 2.0, 4.0, 6.0, 8.0]),
    "ldp": dict(N=100, M=200, sigma2=1.0, samples=100_000),
    "minloss": dict(N=400, M=800, sigma2=1.0, samples=200),
}

GRID_MEANING = {
    "staircase": "sigma",
    "density": "sigma2",
    "bulk": "gamma",
    "edge": "omega",
    "ldp": "unused",
    "minloss": "sigma2",
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: ModelParams
    samples: int
    seed: int
    grid: tuple | None = None
    bins: int = 60
    output_dir: Path = Path("out")
    workers: int = 1
    rho_samples: int = 4_000
    emit_gnuplot: bool = False
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if self.samples < 1:
            raise ConfigError("samples must be at least 1")
        if self.bins < 10:
            raise ConfigError("bins must be at least 10")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.rho_samples < 1:
            raise ConfigError("rho_samples must be at least 1")
        if self.grid is not None:
            g = np.asarray(self.grid, dtype=float)
            if g.ndim != 1 or g.size == 0 or not np.all(np.isfinite(g)):
                raise ConfigError("grid must be a nonempty list of finite numbers")
        if self.experiment in ("staircase", "minloss", "ldp") and self.grid is None and self.params.sigma2 <= 0:
            raise ConfigError(f"{self.experiment} needs sigma2 > 0")

    def grid_array(self) -> np.ndarray:
        return np.asarray(self.grid if self.grid is not None else [], dtype=float)

    def as_dict(self) -> dict:
        """Everything that determines the output; workers and output_dir excluded."""
        return {
            "experiment": self.experiment,
            "params": self.params.as_dict(),
            "samples": self.samples,
            "seed": self.seed,
            "grid": None if self.grid is None else [float(v) for v in self.grid],
            "bins": self.bins,
            "rho_samples": self.rho_samples,
            "extra": dict(sorted(self.extra.items())),
        }

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


def parse_grid(spec) -> tuple:
    """``a:b:steps`` (linear) or ``a:b:steps:log`` (geometric), or a list of numbers."""
    if spec is None:
        return None
    if isinstance(spec, (list, tuple)):
        try:
            return tuple(float(v) for v in spec)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad grid list {spec!r}") from exc
    parts = str(spec).split(":")
    if len(parts) == 1:
        try:
            return tuple(float(v) for v in parts[0].split(","))
        except ValueError as exc:
            raise ConfigError(f"bad grid {spec!r}") from exc
    if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] not in ("log", "lin")):
        raise ConfigError(f"grid must look like a:b:steps[:log], got {spec!r}")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"bad grid {spec!r}") from exc
    if n < 1:
        raise ConfigError("grid needs at least one step")
    if len(parts) == 4 and parts[3] == "log":
        if a <= 0 or b <= 0:
            raise ConfigError("log grid needs positive ends")
        return tuple(float(v) for v in np.geomspace(a, b, n))
    return tuple(float(v) for v in np.linspace(a, b, n))


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    # accept either flat keys or an [experiment] table
    if "experiment" in data and isinstance(data["experiment"], dict):
        flat = dict(data["experiment"])
        flat.update({k: v for k, v in data.items() if k != "experiment"})
        return flat
    return data


_KNOWN = {"experiment", "name", "N", "M", "sigma2", "samples", "seed", "grid", "bins", "output_dir",
          "workers", "rho_samples", "emit_gnuplot", "extra"}


def build_config(experiment: str | None = None, file_values: dict | None = None, **overrides) -> ExperimentConfig:
    """Merge defaults < TOML values < explicit overrides (``None`` means unset)."""
    values = dict(file_values or {})
    unknown = set(values) - _KNOWN
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    exp = experiment or values.get("experiment") or values.get("name")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}")
    merged = dict(DEFAULTS[exp])
    merged.update({k: v for k, v in values.items() if k not in ("experiment", "name")})
    merged.update({k: v for k, v in overrides.items() if v is not None})

    seed = merged.get("seed")
    if seed is None:
        env = os.environ.get(SEED_ENV)
        if env is not None:
            try:
                seed = int(env)
            except ValueError as exc:
                raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from exc
        else:
            seed = 0
    try:
        seed = int(seed)
        if seed < 0:
            raise ValueError
        params = ModelParams(int(merged["N"]), int(merged["M"]), float(merged["sigma2"]))
        samples = int(merged["samples"])
        workers = int(merged.get("workers", 1))
        bins = int(merged.get("bins", 60))
        rho_samples = int(merged.get("rho_samples", 4_000))
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    if not math.isfinite(params.sigma2):
        raise ConfigError("sigma2 must be finite")
    return ExperimentConfig(
        experiment=exp,
        params=params,
        samples=samples,
        seed=seed,
        grid=parse_grid(merged.get("grid")),
        bins=bins,
        output_dir=Path(merged.get("output_dir", "out")),
        workers=workers,
        rho_samples=rho_samples,
        emit_gnuplot=bool(merged.get("emit_gnuplot", False)),
        extra=dict(merged.get("extra", {})),
    )
