"""Experiment configuration: flat ``key = value`` files plus command-line overrides.

Example file::

    # rom accuracy on the quartic source
    experiment = rom-accuracy
    levels = 4..7
    ell = 10
    tol = 1e-14

Blank lines and ``#`` comments are ignored. Keys not given fall back to
the defaults of the chosen experiment.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .rom import DT_RULES, METHODS

EXPERIMENTS = ("fom-timing", "rom-accuracy", "convergence", "decay", "exactness")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    dim: int = 2
    degree: int = 1
    levels: tuple[int, int] = (4, 7)
    dt_rule: str = "h"
    method: str = "adaptive"
    ell: int = 10
    tol: float = 1e-14
    tol_svd: float = 1e-10
    tol_mode: str = "absolute"
    source: str = "quartic"
    m: int = 8
    T: float = 1.0
    out: str = "results"
    dense_cap_mb: int = 512
    eig_indices: tuple[int, ...] = (0, 1, 2, 5)
    eig_coeffs: tuple[float, ...] = (1.0, 2.0, -1.5, 0.7)
    dump_mesh: bool = False
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        lo, hi = self.levels
        if lo > hi or lo < 0:
            raise ConfigError(f"empty or negative level range {lo}..{hi}")
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if self.degree not in (1, 2):
            raise ConfigError(f"degree must be 1 or 2, got {self.degree}")
        for name in ("tol", "tol_svd"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {getattr(self, name)}")
        if not self.T > 0:
            raise ConfigError(f"T must be positive, got {self.T}")
        if self.dt_rule not in DT_RULES:
            raise ConfigError(f"dt_rule must be one of {DT_RULES}, got {self.dt_rule!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.ell < 1 or self.m < 1:
            raise ConfigError("ell and m must be positive")
        if len(self.eig_indices) != len(self.eig_coeffs):
            raise ConfigError("eig_indices and eig_coeffs must have the same length")

    @property
    def level_list(self) -> list[int]:
        return list(range(self.levels[0], self.levels[1] + 1))

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("extra")
        return d


DEFAULTS = {
    "fom-timing": {},
    "rom-accuracy": {},
    "convergence": {
        "source": "manufactured", "dt_rule": "h^(k+1)/2", "method": "isvd",
        "levels": (3, 7), "ell": 5, "tol": 1e-10,
    },
    "decay": {"levels": (6, 6), "ell": 8, "tol": 0.0},
    "exactness": {"levels": (4, 4), "tol": 0.0},
}


def parse_levels(text: str) -> tuple[int, int]:
    """``"4..7"`` -> (4, 7); a single number means a one-level range."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return int(lo), int(hi)
        return int(text), int(text)
    except ValueError:
        raise ConfigError(f"levels must look like 'a..b' or 'a', got {text!r}") from None


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


_PARSERS = {
    "experiment": str,
    "dim": int,
    "degree": int,
    "levels": parse_levels,
    "dt_rule": str,
    "method": str,
    "ell": int,
    "tol": float,
    "tol_svd": float,
    "tol_mode": str,
    "source": str,
    "m": int,
    "T": float,
    "out": str,
    "dense_cap_mb": int,
    "eig_indices": lambda s: tuple(int(v) for v in s.split(",")),
    "eig_coeffs": lambda s: tuple(float(v) for v in s.split(",")),
    "dump_mesh": _parse_bool,
}


def read_config_file(path: str | Path) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def build_config(file_values: dict[str, str] | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Merge experiment defaults, file values (strings) and typed overrides, in that order."""
    raw = dict(file_values or {})
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    experiment = overrides.get("experiment", raw.get("experiment"))
    if experiment is None:
        raise ConfigError("no experiment given")
    values = dict(DEFAULTS.get(experiment, {}))
    for key, text in raw.items():
        try:
            values[key] = _PARSERS[key](text)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key!r}: {text!r} ({exc})") from None
    values.update(overrides)
    values["experiment"] = experiment
    return ExperimentConfig(**values)
