"""Experiment configuration: flat ``key = value`` files overridden by CLI flags."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from ..errors import ConfigError
from ..schwarz import default_tau

__all__ = ["ExperimentConfig", "parse_config_file", "resolve_config"]

log = logging.getLogger(__name__)

PROBLEMS = ("monomial", "pb", "l1")


@dataclass
class ExperimentConfig:
    problem: str = "monomial"
    alpha: float = 1.0
    m: int | None = None
    fine: int = 32
    coarse: int = 4
    layers: int = 2
    levels: int = 1
    tau: float | None = None
    iters: int = 30
    tol: float = 1e-12
    out: str = "out"
    seed: int = 0
    large: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {', '.join(PROBLEMS)}, got {self.problem!r}")
        if self.problem == "monomial":
            if self.m is None:
                raise ConfigError("--m is required for the monomial problem")
            if self.m < 2:
                raise ConfigError("m must be at least 2")
            if self.alpha < 0:
                raise ConfigError("alpha must be nonnegative for the monomial problem")
        elif self.alpha <= 0:
            raise ConfigError(f"alpha must be positive for the {self.problem} problem")
        if self.levels not in (1, 2):
            raise ConfigError("levels must be 1 or 2")
        if self.fine < 2 or self.coarse < 1:
            raise ConfigError("mesh sizes must be positive (fine >= 2)")
        if self.fine % self.coarse:
            raise ConfigError(f"fine={self.fine} is not a multiple of coarse={self.coarse}")
        if self.levels == 2 and self.coarse < 2:
            raise ConfigError("the two-level method needs coarse >= 2")
        ratio = self.fine // self.coarse
        if self.coarse > 1 and not 1 <= self.layers < ratio:
            raise ConfigError(f"layers must be in [1, {ratio - 1}] for fine/coarse = {ratio}")
        if self.tau is None:
            self.tau = default_tau(self.levels)
        if not 0 < self.tau <= 1:
            raise ConfigError("tau must lie in (0, 1]")
        if self.iters < 1:
            raise ConfigError("iters must be positive")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")

    def as_dict(self):
        return asdict(self)

    def describe(self) -> str:
        return " ".join(f"{k}={v}" for k, v in self.as_dict().items())


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _convert(key, raw: str):
    kind = _TYPES[key]
    try:
        if key in ("alpha", "tol", "tau"):
            return float(raw)
        if key in ("m", "fine", "coarse", "layers", "levels", "iters", "seed"):
            return int(raw)
        if key == "large":
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
    except ValueError:
        raise ConfigError(f"malformed value for {key}: {raw!r} (expected {kind})") from None
    return raw.strip()


def parse_config_file(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    return values


def resolve_config(flags: dict, config_file=None) -> ExperimentConfig:
    """Merge file values with explicitly given flags (flags win)."""
    values = parse_config_file(config_file) if config_file else {}
    for key, val in flags.items():
        if key not in _TYPES:
            raise ConfigError(f"unknown option {key!r}")
        if val is not None:
            values[key] = val
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    log.info("resolved config: %s", cfg.describe())
    return cfg
