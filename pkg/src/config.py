"""
Experiment configuration: one JSON document per experiment.
"""
import json
import logging
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from . import bounds
from .cascade import THETA_RESOLUTION
from .laws import Law, StreamKey
from .martingale_lab import SIDES, THEOREMS, IncrementSource, source_from_dict
from .polymer import PolymerConfig
from .utils import ConfigError

logger = logging.getLogger(__name__)

KINDS = ("bounds_eval", "martingale_verify", "polymer_energy", "polymer_concentration", "cascade_compare")
DEFAULT_SEED = 20240101
SEED_ENV_VAR = "POLYMER_BOUNDS_SEED"
CURVES = ("bernstein", "polymer_q")

REQUIRED = {
    "bounds_eval": ("theorem", "grid"),
    "martingale_verify": ("law", "theorem", "grid", "replicates"),
    "polymer_energy": ("law", "beta", "replicates"),
    "polymer_concentration": ("law", "beta", "n", "grid", "replicates"),
    "cascade_compare": ("law", "beta", "n", "m_list", "replicates"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment definition; fields unused by a kind stay None."""
    kind: str
    experiment_id: str = ""
    seed: Optional[int] = None
    z_threshold: float = 3.0
    replicates: Optional[int] = None
    law: Optional[Dict[str, Any]] = None
    d: int = 1
    n: Optional[int] = None
    n_list: Optional[List[int]] = None
    beta: Optional[float] = None
    grid: Optional[List[float]] = None
    theorem: Optional[str] = None
    params: Dict[str, float] = field(default_factory=dict)
    sides: str = "upper"
    curve: str = "bernstein"
    m_list: Optional[List[int]] = None
    theta_resolution: float = THETA_RESOLUTION
    output_prefix: Optional[str] = None

    def __post_init__(self):
        if not self.experiment_id:
            object.__setattr__(self, "experiment_id", self.kind)
        _validate_config(self)

    @property
    def horizons(self) -> List[int]:
        """n_list when given, else [n]."""
        if self.n_list:
            return sorted(self.n_list)
        return [self.n] if self.n is not None else []

    @property
    def prefix(self) -> str:
        return self.output_prefix or self.experiment_id

    def increment_source(self) -> IncrementSource:
        return _build_law(self.law, allow_arch=True)

    def environment_law(self) -> Law:
        return _build_law(self.law, allow_arch=False)

    def polymer_config(self, seed: int, n: Optional[int] = None) -> PolymerConfig:
        horizon = n if n is not None else (self.n or max(self.horizons))
        key = StreamKey(seed).child(self.experiment_id)
        return PolymerConfig(self.d, horizon, self.beta, self.environment_law(), key)

    def to_dict(self) -> Dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if getattr(self, f.name) is not None}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        """
        Build a config from a parsed JSON object.

        Raises:
            ConfigError: On unknown keys, wrong types or invalid values; the message names the field.
        """
        if not isinstance(data, dict):
            raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
        allowed = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigError(f"unknown config field(s): {unknown}")
        if "kind" not in data:
            raise ConfigError("missing required field 'kind'")
        return cls(**data)


def _build_law(record: Optional[Dict[str, Any]], allow_arch: bool) -> Union[IncrementSource, Law]:
    if record is None:
        raise ConfigError("field 'law': missing")
    if not allow_arch and isinstance(record, dict) and record.get("law") == "arch":
        raise ConfigError("field 'law': the arch process is not a valid polymer environment")
    try:
        return source_from_dict(record)
    except ConfigError as e:
        raise ConfigError(f"field 'law': {e}")
    except (ValueError, TypeError) as e:
        raise ConfigError(f"field 'law': invalid parameters: {e}")


def _check_type(name: str, value: Any, kind: Union[type, Tuple[type, ...]]) -> None:
    if isinstance(value, bool) and bool not in (kind if isinstance(kind, tuple) else (kind,)):
        raise ConfigError(f"field '{name}': expected {kind}, got bool")
    if not isinstance(value, kind):
        raise ConfigError(f"field '{name}': expected {getattr(kind, '__name__', kind)}, got {value!r}")


def _check_int_list(name: str, values: Any, minimum: int = 1) -> None:
    _check_type(name, values, list)
    if not values:
        raise ConfigError(f"field '{name}': must not be empty")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
            raise ConfigError(f"field '{name}': entries must be integers >= {minimum}, got {v!r}")


def _validate_config(cfg: ExperimentConfig) -> None:
    if cfg.kind not in KINDS:
        raise ConfigError(f"field 'kind': unknown kind '{cfg.kind}', expected one of {KINDS}")
    for name in REQUIRED[cfg.kind]:
        if getattr(cfg, name) is None:
            raise ConfigError(f"field '{name}': required for kind '{cfg.kind}'")
    _check_type("experiment_id", cfg.experiment_id, str)
    if cfg.seed is not None:
        _check_type("seed", cfg.seed, int)
        if not 0 <= cfg.seed < 2 ** 64:
            raise ConfigError(f"field 'seed': must lie in [0, 2^64), got {cfg.seed}")
    _check_type("z_threshold", cfg.z_threshold, (int, float))
    if cfg.z_threshold <= 0:
        raise ConfigError(f"field 'z_threshold': must be > 0, got {cfg.z_threshold}")
    if cfg.replicates is not None:
        _check_type("replicates", cfg.replicates, int)
        if cfg.replicates < 100:
            raise ConfigError(f"field 'replicates': must be >= 100, got {cfg.replicates}")
    _check_type("d", cfg.d, int)
    if cfg.d < 1:
        raise ConfigError(f"field 'd': must be >= 1, got {cfg.d}")
    if cfg.n is not None:
        _check_type("n", cfg.n, int)
        if cfg.n < 1:
            raise ConfigError(f"field 'n': must be >= 1, got {cfg.n}")
    if cfg.n_list is not None:
        _check_int_list("n_list", cfg.n_list)
    if cfg.kind in ("martingale_verify", "polymer_energy") and not cfg.horizons:
        raise ConfigError(f"field 'n': 'n' or 'n_list' required for kind '{cfg.kind}'")
    if cfg.beta is not None:
        _check_type("beta", cfg.beta, (int, float))
        if cfg.beta < 0:
            raise ConfigError(f"field 'beta': must be >= 0, got {cfg.beta}")
    if cfg.grid is not None:
        _check_type("grid", cfg.grid, list)
        if not cfg.grid or any(isinstance(x, bool) or not isinstance(x, (int, float)) or x <= 0
                               for x in cfg.grid):
            raise ConfigError(f"field 'grid': must be a non-empty list of positive numbers, got {cfg.grid}")
        if any(b <= a for a, b in zip(cfg.grid, cfg.grid[1:])):
            raise ConfigError(f"field 'grid': must be strictly increasing, got {cfg.grid}")
    _check_type("params", cfg.params, dict)
    if cfg.kind == "bounds_eval" and cfg.theorem not in bounds.BOUND_EVALUATORS:
        raise ConfigError(f"field 'theorem': unknown bound '{cfg.theorem}', "
                          f"expected one of {sorted(bounds.BOUND_EVALUATORS)}")
    if cfg.kind == "martingale_verify" and cfg.theorem not in THEOREMS:
        raise ConfigError(f"field 'theorem': unknown theorem '{cfg.theorem}', expected one of {THEOREMS}")
    if cfg.sides not in SIDES:
        raise ConfigError(f"field 'sides': expected one of {SIDES}, got {cfg.sides!r}")
    if cfg.curve not in CURVES:
        raise ConfigError(f"field 'curve': expected one of {CURVES}, got {cfg.curve!r}")
    if cfg.m_list is not None:
        _check_int_list("m_list", cfg.m_list)
    _check_type("theta_resolution", cfg.theta_resolution, (int, float))
    if cfg.theta_resolution <= 0:
        raise ConfigError(f"field 'theta_resolution': must be > 0, got {cfg.theta_resolution}")
    if cfg.law is not None:
        _build_law(cfg.law, allow_arch=cfg.kind == "martingale_verify")


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Load and validate an experiment config file.

    Args:
        path: Path to the JSON document.

    Returns:
        ExperimentConfig: Validated config.

    Raises:
        ConfigError: With the JSON line/column or the offending field in the message.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Error loading config: {e}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Error loading config: {path}: line {e.lineno} column {e.colno}: {e.msg}")
    try:
        return ExperimentConfig.from_dict(data)
    except ConfigError as e:
        raise ConfigError(f"Error loading config: {path}: {e}")
    except TypeError as e:
        raise ConfigError(f"Error loading config: {path}: {e}")


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def resolve_seed(cfg: Optional[ExperimentConfig], cli_seed: Optional[int] = None) -> Tuple[int, str]:
    """
    Effective master seed and where it came from.

    Precedence: POLYMER_BOUNDS_SEED > --seed > config seed > default.

    Returns:
        tuple: (seed, source) with source in {'env', 'flag', 'config', 'default'}.
    """
    env_value = os.getenv(SEED_ENV_VAR)
    if env_value:
        try:
            seed = int(env_value)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env_value!r}")
        if not 0 <= seed < 2 ** 64:
            raise ConfigError(f"{SEED_ENV_VAR} must lie in [0, 2^64), got {seed}")
        return seed, "env"
    if cli_seed is not None:
        if not 0 <= cli_seed < 2 ** 64:
            raise ConfigError(f"--seed must lie in [0, 2^64), got {cli_seed}")
        return cli_seed, "flag"
    if cfg is not None and cfg.seed is not None:
        return cfg.seed, "config"
    return DEFAULT_SEED, "default"


def describe_config(cfg: ExperimentConfig) -> Dict[str, Any]:
    """
    Summary fields of a config for the run report.

    Args:
        cfg (ExperimentConfig): Config.

    Returns:
        dict: kind, experiment id, law label, horizons and replicate count.
    """
    law_label = None
    if cfg.law is not None:
        law_label = _build_law(cfg.law, allow_arch=True).label()
    return {
        "kind": cfg.kind,
        "experiment_id": cfg.experiment_id,
        "law": law_label,
        "horizons": cfg.horizons,
        "replicates": cfg.replicates,
        "z_threshold": cfg.z_threshold,
    }
