"""Experiment configuration loading and validation."""

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import yaml

from src.models import ConfigError, LatentScheme, Model, SparsityFamily, SparsitySchedule

logger = logging.getLogger(__name__)

WORKERS_ENV = "GRAPHON_WORKERS"
HASH_LENGTH = 16

DISCRETIZATION_MODES = ("midpoint", "cell_average")
MODEL_CHOICES = ("repelling", "opposing", "both")


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Validated experiment configuration.

    alpha_n is never configured: runs use alpha_n = 1/(n eps_n) unless an
    override is set from the command line, which taints every output file.
    """
    kernel: str
    initial: str
    model: str
    n_list: List[int]
    seeds: List[int]
    T: float
    kernel_params: Dict[str, Any] = field(default_factory=dict)
    initial_params: Dict[str, Any] = field(default_factory=dict)
    latent_scheme: LatentScheme = LatentScheme.DETERMINISTIC
    sparsity: SparsitySchedule = field(default_factory=SparsitySchedule)
    h: Optional[float] = None
    ref_multiplier: int = 8
    nu: float = 0.05
    output_dir: str = "results"
    workers: int = 1
    discretization: str = "midpoint"
    cell_samples: int = 4
    power_max_iters: int = 10_000
    picard_steps: int = 64
    alpha_override: Optional[float] = None

    @property
    def models(self) -> List[Model]:
        if self.model == "both":
            return [Model.REPELLING, Model.OPPOSING]
        return [Model(self.model)]

    @property
    def M(self) -> int:
        """Reference grid resolution."""
        return self.ref_multiplier * max(self.n_list)

    def alpha(self, n: int, eps: float) -> float:
        if self.alpha_override is not None:
            return self.alpha_override
        return 1.0 / (n * eps)

    def to_dict(self) -> Dict[str, Any]:
        """Plain form with every default filled in; the hash is taken over this."""
        return {
            'kernel': {'name': self.kernel, 'params': self.kernel_params},
            'initial': {'name': self.initial, 'params': self.initial_params},
            'model': self.model,
            'n_list': list(self.n_list),
            'seeds': list(self.seeds),
            'latent_scheme': self.latent_scheme.value,
            'sparsity': {
                'family': self.sparsity.family.value,
                'c': self.sparsity.c,
                'tau': self.sparsity.tau,
                'q': self.sparsity.q,
            },
            'T': self.T,
            'h': self.h,
            'ref_multiplier': self.ref_multiplier,
            'nu': self.nu,
            'output_dir': self.output_dir,
            'workers': self.workers,
            'discretization': self.discretization,
            'cell_samples': self.cell_samples,
            'power_max_iters': self.power_max_iters,
            'picard_steps': self.picard_steps,
            'alpha_override': self.alpha_override,
        }


HASH_EXCLUDED = ("output_dir", "workers")


def config_hash(cfg: ExperimentConfig) -> str:
    """
    SHA-256 of the canonical JSON form, truncated to 16 hex digits.

    Output folder and worker count do not change results and are left out.
    """
    hashed = {key: value for key, value in cfg.to_dict().items() if key not in HASH_EXCLUDED}
    canonical = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:HASH_LENGTH]


def _require(raw: Mapping[str, Any], key: str) -> Any:
    if key not in raw:
        raise ConfigError(f"Missing required key '{key}'")
    return raw[key]


def _named(raw: Mapping[str, Any], key: str) -> tuple:
    entry = _require(raw, key)
    if isinstance(entry, str):
        return entry, {}
    if not isinstance(entry, Mapping) or 'name' not in entry:
        raise ConfigError(f"'{key}' must be a name or a mapping with 'name' and optional 'params'")
    params = entry.get('params') or {}
    if not isinstance(params, Mapping):
        raise ConfigError(f"'{key}.params' must be a mapping")
    return str(entry['name']), dict(params)


def _int_list(raw: Mapping[str, Any], key: str, lower: int) -> List[int]:
    values = _require(raw, key)
    if not isinstance(values, list) or not values:
        raise ConfigError(f"'{key}' must be a non-empty list")
    result = []
    for value in values:
        if isinstance(value, bool) or not isinstance(value, int) or value < lower:
            raise ConfigError(f"'{key}' entries must be integers >= {lower}, got {value!r}")
        result.append(value)
    return result


def _number(raw: Mapping[str, Any], key: str, default: Any = None, positive: bool = False) -> Any:
    value = raw.get(key, default)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"'{key}' must be positive, got {value!r}")
    return value


def _sparsity(raw: Mapping[str, Any]) -> SparsitySchedule:
    entry = raw.get('sparsity', {'family': 'constant', 'c': 1.0})
    if not isinstance(entry, Mapping):
        raise ConfigError("'sparsity' must be a mapping")
    try:
        family = SparsityFamily(entry.get('family', 'constant'))
    except ValueError:
        raise ConfigError(f"Unknown sparsity family '{entry.get('family')}'. Available: constant, power, polylog")
    return SparsitySchedule(
        family=family,
        c=float(_number(entry, 'c', 1.0)),
        tau=float(_number(entry, 'tau', 0.0)),
        q=float(_number(entry, 'q', 1.0)),
    )


def parse_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    """
    Validate a parsed config mapping.

    Raises:
        ConfigError: Naming the offending key
    """
    if not isinstance(raw, Mapping):
        raise ConfigError("Config must be a mapping at the top level")
    if 'alpha' in raw:
        raise ConfigError("'alpha' cannot be configured; it is derived as 1/(n eps_n)")

    kernel, kernel_params = _named(raw, 'kernel')
    initial, initial_params = _named(raw, 'initial')

    model = raw.get('model', 'repelling')
    if model not in MODEL_CHOICES:
        raise ConfigError(f"'model' must be one of {', '.join(MODEL_CHOICES)}, got {model!r}")

    seeds = _int_list(raw, 'seeds', 0)
    if any(seed >= 2 ** 64 for seed in seeds):
        raise ConfigError("'seeds' entries must fit in 64 bits")

    try:
        scheme = LatentScheme(raw.get('latent_scheme', 'deterministic'))
    except ValueError:
        raise ConfigError(f"'latent_scheme' must be deterministic or stochastic, got {raw.get('latent_scheme')!r}")

    discretization = raw.get('discretization', 'midpoint')
    if discretization not in DISCRETIZATION_MODES:
        raise ConfigError(f"'discretization' must be one of {', '.join(DISCRETIZATION_MODES)}")

    T = _number(raw, 'T')
    if T is None:
        raise ConfigError("Missing required key 'T'")
    if T < 0:
        raise ConfigError(f"'T' must be nonnegative, got {T}")

    nu = float(_number(raw, 'nu', 0.05))
    if not 0.0 < nu < 1.0:
        raise ConfigError(f"'nu' must lie in (0, 1), got {nu}")

    cfg = ExperimentConfig(
        kernel=kernel,
        initial=initial,
        model=model,
        n_list=_int_list(raw, 'n_list', 1),
        seeds=seeds,
        T=float(T),
        kernel_params=kernel_params,
        initial_params=initial_params,
        latent_scheme=scheme,
        sparsity=_sparsity(raw),
        h=_number(raw, 'h', positive=True),
        ref_multiplier=int(_number(raw, 'ref_multiplier', 8, positive=True)),
        nu=nu,
        output_dir=str(raw.get('output_dir', 'results')),
        workers=int(_number(raw, 'workers', 1, positive=True)),
        discretization=discretization,
        cell_samples=int(_number(raw, 'cell_samples', 4, positive=True)),
        power_max_iters=int(_number(raw, 'power_max_iters', 10_000, positive=True)),
        picard_steps=int(_number(raw, 'picard_steps', 64, positive=True)),
    )

    bad = [n for n in cfg.n_list if cfg.M % n != 0]
    if bad:
        raise ConfigError(f"'n_list' entries {bad} do not divide the reference resolution M={cfg.M}")
    return cfg


def apply_environment(cfg: ExperimentConfig) -> ExperimentConfig:
    """Apply GRAPHON_WORKERS if set."""
    value = os.environ.get(WORKERS_ENV)
    if not value:
        return cfg
    try:
        workers = int(value)
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {value!r}")
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV} must be a positive integer, got {value!r}")
    return replace(cfg, workers=workers)


def load_config(path: str) -> ExperimentConfig:
    """
    Load and validate a YAML experiment config.

    Args:
        path: Config file path

    Returns:
        ExperimentConfig with environment overrides applied

    Raises:
        ConfigError: If the file is missing, unreadable or invalid
    """
    file_path = Path(path)
    if not file_path.is_file():
        raise ConfigError(f"Config file not found: {file_path}")

    try:
        raw = yaml.safe_load(file_path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"Config file {file_path} is not valid YAML: {str(e)}")

    cfg = apply_environment(parse_config(raw or {}))
    logger.info("loaded config %s (hash %s)", file_path, config_hash(cfg))
    return cfg


def with_overrides(
    cfg: ExperimentConfig,
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
    alpha_override: Optional[float] = None
) -> ExperimentConfig:
    """Apply command-line overrides."""
    changes: Dict[str, Any] = {}
    if seed is not None:
        if not 0 <= seed < 2 ** 64:
            raise ConfigError(f"Seed must be a 64-bit unsigned integer, got {seed}")
        changes['seeds'] = [seed]
    if output_dir is not None:
        changes['output_dir'] = output_dir
    if alpha_override is not None:
        if alpha_override <= 0:
            raise ConfigError(f"Alpha override must be positive, got {alpha_override}")
        logger.warning("alpha override %g replaces the derived alpha_n = 1/(n eps_n)", alpha_override)
        changes['alpha_override'] = float(alpha_override)
    return replace(cfg, **changes) if changes else cfg
