"""Configuración de trabajos: esquemas, valores por defecto y overrides `--set`."""
import copy
import json
import logging
import os
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from utils.errors import ConfigError, SchemaVersionError
from utils.experiments import SCHEMA_VERSION, ExperimentConfig
from utils.kernels import NormParams, Space
from utils.measures import MeasureModel
from utils.norms import MonteCarloRule, QuadratureSpec

logger = logging.getLogger(__name__)

THREADS_ENV = "SOBEMP_THREADS"


class _Job(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    schema_version: int = SCHEMA_VERSION

    @field_validator("schema_version")
    @classmethod
    def _known_version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v} (expected {SCHEMA_VERSION})")
        return v


class NormJob(_Job):
    model: MeasureModel
    params: NormParams
    quad: QuadratureSpec = Field(default_factory=QuadratureSpec)
    seed: int = 0
    n: int = Field(default=256, ge=1, alias="N")
    space: Space = Space.AUTO


class GaussianNormJob(_Job):
    params: NormParams
    eps_grid: List[float] = Field(default_factory=lambda: [10.0 ** -k for k in range(7)])

    @field_validator("eps_grid")
    @classmethod
    def _positive(cls, v):
        if not v or any(e <= 0 for e in v):
            raise ValueError("eps_grid must be a nonempty list of positive values")
        return v


class B0Job(_Job):
    params: NormParams


class SigmaCheckJob(_Job):
    model: MeasureModel
    params: NormParams
    quad: QuadratureSpec = Field(default_factory=QuadratureSpec)
    alpha_grid: Optional[List[float]] = None
    p_grid: Optional[List[float]] = None
    eps_grid: Optional[List[float]] = None
    radius_points: int = Field(default=400, ge=10)


_NORMAL_1D = {"type": "gaussian_mixture", "dim": 1, "weights": [1.0], "means": [[0.0]], "variances": [1.0]}

DEFAULTS = {
    "norm": {"model": _NORMAL_1D, "params": {"alpha": 1.5, "p": 2.0, "dim": 1, "eps": 0.0}, "N": 256},
    "gaussian-norm": {"params": {"alpha": 1.0, "p": 2.0, "dim": 1}},
    "b0": {"params": {"alpha": 1.0, "p": 2.0, "dim": 1, "eps": 1e-3}},
    "sigma-check": {"model": _NORMAL_1D, "params": {"alpha": 1.0, "p": 2.0, "dim": 1, "eps": 0.1}},
    "rate-sweep": {"experiment": "rate_sweep", "model": _NORMAL_1D,
                   "params": {"alpha": 1.5, "p": 2.0, "dim": 1, "eps": 0.0},
                   "n_grid": [32, 64, 128, 256, 512, 1024, 2048]},
    "identity-check": {"experiment": "identity_check", "model": _NORMAL_1D,
                       "params": {"alpha": 1.0, "p": 2.0, "dim": 1, "eps": 0.0},
                       "n_grid": [50], "replicas": 2000},
    "tail-sweep": {"experiment": "tail_sweep", "model": _NORMAL_1D,
                   "params": {"alpha": 1.5, "p": 2.0, "dim": 1, "eps": 0.0},
                   "n_grid": [32, 128, 512], "replicas": 1000},
}

JOB_SCHEMAS = {
    "norm": NormJob,
    "gaussian-norm": GaussianNormJob,
    "b0": B0Job,
    "sigma-check": SigmaCheckJob,
    "rate-sweep": ExperimentConfig,
    "identity-check": ExperimentConfig,
    "tail-sweep": ExperimentConfig,
}


def parse_value(text):
    """Valor de un override: JSON si se puede, texto en otro caso."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data, overrides, path=None):
    """Aplica `clave.anidada=valor` sobre un dict; las claves deben existir."""
    data = copy.deepcopy(data)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}", path=path, key=item)
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError("unknown configuration key", path=path, key=key)
            node = node[part]
        if not isinstance(node, dict) or parts[-1] not in node:
            raise ConfigError("unknown configuration key", path=path, key=key)
        node[parts[-1]] = parse_value(raw)
    return data


def _validate(schema, data, path):
    try:
        return schema.model_validate(data)
    except ValidationError as err:
        first = err.errors()[0]
        key = ".".join(str(p) for p in first["loc"])
        if key == "schema_version":
            raise SchemaVersionError(first["msg"], path=path, key=key) from err
        raise ConfigError(f"invalid configuration: {first['msg']}", path=path, key=key) from err


def read_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}", path=str(path)) from err
    # un summary.json previo reproduce la ejecución con su bloque `config`
    if isinstance(raw, dict) and "config" in raw and "summary" in raw:
        logger.info("using the config block of a summary file")
        raw = raw["config"]
    return raw


def load_job(kind, path=None, overrides=None, seed=None, threads=None):
    """Carga, valida y completa la configuración de un subcomando."""
    schema = JOB_SCHEMAS[kind]
    raw = read_config_file(path) if path else copy.deepcopy(DEFAULTS[kind])
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", path=path)
    if schema is ExperimentConfig:
        expected = kind.replace("-", "_")
        raw.setdefault("experiment", expected)
        if raw["experiment"] != expected:
            raise ConfigError(f"config is for {raw['experiment']!r}, not {expected!r}", path=path, key="experiment")

    job = _validate(schema, raw, path)
    if overrides:
        data = apply_overrides(job.model_dump(mode="json", by_alias=True), overrides, path)
        job = _validate(schema, data, path)

    update = {}
    if seed is not None:
        if schema is ExperimentConfig:
            update["base_seed"] = seed
        elif hasattr(job, "seed"):
            update["seed"] = seed
        quad = getattr(job, "quad", None)
        if quad is not None and isinstance(quad.x_rule, MonteCarloRule):
            update["quad"] = quad.model_copy(update={"x_rule": quad.x_rule.model_copy(update={"seed": seed})})
    if schema is ExperimentConfig:
        update["threads"] = resolve_threads(threads, default=job.threads)
    if update:
        job = _validate(schema, {**job.model_dump(mode="json", by_alias=True),
                                 **{k: (v.model_dump(mode="json") if isinstance(v, BaseModel) else v)
                                    for k, v in update.items()}}, path)
    return job


def resolve_threads(cli_value=None, default=1):
    """--threads, luego SOBEMP_THREADS, luego el valor del archivo (o 1)."""
    if cli_value is not None:
        value, source = cli_value, "--threads"
    else:
        env = os.environ.get(THREADS_ENV)
        if env is None:
            return default
        value, source = env, THREADS_ENV
    try:
        value = int(value)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"threads must be an integer, got {value!r}", key=source) from err
    if value < 1:
        raise ConfigError(f"threads must be >= 1, got {value}", key=source)
    return value
