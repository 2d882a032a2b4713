"""Experimentos: barrido de tasas, identidad p = 2 y barrido de colas.

Cada réplica usa la semilla derive_seed(base_seed, N, r), así que los
resultados no dependen del número de hilos.
"""
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import stats

from utils.concentration import (
    fit_tail_constant,
    moment_bound_curve,
    tail_curve,
    tail_dominated,
)
from utils.errors import (
    ConfigError,
    DegenerateFitError,
    DeltaNotInSpaceError,
    ReplicaError,
    SchemaVersionError,
    SobolevError,
)
from utils.kernels import NormParams, Regime, Space, phi_norm
from utils.measures import MeasureModel, derive_seed, sample
from utils.norms import QuadratureSpec, h_norm_sample, h_second_moment_exact, norm, s_n_field
from utils.time_monitor import elapsed_ms, utc_timestamp

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
REPLICA_COLUMNS = ["n", "replica", "seed", "norm_value", "wall_ms"]
# por debajo de esto (relativo a ‖Φ_ε‖) una norma se considera cero
ZERO_REL_FLOOR = 1e-6


class Thresholds(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    pass_sigma: float = Field(default=3.0, gt=0)
    quad_budget_rel: float = Field(default=2e-3, ge=0)
    slope_target: float = -0.5
    slope_tol: float = Field(default=0.05, gt=0)
    r2_min: float = Field(default=0.98, ge=0, le=1)
    tail_c_spread: float = Field(default=0.5, gt=0)
    min_replicas_stat: int = Field(default=30, ge=1)
    min_replicas_tail: int = Field(default=500, ge=1)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    schema_version: int = SCHEMA_VERSION
    experiment: Literal["rate_sweep", "identity_check", "tail_sweep"]
    model: MeasureModel
    params: NormParams
    quad: QuadratureSpec = Field(default_factory=QuadratureSpec)
    n_grid: List[int]
    replicas: int = Field(default=200, ge=1)
    base_seed: int = 20240601
    space: Space = Space.AUTO
    exact_l2: bool = True
    threads: int = Field(default=1, ge=1)
    create_dirs: bool = True
    thresholds: Thresholds = Field(default_factory=Thresholds)

    @field_validator("schema_version")
    @classmethod
    def _known_version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v} (expected {SCHEMA_VERSION})")
        return v

    @field_validator("n_grid")
    @classmethod
    def _increasing(cls, v):
        if not v or any(n < 1 for n in v):
            raise ValueError("n_grid must be a nonempty list of positive sizes")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("n_grid must be strictly increasing")
        return v


@dataclass(frozen=True)
class ReplicaRecord:
    n: int
    replica: int
    seed: int
    norm_value: float
    wall_ms: float


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    stderr: float
    r_squared: float
    ci95: tuple
    residuals: list
    points: list


@dataclass
class ExperimentResult:
    experiment: str
    config: ExperimentConfig
    records: List[ReplicaRecord]
    summary: Dict
    passed: bool
    failures: List[str] = field(default_factory=list)
    curve: pd.DataFrame = None

    def to_frame(self):
        return pd.DataFrame([asdict(r) for r in self.records], columns=REPLICA_COLUMNS)


# ---------------------------------------------------------------------------
# Ajuste log-log
# ---------------------------------------------------------------------------

def fit_log_slope(points):
    """Regresión lineal de ln y sobre ln x."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise DegenerateFitError(f"at least 3 points are needed for a slope fit, got {len(pts)}")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise DegenerateFitError("log of nonpositive value in slope fit")
    if len({x for x, _ in pts}) < len(pts):
        raise DegenerateFitError("degenerate abscissae: repeated x values in slope fit")
    lx = np.log([x for x, _ in pts])
    ly = np.log([y for _, y in pts])
    res = stats.linregress(lx, ly)
    half = stats.t.ppf(0.975, len(pts) - 2) * res.stderr
    residuals = (ly - (res.intercept + res.slope * lx)).tolist()
    return RateFit(slope=float(res.slope), intercept=float(res.intercept), stderr=float(res.stderr),
                   r_squared=float(res.rvalue ** 2), ci95=(res.slope - half, res.slope + half),
                   residuals=residuals, points=pts)


# ---------------------------------------------------------------------------
# Réplicas
# ---------------------------------------------------------------------------

def _uses_kernel_form(config):
    return config.params.p == 2 and config.exact_l2


def _replica(config, n, replica):
    seed = derive_seed(config.base_seed, n, replica)
    start = time.perf_counter()
    try:
        smp = sample(config.model, n, seed)
        if _uses_kernel_form(config):
            value = h_norm_sample(smp, config.model, config.params.alpha, config.params.eps, config.quad).value
        else:
            field_ = s_n_field(smp, config.model, config.params.eps)
            value = norm(field_, config.params, config.space, config.quad).value
    except SobolevError as err:
        raise ReplicaError(n, replica, seed, err) from err
    return ReplicaRecord(n=n, replica=replica, seed=seed, norm_value=float(value), wall_ms=elapsed_ms(start))


def run_replicas(config):
    """Todas las réplicas de todos los N, en orden (N, réplica)."""
    tasks = [(n, r) for n in config.n_grid for r in range(config.replicas)]
    logger.info("running %d replicas on %d thread(s)", len(tasks), config.threads)
    if config.threads == 1:
        return [_replica(config, n, r) for n, r in tasks]
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        return list(pool.map(lambda task: _replica(config, *task), tasks))


def _by_n(records):
    groups = {}
    for rec in records:
        groups.setdefault(rec.n, []).append(rec.norm_value)
    return {n: np.asarray(v) for n, v in groups.items()}


def _reference_norm(config):
    params = config.params
    if params.eps == 0 and params.regime() is not Regime.SUPERCRITICAL:
        raise DeltaNotInSpaceError()
    return phi_norm(params, config.space)


def _identity_rows(config, groups, phi2):
    th = config.thresholds
    rows = []
    for n, vals in groups.items():
        sq = vals ** 2
        mean = float(sq.mean())
        stderr = float(sq.std(ddof=1) / math.sqrt(len(sq))) if len(sq) > 1 else math.inf
        exact = h_second_moment_exact(config.model, config.params.alpha, config.params.eps, n)
        budget = th.quad_budget_rel * phi2 / n
        ok = abs(mean - exact) <= th.pass_sigma * stderr + budget
        rows.append({"n": n, "mean_sq": mean, "stderr": stderr, "exact": exact, "budget": budget, "ok": bool(ok)})
    return rows


# ---------------------------------------------------------------------------
# Experimentos
# ---------------------------------------------------------------------------

def _require_replicas(config, minimum):
    if config.replicas < minimum:
        raise ConfigError(f"{config.experiment} needs at least {minimum} replicas, got {config.replicas}",
                          key="replicas")


def rate_sweep(config):
    """Norma media ((E‖·‖^p)^{1/p}) por N y pendiente log-log."""
    th = config.thresholds
    _require_replicas(config, th.min_replicas_stat)
    phi = _reference_norm(config)
    records = run_replicas(config)
    groups = _by_n(records)
    p, d = config.params.p, config.params.dim

    values = {n: float(np.mean(v ** p)) ** (1.0 / p) for n, v in groups.items()}
    if all(v <= ZERO_REL_FLOOR * phi for v in values.values()):
        raise DegenerateFitError("degenerate zero values: every replica norm vanished")
    fit = fit_log_slope(sorted(values.items()))

    unit_curve = moment_bound_curve(list(values), phi, p, d)
    c_moment = float(max(v / b for v, b in zip(values.values(), unit_curve)))

    failures = []
    if abs(fit.slope - th.slope_target) > th.slope_tol:
        failures.append(f"slope={fit.slope:.4f} outside {th.slope_target}±{th.slope_tol}")
    if fit.r_squared < th.r2_min:
        failures.append(f"r_squared={fit.r_squared:.4f} < {th.r2_min}")

    summary = {
        "values": {str(n): v for n, v in values.items()},
        "slope": fit.slope,
        "intercept": fit.intercept,
        "slope_stderr": fit.stderr,
        "slope_ci95": list(fit.ci95),
        "r_squared": fit.r_squared,
        "phi_norm": phi,
        "moment_bound_c": c_moment,
    }
    if _uses_kernel_form(config):
        rows = _identity_rows(config, groups, phi ** 2)
        summary["identity"] = rows
        failures.extend(f"identity mismatch at N={r['n']}: mean={r['mean_sq']:.6g} exact={r['exact']:.6g}"
                        for r in rows if not r["ok"])

    curve = pd.DataFrame({"n": list(values), "value": list(values.values()),
                          "fitted": [math.exp(fit.intercept) * n ** fit.slope for n in values],
                          "moment_bound": unit_curve * c_moment})
    return ExperimentResult("rate_sweep", config, records, summary, not failures, failures, curve)


def identity_check(config):
    """E‖μ_N^ε - μ^ε‖²_{H^{-α}} contra (‖Φ_ε‖² - ‖μ^ε‖²)/N."""
    if config.params.p != 2:
        raise ConfigError("identity check requires p = 2", key="params.p")
    _require_replicas(config, config.thresholds.min_replicas_stat)
    exact_config = config.model_copy(update={"exact_l2": True})
    phi2 = phi_norm(config.params, Space.CAL) ** 2
    # la precondición (ε > 0 o α > d/2) se valida antes de lanzar réplicas
    h_second_moment_exact(config.model, config.params.alpha, config.params.eps, 1)
    records = run_replicas(exact_config)
    rows = _identity_rows(config, _by_n(records), phi2)
    failures = [f"identity mismatch at N={r['n']}: |{r['mean_sq']:.6g} - {r['exact']:.6g}| "
                f"> {config.thresholds.pass_sigma}·{r['stderr']:.3g} + {r['budget']:.3g}"
                for r in rows if not r["ok"]]
    summary = {"rows": rows, "phi_norm_sq": phi2}
    return ExperimentResult("identity_check", config, records, summary, not failures, failures,
                            pd.DataFrame(rows))


def tail_sweep(config):
    """Ajuste de la constante C de la cola subgaussiana por N."""
    th = config.thresholds
    _require_replicas(config, th.min_replicas_tail)
    phi = _reference_norm(config)
    p, d = config.params.p, config.params.dim
    records = run_replicas(config)
    groups = _by_n(records)

    per_n = []
    frames = []
    for n, vals in groups.items():
        fit = fit_tail_constant(vals, n, phi, p, d)
        dominated = tail_dominated(vals, n, phi, p, d, fit.c_envelope)
        per_n.append({"n": n, "c_envelope": fit.c_envelope, "c_regression": fit.c_regression,
                      "dominated": dominated, "q50": float(np.quantile(vals, 0.5)),
                      "q90": float(np.quantile(vals, 0.9))})
        frames.append(pd.DataFrame({"n": n, "lambda": fit.lambdas, "empirical_p": fit.exceedance,
                                    "bound_p": tail_curve(fit.lambdas, n, phi, p, d, fit.c_envelope),
                                    "fitted_c": fit.c_envelope}))

    c_values = np.array([row["c_envelope"] for row in per_n])
    c_median = float(np.median(c_values))
    failures = [f"tail not dominated at N={row['n']}" for row in per_n if not row["dominated"]]
    for row in per_n:
        if abs(row["c_envelope"] / c_median - 1.0) > th.tail_c_spread:
            failures.append(f"fitted C={row['c_envelope']:.4g} at N={row['n']} deviates from median {c_median:.4g}")

    ratios = [b["q50"] / a["q50"] for a, b in zip(per_n, per_n[1:])]
    summary = {"per_n": per_n, "c_median": c_median, "phi_norm": phi, "median_ratios": ratios}
    return ExperimentResult("tail_sweep", config, records, summary, not failures, failures,
                            pd.concat(frames, ignore_index=True))


EXPERIMENTS = {"rate_sweep": rate_sweep, "identity_check": identity_check, "tail_sweep": tail_sweep}


def run_experiment(config):
    return EXPERIMENTS[config.experiment](config)


# ---------------------------------------------------------------------------
# Informes
# ---------------------------------------------------------------------------

def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def report_write(result, path, create_dirs=None):
    """Escribe replicas.csv, summary.json y, si existe, curve.csv en `path`."""
    out = Path(path)
    create = result.config.create_dirs if create_dirs is None else create_dirs
    if not out.exists():
        if not create:
            raise FileNotFoundError(f"output directory does not exist: {out}")
        out.mkdir(parents=True)
    result.to_frame().to_csv(out / "replicas.csv", index=False)
    if result.curve is not None:
        result.curve.to_csv(out / "curve.csv", index=False)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "experiment": result.experiment,
        "created_at": utc_timestamp(),
        "passed": result.passed,
        "failures": result.failures,
        "config": result.config.model_dump(mode="json"),
        "summary": result.summary,
    }
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
    return payload


def report_read(path):
    """Lee summary.json (o el directorio que lo contiene) y valida la versión."""
    target = Path(path)
    if target.is_dir():
        target = target / "summary.json"
    with open(target, encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"unsupported schema_version {version}", path=str(target), key="schema_version")
    return payload
