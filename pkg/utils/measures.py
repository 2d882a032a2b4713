"""Modelos de medida: muestreo, densidad suavizada por el calor y función maximal.

Tres variantes analíticas (mezcla gaussiana, caja uniforme, átomos) con
esquema JSON validado por pydantic; el campo `type` discrimina la variante.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Annotated, List, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, field_validator, model_validator
from scipy import integrate, optimize, special, stats

from utils.errors import DensityUndefinedError, DomainError
from utils.kernels import heat_kernel_sum, unit_ball_volume

logger = logging.getLogger(__name__)

WEIGHT_TOL = 1e-12
SEED_MASK = (1 << 64) - 1
BALL_TOL = 1e-10
RADIUS_GRID = np.logspace(-6, 3, 400)


def make_rng(seed):
    """Generador basado en contador (Philox); misma semilla, misma secuencia."""
    return np.random.Generator(np.random.Philox(int(seed) & SEED_MASK))


def derive_seed(base_seed, n, replica):
    """Semilla por réplica: base ⊕ (N << 32) ⊕ índice de réplica."""
    return (int(base_seed) ^ (int(n) << 32) ^ int(replica)) & SEED_MASK


def _as_point_list(v):
    # en d = 1 se aceptan escalares donde se espera un punto
    if isinstance(v, (int, float)):
        return [float(v)]
    return v


class _ModelBase(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dim: int = Field(gt=0)


def _check_weights(weights):
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        raise ValueError("weights must not be empty")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > WEIGHT_TOL * max(1, w.size):
        raise ValueError(f"weights must sum to 1 (sum={w.sum()!r})")


class GaussianMixture(_ModelBase):
    type: Literal["gaussian_mixture"] = "gaussian_mixture"
    weights: List[float]
    means: List[List[float]]
    variances: List[float]

    @field_validator("means", mode="before")
    @classmethod
    def _scalar_means(cls, v):
        return [_as_point_list(m) for m in v]

    @model_validator(mode="after")
    def _check(self):
        _check_weights(self.weights)
        k = len(self.weights)
        if len(self.means) != k or len(self.variances) != k:
            raise ValueError("weights, means and variances must have the same length")
        if any(len(m) != self.dim for m in self.means):
            raise ValueError(f"every mean must have dimension {self.dim}")
        if any(v <= 0 for v in self.variances):
            raise ValueError("variances must be positive")
        return self

    @property
    def weight_array(self):
        return np.asarray(self.weights, dtype=float)

    @property
    def mean_array(self):
        return np.asarray(self.means, dtype=float).reshape(-1, self.dim)

    @property
    def variance_array(self):
        return np.asarray(self.variances, dtype=float)


class UniformBox(_ModelBase):
    type: Literal["uniform_box"] = "uniform_box"
    lower: List[float]
    upper: List[float]

    @field_validator("lower", "upper", mode="before")
    @classmethod
    def _scalar_corner(cls, v):
        return _as_point_list(v)

    @model_validator(mode="after")
    def _check(self):
        if len(self.lower) != self.dim or len(self.upper) != self.dim:
            raise ValueError(f"box corners must have dimension {self.dim}")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("box needs lower < upper on every axis")
        return self

    @property
    def lower_array(self):
        return np.asarray(self.lower, dtype=float)

    @property
    def upper_array(self):
        return np.asarray(self.upper, dtype=float)

    @property
    def volume(self):
        return float(np.prod(self.upper_array - self.lower_array))


class DiscreteAtoms(_ModelBase):
    type: Literal["discrete"] = "discrete"
    weights: List[float]
    locations: List[List[float]]

    @field_validator("locations", mode="before")
    @classmethod
    def _scalar_locations(cls, v):
        return [_as_point_list(x) for x in v]

    @model_validator(mode="after")
    def _check(self):
        _check_weights(self.weights)
        if len(self.locations) != len(self.weights):
            raise ValueError("weights and locations must have the same length")
        if any(len(x) != self.dim for x in self.locations):
            raise ValueError(f"every location must have dimension {self.dim}")
        return self

    @property
    def weight_array(self):
        return np.asarray(self.weights, dtype=float)

    @property
    def location_array(self):
        return np.asarray(self.locations, dtype=float).reshape(-1, self.dim)


MeasureModel = Annotated[Union[GaussianMixture, UniformBox, DiscreteAtoms], Field(discriminator="type")]
_MODEL_ADAPTER = TypeAdapter(MeasureModel)


def load_model(data):
    """Valida un modelo desde dict o texto JSON."""
    if isinstance(data, (str, bytes)):
        data = json.loads(data)
    return _MODEL_ADAPTER.validate_python(data)


def dump_model(model):
    return model.model_dump(mode="json")


def point_mass(location):
    """δ en `location` (atajo para el caso de referencia δ₀)."""
    loc = _as_point_list(location)
    return DiscreteAtoms(dim=len(loc), weights=[1.0], locations=[loc])


def standard_normal(dim):
    return GaussianMixture(dim=dim, weights=[1.0], means=[[0.0] * dim], variances=[1.0])


# ---------------------------------------------------------------------------
# Muestras
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EmpiricalSample:
    points: np.ndarray
    seed: int
    source: object = field(repr=False)

    @property
    def n(self):
        return len(self.points)

    @property
    def dim(self):
        return self.points.shape[1]


def _draw(model, n, rng):
    d = model.dim
    if isinstance(model, GaussianMixture):
        comp = rng.choice(len(model.weights), size=n, p=model.weight_array)
        scale = np.sqrt(model.variance_array[comp])[:, None]
        return model.mean_array[comp] + scale * rng.standard_normal((n, d))
    if isinstance(model, UniformBox):
        lo, hi = model.lower_array, model.upper_array
        return lo + (hi - lo) * rng.random((n, d))
    idx = rng.choice(len(model.weights), size=n, p=model.weight_array)
    return model.location_array[idx].copy()


def sample(model, n, seed):
    """N puntos i.i.d. de μ; reproducible por semilla."""
    if n < 1:
        raise DomainError(f"sample size must be >= 1, got {n}")
    pts = _draw(model, int(n), make_rng(seed))
    pts.setflags(write=False)
    return EmpiricalSample(points=pts, seed=int(seed), source=model)


def sample_smoothed(model, s, n, seed):
    """N puntos de μ∗Φ_s (μ más ruido N(0, 2s·I))."""
    rng = make_rng(seed)
    pts = _draw(model, int(n), rng)
    if s > 0:
        pts = pts + math.sqrt(2.0 * s) * rng.standard_normal(pts.shape)
    return pts


# ---------------------------------------------------------------------------
# Densidad suavizada
# ---------------------------------------------------------------------------

def _as_points(x, dim):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x.reshape(1, 1), True
    if x.ndim == 1:
        if dim == 1:
            return x.reshape(-1, 1), False
        return x.reshape(1, dim), True
    return x, False


def _density(model, s, pts):
    d = model.dim
    if isinstance(model, GaussianMixture):
        var = model.variance_array + 2.0 * s
        d2 = np.sum((pts[:, None, :] - model.mean_array[None, :, :]) ** 2, axis=-1)
        comp = (2.0 * math.pi * var) ** (-d / 2.0) * np.exp(-d2 / (2.0 * var))
        return comp @ model.weight_array
    if isinstance(model, UniformBox):
        lo, hi = model.lower_array, model.upper_array
        if s == 0:
            inside = np.all((pts >= lo) & (pts <= hi), axis=1)
            return inside / model.volume
        scale = 2.0 * math.sqrt(s)
        per_axis = 0.5 * (special.erf((hi - pts) / scale) - special.erf((lo - pts) / scale))
        return np.prod(per_axis / (hi - lo), axis=1)
    if s == 0:
        raise DensityUndefinedError()
    return heat_kernel_sum(pts, model.location_array, s, weights=model.weight_array)


def smoothed_density_eval(model, s, x):
    """(μ∗Φ_s)(x); s = 0 devuelve la densidad de μ si existe."""
    if s < 0:
        raise DomainError(f"bandwidth must be >= 0, got {s}")
    pts, single = _as_points(x, model.dim)
    vals = _density(model, float(s), pts)
    return float(vals[0]) if single else vals


@dataclass(frozen=True)
class SmoothedDensity:
    """μ∗Φ_s como objeto; componer con `smoothed` suma los anchos de banda."""

    model: object
    bandwidth: float

    def __call__(self, x):
        return smoothed_density_eval(self.model, self.bandwidth, x)

    def smoothed(self, s):
        return SmoothedDensity(self.model, self.bandwidth + s)


def smoothed_model(model, s):
    """μ∗Φ_s en forma cerrada para mezclas gaussianas y átomos."""
    if s < 0:
        raise DomainError(f"bandwidth must be >= 0, got {s}")
    if isinstance(model, GaussianMixture):
        return model.model_copy(update={"variances": [v + 2.0 * s for v in model.variances]})
    if isinstance(model, DiscreteAtoms):
        if s == 0:
            return model
        return GaussianMixture(dim=model.dim, weights=model.weights, means=model.locations,
                               variances=[2.0 * s] * len(model.weights))
    raise DomainError("a smoothed uniform box has no closed-form model; use SmoothedDensity")


def _box_autocorr(length, var):
    # ∫ (1_[0,L]∗N(0,var))² / L² en un eje
    if var == 0:
        return 1.0 / length
    sd = math.sqrt(var)
    gauss = lambda z: math.exp(-z * z / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)
    val = length * (special.ndtr(length / sd) - 0.5) - var * (gauss(0.0) - gauss(length))
    return 2.0 * val / length ** 2


def overlap_sq(model, s):
    """‖μ∗Φ_s‖²_{L²} en forma cerrada."""
    if isinstance(model, GaussianMixture):
        m, v, w = model.mean_array, model.variance_array, model.weight_array
        var = v[:, None] + v[None, :] + 4.0 * s
        d2 = np.sum((m[:, None, :] - m[None, :, :]) ** 2, axis=-1)
        kern = (2.0 * math.pi * var) ** (-model.dim / 2.0) * np.exp(-d2 / (2.0 * var))
        return float(w @ kern @ w)
    if isinstance(model, UniformBox):
        lengths = model.upper_array - model.lower_array
        return float(np.prod([_box_autocorr(L, 4.0 * s) for L in lengths]))
    if s == 0:
        return math.inf
    loc, w = model.location_array, model.weight_array
    return float(w @ heat_kernel_sum(loc, loc, 2.0 * s, weights=w))


def support_box(model, tail_tol=1e-12):
    """Caja (lo, hi) por eje fuera de la cual la masa es despreciable."""
    if isinstance(model, GaussianMixture):
        reach = np.sqrt(model.variance_array)[:, None] * math.sqrt(2.0 * math.log(1.0 / tail_tol))
        m = model.mean_array
        return (m - reach).min(axis=0), (m + reach).max(axis=0)
    if isinstance(model, UniformBox):
        return model.lower_array.copy(), model.upper_array.copy()
    loc = model.location_array
    return loc.min(axis=0), loc.max(axis=0)


# ---------------------------------------------------------------------------
# Masa de bolas y función maximal
# ---------------------------------------------------------------------------

def _box_ball_fraction(lo, hi, c, r):
    # fracción de la caja dentro de la bola cerrada, por rebanadas
    if r <= 0:
        return 0.0
    a = max(lo[0], c[0] - r)
    b = min(hi[0], c[0] + r)
    if b <= a:
        return 0.0
    if len(lo) == 1:
        return (b - a) / (hi[0] - lo[0])

    def slab(y):
        rr = math.sqrt(max(r * r - (y - c[0]) ** 2, 0.0))
        return _box_ball_fraction(lo[1:], hi[1:], c[1:], rr)

    val, _ = integrate.quad(slab, a, b, epsabs=BALL_TOL, epsrel=BALL_TOL, limit=200)
    return val / (hi[0] - lo[0])


def ball_mass(model, center, r):
    """μ(B(center, r)) con bola cerrada; r puede ser un arreglo."""
    center = _as_points(center, model.dim)[0][0]
    radii = np.asarray(r, dtype=float)
    scalar = radii.ndim == 0
    radii = np.atleast_1d(radii)
    if np.any(radii < 0):
        raise DomainError("radius must be >= 0")
    d = model.dim

    if isinstance(model, DiscreteAtoms):
        dist = np.linalg.norm(model.location_array - center, axis=1)
        inside = dist[None, :] <= radii[:, None] * (1.0 + 1e-12) + 1e-15
        out = inside @ model.weight_array
    elif isinstance(model, GaussianMixture):
        out = np.zeros(len(radii))
        for w, m, v in zip(model.weight_array, model.mean_array, model.variance_array):
            if d == 1:
                sd = math.sqrt(v)
                out += w * (special.ndtr((center[0] + radii - m[0]) / sd)
                            - special.ndtr((center[0] - radii - m[0]) / sd))
            else:
                nc = float(np.sum((center - m) ** 2)) / v
                x = radii ** 2 / v
                cdf = stats.chi2.cdf(x, d) if nc == 0 else stats.ncx2.cdf(x, d, nc)
                out += w * cdf
    else:
        lo, hi = model.lower_array, model.upper_array
        out = np.array([_box_ball_fraction(lo, hi, center, rr) for rr in radii])
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def maximal_function(model, x, radius_grid=None):
    """Mμ(x) = sup_r μ(B(x,r))/|B(x,r)| sobre una rejilla de radios.

    Para átomos el supremo es exacto (se alcanza en las distancias a los
    átomos, o es +inf si x es un átomo). Para una gaussiana en d = 1 se
    refina alrededor del mejor radio. En el resto es una cota inferior.
    """
    radii = RADIUS_GRID if radius_grid is None else np.sort(np.asarray(radius_grid, dtype=float))
    if radii.size == 0 or np.any(radii <= 0):
        raise DomainError("radius grid must be nonempty and positive")
    point = _as_points(x, model.dim)[0][0]
    d = model.dim
    vol = unit_ball_volume(d)

    if isinstance(model, DiscreteAtoms):
        dist = np.linalg.norm(model.location_array - point, axis=1)
        if np.any(dist <= 1e-15):
            return math.inf
        candidates = np.unique(np.concatenate([dist, radii]))
    else:
        candidates = radii

    ratios = ball_mass(model, point, candidates) / (vol * candidates ** d)
    best_idx = int(np.argmax(ratios))
    best = float(ratios[best_idx])

    if isinstance(model, GaussianMixture) and d == 1 and len(model.weights) == 1:
        lo = math.log(candidates[max(best_idx - 1, 0)])
        hi = math.log(candidates[min(best_idx + 1, len(candidates) - 1)])
        if hi > lo:
            res = optimize.minimize_scalar(
                lambda lr: -ball_mass(model, point, math.exp(lr)) / (2.0 * math.exp(lr)),
                bounds=(lo, hi), method="bounded")
            best = max(best, -float(res.fun))
    return best


def maximal_function_many(model, xs, radius_grid=None):
    pts, _ = _as_points(xs, model.dim)
    return np.array([maximal_function(model, p, radius_grid) for p in pts])
