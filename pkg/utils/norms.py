"""Evaluación por cuadratura de las normas 𝒲 (CAL) y 𝒮𝒲 (SCR).

Un campo se describe con un FieldEvaluator: dado un conjunto de nodos x,
`bind` devuelve una función t -> (u∗Φ_t)(nodos). Las normas integran en
t sobre una rejilla logarítmica (Simpson en ln t) y en x sobre una rejilla
tensorial (d <= 3) o nodos Monte Carlo (d >= 4).
"""
import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import Annotated, Callable, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate
from scipy.interpolate import CubicSpline
from scipy.spatial.distance import pdist

from utils.errors import DomainError, MuNotInHError, QuadratureOverflowError
from utils.kernels import NormParams, Space, heat_kernel, heat_kernel_sum, phi_norm
from utils.measures import (
    overlap_sq,
    point_mass,
    sample_smoothed,
    smoothed_density_eval,
    support_box,
)

logger = logging.getLogger(__name__)

# puntos por eje de la rejilla tensorial automática (nivel 0)
AUTO_POINTS = {1: 1025, 2: 193, 3: 65}
MAX_TENSOR_DIM = 3
# tablas de G con menos pares que esto se evalúan sin spline
DIRECT_PAIR_LIMIT = 4096
SPLINE_NODES = 1025


class TensorGridRule(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["tensor_grid"] = "tensor_grid"
    points_per_axis: Optional[int] = Field(default=None, ge=9)
    radius: Optional[float] = Field(default=None, gt=0)


class MonteCarloRule(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["monte_carlo"] = "monte_carlo"
    n_nodes: int = Field(default=20000, ge=100)
    seed: int = 0


XRule = Annotated[Union[TensorGridRule, MonteCarloRule], Field(discriminator="kind")]


class QuadratureSpec(BaseModel):
    """Reglas de cuadratura en t y en x."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    t_min: float = Field(default=1e-8, gt=0, lt=1)
    t_points: int = Field(default=97, ge=9)
    x_rule: XRule = Field(default_factory=TensorGridRule)
    tail_tol: float = Field(default=1e-12, gt=0, lt=1)
    level: int = Field(default=0, ge=0)

    @property
    def t_count(self):
        # número impar de nodos para que la subrejilla [::2] conserve extremos
        return self.t_points | 1

    def points_per_axis(self, dim):
        rule = self.x_rule
        if rule.points_per_axis is not None:
            return rule.points_per_axis | 1
        return (AUTO_POINTS[dim] - 1) * 2 ** self.level + 1

    def refined(self):
        """Misma regla con el doble de resolución en t y en x."""
        rule = self.x_rule
        if isinstance(rule, MonteCarloRule):
            rule = rule.model_copy(update={"n_nodes": rule.n_nodes * 2})
            level = self.level
        elif rule.points_per_axis is not None:
            rule = rule.model_copy(update={"points_per_axis": 2 * (rule.points_per_axis | 1) - 1})
            level = self.level
        else:
            level = self.level + 1
        return self.model_copy(update={"t_points": 2 * self.t_count - 1, "x_rule": rule, "level": level})


@dataclass(frozen=True)
class NormEstimate:
    value: float
    refinement_error: float
    space: str
    t_lower: float = 0.0
    n_nodes: int = 0
    n_t: int = 0

    def __float__(self):
        return float(self.value)


# ---------------------------------------------------------------------------
# Campos
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldEvaluator:
    """Campo u a integrar; `bind(nodes)(t)` devuelve (u∗Φ_t)(nodes).

    `support` es la caja (lo, hi) donde vive u antes de suavizar y
    `bandwidth_offset` el ancho de banda ya incluido en u (ε).
    """

    dim: int
    bind: Callable
    support: tuple
    bandwidth_offset: float = 0.0
    proposal: Optional[object] = None

    def __call__(self, x, t):
        nodes = np.asarray(x, dtype=float).reshape(-1, self.dim)
        return self.bind(nodes)(t)

    def support_radius(self, t, tail_tol=1e-12):
        """Radio fuera del cual |u∗Φ_t| < tail_tol, medido desde el centro del soporte."""
        lo, hi = self.support
        half_diag = 0.5 * float(np.linalg.norm(np.asarray(hi) - np.asarray(lo)))
        return half_diag + math.sqrt(4.0 * (t + self.bandwidth_offset) * math.log(1.0 / tail_tol))

    def scaled(self, c):
        inner = self.bind

        def bind(nodes):
            f = inner(nodes)
            return lambda t: c * f(t)

        return replace(self, bind=bind)

    def __mul__(self, c):
        return self.scaled(c)

    __rmul__ = __mul__

    def __add__(self, other):
        if other.dim != self.dim:
            raise DomainError("cannot add fields of different dimension")
        first, second = self.bind, other.bind

        def bind(nodes):
            f, g = first(nodes), second(nodes)
            return lambda t: f(t) + g(t)

        lo = np.minimum(self.support[0], other.support[0])
        hi = np.maximum(self.support[1], other.support[1])
        return FieldEvaluator(dim=self.dim, bind=bind, support=(lo, hi),
                              bandwidth_offset=min(self.bandwidth_offset, other.bandwidth_offset),
                              proposal=self.proposal or other.proposal)


def s_n_field(sample, model, eps):
    """S_N(x,t) = (μ_N^ε - μ^ε)∗Φ_t(x) = (1/N)Σ Φ_{t+ε}(x-X_i) - μ_{t+ε}(x)."""
    pts = sample.points

    def bind(nodes):
        def at(t):
            s = t + eps
            return heat_kernel_sum(nodes, pts, s) - smoothed_density_eval(model, s, nodes)
        return at

    lo, hi = support_box(model)
    lo = np.minimum(lo, pts.min(axis=0))
    hi = np.maximum(hi, pts.max(axis=0))
    return FieldEvaluator(dim=model.dim, bind=bind, support=(lo, hi),
                          bandwidth_offset=eps, proposal=model)


def phi_field(dim, eps):
    """Campo de Φ_ε (δ₀ suavizada)."""
    def bind(nodes):
        return lambda t: heat_kernel(nodes, t + eps, dim)

    origin = np.zeros(dim)
    return FieldEvaluator(dim=dim, bind=bind, support=(origin, origin.copy()),
                          bandwidth_offset=eps, proposal=point_mass(origin.tolist()))


def zero_field(dim):
    def bind(nodes):
        zeros = np.zeros(len(nodes))
        return lambda t: zeros

    origin = np.zeros(dim)
    return FieldEvaluator(dim=dim, bind=bind, support=(origin, origin.copy()),
                          bandwidth_offset=0.0, proposal=point_mass(origin.tolist()))


def smoothing_bias_field(model, eps):
    """Campo de μ^ε - μ: (μ^ε - μ)∗Φ_t = μ_{t+ε} - μ_t."""
    if eps == 0:
        return zero_field(model.dim)

    def bind(nodes):
        return lambda t: smoothed_density_eval(model, t + eps, nodes) - smoothed_density_eval(model, t, nodes)

    return FieldEvaluator(dim=model.dim, bind=bind, support=support_box(model),
                          bandwidth_offset=0.0, proposal=model)


# ---------------------------------------------------------------------------
# Nodos en x y en t
# ---------------------------------------------------------------------------

@dataclass
class _NodeSet:
    nodes: np.ndarray
    weights: np.ndarray
    coarse: np.ndarray
    coarse_factor: float
    spacing: float

    def integrate(self, vals):
        return float(vals @ self.weights)

    def integrate_coarse(self, vals):
        return float(vals[self.coarse] @ self.weights[self.coarse]) * self.coarse_factor


def _resolve_rule(quad, dim):
    rule = quad.x_rule
    if isinstance(rule, TensorGridRule) and dim > MAX_TENSOR_DIM:
        msg = f"tensor grid requested in d={dim}; switching to Monte Carlo nodes"
        warnings.warn(msg)
        logger.warning(msg)
        return MonteCarloRule()
    return rule


def _build_nodes(u, quad):
    d = u.dim
    rule = _resolve_rule(quad, d)
    lo, hi = (np.asarray(v, dtype=float) for v in u.support)
    pad = math.sqrt(4.0 * (1.0 + u.bandwidth_offset) * math.log(1.0 / quad.tail_tol))

    if isinstance(rule, TensorGridRule):
        if rule.radius is not None:
            center = 0.5 * (lo + hi)
            a, b = center - rule.radius, center + rule.radius
        else:
            a, b = lo - pad, hi + pad
        n_axis = quad.points_per_axis(d)
        axes = [np.linspace(a[j], b[j], n_axis) for j in range(d)]
        steps = np.array([ax[1] - ax[0] for ax in axes])
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=1)
        mask = np.zeros((n_axis,) * d, dtype=bool)
        mask[(slice(None, None, 2),) * d] = True
        weights = np.full(len(nodes), float(np.prod(steps)))
        return _NodeSet(nodes, weights, mask.ravel(), 2.0 ** d, float(steps.max()))

    if u.proposal is None:
        raise DomainError("Monte Carlo nodes need a proposal measure on the field")
    # propuesta μ^{ε+t̄}, t̄ media geométrica de la rejilla en t
    t_bar = float(np.exp(np.mean(np.log(_t_grid(u, quad, 0.0)))))
    s_prop = u.bandwidth_offset + t_bar
    nodes = sample_smoothed(u.proposal, s_prop, rule.n_nodes, rule.seed)
    density = smoothed_density_eval(u.proposal, s_prop, nodes)
    weights = 1.0 / (rule.n_nodes * density)
    coarse = np.zeros(rule.n_nodes, dtype=bool)
    coarse[: rule.n_nodes // 2] = True
    # sin suelo de resolución: los nodos siguen a la propuesta suavizada
    return _NodeSet(nodes, weights, coarse, 2.0, 0.0)


def _t_grid(u, quad, spacing):
    # Φ_{t+ε} más estrecha que la rejilla en x no se resuelve
    t_lo = max(quad.t_min, spacing ** 2 - u.bandwidth_offset)
    if t_lo >= 0.5:
        raise DomainError(f"x-grid too coarse (spacing={spacing:.3g}); refine the x rule")
    return np.logspace(math.log10(t_lo), 0.0, quad.t_count)


def _log_t_integral(ts, g):
    """∫_0^1 g(t) dt/t: Simpson en ln t sobre la rejilla más el tramo [0, t_0].

    El tramo inicial se completa con la ley de potencias g ~ t^k medida en
    los dos primeros nodos (g_0/k); si k <= 0 no se completa. g puede ser
    (T,) o (T, n).
    """
    u = np.log(ts)
    body = integrate.simpson(g, x=u, axis=0)
    g0, g1 = g[0], g[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.log(g1 / g0) / (u[1] - u[0])
        head = np.where((g0 > 0) & (g1 > 0) & (k > 0), g0 / k, 0.0)
    if np.ndim(g) == 1 and g0 > 0 and not k > 0:
        logger.warning("integrand does not decay as t -> 0 (k=%.3g); small-t sliver not completed", k)
    return body + head


def _checked(vals, t):
    if not np.all(np.isfinite(vals)):
        raise QuadratureOverflowError(t)
    return vals


# ---------------------------------------------------------------------------
# Normas
# ---------------------------------------------------------------------------

def _check_dims(u, params):
    if u.dim != params.dim:
        raise DomainError(f"field dimension {u.dim} does not match params.dim={params.dim}")


def norm_calW(u, params, quad=None):
    """(∫_0^1 t^{αp/2-1} ‖u∗Φ_t‖_p^p dt)^{1/p}."""
    quad = quad or QuadratureSpec()
    _check_dims(u, params)
    ns = _build_nodes(u, quad)
    ts = _t_grid(u, quad, ns.spacing)
    p, expo = params.p, params.alpha * params.p / 2.0
    f = u.bind(ns.nodes)

    g = np.empty(len(ts))
    g_coarse = np.empty(len(ts))
    with np.errstate(over="ignore", invalid="ignore"):
        for i, t in enumerate(ts):
            vals = _checked(np.abs(f(t)) ** p, t)
            g[i] = t ** expo * ns.integrate(vals)
            g_coarse[i] = t ** expo * ns.integrate_coarse(vals)
    _checked(g, ts[0])

    full = max(float(_log_t_integral(ts, g)), 0.0)
    coarse = max(float(_log_t_integral(ts[::2], g_coarse[::2])), 0.0)
    value = full ** (1.0 / p)
    return NormEstimate(value=value, refinement_error=abs(value - coarse ** (1.0 / p)),
                        space=Space.CAL.value, t_lower=float(ts[0]),
                        n_nodes=len(ns.nodes), n_t=len(ts))


def norm_scrW(u, params, quad=None):
    """(∫ (∫_0^1 t^{α-1} |u∗Φ_t(x)|² dt)^{p/2} dx)^{1/p}."""
    quad = quad or QuadratureSpec()
    _check_dims(u, params)
    ns = _build_nodes(u, quad)
    ts = _t_grid(u, quad, ns.spacing)
    p, a = params.p, params.alpha
    f = u.bind(ns.nodes)

    vals = np.empty((len(ts), len(ns.nodes)))
    with np.errstate(over="ignore", invalid="ignore"):
        for i, t in enumerate(ts):
            v = f(t)
            vals[i] = _checked(t ** a * v * v, t)

    inner = np.maximum(_log_t_integral(ts, vals), 0.0)
    inner_coarse = np.maximum(_log_t_integral(ts[::2], vals[::2]), 0.0)
    with np.errstate(over="ignore"):
        outer = _checked(np.atleast_1d(ns.integrate(inner ** (p / 2.0))), ts[0])[0]
        coarse = ns.integrate_coarse(inner_coarse ** (p / 2.0))
    value = max(outer, 0.0) ** (1.0 / p)
    return NormEstimate(value=value, refinement_error=abs(value - max(coarse, 0.0) ** (1.0 / p)),
                        space=Space.SCR.value, t_lower=float(ts[0]),
                        n_nodes=len(ns.nodes), n_t=len(ts))


def norm_W(u, params, quad=None):
    """Norma de W^{-α,p}: 𝒮𝒲 si α es entero, 𝒲 en otro caso."""
    if params.is_integer_alpha():
        return norm_scrW(u, params, quad)
    return norm_calW(u, params, quad)


def norm(u, params, space=Space.AUTO, quad=None):
    space = params.resolve_space(space)
    if space is Space.SCR:
        return norm_scrW(u, params, quad)
    return norm_calW(u, params, quad)


def regularization_bias(model, params, quad=None, space=Space.AUTO):
    """‖μ^ε - μ‖ en el espacio pedido (término de sesgo de la versión regularizada)."""
    return norm(smoothing_bias_field(model, params.eps), params, space, quad)


# ---------------------------------------------------------------------------
# Caso p = 2: forma de núcleo (exacta en x)
# ---------------------------------------------------------------------------

def _simpson_weights(n, h):
    w = np.full(n, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * h / 3.0


def _t_rule_weights(ts, alpha, dim, eps):
    """Pesos W_t tales que Σ W_t L(t) ≈ ∫_0^1 t^{α-1} L(t) dt, lineales en L."""
    u = np.log(ts)
    w = _simpson_weights(len(ts), u[1] - u[0]) * ts ** alpha
    # tramo [0, t_0]: L ~ cte si ε domina, L ~ t^{-d/2} si ε = 0
    k0 = alpha if eps >= 10.0 * ts[0] else alpha - dim / 2.0
    if k0 > 0:
        w[0] += ts[0] ** alpha / k0
    return w


def _kernel_form_sq(points, model, ts, alpha, eps):
    n, d = points.shape
    w = _t_rule_weights(ts, alpha, d, eps)
    s = ts + eps
    # G(δ²) = Σ W_t Φ_{2s_t}(δ)
    g_coef = w * (8.0 * math.pi * s) ** (-d / 2.0)
    g_at = lambda d2: np.exp(-np.multiply.outer(d2, 1.0 / (8.0 * s))) @ g_coef
    g0 = float(g_coef.sum())

    pair_sum = n * g0
    if n > 1:
        d2 = pdist(points, "sqeuclidean")
        positive = d2 > 0
        off = np.full(len(d2), g0)
        if positive.any():
            dp = d2[positive]
            if len(dp) <= DIRECT_PAIR_LIMIT:
                off[positive] = g_at(dp)
            else:
                z = np.linspace(math.log(dp.min()), math.log(dp.max()), SPLINE_NODES)
                spline = CubicSpline(z, g_at(np.exp(z)))
                off[positive] = spline(np.log(dp))
        pair_sum += 2.0 * off.sum()
    pair = pair_sum / n ** 2

    cross = 0.0
    self_term = 0.0
    for wt, st in zip(w, s):
        cross += wt * float(np.mean(smoothed_density_eval(model, 2.0 * st, points)))
        self_term += wt * overlap_sq(model, st)
    return pair - 2.0 * cross + self_term


def h_norm_sample(sample, model, alpha, eps, quad=None):
    """‖μ_N^ε - μ^ε‖_{H^{-α}} por la forma de núcleo (MMD) sobre la regla en t."""
    quad = quad or QuadratureSpec()
    d = model.dim
    if eps == 0 and alpha <= d / 2.0:
        raise MuNotInHError()
    ts = np.logspace(math.log10(quad.t_min), 0.0, quad.t_count)
    pts = np.asarray(sample.points, dtype=float)
    full = max(_kernel_form_sq(pts, model, ts, alpha, eps), 0.0)
    coarse = max(_kernel_form_sq(pts, model, ts[::2], alpha, eps), 0.0)
    value = math.sqrt(full)
    return NormEstimate(value=value, refinement_error=abs(value - math.sqrt(coarse)),
                        space="h", t_lower=float(ts[0]), n_nodes=len(pts), n_t=len(ts))


def mu_h_norm_sq(model, alpha, eps):
    """‖μ^ε‖²_{H^{-α}} = ∫_0^1 t^{α-1}‖μ_{t+ε}‖²_{L²} dt."""
    def integrand(u):
        s = math.exp(u) + eps
        if s == 0:
            return 0.0
        return math.exp(alpha * u) * overlap_sq(model, s)

    val, _ = integrate.quad(integrand, -math.inf, 0.0, epsabs=0.0, epsrel=1e-10, limit=400)
    return val


def h_second_moment_exact(model, alpha, eps, n):
    """E‖μ_N^ε - μ^ε‖²_{H^{-α}} = (‖Φ_ε‖² - ‖μ^ε‖²)/N."""
    d = model.dim
    if not (eps > 0 or alpha > d / 2.0):
        raise MuNotInHError()
    phi2 = phi_norm(NormParams(alpha=alpha, p=2.0, dim=d, eps=eps), Space.CAL) ** 2
    return max(phi2 - mu_h_norm_sq(model, alpha, eps), 0.0) / n
