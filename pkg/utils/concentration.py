"""Herramientas de concentración: proxy ψ₂, cota σ vía función maximal y colas."""
import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from utils.errors import DivergentIntegralError, DomainError, InsufficientSampleError
from utils.kernels import NormParams, Regime, Space, heat_kernel, phi_norm, unit_ball_volume
from utils.measures import derive_seed, maximal_function_many, sample, smoothed_density_eval, support_box
from utils.norms import FieldEvaluator, norm_calW, norm_scrW

logger = logging.getLogger(__name__)

MIN_PSI2_DRAWS = 1000
PSI2_MAX_ORDER = 12


@dataclass(frozen=True)
class Psi2Estimate:
    value: float
    order_attained: int
    max_order: int
    n_samples: int
    method: str = "moment_ratio"


def psi2_estimate(draws, max_order=PSI2_MAX_ORDER):
    """Proxy de la norma ψ₂: sup_k (E|Z|^k)^{1/k}/√k, k par en {2, ..., max_order}."""
    z = np.abs(np.asarray(draws, dtype=float).ravel())
    if z.size < MIN_PSI2_DRAWS:
        raise InsufficientSampleError(z.size, MIN_PSI2_DRAWS)
    if max_order < 2:
        raise DomainError("max_order must be >= 2")
    top = float(z.max())
    if top == 0:
        return Psi2Estimate(0.0, 2, max_order, z.size)
    # se normaliza por el máximo para no desbordar en órdenes altos
    scaled = z / top
    best, best_k = -1.0, 2
    for k in range(2, max_order + 1, 2):
        m_k = top * float(np.mean(scaled ** k)) ** (1.0 / k) / math.sqrt(k)
        if m_k > best:
            best, best_k = m_k, k
    return Psi2Estimate(best, best_k, max_order, z.size)


def s_n_draws(model, x, t, n, replicas, base_seed=0):
    """Réplicas de S_N(x,t) = (1/N)Σ Φ_t(x - X_i) - μ_t(x)."""
    point = np.asarray(x, dtype=float).reshape(1, model.dim)
    centre = smoothed_density_eval(model, t, point)[0]
    out = np.empty(replicas)
    for r in range(replicas):
        pts = sample(model, n, derive_seed(base_seed, n, r)).points
        out[r] = float(np.mean(heat_kernel(pts - point, t, model.dim))) - centre
    return out


def _sigma_shape(maximal, t, d):
    vm = unit_ball_volume(d) * np.asarray(maximal, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        expo = np.where(np.isinf(vm), 0.0, -1.0 / (4.0 * t * vm ** (2.0 / d)))
    expo = np.where(vm == 0, -np.inf, expo)
    return (4.0 * math.pi * t) ** (-d / 2.0) * np.exp(expo)


def sigma_bound_rhs(x, t, model, radius_grid=None, maximal=None):
    """(4πt)^{-d/2} exp(-1/(4t(V_d·Mμ(x))^{2/d})).

    Se admite cualquier t > 0 porque la comprobación con ε evalúa en t + ε.
    `maximal` permite pasar Mμ(x) ya calculado.
    """
    if t <= 0:
        raise DomainError(f"sigma bound requires t > 0, got {t}")
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 0 or (pts.ndim == 1 and model.dim > 1)
    if maximal is None:
        maximal = maximal_function_many(model, pts, radius_grid)
    vals = np.atleast_1d(_sigma_shape(maximal, t, model.dim))
    return float(vals[0]) if single else vals


def sigma_field(model, eps, radius_grid=None):
    """Campo (x, t) -> σ-cota en t + ε; Mμ se calcula una vez por nodo."""
    d = model.dim

    def bind(nodes):
        maximal = maximal_function_many(model, nodes, radius_grid)
        return lambda t: _sigma_shape(maximal, t + eps, d)

    return FieldEvaluator(dim=d, bind=bind, support=support_box(model),
                          bandwidth_offset=eps, proposal=model)


@dataclass(frozen=True)
class SigmaCheckRow:
    alpha: float
    p: float
    eps: float
    space: str
    lhs: float
    rhs: float
    ratio: float
    skipped: str = ""


def sigma_integral_check(model, params, quad=None, radius_grid=None):
    """Compara ∫σ con d^{1/p}·‖Φ_ε‖ en 𝒲 y en 𝒮𝒲 (una fila por espacio)."""
    if params.eps == 0 and params.regime() is not Regime.SUPERCRITICAL:
        raise DivergentIntegralError("divergent integral: sigma check at eps=0 needs the supercritical regime")
    field = sigma_field(model, params.eps, radius_grid)
    factor = params.dim ** (1.0 / params.p)
    rows = []
    for space, fn in ((Space.CAL, norm_calW), (Space.SCR, norm_scrW)):
        lhs = fn(field, params, quad).value
        rhs = factor * phi_norm(params, space)
        rows.append(SigmaCheckRow(params.alpha, params.p, params.eps, space.value, lhs, rhs, lhs / rhs))
    return rows


def sigma_check_grid(model, alpha_grid, p_grid, eps_grid, quad=None, radius_grid=None):
    """sigma_integral_check sobre una rejilla (α, p, ε); devuelve un DataFrame."""
    rows = []
    for alpha in alpha_grid:
        for p in p_grid:
            for eps in eps_grid:
                params = NormParams(alpha=alpha, p=p, dim=model.dim, eps=eps)
                try:
                    rows.extend(sigma_integral_check(model, params, quad, radius_grid))
                except DivergentIntegralError as err:
                    logger.info("sigma check skipped at alpha=%s p=%s eps=%s: %s", alpha, p, eps, err)
                    for space in (Space.CAL, Space.SCR):
                        rows.append(SigmaCheckRow(alpha, p, eps, space.value, math.nan, math.inf,
                                                  math.nan, skipped=str(err)))
    return pd.DataFrame([r.__dict__ for r in rows])


# ---------------------------------------------------------------------------
# Colas
# ---------------------------------------------------------------------------

def _tail_scale(n, phi_norm_value, p, d, dimension_free=False):
    dim_factor = 1.0 if dimension_free else d ** (2.0 / p)
    return n / (dim_factor * p * phi_norm_value ** 2)


def tail_curve(lambdas, n, phi_norm_value, p, d, c=1.0, dimension_free=False):
    """2 exp(-Nλ²/(C d^{2/p} p ‖Φ_ε‖²)); sin el factor d^{2/p} si dimension_free."""
    lam = np.asarray(lambdas, dtype=float)
    return 2.0 * np.exp(-_tail_scale(n, phi_norm_value, p, d, dimension_free) * lam ** 2 / c)


def shifted_tail_curve(lambdas, n, phi_norm_value, p, d, bias, c=1.0):
    """Cola para la medida sin regularizar: λ se reduce en el sesgo ‖μ^ε - μ‖."""
    lam = np.maximum(np.asarray(lambdas, dtype=float) - bias, 0.0)
    return tail_curve(lam, n, phi_norm_value, p, d, c)


def moment_bound_curve(n_values, phi_norm_value, p, d, c=1.0):
    """C d^{1/p} √p ‖Φ_ε‖ / √N."""
    n = np.asarray(n_values, dtype=float)
    return c * d ** (1.0 / p) * math.sqrt(p) * phi_norm_value / np.sqrt(n)


@dataclass(frozen=True)
class TailFit:
    c_envelope: float
    c_regression: float
    n_points: int
    lambdas: np.ndarray
    exceedance: np.ndarray


def empirical_exceedance(norms):
    """(λ ordenados, P(‖·‖ > λ)) sobre las propias réplicas."""
    lam = np.sort(np.asarray(norms, dtype=float))
    r = len(lam)
    # número de réplicas estrictamente mayores que cada λ
    greater = r - np.searchsorted(lam, lam, side="right")
    return lam, greater / r


def fit_tail_constant(norms, n, phi_norm_value, p, d):
    """C envolvente (mínimo C que domina la cola empírica más allá de la mediana) y C por regresión."""
    lam, prob = empirical_exceedance(norms)
    keep = (lam > np.median(lam)) & (prob > 0)
    if keep.sum() < 2:
        raise InsufficientSampleError(int(keep.sum()), 2)
    x = -_tail_scale(n, phi_norm_value, p, d) * lam[keep] ** 2
    log_ratio = np.log(prob[keep] / 2.0)
    c_env = float(np.max(x / log_ratio))
    slope = float(np.sum(x * log_ratio) / np.sum(x * x))
    c_reg = 1.0 / slope if slope > 0 else math.inf
    return TailFit(c_env, c_reg, int(keep.sum()), lam[keep], prob[keep])


def tail_dominated(norms, n, phi_norm_value, p, d, c, rel_tol=1e-9):
    """¿La curva con constante c domina la cola empírica más allá de la mediana?"""
    lam, prob = empirical_exceedance(norms)
    keep = lam > np.median(lam)
    bound = tail_curve(lam[keep], n, phi_norm_value, p, d, c)
    return bool(np.all(prob[keep] <= bound * (1.0 + rel_tol)))
