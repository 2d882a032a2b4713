"""Núcleo del calor y normas cerradas de Φ_ε.

Convención: Φ_t es la densidad de N(0, 2t·I), es decir
Φ_t(x) = (4πt)^{-d/2} exp(-|x|²/4t).
"""
import logging
import math
from enum import Enum
from fractions import Fraction

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate, special
from scipy.spatial.distance import cdist

from utils.errors import DeltaNotInSpaceError, DivergentIntegralError, DomainError

logger = logging.getLogger(__name__)

INTEGER_TOL = 1e-12
REGIME_TOL = 1e-12
B0_RTOL = 1e-8
SCR_RTOL = 1e-6
QUAD_LIMIT = 400
# exp(-KERNEL_CUTOFF) es el peso relativo descartado en heat_kernel_sum
KERNEL_CUTOFF = 40.0
BLOCK_SIZE = 512


class Regime(str, Enum):
    SUPERCRITICAL = "supercritical"
    CRITICAL = "critical"
    SUBCRITICAL = "subcritical"


class Space(str, Enum):
    CAL = "cal"
    SCR = "scr"
    AUTO = "auto"


def _nice_fraction(x):
    frac = Fraction(x).limit_denominator(1000)
    if abs(float(frac) - x) < 1e-12:
        return frac
    return None


class NormParams(BaseModel):
    """Parámetros (α, p, d, ε) de la norma; q es el exponente conjugado."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: float = Field(gt=0, allow_inf_nan=False)
    p: float = Field(gt=1, allow_inf_nan=False)
    dim: int = Field(gt=0)
    eps: float = Field(default=0.0, ge=0, allow_inf_nan=False)

    @property
    def q(self):
        return self.p / (self.p - 1.0)

    @property
    def critical_alpha(self):
        return self.dim / self.q

    def is_integer_alpha(self):
        return abs(self.alpha - round(self.alpha)) < INTEGER_TOL

    def regime(self):
        # comparación exacta cuando α y p son racionales "sencillos"
        fa, fp = _nice_fraction(self.alpha), _nice_fraction(self.p)
        if fa is not None and fp is not None:
            diff = fa * fp - self.dim * (fp - 1)
        else:
            diff = self.alpha - self.critical_alpha
            if abs(diff) < REGIME_TOL:
                diff = 0
        if diff > 0:
            return Regime.SUPERCRITICAL
        if diff == 0:
            return Regime.CRITICAL
        return Regime.SUBCRITICAL

    def with_eps(self, eps):
        return self.model_copy(update={"eps": float(eps)})

    def resolve_space(self, space=Space.AUTO):
        space = Space(space)
        if space is Space.AUTO:
            return Space.SCR if self.is_integer_alpha() else Space.CAL
        return space


# ---------------------------------------------------------------------------
# Núcleo y geometría
# ---------------------------------------------------------------------------

def unit_ball_volume(d):
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def sphere_area(d):
    """Área de la esfera unidad S^{d-1} en R^d (A_{d-1})."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def heat_kernel(x, t, d):
    """Φ_t(x). x puede ser un punto (d,) o un arreglo de puntos (n, d)."""
    if t <= 0:
        raise DomainError(f"heat kernel requires t > 0, got t={t}")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        sq = x * x
    else:
        sq = np.sum(x * x, axis=-1) if x.shape[-1] == d else x * x
    return (4.0 * math.pi * t) ** (-d / 2.0) * np.exp(-sq / (4.0 * t))


def heat_kernel_sum(nodes, centers, s, weights=None, block_size=BLOCK_SIZE):
    """Σ_j w_j Φ_s(x_i - c_j) para cada nodo x_i.

    Bucle caliente de las normas empíricas: nodos y centros se ordenan por
    la primera coordenada y cada bloque de nodos sólo ve los centros dentro
    del radio de corte. El orden de suma es fijo, así que el resultado es
    determinista.
    """
    if s <= 0:
        raise DomainError(f"kernel sum requires s > 0, got s={s}")
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    d = nodes.shape[1]
    if weights is None:
        weights = np.full(len(centers), 1.0 / len(centers))
    weights = np.asarray(weights, dtype=float)

    c_order = np.argsort(centers[:, 0], kind="stable")
    c_sorted = centers[c_order]
    w_sorted = weights[c_order]
    key = c_sorted[:, 0]

    n_order = np.argsort(nodes[:, 0], kind="stable")
    n_sorted = nodes[n_order]

    cut = math.sqrt(4.0 * s * KERNEL_CUTOFF)
    acc = np.zeros(len(nodes))
    for start in range(0, len(n_sorted), block_size):
        blk = n_sorted[start:start + block_size]
        lo = np.searchsorted(key, blk[0, 0] - cut, side="left")
        hi = np.searchsorted(key, blk[-1, 0] + cut, side="right")
        if hi <= lo:
            continue
        d2 = cdist(blk, c_sorted[lo:hi], "sqeuclidean")
        acc[start:start + len(blk)] = np.exp(-d2 / (4.0 * s)) @ w_sorted[lo:hi]

    out = np.empty(len(nodes))
    out[n_order] = acc
    return (4.0 * math.pi * s) ** (-d / 2.0) * out


# ---------------------------------------------------------------------------
# Cuadraturas 1-D
# ---------------------------------------------------------------------------

def _power_head(f, c, upper, rtol):
    """∫_0^upper s^{c-1} f(s) ds con el cambio s = v^{1/c}."""
    if upper <= 0:
        return 0.0
    val, _ = integrate.quad(lambda v: f(v ** (1.0 / c)), 0.0, upper ** c,
                            epsabs=0.0, epsrel=rtol, limit=QUAD_LIMIT)
    return val / c


def _log_axis(log_integrand, lo, hi, rtol):
    """∫ exp(log_integrand(u)) du sobre [lo, hi] (u = ln s; admite ±inf)."""
    if hi <= lo:
        return 0.0

    def g(u):
        try:
            return math.exp(log_integrand(u))
        except OverflowError:
            # e^u desbordado: los integrandos usados decaen ahí
            return 0.0

    val, _ = integrate.quad(g, lo, hi, epsabs=0.0, epsrel=rtol, limit=QUAD_LIMIT)
    return val


def _log1p_exp(u):
    return float(np.logaddexp(0.0, u))


def _upper_gamma(c, x):
    """∫_x^∞ τ^{c-1} e^{-τ} dτ, también para c <= 0 (x > 0)."""
    if c > 0:
        return special.gammaincc(c, x) * special.gamma(c)
    if x <= 0:
        return math.inf
    return _log_axis(lambda u: c * u - math.exp(u), math.log(x), math.inf, B0_RTOL)


def _gamma_window(c, lo, hi):
    """∫_lo^hi τ^{c-1} e^{-τ} dτ."""
    if hi <= lo:
        return 0.0
    if c > 0:
        # pasada la moda, restar colas superiores; gammainc ≈ 1 pierde dígitos
        if lo >= c:
            return special.gamma(c) * (special.gammaincc(c, lo) - special.gammaincc(c, hi))
        return special.gamma(c) * (special.gammainc(c, hi) - special.gammainc(c, lo))
    if lo <= 0:
        return math.inf
    return _log_axis(lambda u: c * u - math.exp(u), math.log(lo), math.log(hi), B0_RTOL)


# ---------------------------------------------------------------------------
# I_ε y 𝓑₀
# ---------------------------------------------------------------------------

def _check_eps_zero_regime(params, what):
    if params.eps == 0 and params.regime() is not Regime.SUBCRITICAL:
        raise DivergentIntegralError(
            f"divergent integral: {what} at eps=0 is finite only in the subcritical regime "
            f"(alpha={params.alpha}, p={params.p}, d={params.dim})")


def i_eps(r, params):
    """I_ε(r) = ∫_0^{1/ε} s^{α-1}(1+s)^{-d} exp(-r²/(2(1+s))) ds."""
    if r < 0:
        raise DomainError(f"r must be >= 0, got {r}")
    a, d, eps = params.alpha, params.dim, params.eps
    if eps == 0 and a >= d:
        raise DivergentIntegralError(f"divergent integral: I_0 requires alpha < d (alpha={a}, d={d})")
    upper = math.inf if eps == 0 else 1.0 / eps
    half_r2 = 0.5 * r * r

    head = _power_head(lambda s: (1.0 + s) ** (-d) * math.exp(-half_r2 / (1.0 + s)),
                       a, min(1.0, upper), B0_RTOL)
    if upper <= 1.0:
        return head

    def log_f(u):
        l1 = _log1p_exp(u)
        return a * u - d * l1 - half_r2 * math.exp(-l1)

    return head + _log_axis(log_f, 0.0, math.log(upper), B0_RTOL)


def i_eps_unify_bound(params):
    """Cota superior de I_ε(r) independiente de r."""
    a, d, eps = params.alpha, params.dim, params.eps
    if a == d:
        return math.inf if eps == 0 else 1.0 / a + math.log(1.0 / eps)
    if eps == 0:
        return math.inf if a > d else 1.0 / a + 1.0 / (d - a)
    return 1.0 / a + (eps ** (d - a) - 1.0) / (a - d)


def i_eps_sandwich(r, params):
    """Cotas (inferior, superior) de I_ε(r) por funciones gamma incompletas.

    Con t = r²/(2(1+s)) se tiene
    I_ε(r) = 2^{d-α} r^{-2(d-α)} ∫_a^b (1 - t/b)^{α-1} t^{d-α-1} e^{-t} dt,
    a = εr²/(2(1+ε)), b = r²/2.
    """
    if r <= 0:
        raise DomainError(f"sandwich bounds require r > 0, got {r}")
    a_, d, eps = params.alpha, params.dim, params.eps
    c = d - a_
    lo = eps * r * r / (2.0 * (1.0 + eps))
    b = 0.5 * r * r
    k = 2.0 ** c * r ** (-2.0 * c)

    if a_ >= 1.0:
        upper = k * _gamma_window(c, lo, b)
        lower = k * 2.0 ** (1.0 - a_) * _gamma_window(c, lo, max(lo, 0.5 * b))
        return lower, upper

    lower = k * _gamma_window(c, lo, b)
    m = max(lo, 0.5 * b)
    # máximo de t^{c-1} e^{-t} en [m, b]; unimodal con pico en c - 1
    t_star = min(max(c - 1.0, m), b) if c > 1.0 else m
    peak = t_star ** (c - 1.0) * math.exp(-t_star)
    upper = k * (2.0 ** (1.0 - a_) * _gamma_window(c, lo, m) + peak * b * 2.0 ** (-a_) / a_)
    return lower, upper


def b0_cal(params):
    """𝓑₀(ε) = ∫_0^{1/ε} s^{αp/2-1} (1+s)^{-(p-1)d/2} ds."""
    _check_eps_zero_regime(params, "B0")
    c = params.alpha * params.p / 2.0
    e = (params.p - 1.0) * params.dim / 2.0
    upper = math.inf if params.eps == 0 else 1.0 / params.eps

    head = _power_head(lambda s: (1.0 + s) ** (-e), c, min(1.0, upper), B0_RTOL)
    if upper <= 1.0:
        return head
    tail = _log_axis(lambda u: c * u - e * _log1p_exp(u), 0.0, math.log(upper), B0_RTOL)
    return head + tail


def b0_cal_scaled(params):
    """ε^{(α-d/q)p/2}·𝓑₀(ε); en ε = 0 supercrítico vale 2/(αp - d(p-1))."""
    excess = (params.alpha * params.p - params.dim * (params.p - 1.0)) / 2.0
    if params.eps == 0:
        if params.regime() is not Regime.SUPERCRITICAL:
            raise DeltaNotInSpaceError()
        return 1.0 / excess
    return params.eps ** excess * b0_cal(params)


def b0_scr(params):
    """𝒮𝓑₀(ε) = A_{d-1} ∫_0^∞ I_ε(r)^{p/2} r^{d-1} dr."""
    _check_eps_zero_regime(params, "SB0")
    d, half_p = params.dim, params.p / 2.0

    def log_f(u):
        val = i_eps(math.exp(u), params)
        if val <= 0:
            return -math.inf
        return half_p * math.log(val) + d * u

    if params.eps == 0:
        r1 = r2 = 1.0
    else:
        r1, r2 = sorted((math.sqrt(params.eps), 1.0 / math.sqrt(params.eps)))

    head, _ = integrate.quad(lambda r: i_eps(r, params) ** half_p * r ** (d - 1), 0.0, r1,
                             epsabs=0.0, epsrel=SCR_RTOL, limit=QUAD_LIMIT)
    middle = _log_axis(log_f, math.log(r1), math.log(r2), SCR_RTOL)
    tail = _log_axis(log_f, math.log(r2), math.inf, SCR_RTOL)
    return sphere_area(d) * (head + middle + tail)


def b0_scr_log_coefficient(params):
    """Coeficiente de |ln ε| en 𝒮𝓑₀(ε) para ε → 0, régimen crítico.

    En [1, ε^{-1/2}] el integrando decae como 2^{d-α}Γ(d-α) r^{-2(d-α)}, lo
    que da ½·A_{d-1}·(2^{d/p}Γ(d/p))^{p/2}.
    """
    if params.regime() is not Regime.CRITICAL:
        raise DomainError("log coefficient is defined only in the critical regime")
    d, p = params.dim, params.p
    return 0.5 * sphere_area(d) * (2.0 ** (d / p) * math.gamma(d / p)) ** (p / 2.0)


# ---------------------------------------------------------------------------
# Normas cerradas de Φ_ε y δ₀
# ---------------------------------------------------------------------------

def _log_exp1(x):
    """ln E₁(x) sin desbordar: E₁ vale 0 en coma flotante para x > ~700."""
    x = max(x, 1e-300)
    if x < 50.0:
        return math.log(special.exp1(x))
    # serie asintótica E₁(x) ~ e^{-x}/x (1 - 1/x + 2/x² - 6/x³ + 24/x⁴)
    inv = 1.0 / x
    series = 1.0 - inv + 2.0 * inv ** 2 - 6.0 * inv ** 3 + 24.0 * inv ** 4
    return -x - math.log(x) + math.log(series)


def _delta_scr_pth_power(params):
    """‖δ₀‖_SCR^p = A_{d-1}∫ J(r)^{p/2} r^{d-1} dr, J(r) = ∫_0^1 t^{α-1}Φ_t(r)² dt."""
    a, d, half_p = params.alpha, params.dim, params.p / 2.0
    c = d - a
    pref = (4.0 * math.pi) ** (-d)

    def log_j(u):
        log_x = math.log(0.5) + 2.0 * u
        x = math.exp(log_x)
        if c > 0:
            tail = special.gammaincc(c, x)
            if tail <= 0:
                return -math.inf
            return math.log(pref) - c * log_x + math.log(tail) + special.gammaln(c)
        if c == 0:
            return math.log(pref) + _log_exp1(x)
        if x < 1e-8:
            # x^{-c}Γ(c, x) → 1/|c| cuando x → 0
            return math.log(pref) - math.log(-c)
        tail = _upper_gamma(c, x)
        if tail <= 0:
            return -math.inf
        return math.log(pref) - c * log_x + math.log(tail)

    def log_f(u):
        lj = log_j(u)
        if lj == -math.inf:
            return -math.inf
        return half_p * lj + d * u

    total = _log_axis(log_f, -math.inf, 0.0, SCR_RTOL) + _log_axis(log_f, 0.0, math.inf, SCR_RTOL)
    return sphere_area(d) * total


def phi_norm(params, space=Space.AUTO):
    """Norma cerrada de Φ_ε en 𝒲 (CAL) o 𝒮𝒲 (SCR)."""
    space = params.resolve_space(space)
    d, p = params.dim, params.p
    if space is Space.CAL:
        scaled = b0_cal_scaled(params)
        return p ** (-d / (2.0 * p)) * (4.0 * math.pi) ** (-d / (2.0 * params.q)) * scaled ** (1.0 / p)

    if params.eps == 0:
        if params.regime() is not Regime.SUPERCRITICAL:
            raise DeltaNotInSpaceError()
        return _delta_scr_pth_power(params) ** (1.0 / p)
    excess = (params.alpha * p - d * (p - 1.0)) / 2.0
    scaled = params.eps ** excess * b0_scr(params)
    return (4.0 * math.pi) ** (-d / 2.0) * scaled ** (1.0 / p)


def delta_norm(params, space=Space.AUTO):
    """‖δ₀‖ en el espacio pedido; sólo existe en el régimen supercrítico."""
    if params.regime() is not Regime.SUPERCRITICAL:
        raise DeltaNotInSpaceError()
    return phi_norm(params.with_eps(0.0), space)
