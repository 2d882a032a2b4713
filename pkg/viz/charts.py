"""Tablas listas para graficar (los gráficos quedan fuera del paquete)."""
import math

import numpy as np
import pandas as pd

from utils.kernels import Regime, Space, b0_cal, b0_cal_scaled, b0_scr, phi_norm


def gaussian_norm_frame(params, eps_grid):
    """‖Φ_ε‖ en 𝒲 y 𝒮𝒲 para cada ε, con la referencia ε^{(α-d/q)/2}."""
    rows = []
    excess = (params.alpha - params.critical_alpha) / 2.0
    for eps in eps_grid:
        current = params.with_eps(eps)
        rows.append({
            "eps": eps,
            "regime": current.regime().value,
            "phi_cal": phi_norm(current, Space.CAL),
            "phi_scr": phi_norm(current, Space.SCR),
            "b0_cal": b0_cal(current),
            "b0_scr": b0_scr(current),
            "scaling_ref": eps ** excess,
        })
    frame = pd.DataFrame(rows)
    if params.regime() is Regime.CRITICAL:
        frame["log_ref"] = np.log(1.0 / frame["eps"]) ** (1.0 / params.p)
    return frame


def rate_curve_frame(result):
    """Valores por N, recta ajustada y referencia 1/√N anclada en el primer N."""
    frame = result.curve.copy()
    first = frame.iloc[0]
    frame["reference"] = first["value"] * np.sqrt(first["n"] / frame["n"])
    return frame


def tail_curve_frame(result):
    """Curva de cola con columnas logarítmicas; NaN donde la probabilidad es 0."""
    frame = result.curve.copy()
    for column in ("empirical_p", "bound_p"):
        positive = frame[column].where(frame[column] > 0)
        frame[f"log_{column}"] = np.log(positive)
    return frame


def b0_summary(params):
    """Resumen de 𝓑₀, 𝒮𝓑₀ y ‖Φ_ε‖ para el subcomando b0; None donde diverge."""
    def safe(fn, *args):
        try:
            value = fn(*args)
        except ValueError:
            return None
        return None if not math.isfinite(value) else value

    return {
        "alpha": params.alpha, "p": params.p, "dim": params.dim, "eps": params.eps,
        "regime": params.regime().value,
        "b0_cal": safe(b0_cal, params),
        "b0_cal_scaled": safe(b0_cal_scaled, params),
        "b0_scr": safe(b0_scr, params),
        "phi_cal": safe(phi_norm, params, Space.CAL),
        "phi_scr": safe(phi_norm, params, Space.SCR),
    }
