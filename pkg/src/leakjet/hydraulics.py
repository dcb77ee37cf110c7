"""Orifice hydraulics and the SPL power law.

Pressures: Pa for the orifice relations, bar for the SPL law; areas m2 vs mm2
likewise, matching the units each relation is stated in.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .model import SplModel

BAR_PA = 1e5


class NonPhysicalDischargeCoefficient(UserWarning):
    pass


class FitError(ValueError):
    pass


def jet_velocity(delta_p_pa: float, rho: float) -> float:
    """Jet velocity sqrt(2 dP / rho) in m/s."""
    if not rho > 0:
        raise ValueError(f"density must be > 0, got {rho}")
    if delta_p_pa < 0:
        raise ValueError(f"pressure drop must be >= 0, got {delta_p_pa}")
    return math.sqrt(2.0 * delta_p_pa / rho)


@dataclass(frozen=True)
class DischargeCoefficient:
    value: float
    physical: bool

    def __float__(self):
        return self.value


def discharge_coefficient(flow_m3_s: float, area_m2: float, rho: float,
                          delta_p_pa: float) -> DischargeCoefficient:
    """C_d = (Q / A) * sqrt(rho / (2 dP)).

    Values above 1 are returned with ``physical=False`` and a warning rather
    than raised: they usually mean the flow or pressure drop is mis-measured.
    """
    if not area_m2 > 0:
        raise ValueError(f"orifice area must be > 0, got {area_m2}")
    if not delta_p_pa > 0:
        raise ValueError(f"pressure drop must be > 0, got {delta_p_pa}")
    if not rho > 0:
        raise ValueError(f"density must be > 0, got {rho}")
    if not flow_m3_s > 0:
        raise ValueError(f"flow must be > 0, got {flow_m3_s}")
    cd = flow_m3_s / area_m2 * math.sqrt(rho / (2.0 * delta_p_pa))
    physical = cd <= 1.0
    if not physical:
        warnings.warn(f"discharge coefficient {cd:.4g} > 1", NonPhysicalDischargeCoefficient, stacklevel=2)
    return DischargeCoefficient(cd, physical)


def leak_flow(c_d: float, area_m2: float, delta_p_pa: float, rho: float) -> float:
    """Volumetric leak rate Q = C_d * A * v_j in m3/s."""
    if not 0 < c_d <= 1:
        raise ValueError(f"discharge coefficient must lie in (0, 1], got {c_d}")
    if not area_m2 > 0:
        raise ValueError(f"orifice area must be > 0, got {area_m2}")
    return c_d * area_m2 * jet_velocity(delta_p_pa, rho)


def spl_forward(delta_p_bar, area_mm2, model: SplModel):
    """SPL in kPa. Accepts scalars or arrays."""
    dp = np.asarray(delta_p_bar, dtype=float)
    a = np.asarray(area_mm2, dtype=float)
    if np.any(dp <= 0) or np.any(a <= 0):
        raise ValueError("delta_p_bar and area_mm2 must be > 0")
    out = dp * a ** model.n * model.k
    return float(out) if out.ndim == 0 else out


def spl_invert_area(spl_kpa, delta_p_bar, model: SplModel):
    """Hole area (mm2) that produces `spl_kpa` at `delta_p_bar`."""
    s = np.asarray(spl_kpa, dtype=float)
    dp = np.asarray(delta_p_bar, dtype=float)
    if np.any(s <= 0) or np.any(dp <= 0):
        raise ValueError("spl_kpa and delta_p_bar must be > 0")
    out = (s / (dp * model.k)) ** (1.0 / model.n)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SplSample:
    delta_p_bar: float
    area_mm2: float
    spl_kpa: float

    def __post_init__(self):
        for name in ("delta_p_bar", "area_mm2", "spl_kpa"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be > 0, got {v}")


def fit_spl_model(samples: Iterable[SplSample]) -> SplModel:
    """Least squares of log(SPL/dp) = log k + n log A.

    Raises FitError when fewer than two distinct areas are present or the
    fitted exponent falls outside the accepted envelope.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise FitError(f"need at least 2 samples, got {len(samples)}")
    x = np.log([s.area_mm2 for s in samples])
    y = np.log([s.spl_kpa for s in samples]) - np.log([s.delta_p_bar for s in samples])
    if len(set(x.tolist())) < 2:
        raise FitError("rank-deficient sample set: need at least 2 distinct hole areas")

    xm, ym = x.mean(), y.mean()
    dx = x - xm
    n = float(np.dot(dx, y - ym) / np.dot(dx, dx))
    log_k = ym - n * xm
    resid = y - (log_k + n * x)
    rms = float(math.sqrt(np.mean(resid ** 2)))
    if not SplModel.N_MIN <= n <= SplModel.N_MAX:
        raise FitError(f"fitted exponent n={n:.4f} outside [{SplModel.N_MIN}, {SplModel.N_MAX}]")
    return SplModel(n=n, k=math.exp(log_k), fit_residual_rms=rms, sample_count=len(samples))
