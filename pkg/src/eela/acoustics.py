"""Underwater acoustic propagation: Thorp absorption, transmission loss and
the power <-> range mapping used by every node.

Transmission loss is handled in decibels,

    TL(R) = 10 log10(A_norm) + 10 k log10(R) + (R / 1000) a(f)

and the transmit power needed to cover ``R`` metres is ``P0 * 10**(TL/10)``
watts, where ``P0`` is the receiver detection threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

LN10 = math.log(10.0)

#: Diagonal of the default 2500 m cube.
DEFAULT_DIAGONAL_M = 2500.0 * math.sqrt(3.0)


@dataclass(frozen=True)
class ChannelParams:
    frequency_khz: float = 22.0
    spreading_k: float = 1.5
    a_norm: float = 1.0
    p0_watts: float = 1e-9
    sound_speed_mps: float = 1500.0
    min_range_m: float = 1.0
    # upper bracket for the numeric inverse (2 x region diagonal)
    max_range_m: float = 2.0 * DEFAULT_DIAGONAL_M

    def __post_init__(self):
        for name in ("frequency_khz", "spreading_k", "a_norm", "p0_watts",
                     "sound_speed_mps", "min_range_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.max_range_m <= self.min_range_m:
            raise ValueError("max_range_m must exceed min_range_m")

    @property
    def alpha_db_per_km(self) -> float:
        return absorption_db_per_km(self.frequency_khz)

    def calibrated(self, p_max_watts: float, max_range_m: float) -> "ChannelParams":
        """Return a copy whose ``p0_watts`` makes ``power_for_range(max_range_m) == p_max_watts``."""
        tl = attenuation_db(max_range_m, replace(self, p0_watts=1.0))
        return replace(self, p0_watts=p_max_watts / 10.0 ** (tl / 10.0))


def absorption_db_per_km(frequency_khz: float) -> float:
    """Thorp absorption coefficient in dB/km for a centre frequency in kHz.

    The low-frequency branch applies strictly below 0.4 kHz; the two branches
    do not meet at the boundary and are left as printed.
    """
    f = float(frequency_khz)
    if not f > 0:
        raise ValueError(f"frequency must be positive, got {frequency_khz!r}")
    f2 = f * f
    if f >= 0.4:
        return 0.003 + 0.11 * f2 / (1.0 + f2) + 44.0 * f2 / (4100.0 + f2) + 2.75e-4 * f2
    return 0.002 + 0.11 * f2 / (1.0 + f2) + 0.011 * f2


def attenuation_db(range_m, params: ChannelParams):
    """Transmission loss in dB; ranges below ``min_range_m`` are clamped up to it."""
    r = np.maximum(np.asarray(range_m, dtype=float), params.min_range_m)
    tl = (10.0 * math.log10(params.a_norm) + 10.0 * params.spreading_k * np.log10(r)
          + r / 1000.0 * params.alpha_db_per_km)
    return float(tl) if tl.ndim == 0 else tl


def power_for_range(range_m, params: ChannelParams):
    """Transmit power (W) whose footprint just reaches ``range_m``."""
    tl = attenuation_db(range_m, params)
    return params.p0_watts * 10.0 ** (tl / 10.0)


def power_floor(params: ChannelParams) -> float:
    return power_for_range(params.min_range_m, params)


def power_derivative(range_m, params: ChannelParams):
    """dP/dR in W/m."""
    r = np.maximum(np.asarray(range_m, dtype=float), params.min_range_m)
    d = power_for_range(r, params) * (params.spreading_k / r + params.alpha_db_per_km * LN10 / 1e4)
    return float(d) if np.ndim(d) == 0 else d


def power_second_derivative(range_m, params: ChannelParams):
    """d2P/dR2 in W/m^2."""
    r = np.maximum(np.asarray(range_m, dtype=float), params.min_range_m)
    b = params.alpha_db_per_km * LN10 / 1e4
    h = params.spreading_k / r + b
    d2 = power_for_range(r, params) * (h * h - params.spreading_k / (r * r))
    return float(d2) if np.ndim(d2) == 0 else d2


def _target_db(power, params: ChannelParams):
    # zero power gives -inf, which the floor clamp handles
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(power, dtype=float) / params.p0_watts)


def range_for_power(power_watts, params: ChannelParams, *, return_saturated: bool = False):
    """Numeric inverse of :func:`power_for_range`.

    Bisection on ``log R`` over ``[min_range_m, max_range_m]`` down to a
    relative width of 1e-12. Powers under the floor map to ``min_range_m``;
    powers above ``power_for_range(max_range_m)`` map to ``max_range_m`` and
    flag saturation. Accepts scalars or arrays.
    """
    if np.ndim(power_watts) == 0:
        r, saturated = _range_scalar(float(power_watts), params)
        return (r, saturated) if return_saturated else r
    target = _target_db(power_watts, params)
    lo = np.full(target.shape, math.log(params.min_range_m))
    hi = np.full(target.shape, math.log(params.max_range_m))
    c0 = 10.0 * math.log10(params.a_norm)
    kspread = 10.0 * params.spreading_k / LN10
    alpha = params.alpha_db_per_km / 1000.0
    # ~42 halvings reach 1e-12 relative on a [1 m, 9 km] bracket
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        tl = c0 + kspread * mid + alpha * np.exp(mid)
        below = tl < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    r = np.exp(0.5 * (lo + hi))
    floor_tl = attenuation_db(params.min_range_m, params)
    top_tl = attenuation_db(params.max_range_m, params)
    r = np.where(target <= floor_tl, params.min_range_m, r)
    saturated = target > top_tl
    r = np.where(saturated, params.max_range_m, r)
    return (r, saturated) if return_saturated else r


def _range_scalar(power: float, params: ChannelParams) -> tuple[float, bool]:
    if power <= 0:
        return params.min_range_m, False
    target = 10.0 * math.log10(power / params.p0_watts)
    if target <= attenuation_db(params.min_range_m, params):
        return params.min_range_m, False
    if target > attenuation_db(params.max_range_m, params):
        return params.max_range_m, True
    c0 = 10.0 * math.log10(params.a_norm)
    kspread = 10.0 * params.spreading_k / LN10
    alpha = params.alpha_db_per_km / 1000.0
    lo, hi = math.log(params.min_range_m), math.log(params.max_range_m)
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        if c0 + kspread * mid + alpha * math.exp(mid) < target:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi)), False


def inverse_derivative(power_watts, params: ChannelParams):
    """d g^-1 / dQ evaluated at ``power_watts`` (m/W)."""
    return 1.0 / power_derivative(range_for_power(power_watts, params), params)


def propagation_delay(distance_m, params: ChannelParams):
    """One-way flight time in seconds."""
    if np.any(np.asarray(distance_m) < 0):
        raise ValueError("distance must be non-negative")
    return distance_m / params.sound_speed_mps
