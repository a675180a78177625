"""Passive drift of nodes in a meandering sub-surface jet.

The horizontal flow comes from the stream function

    psi(x, y, t) = -tanh[(y - y0 - A sin(theta)) / (W sqrt(1 + (k A cos(theta))^2))],
    theta = k (x - c t) + phi,

with ``u = -dpsi/dy`` and ``v = dpsi/dx``, rescaled so that the largest speed
anywhere in the field equals ``peak_speed_mps``. There is no vertical flow;
anchors see the surface value of the same field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np


@dataclass(frozen=True)
class CurrentField:
    peak_speed_mps: float = 2.0
    meander_wavelength_m: float = 2500.0
    meander_amplitude_m: float = 300.0
    phase_speed: float = 0.1
    seed: int = 0
    jet_width_m: float = 1250.0
    center_y_m: float = 1250.0

    def __post_init__(self):
        if self.peak_speed_mps < 0:
            raise ValueError("peak speed must be non-negative")
        if self.meander_wavelength_m <= 0 or self.jet_width_m <= 0:
            raise ValueError("wavelength and jet width must be positive")
        if self.meander_amplitude_m < 0:
            raise ValueError("amplitude must be non-negative")

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.meander_wavelength_m

    @cached_property
    def phase(self) -> float:
        # fixed per-seed meander phase
        return float(np.random.default_rng(self.seed).uniform(0.0, 2.0 * math.pi))


def _raw_velocity(x, y, t, k, amp, width, c, y0, phi):
    theta = k * (x - c * t) + phi
    kac = k * amp * np.cos(theta)
    s = np.sqrt(1.0 + kac * kac)
    offset = y - y0 - amp * np.sin(theta)
    eta = offset / (width * s)
    sech2 = 1.0 / np.cosh(eta) ** 2
    u = sech2 / (width * s)
    # d(eta)/dx, using ds/dx = -k^3 A^2 cos sin / s
    deta_dx = (-amp * k * np.cos(theta) / (width * s)
               + offset * k ** 3 * amp * amp * np.cos(theta) * np.sin(theta) / (width * s ** 3))
    v = -sech2 * deta_dx
    return u, v


@lru_cache(maxsize=64)
def _max_raw_speed(k: float, amp: float, width: float) -> float:
    # speed depends on (theta, eta) only; scan a fine grid of both
    theta = np.linspace(0.0, 2.0 * math.pi, 721)[:, None]
    kac = k * amp * np.cos(theta)
    s = np.sqrt(1.0 + kac * kac)
    eta = np.linspace(-6.0, 6.0, 2401)[None, :]
    sech2 = 1.0 / np.cosh(eta) ** 2
    u = sech2 / (width * s)
    deta_dx = (-amp * k * np.cos(theta) / (width * s)
               + eta * k ** 3 * amp * amp * np.cos(theta) * np.sin(theta) / s ** 2)
    v = -sech2 * deta_dx
    # small safety factor covers the grid spacing
    return float(np.sqrt(u * u + v * v).max()) * 1.001


def velocity_at(pos, time_s: float, field: CurrentField) -> np.ndarray:
    """Current velocity (m/s) at one position ``(3,)`` or many ``(n, 3)``."""
    p = np.asarray(pos, dtype=float)
    if field.peak_speed_mps == 0:
        return np.zeros_like(p)
    k = field.wavenumber
    u, v = _raw_velocity(p[..., 0], p[..., 1], time_s, k, field.meander_amplitude_m,
                         field.jet_width_m, field.phase_speed, field.center_y_m, field.phase)
    scale = field.peak_speed_mps / _max_raw_speed(k, field.meander_amplitude_m, field.jet_width_m)
    out = np.zeros_like(p)
    out[..., 0] = u * scale
    out[..., 1] = v * scale
    return out


def reflect(positions: np.ndarray, side_m: float, depth_m: float) -> np.ndarray:
    """Mirror coordinates that left the ``[0, side] x [0, side] x [0, depth]`` box back inside."""
    p = positions.copy()
    for axis, top in ((0, side_m), (1, side_m), (2, depth_m)):
        col = p[:, axis]
        period = 2.0 * top
        col = np.mod(col, period)
        p[:, axis] = np.where(col > top, period - col, col)
    return p


def advance(positions: np.ndarray, dt_s: float, time_s: float, field: CurrentField,
            side_m: float, depth_m: float, anchor_mask=None) -> np.ndarray:
    """One forward-Euler drift step; returns the new ``(n, 3)`` positions."""
    if not dt_s > 0:
        raise ValueError("dt must be positive")
    p = positions + velocity_at(positions, time_s, field) * dt_s
    p = reflect(p, side_m, depth_m)
    if anchor_mask is not None:
        p[np.asarray(anchor_mask), 2] = 0.0
    return p


class Trajectory:
    """Lazily integrated positions of all nodes on a fixed ``dt`` lattice.

    ``at(t)`` advances the integration as far as needed and linearly
    interpolates between lattice points. Requests must not go back in time
    past the current lattice step.
    """

    def __init__(self, initial: np.ndarray, field: CurrentField, side_m: float, depth_m: float,
                 anchor_mask, dt_s: float = 0.1):
        self.field = field
        self.side_m = side_m
        self.depth_m = depth_m
        self.anchor_mask = np.asarray(anchor_mask, dtype=bool)
        self.dt = dt_s
        self.step = 0
        self.current = np.array(initial, dtype=float)
        self.next = self._step(self.current, 0)
        self.static = field.peak_speed_mps == 0

    def _step(self, pos, step):
        return advance(pos, self.dt, step * self.dt, self.field, self.side_m, self.depth_m,
                       self.anchor_mask)

    def at(self, time_s: float) -> np.ndarray:
        if self.static:
            return self.current
        target = int(math.floor(time_s / self.dt + 1e-9))
        if target < self.step:
            raise ValueError("trajectory queried in the past")
        while self.step < target:
            self.step += 1
            self.current = self.next
            self.next = self._step(self.current, self.step)
        frac = time_s / self.dt - self.step
        return self.current + min(max(frac, 0.0), 1.0) * (self.next - self.current)
