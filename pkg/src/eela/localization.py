"""Time-of-arrival ranging and depth-aided trilateration."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .acoustics import ChannelParams

# 2x2 normal-matrix condition number beyond which the anchor layout is treated as collinear
MAX_CONDITION = 1e8


class LocalizationError(Exception):
    pass


class InvalidObservation(LocalizationError, ValueError):
    pass


class DegenerateGeometry(LocalizationError):
    pass


class InfeasibleRanges(LocalizationError):
    pass


@dataclass(frozen=True)
class RangeObservation:
    anchor_id: int
    anchor_position: tuple[float, float, float]
    distance_m: float
    observed_at_s: float = 0.0

    def __post_init__(self):
        if not self.distance_m > 0:
            raise InvalidObservation(f"range must be positive, got {self.distance_m}")
        if self.anchor_position[2] != 0:
            raise InvalidObservation("anchor positions must lie on the surface (z = 0)")


def toa_distance(tx_time_s: float, rx_time_s: float, chan: ChannelParams) -> float:
    """One-way ToA range; relies on the network being time-synchronised."""
    flight = rx_time_s - tx_time_s
    if not flight > 0:
        raise InvalidObservation(f"non-positive flight time {flight!r}")
    return flight * chan.sound_speed_mps


def trilaterate(observations: Sequence[RangeObservation], known_depth_m: float) -> tuple[float, float, float]:
    """Estimate ``(x, y, z)`` of a node at a known depth from surface-anchor ranges.

    Each slant range is first projected onto the surface plane,
    ``r' = sqrt(max(d^2 - z^2, 0))``, then the circle equations are
    differenced against the first one and the resulting linear system is
    solved in the least-squares sense (exact for three anchors).

    Raises
    ------
    InvalidObservation
        fewer than three distinct anchors, or a negative depth.
    InfeasibleRanges
        every range is shorter than the depth.
    DegenerateGeometry
        the anchors are (nearly) collinear.
    """
    if known_depth_m < 0:
        raise InvalidObservation("depth must be non-negative")
    if len({o.anchor_id for o in observations}) < 3 or len(observations) < 3:
        raise InvalidObservation("need at least three distinct anchors")
    xy = np.array([o.anchor_position[:2] for o in observations], dtype=float)
    d = np.array([o.distance_m for o in observations], dtype=float)
    z2 = known_depth_m * known_depth_m
    if np.all(d * d < z2):
        raise InfeasibleRanges("all ranges are shorter than the known depth")
    r2 = np.maximum(d * d - z2, 0.0)

    # centre on the first anchor to keep the normal matrix well scaled
    origin = xy[0]
    rel = xy - origin
    A = 2.0 * rel[1:]
    b = r2[0] - r2[1:] + np.sum(rel[1:] ** 2, axis=1)
    normal = A.T @ A
    if np.linalg.cond(normal) > MAX_CONDITION:
        raise DegenerateGeometry("anchors are nearly collinear")
    sol = np.linalg.solve(normal, A.T @ b)
    return (float(sol[0] + origin[0]), float(sol[1] + origin[1]), float(known_depth_m))


def localization_error(true_pos, estimate) -> float:
    return math.dist(tuple(true_pos), tuple(estimate))
