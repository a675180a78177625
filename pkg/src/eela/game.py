"""Single-leader / multi-follower power-control game.

The sensor node (leader) picks its Request power ``p``; every anchor node
(follower) answers with a Reply power ``q``. Utilities trade the remaining
energy ratio against a localization-ability score; best responses solve
the implicit first-order conditions by damped fixed-point iteration and are
always checked against a grid argmax, which remains the ground truth.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .acoustics import (ChannelParams, power_derivative, power_floor, power_for_range,
                        range_for_power)

log = logging.getLogger(__name__)

GRID_POINTS = 1024
FIXED_POINT_TOL = 1e-8
FIXED_POINT_ITERS = 100
DAMPING = 0.5


class NoRequests(ValueError):
    """A follower was asked for a best response without any Request."""


@dataclass(frozen=True)
class GameParams:
    w1_anchor: float = 0.4
    w2_anchor: float = 0.6
    w1_sensor: float = 0.1
    w2_sensor: float = 0.9
    cost_per_unit_power_anchor: float = 1.0
    cost_per_unit_power_sensor: float = 1.0
    total_energy_anchor: float = 100.0
    total_energy_sensor: float = 100.0
    n_sensors: int = 50
    region_side_m: float = 2500.0
    n_min_req: int = 3
    p_max_watts: float = 100.0
    q_max_watts: float = 100.0

    def __post_init__(self):
        for a, b in ((self.w1_anchor, self.w2_anchor), (self.w1_sensor, self.w2_sensor)):
            if not (0 < a < 1 and 0 < b < 1) or abs(a + b - 1.0) > 1e-12:
                raise ValueError(f"weights must lie in (0, 1) and sum to 1, got {a}, {b}")
        for name in ("cost_per_unit_power_anchor", "cost_per_unit_power_sensor",
                     "total_energy_anchor", "total_energy_sensor", "region_side_m",
                     "p_max_watts", "q_max_watts"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n_sensors < 1 or self.n_min_req < 1:
            raise ValueError("n_sensors and n_min_req must be positive")
        if self.p_max_watts != self.q_max_watts:
            raise ValueError("P_max and Q_max must be equal")

    @property
    def density_coeff(self) -> float:
        """``4 pi n / (3 d^3)``, expected nodes per cubic metre of footprint."""
        return 4.0 * math.pi * self.n_sensors / (3.0 * self.region_side_m ** 3)


@dataclass(frozen=True)
class FollowerObservation:
    request_powers_watts: tuple[float, ...]
    req_counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "request_powers_watts", tuple(float(p) for p in self.request_powers_watts))
        object.__setattr__(self, "req_counts", tuple(int(n) for n in self.req_counts))
        if len(self.request_powers_watts) != len(self.req_counts):
            raise ValueError("request powers and counts must have equal length")
        if any(p < 0 for p in self.request_powers_watts) or any(n < 0 for n in self.req_counts):
            raise ValueError("request powers and counts must be non-negative")

    @property
    def n_arx(self) -> int:
        return len(self.request_powers_watts)

    @property
    def total_power(self) -> float:
        return math.fsum(self.request_powers_watts)

    @property
    def total_req(self) -> int:
        return sum(self.req_counts)


class DensityNeighborCount:
    """Expected neighbour count ``min(4 pi n R^3 / (3 d^3), cap)`` for uniform density."""

    def __init__(self, n: int, side_m: float, chan: ChannelParams, cap: float | None = None):
        self.coeff = 4.0 * math.pi * n / (3.0 * side_m ** 3)
        self.n = n
        self.side_m = side_m
        self.chan = chan
        self.cap = float(n if cap is None else cap)

    def __call__(self, power):
        r = range_for_power(power, self.chan)
        return np.minimum(self.coeff * np.asarray(r) ** 3, self.cap) if np.ndim(r) else \
            min(self.coeff * r ** 3, self.cap)

    def slope_factor(self, power):
        """``R^2 dR/dP`` at ``power``; zero past the cap."""
        return _slope_factor(power, self.coeff, self.cap, self.chan)


class StepNeighborCount:
    """Number of known anchors reachable at a power: a right-continuous step function."""

    def __init__(self, reach_powers: Sequence[float]):
        self.breakpoints = tuple(sorted(float(p) for p in reach_powers))

    def __call__(self, power):
        if np.ndim(power):
            return np.searchsorted(self.breakpoints, np.asarray(power), side="right").astype(float)
        return float(bisect.bisect_right(self.breakpoints, power))


@dataclass(frozen=True)
class LeaderObservation:
    reply_powers_watts: tuple[float, ...]
    neighbor_count_fn: Callable = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "reply_powers_watts", tuple(float(q) for q in self.reply_powers_watts))
        if any(q < 0 for q in self.reply_powers_watts):
            raise ValueError("reply powers must be non-negative")

    @property
    def n_srx(self) -> int:
        return len(self.reply_powers_watts)

    @property
    def total_power(self) -> float:
        return math.fsum(self.reply_powers_watts)


def required_anchors(n_min_req: int, visible: int) -> int:
    return max(n_min_req - visible, 0)


def handled_requests(q_watts, params: GameParams, chan: ChannelParams):
    """Expected number of sensors inside the footprint of power ``q`` (real valued, capped at n)."""
    r = range_for_power(q_watts, chan)
    n = np.minimum(params.density_coeff * np.asarray(r) ** 3, params.n_sensors)
    return float(n) if np.ndim(n) == 0 else n


def _slope_factor(power, coeff: float, cap: float, chan: ChannelParams):
    r = np.asarray(range_for_power(power, chan))
    out = np.where(coeff * r ** 3 >= cap, 0.0, r * r / power_derivative(r, chan))
    return float(out) if out.ndim == 0 else out


def _handled_slope_factor(q, params: GameParams, chan: ChannelParams):
    return _slope_factor(q, params.density_coeff, params.n_sensors, chan)


def _check_power(x):
    if np.any(np.asarray(x) <= 0):
        raise ValueError("power must be positive")


def follower_utility(q_watts, obs: FollowerObservation, params: GameParams, chan: ChannelParams,
                     *, power_ratio_term: bool = True):
    """Anchor payoff: weighted remaining-energy ratio plus localization ability.

    ``power_ratio_term=False`` drops ``-sum(P)/q`` and leaves only the two
    request-handling terms.
    """
    _check_power(q_watts)
    if obs.n_arx < 1:
        raise NoRequests("follower utility needs at least one request")
    q = np.asarray(q_watts, dtype=float)
    e_tl = params.total_energy_anchor
    energy = params.w1_anchor * (e_tl - params.cost_per_unit_power_anchor * q) / e_tl
    n_hd = handled_requests(q, params, chan)
    ability = n_hd / obs.n_arx
    if obs.total_req > 0:
        ability = ability + n_hd / obs.total_req
    if power_ratio_term:
        ability = ability - obs.total_power / q
    u = energy + params.w2_anchor * ability
    return float(u) if u.ndim == 0 else u


def leader_utility(p_watts, obs: LeaderObservation, params: GameParams, chan: ChannelParams):
    """Sensor payoff: weighted remaining-energy ratio plus ability to find anchors."""
    _check_power(p_watts)
    if obs.n_srx < 1:
        raise ValueError("leader utility needs at least one anchor")
    p = np.asarray(p_watts, dtype=float)
    e_tl = params.total_energy_sensor
    energy = params.w1_sensor * (e_tl - params.cost_per_unit_power_sensor * p) / e_tl
    ability = np.asarray(obs.neighbor_count_fn(p), dtype=float) / obs.n_srx - obs.total_power / p
    u = energy + params.w2_sensor * ability
    return float(u) if u.ndim == 0 else u


# -- closed-form pieces --------------------------------------------------------

def follower_z(obs: FollowerObservation, params: GameParams) -> float:
    inv = 1.0 / obs.n_arx + (1.0 / obs.total_req if obs.total_req > 0 else 0.0)
    return 4.0 * params.w2_anchor * math.pi * params.n_sensors * params.total_energy_anchor \
        / params.region_side_m ** 3 * inv


def follower_denominator(q, obs: FollowerObservation, params: GameParams,
                         chan: ChannelParams) -> float:
    """``w1 C - Z (g^-1)^2 dg^-1/dQ``; the interior optimum exists only where this is positive."""
    return params.w1_anchor * params.cost_per_unit_power_anchor \
        - follower_z(obs, params) * _handled_slope_factor(q, params, chan)


def follower_weight_threshold(q: float, obs: FollowerObservation, params: GameParams,
                              chan: ChannelParams) -> float:
    """Smallest energy weight ``w1`` admitting an interior optimum at ``q``."""
    y = follower_z(obs, params) / params.w2_anchor * _handled_slope_factor(q, params, chan)
    return y / (y + params.cost_per_unit_power_anchor)


def follower_fixed_point_map(q: float, obs: FollowerObservation, params: GameParams,
                             chan: ChannelParams) -> float:
    """Right-hand side of the follower first-order condition solved for ``Q``.

    Returns ``nan`` when the denominator is non-positive.
    """
    den = follower_denominator(q, obs, params, chan)
    if den <= 0:
        return math.nan
    return math.sqrt(params.w2_anchor * params.total_energy_anchor * obs.total_power / den)


def leader_denominator(p, obs: LeaderObservation, params: GameParams,
                       chan: ChannelParams) -> float:
    fn = obs.neighbor_count_fn
    a_i = params.region_side_m ** 3 * params.cost_per_unit_power_sensor * obs.n_srx
    z_i = 4.0 * math.pi * fn.n * params.w2_sensor * params.total_energy_sensor
    return params.w1_sensor * a_i - z_i * fn.slope_factor(p)


def leader_weight_threshold(p: float, obs: LeaderObservation, params: GameParams,
                            chan: ChannelParams) -> float:
    fn = obs.neighbor_count_fn
    top = 4.0 * math.pi * fn.n * params.total_energy_sensor * fn.slope_factor(p)
    return top / (params.region_side_m ** 3 * params.cost_per_unit_power_sensor * obs.n_srx + top)


def leader_fixed_point_map(p: float, obs: LeaderObservation, params: GameParams,
                           chan: ChannelParams) -> float:
    den = leader_denominator(p, obs, params, chan)
    if den <= 0:
        return math.nan
    num = params.w2_sensor * params.region_side_m ** 3 * params.total_energy_sensor \
        * obs.n_srx * obs.total_power
    return math.sqrt(num / den)


# -- solvers ---------------------------------------------------------------------

@lru_cache(maxsize=256)
def power_grid(lo: float, hi: float, n: int = GRID_POINTS) -> np.ndarray:
    """Log-spaced power grid on ``[lo, hi]``; cached and read-only."""
    g = np.geomspace(lo, hi, n) if hi > lo else np.array([lo])
    g.setflags(write=False)
    return g


def _fixed_point(fmap, lo: float, hi: float) -> float | None:
    x = hi
    for _ in range(FIXED_POINT_ITERS):
        y = fmap(x)
        if not math.isfinite(y):
            return None
        y = min(max(y, lo), hi)
        nxt = (1.0 - DAMPING) * x + DAMPING * y
        if abs(nxt - x) <= FIXED_POINT_TOL * x:
            return nxt
        x = nxt
    return None


def _golden_max(f, a: float, b: float, tol: float = 1e-12) -> float:
    """Maximise ``f`` on ``[a, b]`` (log-power coordinates) by golden-section search."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol * max(1.0, abs(a)):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def grid_argmax(utility, lo: float, hi: float, n: int = GRID_POINTS, refine: bool = True) -> float:
    """Best power on a log grid, optionally polished by golden-section search.

    Ties resolve to the lowest power.
    """
    g = power_grid(lo, hi, n)
    u = np.asarray(utility(g), dtype=float)
    i = int(np.argmax(u))
    best_p, best_u = float(g[i]), float(u[i])
    if refine and len(g) > 1:
        a = math.log(g[max(i - 1, 0)])
        b = math.log(g[min(i + 1, len(g) - 1)])
        x = math.exp(_golden_max(lambda s: utility(math.exp(s)), a, b))
        x = min(max(x, lo), hi)
        ux = utility(x)
        if ux > best_u:
            best_p = x
    return best_p


def _pick(utility, candidates) -> float:
    """Highest-utility candidate, lowest power on ties."""
    best_p, best_u = None, -math.inf
    for p in sorted(candidates):
        u = utility(p)
        if u > best_u:
            best_p, best_u = p, u
    return best_p


def follower_best_response(obs: FollowerObservation, params: GameParams, chan: ChannelParams,
                           *, lower: float | None = None, upper: float | None = None,
                           power_ratio_term: bool = True) -> float:
    """Utility-maximising Reply power on ``[lower, upper]`` (default ``[floor, Q_max]``)."""
    if obs.n_arx < 1:
        raise NoRequests("no requests received")
    hi = params.q_max_watts if upper is None else upper
    lo = min(power_floor(chan) if lower is None else lower, hi)

    def util(q):
        return follower_utility(q, obs, params, chan, power_ratio_term=power_ratio_term)

    candidates = []
    if power_ratio_term:
        if obs.total_power == 0:
            candidates.append(lo)
        else:
            fp = _fixed_point(lambda q: follower_fixed_point_map(q, obs, params, chan), lo, hi)
            if fp is None:
                log.warning("follower weight feasibility fails; using grid argmax")
            else:
                candidates.append(fp)
    best = float(np.max(util(power_grid(lo, hi))))
    if not candidates or max(util(c) for c in candidates) < best:
        candidates.append(grid_argmax(util, lo, hi))
    return _pick(util, candidates)


def leader_best_response(obs: LeaderObservation, params: GameParams, chan: ChannelParams,
                         *, lower: float | None = None, upper: float | None = None) -> float:
    """Utility-maximising Request power on ``[lower, upper]`` (default ``[floor, P_max]``).

    Step neighbour counts are solved exactly segment by segment: between
    breakpoints the payoff is ``const - a p - b / p``, maximised at
    ``sqrt(b / a)``. Density counts use the fixed-point accelerator; any
    other callable falls back on the grid.
    """
    if obs.n_srx < 1:
        raise ValueError("no anchors known; use P_max")
    lo = power_floor(chan) if lower is None else lower
    hi = params.p_max_watts if upper is None else upper
    lo = min(lo, hi)

    def util(p):
        return leader_utility(p, obs, params, chan)

    fn = obs.neighbor_count_fn
    if isinstance(fn, StepNeighborCount):
        a = params.w1_sensor * params.cost_per_unit_power_sensor / params.total_energy_sensor
        b = params.w2_sensor * obs.total_power
        stationary = math.sqrt(b / a) if b > 0 else lo
        cands = {lo, hi, min(max(stationary, lo), hi)}
        cands.update(p for p in fn.breakpoints if lo <= p <= hi)
        return _pick(util, cands)

    candidates = []
    if isinstance(fn, DensityNeighborCount):
        if obs.total_power == 0:
            candidates.append(lo)
        else:
            fp = _fixed_point(lambda p: leader_fixed_point_map(p, obs, params, chan), lo, hi)
            if fp is None:
                log.warning("leader weight feasibility fails; using grid argmax")
            else:
                candidates.append(fp)
    best = float(np.max(util(power_grid(lo, hi))))
    if not candidates or max(util(c) for c in candidates) < best:
        candidates.append(grid_argmax(util, lo, hi))
    return _pick(util, candidates)


# -- equilibrium -------------------------------------------------------------------

@dataclass(frozen=True)
class SingleLeaderGame:
    """One sensor node facing ``n_followers`` anchors that all hear its Request."""

    n_followers: int
    n_req: int
    neighbor_count_fn: Callable = field(compare=False)
    params: GameParams = field(default_factory=GameParams)
    chan: ChannelParams = field(default_factory=ChannelParams)

    def leader_obs(self, anchor_powers) -> LeaderObservation:
        return LeaderObservation(tuple(anchor_powers), self.neighbor_count_fn)

    def follower_obs(self, sensor_power: float) -> FollowerObservation:
        return FollowerObservation((sensor_power,), (self.n_req,))


def solve_equilibrium(game: SingleLeaderGame, tol: float = 1e-11, max_iter: int = 200):
    """Best-response dynamics from ``P_max``; returns ``(sensor_power, anchor_powers)``."""
    p = game.params.p_max_watts
    qs = [game.params.q_max_watts] * game.n_followers
    for _ in range(max_iter):
        q = follower_best_response(game.follower_obs(p), game.params, game.chan)
        qs = [q] * game.n_followers
        p_new = leader_best_response(game.leader_obs(qs), game.params, game.chan)
        if abs(p_new - p) <= tol * p:
            p = p_new
            break
        p = p_new
    q = follower_best_response(game.follower_obs(p), game.params, game.chan)
    return p, [q] * game.n_followers


def verify_equilibrium(sensor_power: float, anchor_powers: Sequence[float], game: SingleLeaderGame,
                       epsilon: float = 1e-5, *, relative: bool = True,
                       grid_points: int = GRID_POINTS) -> bool:
    """True iff no player gains more than ``epsilon`` by a unilateral switch to any grid power."""
    params, chan = game.params, game.chan
    lo = power_floor(chan)

    def gains(util, current, hi):
        u0 = util(current)
        best = float(np.max(util(power_grid(lo, hi, grid_points))))
        tol = epsilon * abs(u0) if relative else epsilon
        return best - u0 <= tol

    lobs = game.leader_obs(anchor_powers)
    if not gains(lambda p: leader_utility(p, lobs, params, chan), sensor_power, params.p_max_watts):
        return False
    fobs = game.follower_obs(sensor_power)
    return all(gains(lambda q: follower_utility(q, fobs, params, chan), q_j, params.q_max_watts)
               for q_j in anchor_powers)
