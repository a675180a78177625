"""Node behaviour for the four-phase localization exchange.

Phase 1: anchors broadcast ``Wakeup``. Phase 2: anchors broadcast the
anchor neighbours they heard (``AnchorNbr``), which lets sensors learn
two-hop anchors. Phase 3: each sensor picks a ``Request`` power (leader
move). Phase 4: anchors answer with a ``Reply`` at their best-response
power (follower move). The functions here make the per-node decisions;
timing, the channel and energy bookkeeping live in :mod:`eela.engine`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .acoustics import ChannelParams, power_for_range
from .game import (FollowerObservation, GameParams, LeaderObservation, StepNeighborCount,
                   follower_best_response, leader_best_response, required_anchors)
from .localization import (LocalizationError, RangeObservation, toa_distance, trilaterate)

DATA_RATE_BPS = 500.0
WAKEUP_BYTES = 16
ANCHOR_NBR_BYTES = 16
ANCHOR_NBR_ENTRY_BYTES = 12
REQUEST_BYTES = 20
REPLY_BYTES = 28

Position = tuple[float, float, float]


class Policy(str, Enum):
    EELA = "EELA"
    OLTC = "OLTC"
    EELA_MIN = "EELA-Min"
    EELA_MAX = "EELA-Max"

    @classmethod
    def parse(cls, text: str) -> "Policy":
        for p in cls:
            if p.value.lower() == text.strip().lower():
                return p
        raise ValueError(f"unknown policy {text!r}; expected one of {[p.value for p in cls]}")

    @property
    def fixed_power(self) -> bool:
        return self in (Policy.EELA_MIN, Policy.EELA_MAX)

    @property
    def uses_anchor_nbr(self) -> bool:
        return self is not Policy.OLTC


class HopClass(str, Enum):
    ONE_HOP = "one-hop"
    TWO_HOP = "two-hop"


# -- messages ----------------------------------------------------------------------

@dataclass(frozen=True)
class Wakeup:
    sender_id: int
    timestamp_s: float
    # position and power are carried so receivers can estimate d12 and sum Q
    position: Position
    q_watts: float
    kind = "Wakeup"

    @property
    def size_bytes(self) -> int:
        return WAKEUP_BYTES


@dataclass(frozen=True)
class AnchorNbrEntry:
    anchor_id: int
    position: Position
    q_watts: float


@dataclass(frozen=True)
class AnchorNbr:
    sender_id: int
    timestamp_s: float
    position: Position
    q_watts: float
    neighbor_anchor_entries: tuple[AnchorNbrEntry, ...] = ()
    kind = "AnchorNbr"

    @property
    def size_bytes(self) -> int:
        return ANCHOR_NBR_BYTES + ANCHOR_NBR_ENTRY_BYTES * len(self.neighbor_anchor_entries)


@dataclass(frozen=True)
class Request:
    sender_id: int
    timestamp_s: float
    n_req: int
    p_watts: float
    kind = "Request"

    @property
    def size_bytes(self) -> int:
        return REQUEST_BYTES


@dataclass(frozen=True)
class Reply:
    sender_id: int
    timestamp_s: float
    location: Position
    q_watts: float
    kind = "Reply"

    @property
    def size_bytes(self) -> int:
        return REPLY_BYTES


Message = Wakeup | AnchorNbr | Request | Reply


def packet_duration(msg) -> float:
    return msg.size_bytes * 8.0 / DATA_RATE_BPS


# -- node state --------------------------------------------------------------------

@dataclass
class NeighborEntry:
    anchor_id: int
    hop_class: HopClass
    last_position: Position
    last_q_watts: float
    rx_time_s: float
    via_anchor: Optional[int] = None
    # ToA estimate for one-hop entries
    distance_m: Optional[float] = None

    def __post_init__(self):
        if (self.hop_class is HopClass.TWO_HOP) != (self.via_anchor is not None):
            raise ValueError("two-hop entries need a via anchor, one-hop entries must not have one")


@dataclass
class PendingRequest:
    sensor_id: int
    p_watts: float
    n_req: int
    distance_m: float


@dataclass
class ProtocolConfig:
    """Knobs the four-phase exchange needs beyond the game and channel parameters."""

    policy: Policy = Policy.EELA
    q_ini_watts: float = 100.0
    fixed_min_watts: float = 1.0
    reach_margin_m: float = 100.0
    # worst-case closing speed between two drifting nodes (2 x peak current)
    drift_mps: float = 0.0
    twohop_power_rule: str = "range"

    def __post_init__(self):
        if self.twohop_power_rule not in ("range", "sum"):
            raise ValueError("twohop_power_rule must be 'range' or 'sum'")


@dataclass
class NodeState:
    node_id: int
    role: str  # "sensor" or "anchor"
    depth_m: float = 0.0
    neighbors: dict = field(default_factory=dict)  # anchor_id -> NeighborEntry
    # anchor side
    anchor_neighbors: dict = field(default_factory=dict)  # anchor_id -> AnchorNbrEntry
    pending: list = field(default_factory=list)
    window_open: bool = False
    q_watts: float = 0.0
    # sensor side
    n_req: int = 0
    retries: int = 0
    first_request_s: Optional[float] = None
    beacons: dict = field(default_factory=dict)  # anchor_id -> RangeObservation
    localized_at_s: Optional[float] = None
    estimate: Optional[Position] = None
    true_position_at_fix: Optional[Position] = None

    @property
    def is_anchor(self) -> bool:
        return self.role == "anchor"

    @property
    def localized(self) -> bool:
        return self.localized_at_s is not None

    def one_hop(self) -> list[NeighborEntry]:
        return [e for e in self.neighbors.values() if e.hop_class is HopClass.ONE_HOP]

    def two_hop(self) -> list[NeighborEntry]:
        return [e for e in self.neighbors.values() if e.hop_class is HopClass.TWO_HOP]


# -- anchors -----------------------------------------------------------------------

def anchor_initial_power(cfg: ProtocolConfig, params: GameParams) -> float:
    if cfg.policy is Policy.EELA_MIN:
        return cfg.fixed_min_watts
    if cfg.policy is Policy.EELA_MAX:
        return params.q_max_watts
    return min(cfg.q_ini_watts, params.q_max_watts)


def anchor_phase1_wakeup(anchor: NodeState, now_s: float, position: Position,
                         cfg: ProtocolConfig, params: GameParams) -> tuple[Wakeup, float]:
    q = anchor_initial_power(cfg, params)
    anchor.q_watts = q
    return Wakeup(anchor.node_id, now_s, tuple(position), q), q


def anchor_on_wakeup(anchor: NodeState, msg) -> None:
    """Record a heard anchor in this anchor's neighbour list."""
    anchor.anchor_neighbors[msg.sender_id] = AnchorNbrEntry(msg.sender_id, msg.position, msg.q_watts)


def anchor_phase2_nbrlist(anchor: NodeState, now_s: float, position: Position) -> tuple[AnchorNbr, float]:
    entries = tuple(anchor.anchor_neighbors[k] for k in sorted(anchor.anchor_neighbors))
    return AnchorNbr(anchor.node_id, now_s, tuple(position), anchor.q_watts, entries), anchor.q_watts


def anchor_on_request(anchor: NodeState, pending: FollowerObservation, params: GameParams,
                      chan: ChannelParams, cfg: ProtocolConfig, farthest_m: float) -> Optional[float]:
    """Reply power for one collection window, or ``None`` to stay silent.

    Adaptive policies play the follower best response, restricted to powers
    whose footprint reaches the farthest requester heard in the window.
    """
    if pending.n_arx == 0:
        return None
    if cfg.policy.fixed_power:
        return anchor_initial_power(cfg, params)
    lower = min(power_for_range(farthest_m + cfg.reach_margin_m, chan), params.q_max_watts)
    return follower_best_response(pending, params, chan, lower=lower)


# -- sensors -----------------------------------------------------------------------

def sensor_on_anchor_message(sensor: NodeState, msg, rx_time_s: float, chan: ChannelParams,
                             cfg: ProtocolConfig) -> None:
    """Update the neighbour list from a directly received Wakeup, AnchorNbr or Reply."""
    position = msg.location if isinstance(msg, Reply) else msg.position
    dist = toa_distance(msg.timestamp_s, rx_time_s, chan)
    sensor.neighbors[msg.sender_id] = NeighborEntry(
        msg.sender_id, HopClass.ONE_HOP, tuple(position), msg.q_watts, rx_time_s, distance_m=dist)
    if not isinstance(msg, AnchorNbr):
        return
    relay = sensor.neighbors[msg.sender_id]
    for entry in msg.neighbor_anchor_entries:
        if entry.anchor_id == sensor.node_id:
            continue
        known = sensor.neighbors.get(entry.anchor_id)
        if known is not None and known.hop_class is HopClass.ONE_HOP:
            continue  # one-hop dominates
        cand = NeighborEntry(entry.anchor_id, HopClass.TWO_HOP, tuple(entry.position), entry.q_watts,
                             rx_time_s, via_anchor=msg.sender_id)
        if known is None or (two_hop_power(sensor, relay, cand, chan, cfg)
                             < two_hop_power(sensor, sensor.neighbors[known.via_anchor], known, chan, cfg)):
            sensor.neighbors[entry.anchor_id] = cand


def _allowance(entry: NeighborEntry, cfg: ProtocolConfig | None, now_s: float | None) -> float:
    if cfg is None:
        return 0.0
    age = 0.0 if now_s is None else max(now_s - entry.rx_time_s, 0.0)
    return cfg.reach_margin_m + cfg.drift_mps * age


def two_hop_power(sensor: NodeState, one_hop: NeighborEntry, two_hop: NeighborEntry,
                  chan: ChannelParams, cfg: ProtocolConfig | None = None,
                  now_s: float | None = None) -> float:
    """Request power that reaches a two-hop anchor through the triangle inequality.

    ``range`` rule: ``P(d31 + d12)``, sound because ``d32 <= d31 + d12``.
    ``sum`` rule: ``P(d31) + P(d12)``, the power sum, kept for comparison.
    With a config, both legs get the reach margin plus drift since the
    information was heard.
    """
    if two_hop.via_anchor != one_hop.anchor_id:
        raise ValueError("two-hop entry is not relayed by the given one-hop anchor")
    if one_hop.distance_m is None:
        raise ValueError("one-hop entry carries no distance estimate")
    rule = "range" if cfg is None else cfg.twohop_power_rule
    d12 = math.dist(one_hop.last_position, two_hop.last_position)
    if cfg is not None:
        d12 += cfg.drift_mps * (0.0 if now_s is None else max(now_s - two_hop.rx_time_s, 0.0))
    d31 = one_hop.distance_m + _allowance(one_hop, cfg, now_s)
    if rule == "sum":
        return power_for_range(d31, chan) + power_for_range(d12, chan)
    return power_for_range(d31 + d12, chan)


def _one_hop_reach(entry: NeighborEntry, chan: ChannelParams, cfg: ProtocolConfig, now_s) -> float:
    return power_for_range(entry.distance_m + _allowance(entry, cfg, now_s), chan)


def sensor_choose_power(sensor: NodeState, params: GameParams, chan: ChannelParams,
                        cfg: ProtocolConfig, now_s: float | None = None) -> tuple[float, int]:
    """Request power and ``n_req`` for the next broadcast.

    With enough one-hop anchors only those are considered; with too few
    known anchors overall the sensor shouts at ``P_max``; otherwise two-hop
    anchors enter the candidate set through :func:`two_hop_power`. Within a
    set the leader utility is maximised over powers reaching at least
    ``n_min`` of its anchors.
    """
    one, two = sensor.one_hop(), sensor.two_hop()
    n_req = required_anchors(params.n_min_req, len(one) + len(two))
    if cfg.policy is Policy.EELA_MIN:
        return cfg.fixed_min_watts, n_req
    if cfg.policy is Policy.EELA_MAX:
        return params.p_max_watts, n_req
    if cfg.policy is Policy.OLTC:
        return params.p_max_watts, required_anchors(params.n_min_req, len(one))

    if len(one) >= params.n_min_req:
        reach = [_one_hop_reach(e, chan, cfg, now_s) for e in one]
    elif len(one) + len(two) < params.n_min_req:
        return params.p_max_watts, n_req
    else:
        reach = [_one_hop_reach(e, chan, cfg, now_s) for e in one]
        reach += [two_hop_power(sensor, sensor.neighbors[e.via_anchor], e, chan, cfg, now_s) for e in two]
    need = sorted(reach)[params.n_min_req - 1]
    lower = min(need, params.p_max_watts)
    obs = LeaderObservation(tuple(e.last_q_watts for e in one), StepNeighborCount(reach))
    p = leader_best_response(obs, params, chan, lower=lower, upper=params.p_max_watts)
    return min(p, params.p_max_watts), n_req


def sensor_on_reply(sensor: NodeState, reply: Reply, rx_time_s: float, chan: ChannelParams,
                    n_min_req: int) -> bool:
    """Store a location beacon and try to localize; returns True on a new fix."""
    if sensor.localized or sensor.first_request_s is None:
        return False
    dist = toa_distance(reply.timestamp_s, rx_time_s, chan)
    # duplicates: keep the most recent beacon per anchor
    sensor.beacons[reply.sender_id] = RangeObservation(reply.sender_id, tuple(reply.location), dist, rx_time_s)
    if len(sensor.beacons) < n_min_req:
        return False
    obs = [sensor.beacons[k] for k in sorted(sensor.beacons)]
    try:
        sensor.estimate = trilaterate(obs, sensor.depth_m)
    except LocalizationError:
        return False
    sensor.localized_at_s = rx_time_s
    return True
