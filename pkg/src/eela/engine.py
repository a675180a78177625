"""Discrete-event simulation of one localization run.

A broadcast reaches every node inside the hard-disk range of its transmit
power (positions taken at transmit time) after the flight delay. Receptions
whose ``[arrival, arrival + duration)`` intervals overlap at a receiver are
all lost, as is anything arriving while the receiver itself transmits.

Collisions are resolved when a reception is registered: every packet that
could overlap it has already been broadcast by then, because its own
arrival precedes the end of the one being checked.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .acoustics import range_for_power
from .game import FollowerObservation
from .mobility import Trajectory
from .protocol import (AnchorNbr, NodeState, PendingRequest, Policy, Reply, Request, Wakeup,
                       anchor_on_request, anchor_on_wakeup, anchor_phase1_wakeup,
                       anchor_phase2_nbrlist, packet_duration, sensor_choose_power,
                       sensor_on_anchor_message, sensor_on_reply)
from .scenario import Scenario

log = logging.getLogger(__name__)

# message kinds each role acts on; everything else is only interference
_RELEVANT = {
    "sensor": {"Wakeup", "AnchorNbr", "Reply"},
    "anchor": {"Wakeup", "Request"},
}


@dataclass
class EnergyLedger:
    tx_joules: float = 0.0
    rx_joules: float = 0.0
    idle_joules: float = 0.0
    sleep_joules: float = 0.0

    @property
    def total(self) -> float:
        return self.tx_joules + self.rx_joules + self.idle_joules + self.sleep_joules


@dataclass
class Transmission:
    time_s: float
    node_id: int
    kind: str
    power_watts: float
    duration_s: float


@dataclass
class Reception:
    start_s: float
    end_s: float
    receiver: int
    sender: int
    msg: object
    power_watts: float
    seq: int
    collided: bool = False
    outcome: str = ""


@dataclass
class RunResult:
    nodes: list
    ledgers: list
    true_positions: dict  # sensor id -> position at fix time
    end_time_s: float
    transmissions: list
    receptions: list
    trace: list = field(default_factory=list)

    @property
    def sensors(self) -> list:
        return [n for n in self.nodes if not n.is_anchor]

    @property
    def anchors(self) -> list:
        return [n for n in self.nodes if n.is_anchor]


def deploy(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    """Anchors uniform on the surface, sensors uniform in the cube; anchors come first."""
    d = scenario.region_side_m
    anchors = np.column_stack([rng.uniform(0, d, (scenario.n_anchors, 2)), np.zeros(scenario.n_anchors)])
    sensors = rng.uniform(0, d, (scenario.n_sensors, 3))
    return np.vstack([anchors, sensors])


def run_seeds(seed: int) -> tuple[int, int, int]:
    """Independent deployment, current-field and protocol seeds for one run."""
    s = np.random.SeedSequence(seed).generate_state(3, dtype=np.uint32)
    return int(s[0]), int(s[1]), int(s[2])


class Simulator:
    def __init__(self, scenario: Scenario, seed: int, *, trace: bool = False, positions=None):
        """``positions`` (anchors first, shape ``(n, 3)``) replaces the random deployment."""
        self.sc = scenario
        self.chan = scenario.channel_params
        self.params = scenario.game_params
        self.cfg = scenario.protocol_config()
        deploy_seed, field_seed, proto_seed = run_seeds(seed)
        self.positions0 = deploy(scenario, np.random.default_rng(deploy_seed))
        if positions is not None:
            positions = np.array(positions, dtype=float)
            if positions.shape != self.positions0.shape:
                raise ValueError(f"positions must have shape {self.positions0.shape}")
            self.positions0 = positions
        self.rng = np.random.default_rng(proto_seed)
        n_a, n = scenario.n_anchors, scenario.n_anchors + scenario.n_sensors
        self.anchor_mask = np.arange(n) < n_a
        self.traj = Trajectory(self.positions0, replace(scenario.current_field, seed=field_seed),
                               scenario.region_side_m, scenario.region_side_m, self.anchor_mask,
                               scenario.mobility_dt_s)
        self.nodes = [NodeState(i, "anchor") for i in range(n_a)]
        self.nodes += [NodeState(i, "sensor", depth_m=float(self.positions0[i, 2])) for i in range(n_a, n)]
        self.ledgers = [EnergyLedger() for _ in range(n)]
        self.queue: list = []
        self.seq = itertools.count()
        self.now = 0.0
        self.incoming: list[list[Reception]] = [[] for _ in range(n)]
        self.receptions: list[Reception] = []
        self.transmissions: list[Transmission] = []
        self.tx_busy_until = [0.0] * n
        self.tx_intervals: list[list[tuple[float, float]]] = [[] for _ in range(n)]
        self.true_at_fix: dict = {}
        self.unlocalized = scenario.n_sensors
        self.want_trace = trace

    # -- event queue ---------------------------------------------------------------

    def schedule(self, time_s: float, kind: str, payload=None) -> None:
        heapq.heappush(self.queue, (time_s, next(self.seq), kind, payload))

    def position(self, node_id: int, time_s: float) -> np.ndarray:
        return self.traj.at(time_s)[node_id]

    # -- channel -------------------------------------------------------------------

    def broadcast(self, sender: int, msg, power_watts: float) -> int:
        """Transmit now; returns the number of receptions scheduled."""
        now = self.now
        dur = packet_duration(msg)
        self.ledgers[sender].tx_joules += power_watts * dur
        self.transmissions.append(Transmission(now, sender, msg.kind, power_watts, dur))
        self.tx_intervals[sender].append((now, now + dur))
        self.tx_busy_until[sender] = now + dur
        # half-duplex: anything still arriving at the sender is lost
        for rec in self.incoming[sender]:
            if rec.end_s > now and rec.start_s < now + dur:
                rec.collided = True
        if power_watts <= 0:
            return 0
        reach = range_for_power(power_watts, self.chan)
        pos = self.traj.at(now)
        dist = np.linalg.norm(pos - pos[sender], axis=1)
        dist[sender] = np.inf
        hits = np.flatnonzero(dist <= reach)
        c = self.chan.sound_speed_mps
        for r in hits:
            r = int(r)
            start = now + float(dist[r]) / c
            self._register(Reception(start, start + dur, r, sender, msg, power_watts, next(self.seq)))
        return len(hits)

    def _register(self, rec: Reception) -> None:
        r = rec.receiver
        live = [o for o in self.incoming[r] if o.end_s > self.now]
        for o in live:
            if o.start_s < rec.end_s and rec.start_s < o.end_s:
                o.collided = True
                rec.collided = True
        # own transmissions already on the air or scheduled before this arrival ends
        for ts, te in self.tx_intervals[r][-2:]:
            if ts < rec.end_s and rec.start_s < te:
                rec.collided = True
        live.append(rec)
        self.incoming[r] = live
        self.receptions.append(rec)
        if rec.msg.kind in _RELEVANT[self.nodes[r].role]:
            heapq.heappush(self.queue, (rec.end_s, rec.seq, "rx", rec))

    def collision_check(self, rec: Reception) -> str:
        node = self.nodes[rec.receiver]
        if rec.collided:
            return "collided"
        if node.localized and node.localized_at_s < rec.end_s:
            return "asleep"
        return "delivered"

    # -- protocol glue ---------------------------------------------------------------

    def start(self) -> None:
        sc = self.sc
        # each set-up phase: a jittered send, then enough time for any packet to land
        w = sc.wakeup_jitter_s + sc.collection_window_s
        for a in range(sc.n_anchors):
            self.schedule(float(self.rng.uniform(0, sc.wakeup_jitter_s)), "wakeup", a)
        phase3 = w
        if self.cfg.policy.uses_anchor_nbr:
            for a in range(sc.n_anchors):
                self.schedule(w + float(self.rng.uniform(0, sc.wakeup_jitter_s)), "anchor_nbr", a)
            phase3 = 2 * w
        for s in range(sc.n_anchors, len(self.nodes)):
            self.schedule(phase3 + float(self.rng.uniform(0, sc.request_jitter_s)), "request", s)

    def on_wakeup(self, a: int) -> None:
        msg, q = anchor_phase1_wakeup(self.nodes[a], self.now, tuple(self.position(a, self.now)),
                                      self.cfg, self.params)
        self.broadcast(a, msg, q)

    def on_anchor_nbr(self, a: int) -> None:
        msg, q = anchor_phase2_nbrlist(self.nodes[a], self.now, tuple(self.position(a, self.now)))
        self.broadcast(a, msg, q)

    def on_request(self, s: int) -> None:
        node = self.nodes[s]
        if node.localized:
            return
        p, n_req = sensor_choose_power(node, self.params, self.chan, self.cfg, self.now)
        node.n_req = n_req
        if node.first_request_s is None:
            node.first_request_s = self.now
        self.broadcast(s, Request(s, self.now, n_req, p), p)
        self.schedule(self.now + self.sc.retry_timeout_s, "retry", s)

    def on_retry(self, s: int) -> None:
        node = self.nodes[s]
        if node.localized or node.retries >= self.sc.max_retries:
            return
        node.retries += 1
        self.schedule(self.now + float(self.rng.uniform(0, self.sc.retry_jitter_s)), "request", s)

    def on_window_close(self, a: int) -> None:
        node = self.nodes[a]
        pending, node.pending, node.window_open = node.pending, [], False
        obs = FollowerObservation(tuple(r.p_watts for r in pending), tuple(r.n_req for r in pending))
        q = anchor_on_request(node, obs, self.params, self.chan, self.cfg,
                              max(r.distance_m for r in pending))
        if q is None:
            return
        delay = float(self.rng.uniform(0, self.sc.reply_backoff_s))
        self.schedule(self.now + delay, "reply", (a, q))

    def on_reply(self, a: int, q: float) -> None:
        self.nodes[a].q_watts = q
        self.broadcast(a, Reply(a, self.now, tuple(self.position(a, self.now)), q), q)

    def on_rx(self, rec: Reception) -> None:
        rec.outcome = self.collision_check(rec)
        if rec.outcome != "delivered":
            return
        node, msg = self.nodes[rec.receiver], rec.msg
        if node.is_anchor:
            if isinstance(msg, Wakeup):
                anchor_on_wakeup(node, msg)
            elif isinstance(msg, Request):
                dist = (self.now - packet_duration(msg) - msg.timestamp_s) * self.chan.sound_speed_mps
                node.pending.append(PendingRequest(msg.sender_id, msg.p_watts, msg.n_req, dist))
                if not node.window_open:
                    node.window_open = True
                    self.schedule(self.now + self.sc.collection_window_s, "window", node.node_id)
            return
        # ToA is measured on the leading edge of the packet
        start = rec.start_s
        sensor_on_anchor_message(node, msg, start, self.chan, self.cfg)
        if isinstance(msg, Reply) and sensor_on_reply(node, msg, start, self.chan, self.params.n_min_req):
            node.localized_at_s = self.now
            self.true_at_fix[node.node_id] = tuple(float(v) for v in self.position(node.node_id, self.now))
            self.unlocalized -= 1

    def run(self) -> RunResult:
        self.start()
        handlers = {
            "wakeup": self.on_wakeup, "anchor_nbr": self.on_anchor_nbr, "request": self.on_request,
            "retry": self.on_retry, "window": self.on_window_close, "rx": self.on_rx,
            "reply": lambda p: self.on_reply(*p),
        }
        end = self.sc.horizon_s
        while self.queue:
            t, _, kind, payload = self.queue[0]
            if t > self.sc.horizon_s:
                break
            heapq.heappop(self.queue)
            self.now = t
            handlers[kind](payload)
            if self.unlocalized == 0:
                end = t
                break
        self.now = end
        self._settle_energy(end)
        result = RunResult(self.nodes, self.ledgers, self.true_at_fix, end, self.transmissions, self.receptions)
        if self.want_trace:
            result.trace = build_trace(result)
        return result

    def _settle_energy(self, end: float) -> None:
        sc = self.sc
        rx_time = [0.0] * len(self.nodes)
        awake_ends = [n.localized_at_s if n.localized else end for n in self.nodes]
        for rec in self.receptions:
            if not rec.collided and rec.end_s <= awake_ends[rec.receiver]:
                rx_time[rec.receiver] += rec.end_s - rec.start_s
        for node, ledger in zip(self.nodes, self.ledgers):
            awake_end = awake_ends[node.node_id]
            tx_time = sum(max(0.0, min(te, awake_end) - ts) for ts, te in self.tx_intervals[node.node_id])
            rx = rx_time[node.node_id]
            ledger.rx_joules = sc.idle_power_w * rx
            ledger.idle_joules = sc.idle_power_w * max(awake_end - tx_time - rx, 0.0)
            ledger.sleep_joules = sc.sleep_power_w * max(end - awake_end, 0.0)


def build_trace(result: RunResult) -> list[tuple]:
    """Trace rows ``(time_s, kind, node_id, peer_id, power_watts, outcome)`` in time order."""
    rows = []
    for i, t in enumerate(result.transmissions):
        rows.append((t.time_s, 0, i, t.kind, t.node_id, -1, t.power_watts, "sent"))
    for rec in result.receptions:
        if rec.end_s > result.end_time_s:
            continue
        outcome = rec.outcome or ("collided" if rec.collided else "delivered")
        rows.append((rec.end_s, 1, rec.seq, rec.msg.kind, rec.receiver, rec.sender, rec.power_watts, outcome))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return [(r[0], r[3], r[4], r[5], r[6], r[7]) for r in rows]


def write_trace(rows, path) -> None:
    with open(path, "w") as fh:
        fh.write("time_s\tkind\tnode_id\tpeer_id\tpower_watts\toutcome\n")
        for t, kind, node, peer, power, outcome in rows:
            fh.write(f"{t:.9f}\t{kind}\t{node}\t{peer}\t{power:.9g}\t{outcome}\n")


def run(scenario: Scenario, seed: int, *, trace: bool = False) -> RunResult:
    return Simulator(scenario, seed, trace=trace).run()
