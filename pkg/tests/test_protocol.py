import math

import numpy as np
import pytest

from eela.acoustics import power_for_range, range_for_power
from eela.game import FollowerObservation, GameParams, LeaderObservation, StepNeighborCount, leader_utility
from eela.protocol import (AnchorNbr, AnchorNbrEntry, HopClass, NeighborEntry, NodeState, Policy,
                           ProtocolConfig, Reply, Request, Wakeup, anchor_on_request, anchor_on_wakeup,
                           anchor_phase1_wakeup, anchor_phase2_nbrlist, packet_duration,
                           sensor_choose_power, sensor_on_anchor_message, sensor_on_reply, two_hop_power)

C = 1500.0


def one_hop(aid, pos, dist, q=10.0, t=0.0):
    return NeighborEntry(aid, HopClass.ONE_HOP, pos, q, t, distance_m=dist)


def two_hop(aid, pos, via, q=10.0, t=0.0):
    return NeighborEntry(aid, HopClass.TWO_HOP, pos, q, t, via_anchor=via)


def sensor_with(*entries, node_id=10, depth=500.0):
    s = NodeState(node_id, "sensor", depth_m=depth)
    for e in entries:
        s.neighbors[e.anchor_id] = e
    return s


def test_packet_sizes_and_airtime():
    assert packet_duration(Request(1, 0.0, 1, 1.0)) == pytest.approx(0.32)
    assert Wakeup(0, 0.0, (0, 0, 0), 1.0).size_bytes == 16
    assert Reply(0, 0.0, (0, 0, 0), 1.0).size_bytes == 28
    nbr = AnchorNbr(0, 0.0, (0, 0, 0), 1.0, (AnchorNbrEntry(1, (1, 1, 0), 1.0),) * 2)
    assert nbr.size_bytes == 16 + 2 * 12


def test_policy_parse():
    assert Policy.parse("eela-max") is Policy.EELA_MAX
    assert Policy.parse("OLTC") is Policy.OLTC
    with pytest.raises(ValueError):
        Policy.parse("greedy")
    assert Policy.EELA_MIN.fixed_power and not Policy.EELA.fixed_power
    assert not Policy.OLTC.uses_anchor_nbr


def test_neighbor_entry_invariant():
    with pytest.raises(ValueError):
        NeighborEntry(1, HopClass.TWO_HOP, (0, 0, 0), 1.0, 0.0)
    with pytest.raises(ValueError):
        NeighborEntry(1, HopClass.ONE_HOP, (0, 0, 0), 1.0, 0.0, via_anchor=2)


def test_wakeup_uses_initial_power():
    a = NodeState(0, "anchor")
    cfg = ProtocolConfig(q_ini_watts=42.0)
    msg, q = anchor_phase1_wakeup(a, 1.5, (1.0, 2.0, 0.0), cfg, GameParams())
    assert q == 42.0 and a.q_watts == 42.0
    assert (msg.sender_id, msg.timestamp_s, msg.q_watts) == (0, 1.5, 42.0)
    msg, q = anchor_phase1_wakeup(a, 0.0, (0, 0, 0), ProtocolConfig(Policy.EELA_MIN, fixed_min_watts=3.0),
                                  GameParams())
    assert q == 3.0
    _, q = anchor_phase1_wakeup(a, 0.0, (0, 0, 0), ProtocolConfig(Policy.EELA_MAX), GameParams())
    assert q == 100.0


def test_anchor_neighbor_lists_are_symmetric():
    a, b = NodeState(0, "anchor"), NodeState(1, "anchor")
    cfg, params = ProtocolConfig(), GameParams()
    wa, _ = anchor_phase1_wakeup(a, 0.0, (0.0, 0.0, 0.0), cfg, params)
    wb, _ = anchor_phase1_wakeup(b, 0.0, (500.0, 0.0, 0.0), cfg, params)
    anchor_on_wakeup(b, wa)
    anchor_on_wakeup(a, wb)
    assert set(a.anchor_neighbors) == {1} and set(b.anchor_neighbors) == {0}
    msg, q = anchor_phase2_nbrlist(a, 5.0, (0.0, 0.0, 0.0))
    assert msg.neighbor_anchor_entries == (AnchorNbrEntry(1, (500.0, 0.0, 0.0), 100.0),)
    lonely = NodeState(2, "anchor")
    msg, _ = anchor_phase2_nbrlist(lonely, 5.0, (9.0, 9.0, 0.0))
    assert msg.neighbor_anchor_entries == ()


def test_sensor_learns_one_and_two_hop(chan):
    s = NodeState(10, "sensor", depth_m=100.0)
    cfg = ProtocolConfig()
    nbr = AnchorNbr(0, 1.0, (0.0, 0.0, 0.0), 5.0, (AnchorNbrEntry(1, (900.0, 0.0, 0.0), 7.0),))
    sensor_on_anchor_message(s, nbr, 1.5, chan, cfg)
    assert s.neighbors[0].hop_class is HopClass.ONE_HOP
    assert s.neighbors[0].distance_m == pytest.approx(750.0)
    assert s.neighbors[1].hop_class is HopClass.TWO_HOP and s.neighbors[1].via_anchor == 0
    # hearing anchor 1 directly promotes it
    sensor_on_anchor_message(s, Wakeup(1, 2.0, (900.0, 0.0, 0.0), 7.0), 2.4, chan, cfg)
    assert s.neighbors[1].hop_class is HopClass.ONE_HOP
    # a later relay mention does not demote it
    sensor_on_anchor_message(s, nbr, 3.5, chan, cfg)
    assert s.neighbors[1].hop_class is HopClass.ONE_HOP


def test_two_hop_keeps_cheaper_relay(chan):
    s = NodeState(10, "sensor")
    cfg = ProtocolConfig()
    far = AnchorNbr(0, 0.0, (0.0, 0.0, 0.0), 5.0, (AnchorNbrEntry(2, (2000.0, 0.0, 0.0), 7.0),))
    near = AnchorNbr(1, 0.0, (1500.0, 0.0, 0.0), 5.0, (AnchorNbrEntry(2, (2000.0, 0.0, 0.0), 7.0),))
    sensor_on_anchor_message(s, far, 1.0, chan, cfg)
    sensor_on_anchor_message(s, near, 0.5, chan, cfg)
    assert s.neighbors[2].via_anchor == 1


def test_two_hop_power_range_rule(chan):
    e1 = one_hop(1, (0.0, 0.0, 0.0), 1000.0)
    e2 = two_hop(2, (500.0, 0.0, 0.0), via=1)
    s = sensor_with(e1, e2)
    assert two_hop_power(s, e1, e2, chan) == pytest.approx(power_for_range(1500.0, chan))
    same = two_hop(3, (0.0, 0.0, 0.0), via=1)
    assert two_hop_power(s, e1, same, chan) == pytest.approx(power_for_range(1000.0, chan))


def test_two_hop_power_sum_rule_and_margin(chan):
    e1 = one_hop(1, (0.0, 0.0, 0.0), 1000.0, t=0.0)
    e2 = two_hop(2, (500.0, 0.0, 0.0), via=1, t=0.0)
    s = sensor_with(e1, e2)
    cfg = ProtocolConfig(twohop_power_rule="sum", reach_margin_m=0.0)
    assert two_hop_power(s, e1, e2, chan, cfg) == pytest.approx(
        power_for_range(1000.0, chan) + power_for_range(500.0, chan))
    cfg = ProtocolConfig(reach_margin_m=100.0, drift_mps=4.0)
    # margin on d31, plus 4 m/s of drift over 10 s on each leg
    assert two_hop_power(s, e1, e2, chan, cfg, now_s=10.0) == pytest.approx(power_for_range(1680.0, chan))


def test_two_hop_power_rejects_wrong_relay(chan):
    e1 = one_hop(1, (0.0, 0.0, 0.0), 1000.0)
    e2 = two_hop(2, (500.0, 0.0, 0.0), via=7)
    with pytest.raises(ValueError):
        two_hop_power(sensor_with(e1, e2), e1, e2, chan)


def test_choose_power_three_one_hop(chan):
    entries = [one_hop(i, (800.0 * i, 0.0, 0.0), d, q=1.0) for i, d in enumerate((600.0, 900.0, 1400.0))]
    s = sensor_with(*entries)
    cfg = ProtocolConfig(reach_margin_m=0.0)
    params = GameParams(total_energy_sensor=0.001)
    p, n_req = sensor_choose_power(s, params, chan, cfg)
    assert n_req == 0
    need = power_for_range(1400.0, chan)
    assert p >= need * (1 - 1e-12)
    assert p <= 100.0
    # grid oracle over the admissible interval
    obs = LeaderObservation((1.0, 1.0, 1.0), StepNeighborCount([power_for_range(e.distance_m, chan)
                                                                for e in entries]))
    g = np.geomspace(need, 100.0, 20_000)
    assert leader_utility(p, obs, params, chan) >= leader_utility(g, obs, params, chan).max() - 1e-9


def test_choose_power_too_few_anchors_shouts(chan):
    s = sensor_with(one_hop(1, (0.0, 0.0, 0.0), 700.0), two_hop(2, (300.0, 0.0, 0.0), via=1))
    p, n_req = sensor_choose_power(s, GameParams(), chan, ProtocolConfig())
    assert p == 100.0 and n_req == 1


def test_choose_power_with_two_hop_escalation(chan):
    e = [one_hop(1, (0.0, 0.0, 0.0), 600.0, q=2.0), one_hop(2, (1000.0, 0.0, 0.0), 800.0, q=2.0),
         two_hop(3, (0.0, 1500.0, 0.0), via=1), two_hop(4, (1000.0, 1200.0, 0.0), via=2)]
    s = sensor_with(*e)
    cfg = ProtocolConfig(reach_margin_m=0.0)
    params = GameParams(total_energy_sensor=0.001)
    p, n_req = sensor_choose_power(s, params, chan, cfg)
    assert n_req == 0
    reach = [power_for_range(600.0, chan), power_for_range(800.0, chan),
             power_for_range(2100.0, chan), power_for_range(800.0 + math.dist((1000, 0), (1000, 1200)), chan)]
    third = sorted(reach)[2]
    assert third <= p <= 100.0
    obs = LeaderObservation((2.0, 2.0), StepNeighborCount(reach))
    g = np.concatenate([np.geomspace(third, 100.0, 20_000), [r for r in reach if r >= third]])
    assert leader_utility(p, obs, params, chan) >= leader_utility(g, obs, params, chan).max() - 1e-9


@pytest.mark.parametrize("policy, expected", [(Policy.OLTC, 100.0), (Policy.EELA_MAX, 100.0),
                                              (Policy.EELA_MIN, 2.5)])
def test_choose_power_baselines(chan, policy, expected):
    s = sensor_with(one_hop(1, (0.0, 0.0, 0.0), 500.0), two_hop(2, (200.0, 0.0, 0.0), via=1))
    p, n_req = sensor_choose_power(s, GameParams(), chan, ProtocolConfig(policy, fixed_min_watts=2.5))
    assert p == expected
    # OLTC ignores two-hop knowledge when counting what it still needs
    assert n_req == (2 if policy is Policy.OLTC else 1)


def test_anchor_reply_decisions(chan):
    a = NodeState(0, "anchor")
    params = GameParams(total_energy_anchor=0.01)
    cfg = ProtocolConfig(reach_margin_m=100.0)
    assert anchor_on_request(a, FollowerObservation((), ()), params, chan, cfg, 0.0) is None
    obs = FollowerObservation((0.5, 1.0), (2, 1))
    q = anchor_on_request(a, obs, params, chan, cfg, farthest_m=1500.0)
    assert range_for_power(q, chan) >= 1600.0 - 1e-6
    fixed = anchor_on_request(a, obs, params, chan, ProtocolConfig(Policy.EELA_MIN, fixed_min_watts=3.0), 1500.0)
    assert fixed == 3.0


def _replies(n, truth, chan, t0=10.0):
    anchors = [(0.0, 0.0, 0.0), (2000.0, 0.0, 0.0), (0.0, 2000.0, 0.0), (2000.0, 2000.0, 0.0)]
    out = []
    for i in range(n):
        d = math.dist(anchors[i], truth)
        out.append((Reply(i, t0, anchors[i], 5.0), t0 + d / C))
    return out


def test_three_replies_localize(chan):
    truth = (700.0, 900.0, 400.0)
    s = NodeState(10, "sensor", depth_m=400.0)
    s.first_request_s = 9.0
    results = [sensor_on_reply(s, msg, t, chan, 3) for msg, t in _replies(3, truth, chan)]
    assert results == [False, False, True]
    assert s.estimate == pytest.approx(truth, abs=1e-6)


def test_reply_after_fix_is_ignored(chan):
    truth = (700.0, 900.0, 400.0)
    s = NodeState(10, "sensor", depth_m=400.0)
    s.first_request_s = 9.0
    reps = _replies(4, truth, chan)
    for msg, t in reps[:3]:
        sensor_on_reply(s, msg, t, chan, 3)
    s.localized_at_s = reps[2][1]
    before = s.estimate
    assert sensor_on_reply(s, *reps[3], chan, 3) is False
    assert s.estimate == before and 3 not in s.beacons


def test_reply_before_request_is_ignored(chan):
    s = NodeState(10, "sensor", depth_m=400.0)
    msg, t = _replies(1, (1.0, 1.0, 400.0), chan)[0]
    assert sensor_on_reply(s, msg, t, chan, 3) is False
    assert not s.beacons
