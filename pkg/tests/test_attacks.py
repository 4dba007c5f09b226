import random

import pytest
from hypothesis import given, settings, strategies as st

from rpltrust.attacks import (
    DROP, FORWARD, AttackConfig, AttackerState, BadmouthAttack, PfrAttack, PfrObservation,
    badmouth_gate, compose_attack, estimate_avg_pfr, pfr, pfr_gate, protocol_gate, select_victims,
)
from rpltrust.engine import Packet

CASES = settings(max_examples=150, deadline=None)


def data(mac_src=2, mac_dst=9, ip_src=None):
    return Packet("udp", ip_src or mac_src, 1, mac_src, mac_dst, bytes(46))


def dio():
    return Packet("rpl", 2, 0, 2, None, kind="dio")


def test_protocol_gate():
    assert protocol_gate(dio()) is FORWARD
    assert protocol_gate(data(), True) is DROP
    assert protocol_gate(data(), False) is FORWARD


@pytest.mark.parametrize("s, r, expected", [(5, 10, 0.5), (7, 7, 1.0), (0, 4, 0.0)])
def test_pfr_examples(s, r, expected):
    assert pfr(PfrObservation(1, r, s)) == expected


def test_pfr_without_receptions():
    assert pfr(PfrObservation(1, 0, 0)) is None


def test_average_pfr():
    obs = [PfrObservation(i, 10, 10) for i in range(3)]
    assert estimate_avg_pfr(obs) == 1.0
    assert estimate_avg_pfr([PfrObservation(1, 10, 8), PfrObservation(2, 5, 5)]) == pytest.approx(0.9)
    assert estimate_avg_pfr([]) is None


def test_pfr_gate_examples():
    assert pfr_gate(PfrObservation(9, 100, 97), 0.9, 0.05) is DROP
    assert pfr_gate(PfrObservation(9, 100, 90), 0.9, 0.05) is FORWARD
    assert pfr_gate(PfrObservation(9, 100, 100), 0.99, 0.05) is FORWARD
    assert pfr_gate(PfrObservation(9, 100, 100), None, 0.05) is FORWARD


def test_select_victims_examples():
    assert select_victims([(2, 0.95), (3, 0.99)], 1, 0.9) == [2]
    assert select_victims([(2, 0.5), (3, 0.6)], 1, 0.9) == []
    assert select_victims([(3, 0.99), (2, 0.95)], 2, 0.9) == [2, 3]


def test_badmouth_matches_mac_hop():
    assert badmouth_gate(data(2, 9), 9, [2]) is DROP
    assert badmouth_gate(data(2, 4), 9, [2]) is FORWARD
    # relayed for the victim by an honest node: the MAC source is not the victim
    assert badmouth_gate(data(mac_src=5, mac_dst=9, ip_src=2), 9, [2]) is FORWARD


def test_identity_attacker_forwards_everything():
    cfg = AttackConfig(drop_non_rpl=False, pfr_attack=None, badmouth=None)
    state = AttackerState(9, cfg)
    rng = random.Random(0)
    assert all(compose_attack(cfg, data(2, 9), state, rng) is FORWARD for _ in range(50))


def test_mix_one_uses_only_badmouthing():
    cfg = AttackConfig(mix=1.0)
    state = AttackerState(9, cfg, victims=[2])
    rng = random.Random(0)
    for _ in range(200):
        compose_attack(cfg, data(3, 9), state, rng)
    assert state.pfr_routed == 0 and state.badmouth_routed == 200


def test_mix_half_splits_decisions():
    cfg = AttackConfig(mix=0.5)
    state = AttackerState(9, cfg)
    rng = random.Random(11)
    for _ in range(10_000):
        compose_attack(cfg, data(3, 9), state, rng)
    assert abs(state.badmouth_routed / 10_000 - 0.5) <= 0.02


@CASES
@given(st.lists(st.sampled_from(["dio", "dis", "dao"]), max_size=40), st.floats(0, 1), st.integers(0, 3))
def test_control_plane_transparency(kinds, mix, victims):
    cfg = AttackConfig(mix=mix, badmouth=BadmouthAttack(victims))
    state = AttackerState(9, cfg, victims=[2], avg_estimate=0.1)
    rng = random.Random(1)
    for kind in kinds:
        pkt = Packet("rpl", 2, 1, 2, 9, kind=kind)
        assert compose_attack(cfg, pkt, state, rng) is FORWARD


@CASES
@given(st.floats(0.0, 0.97), st.floats(0.01, 0.2), st.integers(1, 300))
def test_stealth_bound(avg, eps, n):
    cfg = AttackConfig(pfr_attack=PfrAttack(eps), badmouth=None, mix=0.0)
    state = AttackerState(9, cfg, avg_estimate=avg)
    rng = random.Random(0)
    for _ in range(n):
        compose_attack(cfg, data(3, 9), state, rng)
    target = min(1.0, avg + eps)
    assert state.own.forwarded / state.own.received >= target - 1.0 / state.own.received


@CASES
@given(st.lists(st.tuples(st.integers(1, 40), st.one_of(st.none(), st.floats(0, 1))), max_size=10,
                unique_by=lambda c: c[0]),
       st.integers(0, 5), st.floats(0, 1))
def test_victim_monotonicity_and_no_self(children, k, avg):
    smaller = select_victims(children, k, avg, attacker=9)
    larger = select_victims(children, k + 1, avg, attacker=9)
    assert set(smaller) <= set(larger)
    assert 9 not in larger


def test_config_validation():
    with pytest.raises(ValueError):
        PfrAttack(epsilon=0.0)
    with pytest.raises(ValueError):
        AttackConfig(mix=1.5)


def test_roll_window_picks_victims_from_observations():
    cfg = AttackConfig()
    state = AttackerState(9, cfg)
    for uid in range(10):
        state.saw_handover(2, uid)
        state.saw_forward(2, uid)
        state.saw_handover(3, 100 + uid)
        if uid < 5:
            state.saw_forward(3, 100 + uid)
    state.roll_window([2, 3, 9])
    assert state.avg_estimate == pytest.approx(0.75)
    assert state.victims == [2]
