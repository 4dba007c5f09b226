import math

import pytest
from hypothesis import given, settings, strategies as st

import oracles
from rpltrust.defense import (
    BAD, GOOD, BehaviorLog, DetectorState, ForgettingParams, NotificationMessage, SequenceTracker,
    TrustEngine, TrustRecord, aggregate_trust, beta_trust, build_notifications, decode_notifications,
    descendant_trust, detect, discount_factor, encode_notifications, find_max_rank_nodes,
    handle_notification, observe_window, self_trust, subtree_weights,
)
from rpltrust.rpl import NeighborEntry, NodeState

CASES = settings(max_examples=150, deadline=None)
outcome_lists = st.lists(st.integers(0, 1), max_size=60)
lambdas = st.floats(0, 5, allow_nan=False)


@pytest.mark.parametrize("s, l, expected", [(0, 0, 0.5), (8, 0, 0.9), (0, 8, 0.1)])
def test_beta_examples(s, l, expected):
    assert beta_trust(s, l) == pytest.approx(expected)


def test_discount_examples():
    assert discount_factor(9, 9, 3.0) == 1.0
    assert all(discount_factor(9, k, 0.0) == 1.0 for k in range(1, 10))
    assert discount_factor(2, 1, 100.0) < 1e-40
    with pytest.raises(ValueError):
        discount_factor(3, 4, 0.1)


def test_self_trust_examples():
    assert self_trust([], ForgettingParams(0.2, 0.0)) == 0.5
    assert self_trust([1, 1, 0], ForgettingParams(0, 0)) == pytest.approx(0.6)
    log = [0] + [1] * 8
    # good mass: sum of exp(-0.2 j) for j = 0..7 = 4.40277
    assert self_trust(log, ForgettingParams(0.2, 0.0)) == pytest.approx(5.40277 / 7.40277, abs=1e-5)
    assert self_trust(log, ForgettingParams(0.2, 0.0)) == pytest.approx(float(oracles.self_trust(log, 0.2, 0.0)),
                                                                          rel=1e-12)


def test_forgetting_params_rejects_bad_values():
    with pytest.raises(ValueError):
        ForgettingParams(-0.1, 0)
    with pytest.raises(ValueError):
        ForgettingParams(math.inf, 0)


def test_descendant_examples():
    assert descendant_trust([(2, 0.8, 5)]) == pytest.approx(0.8)
    assert descendant_trust([(2, 1.0, 30), (3, 0.5, 10)]) == pytest.approx(0.875)
    assert descendant_trust([(2, 0.4, 3), (3, 0.4, 90)]) == pytest.approx(0.4)
    assert descendant_trust([]) is None
    assert descendant_trust([(2, 0.4, 0)]) is None


def test_aggregate_examples():
    assert aggregate_trust(0.8, 0.6, 0.3, 0.7) == pytest.approx(0.66)
    assert aggregate_trust(0.8, 0.1, 1.0, 0.0) == pytest.approx(0.8)
    assert aggregate_trust(0.42, None, 0.3, 0.7) == 0.42
    with pytest.raises(ValueError):
        aggregate_trust(0.5, 0.5, 0.5, 0.6)


@CASES
@given(outcome_lists)
def test_eq5_reduces_to_beta(outcomes):
    good = sum(outcomes)
    assert self_trust(outcomes, ForgettingParams(0, 0)) == beta_trust(good, len(outcomes) - good)


@CASES
@given(outcome_lists, lambdas, lambdas)
def test_trust_strictly_inside_unit_interval(outcomes, lg, lb):
    t = self_trust(outcomes, ForgettingParams(lg, lb))
    assert 0 < t < 1


@CASES
@given(outcome_lists, lambdas, lambdas)
def test_monotone_punishment(outcomes, lg, lb):
    p = ForgettingParams(lg, lb)
    base = self_trust(outcomes, p)
    assert self_trust(outcomes + [BAD], p) <= base + 1e-15
    assert self_trust(outcomes + [GOOD], p) >= base - 1e-15


@CASES
@given(outcome_lists, lambdas, st.floats(0, 5))
def test_asymmetry_direction(outcomes, lb, extra):
    lg = lb + extra
    asym = self_trust(outcomes, ForgettingParams(lg, lb))
    sym = self_trust(outcomes, ForgettingParams(lb, lb))
    assert asym <= sym + 1e-15


children_lists = st.lists(st.tuples(st.integers(1, 50), st.floats(0, 1), st.floats(0.01, 100)),
                          min_size=1, max_size=8)


@CASES
@given(children_lists)
def test_descendant_convexity(children):
    trusts = [t for _, t, _ in children]
    d = descendant_trust(children)
    assert min(trusts) - 1e-12 <= d <= max(trusts) + 1e-12


@CASES
@given(children_lists, st.floats(0.01, 1000))
def test_descendant_weight_scaling(children, c):
    scaled = [(n, t, w * c) for n, t, w in children]
    assert descendant_trust(scaled) == pytest.approx(descendant_trust(children), rel=1e-9, abs=1e-12)


@CASES
@given(st.floats(0, 1), st.one_of(st.none(), st.floats(0, 1)), st.floats(0, 1))
def test_aggregate_bounds(s, d, w_s):
    w_d = 1.0 - w_s
    value = aggregate_trust(s, d, w_s, w_d)
    assert -1e-12 <= value <= 1 + 1e-12


@CASES
@given(outcome_lists, st.floats(0, 3), st.floats(0, 3))
def test_engine_packet_mode_matches_log(outcomes, lg, lb):
    p = ForgettingParams(lg, lb)
    engine = TrustEngine(p, granularity="packet")
    half = len(outcomes) // 2
    engine.append(4, outcomes[:half], 0)
    engine.append(4, outcomes[half:], 1)
    assert engine.self_trust(4) == pytest.approx(self_trust(outcomes, p), rel=1e-9)


def test_engine_window_mode_batches():
    engine = TrustEngine(ForgettingParams(math.log(2), 0.0), granularity="window")
    engine.append(3, [1, 1, 0, 1], 0)
    engine.append(3, [1, 1], 1)
    # good mass 3 halves once then absorbs 2; bad mass 1 is never forgotten
    assert engine.self_trust(3) == pytest.approx(beta_trust(3.5, 1))


# ---------------------------------------------------------------------- sequence evidence

def _tracker():
    return SequenceTracker(period=60.0)


def test_lossless_window_path_attribution():
    tr = _tracker()
    for seq in range(10):
        tr.on_receive(5, seq, 60.0 * seq)
    ev = observe_window(tr, {5: 4, 4: 2, 2: 1}, 0, root=1, attribution="path")
    assert ev.increments() == {4: (10, 0), 2: (10, 0)}


def test_gap_inference():
    tr = _tracker()
    for seq in (0, 1, 2, 5, 6):
        tr.on_receive(5, seq, 0.0)
    assert tr.received_count[5] == 5 and tr.inferred_sent_count[5] == 7
    ev = observe_window(tr, {5: 1}, 0, attribution="source")
    assert ev.increments() == {5: (5, 2)}


def test_gap_across_wrap():
    tr = _tracker()
    for seq in range(251):
        tr.on_receive(5, seq, 60.0 * seq)
    tr.drain()
    before = tr.inferred_sent_count[5]
    losses = tr.on_receive(5, 4, 60.0 * 260)
    assert losses == 9
    assert tr.inferred_sent_count[5] - before == 10


def test_unknown_source_unattributed():
    tr = _tracker()
    tr.on_receive(9, 0, 0.0)
    ev = observe_window(tr, {5: 1}, 0, attribution="path")
    assert ev.attributed == {} and ev.unattributed == 1


@CASES
@given(st.lists(st.integers(1, 127), max_size=40))
def test_inferred_sent_at_least_received(gaps):
    tr = _tracker()
    seq = 0
    for g in gaps:
        seq = (seq + g) % 256
        tr.on_receive(3, seq, 0.0)
    assert tr.inferred_sent_count.get(3, 0) >= tr.received_count.get(3, 0)


def test_silence_charged_then_settled():
    tr = _tracker()
    tr.on_receive(5, 0, 0.0)
    tr.drain()
    assert tr.charge_silence(200.0) == {5: 3}
    assert tr.on_receive(5, 4, 240.0) == 0
    assert tr.drain()[5] == [BAD, BAD, BAD, GOOD]


def test_subtree_weights():
    parents = {2: 1, 3: 2, 4: 2}
    assert subtree_weights(parents, {3: 5, 4: 2, 2: 1}) == {2: 8.0, 3: 5.0, 4: 2.0}


# ---------------------------------------------------------------------- detection

def test_fresh_low_node_is_watched():
    st_ = detect(DetectorState(0.5), {4: 0.4}, 0.0)
    assert st_.watchlist == {4}


def test_recovered_child_blames_old_parent():
    s = DetectorState(0.5)
    s.watchlist.add(7)
    s.parent_changed[7] = True
    s.recovery_deadline[7] = 600.0
    s.old_parent[7] = 4
    detect(s, {7: 0.9, 4: 0.6}, 300.0)
    assert 4 in s.blacklist and 7 not in s.watchlist


def test_unrecovered_node_blacklisted_after_timer():
    s = DetectorState(0.5)
    s.watchlist.add(7)
    s.parent_changed[7] = True
    s.recovery_deadline[7] = 600.0
    detect(s, {7: 0.3}, 300.0)
    assert 7 in s.watchlist
    detect(s, {7: 0.3}, 600.0)
    assert s.blacklist == {7}


@CASES
@given(st.lists(st.dictionaries(st.integers(2, 12), st.floats(0, 1), max_size=11), min_size=1, max_size=12),
       st.floats(0.05, 0.95))
def test_detector_invariants(rounds, delta):
    s = DetectorState(delta, recovery_time=300.0)
    parents = {n: (n - 1 if n > 2 else 1) for n in range(2, 13)}
    ever_blacklisted = set()
    for i, trust in enumerate(rounds):
        now = 300.0 * i
        detect(s, trust, now)
        build_notifications(s, parents, now)
        assert not (s.watchlist & s.blacklist)
        assert not (s.watchlist & ever_blacklisted)
        ever_blacklisted |= s.blacklist
        for n, changed in s.parent_changed.items():
            assert changed == (n in s.recovery_deadline)


def test_find_max_rank_on_chain():
    parents = {2: 1, 3: 2, 4: 3}
    assert find_max_rank_nodes({3, 4}, parents) == [4]
    assert find_max_rank_nodes({2, 3}, parents) == [3]


def test_build_notifications():
    s = DetectorState()
    s.blacklist.add(14)
    assert build_notifications(s, {14: 1}, 0.0) == [NotificationMessage(1, 14)]
    assert build_notifications(DetectorState(), {}, 0.0) == []
    s = DetectorState()
    s.watchlist |= {3, 4}
    assert build_notifications(s, {2: 1, 3: 2, 4: 3}, 0.0) == [NotificationMessage(0, 4)]
    assert s.parent_changed[4] and s.old_parent[4] == 3


@CASES
@given(st.integers(0, 1), st.integers(0, 127))
def test_notification_round_trip(flag, node):
    msg = NotificationMessage(flag, node)
    assert NotificationMessage.decode(msg.encode()) == msg
    assert decode_notifications(encode_notifications([msg, msg])) == [msg, msg]


def test_notification_id_limit():
    with pytest.raises(ValueError):
        NotificationMessage(0, 128)


def _node7():
    node = NodeState(7, (0, 0), parent=4, rank=768)
    node.neighbors = {4: NeighborEntry(4, 1.0, 512), 5: NeighborEntry(5, 1.5, 512)}
    return node


def test_blacklisted_parent_is_left():
    node, seen = _node7(), set()
    actions = handle_notification(node, NotificationMessage(1, 4), 1, seen)
    assert actions == ["reparent", "rebroadcast"] and node.parent == 5 and 4 in node.blacklist


def test_unrelated_message_only_rebroadcast():
    node, seen = _node7(), set()
    assert handle_notification(node, NotificationMessage(1, 9), 1, seen) == ["rebroadcast"]
    assert node.parent == 4


def test_duplicate_message_suppressed():
    node, seen = _node7(), set()
    handle_notification(node, NotificationMessage(0, 3), 1, seen)
    assert handle_notification(node, NotificationMessage(0, 3), 1, seen) == []
    assert handle_notification(node, NotificationMessage(0, 3), 2, seen) == ["rebroadcast"]


def test_order_without_alternative_keeps_parent():
    node = NodeState(7, (0, 0), parent=4, rank=768, neighbors={4: NeighborEntry(4, 1.0, 512)})
    actions = handle_notification(node, NotificationMessage(0, 7), 1, set())
    assert actions == ["stuck", "rebroadcast"] and node.parent == 4


def test_trust_record_fields():
    r = TrustRecord(3, 0.8, 0.6, aggregate_trust(0.8, 0.6, 0.3, 0.7), 2)
    assert r.aggregate == pytest.approx(0.3 * r.self_trust + 0.7 * r.descendant_trust)
