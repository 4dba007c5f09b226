import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

import oracles
from rpltrust.evaluation import (
    auc, detection_delay, energy_overhead, pair_auc, roc, score_auc, threshold_grid_scores,
)

CASES = settings(max_examples=200, deadline=None)


def test_separable_scores():
    assert score_auc({1: 0.1, 2: 0.2, 3: 0.8, 4: 0.9}, {1, 2}) == 1.0


def test_identical_scores_chance():
    assert score_auc({n: 0.5 for n in range(1, 7)}, {1, 2}) == 0.5


def test_four_node_example():
    # pairs (m1,h1) (m1,h2) (m2,h2) rank correctly, (m2,h1) does not
    assert score_auc({1: 0.2, 2: 0.6, 3: 0.5, 4: 0.9}, {1, 2}) == pytest.approx(0.75)


def test_one_class_is_undefined():
    assert score_auc({1: 0.2, 2: 0.3}, {1, 2}) is None
    assert score_auc({1: 0.2, 2: 0.3}, set()) is None


def test_curve_shape():
    curve = roc({1: 0.2, 2: 0.6, 3: 0.5, 4: 0.9}, {1, 2})
    assert curve.points[0] == (0.0, 0.0) and curve.points[-1] == (1.0, 1.0)
    assert curve.thresholds == sorted(curve.thresholds)
    assert all(0 <= x <= 1 and 0 <= y <= 1 for x, y in curve.points)


score_maps = st.integers(2, 12).flatmap(lambda n: st.tuples(
    st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75, 1.0]), min_size=n, max_size=n),
    st.sets(st.integers(0, n - 1), min_size=1, max_size=n - 1)))


@CASES
@given(score_maps)
def test_trapezoid_matches_pair_counting(case):
    values, bad = case
    scores = dict(enumerate(values))
    exact = oracles.mann_whitney(scores, bad)
    assert score_auc(scores, bad) == pytest.approx(float(exact), abs=1e-12)
    assert pair_auc(scores, bad) == pytest.approx(float(exact), abs=1e-12)


@CASES
@given(score_maps, st.sampled_from(["cube", "exp", "affine"]))
def test_auc_invariant_under_increasing_transform(case, kind):
    values, bad = case
    scores = dict(enumerate(values))
    f = {"cube": lambda x: x ** 3, "exp": math.exp, "affine": lambda x: 3 * x - 7}[kind]
    moved = {n: f(s) for n, s in scores.items()}
    assert roc(moved, bad).points == roc(scores, bad).points
    assert score_auc(moved, bad) == score_auc(scores, bad)


def test_exhaustive_small_cases():
    # every labelling of every 4-node score assignment over three levels
    for values in itertools.product([0.0, 0.5, 1.0], repeat=4):
        for k in range(1, 4):
            for bad in itertools.combinations(range(4), k):
                scores = dict(enumerate(values))
                assert score_auc(scores, bad) == pytest.approx(float(oracles.mann_whitney(scores, set(bad))))


def test_delay_examples():
    stats = detection_delay({4: 900.0, 12: 1500.0}, [4, 12, 13], 0.0)
    assert stats.per_node == {4: 900.0, 12: 1500.0}
    assert stats.missed == [13]
    assert stats.mean == 1200.0
    assert detection_delay({}, [4], 0.0).mean is None


def test_delay_only_counts_after_attack_start():
    stats = detection_delay({4: 100.0, 5: 700.0}, [4, 5], {4: 300.0, 5: 300.0})
    assert stats.per_node == {5: 400.0} and stats.missed == [4]


@CASES
@given(st.dictionaries(st.integers(1, 20), st.floats(0, 1e5), max_size=10), st.floats(0, 1e4))
def test_delay_positivity(times, start):
    stats = detection_delay(times, list(range(1, 21)), start)
    assert all(d >= 0 for d in stats.per_node.values())
    assert len(stats.per_node) + len(stats.missed) == 20


class _Run:
    def __init__(self, threshold, blacklisted):
        self.threshold = threshold
        self.blacklist_times = {n: 0.0 for n in blacklisted}


def test_threshold_grid_scores_take_smallest_threshold():
    runs = [_Run(0.3, [4]), _Run(0.5, [4, 12]), _Run(0.7, [4, 12, 6])]
    assert threshold_grid_scores(runs, [4, 6, 12, 13]) == {4: 0.3, 6: 0.7, 12: 0.5, 13: 1.0}


def test_energy_overhead_baseline_is_zero():
    pct = energy_overhead({"def": 100.0, "proposed": 103.4, "hp": 150.0})
    assert pct["def"] == 0.0
    assert pct["proposed"] == pytest.approx(3.4)
    with pytest.raises(KeyError):
        energy_overhead({"hp": 1.0})
