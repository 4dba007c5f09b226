"""Comparison detectors: PFR averages, repair counting, heartbeat and neighbor monitoring.

Every scheme turns its evidence into one ``DetectorVerdict`` per node and
window. Lower scores are more suspicious, and a node without evidence
gets the neutral score 1.0 unless the scheme says otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

NEUTRAL = 1.0


@dataclass(frozen=True)
class DetectorVerdict:
    node: int
    score: float
    window: int


def _verdicts(scores: Mapping[int, float], nodes: Iterable[int], window: int) -> list[DetectorVerdict]:
    return [DetectorVerdict(n, float(scores.get(n, NEUTRAL)), window) for n in sorted(nodes)]


def _observed(history: Sequence[float | None]) -> list[float]:
    return [h for h in history if h is not None]


def avg_scheme(history: Mapping[int, Sequence[float | None]], window: int,
               nodes: Iterable[int] | None = None) -> list[DetectorVerdict]:
    """Cumulative mean of every window PFR observed for the node so far."""
    scores = {}
    for node, values in history.items():
        seen = _observed(values)
        if seen:
            scores[node] = sum(seen) / len(seen)
    return _verdicts(scores, history.keys() if nodes is None else nodes, window)


def rec_scheme(history: Mapping[int, Sequence[float | None]], window: int,
               nodes: Iterable[int] | None = None) -> list[DetectorVerdict]:
    """Most recent observed window PFR."""
    scores = {}
    for node, values in history.items():
        seen = _observed(values)
        if seen:
            scores[node] = seen[-1]
    return _verdicts(scores, history.keys() if nodes is None else nodes, window)


def def_scheme(abandonments: Mapping[int, int], nodes: Iterable[int], window: int) -> list[DetectorVerdict]:
    """Nodes abandoned as parent more often look worse; scaled by the worst count."""
    worst = max(abandonments.values(), default=0)
    if worst <= 0:
        return _verdicts({}, nodes, window)
    scores = {n: 1.0 - abandonments.get(n, 0) / worst for n in nodes}
    return _verdicts(scores, nodes, window)


def heartbeat_scheme(requests: Mapping[int, int], replies: Mapping[int, int],
                     nodes: Iterable[int], window: int) -> list[DetectorVerdict]:
    """Echo reply ratio; a node the root cannot reach at all scores 0."""
    scores = {}
    for n in nodes:
        sent = requests.get(n, 0)
        scores[n] = 0.0 if sent <= 0 else min(1.0, replies.get(n, 0) / sent)
    return _verdicts(scores, nodes, window)


def tprp_scheme(reports: Mapping[int, Mapping[int, float]], nodes: Iterable[int],
                window: int) -> list[DetectorVerdict]:
    """Mean of the latest neighbor-reported PFR values about each subject.

    ``reports`` maps reporter -> {subject: reported PFR}.
    """
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    for reporter, table in sorted(reports.items()):
        for subject, value in table.items():
            if subject == reporter:
                continue
            sums[subject] = sums.get(subject, 0.0) + value
            counts[subject] = counts.get(subject, 0) + 1
    scores = {n: sums[n] / counts[n] for n in sums}
    return _verdicts(scores, nodes, window)


@dataclass
class NeighborMonitor:
    """Promiscuous forwarding monitor kept by one node about its neighbors.

    A neighbor is credited with a reception when a data frame for relaying
    is seen being handed to it, and with a forward when it is later seen
    transmitting that same packet.
    """

    node_id: int
    received: dict[int, int] = field(default_factory=dict)
    forwarded: dict[int, int] = field(default_factory=dict)
    pending: dict[int, set[int]] = field(default_factory=dict)

    def handover(self, neighbor: int, uid: int) -> None:
        self.received[neighbor] = self.received.get(neighbor, 0) + 1
        self.pending.setdefault(neighbor, set()).add(uid)

    def forward(self, neighbor: int, uid: int) -> None:
        waiting = self.pending.get(neighbor)
        if waiting and uid in waiting:
            waiting.discard(uid)
            self.forwarded[neighbor] = self.forwarded.get(neighbor, 0) + 1

    def pfr_table(self) -> dict[int, float]:
        return {n: min(1.0, self.forwarded.get(n, 0) / r)
                for n, r in sorted(self.received.items()) if r > 0}
