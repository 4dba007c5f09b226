"""Root-resident trust engine and the detection / notification / isolation pipeline.

Self-trust is a beta estimate over a node's good and bad forwarding
outcomes, with separate exponential forgetting for good and bad history.
Descendant trust is the traffic-weighted mean self-trust of a node's
direct children. Their weighted sum is compared against a threshold once
per sliding window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .rpl import NodeState, path_to_root

GOOD, BAD = 1, 0


def beta_trust(good: float, bad: float) -> float:
    if good < 0 or bad < 0:
        raise ValueError("counts must be nonnegative")
    return (good + 1.0) / (good + bad + 2.0)


def discount_factor(q: int, k: int, lam: float) -> float:
    if not 1 <= k <= q:
        raise ValueError(f"behavior index k={k} outside [1, {q}]")
    return math.exp(-lam * (q - k))


@dataclass(frozen=True)
class ForgettingParams:
    lambda_g: float = 0.2
    lambda_b: float = 0.0

    def __post_init__(self) -> None:
        for name in ("lambda_g", "lambda_b"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and nonnegative")


@dataclass
class BehaviorLog:
    node: int
    entries: list[tuple[int, int]] = field(default_factory=list)  # (a_k, window)

    @property
    def q(self) -> int:
        return len(self.entries)

    def append(self, good: bool | int, window: int = 0) -> None:
        self.entries.append((int(bool(good)), window))

    def outcomes(self) -> list[int]:
        return [a for a, _ in self.entries]


def discounted_masses(outcomes: Sequence[int], params: ForgettingParams) -> tuple[float, float]:
    """Discounted (good, bad) behavior mass of an outcome sequence, oldest first."""
    q = len(outcomes)
    good = sum(math.exp(-params.lambda_g * (q - k)) for k, a in enumerate(outcomes, 1) if a)
    bad = sum(math.exp(-params.lambda_b * (q - k)) for k, a in enumerate(outcomes, 1) if not a)
    return good, bad


def self_trust(log: BehaviorLog | Sequence[int], params: ForgettingParams) -> float:
    outcomes = log.outcomes() if isinstance(log, BehaviorLog) else list(log)
    good, bad = discounted_masses(outcomes, params)
    return (good + 1.0) / (bad + good + 2.0)


def descendant_trust(children: Iterable[tuple[int, float, float]]) -> float | None:
    """Traffic-weighted mean self-trust of direct children; None without usable weight."""
    total = weighted = 0.0
    for _, trust, weight in children:
        if weight < 0:
            raise ValueError("child weights must be nonnegative")
        total += weight
        weighted += weight * trust
    if total <= 0:
        return None
    return min(1.0, max(0.0, weighted / total))


def check_weights(w_s: float, w_d: float) -> None:
    if w_s < 0 or w_d < 0 or abs(w_s + w_d - 1.0) > 1e-9:
        raise ValueError(f"trust weights must be nonnegative and sum to 1, got {w_s} + {w_d}")


def aggregate_trust(self_value: float, descendant: float | None, w_s: float, w_d: float) -> float:
    check_weights(w_s, w_d)
    if descendant is None:
        return self_value
    return w_s * self_value + w_d * descendant


@dataclass(frozen=True)
class TrustRecord:
    node: int
    self_trust: float
    descendant_trust: float | None
    aggregate: float
    window_index: int


class SequenceTracker:
    """Infers how many data packets each source sent from the sequence byte.

    Gaps are read modulo 256 and trusted only below 128. A source that
    goes silent is charged the packets it must have sent at the slowest
    jittered rate; later sequence numbers settle the exact count.
    """

    def __init__(self, period: float, jitter: float = 0.1, margin: float = 1.0) -> None:
        self.period = period
        self.jitter = jitter
        self.margin = margin
        self.last_seq: dict[int, int] = {}
        self.last_time: dict[int, float] = {}
        self.received_count: dict[int, int] = {}
        self.inferred_sent_count: dict[int, int] = {}
        self.provisional: dict[int, int] = {}
        self.aliased = 0
        self.window_outcomes: dict[int, list[int]] = {}

    def register(self, src: int, time: float) -> None:
        if src not in self.last_time:
            self.last_time[src] = time
            self.received_count.setdefault(src, 0)
            self.inferred_sent_count.setdefault(src, 0)
            self.provisional.setdefault(src, 0)

    def on_receive(self, src: int, seq: int, time: float) -> int:
        """Record one received packet; returns the number of newly inferred losses."""
        self.register(src, time)
        last = self.last_seq.get(src)
        gap = seq % 256 if last is None else (seq - last - 1) % 256
        outcomes = self.window_outcomes.setdefault(src, [])
        self.received_count[src] += 1
        if gap >= 128:
            # stale or aliased sequence number: keep it as a delivery only
            self.aliased += 1
            self.inferred_sent_count[src] = max(self.inferred_sent_count[src], self.received_count[src])
            outcomes.append(GOOD)
            return 0
        already = self.provisional[src]
        losses = max(0, gap - already)
        self.provisional[src] = 0
        self.inferred_sent_count[src] += losses + 1
        self.last_seq[src] = seq % 256
        self.last_time[src] = time
        outcomes.extend([BAD] * losses)
        outcomes.append(GOOD)
        return losses

    def charge_silence(self, now: float) -> dict[int, int]:
        """Charge losses for sources silent longer than their slowest send interval."""
        slowest = self.period * (1.0 + self.jitter)
        charged = {}
        for src, last in self.last_time.items():
            must_have_sent = int((now - last - self.margin) // slowest)
            extra = must_have_sent - self.provisional[src]
            if extra > 0:
                self.provisional[src] += extra
                self.inferred_sent_count[src] += extra
                self.window_outcomes.setdefault(src, []).extend([BAD] * extra)
                charged[src] = extra
        return charged

    def drain(self) -> dict[int, list[int]]:
        out, self.window_outcomes = self.window_outcomes, {}
        return out


@dataclass
class WindowEvidence:
    """Everything the root learned from one window of sequence numbers."""

    window: int
    by_source: dict[int, list[int]]
    attributed: dict[int, list[int]]
    unattributed: int = 0

    @property
    def sent(self) -> dict[int, int]:
        return {src: len(out) for src, out in self.by_source.items()}

    def increments(self) -> dict[int, tuple[int, int]]:
        return {n: (sum(out), len(out) - sum(out)) for n, out in self.attributed.items()}


def observe_window(
    tracker: SequenceTracker,
    parents: Mapping[int, int | None],
    window: int,
    root: int = 1,
    attribution: str = "source",
    now: float | None = None,
) -> WindowEvidence:
    """Turn one window of sequence evidence into per-node behavior outcomes.

    ``attribution="source"`` charges each outcome to the node that
    originated the packet. ``attribution="path"`` charges it to every
    forwarder between the source and the root. Outcomes of sources the
    root has no route for are only counted.
    """
    if attribution not in ("source", "path"):
        raise ValueError(f"unknown attribution {attribution!r}")
    if now is not None:
        tracker.charge_silence(now)
    by_source = dict(sorted(tracker.drain().items()))
    attributed: dict[int, list[int]] = {}
    unattributed = 0
    for src, outcomes in by_source.items():
        if attribution == "source":
            targets = [src] if src in parents else None
        else:
            path = path_to_root(parents, src, root)
            targets = path[1:] if path is not None else None
        if targets is None:
            unattributed += len(outcomes)
            continue
        for node in targets:
            attributed.setdefault(node, []).extend(outcomes)
    return WindowEvidence(window, by_source, attributed, unattributed)


class TrustEngine:
    """Incremental self-trust bookkeeping for every non-root node.

    With ``granularity="packet"`` every delivered or lost packet is one
    behavior and discounted masses are updated per behavior, which is
    algebraically identical to re-summing the whole log. With
    ``granularity="window"`` a window's outcomes are one batch: masses
    decay once per window with evidence and then absorb the window's good
    and bad counts.
    """

    def __init__(self, params: ForgettingParams, w_s: float = 0.3, w_d: float = 0.7,
                 granularity: str = "packet") -> None:
        check_weights(w_s, w_d)
        if granularity not in ("packet", "window"):
            raise ValueError(f"unknown granularity {granularity!r}")
        self.params = params
        self.w_s, self.w_d = w_s, w_d
        self.granularity = granularity
        self._decay_g = math.exp(-params.lambda_g)
        self._decay_b = math.exp(-params.lambda_b)
        self.good: dict[int, float] = {}
        self.bad: dict[int, float] = {}
        self.logs: dict[int, BehaviorLog] = {}

    def append(self, node: int, outcomes: Iterable[int], window: int) -> None:
        outcomes = list(outcomes)
        g, b = self.good.get(node, 0.0), self.bad.get(node, 0.0)
        log = self.logs.setdefault(node, BehaviorLog(node))
        if self.granularity == "packet":
            for a in outcomes:
                g = g * self._decay_g + a
                b = b * self._decay_b + (1 - a)
        elif outcomes:
            good = sum(outcomes)
            g = g * self._decay_g + good
            b = b * self._decay_b + (len(outcomes) - good)
        for a in outcomes:
            log.append(a, window)
        self.good[node], self.bad[node] = g, b

    def self_trust(self, node: int) -> float:
        return beta_trust(self.good.get(node, 0.0), self.bad.get(node, 0.0))

    def evaluate(self, nodes: Iterable[int], parents: Mapping[int, int | None],
                 weights: Mapping[int, float], window: int) -> dict[int, TrustRecord]:
        children: dict[int, list[int]] = {}
        for child, parent in parents.items():
            if parent is not None:
                children.setdefault(parent, []).append(child)
        records = {}
        for node in nodes:
            ts = self.self_trust(node)
            kids = children.get(node, [])
            td = descendant_trust((c, self.self_trust(c), weights.get(c, 0.0)) for c in kids)
            records[node] = TrustRecord(node, ts, td, aggregate_trust(ts, td, self.w_s, self.w_d), window)
        return records


def subtree_weights(parents: Mapping[int, int | None], sent: Mapping[int, int],
                    root: int = 1) -> dict[int, float]:
    """Packets each node handled this window: its own plus everything from below it."""
    weights: dict[int, float] = {}
    for src, count in sent.items():
        path = path_to_root(parents, src, root)
        if path is None:
            continue
        for node in path:
            weights[node] = weights.get(node, 0.0) + count
    return weights


@dataclass(frozen=True)
class NotificationMessage:
    """One byte: flag in the MSB (1 = confirmed malicious), node id below it."""

    flag: int
    node_id: int

    def __post_init__(self) -> None:
        if self.flag not in (0, 1):
            raise ValueError("flag is a single bit")
        if not 0 <= self.node_id < 128:
            raise ValueError(f"node id {self.node_id} does not fit in 7 bits")

    def encode(self) -> int:
        return (self.flag << 7) | self.node_id

    @classmethod
    def decode(cls, byte: int) -> "NotificationMessage":
        return cls(byte >> 7 & 1, byte & 0x7F)


def encode_notifications(messages: Sequence[NotificationMessage]) -> bytes:
    return bytes(m.encode() for m in messages)


def decode_notifications(options: bytes) -> list[NotificationMessage]:
    return [NotificationMessage.decode(b) for b in options]


@dataclass
class DetectorState:
    trust_threshold: float = 0.5
    window_length: float = 300.0
    recovery_time: float = 600.0
    root: int = 1
    watchlist: set[int] = field(default_factory=set)
    blacklist: set[int] = field(default_factory=set)
    parent_changing: set[int] = field(default_factory=set)
    parent_changed: dict[int, bool] = field(default_factory=dict)
    recovery_deadline: dict[int, float] = field(default_factory=dict)
    old_parent: dict[int, int | None] = field(default_factory=dict)
    blacklisted_at: dict[int, float] = field(default_factory=dict)
    announced: set[int] = field(default_factory=set)
    epoch: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.trust_threshold < 1.0:
            raise ValueError("trust threshold must lie in (0, 1)")

    def _blacklist(self, node: int | None, now: float) -> None:
        if node is None or node == self.root or node in self.blacklist:
            return
        self.blacklist.add(node)
        self.blacklisted_at[node] = now
        self.watchlist.discard(node)
        self._clear_change(node)

    def _clear_change(self, node: int) -> None:
        self.parent_changed[node] = False
        self.parent_changing.discard(node)
        self.recovery_deadline.pop(node, None)


def detect(state: DetectorState, trust: Mapping[int, TrustRecord | float], now: float) -> DetectorState:
    """One pass of watchlist / blacklist maintenance over every scored node."""
    delta = state.trust_threshold
    for node in sorted(trust):
        if node in state.blacklist or node == state.root:
            continue
        record = trust[node]
        value = record.aggregate if isinstance(record, TrustRecord) else float(record)
        changed = state.parent_changed.get(node, False)
        if value < delta:
            if node not in state.watchlist:
                state.watchlist.add(node)
            elif changed and now >= state.recovery_deadline.get(node, math.inf):
                state.watchlist.discard(node)
                state._blacklist(node, now)
        elif changed and node in state.watchlist:
            state.watchlist.discard(node)
            state._clear_change(node)
            state._blacklist(state.old_parent.get(node), now)
    return state


def find_max_rank_nodes(watchlist: Iterable[int], parents: Mapping[int, int | None],
                        root: int = 1) -> list[int]:
    """Deepest watched node of every watched branch: watched nodes with no watched descendant."""
    watched = set(watchlist)
    has_watched_descendant: set[int] = set()
    for node in watched:
        path = path_to_root(parents, node, root) or [node]
        for ancestor in path[1:]:
            if ancestor in watched:
                has_watched_descendant.add(ancestor)
    return sorted(watched - has_watched_descendant)


def build_notifications(state: DetectorState, parents: Mapping[int, int | None],
                        now: float) -> list[NotificationMessage]:
    """Parent-change orders for the deepest watched nodes and announcements of new blacklist entries.

    A watched child of the root has no parent worth blaming; it is put on
    the recovery clock without an order being sent.
    """
    messages: list[NotificationMessage] = []
    state.epoch += 1
    if state.watchlist:
        for node in find_max_rank_nodes(state.watchlist, parents, state.root):
            if state.parent_changed.get(node, False):
                continue
            parent = parents.get(node)
            state.parent_changed[node] = True
            state.recovery_deadline[node] = now + state.recovery_time
            if parent is None or parent == state.root:
                state.old_parent[node] = None
                continue
            state.old_parent[node] = parent
            state.parent_changing.add(node)
            messages.append(NotificationMessage(0, node))
    for node in sorted(state.blacklist - state.announced):
        messages.append(NotificationMessage(1, node))
        state.announced.add(node)
    return messages


def handle_notification(node: NodeState, msg: NotificationMessage, epoch: int,
                        seen: set[tuple[int, int, int]], rank_unit: int = 256,
                        hysteresis: int = 192, avoid: Iterable[int] = ()) -> list[str]:
    """Isolation step run by a non-root node; returns the actions taken.

    Possible actions are ``"reparent"``, ``"stuck"`` (ordered to move but
    no alternative parent exists) and ``"rebroadcast"``; an already seen
    (flag, id, epoch) triple yields no action at all. ``avoid`` lists nodes
    that must not become the parent, typically the node's own descendants.
    """
    key = (msg.flag, msg.node_id, epoch)
    if key in seen:
        return []
    seen.add(key)
    actions = []
    if msg.flag == 1 and msg.node_id != node.node_id:
        node.blacklist.add(msg.node_id)
    targeted = (msg.flag == 1 and msg.node_id == node.parent) or (
        msg.flag == 0 and msg.node_id == node.node_id)
    if targeted and node.parent is not None:
        old = node.parent
        node.excluded.add(old)
        node.parent = None
        node.reselect(rank_unit, hysteresis, avoid)
        if node.parent is None and msg.flag == 0:
            # no other way up: keep the suspect rather than fall off the DODAG
            node.excluded.discard(old)
            node.reselect(rank_unit, hysteresis, avoid)
            actions.append("stuck")
        else:
            actions.append("reparent")
    actions.append("rebroadcast")
    return actions
