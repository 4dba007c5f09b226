"""Selective forwarding adversaries installed on malicious nodes.

Three behaviors compose on every data packet a malicious node is asked
to relay: a protocol gate (control traffic always passes), a bad-mouthing
gate that silently drops frames handed over by chosen children, and a
packet-forward-rate gate that keeps the attacker's own forwarding ratio
pinned just above what it sees its neighbors achieve.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .engine import RPL_CONTROL, Packet


class Decision(str, Enum):
    FORWARD = "forward"
    DROP = "drop"


FORWARD = Decision.FORWARD
DROP = Decision.DROP


@dataclass
class PfrObservation:
    node: int
    received: int = 0
    forwarded: int = 0
    window: int = 0


@dataclass(frozen=True)
class PfrAttack:
    epsilon: float = 0.02
    window: float | None = None  # seconds; None follows the defense window
    neighbor_sample: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError("epsilon must lie in (0, 1)")
        if not 0.0 < self.neighbor_sample <= 1.0:
            raise ValueError("neighbor_sample must lie in (0, 1]")


@dataclass(frozen=True)
class BadmouthAttack:
    num_victims: int = 1

    def __post_init__(self) -> None:
        if self.num_victims < 0:
            raise ValueError("num_victims must be nonnegative")


@dataclass(frozen=True)
class AttackConfig:
    drop_non_rpl: bool = True
    pfr_attack: PfrAttack | None = field(default_factory=PfrAttack)
    badmouth: BadmouthAttack | None = field(default_factory=BadmouthAttack)
    mix: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.mix <= 1.0:
            raise ValueError("mix must lie in [0, 1]")


def protocol_gate(packet: Packet, drop_non_rpl: bool = True) -> Decision:
    """Control traffic is always relayed; data is a drop candidate when enabled."""
    if packet.protocol == RPL_CONTROL or not drop_non_rpl:
        return FORWARD
    return DROP


def pfr(obs: PfrObservation) -> float | None:
    """Forwarded / received for one window; None when nothing was received."""
    if obs.received <= 0:
        return None
    return min(1.0, max(0.0, obs.forwarded / obs.received))


def estimate_avg_pfr(neighbor_obs: Iterable[PfrObservation]) -> float | None:
    rates = [r for r in (pfr(o) for o in neighbor_obs) if r is not None]
    if not rates:
        return None
    return sum(rates) / len(rates)


def pfr_gate(own: PfrObservation, avg: float | None, epsilon: float,
             packet: Packet | None = None) -> Decision:
    """Hold the attacker's own PFR at ``min(1, avg + epsilon)``.

    ``own`` already counts the packet under decision as received. A
    missing estimate means full forwarding.
    """
    if avg is None:
        return FORWARD
    target = min(1.0, avg + epsilon)
    if target >= 1.0 or own.received <= 0:
        return FORWARD
    return DROP if own.forwarded / own.received > target else FORWARD


def select_victims(children: Sequence[tuple[int, float | None]], num_victims: int,
                   avg: float | None, attacker: int | None = None) -> list[int]:
    """Children ordered by ascending PFR; the first ``num_victims`` at or above ``avg``.

    Children without observations count as perfect forwarders.
    """
    threshold = 0.0 if avg is None else avg
    ranked = sorted(((1.0 if rate is None else rate, node) for node, rate in children
                     if node != attacker))
    eligible = [node for rate, node in ranked if rate >= threshold]
    return eligible[:num_victims]


def badmouth_gate(packet: Packet, self_id: int, victims: Iterable[int]) -> Decision:
    """Drop frames that a victim handed to us for relaying (MAC hop, not IP origin)."""
    if packet.mac_dst == self_id and packet.mac_src in set(victims):
        return DROP
    return FORWARD


@dataclass
class AttackerState:
    """Per-window bookkeeping of one malicious node."""

    node_id: int
    config: AttackConfig
    own: PfrObservation = None  # type: ignore[assignment]
    avg_estimate: float | None = None
    victims: list[int] = field(default_factory=list)
    window_index: int = 0
    neighbor_obs: dict[int, PfrObservation] = field(default_factory=dict)
    pending: dict[int, set[int]] = field(default_factory=dict)
    badmouth_routed: int = 0
    pfr_routed: int = 0
    dropped: int = 0

    def __post_init__(self) -> None:
        if self.own is None:
            self.own = PfrObservation(self.node_id)

    def saw_handover(self, neighbor: int, uid: int) -> None:
        """A data frame was delivered to ``neighbor`` for relaying."""
        obs = self.neighbor_obs.setdefault(neighbor, PfrObservation(neighbor, window=self.window_index))
        obs.received += 1
        self.pending.setdefault(neighbor, set()).add(uid)

    def saw_forward(self, neighbor: int, uid: int) -> None:
        waiting = self.pending.get(neighbor)
        if waiting and uid in waiting:
            waiting.discard(uid)
            self.neighbor_obs[neighbor].forwarded += 1

    def roll_window(self, children: Sequence[int], rng: random.Random | None = None) -> None:
        """Close the observation window: refresh the average estimate and the victims."""
        observations = list(self.neighbor_obs.values())
        sample = self.config.pfr_attack.neighbor_sample if self.config.pfr_attack else 1.0
        if sample < 1.0 and rng is not None and observations:
            k = max(1, round(sample * len(observations)))
            observations = rng.sample(observations, k)
        self.avg_estimate = estimate_avg_pfr(observations)
        if self.config.badmouth is not None:
            rates = []
            for child in children:
                obs = self.neighbor_obs.get(child)
                rates.append((child, pfr(obs) if obs else None))
            victim_avg = 1.0 if self.avg_estimate is None else self.avg_estimate
            self.victims = select_victims(rates, self.config.badmouth.num_victims, victim_avg,
                                          attacker=self.node_id)
        self.window_index += 1
        self.own = PfrObservation(self.node_id, window=self.window_index)
        self.neighbor_obs = {}
        self.pending = {}

    def decide(self, packet: Packet, rng: random.Random) -> Decision:
        return compose_attack(self.config, packet, self, rng)


def compose_attack(config: AttackConfig, packet: Packet, state: AttackerState,
                   rng: random.Random) -> Decision:
    """Protocol gate, then one of the bad-mouthing or PFR gates picked by ``mix``.

    Every relayed data packet counts toward the attacker's own PFR so that
    bad-mouthing drops eat into the PFR budget.
    """
    if protocol_gate(packet, config.drop_non_rpl) is FORWARD:
        return FORWARD
    state.own.received += 1
    badmouth, pfr_attack = config.badmouth, config.pfr_attack
    if badmouth is None and pfr_attack is None:
        decision = DROP
    else:
        use_badmouth = badmouth is not None and (pfr_attack is None or rng.random() < config.mix)
        if use_badmouth:
            state.badmouth_routed += 1
            decision = badmouth_gate(packet, state.node_id, state.victims)
        else:
            state.pfr_routed += 1
            decision = pfr_gate(state.own, state.avg_estimate, pfr_attack.epsilon, packet)
    if decision is FORWARD:
        state.own.forwarded += 1
    else:
        state.dropped += 1
    return decision
