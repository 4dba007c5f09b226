"""Discrete-event core: event queue, UDGM radio, energy ledger, packets.

Simulation time is an integer number of microseconds so that event
ordering never depends on float rounding.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field
from itertools import count
from typing import Any, Callable, Iterable, Sequence

import numpy as np

US_PER_S = 1_000_000

RPL_CONTROL = "rpl"
UDP_DATA = "udp"

EVENT_KINDS = ("packet-arrival", "timer-fire", "app-send", "window-close", "recovery-timeout")


def seconds(value: float) -> int:
    """Convert seconds to integer simulation microseconds."""
    return int(round(value * US_PER_S))


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current clock."""


@dataclass(order=True)
class Event:
    time: int
    seq: int
    kind: str = field(compare=False)
    action: Callable[..., Any] | None = field(default=None, compare=False, repr=False)
    payload: Any = field(default=None, compare=False)


class Simulator:
    """Single-threaded event loop; events run in (time, seq) order."""

    def __init__(self) -> None:
        self.now = 0
        self._queue: list[Event] = []
        self._seq = count()
        self.metrics: list[dict] = []
        self.trace: list[tuple] = []

    def __len__(self) -> int:
        return len(self._queue)

    def schedule(self, event: Event) -> Event:
        if event.time < self.now:
            raise SchedulingError(f"event {event.kind!r} at t={event.time} is before now={self.now}")
        heapq.heappush(self._queue, event)
        return event

    def at(self, time: int, kind: str, action: Callable[..., Any], payload: Any = None) -> Event:
        return self.schedule(Event(time, next(self._seq), kind, action, payload))

    def after(self, delay: int, kind: str, action: Callable[..., Any], payload: Any = None) -> Event:
        return self.at(self.now + delay, kind, action, payload)

    def emit(self, record: dict) -> None:
        self.metrics.append(record)

    def run_until(self, t_end: int) -> list[dict]:
        """Execute every event with time <= t_end; returns metrics emitted meanwhile."""
        start = len(self.metrics)
        queue = self._queue
        while queue and queue[0].time <= t_end:
            event = heapq.heappop(queue)
            self.now = event.time
            if event.action is not None:
                if event.payload is None:
                    event.action()
                else:
                    event.action(event.payload)
        self.now = max(self.now, t_end)
        return self.metrics[start:]


def rng_streams(seed: int, names: Iterable[str]) -> dict[str, random.Random]:
    """Independent named RNG streams derived from one master seed.

    Each stream gets its own spawn key, so adding a consumer of one
    stream never perturbs the draws seen by another.
    """
    streams = {}
    for index, name in enumerate(names):
        state = np.random.SeedSequence(entropy=seed, spawn_key=(index,)).generate_state(2)
        streams[name] = random.Random(int(state[0]) << 32 | int(state[1]))
    return streams


def run_seed(master_seed: int, run_index: int) -> int:
    """Seed of one run inside a sweep, derived from (master seed, run index)."""
    state = np.random.SeedSequence(entropy=master_seed, spawn_key=(run_index,)).generate_state(1)
    return int(state[0])


@dataclass
class RadioModel:
    """Unit disk graph medium with a distance-dependent delivery curve.

    The default curve is ``1 - (d / tx_range) ** exponent`` inside the
    transmission range and zero outside it.
    """

    tx_range: float = 50.0
    interference_range: float = 100.0
    exponent: float = 2.0

    def delivery_probability(self, distance: float) -> float:
        if distance > self.tx_range:
            return 0.0
        return max(0.0, 1.0 - (distance / self.tx_range) ** self.exponent)

    def in_range(self, distance: float) -> bool:
        return distance <= self.tx_range

    def interferes(self, distance: float) -> bool:
        return distance <= self.interference_range


def distance(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def attempt_delivery(
    radio: RadioModel,
    src: Sequence[float],
    dst: Sequence[float],
    draw: float,
    interferers: Iterable[Sequence[float]] = (),
) -> bool:
    """Decide whether one frame from ``src`` reaches ``dst``.

    ``draw`` is a uniform variate in [0, 1). Any concurrent transmitter
    within interference range of the receiver destroys the frame.
    """
    d = distance(src, dst)
    if d > radio.tx_range:
        return False
    for pos in interferers:
        if radio.interferes(distance(pos, dst)):
            return False
    return draw < radio.delivery_probability(d)


@dataclass(frozen=True)
class EnergyCoefficients:
    e_tx: float = 17.4
    e_rx: float = 18.8
    e_cpu: float = 0.4
    p_idle: float = 30.0

    def __post_init__(self) -> None:
        for name in ("e_tx", "e_rx", "e_cpu", "p_idle"):
            if getattr(self, name) < 0:
                raise ValueError(f"energy coefficient {name} must be nonnegative")


@dataclass
class EnergyLedger:
    coefficients: EnergyCoefficients = field(default_factory=EnergyCoefficients)
    tx_count: int = 0
    rx_count: int = 0
    idle_time: float = 0.0
    cpu_ops: int = 0

    @property
    def joules(self) -> float:
        c = self.coefficients
        return (
            self.tx_count * c.e_tx
            + self.rx_count * c.e_rx
            + self.idle_time * c.p_idle
            + self.cpu_ops * c.e_cpu
        )


_LEDGER_FIELDS = {"tx": "tx_count", "rx": "rx_count", "cpu": "cpu_ops", "idle": "idle_time"}


def charge(ledger: EnergyLedger, action: str, amount: float = 1) -> EnergyLedger:
    """Add ``amount`` to the counter behind ``action`` (tx, rx, cpu or idle seconds)."""
    if amount < 0:
        raise ValueError("energy charges must be nonnegative")
    attr = _LEDGER_FIELDS[action]
    setattr(ledger, attr, getattr(ledger, attr) + amount)
    return ledger


@dataclass(slots=True)
class Packet:
    """One simulated frame.

    IP addresses are fixed for the life of the packet; MAC addresses are
    rewritten at every hop. Data packets carry their sequence number in
    the first payload byte.
    """

    protocol: str
    ip_src: int
    ip_dst: int
    mac_src: int
    mac_dst: int | None
    payload: bytes = b""
    size: int = 46
    kind: str = "data"
    uid: int = 0
    created: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def is_data(self) -> bool:
        return self.protocol == UDP_DATA

    @property
    def seq(self) -> int:
        return self.payload[0]


def airtime(size: int, bitrate: float = 250_000.0) -> int:
    """Frame airtime in microseconds including the 6-byte PHY header."""
    return int(math.ceil((size + 6) * 8 / bitrate * US_PER_S))
