"""RPL control plane: DIO codec, MRHOF ranks, parent selection, trickle, repair."""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .engine import EnergyLedger

INFINITE_RANK = 0xFFFF
ROOT_RANK = 256
DEFAULT_RANK_UNIT = 256
DEFAULT_HYSTERESIS = 192

DIO_HEADER = struct.Struct(">BBHBBBB16s")
DIO_HEADER_LEN = DIO_HEADER.size  # 24


class TruncatedMessage(ValueError):
    pass


@dataclass(frozen=True)
class DioMessage:
    rpl_instance_id: int = 0
    version: int = 0
    rank: int = 0
    grounded: bool = False
    mop: int = 0
    prf: int = 0
    dtsn: int = 0
    dodag_id: bytes = bytes(16)
    options: bytes = b""
    # raw bits with no meaning to us, kept so that round trips are bit-exact
    reserved_bit: int = 0
    flags: int = 0
    reserved: int = 0

    def __post_init__(self) -> None:
        for name, bits in (("rpl_instance_id", 8), ("version", 8), ("rank", 16), ("mop", 3),
                           ("prf", 3), ("dtsn", 8), ("reserved_bit", 1), ("flags", 8),
                           ("reserved", 8)):
            value = getattr(self, name)
            if not 0 <= value < (1 << bits):
                raise ValueError(f"DIO field {name}={value} does not fit in {bits} bits")
        if len(self.dodag_id) != 16:
            raise ValueError("DODAG id must be 16 bytes")


def encode_dio(msg: DioMessage) -> bytes:
    gmp = (int(msg.grounded) << 7) | (msg.reserved_bit << 6) | (msg.mop << 3) | msg.prf
    header = DIO_HEADER.pack(msg.rpl_instance_id, msg.version, msg.rank, gmp, msg.dtsn,
                             msg.flags, msg.reserved, bytes(msg.dodag_id))
    return header + bytes(msg.options)


def decode_dio(data: bytes) -> DioMessage:
    if len(data) < DIO_HEADER_LEN:
        raise TruncatedMessage(f"DIO needs {DIO_HEADER_LEN} bytes, got {len(data)}")
    instance, version, rank, gmp, dtsn, flags, reserved, dodag_id = DIO_HEADER.unpack_from(data)
    return DioMessage(
        rpl_instance_id=instance,
        version=version,
        rank=rank,
        grounded=bool(gmp >> 7),
        reserved_bit=(gmp >> 6) & 1,
        mop=(gmp >> 3) & 0b111,
        prf=gmp & 0b111,
        dtsn=dtsn,
        flags=flags,
        reserved=reserved,
        dodag_id=dodag_id,
        options=bytes(data[DIO_HEADER_LEN:]),
    )


@dataclass(frozen=True)
class DaoBody:
    child: int
    parent: int
    sequence: int = 0


@dataclass(frozen=True)
class DaoAckBody:
    sequence: int
    status: int = 0


_CONTROL_BODIES = {"DIO": DioMessage, "DIS": type(None), "DAO": DaoBody, "DAO-ACK": DaoAckBody}


@dataclass(frozen=True)
class ControlMessage:
    kind: str
    body: DioMessage | DaoBody | DaoAckBody | None = None

    def __post_init__(self) -> None:
        expected = _CONTROL_BODIES.get(self.kind)
        if expected is None:
            raise ValueError(f"unknown control message kind {self.kind!r}")
        if not isinstance(self.body, expected):
            raise TypeError(f"{self.kind} carries {expected.__name__}, got {type(self.body).__name__}")


@dataclass
class NeighborEntry:
    neighbor: int
    etx: float
    advertised_rank: int
    last_heard: int = 0
    version: int = 0

    def __post_init__(self) -> None:
        if not self.etx >= 1.0:
            raise ValueError(f"ETX must be >= 1, got {self.etx}")


def mrhof_rank(parent_rank: int, link_etx: float, rank_unit: int = DEFAULT_RANK_UNIT) -> int:
    """Rank advertised by a node whose preferred parent has ``parent_rank``."""
    if parent_rank >= INFINITE_RANK:
        return INFINITE_RANK
    if link_etx < 1.0:
        raise ValueError("link ETX must be >= 1")
    return min(INFINITE_RANK, parent_rank + int(round(link_etx * rank_unit)))


def select_preferred_parent(
    neighbors: Iterable[NeighborEntry],
    current_parent: int | None = None,
    blacklist: Iterable[int] = (),
    rank_unit: int = DEFAULT_RANK_UNIT,
    hysteresis: int = DEFAULT_HYSTERESIS,
) -> int | None:
    """MRHOF parent choice with switching hysteresis; ties go to the smaller id."""
    banned = set(blacklist)
    costs = {}
    for entry in neighbors:
        if entry.neighbor in banned or entry.advertised_rank >= INFINITE_RANK:
            continue
        cost = mrhof_rank(entry.advertised_rank, entry.etx, rank_unit)
        if cost < INFINITE_RANK:
            costs[entry.neighbor] = cost
    if not costs:
        return None
    best = min(costs, key=lambda n: (costs[n], n))
    if current_parent in costs and costs[current_parent] - costs[best] <= hysteresis:
        return current_parent
    return best


@dataclass(frozen=True)
class TrickleTimer:
    interval_min: int
    interval_max: int
    current_interval: int
    next_fire: int

    @classmethod
    def start(cls, interval_min: int, interval_max: int, now: int = 0) -> "TrickleTimer":
        return cls(interval_min, interval_max, interval_min, now + interval_min)


def trickle_step(timer: TrickleTimer, consistent: bool, now: int,
                 draw: float = 1.0) -> tuple[TrickleTimer, bool]:
    """Advance a trickle timer.

    The interval doubles after each firing but never beyond the largest
    doubling that stays within ``interval_max``. ``draw`` in (0, 1] places
    the next firing inside the second half of the new interval; 1.0 fires
    at the interval end.
    """
    if not consistent:
        interval = timer.interval_min
        return replace(timer, current_interval=interval,
                       next_fire=now + _fire_offset(interval, draw)), False
    if now < timer.next_fire:
        return timer, False
    interval = timer.current_interval
    if 2 * interval <= timer.interval_max:
        interval *= 2
    return replace(timer, current_interval=interval, next_fire=now + _fire_offset(interval, draw)), True


def _fire_offset(interval: int, draw: float) -> int:
    return max(1, int(interval * (0.5 + 0.5 * draw)))


@dataclass
class NodeState:
    """Routing-relevant state of one simulated node."""

    node_id: int
    position: tuple[float, float]
    role: str = "honest"  # root | honest | malicious
    rank: int = INFINITE_RANK
    parent: int | None = None
    neighbors: dict[int, NeighborEntry] = field(default_factory=dict)
    version: int = 0
    blacklist: set[int] = field(default_factory=set)
    excluded: set[int] = field(default_factory=set)
    energy: EnergyLedger = field(default_factory=EnergyLedger)
    dis_pending: bool = False
    local_repairs: int = 0

    @property
    def is_root(self) -> bool:
        return self.role == "root"

    @property
    def attached(self) -> bool:
        return self.is_root or (self.parent is not None and self.rank < INFINITE_RANK)

    def banned(self) -> set[int]:
        return self.blacklist | self.excluded

    def reselect(self, rank_unit: int = DEFAULT_RANK_UNIT,
                 hysteresis: int = DEFAULT_HYSTERESIS, avoid: Iterable[int] = ()) -> bool:
        """Re-run parent selection; returns True when parent or rank changed."""
        if self.is_root:
            return False
        candidates = [e for e in self.neighbors.values() if e.version == self.version]
        banned = self.banned().union(avoid)
        parent = select_preferred_parent(candidates, self.parent, banned, rank_unit, hysteresis)
        if parent is None:
            rank = INFINITE_RANK
        else:
            entry = self.neighbors[parent]
            rank = mrhof_rank(entry.advertised_rank, entry.etx, rank_unit)
        changed = parent != self.parent or rank != self.rank
        self.parent, self.rank = parent, rank
        return changed


def local_repair(node: NodeState) -> NodeState:
    """Detach from the DODAG: infinite rank, no parent, solicit DIOs."""
    node.parent = None
    node.rank = INFINITE_RANK
    node.dis_pending = True
    node.local_repairs += 1
    return node


@dataclass
class Dodag:
    root: int
    nodes: dict[int, NodeState]
    version: int = 0
    rank_unit: int = DEFAULT_RANK_UNIT

    def parent_map(self) -> dict[int, int | None]:
        return {n: s.parent for n, s in self.nodes.items() if n != self.root}


def global_repair(dodag: Dodag) -> Dodag:
    """Bump the DODAG version and recompute every rank from the root outward.

    Recomputation is a shortest-path pass over the neighbor tables, so a
    DODAG that already sits on its minimum-cost tree comes back unchanged.
    """
    dodag.version = (dodag.version + 1) % 256
    unit = dodag.rank_unit
    root = dodag.nodes[dodag.root]
    root.rank, root.parent, root.version = ROOT_RANK, None, dodag.version
    best: dict[int, tuple[int, int]] = {dodag.root: (ROOT_RANK, -1)}
    done: set[int] = set()
    heap = [(ROOT_RANK, -1, dodag.root)]
    while heap:
        rank, parent, nid = heapq.heappop(heap)
        if nid in done:
            continue
        done.add(nid)
        if nid != dodag.root:
            node = dodag.nodes[nid]
            node.rank, node.parent, node.version = rank, parent, dodag.version
            node.dis_pending = False
        for other_id, other in dodag.nodes.items():
            if other_id in done or other.is_root:
                continue
            entry = other.neighbors.get(nid)
            if entry is None or nid in other.banned():
                continue
            entry.advertised_rank = rank
            entry.version = dodag.version
            cand = (mrhof_rank(rank, entry.etx, unit), nid)
            if cand[0] < INFINITE_RANK and cand < best.get(other_id, (INFINITE_RANK, 1 << 30)):
                best[other_id] = cand
                heapq.heappush(heap, (cand[0], cand[1], other_id))
    for nid, node in dodag.nodes.items():
        if nid not in done:
            node.version = dodag.version
            node.parent, node.rank = None, INFINITE_RANK
    return dodag


def path_to_root(parents: Mapping[int, int | None], node: int, root: int) -> list[int] | None:
    """Nodes from ``node`` up to (excluding) the root, or None when detached or looping."""
    path, seen = [], set()
    current: int | None = node
    while current != root:
        if current is None or current in seen:
            return None
        seen.add(current)
        path.append(current)
        current = parents.get(current)
    return path
