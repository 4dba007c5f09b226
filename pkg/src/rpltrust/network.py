"""Packet-level simulation of one RPL network under attack and defense.

``Network`` owns the event loop, the shared medium, every node's RPL
state and the root-resident detectors. Passive schemes (average PFR,
recent PFR, repair counting) are scored in every run because they only
observe; the heartbeat, neighbor-monitoring and trust schemes change
traffic or topology and are active only when selected.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .attacks import DROP, AttackConfig, AttackerState, BadmouthAttack, PfrAttack
from .baselines import (DetectorVerdict, NeighborMonitor, avg_scheme, def_scheme, heartbeat_scheme,
                        rec_scheme, tprp_scheme)
from .defense import (DetectorState, ForgettingParams, NotificationMessage, SequenceTracker,
                      TrustEngine, WindowEvidence, build_notifications, decode_notifications, detect,
                      encode_notifications, handle_notification, observe_window, subtree_weights)
from .engine import (RPL_CONTROL, UDP_DATA, EnergyCoefficients, EnergyLedger, Packet, RadioModel,
                     Simulator, US_PER_S, airtime, charge, distance, rng_streams, seconds)
from .rpl import (INFINITE_RANK, ROOT_RANK, DioMessage, NeighborEntry, NodeState, TrickleTimer,
                  decode_dio, encode_dio, path_to_root, trickle_step)
from .scenario import ScenarioConfig

BROADCAST = 0
QUEUE_LIMIT = 32
BACKOFF_US = (320, 4000)
REBROADCAST_US = (10_000, 500_000)
MAX_AIRTIME_US = 10_000
PASSIVE_SCHEMES = ("avg", "rec", "def")
STREAMS = ("radio", "mac", "traffic", "attack", "trickle", "overhear")


@dataclass
class Frame:
    packet: Packet
    dest: int | None  # None = whatever the preferred parent is when the frame reaches the head
    hop: int | None = None
    attempt: int = 0


@dataclass
class RunResult:
    scheme: str
    threshold: float
    seed: int
    root: int
    nodes: list[int]
    attackers: list[int]
    attack_start: float
    window: float
    duration: float
    verdicts: dict[str, list[DetectorVerdict]]
    trust_rows: list[tuple]
    blacklist_times: dict[int, float]
    energy: dict[int, EnergyLedger]
    counters: dict[str, int]
    relays: dict[int, list[float]]
    parent_changes: list[tuple]
    notifications: list[tuple]
    final_parents: dict[int, int | None]

    @property
    def scored_nodes(self) -> list[int]:
        return [n for n in self.nodes if n != self.root]

    @property
    def honest(self) -> list[int]:
        return [n for n in self.scored_nodes if n not in self.attackers]

    def final_scores(self, scheme: str | None = None) -> dict[int, float]:
        """Score of every scored node in the last window of ``scheme``."""
        rows = self.verdicts[scheme or self.scheme]
        last = max((v.window for v in rows), default=-1)
        return {v.node: v.score for v in rows if v.window == last}

    def mean_honest_energy(self) -> float:
        honest = self.honest
        return sum(self.energy[n].joules for n in honest) / len(honest)


def _newer(a: int, b: int) -> bool:
    return 0 < (a - b) % 256 < 128


class Network:
    """One seeded run of a scenario under a given detection scheme."""

    def __init__(self, config: ScenarioConfig, scheme: str | None = None,
                 threshold: float | None = None, seed: int | None = None,
                 duration: float | None = None) -> None:
        self.config = config
        self.scheme = scheme or config.defense.scheme
        self.threshold = config.defense.threshold if threshold is None else threshold
        self.seed = config.seed if seed is None else seed
        self.duration = config.traffic.duration if duration is None else duration
        self.rng = rng_streams(self.seed, STREAMS)
        self.sim = Simulator()
        self.root = config.topology.root
        rc, rp = config.radio, config.rpl
        self.radio = RadioModel(rc.tx_range, rc.interference_range, rc.exponent)
        self.rank_unit, self.hysteresis = rp.rank_unit, rp.hysteresis
        self.imin, self.imax = seconds(rp.trickle_imin), seconds(rp.trickle_imax)

        positions = config.positions()
        self.ids = sorted(positions)
        e = config.energy
        coeffs = EnergyCoefficients(e.e_tx, e.e_rx, e.e_cpu, e.p_idle)
        attackers = set(config.attackers)
        self.nodes: dict[int, NodeState] = {}
        for n in self.ids:
            role = "root" if n == self.root else ("malicious" if n in attackers else "honest")
            self.nodes[n] = NodeState(n, positions[n], role, energy=EnergyLedger(coeffs))
        root = self.nodes[self.root]
        root.rank = ROOT_RANK

        # static link tables
        self.prob: dict[int, dict[int, float]] = {n: {} for n in self.ids}
        self.interferers: dict[int, frozenset[int]] = {}
        for a in self.ids:
            near = []
            for b in self.ids:
                d = distance(positions[a], positions[b])
                if a != b:
                    p = self.radio.delivery_probability(d)
                    if p > 0:
                        self.prob[a][b] = p
                if self.radio.interferes(d):
                    near.append(b)
            self.interferers[a] = frozenset(near)
        self.links = {a: sorted(self.prob[a].items()) for a in self.ids}

        # MAC
        self.queues: dict[int, deque[Frame]] = {n: deque() for n in self.ids}
        self.busy = {n: False for n in self.ids}
        self.active: list[tuple[int, int, int]] = []
        self.fail_streak: dict[tuple[int, int], int] = {}
        self.bitrate = rc.bitrate

        # RPL timers and bookkeeping
        self.trickle: dict[int, TrickleTimer | None] = {n: None for n in self.ids}
        self.trickle_token = {n: 0 for n in self.ids}
        self.dis_count = {n: 0 for n in self.ids}
        self.dis_token = {n: 0 for n in self.ids}
        self.version = 0
        self.local_repairs = 0
        self.view: dict[int, int | None] = {}
        self.seen: dict[int, set] = {n: set() for n in self.ids}
        self.seq = {n: 0 for n in self.ids}
        self._uid = 0
        self.counters: dict[str, int] = {}
        self.relays: dict[int, list[float]] = {n: [] for n in self.ids}
        self.parent_changes: list[tuple] = []
        self.notifications: list[tuple] = []
        self.abandoned: dict[int, int] = {}

        # adversaries
        a = config.attack
        self.attack_start = seconds(a.start)
        self.attackers: dict[int, AttackerState] = {}
        for n in sorted(attackers):
            s = a.settings_for(n)
            cfg = AttackConfig(
                drop_non_rpl=s.drop_non_rpl,
                pfr_attack=PfrAttack(s.epsilon, s.window, s.neighbor_sample) if s.pfr else None,
                badmouth=BadmouthAttack(s.num_victims) if s.badmouth else None,
                mix=s.mix,
            )
            self.attackers[n] = AttackerState(n, cfg)

        # root-side detectors
        d = config.defense
        self.window_us = seconds(d.window)
        self.window_index = 0
        tr = config.traffic
        self.tracker = SequenceTracker(tr.data_period, tr.jitter)
        self.pfr_history: dict[int, list[float | None]] = {n: [] for n in self.scored}
        self.verdicts: dict[str, list[DetectorVerdict]] = {s: [] for s in PASSIVE_SCHEMES}
        self.verdicts.setdefault(self.scheme, [])
        self.trust_rows: list[tuple] = []
        self.engine = None
        self.detector = None
        if self.scheme == "proposed":
            self.engine = TrustEngine(ForgettingParams(d.lambda_g, d.lambda_b), d.w_s, d.w_d,
                                      d.granularity)
            self.detector = DetectorState(self.threshold, d.window, d.recovery_windows * d.window,
                                          root=self.root)
        self.monitors: dict[int, NeighborMonitor] = {}
        if self.scheme == "tprp":
            self.monitors = {n: NeighborMonitor(n) for n in self.ids}
            self.reports: dict[int, dict[int, float]] = {}
        self.echo_requests: dict[int, int] = {}
        self.echo_replies: dict[int, int] = {}
        self.listeners = sorted(set(self.attackers) | set(self.monitors))

    # ------------------------------------------------------------------ helpers

    @property
    def scored(self) -> list[int]:
        return [n for n in self.ids if n != self.root]

    @property
    def now_s(self) -> float:
        return self.sim.now / US_PER_S

    def count(self, key: str, amount: int = 1) -> None:
        self.counters[key] = self.counters.get(key, 0) + amount

    def parents(self) -> dict[int, int | None]:
        return {n: s.parent for n, s in self.nodes.items() if n != self.root}

    def descendants(self, node: int) -> set[int]:
        children: dict[int, list[int]] = {}
        for n, s in self.nodes.items():
            if s.parent is not None:
                children.setdefault(s.parent, []).append(n)
        out, stack = set(), [node]
        while stack:
            for c in children.get(stack.pop(), ()):
                if c not in out:
                    out.add(c)
                    stack.append(c)
        return out

    def _next_uid(self) -> int:
        self._uid += 1
        return self._uid

    # ------------------------------------------------------------------ MAC

    def send(self, node: int, packet: Packet, dest: int | None) -> None:
        q = self.queues[node]
        if len(q) >= QUEUE_LIMIT:
            self.count("drop-queue")
            return
        q.append(Frame(packet, dest))
        if not self.busy[node]:
            self.busy[node] = True
            self.sim.after(self.rng["mac"].randint(*BACKOFF_US), "timer-fire", self._service, node)

    def _service(self, node: int) -> None:
        q = self.queues[node]
        while q:
            frame = q[0]
            if frame.hop is None:
                frame.hop = self.nodes[node].parent if frame.dest is None else frame.dest
                if frame.hop is None:
                    q.popleft()
                    self._drop(frame.packet, "no-route")
                    continue
            self._transmit(node, frame)
            return
        self.busy[node] = False

    def _transmit(self, node: int, frame: Frame) -> None:
        pkt = frame.packet
        pkt.mac_src = node
        pkt.mac_dst = None if frame.hop == BROADCAST else frame.hop
        start = self.sim.now
        end = start + airtime(pkt.size, self.bitrate)
        horizon = start - MAX_AIRTIME_US
        self.active = [t for t in self.active if t[1] > horizon]
        self.active.append((start, end, node))
        charge(self.nodes[node].energy, "tx")
        frame.attempt += 1
        self.count(f"tx-{pkt.kind}")
        self.sim.at(end, "packet-arrival", self._finish, (node, frame, start, end))

    def _collided(self, receiver: int, sender: int, start: int, end: int) -> bool:
        near = self.interferers[receiver]
        for s, e, who in self.active:
            if who != sender and s < end and e > start and who in near:
                return True
        return False

    def _finish(self, args: tuple) -> None:
        node, frame, start, end = args
        pkt = frame.packet
        draw = self.rng["radio"].random
        if frame.hop == BROADCAST:
            self.queues[node].popleft()
            for r, p in self.links[node]:
                if draw() < p:
                    if self._collided(r, node, start, end):
                        self.count("collisions")
                        continue
                    charge(self.nodes[r].energy, "rx")
                    self.count(f"rx-{pkt.kind}")
                    self._receive(r, pkt, node)
            self._service_later(node)
            return
        r = frame.hop
        p = self.prob[node].get(r, 0.0)
        ok = draw() < p
        if ok and self._collided(r, node, start, end):
            self.count("collisions")
            ok = False
        if self.listeners:
            self._overhear(node, r, pkt, ok, start, end)
        if ok:
            self.queues[node].popleft()
            self.fail_streak.pop((node, r), None)
            charge(self.nodes[r].energy, "rx")
            self.count(f"rx-{pkt.kind}")
            self._receive(r, pkt, node)
            self._service_later(node)
        elif frame.attempt < self.config.radio.max_attempts:
            self.sim.after(self.rng["mac"].randint(*BACKOFF_US), "timer-fire", self._retry, (node, frame))
        else:
            self.queues[node].popleft()
            self._drop(pkt, "mac")
            streak = self.fail_streak.get((node, r), 0) + 1
            self.fail_streak[(node, r)] = streak
            if r == self.nodes[node].parent and streak >= self.config.rpl.max_link_failures:
                self._parent_unreachable(node, r)
            self._service_later(node)

    def _retry(self, args: tuple) -> None:
        node, frame = args
        if self.queues[node] and self.queues[node][0] is frame:
            self._transmit(node, frame)

    def _service_later(self, node: int) -> None:
        if self.queues[node]:
            self.sim.after(self.rng["mac"].randint(*BACKOFF_US), "timer-fire", self._service, node)
        else:
            self.busy[node] = False

    def _drop(self, pkt: Packet, reason: str) -> None:
        self.count(f"drop-{reason}")
        if pkt.kind == "data":
            self.count(f"data-drop-{reason}")

    def _overhear(self, sender: int, receiver: int, pkt: Packet, ok: bool, start: int, end: int) -> None:
        is_data = pkt.kind == "data"
        uid = pkt.uid
        draw = self.rng["overhear"].random
        for m in self.listeners:
            if m == sender:
                if is_data and ok and receiver != self.root:
                    self._watch_handover(m, receiver, uid)
                continue
            if m == receiver:
                if is_data and ok:
                    self._watch_forward(m, sender, uid)
                continue
            p = self.prob[sender].get(m)
            if p is None or draw() >= p or self._collided(m, sender, start, end):
                continue
            charge(self.nodes[m].energy, "rx")
            self.count("rx-overheard")
            if not is_data:
                continue
            if m in self.monitors:
                charge(self.nodes[m].energy, "cpu", self.config.defense.monitor_cpu_ops)
            self._watch_forward(m, sender, uid)
            if ok and receiver != self.root:
                self._watch_handover(m, receiver, uid)

    def _watch_handover(self, watcher: int, neighbor: int, uid: int) -> None:
        if watcher in self.attackers:
            self.attackers[watcher].saw_handover(neighbor, uid)
        if watcher in self.monitors:
            self.monitors[watcher].handover(neighbor, uid)

    def _watch_forward(self, watcher: int, neighbor: int, uid: int) -> None:
        if watcher in self.attackers:
            self.attackers[watcher].saw_forward(neighbor, uid)
        if watcher in self.monitors:
            self.monitors[watcher].forward(neighbor, uid)

    # ------------------------------------------------------------------ dispatch

    def _receive(self, r: int, pkt: Packet, sender: int) -> None:
        charge(self.nodes[r].energy, "cpu")
        kind = pkt.kind
        if kind == "dio":
            self._on_dio(r, pkt, sender)
        elif kind == "dis":
            if self.nodes[r].attached:
                self._trickle_reset(r)
        elif kind == "data":
            self._on_data(r, pkt)
        elif kind == "dao":
            self._on_upward(r, pkt)
        elif kind == "echo-req":
            self._on_echo_request(r, pkt)
        elif kind in ("echo-rep", "report"):
            self._on_upward(r, pkt)

    # ------------------------------------------------------------------ RPL

    def _dio_packet(self, node: int, options: bytes = b"", epoch: int | None = None) -> Packet:
        s = self.nodes[node]
        msg = DioMessage(rpl_instance_id=0, version=s.version, rank=min(s.rank, INFINITE_RANK),
                         grounded=True, mop=2, prf=0, dtsn=0,
                         dodag_id=self.root.to_bytes(16, "big"), options=options)
        payload = encode_dio(msg)
        meta = {} if epoch is None else {"epoch": epoch}
        return Packet(RPL_CONTROL, node, BROADCAST, node, None, payload, size=20 + len(payload),
                      kind="dio", uid=self._next_uid(), created=self.sim.now, meta=meta)

    def _broadcast_dio(self, node: int, options: bytes = b"", epoch: int | None = None) -> None:
        self.count("dio-tx")
        self.send(node, self._dio_packet(node, options, epoch), BROADCAST)

    def _trickle_reset(self, node: int) -> None:
        draw = self.rng["trickle"].random()
        timer = self.trickle[node]
        if timer is None:
            timer = TrickleTimer.start(self.imin, self.imax, self.sim.now)
        timer, _ = trickle_step(timer, False, self.sim.now, draw)
        self._arm_trickle(node, timer)

    def _arm_trickle(self, node: int, timer: TrickleTimer) -> None:
        self.trickle[node] = timer
        self.trickle_token[node] += 1
        self.sim.at(timer.next_fire, "timer-fire", self._trickle_fire, (node, self.trickle_token[node]))

    def _trickle_fire(self, args: tuple) -> None:
        node, token = args
        if token != self.trickle_token[node] or not self.nodes[node].attached:
            return
        self._broadcast_dio(node)
        timer, _ = trickle_step(self.trickle[node], True, self.sim.now, self.rng["trickle"].random())
        self._arm_trickle(node, timer)

    def _stop_trickle(self, node: int) -> None:
        self.trickle[node] = None
        self.trickle_token[node] += 1

    def _send_dis(self, node: int) -> None:
        self.dis_token[node] += 1
        self._dis_tick((node, self.dis_token[node]))

    def _dis_tick(self, args: tuple) -> None:
        node, token = args
        s = self.nodes[node]
        if token != self.dis_token[node] or s.attached:
            return
        self.dis_count[node] += 1
        self.count("dis-tx")
        pkt = Packet(RPL_CONTROL, node, BROADCAST, node, None, b"", size=24, kind="dis",
                     uid=self._next_uid(), created=self.sim.now)
        self.send(node, pkt, BROADCAST)
        limit = self.config.rpl.dis_retry_limit
        delay = self.imin if self.dis_count[node] < limit else 15 * self.imin
        self.sim.after(delay, "timer-fire", self._dis_tick, (node, token))

    def _on_dio(self, r: int, pkt: Packet, sender: int) -> None:
        node = self.nodes[r]
        if node.is_root:
            return
        dio = decode_dio(pkt.payload)
        entry = node.neighbors.get(sender)
        if entry is None:
            node.neighbors[sender] = NeighborEntry(sender, 1.0 / self.prob[r][sender], dio.rank,
                                                   self.sim.now, dio.version)
        else:
            entry.advertised_rank, entry.last_heard, entry.version = dio.rank, self.sim.now, dio.version
        if dio.rank < INFINITE_RANK and _newer(dio.version, node.version):
            old_parent, old_rank = node.parent, node.rank
            node.version = dio.version
            node.parent, node.rank = None, INFINITE_RANK
            node.reselect(self.rank_unit, self.hysteresis, self.descendants(r))
            self._after_change(r, old_parent, old_rank, "version")
        elif dio.version == node.version:
            self._reselect(r, "dio")
        if dio.options and "epoch" in pkt.meta:
            self._on_notifications(r, dio.options, pkt.meta["epoch"])

    def _reselect(self, r: int, reason: str) -> None:
        node = self.nodes[r]
        old_parent, old_rank = node.parent, node.rank
        node.reselect(self.rank_unit, self.hysteresis, self.descendants(r))
        self._after_change(r, old_parent, old_rank, reason)

    def _after_change(self, r: int, old_parent: int | None, old_rank: int, reason: str) -> None:
        node = self.nodes[r]
        if node.parent == old_parent and node.rank == old_rank:
            return
        if node.parent != old_parent:
            self.parent_changes.append((self.now_s, r, old_parent, node.parent, reason))
            if (old_parent is not None and reason != "version"
                    and self.sim.now >= seconds(self.config.traffic.start)):
                self.abandoned[old_parent] = self.abandoned.get(old_parent, 0) + 1
            if node.parent is None:
                self._detach(r, count=old_parent is not None)
                return
            self._send_dao(r)
            if old_parent is None:
                self.dis_token[r] += 1
                self.dis_count[r] = 0
            self._trickle_reset(r)
        # a rank-only change rides on the next scheduled DIO

    def _detach(self, r: int, count: bool = True) -> None:
        node = self.nodes[r]
        node.parent, node.rank = None, INFINITE_RANK
        node.dis_pending = True
        if count:
            node.local_repairs += 1
            self.local_repairs += 1
            self.count("local-repairs")
        self._stop_trickle(r)
        # poison: tell children we no longer offer a route
        self._broadcast_dio(r)
        self._send_dis(r)
        if self.local_repairs >= self.config.rpl.global_repair_threshold:
            self.local_repairs = 0
            self._global_repair()

    def _global_repair(self) -> None:
        self.count("global-repairs")
        self.version = (self.version + 1) % 256
        self.nodes[self.root].version = self.version
        self._trickle_reset(self.root)

    def _parent_unreachable(self, node: int, parent: int) -> None:
        s = self.nodes[node]
        s.neighbors.pop(parent, None)
        self.fail_streak.pop((node, parent), None)
        self._reselect(node, "link")

    def _send_dao(self, node: int) -> None:
        s = self.nodes[node]
        if s.parent is None:
            return
        self.count("dao-tx")
        pkt = Packet(RPL_CONTROL, node, self.root, node, s.parent, b"", size=40, kind="dao",
                     uid=self._next_uid(), created=self.sim.now, meta={"child": node, "parent": s.parent})
        self.send(node, pkt, None)

    def _dao_tick(self, node: int) -> None:
        if self.nodes[node].attached:
            self._send_dao(node)
        period = seconds(self.config.rpl.dao_period)
        self.sim.after(period + self.rng["traffic"].randint(0, period // 10), "timer-fire",
                       self._dao_tick, node)

    def _on_upward(self, r: int, pkt: Packet) -> None:
        if r != self.root:
            self.send(r, pkt, None)
            return
        if pkt.kind == "dao":
            child = pkt.meta["child"]
            self.view[child] = pkt.meta["parent"]
            self.tracker.register(child, self.now_s)
        elif pkt.kind == "echo-rep":
            self.echo_replies[pkt.ip_src] = self.echo_replies.get(pkt.ip_src, 0) + 1
        elif pkt.kind == "report":
            self.reports[pkt.ip_src] = pkt.meta["table"]

    # ------------------------------------------------------------------ data plane

    def _app_tick(self, node: int) -> None:
        tr = self.config.traffic
        period = tr.data_period * (1.0 + self.rng["traffic"].uniform(-tr.jitter, tr.jitter))
        self.sim.after(seconds(period), "app-send", self._app_tick, node)
        seq = self.seq[node]
        self.seq[node] = (seq + 1) % 256
        self.count("data-sent")
        pkt = Packet(UDP_DATA, node, self.root, node, None, bytes([seq]), size=tr.packet_size,
                     kind="data", uid=self._next_uid(), created=self.sim.now)
        if self.nodes[node].parent is None:
            self._drop(pkt, "no-route")
            return
        self.send(node, pkt, None)

    def _on_data(self, r: int, pkt: Packet) -> None:
        if r == self.root:
            self.count("data-delivered")
            self.tracker.on_receive(pkt.ip_src, pkt.seq, self.now_s)
            return
        attacker = self.attackers.get(r)
        if attacker is not None and self.sim.now >= self.attack_start:
            if attacker.decide(pkt, self.rng["attack"]) is DROP:
                self._drop(pkt, "attack")
                return
        self.relays[r].append(self.now_s)
        self.send(r, pkt, None)

    # ------------------------------------------------------------------ heartbeat

    def _heartbeat(self) -> None:
        self.sim.after(seconds(self.config.defense.heartbeat_period), "timer-fire", self._heartbeat)
        for n in self.scored:
            self.echo_requests[n] = self.echo_requests.get(n, 0) + 1
            path = path_to_root(self.view, n, self.root)
            if path is None:
                continue
            route = path[::-1]
            self.count("echo-tx")
            pkt = Packet(RPL_CONTROL, self.root, n, self.root, route[0], b"", size=48, kind="echo-req",
                         uid=self._next_uid(), created=self.sim.now, meta={"route": route})
            self.send(self.root, pkt, route[0])

    def _on_echo_request(self, r: int, pkt: Packet) -> None:
        if r == pkt.ip_dst:
            self.count("echo-tx")
            reply = Packet(RPL_CONTROL, r, self.root, r, None, b"", size=48, kind="echo-rep",
                           uid=self._next_uid(), created=self.sim.now)
            self.send(r, reply, None)
            return
        route = pkt.meta["route"]
        i = route.index(r) if r in route else -1
        if 0 <= i < len(route) - 1:
            self.send(r, pkt, route[i + 1])
        else:
            self._drop(pkt, "no-route")

    # ------------------------------------------------------------------ neighbor monitoring

    def _send_reports(self) -> None:
        victims_zero = self.config.defense.tprp_dishonest
        for n in self.ids:
            table = self.monitors[n].pfr_table()
            if n in self.attackers and victims_zero:
                table[n] = 1.0
                for v in self.attackers[n].victims:
                    table[v] = 0.0
            if n == self.root:
                self.reports[n] = table
                continue
            if self.nodes[n].parent is None or not table:
                continue
            charge(self.nodes[n].energy, "cpu", self.config.defense.monitor_cpu_ops)
            self.count("report-tx")
            pkt = Packet(RPL_CONTROL, n, self.root, n, None, b"", size=24 + 2 * len(table),
                         kind="report", uid=self._next_uid(), created=self.sim.now, meta={"table": table})
            self.send(n, pkt, None)

    # ------------------------------------------------------------------ windows

    def _attack_roll(self, period: int) -> None:
        self.sim.after(period, "window-close", self._attack_roll, period)
        parents = self.parents()
        for n, state in self.attackers.items():
            children = sorted(c for c, p in parents.items() if p == n)
            state.roll_window(children, self.rng["attack"])

    def _window_close(self) -> None:
        self.sim.after(self.window_us, "window-close", self._window_close)
        k = self.window_index
        self.window_index += 1
        now = self.now_s
        d = self.config.defense
        evidence = observe_window(self.tracker, self.view, k, self.root, d.attribution, now)
        scored = self.scored
        for n in scored:
            outcomes = evidence.by_source.get(n)
            self.pfr_history[n].append(sum(outcomes) / len(outcomes) if outcomes else None)
        self.verdicts["avg"].extend(avg_scheme(self.pfr_history, k, scored))
        self.verdicts["rec"].extend(rec_scheme(self.pfr_history, k, scored))
        self.verdicts["def"].extend(def_scheme(self.abandoned, scored, k))
        if self.scheme == "hp":
            self.verdicts["hp"].extend(heartbeat_scheme(self.echo_requests, self.echo_replies, scored, k))
        elif self.scheme == "tprp":
            self.verdicts["tprp"].extend(tprp_scheme(self.reports, scored, k))
            self._send_reports()
        elif self.scheme == "proposed":
            self._trust_window(evidence, k, now)

    def _trust_window(self, evidence: WindowEvidence, k: int, now: float) -> None:
        engine, state = self.engine, self.detector
        for node, outcomes in evidence.attributed.items():
            engine.append(node, outcomes, k)
        weights = subtree_weights(self.view, evidence.sent, self.root)
        records = engine.evaluate(self.scored, self.view, weights, k)
        detect(state, records, now)
        for n in self.scored:
            rec = records[n]
            self.trust_rows.append((k, n, rec.self_trust, rec.descendant_trust, rec.aggregate,
                                    int(n in state.watchlist), int(n in state.blacklist)))
            self.verdicts["proposed"].append(DetectorVerdict(n, rec.aggregate, k))
        before = set(state.announced)
        messages = build_notifications(state, self.view, now)
        fresh = [m for m in messages if m.flag == 0 or m.node_id not in before]
        # a DAO still naming a blacklisted parent means someone missed the last flood
        lagging = any(p in state.blacklist for c, p in self.view.items() if c not in state.blacklist)
        if fresh or lagging:
            # re-announce the whole blacklist with every flood so stragglers catch up
            full = [m for m in messages if m.flag == 0]
            full += [NotificationMessage(1, b) for b in sorted(state.blacklist)]
            self.count("notify-floods")
            self._flood(self.root, encode_notifications(full), state.epoch)

    def _flood(self, node: int, options: bytes, epoch: int) -> None:
        repeats = max(1, self.config.defense.notify_repeats)
        for i in range(repeats):
            delay = self.rng["mac"].randint(*REBROADCAST_US) * (i + 1)
            self.sim.after(delay, "timer-fire", self._flood_send, (node, options, epoch))

    def _flood_send(self, args: tuple) -> None:
        node, options, epoch = args
        self._broadcast_dio(node, options, epoch)

    def _on_notifications(self, r: int, options: bytes, epoch: int) -> None:
        node = self.nodes[r]
        fresh = False
        for msg in decode_notifications(options):
            old_parent, old_rank = node.parent, node.rank
            actions = handle_notification(node, msg, epoch, self.seen[r], self.rank_unit,
                                          self.hysteresis, self.descendants(r))
            if not actions:
                continue
            fresh = True
            self.notifications.append((self.now_s, r, msg.flag, msg.node_id, epoch, ",".join(actions)))
            if "reparent" in actions or node.parent != old_parent:
                self._after_change(r, old_parent, old_rank, "notify")
        if fresh:
            self._flood(r, options, epoch)

    # ------------------------------------------------------------------ run

    def _start(self) -> None:
        sim, mac = self.sim, self.rng["mac"]
        self._trickle_reset(self.root)
        tr = self.config.traffic
        for n in self.scored:
            self.nodes[n].dis_pending = True
            sim.at(mac.randint(0, self.imin), "timer-fire", self._send_dis, n)
            first = seconds(tr.start) + seconds(self.rng["traffic"].uniform(0, tr.data_period))
            sim.at(first, "app-send", self._app_tick, n)
            dao_first = seconds(self.config.rpl.dao_period) + self.rng["traffic"].randint(0, seconds(30))
            sim.at(dao_first, "timer-fire", self._dao_tick, n)
        attack_window = self.config.attack.window or self.config.defense.window
        if self.attackers:
            sim.at(self.attack_start + seconds(attack_window), "window-close", self._attack_roll,
                   seconds(attack_window))
        sim.at(self.window_us, "window-close", self._window_close)
        if self.scheme == "hp":
            sim.at(seconds(tr.start), "timer-fire", self._heartbeat)

    def run(self) -> RunResult:
        self._start()
        end = seconds(self.duration)
        self.sim.run_until(end)
        duty = self.config.energy.duty_cycle
        for n in self.ids:
            listening = 1.0 if n in self.listeners else duty
            charge(self.nodes[n].energy, "idle", self.duration * listening)
        blacklist = dict(self.detector.blacklisted_at) if self.detector else {}
        return RunResult(
            scheme=self.scheme,
            threshold=self.threshold,
            seed=self.seed,
            root=self.root,
            nodes=list(self.ids),
            attackers=sorted(self.attackers),
            attack_start=self.attack_start / US_PER_S,
            window=self.config.defense.window,
            duration=self.duration,
            verdicts=self.verdicts,
            trust_rows=self.trust_rows,
            blacklist_times=blacklist,
            energy={n: s.energy for n, s in self.nodes.items()},
            counters=dict(sorted(self.counters.items())),
            relays=self.relays,
            parent_changes=self.parent_changes,
            notifications=self.notifications,
            final_parents=self.parents(),
        )


def simulate(config: ScenarioConfig, scheme: str | None = None, threshold: float | None = None,
             seed: int | None = None, duration: float | None = None) -> RunResult:
    return Network(config, scheme, threshold, seed, duration).run()
