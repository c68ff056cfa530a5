"""Deterministic discrete-event network substrate.

Events execute in (deliver_at, sequence) order; handlers may only schedule
strictly-later events, so identical seeds and configs replay identical
logs. Partitions drop cross-side messages at delivery time (in-flight ones
included); healing restores the link but never replays dropped traffic.

Firewalled nodes model stateful NAT: an inbound message is delivered only
over a connection the node opened itself, either a persistent tether to a
bridge node or the short-lived return path of a recent outbound message.
"""

from dataclasses import dataclass, field
import heapq

from .streams import RngStreams


class SimLogicError(RuntimeError):
    pass


class SimInputError(ValueError):
    pass


@dataclass(order=True)
class SimEvent:
    deliver_at: float
    sequence: int
    destination: str = field(compare=False)
    payload: object = field(compare=False)
    source: str | None = field(compare=False, default=None)


# -- infrastructure payloads -------------------------------------------------------


@dataclass(frozen=True)
class Timer:
    name: str
    data: object = None


@dataclass(frozen=True)
class Ping:
    nonce: int


@dataclass(frozen=True)
class Pong:
    nonce: int


@dataclass(frozen=True)
class BridgeTestRequest:
    pass


@dataclass(frozen=True)
class BridgeInboundProbe:
    """Models a fresh inbound connection attempt, so stateful firewalls
    refuse it even right after the node's own outbound test request."""

    NEW_CONNECTION = True


@dataclass(frozen=True)
class TetherOpen:
    pass


@dataclass(frozen=True)
class TetherKeepAlive:
    pass


@dataclass(frozen=True)
class TetherKeepAliveReply:
    pass


@dataclass(frozen=True)
class BridgeRelay:
    """Envelope a bridge unwraps and pushes to a tethered node."""

    target: str
    inner: object


DIRECT = "direct"
BRIDGED = "bridged"


class Network:
    """Event queue, links, latency, partitions, regions, and firewalls."""

    def __init__(
        self,
        streams: RngStreams,
        latency_base: float = 0.010,
        latency_jitter: float = 0.005,
        reply_window: float = 1.5,
    ):
        self.streams = streams
        self.latency_base = latency_base
        self.latency_jitter = latency_jitter
        self.reply_window = reply_window
        self.now = 0.0
        self._seq = 0
        self._heap: list[SimEvent] = []
        self.handlers: dict[str, object] = {}
        self.regions: dict[str, str] = {}
        self.firewalled: set[str] = set()
        self.tethers: dict[str, set[str]] = {}  # firewalled node -> bridges it opened
        self.partitions: list[tuple[frozenset, frozenset]] = []
        self.log: list[str] = []
        self.delivered = 0
        self.dropped_partition = 0
        self.dropped_firewall = 0
        # (sender, peer) -> last outbound time, the stateful-firewall flow table
        self._last_outbound: dict[tuple[str, str], float] = {}

    # -- topology ------------------------------------------------------------------

    def add_node(self, node_id: str, handler, region: str = "r0", firewalled: bool = False) -> None:
        if node_id in self.handlers:
            raise SimInputError(f"duplicate node id {node_id}")
        self.handlers[node_id] = handler
        self.regions[node_id] = region
        if firewalled:
            self.firewalled.add(node_id)
            self.tethers[node_id] = set()

    def node_ids(self) -> list[str]:
        return sorted(self.handlers)

    def partition(self, side_a, side_b) -> None:
        a, b = frozenset(side_a), frozenset(side_b)
        if a & b:
            raise SimInputError("partition sides must be disjoint")
        self.partitions.append((a, b))
        self._log(f"partition sides={sorted(a)}|{sorted(b)}")

    def heal(self) -> None:
        self.partitions.clear()
        self._log("heal")

    def reachable(self, a: str, b: str) -> bool:
        for side_a, side_b in self.partitions:
            if (a in side_a and b in side_b) or (a in side_b and b in side_a):
                return False
        return True

    def open_tether(self, node: str, bridge: str) -> None:
        self.tethers.setdefault(node, set()).add(bridge)

    def drop_tether(self, node: str, bridge: str) -> None:
        self.tethers.get(node, set()).discard(bridge)

    # -- scheduling ------------------------------------------------------------------

    def _log(self, text: str) -> None:
        self.log.append(f"{self.now:.6f} {text}")

    def _push(self, deliver_at: float, destination: str, payload, source=None) -> None:
        if deliver_at <= self.now:
            raise SimLogicError("events must be scheduled strictly later than now")
        self._seq += 1
        heapq.heappush(
            self._heap,
            SimEvent(
                deliver_at=deliver_at,
                sequence=self._seq,
                destination=destination,
                payload=payload,
                source=source,
            ),
        )

    def schedule(self, delay: float, destination: str, payload) -> None:
        """Self/timer event: not subject to links, latency, or partitions."""
        self._push(self.now + delay, destination, payload)

    def latency(self, src: str, dst: str) -> float:
        jitter = self.streams.stream("latency", src, dst).random() * self.latency_jitter
        return self.latency_base + jitter

    def send(self, src: str, dst: str, payload) -> None:
        """Schedule a message for delivery; drop rules apply at delivery time."""
        if dst not in self.handlers:
            raise SimInputError(f"unknown destination {dst}")
        if src == dst:
            raise SimInputError("use schedule() for self events")
        self._last_outbound[(src, dst)] = self.now
        self._push(self.now + self.latency(src, dst), dst, payload, source=src)

    def _firewall_allows(self, src: str, dst: str, payload) -> bool:
        if dst not in self.firewalled:
            return True
        if src in self.tethers.get(dst, ()):  # connection the node opened
            return True
        if getattr(type(payload), "NEW_CONNECTION", False):
            return False
        last = self._last_outbound.get((dst, src))
        return last is not None and self.now - last <= self.reply_window

    def run_until(self, t_end: float) -> None:
        if t_end < self.now:
            raise SimLogicError("cannot run backwards")
        while self._heap and self._heap[0].deliver_at <= t_end:
            event = heapq.heappop(self._heap)
            self.now = event.deliver_at
            kind = type(event.payload).__name__
            if event.source is not None:
                if not self.reachable(event.source, event.destination):
                    self.dropped_partition += 1
                    self._log(f"drop-partition {event.source}->{event.destination} {kind}")
                    continue
                if not self._firewall_allows(event.source, event.destination, event.payload):
                    self.dropped_firewall += 1
                    self._log(f"drop-firewall {event.source}->{event.destination} {kind}")
                    continue
                self.delivered += 1
                self._log(f"deliver {event.source}->{event.destination} {kind}")
            handler = self.handlers[event.destination]
            handler.handle(self, event.source, event.payload)
        self.now = t_end


class NodeProcess:
    """Base node process: liveness pings, partition defenses, bridge tethers.

    Subclasses override handle_app() for protocol traffic. All per-node
    state lives on the instance; nothing is shared across nodes except via
    scheduled events.
    """

    PING_INTERVAL = 1.0
    PING_DEAD_AFTER = 3  # missed intervals
    MONITOR_WINDOW = 5.0
    HANDSHAKE_TIMEOUT = 0.5
    KEEPALIVE_INTERVAL = 2.0

    def __init__(
        self,
        node_id: str,
        region: str = "r0",
        monitor_connectivity: bool = False,
        min_regions: int = 1,
        bridges=(),
        firewalled: bool = False,
    ):
        self.id = node_id
        self.region = region
        self.monitor_connectivity = monitor_connectivity
        self.min_regions = min_regions
        self.bridges = list(bridges)
        self.firewalled = firewalled
        self.peers: list[str] = []
        self.last_pong: dict[str, float] = {}
        self.baseline_peer_count: int | None = None
        self.delay_connectivity = False
        self.delay_regions = False
        self.access_mode: str | None = None
        self.tethered_to: set[str] = set()
        self.last_keepalive_reply: dict[str, float] = {}
        self._probe_received = False
        self.served_clients: dict[int, set] = {}  # bridge side: day -> client node ids
        self._nonce = 0

    # -- lifecycle ---------------------------------------------------------------------

    def start(self, net: Network) -> None:
        self.peers = [p for p in net.node_ids() if p != self.id]
        for peer in self.peers:
            self.last_pong[peer] = 0.0
        if self.monitor_connectivity or self.min_regions > 1:
            net.schedule(self.PING_INTERVAL, self.id, Timer("ping"))
            net.schedule(self.MONITOR_WINDOW, self.id, Timer("monitor-window"))
        if self.bridges:
            stagger = sum(self.id.encode("utf-8")) % 7  # stable across processes
            net.schedule(0.001 + 0.0001 * stagger, self.id, Timer("handshake"))

    # -- liveness + defenses ------------------------------------------------------------

    def reachable_peers(self, net: Network) -> list[str]:
        dead_after = self.PING_INTERVAL * self.PING_DEAD_AFTER
        return [p for p in self.peers if net.now - self.last_pong[p] <= dead_after]

    def connectivity_ratio(self, net: Network) -> float:
        """Currently reachable peers against the window-start baseline."""
        if self.baseline_peer_count in (None, 0):
            return 1.0
        return min(1.0, len(self.reachable_peers(net)) / self.baseline_peer_count)

    def region_coverage(self, net: Network) -> set:
        regions = {self.region}
        regions.update(net.regions[p] for p in self.reachable_peers(net))
        return regions

    def delays_transactions(self) -> bool:
        return self.delay_connectivity or self.delay_regions

    def _refresh_defense_flags(self, net: Network) -> None:
        if self.monitor_connectivity:
            ratio = self.connectivity_ratio(net)
            if ratio < 0.5:
                if not self.delay_connectivity:
                    net._log(f"defense-delay-on node={self.id} ratio={ratio:.3f}")
                self.delay_connectivity = True
            elif self.delay_connectivity:
                net._log(f"defense-delay-off node={self.id} ratio={ratio:.3f}")
                self.delay_connectivity = False
        if self.min_regions > 1:
            covered = len(self.region_coverage(net))
            should_delay = covered < self.min_regions
            if should_delay and not self.delay_regions:
                net._log(f"defense-regions-on node={self.id} covered={covered}")
            elif self.delay_regions and not should_delay:
                net._log(f"defense-regions-off node={self.id} covered={covered}")
            self.delay_regions = should_delay

    # -- event dispatch -------------------------------------------------------------------

    def handle(self, net: Network, src, payload) -> None:
        if isinstance(payload, Timer):
            self.handle_timer(net, payload)
        elif isinstance(payload, Ping):
            net.send(self.id, src, Pong(nonce=payload.nonce))
        elif isinstance(payload, Pong):
            self.last_pong[src] = net.now
        elif isinstance(payload, BridgeTestRequest):
            net.send(self.id, src, BridgeInboundProbe())
        elif isinstance(payload, BridgeInboundProbe):
            self._probe_received = True
        elif isinstance(payload, TetherOpen):
            # bridge side: remember the served client for compensation
            day = self.current_day(net)
            self.served_clients.setdefault(day, set()).add(src)
            net.send(self.id, src, TetherKeepAliveReply())
        elif isinstance(payload, TetherKeepAlive):
            day = self.current_day(net)
            self.served_clients.setdefault(day, set()).add(src)
            net.send(self.id, src, TetherKeepAliveReply())
        elif isinstance(payload, TetherKeepAliveReply):
            self.last_keepalive_reply[src] = net.now
        elif isinstance(payload, BridgeRelay):
            self.relay_to_tethered(net, payload)
        else:
            self.handle_app(net, src, payload)

    def handle_timer(self, net: Network, timer: Timer) -> None:
        if timer.name == "ping":
            self._nonce += 1
            for peer in self.peers:
                net.send(self.id, peer, Ping(nonce=self._nonce))
            self._refresh_defense_flags(net)
            net.schedule(self.PING_INTERVAL, self.id, Timer("ping"))
        elif timer.name == "monitor-window":
            # baseline refresh is frozen while delaying, so recovery is judged
            # against the pre-drop world until connectivity actually returns
            if not self.delays_transactions():
                self.baseline_peer_count = len(self.reachable_peers(net))
            net.schedule(self.MONITOR_WINDOW, self.id, Timer("monitor-window"))
        elif timer.name == "handshake":
            self.begin_handshake(net)
        elif timer.name == "handshake-verdict":
            self.finish_handshake(net, timer.data)
        elif timer.name == "keepalive":
            self.keepalive_tick(net)
        else:
            self.handle_app_timer(net, timer)

    # -- bridge handshake -------------------------------------------------------------------

    def begin_handshake(self, net: Network) -> None:
        if not self.bridges:
            return
        bridge = self.bridges[0]
        self._probe_received = False
        net.send(self.id, bridge, BridgeTestRequest())
        net.schedule(self.HANDSHAKE_TIMEOUT, self.id, Timer("handshake-verdict", bridge))

    def finish_handshake(self, net: Network, bridge: str) -> None:
        if self._probe_received:
            self.access_mode = DIRECT
            net._log(f"handshake node={self.id} mode=direct")
            return
        self.access_mode = BRIDGED
        for b in self.bridges:
            net.open_tether(self.id, b)
            self.tethered_to.add(b)
            self.last_keepalive_reply[b] = net.now
            net.send(self.id, b, TetherOpen())
        net._log(f"handshake node={self.id} mode=bridged bridges={sorted(self.bridges)}")
        net.schedule(self.KEEPALIVE_INTERVAL, self.id, Timer("keepalive"))

    def keepalive_tick(self, net: Network) -> None:
        dead_after = self.KEEPALIVE_INTERVAL * 3
        for bridge in sorted(self.tethered_to):
            if net.now - self.last_keepalive_reply.get(bridge, 0.0) > dead_after:
                net.drop_tether(self.id, bridge)
                self.tethered_to.discard(bridge)
                net._log(f"tether-dead node={self.id} bridge={bridge}")
            else:
                net.send(self.id, bridge, TetherKeepAlive())
        if not self.tethered_to and self.access_mode == BRIDGED:
            self.begin_handshake(net)
        net.schedule(self.KEEPALIVE_INTERVAL, self.id, Timer("keepalive"))

    def relay_to_tethered(self, net: Network, relay: BridgeRelay) -> None:
        # only a bridge with an open tether can push to the firewalled target
        if relay.target in net.tethers and self.id in net.tethers[relay.target]:
            net.send(self.id, relay.target, relay.inner)
        else:
            net._log(f"relay-drop bridge={self.id} target={relay.target}")

    def current_day(self, net: Network) -> int:
        return 0  # overridden by protocol nodes that track incentive days

    # -- hooks ------------------------------------------------------------------------------

    def handle_app(self, net: Network, src, payload) -> None:
        raise NotImplementedError

    def handle_app_timer(self, net: Network, timer: Timer) -> None:
        raise NotImplementedError
