"""Deterministic discrete-event publish/subscribe fabric.

Each vehicle owns a private virtual network; edge-resident nodes share an
edge network.  A node belongs to one home network and may join others, and
subscriptions are bound to a specific network, so a message published into
VN1 can never reach a VN2-only node.  Topics whose name ends in ``-remote``
are ordinary topics by these rules; publishing one into the edge network
reaches every edge subscriber except the sender, which is the broadcast
behaviour the caching layer relies on (self-delivery is suppressed on every
network).

The event loop is single-threaded: callbacks run to completion in
(due_time, insertion_seq) order, so identical seeds and inputs replay to
bit-identical delivery logs.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass

from .model import Message


class UnknownNodeError(KeyError):
    pass


class TopologyError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class NodeId:
    """(home network, name); unique across the simulation."""

    network: str
    name: str


@dataclass(frozen=True, slots=True)
class Link:
    """Delivery delay inside a network (or between two of them).

    Latency is fixed; jitter adds a seeded U(0, jitter_ms) draw per
    delivery.  Defaults are zero: co-located nodes exchange messages
    instantaneously unless a scenario says otherwise.
    """

    from_net: str
    to_net: str
    latency_ms: float = 0.0
    jitter_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.latency_ms < 0 or self.jitter_ms < 0:
            raise ValueError("latency and jitter must be non-negative")


@dataclass(frozen=True, slots=True)
class Subscription:
    """A node listening on one topic in one network.  A subscription in the
    shared edge network is the broadcast scope; anything else is
    intra-network."""

    node: str
    topic_name: str
    network: str


@dataclass(frozen=True, slots=True)
class DeliveryRecord:
    time_ms: float
    frm: str
    to: str
    topic: str
    seq: int
    origin: str
    network: str
    published_ms: float

    def to_log_line(self) -> str:
        return json.dumps(
            {
                "time_ms": self.time_ms,
                "from": self.frm,
                "to": self.to,
                "topic": self.topic,
                "seq": self.seq,
            },
            sort_keys=True,
        )


class EventQueue:
    """Min-heap of (due_time, insertion_seq, item); clock never decreases."""

    def __init__(self) -> None:
        self.clock: float = 0.0
        self._heap: list[tuple[float, int, object]] = []
        self._seq = 0

    def push(self, due_ms: float, item: object) -> None:
        if due_ms < self.clock:
            raise ValueError(f"cannot schedule at {due_ms} before clock {self.clock}")
        heapq.heappush(self._heap, (due_ms, self._seq, item))
        self._seq += 1

    def pop_due(self, t_end: float):
        while self._heap and self._heap[0][0] <= t_end:
            due, _, item = heapq.heappop(self._heap)
            self.clock = due
            yield due, item
        self.clock = max(self.clock, t_end)

    def __len__(self) -> int:
        return len(self._heap)


class SimNode:
    """Base class for fabric participants."""

    def __init__(self, name: str, home_network: str) -> None:
        self.name = name
        self.home_network = home_network

    @property
    def node_id(self) -> NodeId:
        return NodeId(self.home_network, self.name)

    def on_message(
        self, net: "Fabric", at: float, network: str, wire_topic: str, message: Message
    ) -> None:  # pragma: no cover - overridden
        pass


@dataclass(slots=True)
class _Delivery:
    to: str
    frm: str
    network: str
    wire_topic: str
    message: Message
    published_ms: float


class Fabric:
    """Owns networks, nodes, subscriptions, the clock and the event heap."""

    def __init__(self, seed: int = 0) -> None:
        self.rng = random.Random(seed)
        self.queue = EventQueue()
        self._links: dict[tuple[str, str], Link] = {}
        self._nodes: dict[str, SimNode] = {}
        self._memberships: dict[str, set[str]] = {}
        self._subs: dict[tuple[str, str], list[str]] = {}  # (network, topic) -> node names
        self._sub_index: set[tuple[str, str]] = set()  # (node, topic)
        self.subscriptions: list[Subscription] = []
        self.deliveries: list[DeliveryRecord] = []

    @property
    def clock(self) -> float:
        return self.queue.clock

    # -- topology -----------------------------------------------------------

    def add_network(self, name: str, latency_ms: float = 0.0, jitter_ms: float = 0.0) -> None:
        self.set_link(Link(name, name, latency_ms, jitter_ms))

    def set_link(self, link: Link) -> None:
        self._links[(link.from_net, link.to_net)] = link

    def add_node(self, node: SimNode, networks: tuple[str, ...] | None = None) -> SimNode:
        if node.name in self._nodes:
            raise TopologyError(f"duplicate node name: {node.name}")
        nets = set(networks) if networks else {node.home_network}
        nets.add(node.home_network)
        for n in nets:
            if (n, n) not in self._links:
                self.add_network(n)
        self._nodes[node.name] = node
        self._memberships[node.name] = nets
        return node

    def subscribe(self, node_name: str, topic_name: str, network: str | None = None) -> None:
        node = self._require(node_name)
        net = network or node.home_network
        if net not in self._memberships[node_name]:
            raise TopologyError(f"{node_name} is not a member of network {net}")
        if (node_name, topic_name) in self._sub_index:
            raise TopologyError(f"{node_name} already subscribed to {topic_name}")
        self._sub_index.add((node_name, topic_name))
        self._subs.setdefault((net, topic_name), []).append(node_name)
        self.subscriptions.append(Subscription(node_name, topic_name, net))

    def _require(self, node_name: str) -> SimNode:
        try:
            return self._nodes[node_name]
        except KeyError:
            raise UnknownNodeError(f"unknown node: {node_name}") from None

    # -- traffic ------------------------------------------------------------

    def publish(
        self,
        sender: str,
        message: Message,
        wire_topic: str | None = None,
        network: str | None = None,
        at: float | None = None,
    ) -> int:
        """Schedule one delivery per matching subscriber; returns the count.

        The sender never receives its own publish.  ``at`` defaults to the
        current clock and may not lie in the past.
        """
        node = self._require(sender)
        when = self.clock if at is None else at
        if when < self.clock:
            raise ValueError(f"publish at {when} before clock {self.clock}")
        topic = wire_topic or message.topic.name
        if network is None:
            nets = self._memberships[sender]
            if len(nets) != 1:
                raise TopologyError(
                    f"{sender} belongs to {sorted(nets)}; publish needs an explicit network"
                )
            network = next(iter(nets))
        elif network not in self._memberships[sender]:
            raise TopologyError(f"{sender} is not a member of network {network}")

        link = self._links.get((network, network), Link(network, network))
        count = 0
        for to in self._subs.get((network, topic), ()):
            if to == sender:
                continue
            delay = link.latency_ms
            if link.jitter_ms > 0:
                delay += self.rng.uniform(0.0, link.jitter_ms)
            self.queue.push(
                when + delay,
                _Delivery(to, sender, network, topic, message, when),
            )
            count += 1
        return count

    def run_until(self, t_end: float) -> list[DeliveryRecord]:
        """Process every event due at or before ``t_end`` in deterministic
        order; returns the delivery records produced by this call."""
        if t_end < self.clock:
            raise ValueError(f"t_end {t_end} before clock {self.clock}")
        produced: list[DeliveryRecord] = []
        for due, item in self.queue.pop_due(t_end):
            d: _Delivery = item
            record = DeliveryRecord(
                time_ms=due,
                frm=d.frm,
                to=d.to,
                topic=d.wire_topic,
                seq=d.message.header.seq,
                origin=d.message.header.origin,
                network=d.network,
                published_ms=d.published_ms,
            )
            self.deliveries.append(record)
            produced.append(record)
            self._nodes[d.to].on_message(self, due, d.network, d.wire_topic, d.message)
        return produced

    def log_jsonl(self) -> str:
        return "\n".join(r.to_log_line() for r in self.deliveries)
