"""Directed capacitated networks, multicast requests and max-flow feasibility.

A request is routable with network coding exactly when every receiver can,
on its own, pull one unit of flow from the source under capacities scaled
by ``1 / size``. ``request_feasible`` checks that condition receiver by
receiver with an exact augmenting-path max flow.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

Node = Hashable

FEASIBILITY_TOL = 1e-9


class NetworkError(ValueError):
    """Raised for malformed networks or requests."""


@dataclass(frozen=True)
class Link:
    id: str
    tail: Node
    head: Node
    capacity: float


@dataclass(frozen=True)
class Network:
    """Immutable directed graph. Links are kept sorted by id.

    Parallel links are fine; the link id is the key, never the endpoint pair.
    """

    nodes: tuple
    links: tuple[Link, ...]
    _index: dict = field(init=False, repr=False, compare=False)
    _nodeset: frozenset = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {lk.id: k for k, lk in enumerate(self.links)})
        object.__setattr__(self, "_nodeset", frozenset(self.nodes))

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def m(self) -> int:
        return len(self.links)

    @property
    def link_ids(self) -> list[str]:
        return [link.id for link in self.links]

    @property
    def capacities(self) -> list[float]:
        return [link.capacity for link in self.links]

    def index(self, link_id: str) -> int:
        return self._index[link_id]

    def link(self, link_id: str) -> Link:
        return self.links[self._index[link_id]]

    def has_node(self, node: Node) -> bool:
        return node in self._nodeset


def _link_sort_key(link_id: str):
    # e2 sorts before e10; ids without a numeric tail fall back to plain text order.
    head = link_id.rstrip("0123456789")
    tail = link_id[len(head):]
    return (head, int(tail) if tail else -1, link_id)


def build_network(nodes: Iterable[Node], links: Iterable[Sequence]) -> Network:
    """Validate and freeze a network.

    ``links`` holds ``(id, tail, head, capacity)`` tuples (or ``Link``
    objects). Link order in the result is by id, numeric suffixes compared
    as numbers.
    """
    node_list = list(dict.fromkeys(nodes))
    node_set = set(node_list)
    seen: set[str] = set()
    built = []
    for spec in links:
        if isinstance(spec, Link):
            link = spec
        else:
            if len(spec) != 4:
                raise NetworkError(f"link spec needs (id, tail, head, capacity), got {spec!r}")
            lid, tail, head, cap = spec
            link = Link(str(lid), tail, head, float(cap))
        if link.id in seen:
            raise NetworkError(f"duplicate link id {link.id!r}")
        seen.add(link.id)
        for end in (link.tail, link.head):
            if end not in node_set:
                raise NetworkError(f"link {link.id!r} references unknown node {end!r}")
        if not link.capacity > 0:
            raise NetworkError(f"link {link.id!r} has nonpositive capacity {link.capacity}")
        built.append(link)
    built.sort(key=lambda lk: _link_sort_key(lk.id))
    return Network(tuple(node_list), tuple(built))


@dataclass(frozen=True)
class MulticastRequest:
    id: str
    source: Node
    receivers: tuple
    size: float

    def __post_init__(self):
        object.__setattr__(self, "receivers", tuple(self.receivers))


def make_request(net: Network, rid: str, source: Node, receivers: Iterable[Node],
                 size: float) -> MulticastRequest:
    """Build a request and check it against ``net``."""
    r = MulticastRequest(str(rid), source, tuple(dict.fromkeys(receivers)), float(size))
    validate_request(net, r)
    return r


def validate_request(net: Network, r: MulticastRequest) -> None:
    if not r.receivers:
        raise NetworkError(f"request {r.id!r} has no receivers")
    if r.source in r.receivers:
        raise NetworkError(f"request {r.id!r}: source is also a receiver")
    for node in (r.source, *r.receivers):
        if not net.has_node(node):
            raise NetworkError(f"request {r.id!r} references unknown node {node!r}")
    if not r.size > 0:
        raise NetworkError(f"request {r.id!r} has nonpositive size {r.size}")


def max_flow(net: Network, source: Node, sink: Node,
             caps: Sequence[float] | Mapping[str, float] | None = None) -> float:
    """Maximum source-sink flow value (Edmonds-Karp).

    ``caps`` overrides link capacities, either positionally (in link order)
    or keyed by link id. Defaults to the network's own capacities.
    """
    if not net.has_node(source) or not net.has_node(sink):
        raise NetworkError(f"unknown node in query ({source!r}, {sink!r})")
    if source == sink:
        raise NetworkError("source and sink must differ")
    if caps is None:
        cap_list = net.capacities
    elif isinstance(caps, Mapping):
        cap_list = [float(caps[lk.id]) for lk in net.links]
    else:
        cap_list = [float(c) for c in caps]
        if len(cap_list) != net.m:
            raise NetworkError("capacity vector length does not match link count")

    # residual arcs: 2k forward, 2k+1 backward
    residual = []
    heads = []
    adj: dict = {v: [] for v in net.nodes}
    for k, lk in enumerate(net.links):
        adj[lk.tail].append(2 * k)
        adj[lk.head].append(2 * k + 1)
        residual += [max(cap_list[k], 0.0), 0.0]
        heads += [lk.head, lk.tail]

    total = 0.0
    while True:
        parent_arc = {source: None}
        queue = deque([source])
        while queue and sink not in parent_arc:
            v = queue.popleft()
            for a in adj[v]:
                w = heads[a]
                if residual[a] > 1e-15 and w not in parent_arc:
                    parent_arc[w] = a
                    queue.append(w)
        if sink not in parent_arc:
            return total
        push = float("inf")
        v = sink
        while parent_arc[v] is not None:
            a = parent_arc[v]
            push = min(push, residual[a])
            v = heads[a ^ 1]
        v = sink
        while parent_arc[v] is not None:
            a = parent_arc[v]
            residual[a] -= push
            residual[a ^ 1] += push
            v = heads[a ^ 1]
        total += push


def receiver_max_flows(net: Network, r: MulticastRequest) -> dict:
    """Per-receiver max flow under capacities ``c_e / d_r``."""
    scaled = [c / r.size for c in net.capacities]
    return {i: max_flow(net, r.source, i, scaled) for i in r.receivers}


def request_feasible(net: Network, r: MulticastRequest) -> bool:
    """True iff the unit coded-multicast polytope of ``r`` is nonempty."""
    return all(v >= 1.0 - FEASIBILITY_TOL for v in receiver_max_flows(net, r).values())
