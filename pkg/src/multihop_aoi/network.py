"""Network topology, hop layering and validation."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

from .distributions import DistSpec

INF = math.inf


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    origin: int
    dest: int
    buffer: float  # int >= 0 or math.inf; counts queued packets only
    dist: DistSpec

    @property
    def key(self) -> tuple[int, int]:
        return (self.origin, self.dest)


@dataclass(frozen=True)
class Network:
    node_count: int
    links: tuple[Link, ...]
    gateways: tuple[int, ...] = (0,)
    tree_restricted: bool = field(default=False, compare=False)

    def __post_init__(self):
        _validate(self)
        object.__setattr__(self, "tree_restricted", _is_tree(self))

    # lookups ----------------------------------------------------------

    def link_index(self, origin: int, dest: int) -> int:
        for k, ln in enumerate(self.links):
            if ln.origin == origin and ln.dest == dest:
                return k
        raise KeyError((origin, dest))

    def link(self, origin: int, dest: int) -> Link:
        return self.links[self.link_index(origin, dest)]

    def out_links(self, node: int) -> list[int]:
        return [k for k, ln in enumerate(self.links) if ln.origin == node]

    def in_links(self, node: int) -> list[int]:
        return [k for k, ln in enumerate(self.links) if ln.dest == node]

    # derived networks -------------------------------------------------

    def with_buffers(self, buffer) -> "Network":
        """Copy of the network with every link buffer set to ``buffer``."""
        b = _parse_buffer(buffer)
        return replace(self, links=tuple(replace(ln, buffer=b) for ln in self.links))

    def with_dists(self, fn) -> "Network":
        """Copy with each link distribution replaced by ``fn(link)``."""
        return replace(self, links=tuple(replace(ln, dist=fn(ln)) for ln in self.links))

    # serialization ----------------------------------------------------

    def to_spec(self) -> dict:
        return {
            "nodes": self.node_count,
            "gateways": list(self.gateways),
            "links": [
                {
                    "from": ln.origin,
                    "to": ln.dest,
                    "buffer": "inf" if ln.buffer == INF else int(ln.buffer),
                    "dist": ln.dist.to_spec(),
                }
                for ln in self.links
            ],
        }


def _parse_buffer(b) -> float:
    if b is None or b == "inf" or b == INF:
        return INF
    if isinstance(b, bool) or int(b) != b or b < 0:
        raise TopologyError(f"buffer must be a non-negative integer or 'inf', got {b!r}")
    return int(b)


def build_network(spec: dict) -> Network:
    """Build and validate a network from a JSON-shaped description.

    ``spec`` has keys ``nodes`` (int), ``links`` (list of
    ``{from, to, buffer, dist}``) and optional ``gateways`` (default ``[0]``).
    """
    try:
        n = int(spec["nodes"])
        raw_links = spec["links"]
    except KeyError as exc:
        raise TopologyError(f"missing key {exc.args[0]!r}") from None
    gateways = tuple(spec.get("gateways", [0]))
    links = []
    for entry in raw_links:
        dist = entry["dist"]
        if not isinstance(dist, DistSpec):
            dist = DistSpec.from_spec(dist)
        links.append(
            Link(int(entry["from"]), int(entry["to"]), _parse_buffer(entry.get("buffer", INF)), dist)
        )
    return Network(n, tuple(links), gateways)


def _validate(net: Network) -> None:
    n = net.node_count
    if n < 1:
        raise TopologyError("network needs at least one node")
    if not net.gateways:
        raise TopologyError("empty gateway set")
    for g in net.gateways:
        if not 0 <= g < n:
            raise TopologyError(f"gateway {g} is not a node")
    seen = set()
    for ln in net.links:
        if not (0 <= ln.origin < n and 0 <= ln.dest < n):
            raise TopologyError(f"link {ln.key} references a missing node")
        if ln.origin == ln.dest:
            raise TopologyError(f"self-loop at node {ln.origin}")
        if ln.key in seen:
            raise TopologyError(f"duplicate link {ln.key}")
        seen.add(ln.key)
    layers = _bfs_layers(net)
    missing = sorted(set(range(n)) - set(layers))
    if missing:
        raise TopologyError(f"unreachable node(s) {missing}")


def _is_tree(net: Network) -> bool:
    indeg = [0] * net.node_count
    for ln in net.links:
        indeg[ln.dest] += 1
    gw = set(net.gateways)
    return all(indeg[j] == 1 for j in range(net.node_count) if j not in gw)


def _bfs_layers(net: Network) -> dict[int, int]:
    adj: dict[int, list[int]] = {}
    for ln in net.links:
        adj.setdefault(ln.origin, []).append(ln.dest)
    dist = {g: 0 for g in net.gateways}
    q = deque(net.gateways)
    while q:
        u = q.popleft()
        for v in adj.get(u, ()):
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


@dataclass(frozen=True)
class HopDecomposition:
    hop_sets: tuple[frozenset, ...]
    hop_of: dict
    path_to: dict  # node -> [i_{j,1}, ..., i_{j,k}]; only for tree networks

    def hop(self, node: int) -> int:
        return self.hop_of[node]


def hop_decompose(net: Network) -> HopDecomposition:
    """Layer nodes by shortest hop distance from the gateway set.

    For tree-restricted networks ``path_to[j]`` lists the node at each hop
    on the unique path to ``j``, ending with ``j`` itself.
    """
    layers = _bfs_layers(net)
    depth = max(layers.values())
    hop_sets = tuple(
        frozenset(j for j, k in layers.items() if k == h) for h in range(depth + 1)
    )
    path_to = {}
    if net.tree_restricted:
        parent = {ln.dest: ln.origin for ln in net.links if ln.dest not in net.gateways}
        for j in layers:
            path = []
            node = j
            while node not in net.gateways:
                path.append(node)
                node = parent[node]
            path_to[j] = path[::-1]
    return HopDecomposition(hop_sets, dict(layers), path_to)
