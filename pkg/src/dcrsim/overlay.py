"""Overlay networks over the DCRs and their quality metrics.

Three constructions, each extending the previous one:

  1. build_tree       greedy spanning tree rooted near the map center
  2. connect_leaves   chain the tree's leaves in angular order around the root
  3. add_wraparound   one extra east-west link between the map's extremes

Link cost equals the Euclidean distance between the two routers. Notification
floods travel along overlay links only, so the all-pairs shortest-path delays
of the overlay bound how stale remote forwarding tables can be.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, OverlayError, ParseError
from .topology import DcrId, Point, Topology, distance, nearest_dcr

Edge = tuple[DcrId, DcrId]


def _key(a: DcrId, b: DcrId) -> Edge:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class Overlay:
    """Undirected weighted graph over the DCR ids.

    parents and insertion_order describe the spanning-tree skeleton and are
    only populated by build_tree (and preserved by the later stages); parsed
    overlays leave them empty. Treat instances as immutable.
    """

    nodes: tuple[DcrId, ...]
    edges: dict[Edge, float]
    root: DcrId
    parents: dict[DcrId, DcrId] = field(default_factory=dict)
    insertion_order: tuple[DcrId, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes)))
        if self.root not in self.nodes:
            raise ConfigError(f"root {self.root} is not an overlay node")
        for (a, b), cost in self.edges.items():
            if a >= b:
                raise ConfigError(f"edge key ({a}, {b}) must be ordered a < b")
            if a not in self.nodes or b not in self.nodes:
                raise ConfigError(f"edge ({a}, {b}) references a missing node")
            if not (math.isfinite(cost) and cost > 0):
                raise ConfigError(f"edge ({a}, {b}) has non-positive cost {cost}")

    def has_edge(self, a: DcrId, b: DcrId) -> bool:
        return _key(a, b) in self.edges

    def cost(self, a: DcrId, b: DcrId) -> float:
        return self.edges[_key(a, b)]

    def adjacency(self) -> dict[DcrId, list[tuple[DcrId, float]]]:
        adj: dict[DcrId, list[tuple[DcrId, float]]] = {v: [] for v in self.nodes}
        for (a, b), cost in sorted(self.edges.items()):
            adj[a].append((b, cost))
            adj[b].append((a, cost))
        return adj


def _center_root(t: Topology) -> DcrId:
    xs = [p.x for _, p in t.dcrs]
    ys = [p.y for _, p in t.dcrs]
    center = Point((min(xs) + max(xs)) / 2.0, (min(ys) + max(ys)) / 2.0)
    return nearest_dcr(center, t)


def build_tree(t: Topology, root: DcrId | None = None) -> Overlay:
    """Stage 1: greedy spanning tree.

    The root defaults to the DCR nearest the center of the bounding box of
    all positions (ties to the lowest id). The other DCRs join in increasing
    distance from the root (ties to the lowest id). A joining node j first
    finds the nearest node k already in the tree; if k is the root, or the
    indirect path j-k plus k to k's parent m is less than 25% worse than the
    direct link j-m, j attaches to k, otherwise j attaches to m.
    """
    if root is None:
        root = _center_root(t)
    else:
        t.position(root)  # raises ConfigError for unknown ids
    rp = t.position(root)
    pending = sorted((i for i in t.ids() if i != root),
                     key=lambda i: (distance(rp, t.position(i)), i))
    in_tree = [root]
    parents: dict[DcrId, DcrId] = {}
    edges: dict[Edge, float] = {}
    for j in pending:
        jp = t.position(j)
        k = min(in_tree, key=lambda v: (distance(jp, t.position(v)), v))
        attach = k
        if k != root:
            m = parents[k]
            direct = distance(jp, t.position(m))
            indirect = distance(jp, t.position(k)) + distance(t.position(k), t.position(m))
            if indirect >= 1.25 * direct:
                attach = m
        parents[j] = attach
        edges[_key(j, attach)] = distance(jp, t.position(attach))
        in_tree.append(j)
    return Overlay(nodes=tuple(t.ids()), edges=edges, root=root,
                   parents=parents, insertion_order=tuple(pending))


def leaf_set(o: Overlay) -> set[DcrId]:
    """Non-root nodes with no children in the spanning tree."""
    interior = set(o.parents.values())
    return {v for v in o.nodes if v != o.root and v not in interior}


def connect_leaves(o: Overlay, t: Topology) -> Overlay:
    """Stage 2: add chain links between leaves adjacent in angular order.

    Leaves are ordered by their polar angle around the root (ties to the
    lowest id) and consecutive leaves are linked, including the pair that
    wraps past the branch cut, except across the single widest angular gap,
    which is left open. Fewer than two leaves leaves the overlay unchanged.
    """
    leaves = sorted(leaf_set(o))
    if len(leaves) < 2:
        return o
    rp = t.position(o.root)

    def angle(v: DcrId) -> float:
        p = t.position(v)
        return math.atan2(p.y - rp.y, p.x - rp.x)

    ring = sorted(leaves, key=lambda v: (angle(v), v))
    gaps = []
    for i, a in enumerate(ring):
        b = ring[(i + 1) % len(ring)]
        gap = angle(b) - angle(a)
        if i == len(ring) - 1:
            gap += 2.0 * math.pi
        gaps.append(gap)
    skip = gaps.index(max(gaps))
    edges = dict(o.edges)
    for i, a in enumerate(ring):
        if i == skip:
            continue
        b = ring[(i + 1) % len(ring)]
        key = _key(a, b)
        if key not in edges:
            edges[key] = distance(t.position(a), t.position(b))
    return replace(o, edges=edges)


def add_wraparound(o: Overlay, t: Topology) -> Overlay:
    """Stage 3: link the DCRs nearest the west and east edge midpoints.

    The midpoints are taken on the bounding box of all positions; nearest
    ties go to the lowest id. If both midpoints elect the same DCR or the
    link already exists, the overlay is returned unchanged.
    """
    xs = [p.x for _, p in t.dcrs]
    ys = [p.y for _, p in t.dcrs]
    mid_y = (min(ys) + max(ys)) / 2.0
    west = nearest_dcr(Point(min(xs), mid_y), t)
    east = nearest_dcr(Point(max(xs), mid_y), t)
    if west == east or o.has_edge(west, east):
        return o
    edges = dict(o.edges)
    edges[_key(west, east)] = distance(t.position(west), t.position(east))
    return replace(o, edges=edges)


def build_overlay(t: Topology, alg: int, root: DcrId | None = None) -> Overlay:
    """Run construction stages 1..alg."""
    if alg not in (1, 2, 3):
        raise ConfigError(f"alg must be 1, 2 or 3, got {alg}")
    o = build_tree(t, root=root)
    if alg >= 2:
        o = connect_leaves(o, t)
    if alg >= 3:
        o = add_wraparound(o, t)
    return o


def _dijkstra(adj: dict[DcrId, list[tuple[DcrId, float]]], src: DcrId) -> dict[DcrId, float]:
    dist = {src: 0.0}
    heap = [(0.0, src)]
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist.get(v, math.inf):
            continue
        for w, cost in adj[v]:
            nd = d + cost
            if nd < dist.get(w, math.inf):
                dist[w] = nd
                heapq.heappush(heap, (nd, w))
    return dist


def all_pairs_delay(o: Overlay) -> np.ndarray:
    """Shortest-path delay matrix, rows and columns in sorted node-id order."""
    adj = o.adjacency()
    n = len(o.nodes)
    index = {v: i for i, v in enumerate(o.nodes)}
    mat = np.zeros((n, n))
    for v in o.nodes:
        dist = _dijkstra(adj, v)
        if len(dist) != n:
            missing = sorted(set(o.nodes) - set(dist))
            raise OverlayError(f"overlay is disconnected: no path from {v} to {missing}")
        for w, d in dist.items():
            mat[index[v], index[w]] = d
    return mat


@dataclass(frozen=True)
class OverlayMetrics:
    worst_delay: float
    avg_delay: float
    flooding_overhead: float


def overlay_metrics(o: Overlay) -> OverlayMetrics:
    """Worst and average delay over unordered node pairs, plus the total cost
    of one flood (every overlay link carries the notification once per
    direction that forwards it, i.e. the sum of all link costs)."""
    mat = all_pairs_delay(o)
    iu = np.triu_indices(len(o.nodes), k=1)
    vals = mat[iu]
    overhead = float(sum(o.edges.values()))
    return OverlayMetrics(worst_delay=float(vals.max()),
                          avg_delay=float(vals.mean()),
                          flooding_overhead=overhead)


def flood_schedule(o: Overlay, source: DcrId) -> dict[DcrId, float]:
    """Arrival time of a flood started at source, per DCR (source maps to 0)."""
    if source not in o.nodes:
        raise ConfigError(f"flood source {source} is not an overlay node")
    adj = o.adjacency()
    dist = _dijkstra(adj, source)
    if len(dist) != len(o.nodes):
        missing = sorted(set(o.nodes) - set(dist))
        raise OverlayError(f"overlay is disconnected: flood from {source} misses {missing}")
    return {v: dist[v] for v in o.nodes}


def flood_duplicate_count(o: Overlay) -> int:
    """Duplicate receptions of one flooded notification.

    Every node forwards the first copy it receives on all its other links, so
    each of the E links carries the message at least once and every link that
    is not the recipient's first-arrival link produces a duplicate at each
    end it reaches redundantly: 2E transmissions minus the N-1 first arrivals
    minus the N-1 transmissions suppressed back toward the sender leaves
    2*(E - N + 1) duplicates for a connected overlay with N nodes.
    """
    return 2 * (len(o.edges) - len(o.nodes) + 1)


def format_overlay(o: Overlay) -> str:
    """Text form: `root <id>` then `edge <a> <b> <cost>` lines, a < b,
    lexicographically sorted, costs with 6 decimals."""
    lines = [f"root {o.root}"]
    for a, b in sorted(o.edges):
        lines.append(f"edge {a} {b} {o.edges[(a, b)]:.6f}")
    return "\n".join(lines) + "\n"


def parse_overlay(text: str) -> Overlay:
    """Strict parser for the format written by format_overlay."""
    root: DcrId | None = None
    edges: dict[Edge, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "root" and len(parts) == 2:
            if root is not None:
                raise ParseError(f"line {lineno}: second root line")
            try:
                root = int(parts[1])
            except ValueError:
                raise ParseError(f"line {lineno}: bad root id in {raw!r}") from None
        elif parts[0] == "edge" and len(parts) == 4:
            try:
                a, b = int(parts[1]), int(parts[2])
                cost = float(parts[3])
            except ValueError:
                raise ParseError(f"line {lineno}: bad edge in {raw!r}") from None
            if a == b:
                raise ParseError(f"line {lineno}: self-loop on {a}")
            key = _key(a, b)
            if key in edges:
                raise ParseError(f"line {lineno}: duplicate edge {a} {b}")
            edges[key] = cost
        else:
            raise ParseError(f"line {lineno}: expected root or edge line, got {raw!r}")
    if root is None:
        raise ParseError("missing root line")
    nodes = {root}
    for a, b in edges:
        nodes.add(a)
        nodes.add(b)
    return Overlay(nodes=tuple(sorted(nodes)), edges=edges, root=root)


def load_overlay(path: str) -> Overlay:
    with open(path, "r", encoding="utf-8") as f:
        return parse_overlay(f.read())


def save_overlay(o: Overlay, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_overlay(o))
