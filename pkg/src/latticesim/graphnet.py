"""Random witness-network construction.

Two generators: a centralized one that flips a coin for each of the
n(n-1)/2 node pairs, and a localized one where every node draws its own
peer selection and the network is the union of all selections. Node ids
can be anything hashable and sortable (integers, account ids).
"""

from dataclasses import dataclass
from functools import cached_property
import random


class GraphInputError(ValueError):
    pass


def _edge(a, b) -> tuple:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph: sorted node tuple plus canonical edge set."""

    nodes: tuple
    edges: frozenset

    def __post_init__(self):
        node_set = set(self.nodes)
        for u, v in self.edges:
            if u == v:
                raise GraphInputError("self-loops are not allowed")
            if u not in node_set or v not in node_set:
                raise GraphInputError("edge endpoint outside node set")

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def adjacency(self) -> dict:
        adj = {node: set() for node in self.nodes}
        for u, v in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def neighbors(self, node) -> set:
        return self.adjacency[node]

    def degree(self, node) -> int:
        return len(self.adjacency[node])

    def has_edge(self, a, b) -> bool:
        return _edge(a, b) in self.edges

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        seen = {self.nodes[0]}
        frontier = [self.nodes[0]]
        while frontier:
            node = frontier.pop()
            for peer in self.adjacency[node]:
                if peer not in seen:
                    seen.add(peer)
                    frontier.append(peer)
        return len(seen) == len(self.nodes)

    def largest_component(self) -> "Graph":
        remaining = set(self.nodes)
        best: set = set()
        while remaining:
            start = min(remaining)
            seen = {start}
            frontier = [start]
            while frontier:
                node = frontier.pop()
                for peer in self.adjacency[node]:
                    if peer not in seen:
                        seen.add(peer)
                        frontier.append(peer)
            remaining -= seen
            if len(seen) > len(best):
                best = seen
        return Graph(
            nodes=tuple(sorted(best)),
            edges=frozenset(e for e in self.edges if e[0] in best and e[1] in best),
        )


def graph_from_edges(nodes, edges) -> Graph:
    return Graph(nodes=tuple(sorted(set(nodes))), edges=frozenset(_edge(u, v) for u, v in edges))


@dataclass(frozen=True)
class SelectionVector:
    """One node's own choice of peers in the localized scheme."""

    owner: object
    chosen: frozenset

    def __post_init__(self):
        if self.owner in self.chosen:
            raise GraphInputError("a node cannot select itself")


def random_network_central(n: int, p: float, rng: random.Random) -> Graph:
    """Erdos-Renyi style draw: every pair gets a fresh random threshold and
    an edge exists when p exceeds it, i.e. independently with probability p."""
    if n < 1:
        raise GraphInputError("node count must be positive")
    if not 0.0 <= p <= 1.0:
        raise GraphInputError("connection probability must lie in [0, 1]")
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            if p > rng.random():
                edges.add((i, j))
    return Graph(nodes=tuple(range(n)), edges=frozenset(edges))


def local_selection(owner, all_nodes, rng: random.Random) -> SelectionVector:
    """A node's own draw: pick k uniformly in [0, n-1], then k distinct peers.

    (k is clamped to the number of possible peers; a node can select at
    most everyone else.)
    """
    peers = sorted(set(all_nodes) - {owner})
    if len(peers) < 1:
        raise GraphInputError("need at least two nodes for local selection")
    k = rng.randint(0, len(peers))
    return SelectionVector(owner=owner, chosen=frozenset(rng.sample(peers, k)))


def assemble_from_selections(selections) -> Graph:
    """Union rule: the edge {a, b} exists iff a chose b or b chose a.

    Order-independent; every node referenced must appear as an owner.
    """
    owners = [s.owner for s in selections]
    node_set = set(owners)
    if len(owners) != len(node_set):
        raise GraphInputError("duplicate selection owner")
    edges = set()
    for s in selections:
        for peer in s.chosen:
            if peer not in node_set:
                raise GraphInputError(f"selection references unknown node {peer!r}")
            edges.add(_edge(s.owner, peer))
    return Graph(nodes=tuple(sorted(node_set)), edges=frozenset(edges))


# -- edge-list text format ----------------------------------------------------------


def save_edge_list(graph: Graph, path) -> None:
    """Header line "n=<count>", then one "u v" pair per line. Nodes are
    written as indices into the sorted node tuple."""
    index = {node: i for i, node in enumerate(graph.nodes)}
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"n={graph.n}\n")
        for u, v in sorted((index[a], index[b]) for a, b in graph.edges):
            fh.write(f"{u} {v}\n")


def load_edge_list(path) -> Graph:
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip()
        if not header.startswith("n="):
            raise GraphInputError("edge list must start with an n=<count> header")
        n = int(header[2:])
        edges = set()
        for line in fh:
            line = line.strip()
            if not line:
                continue
            u_str, v_str = line.split()
            u, v = int(u_str), int(v_str)
            if not (0 <= u < n and 0 <= v < n):
                raise GraphInputError("edge endpoint out of range")
            edges.add(_edge(u, v))
    return Graph(nodes=tuple(range(n)), edges=frozenset(edges))
