"""Asynchronous fluid community detection.

k communities start at k random nodes, each with density 1/(member count).
Supersteps visit every node in random order; a node moves to the community
with the highest summed density over itself and its neighbours, keeping its
current community on ties and sampling uniformly among tied newcomers.
Densities are recomputed immediately after every membership change (the
asynchronous part). Convergence is two consecutive supersteps with no
membership change.

Scores are compared exactly: the score of community c at node v is
(members of c within {v} u N(v)) / |c|, a single rational, so ties are
genuine ties rather than float accidents.
"""

from dataclasses import dataclass, field
import math
import random

from .graphnet import Graph

UNASSIGNED = None


class FluidInputError(ValueError):
    pass


class FluidLogicError(RuntimeError):
    pass


@dataclass
class CommunityAssignment:
    """Result of a detection run; membership maps node -> community id."""

    membership: dict
    k: int
    superstep_count: int
    converged: bool
    sizes: dict = field(default_factory=dict)

    def communities(self) -> dict:
        groups: dict = {}
        for node, cid in self.membership.items():
            groups.setdefault(cid, set()).add(node)
        return groups


def density(assignment: CommunityAssignment, community: int) -> float:
    """Inverse member count. A singleton community has density 1.0."""
    size = assignment.sizes.get(community, 0)
    if size <= 0:
        raise FluidLogicError(f"community {community} is empty; the update rule forbids this")
    return 1.0 / size


def _score_candidates(node, membership, sizes, graph: Graph):
    """Exact argmax of sum-of-density scores over {node} u neighbours.

    Returns the sorted candidate community list, or [] when nothing in the
    neighbourhood is assigned yet.
    """
    counts: dict = {}
    own = membership.get(node, UNASSIGNED)
    if own is not UNASSIGNED:
        counts[own] = 1
    for peer in graph.neighbors(node):
        cid = membership.get(peer, UNASSIGNED)
        if cid is not UNASSIGNED:
            counts[cid] = counts.get(cid, 0) + 1

    if not counts:
        return []
    # score(c) = counts[c] / sizes[c]; compare by cross-multiplication
    best: list = []
    best_num, best_den = 0, 1
    for cid in sorted(counts):
        num, den = counts[cid], sizes[cid]
        cmp = num * best_den - best_num * den
        if cmp > 0:
            best = [cid]
            best_num, best_den = num, den
        elif cmp == 0:
            best.append(cid)
    return best


def update_rule(node, assignment: CommunityAssignment, graph: Graph, rng: random.Random):
    """One node's community decision against the current assignment.

    Keeps the current community whenever it is among the maximizers, even
    on ties; otherwise samples uniformly from the tied maximizers.
    """
    candidates = _score_candidates(node, assignment.membership, assignment.sizes, graph)
    if not candidates:
        raise FluidInputError("update rule needs an assigned node in {node} u neighbours")
    current = assignment.membership.get(node, UNASSIGNED)
    if current in candidates:
        return current
    return rng.choice(candidates)


def detect_communities(
    graph: Graph,
    k: int,
    rng: random.Random,
    max_supersteps: int = 100,
    on_superstep=None,
) -> CommunityAssignment:
    """Run the full detection until convergence or the superstep cap.

    ``on_superstep`` (if given) is called with the sizes dict at every
    superstep boundary; handy for invariant monitoring.
    """
    if graph.n == 0:
        raise FluidInputError("graph must be non-empty")
    if not 1 <= k <= graph.n:
        raise FluidInputError(f"k must satisfy 1 <= k <= {graph.n}, got {k}")
    if max_supersteps < 1:
        raise FluidInputError("max_supersteps must be positive")

    nodes = list(graph.nodes)
    seeds = rng.sample(nodes, k)
    membership: dict = {node: cid for cid, node in enumerate(seeds)}
    sizes: dict = {cid: 1 for cid in range(k)}

    supersteps = 0
    quiet_streak = 0
    while supersteps < max_supersteps and quiet_streak < 2:
        order = nodes[:]
        rng.shuffle(order)
        changed = 0
        for node in order:
            candidates = _score_candidates(node, membership, sizes, graph)
            if not candidates:
                continue  # nothing assigned nearby yet; stays unassigned
            current = membership.get(node, UNASSIGNED)
            if current in candidates:
                continue
            new = rng.choice(candidates)
            if current is not UNASSIGNED:
                sizes[current] -= 1
            membership[node] = new
            sizes[new] += 1
            changed += 1
        supersteps += 1
        quiet_streak = quiet_streak + 1 if changed == 0 else 0
        if on_superstep is not None:
            on_superstep(dict(sizes))

    return CommunityAssignment(
        membership=membership,
        k=k,
        superstep_count=supersteps,
        converged=quiet_streak >= 2,
        sizes=sizes,
    )


def largest_community(assignment: CommunityAssignment) -> set:
    """Members of the biggest community; ties go to the smallest community id."""
    groups = assignment.communities()
    if not groups:
        return set()
    best_cid = min(groups, key=lambda cid: (-len(groups[cid]), cid))
    return groups[best_cid]


def default_k(n: int) -> int:
    """ceil(sqrt(n)) communities keep the largest one a useful fraction of n."""
    return max(1, math.isqrt(n - 1) + 1) if n > 1 else 1


def save_assignment(assignment: CommunityAssignment, path) -> None:
    """"node community" per line plus a trailing summary line."""
    with open(path, "w", encoding="ascii") as fh:
        for node in sorted(assignment.membership):
            fh.write(f"{node} {assignment.membership[node]}\n")
        fh.write(
            f"k={assignment.k} supersteps={assignment.superstep_count} "
            f"converged={assignment.converged}\n"
        )
