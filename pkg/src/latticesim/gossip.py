"""Epidemic push gossip plus its closed-form propagation model.

The analytic side: with holder fraction w, fan-out f and per-unit-time
transmission likelihood beta, homogeneous mixing gives the logistic law

    dw/dt = beta * f * w * (1 - w)
    w(t)  = w0 * e^(beta*f*t) / (1 - w0 + w0 * e^(beta*f*t))

with characteristic time tau = 1 / (beta * f).

The Monte-Carlo side pushes from every holder to f uniformly chosen peers
per step. A step spans ``time_step`` simulated time, so each push infects
a non-holder with probability beta * time_step. One step per time unit is
the coarsest (literal "hop") setting; matching the continuous-time law at
fast spreading rates needs beta * f * time_step well below 1, so the
validation paths run with a fine step.
"""

from dataclasses import dataclass
import math
import statistics

import numpy as np

from .graphnet import Graph


class GossipInputError(ValueError):
    pass


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class GossipParams:
    n: int
    w0_count: int
    fanout: int
    beta: float

    def __post_init__(self):
        if self.n < 1:
            raise GossipInputError("n must be positive")
        if not 1 <= self.w0_count <= self.n:
            raise GossipInputError("initial holder count must lie in [1, n]")
        if self.fanout < 1:
            raise GossipInputError("fanout must be at least 1")
        if not 0.0 <= self.beta <= 1.0:
            raise GossipInputError("beta must lie in (0, 1]; 0 allowed for degenerate tests")

    @property
    def w0(self) -> float:
        return self.w0_count / self.n

    @property
    def rate(self) -> float:
        return self.beta * self.fanout


@dataclass
class CoverageCurve:
    """Holder fraction after every step, plus bookkeeping for metrics."""

    samples: list
    wasted_pushes: int = 0
    plateaued: bool = False

    @property
    def final_fraction(self) -> float:
        return self.samples[-1][1]

    def times(self):
        return [t for t, _ in self.samples]

    def fractions(self):
        return [w for _, w in self.samples]


def analytic_fraction(t: float, params: GossipParams) -> float:
    """Logistic holder fraction at time t (overflow-safe form)."""
    if t < 0:
        raise GossipInputError("time must be non-negative")
    w0 = params.w0
    return w0 / (w0 + (1.0 - w0) * math.exp(-params.rate * t))


def characteristic_time(params: GossipParams) -> float:
    """tau = 1 / (beta * fanout), the inverse spreading speed."""
    if params.rate <= 0:
        raise GossipInputError("characteristic time needs beta * fanout > 0")
    return 1.0 / params.rate


def logistic_rhs(w: float, params: GossipParams) -> float:
    return params.rate * w * (1.0 - w)


def simulate_gossip(
    params: GossipParams,
    rng: np.random.Generator,
    seed_holders=None,
    topology: Graph | None = None,
    time_step: float = 1.0,
    hop_cap: int = 10_000,
) -> CoverageCurve:
    """Run one stochastic spread and record the coverage curve.

    Homogeneous-mixing mode (default): every holder pushes to ``fanout``
    peers drawn uniformly from all other nodes. Topology mode restricts
    pushes to graph neighbours; on a disconnected graph the curve plateaus
    below 1 and is flagged.
    """
    if time_step <= 0:
        raise GossipInputError("time_step must be positive")
    p_push = params.beta * time_step
    if p_push > 1.0:
        raise GossipInputError("beta * time_step must not exceed 1")

    n = params.n
    if seed_holders is None:
        seed_holders = range(params.w0_count)
    holders = np.zeros(n, dtype=bool)
    for h in seed_holders:
        holders[h] = True
    if int(holders.sum()) == 0:
        raise GossipInputError("seed holders must be non-empty")

    samples = [(0.0, holders.sum() / n)]
    wasted = 0
    t = 0.0

    if topology is not None:
        if topology.n != n:
            raise GossipInputError("topology size must match params.n")
        nodes = list(topology.nodes)
        neighbor_lists = {i: sorted(topology.neighbors(nodes[i])) for i in range(n)}
        index = {node: i for i, node in enumerate(nodes)}

    for _ in range(hop_cap):
        if holders.all():
            break
        idx = np.flatnonzero(holders)
        if topology is None:
            # targets drawn uniformly over the other n-1 nodes, with replacement
            targets = rng.integers(0, n - 1, size=(idx.size, params.fanout))
            targets = targets + (targets >= idx[:, None])
            flat = targets.ravel()
        else:
            frontier = [
                index[peer]
                for i in idx
                for peer in neighbor_lists[int(i)]
            ]
            if not any(not holders[j] for j in frontier):
                # no susceptible node is adjacent to any holder
                break
            chosen = []
            for i in idx:
                nbrs = neighbor_lists[int(i)]
                if not nbrs:
                    continue
                picks = rng.integers(0, len(nbrs), size=params.fanout)
                chosen.extend(index[nbrs[p]] for p in picks)
            flat = np.array(chosen, dtype=np.int64)
        if flat.size:
            hit = flat[rng.random(flat.size) < p_push]
            wasted += int(holders[hit].sum())
            holders[hit] = True
        t += time_step
        samples.append((t, holders.sum() / n))

    curve = CoverageCurve(samples=samples, wasted_pushes=wasted)
    curve.plateaued = not bool(holders.all())
    return curve


def mean_curve(curves) -> list:
    """Pointwise mean over an ensemble; runs that finished early are held
    at their final fraction (full coverage stays full)."""
    if not curves:
        raise GossipInputError("need at least one curve")
    grid = max((c.times() for c in curves), key=len)
    out = []
    for i, t in enumerate(grid):
        total = 0.0
        for c in curves:
            total += c.samples[i][1] if i < len(c.samples) else c.final_fraction
        out.append((t, total / len(curves)))
    return out


def fit_growth_rate(samples) -> float:
    """Least-squares slope of ln(w / (1-w)) against t over the early region
    (w < 0.3). The logistic law makes this slope beta * fanout."""
    pts = [(t, w) for t, w in samples if 0.0 < w < 0.3]
    if len(pts) < 3:
        raise FitError("need at least 3 samples with 0 < w < 0.3")
    xs = [t for t, _ in pts]
    ys = [math.log(w / (1.0 - w)) for _, w in pts]
    if max(xs) == min(xs):
        raise FitError("degenerate time axis in early region")
    return statistics.linear_regression(xs, ys).slope


def time_to_fraction(samples, target: float):
    """First sampled time at which coverage reaches ``target``; None if never."""
    for t, w in samples:
        if w >= target:
            return t
    return None


def save_curve_csv(path, empirical, params: GossipParams, header_lines=()) -> None:
    """CSV rows "t,w_empirical,w_analytic" for external plotting."""
    with open(path, "w", encoding="ascii") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("t,w_empirical,w_analytic\n")
        for t, w in empirical:
            fh.write(f"{t:.6f},{w:.8f},{analytic_fraction(t, params):.8f}\n")
