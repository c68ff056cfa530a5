"""Stem/fluff transaction relay for origin obfuscation.

A record travels a linear stem of randomly chosen relay nodes, batched
with other pending records and re-wrapped hop to hop (opacity stands in
for real onion encryption), each hop adding a small random delay. The
final hop performs the wide fluff broadcast, so an observer of the fluff
phase sees a broadcaster that is never the originator.
"""

from dataclasses import dataclass
import random


class RelayError(ValueError):
    pass


@dataclass(frozen=True)
class PrivacyParams:
    stem_length: int = 4
    max_hop_delay: float = 0.2
    batch_size: int = 4

    def __post_init__(self):
        if self.stem_length < 0:
            raise RelayError("stem_length must be non-negative")
        if self.max_hop_delay < 0:
            raise RelayError("max_hop_delay must be non-negative")
        if self.batch_size < 1:
            raise RelayError("batch_size must be positive")


@dataclass(frozen=True)
class StemRoute:
    origin: str
    hops: tuple
    delays: tuple
    batch: tuple  # tx_ids travelling together

    @property
    def fluff_node(self) -> str:
        return self.hops[-1] if self.hops else self.origin

    @property
    def total_delay(self) -> float:
        return sum(self.delays)


def plan_stem_route(
    origin: str,
    candidates,
    tx_id: bytes,
    pending_pool,
    params: PrivacyParams,
    rng: random.Random,
) -> StemRoute:
    """Draw the stem: distinct relay hops (never the origin), per-hop delays,
    and a batch of up to batch_size records from the pending pool.

    With fewer reachable nodes than stem hops the route degenerates to an
    immediate fluff from the origin; callers flag that in metrics.
    """
    others = sorted(set(candidates) - {origin})
    hop_count = min(params.stem_length, len(others))
    hops = tuple(rng.sample(others, hop_count)) if hop_count else ()
    delays = tuple(rng.random() * params.max_hop_delay for _ in hops)
    companions = [t for t in sorted(pending_pool) if t != tx_id]
    batch = (tx_id, *companions[: params.batch_size - 1])
    return StemRoute(origin=origin, hops=hops, delays=delays, batch=batch)


@dataclass(frozen=True)
class RelayObservation:
    """One relay-phase event as an adversary would record it."""

    phase: str  # "stem" | "fluff"
    tx_id: bytes
    src: str
    dst: str | None
    time: float


ADVERSARY_FLUFF_ONLY = "fluff_only"
ADVERSARY_FULL = "full"


def origin_inference_test(observations, true_origins: dict, adversary: str = ADVERSARY_FLUFF_ONLY) -> float:
    """Accuracy of the best origin guess available to the adversary.

    The fluff-only adversary names the fluff broadcaster as the origin
    (exact for stem_length 0). The full-visibility adversary also reads
    stem traffic and names the earliest stem sender, which defeats the
    relay entirely; it documents the model's limits.
    """
    if adversary not in (ADVERSARY_FLUFF_ONLY, ADVERSARY_FULL):
        raise RelayError(f"unknown adversary model {adversary!r}")
    if not true_origins:
        raise RelayError("no transactions to infer")

    guesses: dict[bytes, str] = {}
    first_stem: dict[bytes, RelayObservation] = {}
    for obs in observations:
        if obs.tx_id not in true_origins:
            continue
        if obs.phase == "fluff":
            guesses.setdefault(obs.tx_id, obs.src)
        elif obs.phase == "stem" and adversary == ADVERSARY_FULL:
            prior = first_stem.get(obs.tx_id)
            if prior is None or obs.time < prior.time:
                first_stem[obs.tx_id] = obs
    if adversary == ADVERSARY_FULL:
        for tx_id, obs in first_stem.items():
            guesses[tx_id] = obs.src

    correct = sum(1 for tx_id, origin in true_origins.items() if guesses.get(tx_id) == origin)
    return correct / len(true_origins)
