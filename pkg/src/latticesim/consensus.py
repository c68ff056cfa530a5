"""True-consensus orchestration.

A proposed transaction is valid to the network when a minimum number of
selected witnesses support it and nobody validly opposes: one rejection
backed by checkable evidence vetoes any number of acceptances. Reports
whose evidence does not hold are themselves falsifications and cost the
reporting witness its eligibility.

Witness sets are drawn per transaction: every available witness makes a
local random peer selection, the union forms a one-shot random network,
fluid community detection runs on it, and the largest community serves.
Fresh randomness per transaction keeps the set unpredictable.

Decisions depend only on report contents and locally elapsed waiting
time; nothing compares clocks across nodes.
"""

from dataclasses import dataclass, replace
import math

from .crypto import AccountId, KeyPair, Signature, sign, signature_valid
from .fluid import default_k, detect_communities, largest_community
from .graphnet import assemble_from_selections, local_selection
from .ledger import (
    EV_DOUBLE_SPEND,
    EV_OVERDRAW,
    EV_PREMATURE_SPEND,
    InvalidityEvidence,
    Ledger,
    TransactionRecord,
    _lp,
    encode_record,
    evidence_is_conclusive,
    verify_evidence,
)

ACCEPTANCE = "acceptance"
REJECTION = "rejection"

ACCEPTED = "accepted"
REJECTED = "rejected"
PENDING = "pending"

OFFENSE_SENDER_FRAUD = "sender_fraud"
OFFENSE_WITNESS_FALSIFICATION = "witness_falsification"
OFFENSE_POST_PARTITION_DOUBLE_SPEND = "post_partition_double_spend"

# evidence kinds that prove the *sender* defrauded the network
SENDER_FRAUD_KINDS = (EV_DOUBLE_SPEND, EV_OVERDRAW)


class ConsensusError(Exception):
    pass


class ConsensusUnavailable(ConsensusError):
    """Too few available witnesses to form a set."""


class PenaltyWithoutEvidence(ConsensusError):
    pass


@dataclass(frozen=True)
class ConsensusParams:
    witness_pool_size: int | None = None  # None: use every available witness
    min_acceptances: int | None = None  # None: ceil(2/3 of the selected set)
    waiting_period: float = 2.0
    recipient_spend_delay: float = 5.0
    slash_fraction: float = 1.0
    community_k: int | None = None  # None: ceil(sqrt(available))

    def __post_init__(self):
        if not 0.0 <= self.slash_fraction <= 1.0:
            raise ValueError("slash_fraction must lie in [0, 1]")
        if self.waiting_period < 0 or self.recipient_spend_delay < 0:
            raise ValueError("delays must be non-negative")

    def resolve_min_acceptances(self, selected_count: int) -> int:
        if self.min_acceptances is not None:
            return self.min_acceptances
        return max(1, math.ceil(selected_count * 2 / 3))


@dataclass
class NodeStatus:
    node: AccountId
    witness_eligible: bool = True
    blacklisted: bool = False
    available_witness: bool = False
    sender_flagged: bool = False

    def blacklist(self) -> None:
        self.blacklisted = True
        self.witness_eligible = False
        self.available_witness = False


@dataclass(frozen=True)
class WitnessReport:
    """A witness's signed verdict on one proposed transaction."""

    kind: str
    tx_id: bytes
    proposed: TransactionRecord
    witness: AccountId
    evidence: InvalidityEvidence | None = None  # rejections
    supporting: tuple = ()  # acceptances: sender ledger excerpt
    witness_sig: Signature | None = None

    def canonical_bytes(self) -> bytes:
        parts = [
            _lp(self.kind.encode("ascii")),
            _lp(self.tx_id),
            _lp(encode_record(self.proposed)),
            _lp(self.witness.digest),
        ]
        parts.append(_lp(self.evidence.encode() if self.evidence else b""))
        parts.append(_lp(len(self.supporting).to_bytes(4, "big")))
        parts.extend(_lp(encode_record(r)) for r in self.supporting)
        return b"".join(parts)

    def signature_ok(self) -> bool:
        return (
            self.witness_sig is not None
            and self.witness_sig.signer == self.witness
            and signature_valid(self.canonical_bytes(), self.witness_sig)
        )


def make_report(
    witness_kp: KeyPair,
    proposed: TransactionRecord,
    evidence: InvalidityEvidence | None,
    supporting=(),
) -> WitnessReport:
    unsigned = WitnessReport(
        kind=REJECTION if evidence is not None else ACCEPTANCE,
        tx_id=proposed.tx_id,
        proposed=proposed,
        witness=witness_kp.account,
        evidence=evidence,
        supporting=tuple(supporting),
    )
    return replace(unsigned, witness_sig=sign(witness_kp.secret_key, unsigned.canonical_bytes()))


# -- witness selection ---------------------------------------------------------------


def select_witnesses(available, k: int | None, streams_or_rng, max_redraws: int = 64) -> frozenset:
    """Largest fluid community of the one-shot localized random network.

    ``streams_or_rng`` is a random.Random; every node's selection and the
    detection run consume it in a fixed order, so any party holding the
    same stream derives the same set. Disconnected draws are retried (a
    community cannot flow across components); after ``max_redraws`` the
    largest connected component is used.
    """
    nodes = sorted(set(available))
    if len(nodes) < 2:
        raise ConsensusUnavailable("witness selection needs at least 2 available nodes")
    if max_redraws < 1:
        raise ValueError("max_redraws must be positive")
    rng = streams_or_rng

    graph = None
    for _ in range(max_redraws):
        selections = [local_selection(node, nodes, rng) for node in nodes]
        candidate = assemble_from_selections(selections)
        if candidate.is_connected():
            graph = candidate
            break
    if graph is None:
        graph = candidate.largest_component()

    if k is None:
        k = default_k(graph.n)
    k = min(k, graph.n)
    assignment = detect_communities(graph, k, rng)
    return frozenset(largest_community(assignment))


# -- witness validation ------------------------------------------------------------------


def witness_validate(
    witness_kp: KeyPair,
    ledger: Ledger,
    proposed: TransactionRecord,
    pending: dict | None = None,
    spend_gate=None,
) -> WitnessReport | None:
    """Wrap the ledger verdict into a signed report.

    ``pending`` maps (sender, sender_seq) -> record the witness has already
    endorsed but not yet applied; a conflicting proposal is rejected with
    the endorsed record as evidence even before it lands in the ledger.
    ``spend_gate`` is a callable(proposed) -> (ok, credit_record) enforcing
    the recipient spend delay. Returns None when the witness cannot prove
    its objection (e.g. it lags the sender's chain): honest nodes withhold
    rather than broadcast unverifiable rejections.
    """
    evidence = ledger.validate_record(proposed)

    if evidence is None and pending:
        endorsed = pending.get((proposed.sender, proposed.sender_seq))
        if endorsed is not None and endorsed.tx_id != proposed.tx_id:
            evidence = InvalidityEvidence(kind=EV_DOUBLE_SPEND, conflicting_record=endorsed)

    if evidence is None and spend_gate is not None:
        ok, credit = spend_gate(proposed)
        if not ok:
            evidence = InvalidityEvidence(kind=EV_PREMATURE_SPEND, conflicting_record=credit)

    if evidence is None:
        return make_report(witness_kp, proposed, None, supporting=ledger.sender_excerpt(proposed.sender))
    if not evidence_is_conclusive(evidence):
        return None
    return make_report(witness_kp, proposed, evidence)


def verify_report(report: WitnessReport, ledger: Ledger) -> bool:
    """True iff the report holds up; False marks it falsified.

    A rejection must prove invalidity from its own evidence. An acceptance
    is falsified when it is malformed or when this node itself holds
    conclusive contrary evidence.
    """
    if not report.signature_ok() or report.tx_id != report.proposed.tx_id:
        return False

    if report.kind == REJECTION:
        if report.evidence is None:
            return False
        return verify_evidence(
            report.evidence, report.proposed, ledger.fee_policy, ledger.fee_charged_to
        )

    if report.kind == ACCEPTANCE:
        if not report.proposed.signatures_valid():
            return False
        contrary = ledger.validate_record(report.proposed)
        if contrary is not None and evidence_is_conclusive(contrary):
            return False
        return True

    return False


# -- tallying ----------------------------------------------------------------------


@dataclass
class TallyResult:
    outcome: str
    valid_acceptances: int = 0
    valid_rejections: int = 0
    falsified_witnesses: tuple = ()
    rejection_evidence: InvalidityEvidence | None = None


def tally(
    tx_id: bytes,
    reports,
    params: ConsensusParams,
    ledger: Ledger,
    proposed_at: float,
    now: float,
    min_acceptances: int,
) -> TallyResult:
    """Fold a report set into accepted / rejected / pending.

    One valid rejection rejects outright. Acceptance needs the waiting
    period elapsed (local time only), the acceptance quorum, and zero
    valid rejections. A witness that emitted both verdicts for one
    transaction is a falsifier and all its reports are discarded.
    """
    by_witness: dict[AccountId, list[WitnessReport]] = {}
    for report in reports:
        if report.tx_id != tx_id:
            continue
        by_witness.setdefault(report.witness, []).append(report)

    falsified: list[AccountId] = []
    acceptances = 0
    rejections = 0
    rejection_evidence = None
    for witness in sorted(by_witness, key=lambda a: a.digest):
        batch = by_witness[witness]
        kinds = {r.kind for r in batch}
        if len(kinds) > 1:  # self-contradicting witness
            falsified.append(witness)
            continue
        report = batch[-1]
        if verify_report(report, ledger):
            if report.kind == ACCEPTANCE:
                acceptances += 1
            else:
                rejections += 1
                rejection_evidence = rejection_evidence or report.evidence
        else:
            falsified.append(witness)

    if rejections > 0:
        outcome = REJECTED
    elif now - proposed_at >= params.waiting_period and acceptances >= min_acceptances:
        outcome = ACCEPTED
    else:
        outcome = PENDING
    return TallyResult(
        outcome=outcome,
        valid_acceptances=acceptances,
        valid_rejections=rejections,
        falsified_witnesses=tuple(falsified),
        rejection_evidence=rejection_evidence,
    )


# -- penalties -------------------------------------------------------------------------


def apply_penalty(
    ledger: Ledger,
    statuses: dict,
    offender: AccountId,
    offense: str,
    params: ConsensusParams,
    evidence=None,
    stake: int = 0,
) -> int:
    """Apply a proven offense to this node's view. Returns the amount sunk."""
    if evidence is None:
        raise PenaltyWithoutEvidence(f"{offense} penalty requires evidence")
    status = statuses.setdefault(offender, NodeStatus(node=offender))
    slashed = 0
    if offense == OFFENSE_SENDER_FRAUD:
        if not status.sender_flagged:
            status.sender_flagged = True
            slashed = ledger.slash(offender, params.slash_fraction)
    elif offense == OFFENSE_WITNESS_FALSIFICATION:
        if not status.blacklisted:
            status.blacklist()
            if stake:
                forfeit = min(stake, ledger.balance(offender))
                if forfeit:
                    ledger.chains[offender].balance -= forfeit
                    ledger.fee_sink += forfeit
                    slashed = forfeit
    elif offense == OFFENSE_POST_PARTITION_DOUBLE_SPEND:
        if not status.sender_flagged:
            status.sender_flagged = True
            slashed = ledger.slash(offender, params.slash_fraction)
    else:
        raise ConsensusError(f"unknown offense {offense!r}")
    return slashed


def recipient_spend_gate(accepted_at: float, now: float, params: ConsensusParams) -> bool:
    """Whether funds credited at ``accepted_at`` (local clock) are spendable."""
    return now >= accepted_at + params.recipient_spend_delay
