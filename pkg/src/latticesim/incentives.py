"""Fees, witness availability lifecycle, and compensation minting.

A witness that served enough *distinct* transactors in a day may issue a
compensation record payable to itself, attaching the witnessed records
(each dual-signed by its transactors and countersigned by the witness).
The rest of the network re-validates every attached record; one valid
objection vetoes the mint and blacklists the issuer. Compensation is a
fixed daily amount, never value-proportional, so padding with repeat
traffic between the same parties buys nothing.

Bridge service is compensated through the same record shape with its own
fixed daily amount, attaching signed keepalives from the served nodes.
"""

from dataclasses import dataclass, replace
from functools import cached_property
import hashlib

from .crypto import AccountId, KeyPair, Signature, sign, signature_valid
from .ledger import (
    FeePolicy,
    Ledger,
    TransactionRecord,
    _lp,
    encode_record,
)

COMP_WITNESS = "witness"
COMP_BRIDGE = "bridge"


def compute_fee(amount: int, policy: FeePolicy) -> int:
    return policy.fee(amount)


@dataclass(frozen=True)
class IncentiveParams:
    daily_compensation: int = 100
    min_transactors: int = 10
    idle_period_days: int = 7
    day_length: float = 86_400.0
    bridge_daily_compensation: int = 50
    bridge_min_clients: int = 1
    witness_stake: int = 100

    def standard_amount(self, service: str) -> int:
        return self.daily_compensation if service == COMP_WITNESS else self.bridge_daily_compensation

    def day_of(self, sim_time: float) -> int:
        return int(sim_time // self.day_length)


@dataclass(frozen=True)
class WitnessedRecord:
    """A transaction record countersigned by the witness claiming service."""

    record: TransactionRecord
    witness_sig: Signature

    def countersignature_valid(self, witness: AccountId) -> bool:
        return self.witness_sig.signer == witness and signature_valid(
            self.record.canonical_bytes(), self.witness_sig
        )

    def service_bytes(self) -> bytes:
        return _lp(encode_record(self.record)) + _lp(self.witness_sig.data)


@dataclass(frozen=True)
class BridgeServiceProof:
    """A tethered node's signed acknowledgment of one day of bridge service."""

    client: AccountId
    bridge: AccountId
    day_index: int
    client_sig: Signature

    def ack_bytes(self) -> bytes:
        return b"bridge-service" + _lp(self.client.digest) + _lp(self.bridge.digest) + _lp(
            self.day_index.to_bytes(8, "big")
        )

    def valid_for(self, bridge: AccountId, day_index: int) -> bool:
        return (
            self.bridge == bridge
            and self.day_index == day_index
            and self.client_sig.signer == self.client
            and signature_valid(self.ack_bytes(), self.client_sig)
        )

    def service_bytes(self) -> bytes:
        return self.ack_bytes() + _lp(self.client_sig.data)


def make_bridge_proof(client_kp: KeyPair, bridge: AccountId, day_index: int) -> BridgeServiceProof:
    ack = (
        b"bridge-service"
        + _lp(client_kp.account.digest)
        + _lp(bridge.digest)
        + _lp(day_index.to_bytes(8, "big"))
    )
    return BridgeServiceProof(
        client=client_kp.account,
        bridge=bridge,
        day_index=day_index,
        client_sig=sign(client_kp.secret_key, ack),
    )


@dataclass(frozen=True)
class CompensationRecord:
    """Daily self-payable mint request with the day's service attached."""

    witness: AccountId
    day_index: int
    amount: int
    service: str
    attached: tuple
    witness_sig: Signature | None = None

    def canonical_bytes(self) -> bytes:
        parts = [
            _lp(self.service.encode("ascii")),
            _lp(self.witness.digest),
            _lp(self.day_index.to_bytes(8, "big")),
            _lp(self.amount.to_bytes(8, "big")),
            _lp(len(self.attached).to_bytes(4, "big")),
        ]
        parts.extend(_lp(item.service_bytes()) for item in self.attached)
        return b"".join(parts)

    @cached_property
    def comp_id(self) -> bytes:
        return hashlib.sha256(self.canonical_bytes()).digest()

    def signature_ok(self) -> bool:
        return (
            self.witness_sig is not None
            and self.witness_sig.signer == self.witness
            and signature_valid(self.canonical_bytes(), self.witness_sig)
        )


def distinct_transactors(records) -> set:
    parties = set()
    for rec in records:
        parties.add(rec.sender)
        parties.add(rec.receiver)
    return parties


class WitnessRegistry:
    """A node's list of available witnesses with stakes and service times."""

    def __init__(self):
        self.available: dict[AccountId, int] = {}  # node -> registration day
        self.stakes: dict[AccountId, int] = {}
        self.last_witnessed: dict[AccountId, int] = {}

    def register_witness(self, node: AccountId, stake: int, day: int, blacklist=frozenset()) -> bool:
        if node in blacklist:
            return False
        self.available[node] = day
        self.stakes[node] = stake
        return True

    def remove(self, node: AccountId) -> None:
        self.available.pop(node, None)
        self.stakes.pop(node, None)
        self.last_witnessed.pop(node, None)

    def mark_witnessed(self, node: AccountId, day: int) -> None:
        self.last_witnessed[node] = day

    def prune_idle(self, day: int, idle_period_days: int) -> list:
        """Drop witnesses with no service for idle_period_days full days."""
        pruned = []
        for node in sorted(self.available, key=lambda a: a.digest):
            last_active = max(self.available[node], self.last_witnessed.get(node, -1))
            if day - last_active > idle_period_days:
                pruned.append(node)
        for node in pruned:
            self.remove(node)
        return pruned

    def available_nodes(self, blacklist=frozenset()) -> list:
        return sorted((n for n in self.available if n not in blacklist), key=lambda a: a.digest)


class WitnessDayLog:
    """Per-witness tracker of witnessed-and-accepted records by day."""

    def __init__(self):
        self._by_day: dict[int, dict[bytes, TransactionRecord]] = {}
        self.issued_days: set[int] = set()

    def add(self, record: TransactionRecord, day: int) -> None:
        self._by_day.setdefault(day, {})[record.tx_id] = record

    def records(self, day: int) -> list:
        return list(self._by_day.get(day, {}).values())

    def transactor_count(self, day: int) -> int:
        return len(distinct_transactors(self.records(day)))


def issue_compensation(
    witness_kp: KeyPair,
    day_log: WitnessDayLog,
    day: int,
    params: IncentiveParams,
) -> CompensationRecord | None:
    """Build the day's mint request, or None when not eligible.

    Eligibility counts distinct transactor accounts, not transactions, and
    at most one record per witness per day leaves this function.
    """
    if day in day_log.issued_days:
        return None
    records = day_log.records(day)
    if len(distinct_transactors(records)) < params.min_transactors:
        return None
    attached = tuple(
        WitnessedRecord(
            record=rec,
            witness_sig=sign(witness_kp.secret_key, rec.canonical_bytes()),
        )
        for rec in sorted(records, key=lambda r: r.tx_id)
    )
    unsigned = CompensationRecord(
        witness=witness_kp.account,
        day_index=day,
        amount=params.standard_amount(COMP_WITNESS),
        service=COMP_WITNESS,
        attached=attached,
    )
    comp = replace(unsigned, witness_sig=sign(witness_kp.secret_key, unsigned.canonical_bytes()))
    day_log.issued_days.add(day)
    return comp


def validate_compensation(
    comp: CompensationRecord,
    ledger: Ledger,
    params: IncentiveParams,
    blacklist=frozenset(),
) -> tuple[bool, str]:
    """Re-check a mint request against the local ledger.

    Returns (ok, reason). Any failure is grounds to sign a rejection and
    blacklist the issuer.
    """
    if comp.witness in blacklist:
        return False, "issuer is blacklisted"
    if not comp.signature_ok():
        return False, "bad issuer signature"
    if comp.service not in (COMP_WITNESS, COMP_BRIDGE):
        return False, "unknown service kind"
    if comp.amount != params.standard_amount(comp.service):
        return False, "amount differs from the standard daily fee"
    if not comp.attached:
        return False, "no service records attached"
    if comp.service == COMP_WITNESS:
        for wr in comp.attached:
            if not isinstance(wr, WitnessedRecord):
                return False, "witness compensation must attach witnessed records"
            if not wr.countersignature_valid(comp.witness):
                return False, "attached record not countersigned by issuer"
            if not wr.record.signatures_valid():
                return False, "attached record has an invalid transactor signature"
            if wr.record.tx_id not in ledger.tx_index:
                return False, "attached record unknown to the ledger"
        count = len(distinct_transactors(wr.record for wr in comp.attached))
        if count < params.min_transactors:
            return False, f"only {count} distinct transactors served"
    else:
        for proof in comp.attached:
            if not isinstance(proof, BridgeServiceProof):
                return False, "bridge compensation must attach service proofs"
            if not proof.valid_for(comp.witness, comp.day_index):
                return False, "invalid bridge service proof"
        clients = {proof.client for proof in comp.attached}
        if len(clients) < params.bridge_min_clients:
            return False, "too few distinct bridged clients"
    return True, "ok"
