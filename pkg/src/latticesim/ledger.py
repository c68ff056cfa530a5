"""The parallel-chains store: one ordered, hash-linked chain per account.

Ordering lives inside each record: a per-sender sequence number plus a
hash link to the sender's previous outgoing record give every account an
independently verifiable total order with no global coordination. Every
receiving account is freshly spawned (exactly one credit, ever), so the
receive side needs no sequence at all.

All value arithmetic is integer, in smallest base units, so conservation
checks are exact. Fees land in a sink counter and slashed funds join it;
minted compensation is tracked separately, giving the supply identity

    sum(balances) + fee_sink - minted == genesis endowment
"""

from dataclasses import dataclass, field, replace
from functools import cached_property
import hashlib

from .crypto import AccountId, KeyPair, Signature, sign, signature_valid


@dataclass(frozen=True)
class FeePolicy:
    """Small percentage fee with an absolute cap, in integer base units.

    fee(amount) = min(amount * rate_num // rate_den, cap). The rate is held
    as an integer ratio so value arithmetic never touches floating point;
    flooring keeps micro-transactions effectively free.
    """

    rate_num: int = 1
    rate_den: int = 1000
    cap: int = 5

    def __post_init__(self):
        if self.rate_den <= 0 or self.rate_num < 0 or self.cap < 0:
            raise ValueError("fee policy parameters must be non-negative (rate_den > 0)")

    def fee(self, amount: int) -> int:
        if amount <= 0:
            raise ValueError("fee is defined for positive amounts")
        return min(amount * self.rate_num // self.rate_den, self.cap)


ZERO_DIGEST = b"\x00" * 32
# Reserved id used as the "sender" of genesis and minted credits.
RESERVED_SENDER = AccountId(ZERO_DIGEST)

KIND_TRANSFER = "transfer"
KIND_GENESIS = "genesis"
KIND_COMPENSATION = "compensation"

EV_DOUBLE_SPEND = "double_spend"
EV_OVERDRAW = "overdraw"
EV_BAD_SIGNATURE = "bad_signature"
EV_STALE_SEQUENCE = "stale_sequence"
EV_RECEIVER_REUSE = "receiver_reuse"
EV_PREMATURE_SPEND = "premature_spend"


class LedgerError(Exception):
    pass


class InternalConsistencyError(LedgerError):
    """A record that should have been pre-validated failed validation."""


def _lp(chunk: bytes) -> bytes:
    if len(chunk) > 0xFFFF:
        raise ValueError("field too long for 16-bit length prefix")
    return len(chunk).to_bytes(2, "big") + chunk


def _read_lp(buf: bytes, off: int) -> tuple[bytes, int]:
    n = int.from_bytes(buf[off : off + 2], "big")
    off += 2
    return buf[off : off + n], off + n


@dataclass(frozen=True)
class TransactionRecord:
    """A dual-signed transfer carrying its own per-sender ordering.

    ``sender_seq`` counts the sender's outgoing transfers from 1;
    ``prev_sender_hash`` is the tx_id of the sender's previous outgoing
    record (all zeros for the first). Genesis and compensation credits
    reuse the shape with the reserved sender and no signatures.
    """

    kind: str
    sender: AccountId
    receiver: AccountId
    amount: int
    sender_seq: int
    prev_sender_hash: bytes
    sender_sig: Signature | None = None
    receiver_sig: Signature | None = None

    def __post_init__(self):
        if self.kind not in (KIND_TRANSFER, KIND_GENESIS, KIND_COMPENSATION):
            raise ValueError(f"unknown record kind {self.kind!r}")
        if not 0 < self.amount < 2**64:
            raise ValueError("amount must be a positive 64-bit integer")
        if not 0 <= self.sender_seq < 2**64:
            raise ValueError("sender_seq out of range")
        if len(self.prev_sender_hash) != 32:
            raise ValueError("prev_sender_hash must be 32 bytes")
        if self.kind == KIND_TRANSFER and self.sender == self.receiver:
            raise ValueError("sender and receiver must differ")

    def canonical_bytes(self) -> bytes:
        """Field-order-fixed, length-prefixed layout of everything but the
        signatures; the input to both tx_id hashing and both parties' signing."""
        return b"".join(
            (
                _lp(self.kind.encode("ascii")),
                _lp(self.sender.digest),
                _lp(self.receiver.digest),
                _lp(self.amount.to_bytes(8, "big")),
                _lp(self.sender_seq.to_bytes(8, "big")),
                _lp(self.prev_sender_hash),
            )
        )

    @cached_property
    def tx_id(self) -> bytes:
        return hashlib.sha256(self.canonical_bytes()).digest()

    def signatures_valid(self) -> bool:
        """Both parties signed exactly this record's canonical bytes."""
        if self.kind != KIND_TRANSFER:
            return True  # genesis/compensation credits are exempt
        if self.sender_sig is None or self.receiver_sig is None:
            return False
        msg = self.canonical_bytes()
        return (
            self.sender_sig.signer == self.sender
            and self.receiver_sig.signer == self.receiver
            and signature_valid(msg, self.sender_sig)
            and signature_valid(msg, self.receiver_sig)
        )


def make_transfer(
    sender_kp: KeyPair,
    receiver_kp: KeyPair,
    amount: int,
    sender_seq: int,
    prev_sender_hash: bytes,
) -> TransactionRecord:
    """Build and dual-sign a transfer record."""
    rec = TransactionRecord(
        kind=KIND_TRANSFER,
        sender=sender_kp.account,
        receiver=receiver_kp.account,
        amount=amount,
        sender_seq=sender_seq,
        prev_sender_hash=prev_sender_hash,
    )
    msg = rec.canonical_bytes()
    return replace(
        rec,
        sender_sig=sign(sender_kp.secret_key, msg),
        receiver_sig=sign(receiver_kp.secret_key, msg),
    )


def _encode_sig(sig: Signature | None) -> bytes:
    if sig is None:
        return _lp(b"")
    return _lp(_lp(sig.signer.digest) + _lp(sig.public_key) + _lp(sig.data))


def _decode_sig(chunk: bytes) -> Signature | None:
    if not chunk:
        return None
    signer, off = _read_lp(chunk, 0)
    pub, off = _read_lp(chunk, off)
    data, off = _read_lp(chunk, off)
    return Signature(signer=AccountId(signer), public_key=pub, data=data)


def encode_record(rec: TransactionRecord) -> bytes:
    """Full wire form: canonical bytes followed by both signatures."""
    return rec.canonical_bytes() + _encode_sig(rec.sender_sig) + _encode_sig(rec.receiver_sig)


def decode_record(buf: bytes) -> TransactionRecord:
    kind, off = _read_lp(buf, 0)
    sender, off = _read_lp(buf, off)
    receiver, off = _read_lp(buf, off)
    amount, off = _read_lp(buf, off)
    seq, off = _read_lp(buf, off)
    prev, off = _read_lp(buf, off)
    s_sig, off = _read_lp(buf, off)
    r_sig, off = _read_lp(buf, off)
    if off != len(buf):
        raise ValueError("trailing bytes in record encoding")
    return TransactionRecord(
        kind=kind.decode("ascii"),
        sender=AccountId(sender),
        receiver=AccountId(receiver),
        amount=int.from_bytes(amount, "big"),
        sender_seq=int.from_bytes(seq, "big"),
        prev_sender_hash=prev,
        sender_sig=_decode_sig(s_sig),
        receiver_sig=_decode_sig(r_sig),
    )


@dataclass(frozen=True)
class InvalidityEvidence:
    """A self-contained bundle letting any third party confirm a proposed
    record is invalid, without trusting the reporter."""

    kind: str
    conflicting_record: TransactionRecord | None = None
    ledger_excerpt: tuple[TransactionRecord, ...] = ()

    def encode(self) -> bytes:
        parts = [_lp(self.kind.encode("ascii"))]
        if self.conflicting_record is None:
            parts.append(_lp(b""))
        else:
            parts.append(_lp(encode_record(self.conflicting_record)))
        parts.append(_lp(len(self.ledger_excerpt).to_bytes(4, "big")))
        parts.extend(_lp(encode_record(r)) for r in self.ledger_excerpt)
        return b"".join(parts)


@dataclass
class AccountChain:
    """All records affecting one account, in application order."""

    account: AccountId
    records: list[TransactionRecord] = field(default_factory=list)
    balance: int = 0
    outgoing: list[TransactionRecord] = field(default_factory=list)

    @property
    def head_hash(self) -> bytes:
        return self.outgoing[-1].tx_id if self.outgoing else ZERO_DIGEST

    @property
    def next_seq(self) -> int:
        return len(self.outgoing) + 1


class Ledger:
    """A node's replica of the parallel-chains state.

    Mutated only by its owning node; snapshots may be read freely.
    """

    def __init__(self, fee_policy: FeePolicy | None = None, fee_charged_to: str = "sender"):
        if fee_charged_to not in ("sender", "receiver"):
            raise ValueError("fee_charged_to must be 'sender' or 'receiver'")
        self.fee_policy = fee_policy or FeePolicy()
        self.fee_charged_to = fee_charged_to
        self.chains: dict[AccountId, AccountChain] = {}
        self.spawned: set[AccountId] = set()
        self.by_sender_seq: dict[tuple[AccountId, int], TransactionRecord] = {}
        self.tx_index: dict[bytes, TransactionRecord] = {}
        self.fee_sink = 0
        self.minted = 0
        self.endowment = 0
        self.applied_order: list[TransactionRecord] = []

    # -- construction helpers -------------------------------------------------

    def _chain(self, account: AccountId) -> AccountChain:
        if account not in self.chains:
            self.chains[account] = AccountChain(account=account)
        return self.chains[account]

    def endow(self, account: AccountId, amount: int) -> TransactionRecord:
        """Genesis credit, exempt from the dual-signature rule. All later
        value enters only via transfers or minted compensation."""
        if account in self.spawned:
            raise LedgerError("genesis credit to an already-spawned account")
        rec = TransactionRecord(
            kind=KIND_GENESIS,
            sender=RESERVED_SENDER,
            receiver=account,
            amount=amount,
            sender_seq=len([r for r in self.applied_order if r.kind == KIND_GENESIS]) + 1,
            prev_sender_hash=ZERO_DIGEST,
        )
        self._apply_credit(rec)
        self.endowment += amount
        return rec

    def apply_compensation(self, witness: AccountId, amount: int, day_index: int) -> TransactionRecord:
        """Minted credit to an existing account: increases supply, no debit.
        Idempotent per (witness, day)."""
        rec = TransactionRecord(
            kind=KIND_COMPENSATION,
            sender=RESERVED_SENDER,
            receiver=witness,
            amount=amount,
            sender_seq=day_index,
            prev_sender_hash=ZERO_DIGEST,
        )
        if rec.tx_id in self.tx_index:
            return rec
        chain = self._chain(witness)
        chain.records.append(rec)
        chain.balance += amount
        self.tx_index[rec.tx_id] = rec
        self.applied_order.append(rec)
        self.minted += amount
        return rec

    def _apply_credit(self, rec: TransactionRecord) -> None:
        chain = self._chain(rec.receiver)
        chain.records.append(rec)
        chain.balance += rec.amount
        self.spawned.add(rec.receiver)
        self.tx_index[rec.tx_id] = rec
        self.applied_order.append(rec)

    # -- fees ------------------------------------------------------------------

    def fee_for(self, amount: int) -> int:
        return self.fee_policy.fee(amount)

    def sender_debit(self, amount: int) -> int:
        fee = self.fee_for(amount)
        return amount + fee if self.fee_charged_to == "sender" else amount

    # -- queries ---------------------------------------------------------------

    def balance(self, account: AccountId) -> int:
        chain = self.chains.get(account)
        return chain.balance if chain else 0

    def total_balance(self) -> int:
        return sum(c.balance for c in self.chains.values())

    def supply_identity_holds(self) -> bool:
        return self.total_balance() + self.fee_sink - self.minted == self.endowment

    def spawn_credit(self, account: AccountId) -> TransactionRecord | None:
        """The single record that first credited ``account``, if known."""
        chain = self.chains.get(account)
        if not chain:
            return None
        for rec in chain.records:
            if rec.receiver == account and rec.kind in (KIND_GENESIS, KIND_TRANSFER):
                return rec
        return None

    def sender_excerpt(self, account: AccountId) -> tuple[TransactionRecord, ...]:
        """Spawn credit plus the full outgoing chain: with fan-in 1, this pins
        the account's balance exactly and is independently checkable."""
        chain = self.chains.get(account)
        if not chain:
            return ()
        spawn = self.spawn_credit(account)
        if spawn is None:
            return ()
        return (spawn, *chain.outgoing)

    # -- validation --------------------------------------------------------------

    def validate_record(self, rec: TransactionRecord) -> InvalidityEvidence | None:
        """Judge a proposed transfer against this replica.

        Returns None when valid (or an exact duplicate of an applied record),
        otherwise the minimal evidence for the failure. Evidence for
        sequence gaps and unknown senders is not independently provable;
        callers that report rejections should check evidence_is_conclusive.
        """
        if rec.kind != KIND_TRANSFER:
            raise ValueError("only transfer records go through validate_record")

        if not rec.signatures_valid():
            return InvalidityEvidence(kind=EV_BAD_SIGNATURE)

        if rec.tx_id in self.tx_index:
            return None  # already applied, append is idempotent

        stored = self.by_sender_seq.get((rec.sender, rec.sender_seq))
        if stored is not None and stored.tx_id != rec.tx_id:
            return InvalidityEvidence(kind=EV_DOUBLE_SPEND, conflicting_record=stored)

        if rec.receiver in self.spawned:
            return InvalidityEvidence(
                kind=EV_RECEIVER_REUSE, conflicting_record=self.spawn_credit(rec.receiver)
            )

        chain = self.chains.get(rec.sender)
        next_seq = chain.next_seq if chain else 1
        if rec.sender_seq > next_seq:
            # gap: this replica lags, nothing provable to show
            excerpt = (chain.outgoing[-1],) if chain and chain.outgoing else ()
            return InvalidityEvidence(kind=EV_STALE_SEQUENCE, ledger_excerpt=excerpt)
        if rec.sender_seq == next_seq:
            expected_prev = chain.head_hash if chain else ZERO_DIGEST
            if rec.prev_sender_hash != expected_prev:
                prior = chain.outgoing[-1] if chain and chain.outgoing else None
                return InvalidityEvidence(kind=EV_STALE_SEQUENCE, conflicting_record=prior)

        excerpt = self.sender_excerpt(rec.sender)
        if not excerpt:
            # unknown sender: can't prove absence of funds, only withhold
            return InvalidityEvidence(kind=EV_OVERDRAW)
        if self.balance(rec.sender) < self.sender_debit(rec.amount):
            return InvalidityEvidence(kind=EV_OVERDRAW, ledger_excerpt=excerpt)
        return None

    def extract_double_spend_evidence(self, proposed: TransactionRecord) -> InvalidityEvidence | None:
        """The stored record sharing (sender, sender_seq) with the proposal, if any."""
        stored = self.by_sender_seq.get((proposed.sender, proposed.sender_seq))
        if stored is None or stored.tx_id == proposed.tx_id:
            return None
        return InvalidityEvidence(kind=EV_DOUBLE_SPEND, conflicting_record=stored)

    # -- mutation -----------------------------------------------------------------

    def append_transaction(self, rec: TransactionRecord) -> None:
        """Enter an accepted transfer into the sender and receiver chains.

        Idempotent on duplicate tx_id. Raises InternalConsistencyError when
        the record does not validate: callers append only tallied-accepted
        records, so a failure here is a bug, not a protocol event.
        """
        if rec.tx_id in self.tx_index:
            return
        ev = self.validate_record(rec)
        if ev is not None:
            raise InternalConsistencyError(f"accepted record fails validation: {ev.kind}")

        fee = self.fee_for(rec.amount)
        sender_chain = self._chain(rec.sender)
        sender_chain.records.append(rec)
        sender_chain.outgoing.append(rec)
        sender_chain.balance -= rec.amount + (fee if self.fee_charged_to == "sender" else 0)

        receiver_chain = self._chain(rec.receiver)
        receiver_chain.records.append(rec)
        receiver_chain.balance += rec.amount - (fee if self.fee_charged_to == "receiver" else 0)

        self.spawned.add(rec.receiver)
        self.by_sender_seq[(rec.sender, rec.sender_seq)] = rec
        self.tx_index[rec.tx_id] = rec
        self.applied_order.append(rec)
        self.fee_sink += fee

    def slash(self, account: AccountId, fraction: float) -> int:
        """Move ``fraction`` of the account's remaining balance to the sink.
        Returns the slashed amount."""
        if not 0.0 <= fraction <= 1.0:
            raise ValueError("slash fraction must be in [0, 1]")
        chain = self.chains.get(account)
        if chain is None:
            return 0
        amount = int(chain.balance * fraction)
        chain.balance -= amount
        self.fee_sink += amount
        return amount

    # -- checkpoint dump/load --------------------------------------------------------

    def dump_lines(self):
        """One canonical-hex record per line, in application order."""
        for rec in self.applied_order:
            yield encode_record(rec).hex()

    def dump(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            for line in self.dump_lines():
                fh.write(line + "\n")

    @classmethod
    def load(cls, path, fee_policy: FeePolicy | None = None, fee_charged_to: str = "sender") -> "Ledger":
        """Replay a dump from genesis; doubles as the balance oracle."""
        ledger = cls(fee_policy=fee_policy, fee_charged_to=fee_charged_to)
        with open(path, encoding="ascii") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = decode_record(bytes.fromhex(line))
                if rec.kind == KIND_GENESIS:
                    ledger.endow(rec.receiver, rec.amount)
                elif rec.kind == KIND_COMPENSATION:
                    ledger.apply_compensation(rec.receiver, rec.amount, rec.sender_seq)
                else:
                    ledger.append_transaction(rec)
        return ledger


# -- evidence verification ------------------------------------------------------------


def _is_genuine_credit(rec: TransactionRecord, receiver: AccountId) -> bool:
    if rec.receiver != receiver:
        return False
    if rec.kind == KIND_GENESIS:
        return True  # endowment records are axiomatic scenario config
    return rec.kind == KIND_TRANSFER and rec.signatures_valid()


def _excerpt_balance(
    excerpt: tuple[TransactionRecord, ...],
    account: AccountId,
    fee_policy: FeePolicy,
    fee_charged_to: str,
) -> int | None:
    """Replay a (spawn credit, outgoing...) excerpt; None if inconsistent."""
    if not excerpt or not _is_genuine_credit(excerpt[0], account):
        return None
    balance = excerpt[0].amount
    prev_hash = ZERO_DIGEST
    for seq, rec in enumerate(excerpt[1:], start=1):
        if rec.kind != KIND_TRANSFER or rec.sender != account:
            return None
        if rec.sender_seq != seq or rec.prev_sender_hash != prev_hash:
            return None
        if not rec.signatures_valid():
            return None
        fee = fee_policy.fee(rec.amount) if fee_charged_to == "sender" else 0
        balance -= rec.amount + fee
        prev_hash = rec.tx_id
    return balance


def evidence_is_conclusive(ev: InvalidityEvidence) -> bool:
    """Whether this evidence even claims to be independently checkable.

    Gap-style stale_sequence and unknown-sender overdraw carry no proof;
    honest witnesses withhold their report instead of broadcasting these.
    """
    if ev.kind == EV_BAD_SIGNATURE:
        return True
    if ev.kind in (EV_DOUBLE_SPEND, EV_RECEIVER_REUSE, EV_PREMATURE_SPEND):
        return ev.conflicting_record is not None
    if ev.kind == EV_OVERDRAW:
        return bool(ev.ledger_excerpt)
    if ev.kind == EV_STALE_SEQUENCE:
        return ev.conflicting_record is not None
    return False


def verify_evidence(
    ev: InvalidityEvidence,
    proposed: TransactionRecord,
    fee_policy: FeePolicy,
    fee_charged_to: str = "sender",
) -> bool:
    """Confirm invalidity of ``proposed`` from the evidence alone.

    This is the check a node with an empty ledger can run; a rejection
    whose evidence fails here is itself a falsification.
    """
    if ev.kind == EV_BAD_SIGNATURE:
        return not proposed.signatures_valid()

    if ev.kind == EV_DOUBLE_SPEND:
        c = ev.conflicting_record
        return (
            c is not None
            and c.kind == KIND_TRANSFER
            and c.signatures_valid()
            and proposed.signatures_valid()
            and c.sender == proposed.sender
            and c.sender_seq == proposed.sender_seq
            and c.tx_id != proposed.tx_id
        )

    if ev.kind == EV_RECEIVER_REUSE:
        c = ev.conflicting_record
        return (
            c is not None
            and c.tx_id != proposed.tx_id
            and _is_genuine_credit(c, proposed.receiver)
        )

    if ev.kind == EV_STALE_SEQUENCE:
        c = ev.conflicting_record
        if proposed.sender_seq == 1:
            # first spend must link to the zero digest; checkable from the record
            return proposed.prev_sender_hash != ZERO_DIGEST
        return (
            c is not None
            and c.kind == KIND_TRANSFER
            and c.signatures_valid()
            and c.sender == proposed.sender
            and c.sender_seq == proposed.sender_seq - 1
            and c.tx_id != proposed.prev_sender_hash
        )

    if ev.kind == EV_OVERDRAW:
        balance = _excerpt_balance(ev.ledger_excerpt, proposed.sender, fee_policy, fee_charged_to)
        if balance is None:
            return False
        debit = proposed.amount + (
            fee_policy.fee(proposed.amount) if fee_charged_to == "sender" else 0
        )
        return balance < debit

    if ev.kind == EV_PREMATURE_SPEND:
        # The timing claim itself rides on the witness signature; what is
        # checkable is that the cited record really is the spender's credit.
        c = ev.conflicting_record
        return c is not None and _is_genuine_credit(c, proposed.sender)

    return False
