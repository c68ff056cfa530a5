"""Protocol participants for scenario runs.

A Party is one simulated operator: a wallet of accounts (one endowed
primary identity plus fresh receiving accounts), a full ledger replica,
witness duties, per-account penalty statuses, and the partition-defense
monitors inherited from the network substrate. Parties communicate only
through scheduled messages; each tallies every transaction it hears
reports for and applies accepted records to its own replica.

Corrupt parties emit well-formed but dishonest protocol messages
(Byzantine, not crash).
"""

from dataclasses import dataclass, field, replace

from .consensus import (
    ACCEPTANCE,
    ACCEPTED,
    OFFENSE_POST_PARTITION_DOUBLE_SPEND,
    OFFENSE_SENDER_FRAUD,
    OFFENSE_WITNESS_FALSIFICATION,
    PENDING,
    REJECTED,
    REJECTION,
    SENDER_FRAUD_KINDS,
    ConsensusParams,
    NodeStatus,
    WitnessReport,
    make_report,
    recipient_spend_gate,
    select_witnesses,
    tally,
    witness_validate,
)
from .crypto import AccountId, KeyPair, generate_keypair, sign
from .incentives import (
    COMP_BRIDGE,
    BridgeServiceProof,
    CompensationRecord,
    IncentiveParams,
    WitnessDayLog,
    issue_compensation,
    make_bridge_proof,
    validate_compensation,
)
from .ledger import (
    EV_PREMATURE_SPEND,
    KIND_GENESIS,
    KIND_TRANSFER,
    InvalidityEvidence,
    Ledger,
    TransactionRecord,
    make_transfer,
)
from .netsim import Network, NodeProcess, Timer, BridgeRelay
from .privacy import PrivacyParams, plan_stem_route
from .streams import RngStreams, substream_seed

# corrupt behavior modes
FALSE_ACCEPT = "false_accept"
FALSE_REJECT = "false_reject_fabricated_evidence"
DOUBLE_SPENDER = "double_spender"
COMPENSATION_FRAUD = "compensation_fraud"
SYBIL_SPAWNER = "sybil_spawner"

CORRUPT_MODES = (FALSE_ACCEPT, FALSE_REJECT, DOUBLE_SPENDER, COMPENSATION_FRAUD, SYBIL_SPAWNER)


# -- protocol messages ---------------------------------------------------------------


@dataclass(frozen=True)
class HandoffMsg:
    """Dual-signed record handed from sender to receiver for broadcast."""

    record: TransactionRecord


@dataclass(frozen=True)
class ProposalMsg:
    record: TransactionRecord
    witnesses: frozenset  # announced witness accounts


@dataclass(frozen=True)
class ReportMsg:
    report: WitnessReport


@dataclass(frozen=True)
class StemRelayMsg:
    record: TransactionRecord
    witnesses: frozenset
    remaining_hops: tuple
    remaining_delays: tuple
    batch: tuple


@dataclass(frozen=True)
class LedgerSyncMsg:
    records: tuple


@dataclass(frozen=True)
class CompProposalMsg:
    comp: CompensationRecord


@dataclass(frozen=True)
class CompVoteMsg:
    comp: CompensationRecord
    kind: str  # acceptance | rejection
    voter: AccountId
    signature: object
    reason: str = ""


@dataclass(frozen=True)
class BridgeProofMsg:
    proof: BridgeServiceProof


@dataclass
class ProposalState:
    record: TransactionRecord
    witnesses: frozenset
    first_seen_local: float
    reports: list = field(default_factory=list)
    decided: bool = False
    outcome: str = PENDING
    tally_scheduled: bool = False


@dataclass
class CompState:
    comp: CompensationRecord
    first_seen_local: float
    votes: dict = field(default_factory=dict)  # voter -> (kind, msg)
    decided: bool = False
    outcome: str = PENDING


@dataclass
class SharedConfig:
    """Read-only scenario wiring every party holds (directory knowledge the
    real network would learn from availability and discovery gossip)."""

    party_ids: list
    witness_accounts: list  # account ids of witness-capable parties
    account_to_party: dict  # primary account -> party id
    firewalled_map: dict  # party id -> bridge party ids it tethers to
    consensus: ConsensusParams
    incentives: IncentiveParams
    privacy: PrivacyParams
    liveness: bool = False


def _comp_vote_bytes(comp_id: bytes, kind: str) -> bytes:
    return b"comp-vote:" + comp_id + kind.encode("ascii")


class Party(NodeProcess):
    def __init__(
        self,
        party_id: str,
        keypair: KeyPair,
        ledger: Ledger,
        shared: SharedConfig,
        streams: RngStreams,
        region: str = "r0",
        is_witness: bool = True,
        behavior: str | None = None,
        clock_skew: float = 0.0,
        monitor_connectivity: bool = False,
        min_regions: int = 1,
        bridges=(),
        firewalled: bool = False,
    ):
        super().__init__(
            party_id,
            region=region,
            monitor_connectivity=monitor_connectivity,
            min_regions=min_regions,
            bridges=bridges,
            firewalled=firewalled,
        )
        if behavior is not None and behavior not in CORRUPT_MODES:
            raise ValueError(f"unknown corrupt behavior {behavior!r}")
        self.keypair = keypair
        self.ledger = ledger
        self.shared = shared
        self.streams = streams
        self.is_witness = is_witness
        self.behavior = behavior
        self.clock_skew = clock_skew
        self.wallet: dict[AccountId, KeyPair] = {keypair.account: keypair}
        self._account_counter = 0
        self.statuses: dict[AccountId, NodeStatus] = {}
        self.pending: dict[bytes, ProposalState] = {}
        self.endorsed: dict[tuple, TransactionRecord] = {}
        self.accepted_at: dict[AccountId, float] = {}  # receiver account -> local accept time
        self.day_log = WitnessDayLog()
        self.comp_pending: dict[bytes, CompState] = {}
        self.collected_proofs: dict[int, dict] = {}  # bridge side: day -> {client account: proof}
        self._bridge_issued_days: set[int] = set()
        self._processed_offenses: set = set()
        self.deferred_appends: list[TransactionRecord] = []
        self.decisions: list[tuple] = []  # (sim_time, tx_id, outcome, acc, rej)
        self.outcomes: dict[bytes, str] = {}
        self.comp_outcomes: dict[bytes, str] = {}
        self.relay_observations: list = []
        self.deferred_proposals = 0

    # -- clocks and wallets --------------------------------------------------------------

    def local_now(self, net: Network) -> float:
        return net.now + self.clock_skew

    def blacklisted(self) -> set:
        return {a for a, s in self.statuses.items() if s.blacklisted}

    def new_receiving_account(self) -> KeyPair:
        """Fresh account id per credit, the spawn rule's wallet side."""
        self._account_counter += 1
        seed = substream_seed(self.streams.master_seed, f"wallet:{self.id}:{self._account_counter}")
        kp = generate_keypair(seed)
        self.wallet[kp.account] = kp
        return kp

    def build_transfer(self, sender_account: AccountId, receiver_kp: KeyPair, amount: int) -> TransactionRecord:
        sender_kp = self.wallet[sender_account]
        chain = self.ledger.chains.get(sender_account)
        seq = chain.next_seq if chain else 1
        prev = chain.head_hash if chain else b"\x00" * 32
        return make_transfer(sender_kp, receiver_kp, amount, seq, prev)

    # -- transaction initiation ------------------------------------------------------------

    def initiate_broadcast(self, net: Network, record: TransactionRecord, use_stem: bool = False) -> None:
        """Receiver-side broadcast of a dual-signed record to a fresh witness set."""
        witnesses = self.choose_witnesses(net, record)
        self._note_proposal(net, record, witnesses)
        if use_stem and self.shared.privacy.stem_length > 0:
            self._stem_broadcast(net, record, witnesses)
        else:
            self._fluff(net, record, witnesses, fluff_src=self.id)

    def choose_witnesses(self, net: Network, record: TransactionRecord) -> frozenset:
        available = [w for w in self.shared.witness_accounts if w not in self.blacklisted()]
        if self.shared.liveness:
            reachable_parties = set(self.reachable_peers(net)) | {self.id}
            available = [
                w for w in available if self.shared.account_to_party[w] in reachable_parties
            ]
        rng = self.streams.fresh("witness-select", record.tx_id.hex())
        return select_witnesses(available, self.shared.consensus.community_k, rng)

    def _stem_broadcast(self, net: Network, record, witnesses) -> None:
        rng = self.streams.fresh("stem", record.tx_id.hex())
        route = plan_stem_route(
            origin=self.id,
            candidates=[p for p in self.shared.party_ids if p != self.id],
            tx_id=record.tx_id,
            pending_pool=[t for t in self.pending if not self.pending[t].decided],
            params=self.shared.privacy,
            rng=rng,
        )
        if not route.hops:
            self._fluff(net, record, witnesses, fluff_src=self.id)
            return
        self.relay_observations.append(("stem", record.tx_id, self.id, route.hops[0], net.now))
        msg = StemRelayMsg(
            record=record,
            witnesses=witnesses,
            remaining_hops=route.hops[1:],
            remaining_delays=route.delays[1:],
            batch=route.batch,
        )
        self._send_routed(net, route.hops[0], msg, extra_delay=route.delays[0])

    def _fluff(self, net: Network, record, witnesses, fluff_src: str) -> None:
        self.relay_observations.append(("fluff", record.tx_id, fluff_src, None, net.now))
        proposal = ProposalMsg(record=record, witnesses=witnesses)
        for account in sorted(witnesses, key=lambda a: a.digest):
            target = self.shared.account_to_party[account]
            if target == self.id:
                self.receive_proposal(net, proposal)
            else:
                self._send_routed(net, target, proposal)

    def _send_routed(self, net: Network, target: str, payload, extra_delay: float = 0.0) -> None:
        """Route around stateful firewalls: pushes to tethered nodes go via
        their bridge on the connection the node keeps open."""
        bridge_ids = self.shared.firewalled_map.get(target)
        if bridge_ids and target != self.id and self.id not in bridge_ids:
            payload = BridgeRelay(target=target, inner=payload)
            target = bridge_ids[0]
        if extra_delay > 0.0:
            # model the stem hop delay as processing time before the send
            net.schedule(extra_delay, self.id, Timer("delayed-send", (target, payload)))
        else:
            net.send(self.id, target, payload)

    def broadcast(self, net: Network, payload) -> None:
        for target in self.shared.party_ids:
            if target != self.id:
                self._send_routed(net, target, payload)

    # -- proposal handling ---------------------------------------------------------------------

    def _note_proposal(self, net: Network, record, witnesses) -> ProposalState:
        state = self.pending.get(record.tx_id)
        if state is None:
            state = ProposalState(
                record=record,
                witnesses=witnesses,
                first_seen_local=self.local_now(net),
            )
            self.pending[record.tx_id] = state
        if not state.tally_scheduled:
            state.tally_scheduled = True
            net.schedule(
                self.shared.consensus.waiting_period + 1e-6, self.id, Timer("tally", record.tx_id)
            )
        return state

    def receive_proposal(self, net: Network, msg: ProposalMsg) -> None:
        record = msg.record
        self._note_proposal(net, record, msg.witnesses)
        if not self.is_witness or self.keypair.account not in msg.witnesses:
            return
        if self.delays_transactions():
            self.deferred_proposals += 1
            net._log(f"witness-defer node={self.id} tx={record.tx_id.hex()[:12]}")
            return
        status = self.statuses.get(record.sender)
        if status is not None and status.sender_flagged:
            net._log(f"witness-refuse-flagged node={self.id} tx={record.tx_id.hex()[:12]}")
            return

        report = self._make_witness_report(net, record)
        if report is None:
            return
        if report.kind == ACCEPTANCE:
            self.endorsed[(record.sender, record.sender_seq)] = record
        self.deliver_report(net, report)
        self.broadcast(net, ReportMsg(report=report))

    def _make_witness_report(self, net: Network, record) -> WitnessReport | None:
        if self.behavior == FALSE_ACCEPT:
            # corrupt: vouch for anything, with bogus supporting evidence
            return make_report(self.keypair, record, None, supporting=())
        if self.behavior == FALSE_REJECT:
            fake = replace(
                record,
                receiver_sig=sign(self.keypair.secret_key, b"fabricated"),
                sender_sig=sign(self.keypair.secret_key, b"fabricated"),
            )
            fabricated = InvalidityEvidence(kind="double_spend", conflicting_record=fake)
            return make_report(self.keypair, record, fabricated)
        return witness_validate(
            self.keypair,
            self.ledger,
            record,
            pending=self.endorsed,
            spend_gate=lambda rec: self._spend_gate(net, rec),
        )

    def _spend_gate(self, net: Network, record) -> tuple:
        """Enforce the recipient spend delay: funds credited by a tallied
        transfer stay locked until the delay elapses on this node's clock."""
        credit = self.ledger.spawn_credit(record.sender)
        if credit is None or credit.kind == KIND_GENESIS:
            return True, credit
        accepted = self.accepted_at.get(record.sender)
        if accepted is None:
            return True, credit  # learned via sync; timing unknown, let it pass
        ok = recipient_spend_gate(accepted, self.local_now(net), self.shared.consensus)
        return ok, credit

    # -- report handling -------------------------------------------------------------------------

    def deliver_report(self, net: Network, report: WitnessReport) -> None:
        state = self.pending.get(report.tx_id)
        if state is None:
            state = self._note_proposal(net, report.proposed, frozenset())
        state.reports.append(report)
        if not state.decided:
            self._run_tally(net, report.tx_id)

    def _run_tally(self, net: Network, tx_id: bytes) -> None:
        state = self.pending.get(tx_id)
        if state is None or state.decided:
            return
        params = self.shared.consensus
        min_acc = params.resolve_min_acceptances(max(1, len(state.witnesses)))
        announced = state.witnesses or frozenset(r.witness for r in state.reports)
        reports = [r for r in state.reports if r.witness in announced]
        result = tally(
            tx_id,
            reports,
            params,
            self.ledger,
            proposed_at=state.first_seen_local,
            now=self.local_now(net),
            min_acceptances=min_acc,
        )
        for witness in result.falsified_witnesses:
            falsified_report = next(r for r in reports if r.witness == witness)
            self._penalize(
                net, witness, OFFENSE_WITNESS_FALSIFICATION, evidence=falsified_report
            )
        if result.outcome == PENDING:
            return

        state.decided = True
        state.outcome = result.outcome
        self.outcomes[tx_id] = result.outcome
        self.decisions.append(
            (net.now, tx_id, result.outcome, result.valid_acceptances, result.valid_rejections)
        )
        net._log(
            f"decision node={self.id} tx={tx_id.hex()[:12]} outcome={result.outcome} "
            f"acc={result.valid_acceptances} rej={result.valid_rejections}"
        )
        if result.outcome == ACCEPTED:
            self._finalize_accept(net, state.record)
        else:
            self.endorsed.pop((state.record.sender, state.record.sender_seq), None)
            ev = result.rejection_evidence
            if ev is not None and ev.kind in SENDER_FRAUD_KINDS:
                self._penalize(net, state.record.sender, OFFENSE_SENDER_FRAUD, evidence=ev)

    def _finalize_accept(self, net: Network, record: TransactionRecord) -> None:
        if self.ledger.validate_record(record) is None:
            self.ledger.append_transaction(record)
        else:
            self.deferred_appends.append(record)  # replica lags; retried on sync
        self.accepted_at[record.receiver] = self.local_now(net)
        self.endorsed.pop((record.sender, record.sender_seq), None)
        if self.is_witness and self.keypair.account in self.pending[record.tx_id].witnesses:
            if self._endorsed_by_self(record):
                day = self.shared.incentives.day_of(self.local_now(net))
                self.day_log.add(record, day)

    def _endorsed_by_self(self, record) -> bool:
        state = self.pending.get(record.tx_id)
        if state is None:
            return False
        return any(
            r.witness == self.keypair.account and r.kind == ACCEPTANCE for r in state.reports
        )

    def _penalize(self, net: Network, offender: AccountId, offense: str, evidence) -> None:
        key = (offender, offense)
        if key in self._processed_offenses:
            return
        self._processed_offenses.add(key)
        from .consensus import apply_penalty  # local import avoids a cycle at module load

        slashed = apply_penalty(
            self.ledger,
            self.statuses,
            offender,
            offense,
            self.shared.consensus,
            evidence=evidence,
            stake=self.shared.incentives.witness_stake,
        )
        net._log(
            f"penalty node={self.id} offender={offender.short()} offense={offense} slashed={slashed}"
        )

    # -- ledger sync after partitions --------------------------------------------------------------

    def sync_broadcast(self, net: Network) -> None:
        records = tuple(r for r in self.ledger.applied_order if r.kind == KIND_TRANSFER)
        self.broadcast(net, LedgerSyncMsg(records=records))

    def receive_sync(self, net: Network, msg: LedgerSyncMsg) -> None:
        for record in msg.records:
            conflict = self.ledger.extract_double_spend_evidence(record)
            if conflict is not None:
                net._log(
                    f"conflict-at-heal node={self.id} sender={record.sender.short()} "
                    f"seq={record.sender_seq}"
                )
                self._penalize(
                    net, record.sender, OFFENSE_POST_PARTITION_DOUBLE_SPEND, evidence=conflict
                )
                continue
            if record.tx_id not in self.ledger.tx_index:
                if self.ledger.validate_record(record) is None:
                    self.ledger.append_transaction(record)
                    self.outcomes.setdefault(record.tx_id, ACCEPTED)
        self._retry_deferred(net)

    def _retry_deferred(self, net: Network) -> None:
        still = []
        for record in self.deferred_appends:
            if self.ledger.validate_record(record) is None:
                self.ledger.append_transaction(record)
            else:
                still.append(record)
        self.deferred_appends = still

    # -- compensation -----------------------------------------------------------------------------

    def day_end(self, net: Network, day: int) -> None:
        if self.firewalled and self.tethered_to:
            for bridge in sorted(self.tethered_to):
                bridge_account = self._party_account(bridge)
                proof = make_bridge_proof(self.keypair, bridge_account, day)
                net.send(self.id, bridge, BridgeProofMsg(proof=proof))
        if not self.is_witness:
            return
        if self.behavior == COMPENSATION_FRAUD:
            comp = self._fraudulent_compensation(day)
        else:
            comp = issue_compensation(self.keypair, self.day_log, day, self.shared.incentives)
        if comp is not None:
            net._log(f"comp-issue node={self.id} day={day} attached={len(comp.attached)}")
            self._note_comp(net, comp)
            self.broadcast(net, CompProposalMsg(comp=comp))

    def _fraudulent_compensation(self, day: int) -> CompensationRecord:
        """Claim a full day of service backed by self-manufactured records."""
        from .incentives import WitnessedRecord

        fakes = []
        rng = self.streams.fresh("comp-fraud", self.id, day)
        for i in range(self.shared.incentives.min_transactors):
            a = generate_keypair(rng.getrandbits(63))
            b = generate_keypair(rng.getrandbits(63))
            rec = TransactionRecord(
                kind=KIND_TRANSFER,
                sender=a.account,
                receiver=b.account,
                amount=1000,
                sender_seq=1,
                prev_sender_hash=b"\x00" * 32,
                sender_sig=sign(a.secret_key, b"not the record"),
                receiver_sig=sign(b.secret_key, b"not the record"),
            )
            fakes.append(
                WitnessedRecord(
                    record=rec, witness_sig=sign(self.keypair.secret_key, rec.canonical_bytes())
                )
            )
        unsigned = CompensationRecord(
            witness=self.keypair.account,
            day_index=day,
            amount=self.shared.incentives.daily_compensation,
            service="witness",
            attached=tuple(fakes),
        )
        return replace(
            unsigned, witness_sig=sign(self.keypair.secret_key, unsigned.canonical_bytes())
        )

    def bridge_day_end(self, net: Network, day: int) -> None:
        proofs = self.collected_proofs.get(day, {})
        if day in self._bridge_issued_days or len(proofs) < self.shared.incentives.bridge_min_clients:
            return
        self._bridge_issued_days.add(day)
        unsigned = CompensationRecord(
            witness=self.keypair.account,
            day_index=day,
            amount=self.shared.incentives.bridge_daily_compensation,
            service=COMP_BRIDGE,
            attached=tuple(proofs[c] for c in sorted(proofs, key=lambda a: a.digest)),
        )
        comp = replace(
            unsigned, witness_sig=sign(self.keypair.secret_key, unsigned.canonical_bytes())
        )
        net._log(f"bridge-comp-issue node={self.id} day={day} clients={len(proofs)}")
        self._note_comp(net, comp)
        self.broadcast(net, CompProposalMsg(comp=comp))

    def _note_comp(self, net: Network, comp: CompensationRecord) -> CompState:
        state = self.comp_pending.get(comp.comp_id)
        if state is None:
            state = CompState(comp=comp, first_seen_local=self.local_now(net))
            self.comp_pending[comp.comp_id] = state
            net.schedule(
                self.shared.consensus.waiting_period + 1e-6,
                self.id,
                Timer("comp-tally", comp.comp_id),
            )
        return state

    def receive_comp_proposal(self, net: Network, msg: CompProposalMsg) -> None:
        comp = msg.comp
        self._note_comp(net, comp)
        if not self.is_witness or comp.witness == self.keypair.account:
            return
        ok, reason = validate_compensation(
            comp, self.ledger, self.shared.incentives, blacklist=self.blacklisted()
        )
        if self.behavior == FALSE_ACCEPT:
            ok, reason = True, "corrupt"
        kind = ACCEPTANCE if ok else REJECTION
        vote = CompVoteMsg(
            comp=comp,
            kind=kind,
            voter=self.keypair.account,
            signature=sign(self.keypair.secret_key, _comp_vote_bytes(comp.comp_id, kind)),
            reason=reason,
        )
        self.deliver_comp_vote(net, vote)
        self.broadcast(net, vote)

    def deliver_comp_vote(self, net: Network, vote: CompVoteMsg) -> None:
        state = self._note_comp(net, vote.comp)
        state.votes[vote.voter] = vote
        if not state.decided:
            self._run_comp_tally(net, vote.comp.comp_id)

    def _run_comp_tally(self, net: Network, comp_id: bytes) -> None:
        state = self.comp_pending.get(comp_id)
        if state is None or state.decided:
            return
        comp = state.comp
        from .crypto import signature_valid

        valid_accepts = 0
        valid_rejects = 0
        eligible_voters = [
            w for w in self.shared.witness_accounts if w != comp.witness and w not in self.blacklisted()
        ]
        for voter in sorted(state.votes, key=lambda a: a.digest):
            vote = state.votes[voter]
            if voter not in eligible_voters:
                continue
            if not signature_valid(_comp_vote_bytes(comp_id, vote.kind), vote.signature):
                continue
            if vote.kind == REJECTION:
                # a rejection is only valid if re-validation really fails
                ok, _ = validate_compensation(
                    comp, self.ledger, self.shared.incentives, blacklist=self.blacklisted()
                )
                if not ok:
                    valid_rejects += 1
                else:
                    self._penalize(net, voter, OFFENSE_WITNESS_FALSIFICATION, evidence=vote)
            else:
                valid_accepts += 1

        params = self.shared.consensus
        min_acc = params.resolve_min_acceptances(max(1, len(eligible_voters)))
        now_local = self.local_now(net)
        if valid_rejects > 0:
            state.decided = True
            state.outcome = REJECTED
            self.comp_outcomes[comp_id] = REJECTED
            self._penalize(net, comp.witness, OFFENSE_WITNESS_FALSIFICATION, evidence=comp)
            net._log(f"comp-decision node={self.id} issuer={comp.witness.short()} outcome=rejected")
        elif now_local - state.first_seen_local >= params.waiting_period and valid_accepts >= min_acc:
            state.decided = True
            state.outcome = ACCEPTED
            self.comp_outcomes[comp_id] = ACCEPTED
            self.ledger.apply_compensation(comp.witness, comp.amount, comp.day_index)
            net._log(f"comp-decision node={self.id} issuer={comp.witness.short()} outcome=accepted")

    def _party_account(self, party_id: str) -> AccountId:
        for account, pid in self.shared.account_to_party.items():
            if pid == party_id:
                return account
        raise KeyError(party_id)

    def current_day(self, net: Network) -> int:
        return self.shared.incentives.day_of(self.local_now(net))

    # -- dispatch ------------------------------------------------------------------------------------

    def handle_app(self, net: Network, src, payload) -> None:
        if isinstance(payload, HandoffMsg):
            # receiver initiates broadcast of the dual-signed record
            self.initiate_broadcast(net, payload.record)
        elif isinstance(payload, ProposalMsg):
            self.receive_proposal(net, payload)
        elif isinstance(payload, ReportMsg):
            self.deliver_report(net, payload.report)
        elif isinstance(payload, StemRelayMsg):
            self._relay_stem(net, payload)
        elif isinstance(payload, LedgerSyncMsg):
            self.receive_sync(net, payload)
        elif isinstance(payload, CompProposalMsg):
            self.receive_comp_proposal(net, payload)
        elif isinstance(payload, CompVoteMsg):
            self.deliver_comp_vote(net, payload)
        elif isinstance(payload, BridgeProofMsg):
            day = payload.proof.day_index
            self.collected_proofs.setdefault(day, {})[payload.proof.client] = payload.proof
            net.schedule(0.5, self.id, Timer("bridge-comp", day))
        else:
            raise TypeError(f"unhandled payload {type(payload).__name__}")

    def _relay_stem(self, net: Network, msg: StemRelayMsg) -> None:
        if msg.remaining_hops:
            nxt = msg.remaining_hops[0]
            self.relay_observations.append(("stem", msg.record.tx_id, self.id, nxt, net.now))
            self._send_routed(
                net,
                nxt,
                StemRelayMsg(
                    record=msg.record,
                    witnesses=msg.witnesses,
                    remaining_hops=msg.remaining_hops[1:],
                    remaining_delays=msg.remaining_delays[1:],
                    batch=msg.batch,
                ),
                extra_delay=msg.remaining_delays[0] if msg.remaining_delays else 0.0,
            )
        else:
            self._note_proposal(net, msg.record, msg.witnesses)
            self._fluff(net, msg.record, msg.witnesses, fluff_src=self.id)

    def handle_app_timer(self, net: Network, timer: Timer) -> None:
        if timer.name == "tally":
            self._run_tally(net, timer.data)
        elif timer.name == "comp-tally":
            self._run_comp_tally(net, timer.data)
        elif timer.name == "delayed-send":
            target, payload = timer.data
            net.send(self.id, target, payload)
        elif timer.name == "transfer":
            self._workload_transfer(net, timer.data)
        elif timer.name == "handoff":
            record, use_stem = timer.data
            self.initiate_broadcast(net, record, use_stem=use_stem)
        elif timer.name == "day-end":
            self.day_end(net, timer.data)
        elif timer.name == "bridge-comp":
            self.bridge_day_end(net, timer.data)
        elif timer.name == "sync":
            self.sync_broadcast(net)
        else:
            raise ValueError(f"unhandled timer {timer.name!r}")

    def _workload_transfer(self, net: Network, data) -> None:
        """Sender side of a scheduled transfer: mint the receiver's fresh
        account out of band, dual-sign, and hand off for broadcast."""
        receiver_party_id, amount, use_stem = data
        receiver_party = net.handlers[receiver_party_id]
        receiver_kp = receiver_party.new_receiving_account()
        record = self.build_transfer(self.keypair.account, receiver_kp, amount)
        if receiver_party_id == self.id:
            raise ValueError("workload transfer needs two distinct parties")
        net.send(self.id, receiver_party_id, HandoffMsg(record=record))
