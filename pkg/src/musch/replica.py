"""Per-node protocol state machine.

A :class:`Replica` consumes one input at a time (a delivered message or a
timer firing) and appends its reactions to an outbox that the driver drains:
:class:`Send`, :class:`SetTimer`, :class:`CancelTimer` and :class:`Note`
(observable events such as commits, used by monitors).  The same object
plays primary, regular replica and window node depending on its id and the
current view.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .crypto import ZERO_DIGEST, CryptoError, SignatureScheme, Signer
from .types import (
    Ack, Block, Catchup, ClientRequest, Commit, Complain, ComplainSet, Confirm, Forward,
    Message, NewView, Order, Proof, ProofKind, ProtocolConfig, Reply, Response, Transaction,
    ViewChange, ViewConfirm, next_primary, quorum, weak_quorum,
)
from .windows import escalation_deadline, fallback_deadline, max_window_index, window_members, window_of


@dataclass(frozen=True)
class Send:
    dst: object
    msg: Message
    during_vc: bool = False  # sender was mid view change; accounted to the view bucket


@dataclass(frozen=True)
class SetTimer:
    name: str
    at: int


@dataclass(frozen=True)
class CancelTimer:
    name: str


@dataclass(frozen=True)
class Note:
    kind: str
    detail: tuple = ()


class Phase(enum.Enum):
    NORMAL = "normal"
    RECOVERING = "recovering"
    VIEW_CHANGING = "view_changing"


@dataclass
class Recovery:
    base: int  # epoch start the escalation schedule is measured from
    window: int
    complaint: Complain
    target: int  # highest seq known to exist (l')
    broadcast: bool = False


@dataclass
class ViewChangeProgress:
    stage: str = "await_q"  # await_q -> await_catchup -> await_v
    target: int = -1  # s'
    carry: Optional[Order] = None  # block mandated at s' + 1
    q_members: dict = field(default_factory=dict)  # replica -> reported latest seq
    confirmed: bool = False
    # new-primary side
    collected: dict = field(default_factory=dict)  # replica -> ViewChange
    q_sent: bool = False
    served: bool = False
    confirms: dict = field(default_factory=dict)
    v_sent: bool = False


class Replica:
    def __init__(self, rid: int, cfg: ProtocolConfig, scheme: SignatureScheme, signer: Signer):
        self.id = rid
        self.cfg = cfg
        self.scheme = scheme
        self.signer = signer
        self.view = cfg.initial_view
        self.phase = Phase.NORMAL
        self.now = 0
        self.out: list = []

        # committed chain
        self.chain: dict[int, tuple[Order, Commit]] = {}
        self.last_committed = 0
        self.last_digest = ZERO_DIGEST
        self.last_history = ZERO_DIGEST
        self.low_watermark = 0
        self.stable_checkpoints: dict[int, object] = {}
        self.committed_keys: set = set()

        # normal epoch
        self.epoch_start = 0
        self.pending: Optional[Order] = None
        self.reendorsed: Optional[tuple[int, int]] = None
        self.orders_seen: dict[tuple[int, int], Order] = {}
        self.future_orders: dict[int, Order] = {}

        # recovery and window duties
        self.recovery: Optional[Recovery] = None
        self.complaints: dict[int, Complain] = {}  # S: newest complaint per complainer, view >= self.view
        self.responded: set = set()
        self.waiting: dict[int, int] = {}  # complainer -> its last committed seq

        self.vc = ViewChangeProgress()
        self.evidence = None  # ComplainSet, NewView or ViewConfirm justifying self.view
        self.new_view_seen: set[int] = set()
        self.suspects: set[int] = set()

        # primary duties and client traffic
        self.mempool: dict[tuple, Transaction] = {}
        self.forwarders: dict[tuple, set] = {}
        self.backlog: list[tuple] = []
        self.inflight: set = set()
        self.proposal: Optional[Order] = None
        self.collecting: dict[int, dict[int, Response]] = {}
        self.forwarded_to: dict[tuple, int] = {}
        self.carry: Optional[Order] = None

    # ------------------------------------------------------------------ basics
    @property
    def f_prime(self) -> int:
        return self.cfg.f_prime

    @property
    def high_watermark(self) -> int:
        return self.low_watermark + self.cfg.watermark_span_k

    @property
    def primary(self) -> int:
        return next_primary(self.view, self.cfg)

    @property
    def is_primary(self) -> bool:
        return self.primary == self.id

    @property
    def window(self) -> Optional[int]:
        return window_of(self.id, self.cfg)

    def drain(self) -> list:
        out, self.out = self.out, []
        return out

    def _sign(self, msg):
        return msg.signed(self.signer.sign(msg.signing_digest, self.id))

    def _send(self, dst, msg) -> None:
        self.out.append(Send(dst, msg, self.phase is Phase.VIEW_CHANGING))

    def _broadcast(self, msg) -> None:
        for r in self.cfg.replica_ids:
            if r != self.id:
                self._send(r, msg)

    def _timer(self, name: str, at: int) -> None:
        self.out.append(SetTimer(name, at))

    def _cancel(self, name: str) -> None:
        self.out.append(CancelTimer(name))

    def _note(self, kind: str, *detail) -> None:
        self.out.append(Note(kind, detail))

    def _valid_sig(self, msg) -> bool:
        if msg.sig is None:
            return False
        try:
            return self.scheme.verify(msg.sig, msg.signing_digest, msg.signer)
        except CryptoError:
            return False

    def _valid_order(self, o: Order) -> bool:
        return (o.primary == next_primary(o.view, self.cfg) and self._valid_sig(o)
                and o.block.digest_valid())

    def _commit_verifies(self, c: Commit) -> bool:
        agg = c.aggregate
        if any(s not in self.cfg.replica_ids for s in agg.signers):
            return False
        return self.scheme.verify_aggregate(agg, c.response_digests(), agg.signers)

    def _valid_commit(self, c: Commit, order: Optional[Order] = None) -> bool:
        if c.primary != next_primary(c.view, self.cfg) or not self._valid_sig(c):
            return False
        if len(c.aggregate) < quorum(self.cfg) or not self._commit_verifies(c):
            return False
        if order is not None:
            b = order.block
            if (b.seq, b.view, b.digest) != (c.seq, c.view, c.digest):
                return False
        return True

    def _valid_pair(self, pair) -> bool:
        try:
            o, c = pair
        except (TypeError, ValueError):
            return False
        return isinstance(o, Order) and isinstance(c, Commit) and self._valid_order(o) \
            and self._valid_commit(c, o)

    def checkpoint_of(self, seq: int) -> int:
        return seq if seq % self.cfg.checkpoint_interval == 0 else 0

    # ------------------------------------------------------------------ entry points
    def start(self, now: int = 0) -> None:
        self.now = now
        self._start_epoch()

    def receive(self, src, msg, now: int) -> bool:
        """Handle one delivered message; returns whether it was effective."""
        self.now = now
        handler = getattr(self, "_on_" + type(msg).__name__.lower(), None)
        if handler is None or not self._valid_sig(msg):
            return False
        return bool(handler(src, msg))

    def on_timer(self, name: str, now: int) -> None:
        self.now = now
        if name == "epoch":
            self._on_epoch_timeout()
        elif name == "escalate":
            self._on_escalate()
        elif name == "vc":
            self._on_vc_timeout()

    # ------------------------------------------------------------------ normal operation
    def _start_epoch(self) -> None:
        self.epoch_start = self.now
        self.pending = None
        self._cancel("escalate")
        if self.is_primary:
            self._cancel("epoch")
            self._propose()
        else:
            self._timer("epoch", self.now + self.cfg.epoch_timeout)
            nxt = self.future_orders.pop(self.last_committed + 1, None)
            if nxt is not None:
                self._on_order(nxt.primary, nxt)

    def _next_batch(self) -> tuple:
        seq = self.last_committed + 1
        if self.carry is not None and self.carry.seq == seq:
            return self.carry.block.txns
        picked, keys = [], set()
        for key in self.backlog + list(self.mempool):
            if key in keys or key in self.committed_keys or key in self.inflight:
                continue
            txn = self.mempool.get(key)
            if txn is not None:
                picked.append(txn)
                keys.add(key)
        return tuple(picked)

    def _propose(self) -> None:
        if self.phase is not Phase.NORMAL or not self.is_primary:
            return
        seq = self.last_committed + 1
        if self.proposal is not None and self.proposal.view == self.view:
            return
        if seq > self.high_watermark:
            return
        if self.carry is not None and self.carry.seq == self.last_committed:
            # this primary already committed the mandated block; re-certify it in the new view
            seq = self.last_committed
            old = self.chain[seq][0].block
            block = Block(seq, self.view, old.digest, old.history_hash, old.txns)
        else:
            block = Block.build(seq, self.view, self._next_batch(), self.last_history)
        order = self._sign(Order(block, self.id))
        self.proposal = order
        self.orders_seen[(seq, self.view)] = order
        self.inflight.update(t.key for t in block.txns)
        self._broadcast(order)
        own = self._sign(Response(seq, self.view, block.digest, self.id, self.checkpoint_of(seq)))
        self.collecting[seq] = {self.id: own}
        self._maybe_commit_as_primary(seq)

    def _on_order(self, src, o: Order) -> bool:
        if not self._valid_sig(o) or o.primary != next_primary(o.view, self.cfg):
            return False
        if o.view != self.view or self.phase is Phase.VIEW_CHANGING or self.is_primary:
            return False
        b = o.block
        key = (b.seq, b.view)
        seen = self.orders_seen.get(key)
        if seen is not None and seen.block.digest != b.digest:
            self._raise_proof(Proof(ProofKind.CONFLICTING_ORDERS, (seen, o)))
            return True
        self.orders_seen.setdefault(key, o)
        if not b.digest_valid():
            self._raise_proof(Proof(ProofKind.INVALID_BLOCK, (o,)))
            return True
        if b.seq > self.high_watermark:
            return False
        if b.seq > self.last_committed and any(t.key in self.committed_keys for t in b.txns):
            return False  # replays an already committed transaction
        if b.seq <= self.last_committed:
            return self._reendorse(o)
        if b.seq > self.last_committed + 1:
            self.future_orders[b.seq] = o
            if self.phase is Phase.NORMAL:
                self._enter_recovery(self.epoch_start, target=b.seq - 1)
            elif self.recovery is not None:
                self.recovery.target = max(self.recovery.target, b.seq - 1)
            return True
        if not b.follows(self.last_history):
            if self.last_committed == 0:
                self._raise_proof(Proof(ProofKind.INVALID_BLOCK, (o,)))
            else:
                prev_o, prev_c = self.chain[self.last_committed]
                self._raise_proof(Proof(ProofKind.INVALID_BLOCK, (o, prev_o), prev_c))
            return True
        if self.carry is not None and self.carry.seq == b.seq and self.carry.block.digest != b.digest:
            self._note("carry_mismatch", b.seq, b.view)
            return False
        if self.pending is not None and self.pending.seq == b.seq and self.pending.view == b.view:
            return False
        self.pending = o
        self._send(o.primary, self._sign(
            Response(b.seq, b.view, b.digest, self.id, self.checkpoint_of(b.seq))))
        if self.phase is Phase.RECOVERING:
            self._leave_recovery()
            self.epoch_start = self.now
            self._timer("epoch", self.now + self.cfg.epoch_timeout)
        return True

    def _reendorse(self, o: Order) -> bool:
        """A new primary re-proposing the block this replica already committed last."""
        b = o.block
        if b.seq != self.last_committed or self.reendorsed == (b.seq, b.view):
            return False
        mine = self.chain[b.seq][0].block
        if mine.digest != b.digest or mine.history_hash != b.history_hash or b.view <= mine.view:
            return False
        self.reendorsed = (b.seq, b.view)
        self._send(o.primary, self._sign(
            Response(b.seq, b.view, b.digest, self.id, self.checkpoint_of(b.seq))))
        return True

    def _on_response(self, src, r: Response) -> bool:
        if not self.is_primary or r.view != self.view or self.phase is not Phase.NORMAL:
            return False
        p = self.proposal
        if p is None or p.seq != r.seq or p.view != r.view or p.block.digest != r.digest:
            return False
        if r.checkpoint != self.checkpoint_of(r.seq):
            return False
        got = self.collecting.setdefault(r.seq, {})
        if r.replica in got:
            return False
        got[r.replica] = r
        return self._maybe_commit_as_primary(r.seq) or True

    def _maybe_commit_as_primary(self, seq: int) -> bool:
        got = self.collecting.get(seq, {})
        if len(got) != quorum(self.cfg):
            return False
        order = self.proposal
        agg = self.scheme.aggregate(resp.sig for resp in got.values())
        commit = self._sign(Commit(seq, self.view, order.block.digest, agg,
                                   self.checkpoint_of(seq), self.id))
        self._broadcast(commit)
        if seq == self.last_committed:
            self.carry = None  # re-certified block this node already held
        else:
            self._commit(order, commit)
            self._serve_waiting()
        self.proposal = None
        self.collecting.pop(seq, None)
        self._start_epoch()
        return True

    def _on_commit(self, src, c: Commit) -> bool:
        if c.view != self.view or self.is_primary or self.phase is Phase.VIEW_CHANGING:
            return False
        if c.primary != next_primary(c.view, self.cfg):
            return False
        if len(c.aggregate) < quorum(self.cfg) or not self._commit_verifies(c):
            self._raise_proof(Proof(ProofKind.UNDER_SIGNED_COMMIT, (), c))
            return True
        if c.seq <= self.last_committed:
            if self.reendorsed == (c.seq, c.view) and c.seq == self.last_committed:
                self.reendorsed = None
                self.carry = None
                self._start_epoch()
                return True
            return False
        p = self.pending
        if p is None or (p.seq, p.view, p.block.digest) != (c.seq, c.view, c.digest):
            # certified block we do not hold
            if self.phase is Phase.NORMAL:
                self._enter_recovery(self.epoch_start, target=c.seq)
            elif self.recovery is not None:
                self.recovery.target = max(self.recovery.target, c.seq)
            return True
        self._commit(p, c)
        self._serve_waiting()
        self._start_epoch()
        return True

    def _commit(self, order: Order, commit: Commit) -> None:
        b = order.block
        assert b.seq == self.last_committed + 1
        self.chain[b.seq] = (order, commit)
        self.last_committed = b.seq
        self.last_digest = b.digest
        self.last_history = b.history_hash
        keys = [t.key for t in b.txns]
        self.committed_keys.update(keys)
        for k in keys:
            self.mempool.pop(k, None)
            self.inflight.discard(k)
            self.forwarders.pop(k, None)
        if keys:
            self.backlog = [k for k in self.backlog if k not in self.committed_keys]
        if self.carry is not None and self.carry.seq <= b.seq:
            self.carry = None
        self._note("commit", b.seq, b.digest.hex(), b.history_hash.hex())
        for client in b.clients():
            stamps = tuple(t.timestamp for t in b.txns if t.client == client)
            self._send(client, self._sign(Reply(b.seq, b.view, client, b.digest, stamps, self.id)))
        if commit.checkpoint and commit.checkpoint == b.seq:
            self._stable_checkpoint(b.seq, commit)
        for key in [k for k in self.orders_seen if k[0] < self.low_watermark]:
            del self.orders_seen[key]

    def _stable_checkpoint(self, seq: int, commit: Commit) -> None:
        self.stable_checkpoints[seq] = commit.aggregate
        self.low_watermark = seq
        for s in [s for s in self.chain if s < seq]:
            del self.chain[s]
        self._note("checkpoint", seq, self.high_watermark)

    # ------------------------------------------------------------------ client traffic
    def _on_clientrequest(self, src, req: ClientRequest) -> bool:
        txn = req.txn
        if txn.key in self.committed_keys:
            self._send(txn.client, self._sign(Ack(txn.client, txn.timestamp, self.id)))
            return True
        if self.is_primary:
            if txn.key in self.mempool or txn.key in self.inflight:
                return False
            self.mempool[txn.key] = txn
            return True
        if self.forwarded_to.get(txn.key) == self.primary:
            return False
        self.mempool.setdefault(txn.key, txn)
        self.forwarded_to[txn.key] = self.primary
        self._send(self.primary, self._sign(Forward(txn, self.id)))
        return True

    def _on_forward(self, src, fw: Forward) -> bool:
        key = fw.txn.key
        if key in self.committed_keys:
            return False
        who = self.forwarders.setdefault(key, set())
        if fw.forwarder in who:
            return False
        who.add(fw.forwarder)
        self.mempool.setdefault(key, fw.txn)
        if len(who) >= quorum(self.cfg) and key not in self.backlog:
            self.backlog.append(key)
        return True

    def _reforward(self) -> None:
        if self.is_primary:
            return
        for key, txn in self.mempool.items():
            if key not in self.committed_keys and self.forwarded_to.get(key) != self.primary:
                self.forwarded_to[key] = self.primary
                self._send(self.primary, self._sign(Forward(txn, self.id)))

    # ------------------------------------------------------------------ recovery
    def _on_epoch_timeout(self) -> None:
        if self.phase is Phase.NORMAL and not self.is_primary:
            self._enter_recovery(self.epoch_start, target=self.last_committed)

    def _raise_proof(self, proof: Proof) -> None:
        if self.phase is Phase.VIEW_CHANGING:
            return
        self._note("proof", proof.kind.value)
        base = self.epoch_start if self.phase is Phase.NORMAL else self.recovery.base
        self._enter_recovery(base, target=self.last_committed, proof=proof)

    def _enter_recovery(self, base: int, target: int, proof: Optional[Proof] = None) -> None:
        rec = self.recovery
        if rec is not None:
            rec.target = max(rec.target, target)
            if proof is None or rec.complaint.proof is not None:
                return
        complaint = self._sign(Complain(self.last_committed, self.view, self.last_digest, self.id, proof))
        self._cancel("epoch")
        self.phase = Phase.RECOVERING
        if rec is None:
            self.recovery = rec = Recovery(base, 0, complaint, target)
        else:
            rec.complaint = complaint
            rec.window = max(rec.window - 1, 0)  # re-send the upgraded complaint to the current tier
        self._note("recovering", rec.base, self.last_committed, target)
        if self._absorb_complaint(complaint):
            return
        self._complain_step()

    def _complain_step(self) -> None:
        rec = self.recovery
        if self.last_committed > rec.complaint.last_committed_seq:
            # partial catch-up since the last tier: report where we actually are
            rec.complaint = self._sign(Complain(self.last_committed, self.view, self.last_digest, self.id,
                                                rec.complaint.proof))
        rec.window += 1
        j, k = rec.window, max_window_index(self.cfg)
        if rec.broadcast or j > k:
            rec.broadcast = True
            self._broadcast(rec.complaint)
            self._note("escalate", "all")
            nxt = rec.base + fallback_deadline(self.cfg)
            if nxt <= self.now:
                nxt = self.now + 2 * self.cfg.epoch_timeout
        else:
            members = window_members(j, self.cfg)
            if self.id in members:
                rec.broadcast = True
                self._broadcast(rec.complaint)
            else:
                for m in members:
                    self._send(m, rec.complaint)
            self._note("escalate", j)
            nxt = rec.base + escalation_deadline(j, self.cfg.T)
            if nxt <= self.now:
                nxt = self.now + self.cfg.epoch_timeout  # late entry: keep tiers spaced
        self._timer("escalate", nxt)

    def _on_escalate(self) -> None:
        if self.phase is Phase.RECOVERING and self.recovery is not None:
            self._complain_step()

    def _leave_recovery(self) -> None:
        self.phase = Phase.NORMAL
        self.recovery = None
        self.complaints.pop(self.id, None)
        self._cancel("escalate")
        self._note("recovered", self.last_committed)

    def _maybe_finish_recovery(self) -> None:
        rec = self.recovery
        if self.phase is Phase.RECOVERING and rec is not None and self.last_committed >= rec.target \
                and self.last_committed > rec.complaint.last_committed_seq:
            self._leave_recovery()
            self._start_epoch()

    # ------------------------------------------------------------------ window duties
    def _valid_complaint(self, c, view: int) -> bool:
        return isinstance(c, Complain) and c.view >= view and self._valid_sig(c)

    def _valid_proof(self, proof: Optional[Proof], view: int) -> bool:
        if not isinstance(proof, Proof):
            return False
        accused = next_primary(view, self.cfg)
        if proof.kind is ProofKind.CONFLICTING_ORDERS:
            if len(proof.orders) != 2:
                return False
            a, b = proof.orders
            return all(isinstance(o, Order) and o.view == view and o.primary == accused
                       and self._valid_sig(o) for o in (a, b)) \
                and a.seq == b.seq and a.block.digest != b.block.digest
        if proof.kind is ProofKind.UNDER_SIGNED_COMMIT:
            c = proof.commit
            if not isinstance(c, Commit) or c.view != view or c.primary != accused:
                return False
            if not self._valid_sig(c):
                return False
            return len(c.aggregate) < quorum(self.cfg) or not self._commit_verifies(c)
        if proof.kind is ProofKind.INVALID_BLOCK:
            if not proof.orders:
                return False
            o = proof.orders[0]
            if not (isinstance(o, Order) and o.view == view and o.primary == accused and self._valid_sig(o)):
                return False
            if not o.block.digest_valid():
                return True
            if len(proof.orders) == 1:
                return o.seq == 1 and not o.block.follows(ZERO_DIGEST)
            prev = proof.orders[1]
            return (isinstance(prev, Order) and prev.seq == o.seq - 1
                    and self._valid_pair((prev, proof.commit))
                    and not o.block.follows(prev.block.history_hash))
        return False

    def _valid_trigger(self, cs, view: int) -> bool:
        # complaints filed in later views still count against view cs.view
        if not isinstance(cs, ComplainSet) or cs.view < view or not self._valid_sig(cs):
            return False
        complainers = set()
        for c in cs.complaints:
            if not self._valid_complaint(c, cs.view) or c.complainer in complainers:
                return False
            if c.proof is not None and c.view == cs.view and self._valid_proof(c.proof, cs.view):
                return True
            complainers.add(c.complainer)
        return len(complainers) >= weak_quorum(self.cfg)

    def _absorb_complaint(self, c: Complain) -> bool:
        """Add ``c`` to S; start a view change when it completes a trigger."""
        if c.proof is not None and c.view == self.view and self._valid_proof(c.proof, self.view):
            complaints, view = (c,), self.view
        else:
            prev = self.complaints.get(c.complainer)
            if prev is None or c.view >= prev.view:
                self.complaints[c.complainer] = c
            live = sorted((x for x in self.complaints.values() if x.view >= self.view),
                          key=lambda x: (-x.view, x.complainer))[: weak_quorum(self.cfg)]
            if len(live) < weak_quorum(self.cfg):
                return False
            # the f'+1 newest complaints all indict view `view`, possibly ahead of ours
            view = live[-1].view
            complaints = tuple(sorted(live, key=lambda x: x.complainer))
        cs = self._sign(ComplainSet(view, complaints, self.id))
        if self.window is not None:
            self._broadcast(cs)
        self._start_view_change(cs, view=view + 1)
        return True

    def _entries_after(self, seq: int, upto: Optional[int] = None) -> Optional[tuple]:
        """Certified pairs seq+1..upto, or None when part of that range was pruned."""
        upto = self.last_committed if upto is None else upto
        if seq + 1 < self.low_watermark or any(s not in self.chain for s in range(seq + 1, upto + 1)):
            return None
        return tuple(self.chain[s] for s in range(seq + 1, upto + 1))

    def _on_complain(self, src, c: Complain) -> bool:
        if c.complainer == self.id:
            return False
        key = (c.complainer, c.view, self.last_committed)
        if key in self.responded:
            return False
        l = c.last_committed_seq
        if c.view < self.view:
            # a complainer stuck in an old view: show it why we moved on, plus any blocks it lacks
            entries = self._entries_after(l) if l < self.last_committed else None
            if not entries and self.evidence is None:
                return False
            self.responded.add(key)
            if self.evidence is not None:
                self._send(c.complainer, self.evidence)
            if entries:
                self._send(c.complainer, self._sign(Catchup(entries, self.id)))
            return True
        if l < self.last_committed and l + 1 < self.low_watermark:
            self.suspects.add(c.complainer)
            self._note("refused", c.complainer, l)
            return False
        self.responded.add(key)
        if self._absorb_complaint(c):
            return True
        if l < self.last_committed:
            entries = self._entries_after(l)
            if entries:
                self._send(c.complainer, self._sign(Catchup(entries, self.id)))
                # the block in flight is probably missing too: hand it over once it commits
                self.waiting[c.complainer] = self.last_committed
                return True
        self.waiting[c.complainer] = l
        return True

    def _serve_waiting(self) -> None:
        for who, l in sorted(self.waiting.items()):
            if l >= self.last_committed:
                continue
            entries = self._entries_after(l)
            del self.waiting[who]
            if entries:
                self._send(who, self._sign(Catchup(entries, self.id)))
            else:
                self.suspects.add(who)
                self._note("refused", who, l)

    def _on_complainset(self, src, cs: ComplainSet) -> bool:
        if not self._valid_trigger(cs, self.view):
            return False
        self._start_view_change(cs, view=cs.view + 1)
        return True

    def _on_catchup(self, src, cu: Catchup) -> bool:
        committed = 0
        for pair in cu.entries:
            if not self._valid_pair(pair):
                break
            o, c = pair
            seen = self.orders_seen.get((o.seq, o.view))
            if seen is not None and seen.block.digest != o.block.digest and o.view == self.view:
                self._raise_proof(Proof(ProofKind.CONFLICTING_ORDERS, (seen, o)))
                break
            if o.seq <= self.last_committed:
                continue
            if o.seq != self.last_committed + 1 or not o.block.follows(self.last_history):
                break
            if self.recovery is not None:
                self.recovery.target = max(self.recovery.target, o.seq)
            self._commit(o, c)
            committed += 1
        if committed == 0:
            return False
        if self.future_orders:
            for s in [s for s in self.future_orders if s <= self.last_committed]:
                del self.future_orders[s]
        self._serve_waiting()
        if self.phase is Phase.RECOVERING:
            self._maybe_finish_recovery()
        elif self.phase is Phase.VIEW_CHANGING:
            self._vc_progress()
        elif not self.is_primary:
            self._start_epoch()
        else:
            self.proposal = None
            self._start_epoch()
        return True

    # ------------------------------------------------------------------ view change
    def _cert(self) -> Optional[tuple]:
        return self.chain.get(self.last_committed) if self.last_committed else None

    def _start_view_change(self, trigger: Optional[ComplainSet], view: Optional[int] = None) -> None:
        self.view = self.view + 1 if view is None else view
        self.evidence = trigger
        self.phase = Phase.VIEW_CHANGING
        self.recovery = None
        self.complaints = {k: c for k, c in self.complaints.items() if c.view >= self.view}
        self.responded.clear()
        self.waiting.clear()
        self.future_orders.clear()
        self.proposal = None
        self.collecting.clear()
        self.carry = None
        self.vc = ViewChangeProgress()
        self._cancel("epoch")
        self._cancel("escalate")
        self._timer("vc", self.now + self.cfg.epoch_timeout)
        self._note("view_change", self.view)
        if trigger is None:
            return
        pending = self.pending if self.pending is not None and self.pending.seq == self.last_committed + 1 else None
        msg = self._sign(ViewChange(self.view, trigger, self.last_committed, self.last_digest,
                                    self._cert(), pending, self.id))
        if self.is_primary:
            self._on_viewchange(self.id, msg)
        else:
            self._send(self.primary, msg)

    def _valid_viewchange(self, vc, view: int) -> bool:
        if not isinstance(vc, ViewChange) or vc.view != view or not self._valid_sig(vc):
            return False
        if vc.latest_seq < 0:
            return False
        if vc.latest_seq == 0:
            return vc.cert is None
        if vc.cert is None or not self._valid_pair(vc.cert):
            return False
        o = vc.cert[0]
        return o.seq == vc.latest_seq and o.block.digest == vc.latest_digest

    def _on_viewchange(self, src, vc: ViewChange) -> bool:
        if vc.view > self.view and next_primary(vc.view, self.cfg) == self.id \
                and vc.trigger is not None and vc.trigger.view + 1 == vc.view \
                and self._valid_trigger(vc.trigger, self.view):
            self._start_view_change(vc.trigger, view=vc.view)
        if vc.view != self.view or not self.is_primary or self.phase is not Phase.VIEW_CHANGING:
            return False
        if not self._valid_viewchange(vc, self.view):
            return False
        prog = self.vc
        if not prog.q_sent:
            if vc.replica in prog.collected:
                return False
            prog.collected[vc.replica] = vc
            if len(prog.collected) == quorum(self.cfg):
                self._send_new_view()
            return True
        # download request after Q went out
        if vc.latest_seq >= prog.target or vc.replica in prog.q_members and prog.served:
            return False
        prog.q_members.setdefault(vc.replica, vc.latest_seq)
        return self._serve_laggard(vc.replica, vc.latest_seq)

    def _serve_laggard(self, who: int, latest: int) -> bool:
        target = self.vc.target
        if self.last_committed < target:
            self.waiting[who] = latest
            return True
        entries = self._entries_after(latest, target)
        if entries is None:
            self.suspects.add(who)
            self._note("refused", who, latest)
            return False
        self._send(who, self._sign(Catchup(entries, self.id)))
        return True

    @staticmethod
    def attested_seq(q, f_prime: int) -> int:
        """Highest seq that at least f'+1 members of ``q`` report reaching."""
        seqs = sorted((vc.latest_seq for vc in q), reverse=True)
        return seqs[f_prime] if len(seqs) > f_prime else 0

    @staticmethod
    def analyze_q(q, f_prime: int) -> tuple[int, Optional[Order]]:
        """Restart point s' and the block mandated at s' + 1, if any."""
        s = max(vc.latest_seq for vc in q)
        votes = Counter()
        best = {}
        for vc in q:
            p = vc.pending
            if vc.latest_seq == s and p is not None and p.seq == s + 1:
                votes[p.block.digest] += 1
                if p.block.digest not in best or p.view > best[p.block.digest].view:
                    best[p.block.digest] = p
        if not votes:
            return s, None
        digest = max(votes, key=lambda d: (votes[d], best[d].view, d))
        return s, best[digest]

    def _send_new_view(self) -> None:
        prog = self.vc
        q = tuple(prog.collected[r] for r in sorted(prog.collected))
        agg = self.scheme.aggregate(vc.sig for vc in q)
        nv = self._sign(NewView(self.view, q, agg, self.id))
        prog.q_sent = True
        self.evidence = nv
        self._broadcast(nv)
        s, _ = self.analyze_q(q, self.f_prime)
        self._note("new_view", self.view, s, s - self.low_watermark)
        self._apply_new_view(nv)

    def _valid_newview(self, nv: NewView) -> bool:
        if nv.primary != next_primary(nv.view, self.cfg) or len(nv.q) < quorum(self.cfg):
            return False
        seen = set()
        for vc in nv.q:
            if vc.replica in seen or not self._valid_viewchange(vc, nv.view):
                return False
            seen.add(vc.replica)
        try:
            return self.scheme.verify_aggregate(nv.aggregate, [vc.signing_digest for vc in nv.q],
                                                [vc.replica for vc in nv.q])
        except CryptoError:
            return False

    def _on_newview(self, src, nv: NewView) -> bool:
        if nv.view < self.view or nv.view in self.new_view_seen or self.is_primary and nv.view == self.view:
            return False
        if nv.view == self.view and self.phase is Phase.NORMAL:
            return False
        if not self._valid_newview(nv):
            return False
        if nv.view > self.view or self.phase is not Phase.VIEW_CHANGING:
            self._start_view_change(None, view=nv.view)
        self.evidence = nv
        self._apply_new_view(nv)
        return True

    def _apply_new_view(self, nv: NewView) -> None:
        self.new_view_seen.add(nv.view)
        prog = self.vc
        s, carry = self.analyze_q(nv.q, self.f_prime)
        prog.target = s
        prog.carry = carry
        prog.q_members = {vc.replica: vc.latest_seq for vc in nv.q}
        self.carry = carry
        self._cancel("vc")
        self._timer("vc", self.now + self.cfg.epoch_timeout)
        if self.is_primary:
            prog.stage = "await_confirms"
            if self.last_committed >= s:
                self._primary_ready()
            return
        me = prog.q_members.get(self.id)
        if self.last_committed >= s:
            prog.stage = "await_v"
            self._confirm()
            p_latest = prog.q_members.get(self.primary)
            if p_latest is not None and p_latest < s:
                entries = self._entries_after(p_latest, s)
                if entries:
                    self._send(self.primary, self._sign(Catchup(entries, self.id)))
        else:
            prog.stage = "await_catchup"
            if me is None:
                req = self._sign(ViewChange(self.view, None, self.last_committed, self.last_digest,
                                            self._cert(), None, self.id))
                self._send(self.primary, req)

    def _confirm(self) -> None:
        if self.vc.confirmed:
            return
        self.vc.confirmed = True
        self._send(self.primary, self._sign(Confirm(self.view, self.vc.target, self.id)))

    def _primary_ready(self) -> None:
        prog = self.vc
        if prog.served:
            return
        prog.served = True
        for who, latest in sorted(prog.q_members.items()):
            if who != self.id and latest < prog.target:
                self._serve_laggard(who, latest)
        for who, latest in sorted(self.waiting.items()):
            if latest < prog.target:
                self._serve_laggard(who, latest)
        self.waiting.clear()
        own = self._sign(Confirm(self.view, prog.target, self.id))
        prog.confirms[self.id] = own
        self._maybe_view_confirm()

    def _vc_progress(self) -> None:
        """Called after catch-up during a view change."""
        prog = self.vc
        if prog.target < 0 or self.last_committed < prog.target:
            return
        if self.is_primary:
            self._primary_ready()
        elif prog.stage == "await_catchup":
            prog.stage = "await_v"
            self._confirm()
        elif prog.stage == "have_v":
            self._enter_view()

    def _on_confirm(self, src, cf: Confirm) -> bool:
        prog = self.vc
        if not self.is_primary or self.phase is not Phase.VIEW_CHANGING or cf.view != self.view:
            return False
        if cf.seq != prog.target or prog.v_sent or cf.replica in prog.confirms:
            return False
        prog.confirms[cf.replica] = cf
        self._maybe_view_confirm()
        return True

    def _maybe_view_confirm(self) -> None:
        prog = self.vc
        if prog.v_sent or not prog.served or len(prog.confirms) < quorum(self.cfg):
            return
        confirms = tuple(prog.confirms[r] for r in sorted(prog.confirms))
        agg = self.scheme.aggregate(c.sig for c in confirms)
        prog.v_sent = True
        self.evidence = self._sign(ViewConfirm(self.view, prog.target, confirms, agg, self.id))
        self._broadcast(self.evidence)
        self._enter_view()

    def _on_viewconfirm(self, src, vcf: ViewConfirm) -> bool:
        ahead = vcf.view > self.view
        if not ahead and (vcf.view != self.view or self.phase is not Phase.VIEW_CHANGING):
            return False
        if vcf.primary != next_primary(vcf.view, self.cfg) or vcf.primary == self.id:
            return False
        if len(vcf.confirms) < quorum(self.cfg):
            return False
        seen = set()
        for c in vcf.confirms:
            if not isinstance(c, Confirm) or c.view != vcf.view or c.seq != vcf.seq \
                    or c.replica in seen or not self._valid_sig(c):
                return False
            seen.add(c.replica)
        try:
            ok = self.scheme.verify_aggregate(vcf.aggregate, [c.signing_digest for c in vcf.confirms],
                                              [c.replica for c in vcf.confirms])
        except CryptoError:
            ok = False
        if not ok:
            return False
        if ahead:
            # the view is already installed; join it and let recovery fetch any gap
            self._start_view_change(None, view=vcf.view)
            self.evidence = vcf
            self.vc.target = vcf.seq
            self._enter_view()
            return True
        self.evidence = vcf
        prog = self.vc
        if prog.target < 0:
            prog.target = vcf.seq
        if self.last_committed >= vcf.seq:
            self._enter_view()
        else:
            prog.stage = "have_v"
        return True

    def _enter_view(self) -> None:
        self.phase = Phase.NORMAL
        self.pending = None
        self._cancel("vc")
        for key in [k for k in self.orders_seen if k[1] < self.view]:
            del self.orders_seen[key]
        self.forwarders.clear()
        self.inflight.clear()
        self._note("enter_view", self.view, self.vc.target)
        self._reforward()
        self._start_epoch()

    def _on_vc_timeout(self) -> None:
        if self.phase is not Phase.VIEW_CHANGING:
            return
        self._note("vc_timeout", self.view)
        self.phase = Phase.NORMAL
        self._enter_recovery(self.now - self.cfg.epoch_timeout, target=max(self.last_committed, self.vc.target))
