"""Client state machine.

A client sends each transaction to the primary it believes is current and
waits for either ``f'+1`` Replies agreeing on (seq, view, result) or
``2f'+1`` ACKs.  If neither arrives within one epoch budget it broadcasts
the request once to every replica.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .crypto import CryptoError, SignatureScheme, Signer
from .replica import Note, Send, SetTimer
from .types import Ack, ClientRequest, ProtocolConfig, Reply, Transaction, next_primary, quorum, weak_quorum


@dataclass
class PendingTxn:
    txn: Transaction
    sent_at: int
    replies: dict = field(default_factory=dict)  # match key -> set of replicas
    acks: set = field(default_factory=set)
    broadcast: bool = False
    completed: bool = False
    completed_at: Optional[int] = None
    via: str = ""


class Client:
    def __init__(self, cid: str, cfg: ProtocolConfig, scheme: SignatureScheme, signer: Signer):
        self.id = cid
        self.cfg = cfg
        self.scheme = scheme
        self.signer = signer
        self.view = cfg.initial_view
        self.pending: dict[tuple, PendingTxn] = {}
        self.out: list = []
        self.now = 0

    def drain(self) -> list:
        out, self.out = self.out, []
        return out

    @property
    def completed(self) -> list:
        return [k for k, p in self.pending.items() if p.completed]

    def _request(self, txn: Transaction) -> ClientRequest:
        req = ClientRequest(txn)
        return req.signed(self.signer.sign(req.signing_digest, self.id))

    def submit(self, txn: Transaction, now: int) -> bool:
        self.now = now
        if txn.client != self.id or txn.key in self.pending:
            return False
        self.pending[txn.key] = PendingTxn(txn, now)
        self.out.append(Send(next_primary(self.view, self.cfg), self._request(txn)))
        self.out.append(SetTimer(_timer_name(txn.key), now + self.cfg.epoch_timeout))
        return True

    def _verified(self, msg) -> bool:
        try:
            return msg.sig is not None and self.scheme.verify(msg.sig, msg.signing_digest, msg.signer)
        except CryptoError:
            return False

    def receive(self, src, msg, now: int) -> bool:
        self.now = now
        if isinstance(msg, Reply):
            return self.on_reply(msg)
        if isinstance(msg, Ack):
            return self.on_ack(msg)
        return False

    def on_reply(self, r: Reply) -> bool:
        if r.client != self.id or not self._verified(r):
            return False
        hit = False
        for ts in r.timestamps:
            p = self.pending.get((self.id, ts))
            if p is None or p.completed:
                continue
            voters = p.replies.setdefault(r.match_key, set())
            if r.replica in voters:
                continue
            voters.add(r.replica)
            hit = True
            if len(voters) >= weak_quorum(self.cfg):
                self._complete(p, "reply")
                self.view = max(self.view, r.view)
        return hit

    def on_ack(self, a: Ack) -> bool:
        if a.client != self.id or not self._verified(a):
            return False
        p = self.pending.get(a.txn_key)
        if p is None or p.completed or a.replica in p.acks:
            return False
        p.acks.add(a.replica)
        if len(p.acks) >= quorum(self.cfg):
            self._complete(p, "ack")
        return True

    def _complete(self, p: PendingTxn, via: str) -> None:
        p.completed = True
        p.completed_at = self.now
        p.via = via
        self.out.append(Note("complete", (p.txn.client, p.txn.timestamp, via)))

    def on_timer(self, name: str, now: int) -> None:
        self.now = now
        ts = _parse_timer(name)
        if ts is not None:
            self.on_client_timeout((self.id, ts))

    def on_client_timeout(self, key: tuple) -> None:
        p = self.pending.get(key)
        if p is None or p.completed or p.broadcast:
            return
        p.broadcast = True
        req = self._request(p.txn)
        for r in self.cfg.replica_ids:
            self.out.append(Send(r, req))


def _timer_name(key: tuple) -> str:
    return f"txn:{key[1]}"


def _parse_timer(name: str) -> Optional[int]:
    head, _, ts = name.partition(":")
    if head != "txn" or not ts.lstrip("-").isdigit():
        return None
    return int(ts)
