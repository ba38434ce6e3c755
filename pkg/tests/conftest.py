import pytest

from musch.crypto import ZERO_DIGEST, MockScheme, Signer
from musch.replica import Note, Replica, Send, SetTimer
from musch.types import (
    Block, Catchup, Commit, Complain, ComplainSet, Order, ProtocolConfig, Response, Transaction,
    ViewChange, next_primary,
)


class Harness:
    """A set of replicas for ``f'`` plus a signer that can speak for anyone.

    Tests feed messages to one replica at a time and inspect its outbox.
    """

    def __init__(self, f_prime=1, clients=("c1", "c2"), **cfg_kw):
        self.cfg = ProtocolConfig.for_faults(f_prime, **cfg_kw)
        ids = list(self.cfg.replica_ids) + list(clients)
        self.scheme = MockScheme(0, ids)
        self.god = Signer(self.scheme, ids)
        self.replicas = {r: Replica(r, self.cfg, self.scheme, Signer(self.scheme, [r]))
                         for r in self.cfg.replica_ids}

    def __getitem__(self, rid):
        return self.replicas[rid]

    def sign(self, msg):
        return msg.signed(self.god.sign(msg.signing_digest, msg.signer))

    def txn(self, client="c1", ts=1):
        return Transaction(client, ts, f"{client}:{ts}".encode())

    def order(self, seq, view=None, txns=(), prev=ZERO_DIGEST):
        view = self.cfg.initial_view if view is None else view
        block = Block.build(seq, view, txns, prev)
        return self.sign(Order(block, next_primary(view, self.cfg)))

    def commit(self, order, signers=None, checkpoint=0):
        b = order.block
        signers = list(self.cfg.replica_ids)[: 2 * self.cfg.f_prime + 1] if signers is None else signers
        sigs = [self.sign(Response(b.seq, b.view, b.digest, r, checkpoint)).sig for r in signers]
        agg = self.scheme.aggregate(sigs)
        return self.sign(Commit(b.seq, b.view, b.digest, agg, checkpoint, order.primary))

    def chain(self, length, view=None, txns_for=lambda s: ()):
        """Certified (Order, Commit) pairs for seqs 1..length."""
        pairs, prev = [], ZERO_DIGEST
        for s in range(1, length + 1):
            o = self.order(s, view, txns_for(s), prev)
            ck = s if s % self.cfg.checkpoint_interval == 0 else 0
            pairs.append((o, self.commit(o, checkpoint=ck)))
            prev = o.block.history_hash
        return pairs

    def catchup(self, pairs, sender=2):
        return self.sign(Catchup(tuple(pairs), sender))

    def complain(self, who, last=0, view=None, proof=None, digest=ZERO_DIGEST):
        view = self.cfg.initial_view if view is None else view
        return self.sign(Complain(last, view, digest, who, proof))

    def complain_set(self, complaints, view=None, sender=1):
        view = self.cfg.initial_view if view is None else view
        return self.sign(ComplainSet(view, tuple(complaints), sender))

    def viewchange(self, who, view, trigger=None, pairs=(), pending=None):
        if pairs:
            o, _ = pairs[-1]
            latest, digest, cert = o.seq, o.block.digest, pairs[-1]
        else:
            latest, digest, cert = 0, ZERO_DIGEST, None
        return self.sign(ViewChange(view, trigger, latest, digest, cert, pending, who))


def sends(outbox, kind=None, dst=None):
    out = [e for e in outbox if isinstance(e, Send)]
    if kind is not None:
        out = [e for e in out if isinstance(e.msg, kind)]
    if dst is not None:
        out = [e for e in out if e.dst == dst]
    return out


def notes(outbox, kind):
    return [e.detail for e in outbox if isinstance(e, Note) and e.kind == kind]


def timers(outbox, name):
    return [e.at for e in outbox if isinstance(e, SetTimer) and e.name == name]


@pytest.fixture
def h():
    return Harness(1)


@pytest.fixture
def h4():
    return Harness(4)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for i in sorted(results):
            terminalreporter.write_line(results[i])
