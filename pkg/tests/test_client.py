from musch.client import Client
from musch.replica import Note, Send, SetTimer
from musch.types import Ack, ClientRequest, Reply

from conftest import Harness


def make(h, cid="c1"):
    return Client(cid, h.cfg, h.scheme, h.god)


def reply(h, replica, ts, seq=1, view=0, result=b"r", cid="c1"):
    return h.sign(Reply(seq, view, cid, result, (ts,), replica))


def test_submit_once(h):
    c = make(h)
    t = h.txn("c1", 1)
    assert c.submit(t, 5)
    out = c.drain()
    assert [e.dst for e in out if isinstance(e, Send)] == [1]
    assert [e.at for e in out if isinstance(e, SetTimer)] == [35]
    assert not c.submit(t, 6) and not c.drain()


def test_weak_quorum_of_matching_replies(h):
    c = make(h)
    c.submit(h.txn("c1", 1), 0)
    assert c.receive(2, reply(h, 2, 1), 3)
    assert not c.pending[("c1", 1)].completed
    assert not c.receive(2, reply(h, 2, 1), 3)  # duplicate voter
    c.receive(3, reply(h, 3, 1, result=b"other"), 4)
    assert not c.pending[("c1", 1)].completed
    c.receive(4, reply(h, 4, 1), 5)
    p = c.pending[("c1", 1)]
    assert p.completed and p.completed_at == 5 and p.via == "reply"


def test_completion_by_acks(h):
    c = make(h)
    c.submit(h.txn("c1", 1), 0)
    for r in (1, 2):
        c.receive(r, h.sign(Ack("c1", 1, r)), 1)
    assert not c.pending[("c1", 1)].completed
    c.receive(3, h.sign(Ack("c1", 1, 3)), 2)
    assert c.pending[("c1", 1)].via == "ack"
    assert any(isinstance(e, Note) and e.kind == "complete" for e in c.drain())


def test_timeout_broadcasts_once(h):
    c = make(h)
    c.submit(h.txn("c1", 1), 0)
    c.drain()
    c.on_timer("txn:1", 30)
    out = [e for e in c.drain() if isinstance(e, Send)]
    assert sorted(e.dst for e in out) == [1, 2, 3, 4]
    assert all(isinstance(e.msg, ClientRequest) for e in out)
    c.on_timer("txn:1", 60)
    assert not c.drain()


def test_ignores_others_and_forgeries(h):
    c = make(h)
    c.submit(h.txn("c1", 1), 0)
    assert not c.receive(2, reply(h, 2, 1, cid="c2"), 1)
    forged = Reply(1, 0, "c1", b"r", (1,), 2)
    assert not c.receive(2, forged, 1)


def test_view_learned_from_replies(h):
    c = make(h)
    c.submit(h.txn("c1", 1), 0)
    for r in (2, 3):
        c.receive(r, reply(h, r, 1, view=3), 1)
    assert c.view == 3
    c.submit(h.txn("c1", 2), 2)
    assert [e.dst for e in c.drain() if isinstance(e, Send)][-1] == 4
