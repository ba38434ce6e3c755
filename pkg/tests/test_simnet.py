import random
from collections import Counter

from hypothesis import given, settings, strategies as st

from musch.scenario import Scenario
from musch.simnet import (
    DelayModel, MessageLedger, Record, Trace, bucket_of, check_epoch_bound, conservation_from_trace,
    critical_path, run, safety_monitor, view_change_bound,
)
from musch.types import Commit, Order, ProtocolConfig, Response

HEADER = {"protocol": {"n": 4}, "adversary": []}


def commit_line(tick, node, seq, digest, history):
    return Record(tick, "commit", str(node), "-", "block", "-", f"{seq}:{digest}:{history}")


def test_empty_trace_is_safe():
    assert safety_monitor(Trace(HEADER)).ok


def test_conflicting_commit_cites_both_digests():
    t = Trace(HEADER)
    for node in (1, 2):
        for s in (1, 2):
            t.records.append(commit_line(s, node, s, f"d{s}", f"h{s}"))
    t.records.append(commit_line(5, 1, 3, "aaaa", "h3a"))
    t.records.append(commit_line(6, 2, 3, "bbbb", "h3b"))
    v = safety_monitor(t)
    assert not v.ok and "aaaa" in v.detail and "bbbb" in v.detail and "seq 3" in v.detail


def test_gap_and_prefix_violations():
    t = Trace(HEADER, [commit_line(1, 1, 1, "d1", "h1"), commit_line(2, 1, 3, "d3", "h3")])
    assert not safety_monitor(t).ok
    t = Trace(HEADER, [commit_line(1, 1, 1, "d1", "h1"), commit_line(1, 2, 1, "d1", "hX")])
    v = safety_monitor(t)
    assert not v.ok and "prefix" in v.detail


def test_corrupted_nodes_ignored():
    hdr = {"protocol": {"n": 4}, "adversary": [{"node": 2}]}
    t = Trace(hdr, [commit_line(1, 1, 1, "d1", "h1"), commit_line(1, 2, 1, "zz", "h1")])
    assert safety_monitor(t).ok


@given(st.integers(0, 2**32), st.integers(0, 300), st.integers(1, 20), st.integers(1, 40))
def test_delay_model_bounds(seed, now, T, extra):
    gst = 150
    m = DelayModel(random.Random(seed), T, gst, T + extra)
    d = m.delay(now)
    assert d is not None
    if now >= gst:
        assert 1 <= d <= T
    else:
        assert 1 <= d <= T + extra
    assert m.delay(now, "max") == (T if now >= gst else T + extra)


def test_pre_gst_drops_only_before_gst():
    m = DelayModel(random.Random(1), 10, 100, 100, pre_gst_drop=0.5)
    before = [m.delay(50) for _ in range(200)]
    assert None in before
    assert None not in [m.delay(100) for _ in range(200)]


def test_ledger_accounting():
    L = MessageLedger()
    L.record(("epoch", 1), "order", True)
    L.record(("epoch", 1), "order", False)
    L.record(("epoch", 1), "response", True)
    assert L.effective(("epoch", 1)) == 2
    assert L.total(("epoch", 1)) == 3 and L.total(("epoch", 1), False) == 1
    L.sent["order"] = 3
    L.delivered["order"] = 2
    assert L.conservation() == {"order": (3, 2)}
    L.dropped_gst["order"] = 1
    assert not L.conservation()


def test_bounds():
    assert view_change_bound(1, 4, 1, 1) == 22
    L = MessageLedger()
    for _ in range(140):
        L.record(("epoch", 1), "order", True)
    assert check_epoch_bound(L, 1, 2, 10)
    L.record(("epoch", 1), "order", True)
    assert not check_epoch_bound(L, 1, 2, 10)


def test_record_parse_roundtrip():
    r = Record(12, "deliver", "1", "c2", "reply", "eff", "abcd")
    assert Record.parse(r.line()) == r


def fault_free(fp, **kw):
    kw = {"seed": 42, "clients": 1, "txns": 5, "target_height": 5, **kw}
    return Scenario(cfg=ProtocolConfig.for_faults(fp), **kw)


def test_baseline_n4():
    res = run(fault_free(1))
    assert res.ok() and res.max_height() >= 5
    assert not res.notes("recovering") and not res.ledger.views()
    assert all(p.completed for p in res.sim.clients["c1"].pending.values())


def test_fault_free_epoch_count_matches_direct_recount():
    fp = 4
    res = run(fault_free(fp, target_height=8))
    n = res.sim.cfg.n
    # oracle: recount effective epoch traffic straight from the delivery log
    recount = Counter()
    for e in res.trace.events:
        if e.effective and isinstance(e.msg, (Order, Response, Commit)):
            recount[e.msg.seq] += 1
    for s in res.complete_epochs():
        got = res.ledger.effective(("epoch", s))
        assert got == recount[s]
        # Orders and Commits to n-1 replicas, plus the 2f' Responses that complete the quorum
        assert got == 2 * (n - 1) + 2 * fp
        assert got <= 4 * n


def test_critical_path_is_four_when_fault_free():
    res = run(fault_free(4, clients=2))
    keys = [k for c in res.sim.clients.values() for k in c.pending]
    assert {critical_path(res, k) for k in keys} == {4}


def test_critical_path_ignores_reply_arrival_race():
    # the primary's own Reply lands after f'+1 replica replies here; the chain
    # through it is still the shortest one for the committed block
    import os
    from musch.suite import Suite
    path = os.path.join(os.path.dirname(__file__), "..", "scenarios", "safety_suite.toml")
    res = run(Suite.load(path).scenario(50))
    assert res.sim.replicas[10].is_primary
    p = res.sim.clients["c1"].pending[("c1", 2)]
    assert p.completed and critical_path(res, ("c1", 2)) == 4


def test_ack_completion_counts_two_hops():
    res = run(fault_free(1, txns=1))
    p = next(iter(res.sim.clients["c1"].pending.values()))
    # flip the completion route: broadcast request then ACK
    p.via = "ack"
    assert critical_path(res, p.txn.key) == 2


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6))
def test_deterministic_and_ordered(seed):
    sc = fault_free(1, seed=seed, target_height=3, txns=2)
    a, b = run(sc), run(sc)
    assert a.trace.text() == b.trace.text()
    assert not a.sim.order_violation
    assert conservation_from_trace(a.trace).ok


def test_fifo_links():
    res = run(fault_free(2, target_height=6, txns=3))
    last = {}
    for e in res.trace.events:
        key = (e.src, e.dst)
        assert e.id > last.get(key, -1)
        last[key] = e.id
    # per-link deliveries keep send order: each link's Orders arrive in seq order
    seqs = {}
    for e in res.trace.events:
        if isinstance(e.msg, Order):
            assert e.msg.seq > seqs.get((e.src, e.dst), 0)
            seqs[(e.src, e.dst)] = e.msg.seq


def test_trace_text_roundtrip():
    res = run(fault_free(1, target_height=2, txns=1))
    t = Trace.parse(res.trace.text())
    assert t.header == res.trace.header
    assert [r.line() for r in t.records] == [r.line() for r in res.trace.records]
    assert safety_monitor(t).ok and conservation_from_trace(t).ok


def test_bucket_rules():
    from musch.types import Complain, ComplainSet, Forward, Transaction
    c = Complain(4, 2, bytes(32), 3)
    assert bucket_of(c) == ("epoch", 5)
    assert bucket_of(ComplainSet(2, (c,), 1)) == ("view", 3)
    assert bucket_of(Forward(Transaction("c1", 1), 2)) == ("client", ("c1", 1))
