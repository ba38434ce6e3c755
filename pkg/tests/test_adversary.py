import pytest

from musch.adversary import (
    STRATEGIES, ComplaintSpammer, CrashAt, EquivocatingPrimary, SelectiveWithhold, SilentPrimary,
    StaleViewChange, UnderSignedCommitter, build_strategy,
)
from musch.scenario import Scenario
from musch.simnet import run
from musch.types import Catchup, Commit, Complain, Order, ProtocolConfig, Response, ViewChange

from conftest import Harness


def test_registry_and_builder():
    assert len(STRATEGIES) == 9
    s = build_strategy("selective_withhold", {"victims": [3, 4]})
    assert s.victims == frozenset({3, 4})
    with pytest.raises(KeyError):
        build_strategy("nope")
    with pytest.raises(TypeError):
        build_strategy("crash_at", {"when": 3})


def test_withhold_drops_victims(h):
    s = SelectiveWithhold(frozenset({3, 4}))
    o = h.order(1)
    out = [d for dst in (2, 3, 4) for d in s.intercept(h[1], dst, o, 0)]
    assert [d[0] for d in out] == [2]  # n - 1 - 2 deliveries


def test_silent_primary_goes_mute_for_good(h):
    s = SilentPrimary(after_seq=1)
    assert s.intercept(h[1], 2, h.order(1), 0)
    assert not s.intercept(h[1], 2, h.order(2), 0)
    assert not s.intercept(h[1], 2, h.complain(1), 0)


def test_equivocation_is_self_signed_and_conflicting(h):
    s = EquivocatingPrimary()
    o = h.order(1, txns=[h.txn()])
    outs = {dst: s.intercept(h[1], dst, o, 0)[0][1] for dst in (2, 3, 4)}
    assert outs[2] == o
    alt = outs[4]
    assert alt.block.digest != o.block.digest and alt.seq == o.seq
    assert h.scheme.verify(alt.sig, alt.signing_digest, 1)
    assert s.intercept(h[1], 4, h.order(2), 0)[0][1].block.txns == ()


def test_under_signed_commit_has_2f_signers():
    h = Harness(2)
    p = h[1]
    s = UnderSignedCommitter()
    o = h.order(1)
    b = o.block
    for r in (2, 3, 4, 5):
        s.admit(p, r, h.sign(Response(1, 0, b.digest, r)), 0)
    c = h.commit(o, signers=[1, 2, 3, 4, 5])
    weak = s.intercept(p, 2, c, 0)[0][1]
    assert len(weak.aggregate) == 4
    assert h.scheme.verify(weak.sig, weak.signing_digest, 1)


def test_spammer_copies_complaints_to_w1():
    h = Harness(1)
    s = ComplaintSpammer(copies=3)
    out = s.intercept(h[2], 1, h.sign(Response(1, 0, bytes(32), 2)), 0)
    assert sum(isinstance(m, Complain) for _, m, _ in out) == 3


def test_crash_stops_everything(h):
    s = CrashAt(time=10)
    assert s.admit(h[1], 2, h.order(1), 9) and not s.admit(h[1], 2, h.order(1), 10)
    assert not s.timer_allowed(h[1], "epoch", 10)


def test_stale_view_change_claims_empty_chain(h):
    pairs = h.chain(2)
    vc = h.viewchange(3, 1, None, pairs)
    out = StaleViewChange().intercept(h[3], 2, vc, 0)[0][1]
    assert out.latest_seq == 0 and out.cert is None
    assert h.scheme.verify(out.sig, out.signing_digest, 3)


def base(fp, adv, **kw):
    kw = {"seed": 1, "clients": 1, "txns": 2, "target_height": 6, **kw}
    return Scenario(cfg=ProtocolConfig.for_faults(fp), adversary=adv, **kw)


def test_silent_primary_n4_one_view_change():
    res = run(base(1, [{"node": 1, "strategy": "silent_primary", "params": {"after_seq": 0}}],
                   txns=1))
    assert res.ok()
    assert [v for v, _ in res.view_changes()] == [1]
    c = res.sim.clients["c1"].pending[("c1", 1)]
    assert c.completed
    assert res.sim.clients["c1"].view == 1
    orders = [e.msg for e in res.trace.events if isinstance(e.msg, Order) and e.msg.view == 1]
    assert orders


def test_spammed_window_answers_each_complaint_once():
    res = run(base(1, [{"node": 2, "strategy": "complaint_spammer"}]))
    assert res.ok()
    from collections import Counter
    ans = Counter((e.src, e.dst) for e in res.trace.events if isinstance(e.msg, Catchup) and e.dst == 2)
    # a duplicate complaint never produces a fresh answer; each distinct one gets
    # its catch-up plus at most one follow-up for the block then in flight
    complaints = Counter(e.msg for e in res.trace.events if isinstance(e.msg, Complain) and e.src == 2)
    assert all(v >= 3 for v in complaints.values())
    assert sum(ans.values()) <= 2 * len(complaints)


@pytest.mark.parametrize("kind", sorted(STRATEGIES))
def test_each_strategy_keeps_safety_and_liveness(kind):
    params = {"silent_primary": {"after_seq": 2}, "selective_withhold": {"victims": [4]},
              "crash_at": {"time": 40}}.get(kind, {})
    res = run(base(1, [{"node": 1, "strategy": kind, "params": params}]))
    bad = [v.line() for v in res.verdicts() if not v.ok]
    assert not bad
