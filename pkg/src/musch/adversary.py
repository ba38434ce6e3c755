"""Byzantine overlays for corrupted nodes.

A corrupted node still runs the correct replica logic; its strategy sits
between that logic and the network.  ``intercept`` sees every message the
node sends and may drop, delay, duplicate or rewrite it, and ``admit``
decides whether the node gets to see an incoming message at all.  Rewrites
are re-signed with the corrupted node's own key, so strategies can never
produce signatures for correct nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .types import Block, Commit, Complain, Order, Response, ViewChange
from .windows import window_members

# an outgoing delivery: (destination, message, extra delay or None for the normal delay)
Delivery = tuple


class Strategy:
    name = "honest"

    def admit(self, node, src, msg, now: int) -> bool:
        return True

    def intercept(self, node, dst, msg, now: int) -> list[Delivery]:
        return [(dst, msg, None)]

    def timer_allowed(self, node, name: str, now: int) -> bool:
        return True


def _resign(node, msg):
    return msg.signed(node.signer.sign(replace(msg, sig=None).signing_digest, msg.signer))


@dataclass
class SilentPrimary(Strategy):
    """Goes mute (sends nothing at all) once it would order a block past ``after_seq``."""

    after_seq: int = 0
    silent: bool = False
    name = "silent_primary"

    def intercept(self, node, dst, msg, now):
        if isinstance(msg, Order) and msg.seq > self.after_seq:
            self.silent = True
        return [] if self.silent else [(dst, msg, None)]


@dataclass
class SelectiveWithhold(Strategy):
    """Never sends anything to ``victims``.

    With ``from_seq``/``until_seq`` set, only messages about blocks in that
    range are withheld and everything else still gets through.
    """

    victims: frozenset = frozenset()
    from_seq: Optional[int] = None
    until_seq: Optional[int] = None
    name = "selective_withhold"

    def _hit(self, msg) -> bool:
        if self.from_seq is None and self.until_seq is None:
            return True
        seq = getattr(msg, "seq", None)
        if seq is None:
            return False
        return (self.from_seq or 0) <= seq <= (self.until_seq if self.until_seq is not None else seq)

    def intercept(self, node, dst, msg, now):
        return [] if dst in self.victims and self._hit(msg) else [(dst, msg, None)]


@dataclass
class EquivocatingPrimary(Strategy):
    """Sends half the replicas an empty alternative for every non-empty Order."""

    name = "equivocating_primary"
    _alts: dict = field(default_factory=dict)

    def intercept(self, node, dst, msg, now):
        if not isinstance(msg, Order) or not msg.block.txns:
            return [(dst, msg, None)]
        others = [r for r in node.cfg.replica_ids if r != node.id]
        if dst not in others[len(others) // 2:]:
            return [(dst, msg, None)]
        key = (msg.seq, msg.view)
        alt = self._alts.get(key)
        if alt is None:
            b = msg.block
            fake = Block.build(b.seq, b.view, (), node.last_history)
            alt = self._alts[key] = _resign(node, Order(fake, msg.primary))
        return [(dst, alt, None)]


@dataclass
class UnderSignedCommitter(Strategy):
    """Replaces each Commit aggregate with one covering only 2f' Responses."""

    name = "under_signed_committer"
    _seen: dict = field(default_factory=dict)  # (seq, view, digest) -> {replica: sig}

    def admit(self, node, src, msg, now):
        if isinstance(msg, Response):
            self._seen.setdefault((msg.seq, msg.view, msg.digest), {})[msg.replica] = msg.sig
        return True

    def intercept(self, node, dst, msg, now):
        if not isinstance(msg, Commit) or node.cfg.f_prime == 0:
            return [(dst, msg, None)]
        got = dict(self._seen.get((msg.seq, msg.view, msg.digest), {}))
        own = Response(msg.seq, msg.view, msg.digest, node.id, msg.checkpoint)
        got[node.id] = node.signer.sign(own.signing_digest, node.id)
        sigs = [got[r] for r in sorted(got)][: 2 * node.cfg.f_prime]
        weak = replace(msg, aggregate=node.scheme.aggregate(sigs), sig=None)
        return [(dst, _resign(node, weak), None)]


@dataclass
class ComplaintSpammer(Strategy):
    """Piggybacks ``copies`` unjustified Complains on every Response it sends."""

    copies: int = 3
    name = "complaint_spammer"

    def intercept(self, node, dst, msg, now):
        out = [(dst, msg, None)]
        if isinstance(msg, Response):
            c = _resign(node, Complain(node.last_committed, node.view, node.last_digest, node.id))
            for m in window_members(1, node.cfg):
                if m != node.id:
                    out.extend((m, c, None) for _ in range(self.copies))
        return out


@dataclass
class FaultyWindowNode(Strategy):
    """Ignores every complaint addressed to it."""

    name = "faulty_window_node"

    def admit(self, node, src, msg, now):
        return not isinstance(msg, Complain)


@dataclass
class CrashAt(Strategy):
    time: int = 0
    name = "crash_at"

    def admit(self, node, src, msg, now):
        return now < self.time

    def intercept(self, node, dst, msg, now):
        return [] if now >= self.time else [(dst, msg, None)]

    def timer_allowed(self, node, name, now):
        return now < self.time


@dataclass
class DelayMax(Strategy):
    """Delivers everything it sends as late as the delay model allows."""

    name = "delay_max"

    def intercept(self, node, dst, msg, now):
        return [(dst, msg, "max")]


@dataclass
class StaleViewChange(Strategy):
    """Claims to hold nothing in its ViewChange, forcing a download from genesis."""

    name = "stale_view_change"

    def intercept(self, node, dst, msg, now):
        if isinstance(msg, ViewChange):
            msg = _resign(node, replace(msg, latest_seq=0, latest_digest=bytes(32), cert=None,
                                        pending=None, sig=None))
        return [(dst, msg, None)]


STRATEGIES = {cls.name: cls for cls in (SilentPrimary, SelectiveWithhold, EquivocatingPrimary,
                                        UnderSignedCommitter, ComplaintSpammer, FaultyWindowNode,
                                        CrashAt, DelayMax, StaleViewChange)}


def build_strategy(kind: str, params: Optional[dict] = None) -> Strategy:
    """Instantiate a strategy by name; raises KeyError/TypeError on bad input."""
    cls = STRATEGIES[kind]
    params = dict(params or {})
    if "victims" in params:
        params["victims"] = frozenset(params["victims"])
    return cls(**params)
