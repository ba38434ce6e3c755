"""Deterministic discrete-event network simulator, message ledger and monitors.

Events are ordered by ``(tick, phase, insertion counter)``; at equal ticks
deliveries run before client submissions, which run before timers.  Links
are FIFO per (src, dst): a message never overtakes an earlier one on the
same link.  All randomness flows from one seeded ``random.Random``.
"""

from __future__ import annotations

import heapq
import json
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .adversary import Strategy, build_strategy
from .client import Client
from .crypto import MockScheme, Signer
from .replica import CancelTimer, Note, Phase, Replica, Send, SetTimer
from .types import (
    Catchup, ClientRequest, Commit, Complain, ComplainSet, Confirm, Forward, NewView, Order, Reply,
    Response, Transaction, ViewChange, ViewConfirm, Ack,
)

PH_DELIVER, PH_SUBMIT, PH_TIMER = 0, 1, 2

REPLICA_CATEGORIES = ("order", "response", "commit", "complain", "complain_set", "catchup",
                      "viewchange", "newview", "confirm", "viewconfirm")
CLIENT_CATEGORIES = ("client", "reply", "ack")
VIEW_CATEGORIES = ("complain_set", "viewchange", "newview", "confirm", "viewconfirm")


class DelayModel:
    """Partial synchrony: uniform in [1, T] after GST, up to ``pre_gst_max`` before."""

    def __init__(self, rng: random.Random, T: int, gst: int, pre_gst_max: int, pre_gst_drop: float = 0.0):
        self.rng, self.T, self.gst = rng, T, gst
        self.pre_gst_max = max(pre_gst_max, T)
        self.pre_gst_drop = pre_gst_drop

    def delay(self, now: int, mode=None) -> Optional[int]:
        """Ticks until delivery, or None when the message is lost before GST."""
        if now < self.gst:
            if self.pre_gst_drop and self.rng.random() < self.pre_gst_drop:
                return None
            return self.pre_gst_max if mode == "max" else self.rng.randint(1, self.pre_gst_max)
        return self.T if mode == "max" else self.rng.randint(1, self.T)


def bucket_of(msg, vc_view: Optional[int] = None) -> tuple:
    """Accounting bucket of a delivered message.

    ``vc_view`` is the sender's view when it sent ``msg`` in the middle of a
    view change, else None.
    """
    cat = msg.CATEGORY
    if cat in ("order", "response", "commit"):
        return ("epoch", msg.seq)
    if cat == "complain":
        return ("epoch", msg.last_committed_seq + 1)
    if cat == "catchup":
        if vc_view is not None:
            return ("view", vc_view)
        return ("epoch", msg.entries[0][0].seq if msg.entries else 0)
    if cat == "complain_set":
        return ("view", msg.view + 1)  # the view change it triggers
    if cat in VIEW_CATEGORIES:
        return ("view", msg.view)
    if cat == "forward":
        return ("client", msg.txn.key)
    return ("txn", None)


def txn_keys_of(msg) -> list:
    if isinstance(msg, ClientRequest):
        return [msg.txn.key]
    if isinstance(msg, Ack):
        return [msg.txn_key]
    if isinstance(msg, Reply):
        return [(msg.client, t) for t in msg.timestamps]
    return []


class MessageLedger:
    def __init__(self):
        self.buckets: dict = defaultdict(Counter)  # bucket -> Counter[(category, effective)]
        self.txn_traffic: Counter = Counter()  # txn key -> client<->replica deliveries
        self.sent: Counter = Counter()
        self.injected: Counter = Counter()
        self.delivered: Counter = Counter()
        self.dropped_adv: Counter = Counter()
        self.dropped_gst: Counter = Counter()
        self.in_flight: Counter = Counter()

    def record(self, bucket, category: str, effective: bool) -> None:
        self.buckets[bucket][(category, effective)] += 1

    def effective(self, bucket, categories: Iterable[str] = REPLICA_CATEGORIES) -> int:
        c = self.buckets.get(bucket, Counter())
        return sum(c[(cat, True)] for cat in categories)

    def total(self, bucket, effective: Optional[bool] = None) -> int:
        c = self.buckets.get(bucket, Counter())
        return sum(v for (cat, eff), v in c.items() if effective is None or eff == effective)

    def epochs(self) -> list[int]:
        return sorted(b[1] for b in self.buckets if b[0] == "epoch")

    def views(self) -> list[int]:
        return sorted(b[1] for b in self.buckets if b[0] == "view")

    def conservation(self) -> dict:
        """Per-category imbalance of sent + injected vs delivered + dropped + in flight."""
        cats = set(self.sent) | set(self.injected) | set(self.delivered) | set(self.dropped_adv) \
            | set(self.dropped_gst) | set(self.in_flight)
        bad = {}
        for c in sorted(cats):
            lhs = self.sent[c] + self.injected[c]
            rhs = self.delivered[c] + self.dropped_adv[c] + self.dropped_gst[c] + self.in_flight[c]
            if lhs != rhs:
                bad[c] = (lhs, rhs)
        return bad


def check_epoch_bound(ledger: MessageLedger, epoch: int, f: int, n: int) -> bool:
    return ledger.effective(("epoch", epoch)) <= (5 * f + 4) * n


def view_change_bound(f: int, n: int, e: int, f_prime: int) -> int:
    return f * n + 3 * n + 6 * e * f_prime


# ---------------------------------------------------------------------- trace
@dataclass
class Record:
    tick: int
    kind: str
    src: str
    dst: str
    category: str
    eff: str
    detail: str

    def line(self) -> str:
        return " | ".join((str(self.tick), self.kind, self.src, self.dst, self.category, self.eff, self.detail))

    @classmethod
    def parse(cls, line: str) -> "Record":
        parts = line.rstrip("\n").split(" | ")
        if len(parts) != 7:
            raise ValueError(f"malformed trace line: {line!r}")
        return cls(int(parts[0]), *parts[1:])


@dataclass
class Trace:
    header: dict
    records: list = field(default_factory=list)
    events: list = field(default_factory=list)  # in-memory structured deliveries for path analysis

    def add(self, *fields) -> None:
        self.records.append(Record(*fields))

    def text(self) -> str:
        head = "# scenario " + json.dumps(self.header, sort_keys=True, separators=(",", ":"))
        return "\n".join([head] + [r.line() for r in self.records]) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.text())

    @classmethod
    def parse(cls, text: str) -> "Trace":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# scenario "):
            raise ValueError("trace has no scenario header")
        header = json.loads(lines[0][len("# scenario "):])
        return cls(header, [Record.parse(l) for l in lines[1:] if l.strip()])

    @classmethod
    def read(cls, path) -> "Trace":
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read())


def _short(b: bytes) -> str:
    return b[:8].hex()


# ---------------------------------------------------------------------- monitors
@dataclass
class Verdict:
    name: str
    ok: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}" + (f": {self.detail}" if self.detail else "")


def safety_monitor(trace: Trace, correct: Optional[set] = None) -> Verdict:
    """Agreement, gap-free increasing commits, and common-prefix consistency."""
    if correct is None:
        corrupted = {a["node"] for a in trace.header.get("adversary", [])}
        correct = {str(r) for r in range(1, trace.header.get("protocol", {}).get("n", 0) + 1)} - \
            {str(c) for c in corrupted}
    by_seq: dict = {}
    last: dict = {}
    for r in trace.records:
        if r.kind != "commit" or r.src not in correct:
            continue
        seq_s, digest, history = r.detail.split(":")
        seq = int(seq_s)
        prev = last.get(r.src, 0)
        if seq != prev + 1:
            return Verdict("safety", False, f"replica {r.src} committed seq {seq} after {prev}")
        last[r.src] = seq
        seen = by_seq.setdefault(seq, (digest, history, r.src))
        if seen[0] != digest:
            return Verdict("safety", False, f"seq {seq}: replica {seen[2]} committed {seen[0]}, "
                                            f"replica {r.src} committed {digest}")
        if seen[1] != history:
            return Verdict("safety", False, f"seq {seq}: prefix diverges between replicas {seen[2]} "
                                            f"and {r.src} (history {seen[1]} vs {history})")
    return Verdict("safety", True, f"{len(by_seq)} heights agreed")


def conservation_from_trace(trace: Trace) -> Verdict:
    seen = Counter()
    tallies = {}
    for r in trace.records:
        if r.kind == "deliver":
            seen[(r.category, "dlv")] += 1
        elif r.kind == "drop":
            seen[(r.category, r.eff)] += 1
        elif r.kind == "tally":
            tallies[r.category] = dict(kv.split("=") for kv in r.eff.split(","))
    for cat, t in sorted(tallies.items()):
        t = {k: int(v) for k, v in t.items()}
        if seen[(cat, "dlv")] != t["dlv"] or seen[(cat, "adv")] != t["adv"] or seen[(cat, "gst")] != t["gst"]:
            return Verdict("conservation", False, f"{cat}: trace disagrees with tally")
        if t["sent"] + t["inj"] != t["dlv"] + t["adv"] + t["gst"] + t["fly"]:
            return Verdict("conservation", False, f"{cat}: sent {t['sent']}+{t['inj']} != accounted")
    return Verdict("conservation", True, f"{len(tallies)} categories balanced")


# ---------------------------------------------------------------------- simulator
@dataclass
class Delivery:
    id: int
    tick: int
    src: object
    dst: object
    msg: object
    effective: bool = False


class Simulator:
    def __init__(self, scenario):
        self.sc = scenario
        cfg = self.cfg = scenario.cfg
        self.rng = random.Random(scenario.seed)
        self.delays = DelayModel(self.rng, cfg.T, cfg.gst, scenario.pre_gst_max, scenario.pre_gst_drop)
        self.client_ids = [f"c{i}" for i in range(1, scenario.clients + 1)]
        self.scheme = MockScheme(scenario.seed, list(cfg.replica_ids) + self.client_ids)
        self.replicas = {r: Replica(r, cfg, self.scheme, Signer(self.scheme, [r])) for r in cfg.replica_ids}
        self.clients = {c: Client(c, cfg, self.scheme, Signer(self.scheme, [c])) for c in self.client_ids}
        self.strategies: dict[int, Strategy] = {}
        for a in scenario.adversary:
            self.strategies[a["node"]] = build_strategy(a["strategy"], a.get("params"))
        self.correct = [r for r in cfg.replica_ids if r not in self.strategies]
        self.queue: list = []
        self.counter = 0
        self.now = 0
        self.timers: dict = {}
        self.link_last: dict = {}
        self.ledger = MessageLedger()
        self.trace = Trace(scenario.to_dict())
        self.submitted: dict = {}
        self.committed: dict = defaultdict(list)  # replica -> [(seq, block)]
        self.notes: list = []
        self.last_popped = (-1, -1, -1)
        self.order_violation = False

    # -- queue
    def _push(self, at: int, phase: int, item) -> None:
        self.counter += 1
        heapq.heappush(self.queue, (at, phase, self.counter, item))

    def _nid(self, x) -> str:
        return str(x)

    # -- effects
    def _apply(self, node_id, effects) -> None:
        node = self.replicas.get(node_id) or self.clients.get(node_id)
        strat = self.strategies.get(node_id)
        for eff in effects:
            if isinstance(eff, Send):
                self._send(node_id, node, strat, eff)
            elif isinstance(eff, SetTimer):
                self.counter += 1
                token = self.counter
                self.timers[(node_id, eff.name)] = token
                heapq.heappush(self.queue, (max(eff.at, self.now), PH_TIMER, token, ("timer", node_id, eff.name, token)))
            elif isinstance(eff, CancelTimer):
                self.timers.pop((node_id, eff.name), None)
            elif isinstance(eff, Note):
                self._on_note(node_id, node, eff)

    def _on_note(self, node_id, node, note: Note) -> None:
        self.notes.append((self.now, node_id, note.kind, note.detail))
        if note.kind == "commit":
            seq, digest, history = note.detail
            self.trace.add(self.now, "commit", self._nid(node_id), "-", "block", "-",
                           f"{seq}:{digest[:16]}:{history[:16]}")
            self.committed[node_id].append((seq, node.chain[seq][0].block))
        else:
            self.trace.add(self.now, "note", self._nid(node_id), "-", note.kind, "-",
                           ",".join(str(d) for d in note.detail) or "-")

    def _send(self, src, node, strat, eff: Send) -> None:
        msg = eff.msg
        cat = msg.CATEGORY
        self.ledger.sent[cat] += 1
        vc_view = node.view if eff.during_vc else None
        outs = strat.intercept(node, eff.dst, msg, self.now) if strat is not None else [(eff.dst, msg, None)]
        if not outs:
            self.ledger.dropped_adv[cat] += 1
            self.trace.add(self.now, "drop", self._nid(src), self._nid(eff.dst), cat, "adv",
                           _short(msg.signing_digest))
            return
        for i, (dst, m, mode) in enumerate(outs):
            if i > 0:
                self.ledger.injected[m.CATEGORY] += 1
            if i == 0 and m.CATEGORY != cat:
                # category rewritten: re-attribute the original send
                self.ledger.sent[cat] -= 1
                self.ledger.sent[m.CATEGORY] += 1
                cat = m.CATEGORY
            if dst not in self.replicas and dst not in self.clients:
                self.ledger.dropped_adv[m.CATEGORY] += 1
                self.trace.add(self.now, "drop", self._nid(src), self._nid(dst), m.CATEGORY, "adv",
                               _short(m.signing_digest))
                continue
            d = self.delays.delay(self.now, mode)
            if d is None:
                self.ledger.dropped_gst[m.CATEGORY] += 1
                self.trace.add(self.now, "drop", self._nid(src), self._nid(dst), m.CATEGORY, "gst",
                               _short(m.signing_digest))
                continue
            at = max(self.now + d, self.link_last.get((src, dst), 0))
            self.link_last[(src, dst)] = at
            self.ledger.in_flight[m.CATEGORY] += 1
            self._push(at, PH_DELIVER, ("deliver", src, dst, m, vc_view))

    # -- event handlers
    def _deliver(self, src, dst, msg, vc_view) -> None:
        cat = msg.CATEGORY
        self.ledger.in_flight[cat] -= 1
        self.ledger.delivered[cat] += 1
        strat = self.strategies.get(dst)
        if dst in self.replicas:
            node = self.replicas[dst]
            if strat is not None and not strat.admit(node, src, msg, self.now):
                effective = False
            else:
                effective = node.receive(src, msg, self.now)
        else:
            node = self.clients[dst]
            effective = node.receive(src, msg, self.now)
        if cat in CLIENT_CATEGORIES:
            for k in txn_keys_of(msg):
                self.ledger.txn_traffic[k] += 1
        else:
            self.ledger.record(bucket_of(msg, vc_view), cat, effective)
        self.trace.add(self.now, "deliver", self._nid(src), self._nid(dst), cat,
                       "eff" if effective else "ineff", _short(msg.signing_digest))
        self.trace.events.append(Delivery(len(self.trace.events), self.now, src, dst, msg, effective))
        self._apply(dst, node.drain())

    def _timer(self, node_id, name, token) -> None:
        if self.timers.get((node_id, name)) != token:
            return
        del self.timers[(node_id, name)]
        strat = self.strategies.get(node_id)
        node = self.replicas.get(node_id) or self.clients.get(node_id)
        if strat is not None and not strat.timer_allowed(node, name, self.now):
            return
        self.trace.add(self.now, "timer", self._nid(node_id), self._nid(node_id), name.split(":")[0], "-", name)
        node.on_timer(name, self.now)
        self._apply(node_id, node.drain())

    def _submit(self, cid, ts) -> None:
        txn = Transaction(cid, ts, f"{cid}/{ts}".encode())
        self.submitted[txn.key] = self.now
        self.trace.add(self.now, "submit", cid, "-", "client", "-", f"{cid}:{ts}")
        client = self.clients[cid]
        client.submit(txn, self.now)
        self._apply(cid, client.drain())

    # -- driver
    def heights(self) -> dict:
        return {r: self.replicas[r].last_committed for r in self.correct}

    def done(self) -> bool:
        if len(self.submitted) < self.sc.total_txns:
            return False
        if self.correct and max(self.heights().values()) < self.sc.target_height:
            return False
        return all(p.completed for c in self.clients.values() for p in c.pending.values())

    def run(self, max_ticks: Optional[int] = None) -> "RunResult":
        cap = self.sc.max_ticks if max_ticks is None else max_ticks
        for cid, ticks in zip(self.client_ids, self.sc.schedule()):
            for i, t in enumerate(ticks, start=1):
                self._push(t, PH_SUBMIT, ("submit", cid, i))
        for r in sorted(self.replicas):
            self.replicas[r].start(0)
            self._apply(r, self.replicas[r].drain())
        finished = False
        while self.queue:
            at, phase, cnt, item = self.queue[0]
            if at > cap:
                break
            heapq.heappop(self.queue)
            if (at, phase, cnt) < self.last_popped:
                self.order_violation = True
            self.last_popped = (at, phase, cnt)
            self.now = at
            kind = item[0]
            if kind == "deliver":
                self._deliver(*item[1:])
            elif kind == "timer":
                self._timer(*item[1:])
            else:
                self._submit(*item[1:])
            if self.done():
                finished = True
                break
        self._tally()
        return RunResult(self, finished)

    def _tally(self) -> None:
        L = self.ledger
        cats = sorted(set(L.sent) | set(L.injected) | set(L.delivered))
        for c in cats:
            self.trace.add(self.now, "tally", "-", "-", c,
                           f"sent={L.sent[c]},inj={L.injected[c]},dlv={L.delivered[c]},"
                           f"adv={L.dropped_adv[c]},gst={L.dropped_gst[c]},fly={L.in_flight[c]}", "-")


# ---------------------------------------------------------------------- results and verdicts
def critical_path(result: "RunResult", txn_key) -> int:
    """Hops from the request to the first completing reply (rule-based over the delivery log)."""
    client = result.sim.clients[txn_key[0]]
    p = client.pending.get(txn_key)
    if p is None or not p.completed:
        raise ValueError(f"transaction {txn_key} did not complete")
    events = result.sim.trace.events
    if p.via == "ack":
        return 2
    # the committed block carrying the txn, as first ordered
    order = next((e.msg for e in events if isinstance(e.msg, Order) and
                  any(t.key == txn_key for t in e.msg.block.txns)), None)
    if order is None:
        raise ValueError(f"no Order carries {txn_key}")
    primary = order.primary
    sent_at = next(e.tick for e in events if e.msg is order)
    hop = None
    for e in events:
        if e.tick > sent_at:
            break
        if e.dst == primary and isinstance(e.msg, ClientRequest) and e.msg.txn.key == txn_key:
            hop = 1
            break
        if e.dst == primary and isinstance(e.msg, Forward) and e.msg.txn.key == txn_key and hop is None:
            hop = 2
    if hop is None:
        hop = 2  # learned through a carried or backlogged block
    # every Reply for the committed block counts, whether or not it beat the client's
    # threshold: which of them lands first is a delay race, not protocol structure
    done = {key for key, got in p.replies.items() if len(got) > client.cfg.f_prime}
    replies = [e.msg for e in events if isinstance(e.msg, Reply) and e.dst == txn_key[0]
               and txn_key[1] in e.msg.timestamps and e.msg.match_key in done]
    # the primary replies as it aggregates (one hop after the Responses); others after the Commit
    lengths = [hop + 3 if r.replica == primary else hop + 4 for r in replies if r.view == order.view]
    return min(lengths) if lengths else hop + 4


@dataclass
class RunResult:
    sim: Simulator
    finished: bool

    @property
    def trace(self) -> Trace:
        return self.sim.trace

    @property
    def ledger(self) -> MessageLedger:
        return self.sim.ledger

    @property
    def f(self) -> int:
        return len(self.sim.strategies)

    def max_height(self) -> int:
        h = self.sim.heights()
        return max(h.values()) if h else 0

    def complete_epochs(self) -> list[int]:
        top = self.max_height()
        return [e for e in self.ledger.epochs() if 1 <= e < top]

    def view_changes(self) -> list[tuple]:
        """(view, e) for each view whose new primary broadcast Q."""
        out = {}
        for tick, node, kind, detail in self.sim.notes:
            if kind == "new_view":
                v, s, e = detail
                out[v] = max(out.get(v, 0), e)
        return sorted(out.items())

    def view_change_counts(self) -> dict:
        return {v: self.ledger.effective(("view", v)) for v in self.ledger.views()}

    def client_traffic(self) -> dict:
        done = {k for c in self.sim.clients.values() for k, p in c.pending.items() if p.completed}
        return {k: v for k, v in self.ledger.txn_traffic.items() if k in done}

    def notes(self, kind: str, node=None) -> list:
        return [(t, n, d) for t, n, k, d in self.sim.notes if k == kind and (node is None or n == node)]

    def verdicts(self) -> list[Verdict]:
        sim, cfg = self.sim, self.sim.cfg
        checks = set(sim.sc.checks)
        out = [safety_monitor(self.trace, {str(r) for r in sim.correct})]
        pending = [k for c in sim.clients.values() for k, p in c.pending.items() if not p.completed]
        missing = sim.sc.total_txns - len(sim.submitted)
        live_ok = self.finished and not pending and missing == 0
        out.append(Verdict("liveness", live_ok,
                           f"height {self.max_height()}/{sim.sc.target_height}, "
                           f"{len(pending) + missing} incomplete, stopped at tick {sim.now}"))
        out.append(self._validity())
        bad = self.ledger.conservation()
        out.append(Verdict("conservation", not bad and not sim.order_violation,
                           "balanced" if not bad else f"imbalance {bad}"))
        n, f = cfg.n, self.f
        if "client_bound" in checks:
            worst = max(self.client_traffic().values(), default=0)
            out.append(Verdict("client_bound", worst <= 4 * n, f"max {worst} <= {4 * n}"))
        if "epoch_bound" in checks:
            epochs = self.complete_epochs()
            bad_e = [e for e in epochs if not check_epoch_bound(self.ledger, e, f, n)]
            worst = max((self.ledger.effective(("epoch", e)) for e in epochs), default=0)
            out.append(Verdict("epoch_bound", not bad_e and bool(epochs),
                               f"{len(epochs)} epochs, max {worst} <= {(5 * f + 4) * n}"
                               + (f", violations at {bad_e[:5]}" if bad_e else "")))
        if "view_change_bound" in checks:
            vcs = self.view_changes()
            counts = self.view_change_counts()
            viol = [(v, counts.get(v, 0), view_change_bound(f, n, e, cfg.f_prime)) for v, e in vcs
                    if counts.get(v, 0) > view_change_bound(f, n, e, cfg.f_prime)]
            out.append(Verdict("view_change_bound", bool(vcs) and not viol,
                               f"views {[(v, counts.get(v, 0), e) for v, e in vcs]}" +
                               (f", violations {viol}" if viol else "")))
        if "critical_path" in checks:
            paths = [critical_path(self, k) for c in sim.clients.values() for k, p in c.pending.items()
                     if p.completed and p.via == "reply"]
            out.append(Verdict("critical_path", bool(paths) and all(x == 4 for x in paths),
                               f"hops {sorted(set(paths))}"))
        return out

    def _validity(self) -> Verdict:
        sim = self.sim
        submitted = set(sim.submitted)
        for r, blocks in sim.committed.items():
            if r not in sim.correct:
                continue
            seen = set()
            for seq, b in blocks:
                for t in b.txns:
                    if t.key not in submitted:
                        return Verdict("validity", False, f"replica {r} committed unsubmitted {t.key} at {seq}")
                    if t.key in seen:
                        return Verdict("validity", False, f"replica {r} committed {t.key} twice")
                    seen.add(t.key)
        return Verdict("validity", True)

    def ok(self) -> bool:
        return all(v.ok for v in self.verdicts())

    def report(self) -> str:
        lines = [f"scenario {self.sim.sc.name} seed {self.sim.sc.seed}"]
        lines += [v.line() for v in self.verdicts()]
        return "\n".join(lines) + "\n"


def run(scenario, max_ticks: Optional[int] = None) -> RunResult:
    return Simulator(scenario).run(max_ticks)
