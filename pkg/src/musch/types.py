"""Domain types shared by every module: configuration, blocks and messages."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional

from .crypto import ZERO_DIGEST, AggregateSignature, Signature, digest_of, hash_bytes
from .encoding import register


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    f_prime: int
    T: int = 10
    checkpoint_interval: int = 200
    watermark_span_k: int = 400
    gst: int = 0
    initial_view: int = 0

    def __post_init__(self):
        if self.f_prime < 0:
            raise ConfigError("f_prime", "must be non-negative")
        if self.n != 3 * self.f_prime + 1:
            raise ConfigError("n", f"n must equal 3*f_prime+1 (= {3 * self.f_prime + 1} for "
                                   f"f_prime={self.f_prime}), got n={self.n}")
        if self.T <= 0:
            raise ConfigError("T", "must be positive")
        if self.checkpoint_interval <= 0:
            raise ConfigError("checkpoint_interval", "must be positive")
        if self.watermark_span_k < self.checkpoint_interval:
            raise ConfigError("watermark_span_k", "must be >= checkpoint_interval")
        if self.gst < 0:
            raise ConfigError("gst", "must be non-negative")
        if self.initial_view < 0:
            raise ConfigError("initial_view", "must be non-negative")

    @classmethod
    def for_faults(cls, f_prime: int, **kw) -> "ProtocolConfig":
        return cls(n=3 * f_prime + 1, f_prime=f_prime, **kw)

    @property
    def replica_ids(self) -> range:
        return range(1, self.n + 1)

    # epoch timers
    @property
    def order_timeout(self) -> int:
        return self.T

    @property
    def commit_timeout(self) -> int:
        return 2 * self.T

    @property
    def epoch_timeout(self) -> int:
        return self.order_timeout + self.commit_timeout


def quorum(cfg: ProtocolConfig) -> int:
    return 2 * cfg.f_prime + 1


def weak_quorum(cfg: ProtocolConfig) -> int:
    return cfg.f_prime + 1


def next_primary(view: int, cfg: ProtocolConfig) -> int:
    """Primary of ``view``; ids run 1..n so view residue r maps to id r+1."""
    if view < 0:
        raise ValueError("view must be non-negative")
    return view % cfg.n + 1


@register
@dataclass(frozen=True)
class Transaction:
    client: str
    timestamp: int
    payload: bytes = b""

    @property
    def key(self) -> tuple[str, int]:
        return (self.client, self.timestamp)


def block_digest(txns) -> bytes:
    return digest_of(tuple(txns))


def chain_hash(prev_history: bytes, digest: bytes) -> bytes:
    return hash_bytes(prev_history, digest)


@register
@dataclass(frozen=True)
class Block:
    seq: int
    view: int
    digest: bytes
    history_hash: bytes
    txns: tuple = ()

    @classmethod
    def build(cls, seq: int, view: int, txns, prev_history: bytes = ZERO_DIGEST) -> "Block":
        txns = tuple(txns)
        d = block_digest(txns)
        return cls(seq, view, d, chain_hash(prev_history, d), txns)

    def digest_valid(self) -> bool:
        return self.digest == block_digest(self.txns)

    def follows(self, prev_history: bytes) -> bool:
        return self.history_hash == chain_hash(prev_history, self.digest)

    def clients(self) -> list[str]:
        seen = []
        for t in self.txns:
            if t.client not in seen:
                seen.append(t.client)
        return seen


class Message:
    """Mixin for signed wire messages.

    Subclasses are frozen dataclasses whose last field is ``sig``; the
    signed digest covers every other field.
    """

    CATEGORY = ""
    SIGNER_FIELD = ""

    @cached_property
    def signing_digest(self) -> bytes:
        return digest_of(replace(self, sig=None)) if self.sig is not None else digest_of(self)

    @property
    def signer(self):
        return getattr(self, self.SIGNER_FIELD)

    def signed(self, sig: Signature):
        return replace(self, sig=sig)


@register
class ProofKind(enum.Enum):
    CONFLICTING_ORDERS = "conflicting_orders"
    UNDER_SIGNED_COMMIT = "under_signed_commit"
    INVALID_BLOCK = "invalid_block"


@register
@dataclass(frozen=True)
class Order(Message):
    block: Block
    primary: int
    sig: Optional[Signature] = None
    CATEGORY = "order"
    SIGNER_FIELD = "primary"

    @property
    def seq(self) -> int:
        return self.block.seq

    @property
    def view(self) -> int:
        return self.block.view


@register
@dataclass(frozen=True)
class Response(Message):
    seq: int
    view: int
    digest: bytes
    replica: int
    checkpoint: int = 0  # seq when this block is a checkpoint height, else 0
    sig: Optional[Signature] = None
    CATEGORY = "response"
    SIGNER_FIELD = "replica"


@register
@dataclass(frozen=True)
class Commit(Message):
    seq: int
    view: int
    digest: bytes
    aggregate: AggregateSignature
    checkpoint: int
    primary: int
    sig: Optional[Signature] = None
    CATEGORY = "commit"
    SIGNER_FIELD = "primary"

    def response_digests(self) -> list[bytes]:
        """Digests of the Responses the aggregate claims to cover, aligned with its signers."""
        return [Response(self.seq, self.view, self.digest, r, self.checkpoint).signing_digest
                for r in self.aggregate.signers]


@register
@dataclass(frozen=True)
class Reply(Message):
    seq: int
    view: int
    client: str
    result: bytes
    timestamps: tuple
    replica: int
    sig: Optional[Signature] = None
    CATEGORY = "reply"
    SIGNER_FIELD = "replica"

    @property
    def match_key(self):
        return (self.seq, self.view, self.result)


@register
@dataclass(frozen=True)
class Proof:
    kind: ProofKind
    orders: tuple = ()
    commit: Optional[Commit] = None


@register
@dataclass(frozen=True)
class Complain(Message):
    last_committed_seq: int
    view: int
    last_digest: bytes
    complainer: int
    proof: Optional[Proof] = None
    sig: Optional[Signature] = None
    CATEGORY = "complain"
    SIGNER_FIELD = "complainer"


@register
@dataclass(frozen=True)
class ComplainSet(Message):
    view: int
    complaints: tuple
    sender: int
    sig: Optional[Signature] = None
    CATEGORY = "complain_set"
    SIGNER_FIELD = "sender"


@register
@dataclass(frozen=True)
class ViewChange(Message):
    view: int  # the view being entered
    trigger: Optional[ComplainSet]
    latest_seq: int
    latest_digest: bytes
    cert: Optional[tuple]  # (Order, Commit) of the latest committed block
    pending: Optional[Order]  # responded-to but uncommitted block at latest_seq + 1
    replica: int
    sig: Optional[Signature] = None
    CATEGORY = "viewchange"
    SIGNER_FIELD = "replica"


@register
@dataclass(frozen=True)
class NewView(Message):
    view: int
    q: tuple
    aggregate: AggregateSignature
    primary: int
    sig: Optional[Signature] = None
    CATEGORY = "newview"
    SIGNER_FIELD = "primary"


@register
@dataclass(frozen=True)
class Confirm(Message):
    view: int
    seq: int
    replica: int
    sig: Optional[Signature] = None
    CATEGORY = "confirm"
    SIGNER_FIELD = "replica"


@register
@dataclass(frozen=True)
class ViewConfirm(Message):
    view: int
    seq: int
    confirms: tuple
    aggregate: AggregateSignature
    primary: int
    sig: Optional[Signature] = None
    CATEGORY = "viewconfirm"
    SIGNER_FIELD = "primary"


@register
@dataclass(frozen=True)
class Catchup(Message):
    entries: tuple  # ((Order, Commit), ...) in ascending seq
    sender: int
    sig: Optional[Signature] = None
    CATEGORY = "catchup"
    SIGNER_FIELD = "sender"


@register
@dataclass(frozen=True)
class ClientRequest(Message):
    txn: Transaction
    sig: Optional[Signature] = None
    CATEGORY = "client"

    @property
    def signer(self):
        return self.txn.client


@register
@dataclass(frozen=True)
class Forward(Message):
    txn: Transaction
    forwarder: int
    sig: Optional[Signature] = None
    CATEGORY = "forward"
    SIGNER_FIELD = "forwarder"


@register
@dataclass(frozen=True)
class Ack(Message):
    client: str
    timestamp: int
    replica: int
    sig: Optional[Signature] = None
    CATEGORY = "ack"
    SIGNER_FIELD = "replica"

    @property
    def txn_key(self):
        return (self.client, self.timestamp)


MESSAGE_TYPES = (Order, Response, Commit, Reply, Complain, ComplainSet, ViewChange,
                 NewView, Confirm, ViewConfirm, Catchup, ClientRequest, Forward, Ack)

CATEGORIES = tuple(m.CATEGORY for m in MESSAGE_TYPES)
