import pytest
from hypothesis import given, strategies as st

from musch.crypto import ZERO_DIGEST, hash_bytes
from musch.types import (
    Block, ConfigError, ProtocolConfig, Transaction, block_digest, chain_hash, next_primary, quorum,
    weak_quorum,
)


@pytest.mark.parametrize("fp,n,q", [(1, 4, 3), (4, 13, 9), (33, 100, 67)])
def test_quorum(fp, n, q):
    cfg = ProtocolConfig(n=n, f_prime=fp)
    assert quorum(cfg) == q
    assert weak_quorum(cfg) == fp + 1


@pytest.mark.parametrize("view,primary", [(0, 1), (5, 2), (4, 1), (3, 4)])
def test_next_primary(view, primary):
    assert next_primary(view, ProtocolConfig.for_faults(1)) == primary


def test_next_primary_rejects_negative_view():
    with pytest.raises(ValueError):
        next_primary(-1, ProtocolConfig.for_faults(1))


def test_n_must_match_f_prime():
    with pytest.raises(ConfigError) as e:
        ProtocolConfig(n=12, f_prime=4)
    assert e.value.field == "n"
    assert "3*f_prime+1" in str(e.value)


@pytest.mark.parametrize("kw,field", [
    ({"T": 0}, "T"),
    ({"checkpoint_interval": 0}, "checkpoint_interval"),
    ({"checkpoint_interval": 10, "watermark_span_k": 5}, "watermark_span_k"),
    ({"gst": -1}, "gst"),
])
def test_config_field_errors(kw, field):
    with pytest.raises(ConfigError) as e:
        ProtocolConfig.for_faults(1, **kw)
    assert e.value.field == field


def test_epoch_timeout_is_three_T():
    assert ProtocolConfig.for_faults(1, T=7).epoch_timeout == 21


t1 = Transaction("c1", 1, b"a")
t2 = Transaction("c2", 1, b"b")


def test_block_digest_stable_and_order_sensitive():
    assert block_digest([]) == block_digest(())
    assert block_digest([t1, t2]) == block_digest([t1, t2])
    assert block_digest([t1, t2]) != block_digest([t2, t1])


def test_genesis_history_hash():
    b = Block.build(1, 0, [t1])
    assert b.history_hash == hash_bytes(ZERO_DIGEST, b.digest)
    assert b.follows(ZERO_DIGEST)
    assert b.digest_valid()


def test_tampered_block_detected():
    b = Block.build(1, 0, [t1])
    forged = Block(1, 0, b.digest, b.history_hash, (t2,))
    assert not forged.digest_valid()


def test_block_clients_distinct_in_order():
    b = Block.build(1, 0, [t2, t1, Transaction("c2", 2)])
    assert b.clients() == ["c2", "c1"]


txns = st.lists(st.builds(Transaction, st.sampled_from(["c1", "c2", "c3"]), st.integers(0, 50),
                          st.binary(max_size=8)), max_size=4)


@given(st.lists(txns, min_size=1, max_size=6))
def test_history_chain_links(batches):
    prev = ZERO_DIGEST
    for s, batch in enumerate(batches, start=1):
        b = Block.build(s, 0, batch, prev)
        assert b.history_hash == chain_hash(prev, block_digest(batch))
        assert b.follows(prev)
        prev = b.history_hash
