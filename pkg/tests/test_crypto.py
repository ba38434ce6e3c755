import pytest

from musch.crypto import CryptoError, MockScheme, Signer, digest_of

IDS = [1, 2, 3, 4, "c1"]


@pytest.fixture
def scheme():
    return MockScheme(7, IDS)


def test_sign_verify(scheme):
    d = digest_of("hello")
    s = scheme.sign(d, 1)
    assert scheme.verify(s, d, 1)
    assert not scheme.verify(s, d, 2)
    assert not scheme.verify(s, digest_of("hellO"), 1)
    assert not scheme.verify(None, d, 1)


def test_seed_separates_keys(scheme):
    d = digest_of("x")
    assert not MockScheme(8, IDS).verify(scheme.sign(d, 1), d, 1)


def test_signer_only_signs_owned(scheme):
    with pytest.raises(CryptoError):
        Signer(scheme, [1]).sign(digest_of("x"), 2)


def test_aggregate_quorum(scheme):
    digests = {r: digest_of(("resp", r)) for r in (1, 2, 3)}
    agg = scheme.aggregate(scheme.sign(digests[r], r) for r in (3, 1, 2))
    assert len(agg) == 3
    assert scheme.verify_aggregate(agg, [digests[r] for r in (1, 2, 3)], [1, 2, 3])
    # pairing is what matters, not order
    assert scheme.verify_aggregate(agg, [digests[r] for r in (2, 3, 1)], [2, 3, 1])


def test_aggregate_missing_or_mismatched(scheme):
    digests = {r: digest_of(("resp", r)) for r in (1, 2, 3)}
    agg = scheme.aggregate(scheme.sign(digests[r], r) for r in (1, 2, 3))
    assert not scheme.verify_aggregate(agg, [digests[1], digests[2]], [1, 2])
    assert not scheme.verify_aggregate(agg, [digests[2], digests[1], digests[3]], [1, 2, 3])


def test_aggregate_rejects_forgery_and_duplicates(scheme):
    d = digest_of("m")
    good = scheme.sign(d, 1)
    forged = MockScheme(99, IDS).sign(d, 2)
    with pytest.raises(CryptoError):
        scheme.aggregate([good, forged])
    with pytest.raises(CryptoError):
        scheme.aggregate([good, good])


def test_unknown_identity(scheme):
    with pytest.raises(CryptoError):
        scheme.sign(digest_of("m"), 77)
    assert not scheme.verify_aggregate(scheme.aggregate([]), [digest_of("m")], [77])
