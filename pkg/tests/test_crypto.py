from __future__ import annotations

import hashlib
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teescrow import crypto

# FIPS 180 reference vectors.
SHA256_VECTORS = [
    (b"", "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"),
    (b"abc", "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"),
    (b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq",
     "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1"),
]


@pytest.mark.parametrize("message,digest", SHA256_VECTORS)
def test_sha256_reference_vectors(message, digest):
    assert crypto.sha256_digest(message).hex() == digest


def test_hash_of_zero_secret():
    assert crypto.hash_secret(bytes(32)).hex() == (
        "66687aadf862bd776c8fc18b8e9f8e20089714856ee233b3902a591d0d5f2925"
    )


def test_generate_secret_deterministic():
    a = crypto.generate_secret(random.Random(13))
    b = crypto.generate_secret(random.Random(13))
    assert a == b
    assert len(a) == 32
    assert a != bytes(32)


def test_generate_secret_distinct_seeds():
    assert crypto.generate_secret(random.Random(1)) != crypto.generate_secret(
        random.Random(2))


def test_hash_secret_is_pure():
    secret = crypto.generate_secret(random.Random(5))
    assert crypto.hash_secret(secret) == crypto.hash_secret(secret)


def test_hash_secret_wrong_length():
    with pytest.raises(crypto.WrongLength):
        crypto.hash_secret(b"short")


@settings(max_examples=50, deadline=None)
@given(st.binary(min_size=32, max_size=32),
       st.integers(min_value=0, max_value=255))
def test_any_flipped_bit_changes_digest(secret, position):
    flipped = bytearray(secret)
    flipped[position // 8] ^= 1 << (position % 8)
    assert crypto.hash_secret(bytes(flipped)) != crypto.hash_secret(secret)


# ----------------------------------------------------------------------
# result protection


def keys(seed=0):
    return crypto.new_result_keys(random.Random(seed))


def test_protect_open_roundtrip():
    k = keys()
    protected = crypto.protect_result(b"payload", k, random.Random(1))
    assert crypto.open_result(protected, k) == b"payload"


def test_tampered_ciphertext_rejected():
    k = keys()
    protected = crypto.protect_result(b"payload", k, random.Random(1))
    broken = crypto.ProtectedResult(
        nonce=protected.nonce,
        ciphertext=bytes([protected.ciphertext[0] ^ 1])
        + protected.ciphertext[1:],
        signature=protected.signature,
        key_id=protected.key_id,
    )
    with pytest.raises(crypto.TamperDetected):
        crypto.open_result(broken, k)


def test_tampered_signature_rejected():
    k = keys()
    protected = crypto.protect_result(b"payload", k, random.Random(1))
    broken = crypto.ProtectedResult(
        nonce=protected.nonce,
        ciphertext=protected.ciphertext,
        signature=bytes([protected.signature[0] ^ 1])
        + protected.signature[1:],
        key_id=protected.key_id,
    )
    with pytest.raises(crypto.TamperDetected):
        crypto.open_result(broken, k)


def test_other_requestors_keys_rejected():
    protected = crypto.protect_result(b"payload", keys(0), random.Random(1))
    with pytest.raises(crypto.WrongKey):
        crypto.open_result(protected, keys(1))


def test_signature_verifiable_by_third_party():
    k = keys()
    protected = crypto.protect_result(b"payload", k, random.Random(1))
    assert crypto.verify_result_signature(protected, k.verify_key)
    assert not crypto.verify_result_signature(protected, keys(1).verify_key)


@settings(max_examples=30, deadline=None)
@given(st.binary(max_size=200), st.integers(0, 2**32), st.integers(0, 2**32))
def test_independent_keys_never_open(message, seed_a, seed_b):
    ka, kb = keys(seed_a), keys(seed_b)
    protected = crypto.protect_result(message, ka, random.Random(9))
    if ka == kb:
        assert crypto.open_result(protected, kb) == message
    else:
        with pytest.raises(crypto.CryptoError):
            crypto.open_result(protected, kb)


# ----------------------------------------------------------------------
# sealing


def test_seal_unseal_roundtrip():
    measurement = hashlib.sha256(b"image-a").digest()
    blob = crypto.seal(measurement, b"state", random.Random(3))
    assert crypto.unseal(measurement, blob) == b"state"


def test_unseal_wrong_measurement_rejected():
    blob = crypto.seal(hashlib.sha256(b"image-a").digest(), b"state",
                       random.Random(3))
    with pytest.raises(crypto.IdentityMismatch):
        crypto.unseal(hashlib.sha256(b"image-b").digest(), blob)


def test_seal_requires_digest_length():
    with pytest.raises(crypto.WrongLength):
        crypto.seal(b"short", b"state", random.Random(3))
