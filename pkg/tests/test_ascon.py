"""Ascon-AEAD128 against frozen known-answer vectors plus properties."""

import os
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diver import ascon
from diver.errors import AuthFailure

KAT_PATH = Path(__file__).parent / "data" / "ascon_aead128_kat.txt"


def load_kats():
    vectors = []
    for line in KAT_PATH.read_text().splitlines():
        if not line.strip():
            continue
        key, nonce, ad, pt, ct = (bytes.fromhex(part) for part in line.split(","))
        vectors.append((key, nonce, ad, pt, ct))
    return vectors


KATS = load_kats()


def test_kat_count():
    assert len(KATS) == 100


@pytest.mark.parametrize("idx", range(0, 100, 7))
def test_kat_encrypt_spot(idx):
    key, nonce, ad, pt, ct = KATS[idx]
    assert ascon.aead_encrypt(key, nonce, ad, pt) == ct


def test_kat_all_vectors_both_directions():
    for key, nonce, ad, pt, ct in KATS:
        assert ascon.aead_encrypt(key, nonce, ad, pt) == ct
        assert ascon.aead_decrypt(key, nonce, ad, ct) == pt


def test_pure_path_matches_kats():
    for key, nonce, ad, pt, ct in KATS[:25]:
        assert ascon._encrypt_pure(key, nonce, ad, pt) == ct
        plain, tag = ascon._decrypt_pure(key, nonce, ad, ct[:-16])
        assert plain == pt and tag == ct[-16:]


@settings(max_examples=60, deadline=None)
@given(st.binary(min_size=16, max_size=16), st.binary(min_size=16, max_size=16),
       st.binary(max_size=64), st.binary(max_size=300))
def test_round_trip(key, nonce, ad, pt):
    ct = ascon.aead_encrypt(key, nonce, ad, pt)
    assert len(ct) == len(pt) + 16
    assert ascon.aead_decrypt(key, nonce, ad, ct) == pt


def test_bit_flip_fails():
    key, nonce, ad, pt, ct = KATS[40]
    for pos in range(len(ct)):
        tampered = bytearray(ct)
        tampered[pos] ^= 0x01
        with pytest.raises(AuthFailure):
            ascon.aead_decrypt(key, nonce, ad, bytes(tampered))


def test_tampered_ad_fails():
    key, nonce, ad, pt, ct = KATS[50]
    with pytest.raises(AuthFailure):
        ascon.aead_decrypt(key, nonce, ad + b"x", ct)


def test_wrong_key_fails():
    key, nonce, ad, pt, ct = KATS[60]
    wrong = bytes(16)
    assert wrong != key
    with pytest.raises(AuthFailure):
        ascon.aead_decrypt(wrong, nonce, ad, ct)


def test_length_validation():
    with pytest.raises(ValueError):
        ascon.aead_encrypt(b"short", bytes(16), b"", b"")
    with pytest.raises(ValueError):
        ascon.aead_encrypt(bytes(16), b"short", b"", b"")
    with pytest.raises(AuthFailure):
        ascon.aead_decrypt(bytes(16), bytes(16), b"", b"tooshort")


def test_nonce_reuse_visible_distinct_ciphertexts():
    # Different nonces must give unrelated ciphertexts for the same input.
    key = bytes(range(16))
    pt = b"state report"
    seen = set()
    for i in range(64):
        nonce = i.to_bytes(16, "big")
        seen.add(ascon.aead_encrypt(key, nonce, b"", pt))
    assert len(seen) == 64
