"""Ascon-AEAD128 (NIST SP 800-232).

128-bit key, 128-bit nonce, 128-bit tag, 16-byte rate, 12/8 round
permutation.  Words are loaded little-endian.  The pure-Python path below
is the readable reference; :mod:`diver._ascon_kernels` provides a JIT
fast path selected at import time (``DIVER_PURE_ASCON=1`` forces pure).
Both paths are held to the same known-answer vectors.
"""

from __future__ import annotations

import hmac
import os

from .errors import AuthFailure

KEY_LEN = 16
NONCE_LEN = 16
TAG_LEN = 16

_RATE = 16
_MASK = (1 << 64) - 1
_ROUND_CONSTANTS = [0xF0 - r * 0x10 + r for r in range(12)]
# IV for Ascon-AEAD128: version 1, rounds (8<<4)+12, tag bits 128, rate 16.
_IV = bytes([0x01, 0x00, 0x8C, 0x80, 0x00, 0x10, 0x00, 0x00])


def _permute(x0: int, x1: int, x2: int, x3: int, x4: int, rounds: int):
    M = _MASK
    for rc in _ROUND_CONSTANTS[12 - rounds:]:
        x2 ^= rc
        x0 ^= x4
        x4 ^= x3
        x2 ^= x1
        t0 = (x0 ^ M) & x1
        t1 = (x1 ^ M) & x2
        t2 = (x2 ^ M) & x3
        t3 = (x3 ^ M) & x4
        t4 = (x4 ^ M) & x0
        x0 ^= t1
        x1 ^= t2
        x2 ^= t3
        x3 ^= t4
        x4 ^= t0
        x1 ^= x0
        x0 ^= x4
        x3 ^= x2
        x2 ^= M
        x0 ^= (((x0 >> 19) | (x0 << 45)) ^ ((x0 >> 28) | (x0 << 36))) & M
        x1 ^= (((x1 >> 61) | (x1 << 3)) ^ ((x1 >> 39) | (x1 << 25))) & M
        x2 ^= (((x2 >> 1) | (x2 << 63)) ^ ((x2 >> 6) | (x2 << 58))) & M
        x3 ^= (((x3 >> 10) | (x3 << 54)) ^ ((x3 >> 17) | (x3 << 47))) & M
        x4 ^= (((x4 >> 7) | (x4 << 57)) ^ ((x4 >> 41) | (x4 << 23))) & M
    return x0, x1, x2, x3, x4


def _le64(b: bytes) -> int:
    return int.from_bytes(b, "little")


def _le64b(v: int) -> bytes:
    return v.to_bytes(8, "little")


def _init_state(key: bytes, nonce: bytes):
    buf = _IV + key + nonce
    s = _permute(_le64(buf[0:8]), _le64(buf[8:16]), _le64(buf[16:24]),
                 _le64(buf[24:32]), _le64(buf[32:40]), 12)
    return s[0], s[1], s[2], s[3] ^ _le64(key[0:8]), s[4] ^ _le64(key[8:16])


def _absorb_ad(state, ad: bytes):
    x0, x1, x2, x3, x4 = state
    if ad:
        padded = ad + b"\x01" + b"\x00" * (_RATE - len(ad) % _RATE - 1)
        for i in range(0, len(padded), _RATE):
            x0 ^= _le64(padded[i:i + 8])
            x1 ^= _le64(padded[i + 8:i + 16])
            x0, x1, x2, x3, x4 = _permute(x0, x1, x2, x3, x4, 8)
    return x0, x1, x2, x3, x4 ^ (1 << 63)


def _finalize(state, key: bytes) -> bytes:
    x0, x1, x2, x3, x4 = state
    x2 ^= _le64(key[0:8])
    x3 ^= _le64(key[8:16])
    x0, x1, x2, x3, x4 = _permute(x0, x1, x2, x3, x4, 12)
    return _le64b(x3 ^ _le64(key[0:8])) + _le64b(x4 ^ _le64(key[8:16]))


def _encrypt_pure(key: bytes, nonce: bytes, ad: bytes, plaintext: bytes) -> bytes:
    state = _absorb_ad(_init_state(key, nonce), ad)
    x0, x1, x2, x3, x4 = state
    last = len(plaintext) % _RATE
    padded = plaintext + b"\x01" + b"\x00" * (_RATE - last - 1)
    out = bytearray()
    n_blocks = len(padded) // _RATE
    for blk in range(n_blocks):
        i = blk * _RATE
        x0 ^= _le64(padded[i:i + 8])
        x1 ^= _le64(padded[i + 8:i + 16])
        out += _le64b(x0) + _le64b(x1)
        if blk != n_blocks - 1:
            x0, x1, x2, x3, x4 = _permute(x0, x1, x2, x3, x4, 8)
    ct = bytes(out[:len(plaintext)])
    return ct + _finalize((x0, x1, x2, x3, x4), key)


def _decrypt_pure(key: bytes, nonce: bytes, ad: bytes, ct: bytes) -> bytes:
    state = _absorb_ad(_init_state(key, nonce), ad)
    x0, x1, x2, x3, x4 = state
    last = len(ct) % _RATE
    # A rate-multiple ciphertext still gets a full padding-only tail group.
    padded = ct + b"\x00" * (_RATE - last)
    out = bytearray()
    full_groups = len(padded) // _RATE - 1
    for blk in range(full_groups):
        i = blk * _RATE
        c0 = _le64(padded[i:i + 8])
        c1 = _le64(padded[i + 8:i + 16])
        out += _le64b(x0 ^ c0) + _le64b(x1 ^ c1)
        x0, x1 = c0, c1
        x0, x1, x2, x3, x4 = _permute(x0, x1, x2, x3, x4, 8)
    # Tail group: only the first `last` bytes are ciphertext; the rest of
    # the state keeps its bits apart from the 0x01 domain padding.
    i = full_groups * _RATE
    c0 = _le64(padded[i:i + 8])
    c1 = _le64(padded[i + 8:i + 16])
    out += (_le64b(x0 ^ c0) + _le64b(x1 ^ c1))[:last]
    if last < 8:
        keep0 = _MASK ^ ((1 << (8 * last)) - 1)
        keep1 = _MASK
        pad0, pad1 = 1 << (8 * last), 0
    else:
        keep0 = 0
        keep1 = _MASK ^ ((1 << (8 * (last - 8))) - 1)
        pad0, pad1 = 0, 1 << (8 * (last - 8))
    x0 = (x0 & keep0) ^ c0 ^ pad0
    x1 = (x1 & keep1) ^ c1 ^ pad1
    return bytes(out), _finalize((x0, x1, x2, x3, x4), key)


try:  # pragma: no cover - exercised indirectly via the dispatch below
    if os.environ.get("DIVER_PURE_ASCON") == "1":
        raise ImportError("pure path forced")
    from . import _ascon_kernels as _fast
except Exception:  # numba unavailable or disabled
    _fast = None


def aead_encrypt(key: bytes, nonce: bytes, ad: bytes, plaintext: bytes) -> bytes:
    """Encrypt and authenticate; returns ciphertext || 16-byte tag."""
    if len(key) != KEY_LEN:
        raise ValueError("key must be 16 bytes")
    if len(nonce) != NONCE_LEN:
        raise ValueError("nonce must be 16 bytes")
    if _fast is not None:
        return _fast.encrypt(key, nonce, ad, plaintext)
    return _encrypt_pure(key, nonce, ad, plaintext)


def aead_decrypt(key: bytes, nonce: bytes, ad: bytes, ct_and_tag: bytes) -> bytes:
    """Verify and decrypt ciphertext || tag; raises AuthFailure on any mismatch."""
    if len(key) != KEY_LEN:
        raise ValueError("key must be 16 bytes")
    if len(nonce) != NONCE_LEN:
        raise ValueError("nonce must be 16 bytes")
    if len(ct_and_tag) < TAG_LEN:
        raise AuthFailure("ciphertext shorter than tag")
    ct, tag = ct_and_tag[:-TAG_LEN], ct_and_tag[-TAG_LEN:]
    if _fast is not None:
        plaintext, computed = _fast.decrypt(key, nonce, ad, ct)
    else:
        plaintext, computed = _decrypt_pure(key, nonce, ad, ct)
    if not hmac.compare_digest(computed, tag):
        raise AuthFailure("tag verification failed")
    return plaintext


def using_fast_path() -> bool:
    return _fast is not None
