"""JIT fast path for Ascon-AEAD128.

Same algorithm as the pure path in :mod:`diver.ascon`, restated on
wrapping uint64 words so the permutation compiles to native code.  Byte
padding and truncation happen on the Python side; kernels only see whole
16-byte groups.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64

_IV_WORD = np.uint64(int.from_bytes(
    bytes([0x01, 0x00, 0x8C, 0x80, 0x00, 0x10, 0x00, 0x00]), "little"))


@njit(cache=True)
def _p(x0, x1, x2, x3, x4, rounds):
    for r in range(12 - rounds, 12):
        x2 ^= uint64(0xF0 - r * 0x10 + r)
        x0 ^= x4
        x4 ^= x3
        x2 ^= x1
        t0 = ~x0 & x1
        t1 = ~x1 & x2
        t2 = ~x2 & x3
        t3 = ~x3 & x4
        t4 = ~x4 & x0
        x0 ^= t1
        x1 ^= t2
        x2 ^= t3
        x3 ^= t4
        x4 ^= t0
        x1 ^= x0
        x0 ^= x4
        x3 ^= x2
        x2 = ~x2
        x0 ^= ((x0 >> uint64(19)) | (x0 << uint64(45))) ^ ((x0 >> uint64(28)) | (x0 << uint64(36)))
        x1 ^= ((x1 >> uint64(61)) | (x1 << uint64(3))) ^ ((x1 >> uint64(39)) | (x1 << uint64(25)))
        x2 ^= ((x2 >> uint64(1)) | (x2 << uint64(63))) ^ ((x2 >> uint64(6)) | (x2 << uint64(58)))
        x3 ^= ((x3 >> uint64(10)) | (x3 << uint64(54))) ^ ((x3 >> uint64(17)) | (x3 << uint64(47)))
        x4 ^= ((x4 >> uint64(7)) | (x4 << uint64(57))) ^ ((x4 >> uint64(41)) | (x4 << uint64(23)))
    return x0, x1, x2, x3, x4


@njit(cache=True)
def _start(iv, k0, k1, n0, n1, ad_w):
    x0, x1, x2, x3, x4 = _p(iv, k0, k1, n0, n1, 12)
    x3 ^= k0
    x4 ^= k1
    for g in range(ad_w.shape[0] // 2):
        x0 ^= ad_w[2 * g]
        x1 ^= ad_w[2 * g + 1]
        x0, x1, x2, x3, x4 = _p(x0, x1, x2, x3, x4, 8)
    x4 ^= uint64(0x8000000000000000)
    return x0, x1, x2, x3, x4


@njit(cache=True)
def _enc(iv, k0, k1, n0, n1, ad_w, pt_w, out_w):
    x0, x1, x2, x3, x4 = _start(iv, k0, k1, n0, n1, ad_w)
    n_groups = pt_w.shape[0] // 2
    for g in range(n_groups):
        x0 ^= pt_w[2 * g]
        x1 ^= pt_w[2 * g + 1]
        out_w[2 * g] = x0
        out_w[2 * g + 1] = x1
        if g != n_groups - 1:
            x0, x1, x2, x3, x4 = _p(x0, x1, x2, x3, x4, 8)
    x2 ^= k0
    x3 ^= k1
    x0, x1, x2, x3, x4 = _p(x0, x1, x2, x3, x4, 12)
    out_w[-2] = x3 ^ k0
    out_w[-1] = x4 ^ k1


@njit(cache=True)
def _dec(iv, k0, k1, n0, n1, ad_w, ct_w, keep0, keep1, pad0, pad1, out_w):
    x0, x1, x2, x3, x4 = _start(iv, k0, k1, n0, n1, ad_w)
    n_groups = ct_w.shape[0] // 2
    for g in range(n_groups - 1):
        c0 = ct_w[2 * g]
        c1 = ct_w[2 * g + 1]
        out_w[2 * g] = x0 ^ c0
        out_w[2 * g + 1] = x1 ^ c1
        x0 = c0
        x1 = c1
        x0, x1, x2, x3, x4 = _p(x0, x1, x2, x3, x4, 8)
    g = n_groups - 1
    c0 = ct_w[2 * g]
    c1 = ct_w[2 * g + 1]
    out_w[2 * g] = x0 ^ c0
    out_w[2 * g + 1] = x1 ^ c1
    x0 = (x0 & keep0) ^ c0 ^ pad0
    x1 = (x1 & keep1) ^ c1 ^ pad1
    x2 ^= k0
    x3 ^= k1
    x0, x1, x2, x3, x4 = _p(x0, x1, x2, x3, x4, 12)
    out_w[-2] = x3 ^ k0
    out_w[-1] = x4 ^ k1


def _words(raw: bytes) -> np.ndarray:
    return np.frombuffer(raw, dtype="<u8")


def _key_nonce_words(key: bytes, nonce: bytes):
    kw = _words(key)
    nw = _words(nonce)
    return kw[0], kw[1], nw[0], nw[1]


def _pad(raw: bytes) -> bytes:
    return raw + b"\x01" + b"\x00" * (15 - len(raw) % 16)


def encrypt(key: bytes, nonce: bytes, ad: bytes, plaintext: bytes) -> bytes:
    k0, k1, n0, n1 = _key_nonce_words(key, nonce)
    ad_w = _words(_pad(ad)) if ad else _words(b"")
    pt_w = _words(_pad(plaintext))
    out_w = np.empty(pt_w.shape[0] + 2, dtype="<u8")
    _enc(_IV_WORD, k0, k1, n0, n1, ad_w, pt_w, out_w)
    buf = out_w.tobytes()
    return buf[:len(plaintext)] + buf[-16:]


def decrypt(key: bytes, nonce: bytes, ad: bytes, ct: bytes):
    """Returns (plaintext, computed_tag); the caller compares the tag."""
    k0, k1, n0, n1 = _key_nonce_words(key, nonce)
    ad_w = _words(_pad(ad)) if ad else _words(b"")
    last = len(ct) % 16
    ct_w = _words(ct + b"\x00" * (16 - last))
    mask = (1 << 64) - 1
    if last < 8:
        keep0, keep1 = mask ^ ((1 << (8 * last)) - 1), mask
        pad0, pad1 = 1 << (8 * last), 0
    else:
        keep0, keep1 = 0, mask ^ ((1 << (8 * (last - 8))) - 1)
        pad0, pad1 = 0, 1 << (8 * (last - 8))
    out_w = np.empty(ct_w.shape[0] + 2, dtype="<u8")
    _dec(_IV_WORD, k0, k1, n0, n1, ad_w, ct_w,
         np.uint64(keep0), np.uint64(keep1), np.uint64(pad0), np.uint64(pad1),
         out_w)
    buf = out_w.tobytes()
    return buf[:len(ct)], buf[-16:]
