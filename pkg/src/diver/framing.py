"""Authenticated, replay-protected framing for measurer/listener traffic.

Wire layout (big-endian), header authenticated as associated data:

    magic "DIVR" | version u8 | flags u8 | session_id 8B | seq u56 |
    timestamp_ms u64 | payload_len u32 | payload | tag 16B (iff encrypted)

flags: bit0 = encrypted, bit1 = pushed stream frame.  The AEAD nonce is
``session_id(8) || direction(1) || seq(7)``; sequence numbers increase
strictly per (session, direction) and receivers reject anything at or
below the last accepted value, as well as frames whose timestamp falls
outside the configured skew window.

Session establishment: the client sends a hello carrying its random
8-byte nonce in the session_id field and the PSK identifier as payload;
the server answers with a fresh random session id.  Hello frames use
seq 0 and, when encryption is on, a per-handshake key derived from the
PSK and the client nonce (a fixed bootstrap nonce under the raw PSK
would repeat across connections).  Data frames then run under the PSK
with seq starting at 1.
"""

from __future__ import annotations

import hashlib
import os
import socket
import struct
import threading
import time
from dataclasses import dataclass, field
from typing import Optional, Tuple

from . import ascon
from .errors import (AuthFailure, BadFrame, BadMagic, BadVersion,
                     ConnectionLost, ReplayDetected, StaleTimestamp)

MAGIC = b"DIVR"
VERSION = 1
FLAG_ENCRYPTED = 0x01
FLAG_STREAM = 0x02

DIR_CLIENT = 1  # listener -> measurer
DIR_SERVER = 2  # measurer -> listener

HEADER = struct.Struct(">4sBB8s7sQI")
HEADER_LEN = HEADER.size  # 33
MAX_PAYLOAD = 1 << 20
MAX_SEQ = (1 << 56) - 1

DEFAULT_SKEW_MS = 30_000


def _now_ms() -> int:
    return int(time.time() * 1000)


def psk_id(psk: bytes) -> bytes:
    return hashlib.sha256(psk + b"diver-psk-id").digest()[:8]


def _handshake_key(psk: bytes, client_nonce: bytes) -> bytes:
    return hashlib.sha256(psk + client_nonce + b"diver-handshake").digest()[:16]


def _nonce(session_id: bytes, direction: int, seq: int) -> bytes:
    return session_id + bytes([direction]) + seq.to_bytes(7, "big")


@dataclass
class Frame:
    flags: int
    session_id: bytes
    seq: int
    timestamp_ms: int
    payload: bytes

    @property
    def encrypted(self) -> bool:
        return bool(self.flags & FLAG_ENCRYPTED)

    @property
    def stream(self) -> bool:
        return bool(self.flags & FLAG_STREAM)


def encode_frame(key: Optional[bytes], session_id: bytes, direction: int,
                 seq: int, payload: bytes, stream: bool = False,
                 now_ms: Optional[int] = None) -> bytes:
    """Build one wire frame; encrypts iff ``key`` is given."""
    if len(payload) > MAX_PAYLOAD:
        raise BadFrame("payload too large")
    if seq > MAX_SEQ:
        raise BadFrame("sequence space exhausted")
    flags = (FLAG_ENCRYPTED if key is not None else 0) | (FLAG_STREAM if stream else 0)
    ts = _now_ms() if now_ms is None else now_ms
    header = HEADER.pack(MAGIC, VERSION, flags, session_id,
                         seq.to_bytes(7, "big"), ts, len(payload))
    if key is None:
        return header + payload
    sealed = ascon.aead_encrypt(key, _nonce(session_id, direction, seq), header, payload)
    return header + sealed


def parse_header(header: bytes) -> Tuple[int, bytes, int, int, int]:
    """Validate a 33-byte header; returns (flags, sid, seq, ts, payload_len)."""
    magic, version, flags, sid, seq_b, ts, payload_len = HEADER.unpack(header)
    if magic != MAGIC:
        raise BadMagic("bad frame magic")
    if version != VERSION:
        raise BadVersion(f"unsupported frame version {version}")
    if payload_len > MAX_PAYLOAD:
        raise BadFrame("declared payload too large")
    return flags, sid, int.from_bytes(seq_b, "big"), ts, payload_len


def decode_frame(key: Optional[bytes], direction: int, raw: bytes,
                 skew_window_ms: int = DEFAULT_SKEW_MS,
                 now_ms: Optional[int] = None) -> Frame:
    """Authenticate/decrypt one complete frame; no sequence tracking."""
    if len(raw) < HEADER_LEN:
        raise BadFrame("truncated frame")
    header = raw[:HEADER_LEN]
    flags, sid, seq, ts, payload_len = parse_header(header)
    body = raw[HEADER_LEN:]
    encrypted = bool(flags & FLAG_ENCRYPTED)
    if encrypted != (key is not None):
        raise AuthFailure("encryption flag does not match channel configuration")
    expect = payload_len + (ascon.TAG_LEN if encrypted else 0)
    if len(body) != expect:
        raise BadFrame("frame length mismatch")
    now = _now_ms() if now_ms is None else now_ms
    if abs(now - ts) > skew_window_ms:
        raise StaleTimestamp(f"timestamp off by {abs(now - ts)} ms")
    if encrypted:
        payload = ascon.aead_decrypt(key, _nonce(sid, direction, seq), header, body)
    else:
        payload = body
    return Frame(flags, sid, seq, ts, payload)


class Session:
    """Per-connection channel state: key, session id, seq counters."""

    def __init__(self, session_id: bytes, psk: bytes, encrypted: bool,
                 skew_window_ms: int = DEFAULT_SKEW_MS):
        if len(session_id) != 8:
            raise ValueError("session_id must be 8 bytes")
        self.session_id = session_id
        self.psk = psk
        self.encrypted = encrypted
        self.skew_window_ms = skew_window_ms
        self._send_seq = {DIR_CLIENT: 1, DIR_SERVER: 1}
        self._last_rx = {DIR_CLIENT: 0, DIR_SERVER: 0}
        self._lock = threading.Lock()

    @property
    def key(self) -> Optional[bytes]:
        return self.psk if self.encrypted else None

    def seal(self, direction: int, payload: bytes, stream: bool = False,
             now_ms: Optional[int] = None) -> bytes:
        with self._lock:
            seq = self._send_seq[direction]
            self._send_seq[direction] = seq + 1
        return encode_frame(self.key, self.session_id, direction, seq,
                            payload, stream=stream, now_ms=now_ms)

    def open(self, direction: int, raw: bytes,
             now_ms: Optional[int] = None) -> Frame:
        """Verify a frame sent in ``direction``; enforces session id, seq,
        timestamp, and authenticity before committing the seq counter."""
        if len(raw) < HEADER_LEN:
            raise BadFrame("truncated frame")
        _, sid, seq, _, _ = parse_header(raw[:HEADER_LEN])
        if sid != self.session_id:
            raise ReplayDetected("frame for a different session")
        with self._lock:
            last = self._last_rx[direction]
        if seq <= last:
            raise ReplayDetected(f"seq {seq} <= last seen {last}")
        frame = decode_frame(self.key, direction, raw,
                             skew_window_ms=self.skew_window_ms, now_ms=now_ms)
        with self._lock:
            if seq <= self._last_rx[direction]:
                raise ReplayDetected(f"seq {seq} raced behind")
            self._last_rx[direction] = seq
        return frame


# --- handshake ---

def make_client_hello(psk: bytes, encrypted: bool,
                      now_ms: Optional[int] = None) -> Tuple[bytes, bytes]:
    """Returns (frame_bytes, client_nonce)."""
    client_nonce = os.urandom(8)
    key = _handshake_key(psk, client_nonce) if encrypted else None
    frame = encode_frame(key, client_nonce, DIR_CLIENT, 0, psk_id(psk),
                         now_ms=now_ms)
    return frame, client_nonce


def read_client_hello(raw: bytes, psk: bytes, encrypted: bool,
                      skew_window_ms: int = DEFAULT_SKEW_MS,
                      now_ms: Optional[int] = None) -> bytes:
    """Server side: validate hello, return the client nonce."""
    if len(raw) < HEADER_LEN:
        raise BadFrame("truncated hello")
    _, client_nonce, seq, _, _ = parse_header(raw[:HEADER_LEN])
    if seq != 0:
        raise AuthFailure("hello must use seq 0")
    key = _handshake_key(psk, client_nonce) if encrypted else None
    frame = decode_frame(key, DIR_CLIENT, raw, skew_window_ms=skew_window_ms,
                         now_ms=now_ms)
    if frame.payload != psk_id(psk):
        raise AuthFailure("unknown psk id")
    return client_nonce


def make_server_hello(psk: bytes, client_nonce: bytes, encrypted: bool,
                      skew_window_ms: int = DEFAULT_SKEW_MS,
                      now_ms: Optional[int] = None) -> Tuple[bytes, Session]:
    session_id = os.urandom(8)
    key = _handshake_key(psk, client_nonce) if encrypted else None
    frame = encode_frame(key, client_nonce, DIR_SERVER, 0, session_id,
                         now_ms=now_ms)
    return frame, Session(session_id, psk, encrypted, skew_window_ms)


def read_server_hello(raw: bytes, psk: bytes, client_nonce: bytes,
                      encrypted: bool, skew_window_ms: int = DEFAULT_SKEW_MS,
                      now_ms: Optional[int] = None) -> Session:
    if len(raw) < HEADER_LEN:
        raise BadFrame("truncated hello")
    _, sid, seq, _, _ = parse_header(raw[:HEADER_LEN])
    if sid != client_nonce or seq != 0:
        raise AuthFailure("hello response does not match our nonce")
    key = _handshake_key(psk, client_nonce) if encrypted else None
    frame = decode_frame(key, DIR_SERVER, raw, skew_window_ms=skew_window_ms,
                         now_ms=now_ms)
    if len(frame.payload) != 8:
        raise AuthFailure("malformed session id")
    return Session(frame.payload, psk, encrypted, skew_window_ms)


# --- socket helpers ---

def recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionLost("peer closed connection")
        buf += chunk
    return bytes(buf)


def recv_frame_bytes(sock: socket.socket) -> bytes:
    """Read one complete frame (header + body) off a stream socket."""
    header = recv_exact(sock, HEADER_LEN)
    flags, _, _, _, payload_len = parse_header(header)
    body_len = payload_len + (ascon.TAG_LEN if flags & FLAG_ENCRYPTED else 0)
    return header + recv_exact(sock, body_len)
