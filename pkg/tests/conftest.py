"""Shared fixtures: device/server/client stacks on ephemeral ports."""

from __future__ import annotations

import pytest

from diver.device import DeviceHost, nominal_fixture
from diver.listener import DeviceClient
from diver.measurer import MeasurerServer

PSK = bytes.fromhex("000102030405060708090a0b0c0d0e0f")


class Stack:
    """One device + measurer + one connected client, torn down together."""

    def __init__(self, seed=42, tick_hz=0.0, encrypt=True, idle_timeout_s=120.0):
        self.host = DeviceHost(nominal_fixture(seed), tick_hz=tick_hz).start()
        self.server = MeasurerServer(self.host, PSK, encrypt=encrypt,
                                     idle_timeout_s=idle_timeout_s).start()
        self.encrypt = encrypt
        self._clients = []

    def client(self) -> DeviceClient:
        c = DeviceClient(self.server.address, PSK, encrypt=self.encrypt)
        self._clients.append(c)
        return c

    def close(self):
        for c in self._clients:
            c.close()
        self.server.stop()
        self.host.stop()


@pytest.fixture
def stack():
    s = Stack()
    yield s
    s.close()


@pytest.fixture
def realtime_stack():
    s = Stack(tick_hz=1000.0)
    yield s
    s.close()


@pytest.fixture
def plaintext_stack():
    s = Stack(encrypt=False)
    yield s
    s.close()
