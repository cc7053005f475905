"""On-device implant: the command back-end library over device snapshots
and the TCP query-response/streaming server."""

from .backends import Backends
from .server import MeasurerServer

__all__ = ["Backends", "MeasurerServer"]
