"""DIVER: deep run-time visibility into small RTOS devices.

Two halves connected over TCP: a device-resident "measurer" that answers
measurement/action commands and pushes streams, and a remote "listener"
that builds known-good baselines and flags changes.  A simulated device
(:mod:`diver.device`) stands in for real hardware so the whole loop runs
on a desk.
"""

__version__ = "0.1.0"
