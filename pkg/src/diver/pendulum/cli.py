"""``diver-pendulum``: run the closed-loop benchmark against a device.

Writes ``trajectory.csv`` and ``metrics.csv`` and prints the summary
line ``mean_latency_ms=<x> p99_ms=<y> drops=<n>``.  With ``--measurer``
a listener connection streams task statistics at 10 Hz during the run,
which is how the with/without-measurer comparison is produced.
"""

from __future__ import annotations

import argparse
import os
import sys

from .bench import run_benchmark, write_metrics_csv, write_trajectory_csv
from .dynamics import PendulumParams


def parse_addr(text: str):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    return host, int(port)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diver-pendulum")
    p.add_argument("--device-udp", type=parse_addr, required=True,
                   metavar="ADDR:PORT", help="controller UDP endpoint")
    p.add_argument("--duration", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--theta0", type=float, default=0.5)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--measurer", type=parse_addr, default=None,
                   metavar="ADDR:PORT",
                   help="stream taskstats at 10 Hz from this measurer during the run")
    p.add_argument("--psk-hex", default="00" * 16)
    p.add_argument("--encrypt", choices=("on", "off"), default="on")
    p.add_argument("--stream-rate", type=float, default=10.0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    params = PendulumParams(noise_sigma=args.noise_sigma, theta0=args.theta0)

    client = sub = None
    stream_count = [0]
    if args.measurer is not None:
        from ..listener import DeviceClient
        client = DeviceClient(args.measurer, bytes.fromhex(args.psk_hex),
                              encrypt=args.encrypt == "on")
        sub = client.subscribe("taskstats", args.stream_rate,
                               lambda rs: stream_count.__setitem__(0, stream_count[0] + 1))
    try:
        metrics, trajectory = run_benchmark(args.device_udp,
                                            duration_s=args.duration,
                                            seed=args.seed, params=params)
    finally:
        if client is not None:
            if sub is not None:
                client.unsubscribe(sub)
            client.close()

    os.makedirs(args.out_dir, exist_ok=True)
    write_trajectory_csv(os.path.join(args.out_dir, "trajectory.csv"), trajectory)
    write_metrics_csv(os.path.join(args.out_dir, "metrics.csv"), metrics)
    if args.measurer is not None:
        print(f"measurer stream records: {stream_count[0]}")
    print(metrics.summary_line())
    return 0


if __name__ == "__main__":
    sys.exit(main())
