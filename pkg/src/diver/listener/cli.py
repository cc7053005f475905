"""``diver-listen``: connect to a device and run the listener in one of
three modes: an interactive console, a monitor with detectors and the
browser gateway, or a one-shot baseline build."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from typing import Tuple

from ..errors import DiverError
from .baseline import build_baseline, load_baseline, save_baseline
from .client import DeviceClient
from .gateway import Gateway
from .monitor import ListenerState, Monitor
from .repl import run_repl


def parse_addr(text: str) -> Tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    return host, int(port)


def parse_onoff(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diver-listen",
                                description="remote monitoring agent")
    p.add_argument("--device", type=parse_addr, required=True,
                   metavar="ADDR:PORT", help="measurer endpoint")
    p.add_argument("--psk-hex", default="00" * 16,
                   help="pre-shared key, 32 hex chars")
    p.add_argument("--encrypt", type=parse_onoff, default=True,
                   metavar="on|off", help="channel encryption (default on)")
    p.add_argument("--baseline", default=None, metavar="PATH",
                   help="baseline file to load (or write in build mode)")
    p.add_argument("--gateway", type=parse_addr, default=None,
                   metavar="ADDR:PORT", help="serve the HTTP gateway here")
    p.add_argument("--mode", choices=("repl", "monitor", "build-baseline"),
                   default="repl")
    p.add_argument("--duration", type=float, default=60.0,
                   help="baseline window seconds (build mode)")
    p.add_argument("--rate", type=float, default=1.0,
                   help="sample rate in Hz")
    p.add_argument("--check-period", type=float, default=10.0,
                   help="seconds between detector passes (monitor mode)")
    p.add_argument("--alert-log", default=None, metavar="PATH",
                   help="append alerts as JSON lines")
    p.add_argument("--ui", default=None, metavar="DIR",
                   help="dashboard static files for the gateway")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    psk = bytes.fromhex(args.psk_hex)
    if len(psk) != 16:
        print("psk must be 32 hex chars (16 bytes)", file=sys.stderr)
        return 2
    try:
        client = DeviceClient(args.device, psk, encrypt=args.encrypt)
    except (DiverError, OSError) as e:
        print(f"cannot connect to device at {args.device}: {e}", file=sys.stderr)
        return 1

    state = ListenerState(alert_log_path=args.alert_log)
    if args.mode == "build-baseline":
        baseline = build_baseline(client, sample_rate_hz=args.rate,
                                  duration_s=args.duration)
        if not args.baseline:
            print("build-baseline mode needs --baseline PATH", file=sys.stderr)
            return 2
        save_baseline(baseline, args.baseline)
        print(f"baseline {baseline.ref} written to {args.baseline}")
        client.close()
        return 0

    if args.baseline and os.path.exists(args.baseline):
        state.baseline = load_baseline(args.baseline)
        print(f"loaded baseline {state.baseline.ref}")

    gateway = None
    if args.gateway is not None:
        gateway = Gateway(state, client, bind=args.gateway, ui_dir=args.ui,
                          baseline_path=args.baseline).start()
        print(f"gateway on http://{gateway.address[0]}:{gateway.address[1]}/")

    if args.mode == "monitor":
        monitor = Monitor(client, state, stream_rate_hz=args.rate,
                          check_period_s=args.check_period).start()
        print("monitoring; ctrl-c to stop")
        try:
            while True:
                time.sleep(1.0)
        except KeyboardInterrupt:
            pass
        finally:
            monitor.stop()
    else:
        run_repl(client, state)

    if gateway is not None:
        gateway.stop()
    client.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
