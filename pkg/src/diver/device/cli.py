"""``diver-device``: run the simulated device with its measurer implant.

The fixture defines the device (tasks, modules, timers, config); by
default the built-in nominal fixture is used with the given seed.
``--tick-hz`` paces simulated time against the wall clock (1000 is real
time, 0 free-runs as fast as possible).
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

from .fixture import fixture_from_json, fixture_to_json, nominal_fixture
from .host import DeviceHost


def parse_addr(text: str):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected host:port, got {text!r}")
    return host, int(port)


def parse_onoff(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diver-device",
                                description="simulated device with implant")
    p.add_argument("--fixture", default=None, metavar="PATH",
                   help="device fixture JSON (default: built-in nominal)")
    p.add_argument("--listen", type=parse_addr, default=("127.0.0.1", 7700),
                   metavar="ADDR:PORT")
    p.add_argument("--seed", type=int, default=42, help="fixture seed")
    p.add_argument("--encrypt", type=parse_onoff, default=True,
                   metavar="on|off")
    p.add_argument("--psk-hex", default="00" * 16,
                   help="pre-shared key, 32 hex chars")
    p.add_argument("--tick-hz", type=float, default=1000.0,
                   help="simulated ticks per wall second; 0 = free run")
    p.add_argument("--timeout-s", type=float, default=120.0,
                   help="client idle timeout")
    p.add_argument("--pendulum-udp", type=parse_addr, default=None,
                   metavar="ADDR:PORT",
                   help="also answer pendulum sensor datagrams here")
    p.add_argument("--write-fixture", default=None, metavar="PATH",
                   help="write the nominal fixture JSON and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    if args.write_fixture:
        with open(args.write_fixture, "w") as f:
            f.write(fixture_to_json(nominal_fixture(args.seed)) + "\n")
        print(f"fixture written to {args.write_fixture}")
        return 0

    if args.fixture:
        with open(args.fixture) as f:
            fixture = fixture_from_json(f.read())
        if args.seed != 42:
            fixture.seed = args.seed
    else:
        fixture = nominal_fixture(args.seed)

    psk = bytes.fromhex(args.psk_hex)
    if len(psk) != 16:
        print("psk must be 32 hex chars (16 bytes)", file=sys.stderr)
        return 2

    from ..measurer import MeasurerServer  # import here: keeps --write-fixture light
    host = DeviceHost(fixture, tick_hz=args.tick_hz).start()
    server = MeasurerServer(host, psk, listen=args.listen,
                            encrypt=args.encrypt,
                            idle_timeout_s=args.timeout_s).start()
    print(f"device up: measurer on {server.address[0]}:{server.address[1]} "
          f"(encrypt={'on' if args.encrypt else 'off'}, "
          f"tick_hz={args.tick_hz:g}, seed={fixture.seed})")

    controller = None
    if args.pendulum_udp is not None:
        from ..pendulum import PendulumController
        controller = PendulumController(bind=args.pendulum_udp, host=host).start()
        print(f"pendulum controller on {controller.address[0]}:{controller.address[1]}")

    try:
        while True:
            time.sleep(1.0)
    except KeyboardInterrupt:
        pass
    finally:
        if controller is not None:
            controller.stop()
        server.stop()
        host.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
