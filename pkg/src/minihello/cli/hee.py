"""hee: the runtime engine executable.

Modes:
    hee --host NAME --listen EP [--seed EP]... --run PKG.rpk [-- MAIN ARGS...]
    hee --host NAME --listen EP --serve          (serve requests until killed)
    hee sim TOPOLOGY.txt [--sim-seed N]          (deterministic multi-host run)

Exit codes: main's return value; 101 configuration error; 102 listen
failure; 103 no main in the runpack. After main returns, local queues drain
and connections close before exit.
"""

from __future__ import annotations

import argparse
import signal
import sys

from ..errors import EngineError
from ..node import Node
from ..runpack.image import ImageFormatError, load_file
from ..simharness import ScenarioDeadlock, parse_topology, run_scenario
from .config import ConfigError, build_engine_config, load_config_file

EXIT_CONFIG = 101
EXIT_LISTEN = 102
EXIT_NO_MAIN = 103


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hee", description="Run mini-hello runpacks across hosts.")
    parser.add_argument("--config", help="config file (key = value lines)")
    parser.add_argument("--host", help="unique host name")
    parser.add_argument("--listen", help="listen endpoint, e.g. 0.0.0.0:7001")
    parser.add_argument("--seed", action="append", default=[],
                        help="peer endpoint to connect to at startup")
    parser.add_argument("--primary", action="store_true",
                        help="mark this host as the computer's primary host")
    parser.add_argument("--grant", action="append", default=[],
                        help="host-map entry sid-hex:mask-bits")
    parser.add_argument("--lockdown", action="store_true",
                        help="no implicit anonymous grant")
    parser.add_argument("--stdout", help="redirect program output to a file")
    parser.add_argument("--call-timeout", type=int,
                        help="remote call timeout in milliseconds")
    parser.add_argument("--run", help="runpack to execute")
    parser.add_argument("--serve", action="store_true",
                        help="serve remote requests until terminated")
    return parser


def _sim_main(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="hee sim")
    parser.add_argument("topology", help="topology file")
    parser.add_argument("--sim-seed", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        topo = parse_topology(args.topology)
        transcript = run_scenario(topo, seed=args.sim_seed)
    except (ValueError, OSError, ImageFormatError) as exc:
        print(f"hee sim: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioDeadlock as exc:
        print(f"hee sim: deadlock: {exc}", file=sys.stderr)
        return 1
    out = sys.stdout.buffer
    for host in sorted(transcript.stdout):
        code = transcript.exit_codes.get(host, "-")
        out.write(f"=== host {host} (exit {code}) ===\n".encode())
        out.write(transcript.stdout[host])
        if not transcript.stdout[host].endswith(b"\n"):
            out.write(b"\n")
    out.write(f"=== {len(transcript.frames)} frames, "
              f"end tick {transcript.end_tick} ===\n".encode())
    out.flush()
    return 0


def main(argv: list[str] | None = None) -> int:
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 20_000))
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] == "sim":
        return _sim_main(argv[1:])

    main_args: list[str] = []
    if "--" in argv:
        split = argv.index("--")
        argv, main_args = argv[:split], argv[split + 1:]
    args = _build_parser().parse_args(argv)

    try:
        values = load_config_file(args.config) if args.config else {"seed": [], "grant": []}
        if args.host:
            values["host"] = args.host
        if args.listen:
            values["listen"] = args.listen
        values["seed"] = list(values.get("seed", [])) + args.seed
        if args.primary:
            values["primary"] = True
        if args.lockdown:
            values["lockdown"] = True
        if args.stdout:
            values["stdout_path"] = args.stdout
        if args.call_timeout is not None:
            values["call_timeout_ms"] = args.call_timeout
        for entry in args.grant:
            from ..security import parse_grant_line
            values.setdefault("grant", []).append(parse_grant_line(entry))
        config = build_engine_config(values)
    except (ConfigError, ValueError) as exc:
        print(f"hee: config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if not args.run and not args.serve:
        print("hee: nothing to do (need --run or --serve)", file=sys.stderr)
        return EXIT_CONFIG

    image = None
    if args.run:
        try:
            image = load_file(args.run)
        except (OSError, ImageFormatError) as exc:
            print(f"hee: {args.run}: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    node = Node(config)
    try:
        node.start()
    except OSError as exc:
        print(f"hee: listen: {exc}", file=sys.stderr)
        node.shutdown()
        return EXIT_LISTEN
    try:
        node.connect_seeds()
    except EngineError as err:
        print(f"hee: seed connect failed: {err}", file=sys.stderr)
        node.shutdown()
        return EXIT_LISTEN

    try:
        if args.serve:
            stop = {"flag": False}

            def on_signal(_sig, _frm):
                stop["flag"] = True

            signal.signal(signal.SIGINT, on_signal)
            signal.signal(signal.SIGTERM, on_signal)
            import time
            while not stop["flag"]:
                time.sleep(0.1)
            return 0
        try:
            code = node.run_main(image, main_args)
        except EngineError as err:
            if err.code == "NoMainFound":
                print(f"hee: {err}", file=sys.stderr)
                return EXIT_NO_MAIN
            print(f"hee: {err}", file=sys.stderr)
            return 1
        return code % 256
    finally:
        node.shutdown()


if __name__ == "__main__":
    sys.exit(main())
