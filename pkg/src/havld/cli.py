"""Operator command line: run a director, inspect state, simulate, test.

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
Logs go to stderr; machine-readable output (tables, metrics) to stdout.
"""

from __future__ import annotations

import argparse
import logging
import signal
import sys
import threading
from importlib import resources
from pathlib import Path
from typing import Optional

from .config import ClusterConfig, ConfigFileError, load, parse
from .director import build_director
from .node import LiveDirector
from .proxy import run_backend
from .sim import ClusterSim, InvalidTopology, ScenarioParseError, load_scenario

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _setup_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(
        logging.Formatter("%(asctime)s %(levelname)s %(name)s %(message)s", "%Y-%m-%dT%H:%M:%S")
    )
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def _bundled(name: str) -> Optional[str]:
    ref = resources.files("havld") / "data" / name
    if ref.is_file():
        return ref.read_text(encoding="utf-8")
    return None


def _read_input(path: str, what: str) -> str:
    """Reads a file, falling back to the bundled data set by bare name."""
    p = Path(path)
    if p.is_file():
        return p.read_text(encoding="utf-8")
    if "/" not in path:
        text = _bundled(path)
        if text is not None:
            return text
    raise FileNotFoundError(f"{what} not found: {path}")


def _load_config(path: str, require_service: bool = True) -> ClusterConfig:
    return parse(_read_input(path, "config file"), require_service=require_service)


def _config_errors(exc: ConfigFileError) -> int:
    for err in exc.errors:
        print(f"config error: {err}", file=sys.stderr)
    return EXIT_USAGE


def cmd_run(args) -> int:
    try:
        cfg = _load_config(args.config)
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigFileError as exc:
        return _config_errors(exc)
    stop = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: stop.set())
    node = LiveDirector(cfg, args.node)
    try:
        node.run(stop)
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_list(args) -> int:
    try:
        cfg = _load_config(args.config, require_service=False)
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigFileError as exc:
        return _config_errors(exc)
    sys.stdout.write(build_director(cfg).render_table())
    return EXIT_OK


def cmd_sim(args) -> int:
    try:
        cfg = _load_config(args.config)
        events = load_scenario(_read_input(args.scenario, "scenario file"))
    except FileNotFoundError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigFileError as exc:
        return _config_errors(exc)
    except ScenarioParseError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        metrics, trace = ClusterSim(cfg).run(events, seed=args.seed)
    except InvalidTopology as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.trace:
        Path(args.trace).write_text("\n".join(trace) + ("\n" if trace else ""), encoding="utf-8")
    sys.stdout.write(metrics.summary())
    return EXIT_OK


def cmd_backend(args) -> int:
    try:
        run_backend(args.name, args.port, host=args.host)
    except OSError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="havld", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one director node (proxy + health + failover)")
    p.add_argument("--config", required=True, help="cluster config file")
    p.add_argument("--node", required=True, choices=("primary", "backup"))
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("list", help="print the virtual server table")
    p.add_argument("--config", required=True, help="cluster config file")
    p.set_defaults(fn=cmd_list)

    p = sub.add_parser("sim", help="run a simulator scenario and print metrics")
    p.add_argument("--config", required=True, help="cluster config file")
    p.add_argument("--scenario", required=True, help="scenario file (or bundled name)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="write the event trace to this file")
    p.set_defaults(fn=cmd_sim)

    p = sub.add_parser("backend", help="run a stand-in HTTP backend")
    p.add_argument("--name", required=True, help="value of the serve_server header")
    p.add_argument("--port", required=True, type=int)
    p.add_argument("--host", default="127.0.0.1")
    p.set_defaults(fn=cmd_backend)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
