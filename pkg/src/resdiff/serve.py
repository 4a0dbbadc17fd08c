"""Loopback predictor server: ``python -m resdiff.serve --kind SPEC``.

Serves any built-in predictor spec over the wire protocol, on standard
streams by default or on a TCP address with ``--listen``. Used by the
test suite and by local experiments; the reference cross-language
server ships as its own package.
"""

from __future__ import annotations

import argparse

from .cli import parse_predictor_spec
from .protocol import serve_stdio, serve_tcp


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="python -m resdiff.serve",
        description="serve a built-in predictor over the wire protocol",
    )
    parser.add_argument("--kind", required=True, help="predictor spec, e.g. constant:0.1 or echo")
    parser.add_argument("--listen", default=None, help="host:port to listen on (default: stdio)")
    args = parser.parse_args(argv)
    predictor, closer = parse_predictor_spec(args.kind)
    try:
        if args.listen:
            host, _, port = args.listen.rpartition(":")
            serve_tcp(predictor, host or "127.0.0.1", int(port))
        else:
            serve_stdio(predictor)
    except KeyboardInterrupt:
        pass
    finally:
        closer()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
