"""Entry point: serve the gateway or emit conformance fixtures."""

from __future__ import annotations

import argparse
import sys

from .app import GatewayConfig, serve
from .backends import BackendUnavailable, FakeDeterministicBackend, load_quality_backend
from .fixtures import emit_fixtures


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="alsel-gateway")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("serve", help="run the scoring service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8040)
    p.add_argument("--max-batch", type=int, default=256)
    p.add_argument("--backend", choices=("fake",), default="fake",
                   help="translation backend (reference build ships the fake one)")
    p.add_argument("--quality-backend",
                   help="real QE backend spec, e.g. comet:<checkpoint> "
                        "(defaults to $ALSEL_QE_CHECKPOINT when set)")

    p = commands.add_parser("emit-fixtures", help="write golden request/response files")
    p.add_argument("--outdir", required=True)

    args = parser.parse_args(argv)
    if args.command == "emit-fixtures":
        checksums = emit_fixtures(args.outdir)
        for name in sorted(checksums):
            print(f"{checksums[name]}  {name}")
        return 0

    quality = None
    if args.quality_backend:
        try:
            quality = load_quality_backend(args.quality_backend)
        except BackendUnavailable as exc:
            print(f"alsel-gateway: refusing to start: {exc}", file=sys.stderr)
            return 1
    config = GatewayConfig(
        max_batch=args.max_batch,
        backend=FakeDeterministicBackend(),
        quality_backend=quality,
    )
    serve(config, host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main())
