from __future__ import annotations

import argparse

from .bridge import run_bridge
from .engine import BridgeConfig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="detector-bridge",
        description="face detection bridge: frame paths on stdin, "
                    "detection records on stdout (blank line per frame)")
    parser.add_argument("--model", default="builtin",
                        help="'builtin' or import:<module>:<factory>")
    parser.add_argument("--threshold", type=float, default=0.0,
                        help="drop detections scored below this (when scored)")
    parser.add_argument("--batch-size", type=int, default=8)
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)
    config = BridgeConfig(model=args.model, threshold=args.threshold,
                          batch_size=args.batch_size, device=args.device)
    return run_bridge(config)


if __name__ == "__main__":
    raise SystemExit(main())
