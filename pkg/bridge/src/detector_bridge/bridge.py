"""Protocol loop: frame paths in, detection record lines out.

For every input path the bridge emits zero or more record lines followed
by one blank terminator line, in input order. An unreadable image or a
path that does not follow the <movie_id>/<timestamp_ms>.jpg naming scheme
gets a diagnostic on stderr and just the terminator, so one bad frame
never kills a run.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .engine import BridgeConfig, load_model


def parse_frame_path(path: Path) -> tuple[str, int]:
    """<movie_id>/<timestamp_ms>.jpg -> (movie_id, timestamp_ms)."""
    ts = int(path.stem)
    if ts < 0:
        raise ValueError("negative timestamp")
    movie_id = path.parent.name
    if not movie_id:
        raise ValueError("path has no movie directory")
    return movie_id, ts


def load_image(path: Path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def run_bridge(config: BridgeConfig, stdin=None, stdout=None, stderr=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    model = load_model(config)

    for line in stdin:
        raw = line.strip()
        if not raw:
            continue
        path = Path(raw)
        try:
            movie_id, ts = parse_frame_path(path)
            image = load_image(path)
        except Exception as exc:
            print(f"detector-bridge: skipping {raw!r}: {exc}", file=stderr)
            stdout.write("\n")
            stdout.flush()
            continue
        height, width = image.shape[:2]
        for box in model.detect(image):
            if box.confidence is not None and box.confidence < config.threshold:
                continue
            record = {
                "movie_id": movie_id,
                "frame_ts_ms": ts,
                "x": round(box.x / width, 6),
                "y": round(box.y / height, 6),
                "w": round(box.w / width, 6),
                "h": round(box.h / height, 6),
                "gender": box.gender,
            }
            if box.confidence is not None:
                record["confidence"] = round(box.confidence, 6)
            stdout.write(json.dumps(record, sort_keys=True) + "\n")
        stdout.write("\n")
        stdout.flush()
    return 0
