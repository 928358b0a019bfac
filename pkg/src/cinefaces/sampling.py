"""Fixed-frequency frame sampling plans and external decoder orchestration.

The pipeline never decodes video itself: it renders a command per sampled
timestamp for an external tool (ffmpeg by default) and later verifies the
frame files landed where the naming scheme says they should.
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass
from pathlib import Path
from .corpus import MovieRecord

DEFAULT_INTERVAL_S = 2.0
# ffmpeg: seek, grab a single frame, write a jpeg
DEFAULT_COMMAND_TEMPLATE = (
    "ffmpeg -hide_banner -loglevel error -ss {timestamp} -i {input} "
    "-frames:v 1 -q:v 2 -y {output}"
)

PLACEHOLDERS = ("{input}", "{timestamp}", "{output}")


class MalformedTemplate(ValueError):
    pass


def frame_filename(movie_id: str, timestamp_s: float) -> str:
    """Relative frame path: <movie_id>/<timestamp in ms, zero-padded to 9>.jpg"""
    ms = round(timestamp_s * 1000)
    return f"{movie_id}/{ms:09d}.jpg"


@dataclass(frozen=True)
class SamplingPlan:
    movie_id: str
    interval_s: float
    timestamps: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.timestamps)

    def frame_paths(self, root: Path | str = "") -> list[Path]:
        root = Path(root)
        return [root / frame_filename(self.movie_id, t) for t in self.timestamps]


def build_plan(movie: MovieRecord, interval_s: float = DEFAULT_INTERVAL_S,
               duration_s: float | None = None) -> SamplingPlan:
    """Sample timestamps {0, i, 2i, ...} on the half-open [0, duration).

    ``duration_s`` overrides the runtime-derived duration (used by tests
    and for movies whose container duration differs from the metadata).
    """
    if interval_s <= 0:
        raise ValueError(f"interval_s must be positive, got {interval_s}")
    if round(interval_s * 1000) < 1:
        raise ValueError(f"interval_s below 1ms resolution: {interval_s}")
    duration = movie.duration_s if duration_s is None else float(duration_s)
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    count = len(range(0, round(duration * 1000), round(interval_s * 1000)))
    timestamps = tuple(i * interval_s for i in range(count))
    return SamplingPlan(movie_id=movie.id, interval_s=float(interval_s), timestamps=timestamps)


def render_extraction_commands(
    plan: SamplingPlan,
    template: str,
    out_dir: Path | str,
    input_path: Path | str,
) -> list[str]:
    """One decoder command per timestamp, deterministic order.

    The template must name all three placeholders {input}, {timestamp} and
    {output}; outputs follow the frame naming scheme under ``out_dir``.
    """
    missing = [p for p in PLACEHOLDERS if p not in template]
    if missing:
        raise MalformedTemplate(f"template missing placeholders: {missing}")
    out_dir = Path(out_dir)
    commands = []
    for t in plan.timestamps:
        output = out_dir / frame_filename(plan.movie_id, t)
        commands.append(
            template.replace("{input}", shlex.quote(str(input_path)))
            .replace("{timestamp}", f"{t:.3f}")
            .replace("{output}", shlex.quote(str(output)))
        )
    return commands


@dataclass
class FrameVerification:
    movie_id: str
    expected: int
    missing: list[float]  # timestamps whose frame file is absent or empty

    @property
    def complete(self) -> bool:
        return not self.missing


def verify_frames(plan: SamplingPlan, frames_dir: Path | str) -> FrameVerification:
    """List timestamps whose frame file is missing or zero-length."""
    frames_dir = Path(frames_dir)
    missing = []
    for t in plan.timestamps:
        path = frames_dir / frame_filename(plan.movie_id, t)
        if not path.is_file() or path.stat().st_size == 0:
            missing.append(t)
    return FrameVerification(movie_id=plan.movie_id, expected=len(plan), missing=missing)
