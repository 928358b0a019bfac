"""Face-detection records: schema, validation, streaming reads, detector runs.

Detection files are JSON-lines, one record per line:

    {"movie_id": str, "frame_ts_ms": int, "x": float, "y": float,
     "w": float, "h": float, "gender": "female"|"male", "confidence": float?}

Coordinates are normalized to the frame dimensions (origin top-left), so
movies with different resolutions or aspect ratios compare directly. The
reader never materializes a whole corpus: it buffers one movie at a time,
and summaries merge associatively so per-movie work can run in parallel.
"""

from __future__ import annotations

import json
import math
import subprocess
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .sampling import SamplingPlan

GENDERS = ("female", "male")

_BBOX_SLACK = 1e-9  # float dust allowance on the x+w <= 1 / y+h <= 1 checks


class DetectionError(ValueError):
    pass


class InvalidDetection(DetectionError):
    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}{': ' + detail if detail else ''}")
        self.code = code


class CorruptInput(DetectionError):
    pass


class ContiguityError(DetectionError):
    pass


class ProtocolViolation(RuntimeError):
    pass


class DetectorFailed(RuntimeError):
    pass


@dataclass(frozen=True, slots=True)
class FaceDetection:
    movie_id: str
    frame_ts_ms: int
    x: float
    y: float
    w: float
    h: float
    gender: str
    confidence: Optional[float] = None

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    def as_dict(self) -> dict:
        d = {
            "movie_id": self.movie_id, "frame_ts_ms": self.frame_ts_ms,
            "x": self.x, "y": self.y, "w": self.w, "h": self.h,
            "gender": self.gender,
        }
        if self.confidence is not None:
            d["confidence"] = self.confidence
        return d


@dataclass(frozen=True, slots=True)
class FrameDetections:
    movie_id: str
    frame_ts_ms: int
    faces: tuple[FaceDetection, ...]

    def count(self, gender: str) -> int:
        return sum(1 for f in self.faces if f.gender == gender)


def validate_detection(rec: FaceDetection) -> None:
    """Raise InvalidDetection (with a stable code) on any broken invariant."""
    if rec.frame_ts_ms < 0:
        raise InvalidDetection("NegativeTimestamp", str(rec.frame_ts_ms))
    if rec.gender not in GENDERS:
        raise InvalidDetection("InvalidGender", repr(rec.gender))
    if rec.w <= 0 or rec.h <= 0:
        raise InvalidDetection("NonPositiveBox", f"w={rec.w} h={rec.h}")
    if rec.x < 0 or rec.y < 0 or rec.x + rec.w > 1.0 + _BBOX_SLACK or rec.y + rec.h > 1.0 + _BBOX_SLACK:
        raise InvalidDetection("OutOfBounds", f"x={rec.x} y={rec.y} w={rec.w} h={rec.h}")
    if rec.confidence is not None and not 0.0 <= rec.confidence <= 1.0:
        raise InvalidDetection("InvalidConfidence", str(rec.confidence))


def parse_detection_line(line: str) -> FaceDetection:
    try:
        raw = json.loads(line)
    except json.JSONDecodeError as exc:
        raise InvalidDetection("NotJson", str(exc)) from exc
    if not isinstance(raw, dict):
        raise InvalidDetection("NotJson", "expected object")
    try:
        rec = FaceDetection(
            movie_id=str(raw["movie_id"]),
            frame_ts_ms=int(raw["frame_ts_ms"]),
            x=float(raw["x"]), y=float(raw["y"]),
            w=float(raw["w"]), h=float(raw["h"]),
            gender=raw["gender"],
            confidence=float(raw["confidence"]) if raw.get("confidence") is not None else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidDetection("BadField", str(exc)) from exc
    validate_detection(rec)
    return rec


def detection_to_json(rec: FaceDetection) -> str:
    return json.dumps(rec.as_dict(), sort_keys=True)


@dataclass
class ReadTally:
    files: int = 0
    records: int = 0
    invalid: int = 0
    invalid_by_file: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "files": self.files, "records": self.records, "invalid": self.invalid,
            "invalid_by_file": dict(sorted(self.invalid_by_file.items())),
        }


class DetectionReader:
    """Streams FrameDetections from a detection file or directory of files.

    Records are grouped per (movie_id, frame_ts_ms); a movie's frames are
    buffered (one movie at a time, never the whole corpus) and emitted in
    timestamp order. Directories are walked in sorted filename order, so a
    one-file-per-movie layout named by id yields a fully sorted stream. A
    movie id reappearing after its run ended means the input interleaves
    movies and the bounded-memory contract cannot hold: hard error.

    Invalid lines are counted per file and skipped; more than
    ``max_invalid_fraction`` of a file's data lines being invalid is a
    CorruptInput hard error.
    """

    def __init__(self, path, max_invalid_fraction: float = 0.01):
        self.path = Path(path)
        self.max_invalid_fraction = max_invalid_fraction
        self.tally = ReadTally()
        if self.path.is_dir():
            self._files = sorted(p for p in self.path.iterdir()
                                 if p.is_file() and p.suffix in (".jsonl", ".ndjson"))
            if not self._files:
                raise CorruptInput(f"{path}: no detection files (*.jsonl) in directory")
        elif self.path.is_file():
            self._files = [self.path]
        else:
            raise CorruptInput(f"{path}: not readable")

    def __iter__(self) -> Iterator[FrameDetections]:
        finished: set[str] = set()
        current_movie: Optional[str] = None
        frames: dict[int, list[FaceDetection]] = {}

        def flush() -> Iterator[FrameDetections]:
            for ts in sorted(frames):
                yield FrameDetections(movie_id=current_movie, frame_ts_ms=ts,
                                      faces=tuple(frames[ts]))
            frames.clear()

        for file in self._files:
            self.tally.files += 1
            lines = invalid = 0
            with file.open(encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    lines += 1
                    try:
                        rec = parse_detection_line(line)
                    except InvalidDetection:
                        invalid += 1
                        continue
                    if rec.movie_id != current_movie:
                        if rec.movie_id in finished:
                            raise ContiguityError(
                                f"{file}: movie {rec.movie_id!r} reappears after its run ended")
                        if current_movie is not None:
                            yield from flush()
                            finished.add(current_movie)
                        current_movie = rec.movie_id
                    frames.setdefault(rec.frame_ts_ms, []).append(rec)
            self.tally.records += lines - invalid
            self.tally.invalid += invalid
            if invalid:
                self.tally.invalid_by_file[str(file)] = invalid
            if lines and invalid / lines > self.max_invalid_fraction:
                raise CorruptInput(
                    f"{file}: {invalid} of {lines} lines invalid "
                    f"(> {self.max_invalid_fraction:.0%} threshold)")
        if current_movie is not None:
            yield from flush()


def read_detections(path, max_invalid_fraction: float = 0.01) -> DetectionReader:
    return DetectionReader(path, max_invalid_fraction=max_invalid_fraction)


# ---------------------------------------------------------------------------
# external detector process
# ---------------------------------------------------------------------------

def run_external_detector(
    cmd: list[str],
    plan: SamplingPlan,
    frames_dir,
) -> Iterator[FrameDetections]:
    """Drive a detector subprocess over a sampling plan's frames.

    Protocol: one frame path per stdin line; for each frame the detector
    emits zero or more record lines and then one blank terminator line on
    stdout. Anything that is neither blank nor a valid record is a
    ProtocolViolation; a nonzero exit is DetectorFailed with the captured
    stderr.
    """
    frames_dir = Path(frames_dir)
    paths = [str(p) for p in plan.frame_paths(frames_dir)]
    proc = subprocess.Popen(
        cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
        text=True, bufsize=1,
    )

    def feed():
        try:
            for p in paths:
                proc.stdin.write(p + "\n")
            proc.stdin.close()
        except BrokenPipeError:
            pass

    writer = threading.Thread(target=feed, daemon=True)
    writer.start()

    try:
        frame_index = 0
        batch: list[FaceDetection] = []
        for line in proc.stdout:
            line = line.rstrip("\n")
            if line.strip() == "":
                if batch:
                    yield FrameDetections(
                        movie_id=batch[0].movie_id,
                        frame_ts_ms=batch[0].frame_ts_ms,
                        faces=tuple(batch),
                    )
                    batch = []
                frame_index += 1
                continue
            try:
                rec = parse_detection_line(line)
            except InvalidDetection as exc:
                proc.kill()
                raise ProtocolViolation(f"detector emitted a non-record line: {line[:200]!r} ({exc})")
            batch.append(rec)
        if batch:
            yield FrameDetections(batch[0].movie_id, batch[0].frame_ts_ms, tuple(batch))
    finally:
        writer.join(timeout=10)
        stderr = proc.stderr.read()
        code = proc.wait()
    if code != 0:
        raise DetectorFailed(f"detector exited {code}: {stderr.strip()[-2000:]}")


# ---------------------------------------------------------------------------
# summaries
# ---------------------------------------------------------------------------

@dataclass
class DetectionSummary:
    faces: int = 0
    frames_with_faces: int = 0
    gender_counts: dict = field(default_factory=lambda: {g: 0 for g in GENDERS})
    movie_faces: dict = field(default_factory=dict)

    def add_frame(self, frame: FrameDetections) -> None:
        if not frame.faces:
            return
        self.frames_with_faces += 1
        self.faces += len(frame.faces)
        self.movie_faces[frame.movie_id] = (
            self.movie_faces.get(frame.movie_id, 0) + len(frame.faces))
        for face in frame.faces:
            self.gender_counts[face.gender] += 1

    def merge(self, other: "DetectionSummary") -> "DetectionSummary":
        out = DetectionSummary(
            faces=self.faces + other.faces,
            frames_with_faces=self.frames_with_faces + other.frames_with_faces,
        )
        for g in GENDERS:
            out.gender_counts[g] = self.gender_counts[g] + other.gender_counts[g]
        out.movie_faces = dict(self.movie_faces)
        for mid, c in other.movie_faces.items():
            out.movie_faces[mid] = out.movie_faces.get(mid, 0) + c
        return out

    @property
    def movie_count(self) -> int:
        return len(self.movie_faces)

    @property
    def mean_faces_per_movie(self) -> float:
        if not self.movie_faces:
            return 0.0
        return self.faces / len(self.movie_faces)

    @property
    def std_faces_per_movie(self) -> float:
        if not self.movie_faces:
            return 0.0
        mean = self.mean_faces_per_movie
        # summed in sorted movie order so merged and directly-computed
        # summaries agree bit-for-bit (float addition is order-sensitive)
        squares = sum((self.movie_faces[mid] - mean) ** 2
                      for mid in sorted(self.movie_faces))
        return math.sqrt(squares / len(self.movie_faces))

    def as_dict(self) -> dict:
        return {
            "faces": self.faces,
            "frames_with_faces": self.frames_with_faces,
            "movies": self.movie_count,
            "gender_counts": dict(self.gender_counts),
            "mean_faces_per_movie": self.mean_faces_per_movie,
            "std_faces_per_movie": self.std_faces_per_movie,
        }


def summarize(stream: Iterable[FrameDetections]) -> DetectionSummary:
    """Corpus-level totals; associative and commutative over disjoint movies."""
    summary = DetectionSummary()
    for frame in stream:
        summary.add_frame(frame)
    return summary
