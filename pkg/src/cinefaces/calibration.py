"""Human-evaluation protocol: tasks, review aggregation, confusion matrices,
and the bias-corrected female face ratio.

The correction is driven by two per-period precision factors taken from the
gender confusion matrix: lambda_male, the proportion of detected-male faces
that humans confirmed male, and lambda_female, likewise for detected-female
faces. The corrected ratio is the affine map

    corrected = (1 - lambda_male) + (lambda_male + lambda_female - 1) * raw

which is also what per-face fractional counting (a detected-female face
contributes lambda_female female + 1-lambda_female male) yields in aggregate.
"""

from __future__ import annotations

import csv
import json
import logging
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .corpus import CorpusManifest, PeriodPartition
from .detection_io import FrameDetections
from .sampling import frame_filename

log = logging.getLogger("cinefaces.calibration")

IN_BOX_ANSWERS = ("female", "male", "doubt", "no_face")
OUTSIDE_ANSWERS = ("yes", "no", "doubt")

EXPORT_COLUMNS = (
    "task_id", "movie_id", "frame_ts_ms", "detected_gender",
    "reviewer_id", "in_box", "outside_box", "submitted_at",
)

DEFAULT_MIN_TASKS_PER_PERIOD = 50


class CalibrationError(ValueError):
    pass


class InsufficientPool(CalibrationError):
    def __init__(self, shortfall: dict):
        super().__init__(f"single-face frame pool too small: shortfall {shortfall}")
        self.shortfall = shortfall


class NonIdentifiable(CalibrationError):
    """lambda_male + lambda_female <= 1: the correction slope vanishes."""


class UnknownPeriod(CalibrationError):
    pass


@dataclass(frozen=True)
class AnnotationTask:
    task_id: str
    movie_id: str
    frame_ts_ms: int
    bbox: tuple[float, float, float, float]
    detected_gender: str
    frame_path: str

    def as_dict(self) -> dict:
        x, y, w, h = self.bbox
        return {
            "task_id": self.task_id, "movie_id": self.movie_id,
            "frame_ts_ms": self.frame_ts_ms,
            "bbox": {"x": x, "y": y, "w": w, "h": h},
            "detected_gender": self.detected_gender,
            "frame_path": self.frame_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotationTask":
        b = d["bbox"]
        return cls(
            task_id=d["task_id"], movie_id=d["movie_id"],
            frame_ts_ms=int(d["frame_ts_ms"]),
            bbox=(float(b["x"]), float(b["y"]), float(b["w"]), float(b["h"])),
            detected_gender=d["detected_gender"], frame_path=d["frame_path"],
        )


@dataclass(frozen=True)
class Review:
    task_id: str
    reviewer_id: str
    in_box: str
    outside_box: str
    submitted_at: str

    def validate(self) -> None:
        if self.in_box not in IN_BOX_ANSWERS:
            raise CalibrationError(f"invalid in_box answer {self.in_box!r}")
        if self.outside_box not in OUTSIDE_ANSWERS:
            raise CalibrationError(f"invalid outside_box answer {self.outside_box!r}")


@dataclass(frozen=True)
class AdjudicatedTask:
    task_id: str
    movie_id: str
    detected_gender: str
    in_box: str
    outside_box: str


# ---------------------------------------------------------------------------
# task sampling
# ---------------------------------------------------------------------------

def sample_tasks(
    detections: Iterable[FrameDetections],
    manifest: CorpusManifest,
    n: int,
    seed: int,
    frames_root: str = "frames",
) -> list[AnnotationTask]:
    """Draw n review tasks: n/2 per detected gender, one per distinct movie.

    Candidates are frames on which exactly one face was detected. The draw
    is reproducible for a fixed seed and input stream: each movie keeps a
    size-1 seeded reservoir per gender, then movies are chosen with a
    seeded shuffle (gender-exclusive movies first so flexible ones remain
    available to the other gender).
    """
    if n < 2 or n % 2:
        raise ValueError("n must be an even number >= 2")
    known = set(manifest.id_map)
    # movie -> gender -> (candidate_count, kept (ts, bbox))
    kept: dict[str, dict[str, tuple[int, tuple]]] = {}
    rngs: dict[tuple[str, str], random.Random] = {}
    for frame in detections:
        if len(frame.faces) != 1 or frame.movie_id not in known:
            continue
        face = frame.faces[0]
        slot = kept.setdefault(frame.movie_id, {})
        count, choice = slot.get(face.gender, (0, None))
        count += 1
        key = (frame.movie_id, face.gender)
        rng = rngs.get(key)
        if rng is None:
            rng = rngs[key] = random.Random(f"{seed}:{frame.movie_id}:{face.gender}")
        if choice is None or rng.random() < 1.0 / count:
            choice = (frame.frame_ts_ms, (face.x, face.y, face.w, face.h))
        slot[face.gender] = (count, choice)

    only_f = sorted(m for m, g in kept.items() if "female" in g and "male" not in g)
    only_m = sorted(m for m, g in kept.items() if "male" in g and "female" not in g)
    both = sorted(m for m, g in kept.items() if "female" in g and "male" in g)

    need = n // 2
    shortfall = {
        "female": max(0, need - len(only_f) - len(both)),
        "male": max(0, need - len(only_m) - len(both)),
        "movies": max(0, n - len(only_f) - len(only_m) - len(both)),
    }
    if any(shortfall.values()):
        raise InsufficientPool(shortfall)

    rng = random.Random(seed)
    rng.shuffle(only_f)
    rng.shuffle(only_m)
    rng.shuffle(both)
    # gender-exclusive movies first, so flexible ones stay available
    female_movies = only_f[:need]
    take_from_both = max(0, need - len(female_movies))
    female_movies = female_movies + both[:take_from_both]
    remaining_both = both[take_from_both:]
    male_movies = only_m[:need]
    male_movies = male_movies + remaining_both[: need - len(male_movies)]

    chosen = [(m, "female") for m in female_movies] + [(m, "male") for m in male_movies]
    chosen.sort(key=lambda pair: (pair[1], pair[0]))
    tasks = []
    for i, (movie_id, gender) in enumerate(chosen, start=1):
        ts, bbox = kept[movie_id][gender][1]
        tasks.append(AnnotationTask(
            task_id=f"t{i:05d}", movie_id=movie_id, frame_ts_ms=ts,
            bbox=bbox, detected_gender=gender,
            frame_path=str(Path(frames_root) / frame_filename(movie_id, ts / 1000.0)),
        ))
    return tasks


# ---------------------------------------------------------------------------
# review aggregation and confusion matrices
# ---------------------------------------------------------------------------

def _plurality(answers: Sequence[str]) -> Optional[str]:
    counts = Counter(answers).most_common()
    if len(counts) > 1 and counts[0][1] == counts[1][1]:
        return None
    return counts[0][0]


def aggregate_reviews(reviews: Sequence[Review]) -> Optional[tuple[str, str]]:
    """Majority (in_box, outside_box) answers, or None on an exact tie.

    Each question is adjudicated separately by strict plurality; a tie on
    either makes the whole task indeterminate and it is dropped from the
    matrices rather than broken arbitrarily.
    """
    if not reviews:
        raise ValueError("aggregate_reviews: no reviews")
    in_box = _plurality([r.in_box for r in reviews])
    outside = _plurality([r.outside_box for r in reviews])
    if in_box is None or outside is None:
        return None
    return in_box, outside


@dataclass
class FaceConfusion:
    """Face-detection outcomes over review images, two observations each:
    the bounding box (positive prediction) and the rest of the frame
    (negative prediction)."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
                "accuracy": self.accuracy}


@dataclass
class GenderConfusion:
    """Detected gender (rows) against the human majority answer (columns)."""

    counts: dict

    def __init__(self, counts: Optional[dict] = None):
        self.counts = {(d, h): 0 for d in ("female", "male") for h in IN_BOX_ANSWERS}
        if counts:
            for key, v in counts.items():
                self.counts[key] = v

    def add(self, detected: str, human: str, k: int = 1) -> None:
        self.counts[(detected, human)] += k

    def row(self, detected: str) -> dict:
        return {h: self.counts[(detected, h)] for h in IN_BOX_ANSWERS}

    def row_total(self, detected: str) -> int:
        return sum(self.row(detected).values())

    @property
    def accuracy(self) -> float:
        """Share of correct gender calls among the answers held against the
        model: inconclusive (doubt / no-face) answers are dropped from the
        detected-female row but count as errors in the detected-male row."""
        f = self.row("female")
        m = self.row("male")
        correct = f["female"] + m["male"]
        considered = f["female"] + f["male"] + sum(m.values())
        return correct / considered

    def as_dict(self) -> dict:
        return {
            "rows": {d: self.row(d) for d in ("female", "male")},
            "accuracy": self.accuracy,
        }


def build_confusions(
    adjudicated: Iterable[AdjudicatedTask],
) -> tuple[FaceConfusion, GenderConfusion]:
    """Cross-tabulate majority answers into the two confusion matrices.

    Box side: any in-box answer naming a face (female/male/doubt) is a true
    positive, no_face a false positive. Frame side: outside faces reported
    means a miss (false negative), none means a true negative; outside
    'doubt' answers are excluded.
    """
    fc = FaceConfusion()
    gc = GenderConfusion()
    for task in adjudicated:
        if task.in_box != "no_face":
            fc.tp += 1
        else:
            fc.fp += 1
        if task.outside_box == "yes":
            fc.fn += 1
        elif task.outside_box == "no":
            fc.tn += 1
        gc.add(task.detected_gender, task.in_box)
    return fc, gc


@dataclass(frozen=True)
class FactorPair:
    lambda_male: float
    lambda_female: float

    @property
    def slope(self) -> float:
        return self.lambda_male + self.lambda_female - 1.0


def precision_factors(gc: GenderConfusion) -> FactorPair:
    """Per-row true-positive proportions over conclusive answers only.

    lambda_female = female-row female count / (female + male counts there);
    lambda_male likewise on the male row. Doubt and no-face answers never
    enter the denominators. Raises NonIdentifiable when the implied
    correction slope is not positive.
    """
    f = gc.row("female")
    m = gc.row("male")
    f_den = f["female"] + f["male"]
    m_den = m["female"] + m["male"]
    if f_den == 0 or m_den == 0:
        raise CalibrationError("a detected-gender row has no conclusive answers")
    pair = FactorPair(lambda_male=m["male"] / m_den, lambda_female=f["female"] / f_den)
    if pair.slope <= 0.0:
        raise NonIdentifiable(
            f"lambda_male + lambda_female = {pair.lambda_male + pair.lambda_female:.4f} <= 1")
    return pair


# ---------------------------------------------------------------------------
# correction factors and the corrected ratio
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodFactors:
    lambda_male: float
    lambda_female: float
    n_tasks: int

    @property
    def pair(self) -> FactorPair:
        return FactorPair(self.lambda_male, self.lambda_female)


@dataclass
class CorrectionFactors:
    by_period: dict

    def for_period(self, period_key: str) -> PeriodFactors:
        try:
            return self.by_period[period_key]
        except KeyError:
            raise UnknownPeriod(f"no correction factors for period {period_key!r}") from None

    @classmethod
    def uniform(cls, period_keys: Iterable[str], lambda_male: float = 1.0,
                lambda_female: float = 1.0, n_tasks: int = 0) -> "CorrectionFactors":
        pf = PeriodFactors(lambda_male, lambda_female, n_tasks)
        return cls(by_period={k: pf for k in period_keys})

    def to_json(self) -> str:
        doc = {
            key: {"lambda_male": pf.lambda_male, "lambda_female": pf.lambda_female,
                  "n_tasks": pf.n_tasks}
            for key, pf in sorted(self.by_period.items())
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CorrectionFactors":
        doc = json.loads(text)
        by_period = {
            key: PeriodFactors(
                lambda_male=float(v["lambda_male"]),
                lambda_female=float(v["lambda_female"]),
                n_tasks=int(v.get("n_tasks", 0)),
            )
            for key, v in doc.items()
        }
        return cls(by_period=by_period)

    @classmethod
    def load(cls, path) -> "CorrectionFactors":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def correct_ffr(raw_ffr: float, factors: CorrectionFactors, period_key: str,
                on_clamp=None) -> float:
    """Affine bias correction of a raw female face ratio.

    corrected = (1 - lambda_male) + slope * raw, clamped to [0, 1]; a clamp
    fires ``on_clamp`` (or a log warning) because the affine map can exit
    the unit interval on extreme inputs.
    """
    if not 0.0 <= raw_ffr <= 1.0:
        raise ValueError(f"raw_ffr must be in [0,1], got {raw_ffr}")
    pf = factors.for_period(period_key)
    pair = pf.pair
    if pair.slope <= 0.0:
        raise NonIdentifiable(
            f"period {period_key}: lambda_male + lambda_female <= 1")
    value = (1.0 - pair.lambda_male) + pair.slope * raw_ffr
    if value < 0.0 or value > 1.0:
        clamped = min(1.0, max(0.0, value))
        event = {"event": "ffr-clamped", "period": period_key,
                 "raw": raw_ffr, "unclamped": value, "clamped": clamped}
        if on_clamp is not None:
            on_clamp(event)
        else:
            log.warning("corrected ffr %.4f clamped to %.4f", value, clamped)
        return clamped
    return value


def correct_counts(
    n_female_det: float, n_male_det: float,
    factors: CorrectionFactors, period_key: str,
) -> tuple[float, float]:
    """Fractional reattribution of detected counts; preserves the total.

    A detected-female face counts lambda_female female and the remainder
    male; a detected-male face counts lambda_male male and the remainder
    female.
    """
    pf = factors.for_period(period_key)
    if pf.pair.slope <= 0.0:
        raise NonIdentifiable(f"period {period_key}: non-identifiable factors")
    f_hat = pf.lambda_female * n_female_det + (1.0 - pf.lambda_male) * n_male_det
    m_hat = (1.0 - pf.lambda_female) * n_female_det + pf.lambda_male * n_male_det
    return f_hat, m_hat


def factors_by_period(
    adjudicated: Sequence[AdjudicatedTask],
    partition: PeriodPartition,
    manifest: CorpusManifest,
    min_tasks: int = DEFAULT_MIN_TASKS_PER_PERIOD,
    on_warning=None,
) -> CorrectionFactors:
    """Per-period precision factors, with a global fallback for sparse periods.

    Model error drifts over the corpus timeline, so each period gets its
    own pair computed from that period's sub-table; a period with fewer
    adjudicated tasks than ``min_tasks`` falls back to the global factors
    with a warning instead of trusting a noisy sub-table.
    """
    id_map = manifest.id_map
    per_period: dict[str, list[AdjudicatedTask]] = {p.key: [] for p in partition.periods}
    for task in adjudicated:
        movie = id_map.get(task.movie_id)
        if movie is None:
            raise CalibrationError(f"task {task.task_id}: movie {task.movie_id!r} not in manifest")
        period = partition.period_for_year(movie.year)
        per_period[period.key].append(task)

    _, global_gc = build_confusions(adjudicated)
    global_pair = precision_factors(global_gc)

    by_period = {}
    for key, tasks in per_period.items():
        if len(tasks) >= min_tasks:
            _, gc = build_confusions(tasks)
            pair = precision_factors(gc)
            by_period[key] = PeriodFactors(pair.lambda_male, pair.lambda_female, len(tasks))
        else:
            event = {"event": "sparse-period-fallback", "period": key,
                     "n_tasks": len(tasks), "min_tasks": min_tasks}
            if on_warning is not None:
                on_warning(event)
            else:
                log.warning("period %s has %d adjudicated tasks (< %d); using global factors",
                            key, len(tasks), min_tasks)
            by_period[key] = PeriodFactors(
                global_pair.lambda_male, global_pair.lambda_female, len(tasks))
    return CorrectionFactors(by_period=by_period)


# ---------------------------------------------------------------------------
# review export parsing (the annotation service emits this CSV)
# ---------------------------------------------------------------------------

def read_review_export(path) -> list[dict]:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in EXPORT_COLUMNS if c not in (reader.fieldnames or ())]
        if missing:
            raise CalibrationError(f"{path}: export missing columns {missing}")
        rows.extend(reader)
    return rows


def adjudicate_export(rows: Iterable[dict]) -> list[AdjudicatedTask]:
    """Group export rows by task, take majorities, drop indeterminate tasks."""
    by_task: dict[str, list[dict]] = {}
    for row in rows:
        by_task.setdefault(row["task_id"], []).append(row)
    adjudicated = []
    for task_id in sorted(by_task):
        rows_for_task = by_task[task_id]
        reviews = [
            Review(task_id=task_id, reviewer_id=r["reviewer_id"], in_box=r["in_box"],
                   outside_box=r["outside_box"], submitted_at=r.get("submitted_at", ""))
            for r in rows_for_task
        ]
        for review in reviews:
            review.validate()
        majority = aggregate_reviews(reviews)
        if majority is None:
            continue
        first = rows_for_task[0]
        adjudicated.append(AdjudicatedTask(
            task_id=task_id, movie_id=first["movie_id"],
            detected_gender=first["detected_gender"],
            in_box=majority[0], outside_box=majority[1],
        ))
    return adjudicated
