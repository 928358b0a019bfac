"""Annotation service: deliver review tasks and frames, collect reviews.

The review log is append-only JSON-lines; per-task tallies are derived
state, reproducible by replaying the log. A resubmission by the same
reviewer for the same task replaces the earlier answer (flagged in the
log) without inflating the task's review count.
"""

from __future__ import annotations

import csv
import io
import json
import random
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Optional

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, PlainTextResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .calibration import EXPORT_COLUMNS, AnnotationTask, Review


def load_tasks(path) -> dict[str, AnnotationTask]:
    tasks: dict[str, AnnotationTask] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            task = AnnotationTask.from_dict(json.loads(line))
            tasks[task.task_id] = task
    if not tasks:
        raise ValueError(f"{path}: no tasks")
    return tasks


def write_tasks(path, tasks) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(json.dumps(task.as_dict(), sort_keys=True) + "\n")


class ReviewStore:
    """Task set plus the append-only review log and its derived tallies."""

    def __init__(self, tasks: dict[str, AnnotationTask], log_path):
        self.tasks = dict(sorted(tasks.items()))
        self.log_path = Path(log_path)
        self._lock = threading.Lock()
        # task_id -> reviewer_id -> Review (latest answer wins)
        self._answers: dict[str, dict[str, Review]] = {t: {} for t in self.tasks}
        if self.log_path.exists():
            with self.log_path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    review = Review(
                        task_id=rec["task_id"], reviewer_id=rec["reviewer_id"],
                        in_box=rec["in_box"], outside_box=rec["outside_box"],
                        submitted_at=rec.get("submitted_at", ""),
                    )
                    self._apply(review)

    def _apply(self, review: Review) -> bool:
        slot = self._answers[review.task_id]
        replaced = review.reviewer_id in slot
        slot[review.reviewer_id] = review
        return replaced

    def submit(self, review: Review) -> bool:
        """Validate, append to the log, update tallies; True if it replaced
        an earlier answer by the same reviewer."""
        if review.task_id not in self.tasks:
            raise KeyError(review.task_id)
        review.validate()
        with self._lock:
            replaced = review.reviewer_id in self._answers[review.task_id]
            record = {**review.__dict__, "replaces": replaced}
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with self.log_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._apply(review)
        return replaced

    def review_count(self, task_id: str) -> int:
        return len(self._answers[task_id])

    def next_task(self, reviewer_id: str, rng: Optional[random.Random] = None
                  ) -> Optional[AnnotationTask]:
        """A uniformly random task among the least-reviewed ones this
        reviewer has not answered yet; None when the reviewer is done."""
        rng = rng or random
        with self._lock:
            open_tasks = [
                tid for tid, answers in self._answers.items()
                if reviewer_id not in answers
            ]
            if not open_tasks:
                return None
            fewest = min(len(self._answers[t]) for t in open_tasks)
            pool = [t for t in open_tasks if len(self._answers[t]) == fewest]
            return self.tasks[rng.choice(pool)]

    def progress(self) -> dict:
        counts = [len(a) for a in self._answers.values()]
        n = len(counts)
        total = sum(counts)
        mean = total / n if n else 0.0
        std = (sum((c - mean) ** 2 for c in counts) / n) ** 0.5 if n else 0.0
        by_count: dict[str, int] = {}
        for c in counts:
            by_count[str(c)] = by_count.get(str(c), 0) + 1
        return {
            "tasks_total": n,
            "total_reviews": total,
            "tasks_by_review_count": dict(sorted(by_count.items(), key=lambda kv: int(kv[0]))),
            "mean_reviews_per_task": mean,
            "std_reviews_per_task": std,
        }

    def export_csv(self) -> str:
        """The calibration CSV: one row per (task, reviewer) latest answer."""
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(EXPORT_COLUMNS))
        writer.writeheader()
        for task_id in sorted(self._answers):
            task = self.tasks[task_id]
            for reviewer_id in sorted(self._answers[task_id]):
                review = self._answers[task_id][reviewer_id]
                writer.writerow({
                    "task_id": task_id,
                    "movie_id": task.movie_id,
                    "frame_ts_ms": task.frame_ts_ms,
                    "detected_gender": task.detected_gender,
                    "reviewer_id": reviewer_id,
                    "in_box": review.in_box,
                    "outside_box": review.outside_box,
                    "submitted_at": review.submitted_at,
                })
        return buf.getvalue()


class ReviewIn(BaseModel):
    task_id: str
    reviewer_id: str
    in_box: Literal["female", "male", "doubt", "no_face"]
    outside_box: Literal["yes", "no", "doubt"]
    submitted_at: Optional[str] = None


def create_app(store: ReviewStore, frames_base="", static_dir=None,
               rng: Optional[random.Random] = None) -> FastAPI:
    app = FastAPI(title="cinefaces annotation service")
    frames_base = Path(frames_base) if frames_base else None

    @app.get("/api/task/next")
    def task_next(reviewer: str):
        task = store.next_task(reviewer, rng=rng)
        if task is None:
            return {"done": True}
        doc = task.as_dict()
        doc["done"] = False
        doc["frame_url"] = f"/api/frame/{task.task_id}"
        return doc

    @app.get("/api/frame/{task_id}")
    def frame(task_id: str):
        task = store.tasks.get(task_id)
        if task is None:
            raise HTTPException(status_code=404, detail="unknown task")
        path = Path(task.frame_path)
        if frames_base is not None and not path.is_absolute():
            path = frames_base / path
        if not path.is_file():
            raise HTTPException(status_code=404, detail="frame file missing")
        return FileResponse(path)

    @app.post("/api/review", status_code=204)
    def submit_review(body: ReviewIn):
        review = Review(
            task_id=body.task_id, reviewer_id=body.reviewer_id,
            in_box=body.in_box, outside_box=body.outside_box,
            submitted_at=body.submitted_at or datetime.now(timezone.utc).isoformat(),
        )
        try:
            store.submit(review)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown task")
        return Response(status_code=204)

    @app.get("/api/progress")
    def progress():
        return store.progress()

    @app.get("/api/export")
    def export():
        return PlainTextResponse(store.export_csv(), media_type="text/csv")

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="static")
    return app
