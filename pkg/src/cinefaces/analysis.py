"""One-pass analysis driver: stream detections once, emit every document.

The collector accumulates per-movie label counts, the corpus detection
summary, and the latest-period framing state. Collectors merge
associatively, so a directory of per-movie detection files can be fanned
out across worker processes and combined deterministically (merge order
follows sorted file order, not completion order). Output is byte-stable
for a fixed --jobs value; only the sketch-backed face-area quantiles may
differ between serial and fanned-out runs, inside the sketch's rank-error
bound (count-based documents are identical either way).
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from . import metrics as mx
from .calibration import CorrectionFactors
from .corpus import CorpusManifest, PeriodPartition, top_genres
from .detection_io import DetectionSummary, FrameDetections, read_detections

log = logging.getLogger("cinefaces.analysis")

DEFAULT_TOP_GENRES = 10

ANALYSIS_NAMES = (
    "summary", "movie_metrics", "ffr_by_period", "genre_ffr", "bechdel",
    "covariates", "faceism", "combinations", "thirds",
)


@dataclass
class Collector:
    latest_ids: frozenset
    sample_cap: int = mx.FACEISM_SAMPLE_CAP
    summary: DetectionSummary = field(default_factory=DetectionSummary)
    framing: mx.FramingAccumulator = None
    movie_counts: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.framing is None:
            self.framing = mx.FramingAccumulator(sample_cap=self.sample_cap)

    def feed(self, frames: Iterable[FrameDetections]) -> "Collector":
        for frame in frames:
            self.summary.add_frame(frame)
            counts = self.movie_counts.setdefault(frame.movie_id, [0, 0])
            for face in frame.faces:
                counts[0 if face.gender == "female" else 1] += 1
            if frame.movie_id in self.latest_ids:
                self.framing.add_frame(frame)
        return self

    def merge(self, other: "Collector") -> "Collector":
        self.summary = self.summary.merge(other.summary)
        self.framing.merge(other.framing)
        for mid, (nf, nm) in other.movie_counts.items():
            mine = self.movie_counts.setdefault(mid, [0, 0])
            mine[0] += nf
            mine[1] += nm
        return self


def _collect_chunk(args) -> Collector:
    paths, latest_ids, sample_cap, max_invalid = args
    collector = Collector(latest_ids=latest_ids, sample_cap=sample_cap)
    for path in paths:
        collector.feed(read_detections(path, max_invalid_fraction=max_invalid))
    return collector


def collect_detections(
    path,
    latest_ids: frozenset,
    jobs: int = 1,
    sample_cap: int = mx.FACEISM_SAMPLE_CAP,
    max_invalid_fraction: float = 0.01,
) -> Collector:
    """Stream a detection file or directory into a Collector.

    With jobs > 1 and a directory input, files are split into contiguous
    sorted chunks, processed in worker processes, and merged in chunk
    order so the result is independent of scheduling.
    """
    path = Path(path)
    if jobs > 1 and path.is_dir():
        files = sorted(p for p in path.iterdir()
                       if p.is_file() and p.suffix in (".jsonl", ".ndjson"))
        if len(files) > 1:
            jobs = min(jobs, len(files))
            # contiguous slices keep per-movie runs inside one chunk
            step = (len(files) + jobs - 1) // jobs
            chunks = [files[i:i + step] for i in range(0, len(files), step)]
            args = [(chunk, latest_ids, sample_cap, max_invalid_fraction) for chunk in chunks]
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                partials = list(pool.map(_collect_chunk, args))
            merged = partials[0]
            for part in partials[1:]:
                merged.merge(part)
            return merged
    return _collect_chunk(([path], latest_ids, sample_cap, max_invalid_fraction))


def build_documents(
    collector: Collector,
    manifest: CorpusManifest,
    partition: PeriodPartition,
    factors: Optional[CorrectionFactors],
    top_n_genres: int = DEFAULT_TOP_GENRES,
    on_warning=None,
    analyses: Optional[set] = None,
) -> dict:
    """Assemble every analysis document from a filled collector.

    Framing analyses follow the latest period only (lowest, gender-
    symmetric model error there); ratio analyses cover the whole corpus.
    Corrections use raw labels for framing and corrected counts for the
    ratio metrics, with factors=None meaning an uncorrected run.
    """
    warn = on_warning if on_warning is not None else (
        lambda event: log.warning("%s", event))
    wanted = set(analyses) if analyses else set(ANALYSIS_NAMES)
    id_map = manifest.id_map

    unknown = sorted(set(collector.movie_counts) - set(id_map))
    if unknown:
        warn({"event": "detections-for-unknown-movies", "movies": unknown[:20],
              "count": len(unknown)})

    movie_rows: list[mx.MovieMetrics] = []
    no_faces: list[str] = []
    for movie in manifest:
        nf, nm = collector.movie_counts.get(movie.id, (0, 0))
        period_key = partition.period_for_year(movie.year).key
        row = mx.movie_ffr(movie.id, nf, nm, period_key, factors, on_warning=warn)
        movie_rows.append(row)
        if not row.has_faces:
            no_faces.append(movie.id)
    if no_faces:
        warn({"event": "movies-without-faces", "movies": no_faces[:20],
              "count": len(no_faces)})

    defined = [m for m in movie_rows if m.corrected_ffr is not None]
    docs: dict = {}

    if "summary" in wanted:
        corpus_mean = corpus_std = None
        if defined:
            corpus_mean, corpus_std = mx._mean_std([m.corrected_ffr for m in defined])
        docs["summary"] = {
            "detections": collector.summary.as_dict(),
            "manifest_movies": len(manifest),
            "movies_with_faces": len(defined),
            "movies_without_faces": len(no_faces),
            "corrected": factors is not None,
            "mean_corrected_ffr": corpus_mean,
            "std_corrected_ffr": corpus_std,
            "periods": partition.keys(),
        }

    if "movie_metrics" in wanted:
        docs["movie_metrics"] = {
            "movies": [m.as_dict() for m in movie_rows],
            "no_faces": no_faces,
        }

    genres = top_genres(manifest, top_n_genres)

    if "ffr_by_period" in wanted:
        hists = mx.period_histograms(movie_rows, partition, on_warning=warn)
        docs["ffr_by_period"] = {"periods": [hists[p.key].as_dict() for p in partition.periods]}

    if "genre_ffr" in wanted:
        docs["genre_ffr"] = {"genres": mx.aggregate_genre(defined, manifest, genres)}

    if "bechdel" in wanted:
        doc = {"period_rates": mx.bechdel_period_rates(manifest, partition)}
        try:
            doc.update(mx.bechdel_comparison(defined, manifest, genres))
        except mx.MetricsError as exc:
            warn({"event": "bechdel-comparison-skipped", "reason": str(exc)})
            doc.update({"genres": [], "spearman_rho": None, "compared_genres": []})
        docs["bechdel"] = doc

    if "covariates" in wanted:
        latest_key = partition.latest.key
        tones = {}
        for covariate in mx.COVARIATES:
            try:
                tones[covariate] = mx.covariate_projection(
                    defined, manifest, covariate, latest_key)
            except mx.MetricsError as exc:
                warn({"event": "covariate-skipped", "covariate": covariate,
                      "reason": str(exc)})
                tones[covariate] = None
        docs["covariates"] = {
            "period": latest_key,
            "bin_width_pct": mx.HISTOGRAM_BIN_WIDTH_PCT,
            "tones": tones,
            "normalization": "per-histogram min-max of mean covariate rank",
        }

    if "faceism" in wanted:
        try:
            docs["faceism"] = {"period": partition.latest.key, **mx.faceism(collector.framing)}
        except mx.MetricsError as exc:
            warn({"event": "faceism-skipped", "reason": str(exc)})
            docs["faceism"] = {"period": partition.latest.key, "skipped": str(exc)}

    if "combinations" in wanted:
        combo = mx.combinations(collector.framing)
        combo["period"] = partition.latest.key
        combo["head_95"] = mx.truncate_to_coverage(combo["rows"])
        docs["combinations"] = combo

    if "thirds" in wanted:
        docs["thirds"] = {
            "period": partition.latest.key,
            "matrices": mx.thirds_matrices(collector.framing),
            "tests": mx.thirds_independence(collector.framing),
        }

    return docs
