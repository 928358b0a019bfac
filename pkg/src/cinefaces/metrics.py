"""Presence and framing metrics.

Everything aggregates in one streaming pass per movie plus associative
merges: per-movie label counts feed the ratio metrics, and a framing
accumulator (gender combinations, rule-of-thirds cells, face areas)
collects over the movies in scope, keeping memory bounded by movie count
and sketch size, never by face count.
"""

from __future__ import annotations

import hashlib
import heapq
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from . import stats
from .calibration import CorrectionFactors, correct_counts, correct_ffr
from .corpus import CorpusManifest, PeriodPartition
from .detection_io import GENDERS, FrameDetections

log = logging.getLogger("cinefaces.metrics")

HISTOGRAM_BIN_WIDTH_PCT = 5
N_BINS = 100 // HISTOGRAM_BIN_WIDTH_PCT
COVARIATES = ("budget_usd", "gross_usd", "rating_value", "rating_count", "female_rating_share")
FACEISM_SAMPLE_CAP = 20_000
COMBINATION_COVERAGE = 0.95


class MetricsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# per-movie ratios
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MovieMetrics:
    movie_id: str
    n_female_det: int
    n_male_det: int
    period_key: str
    raw_ffr: Optional[float]
    corrected_ffr: Optional[float]
    corrected_female: Optional[float]
    corrected_male: Optional[float]

    @property
    def has_faces(self) -> bool:
        return self.n_female_det + self.n_male_det > 0

    def as_dict(self) -> dict:
        return {
            "movie_id": self.movie_id,
            "n_female_det": self.n_female_det, "n_male_det": self.n_male_det,
            "period": self.period_key, "raw_ffr": self.raw_ffr,
            "corrected_ffr": self.corrected_ffr,
            "corrected_female": self.corrected_female,
            "corrected_male": self.corrected_male,
        }


def movie_ffr(
    movie_id: str,
    n_female_det: int,
    n_male_det: int,
    period_key: str,
    factors: Optional[CorrectionFactors],
    on_warning=None,
) -> MovieMetrics:
    """Raw and corrected ratios for one movie's detected-label counts.

    With no detections the movie is flagged (ratios undefined) and later
    excluded from every ratio aggregate. Passing factors=None leaves the
    corrected ratio equal to the raw one (uncorrected runs).
    """
    total = n_female_det + n_male_det
    if total == 0:
        return MovieMetrics(movie_id, 0, 0, period_key, None, None, None, None)
    raw = n_female_det / total
    if factors is None:
        return MovieMetrics(movie_id, n_female_det, n_male_det, period_key,
                            raw, raw, float(n_female_det), float(n_male_det))
    corrected = correct_ffr(raw, factors, period_key, on_clamp=on_warning)
    f_hat, m_hat = correct_counts(n_female_det, n_male_det, factors, period_key)
    return MovieMetrics(movie_id, n_female_det, n_male_det, period_key,
                        raw, corrected, f_hat, m_hat)


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    mean = sum(values) / len(values)
    return mean, math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))


def aggregate_genre(
    metrics: Sequence[MovieMetrics],
    manifest: CorpusManifest,
    genres: Sequence[str],
) -> list[dict]:
    """Mean/sigma of corrected FFR per genre; a movie feeds every genre it
    carries. Population sigma."""
    id_map = manifest.id_map
    per_genre: dict[str, list[float]] = {g: [] for g in genres}
    for m in metrics:
        if m.corrected_ffr is None:
            continue
        movie = id_map.get(m.movie_id)
        if movie is None:
            continue
        for g in movie.genres:
            if g in per_genre:
                per_genre[g].append(m.corrected_ffr)
    rows = []
    for g in genres:
        values = per_genre[g]
        if values:
            mean, std = _mean_std(values)
        else:
            mean = std = None
        rows.append({"genre": g, "n": len(values), "mean_ffr": mean, "std_ffr": std})
    return rows


# ---------------------------------------------------------------------------
# histograms and covariate projections
# ---------------------------------------------------------------------------

def ffr_bin(ffr: float) -> int:
    """Half-open 5pp bins [k*5, (k+1)*5); the top bin is closed at 100%."""
    return min(int(ffr * 100 // HISTOGRAM_BIN_WIDTH_PCT), N_BINS - 1)


@dataclass
class FfrHistogram:
    period_key: str
    counts: list[int] = field(default_factory=lambda: [0] * N_BINS)
    n: int = 0
    mean: Optional[float] = None
    std: Optional[float] = None

    @property
    def shares(self) -> list[float]:
        if self.n == 0:
            return [0.0] * N_BINS
        return [c / self.n for c in self.counts]

    def as_dict(self) -> dict:
        return {
            "period": self.period_key, "bin_width_pct": HISTOGRAM_BIN_WIDTH_PCT,
            "counts": list(self.counts), "shares": self.shares,
            "n": self.n, "mean_ffr": self.mean, "std_ffr": self.std,
        }


def period_histograms(
    metrics: Sequence[MovieMetrics],
    partition: PeriodPartition,
    on_warning=None,
) -> dict[str, FfrHistogram]:
    """Per-period corrected-FFR histogram plus mean/sigma."""
    hists = {p.key: FfrHistogram(period_key=p.key) for p in partition.periods}
    values: dict[str, list[float]] = {p.key: [] for p in partition.periods}
    for m in metrics:
        if m.corrected_ffr is None:
            continue
        hist = hists.get(m.period_key)
        if hist is None:
            raise MetricsError(f"movie {m.movie_id}: period {m.period_key} not in partition")
        hist.counts[ffr_bin(m.corrected_ffr)] += 1
        hist.n += 1
        values[m.period_key].append(m.corrected_ffr)
    for key, hist in hists.items():
        if hist.n:
            hist.mean, hist.std = _mean_std(values[key])
        else:
            event = {"event": "empty-period-histogram", "period": key}
            if on_warning is not None:
                on_warning(event)
            else:
                log.warning("period %s has no movies with a defined FFR", key)
    return hists


def covariate_projection(
    metrics: Sequence[MovieMetrics],
    manifest: CorpusManifest,
    covariate: str,
    period_key: str,
) -> list[Optional[float]]:
    """Per-bin tone in [0,1] from covariate ranks, lighter = higher.

    Movies in the period are ranked by the covariate ascending (average
    ranks on ties); a bin's tone is the mean rank of its movies, min-max
    normalized across the non-empty bins. Movies with an absent covariate
    stay in the histogram but not in the ranking; a constant covariate
    maps every bin to 0.5.
    """
    if covariate not in COVARIATES:
        raise MetricsError(f"unknown covariate {covariate!r}")
    id_map = manifest.id_map
    in_scope = [m for m in metrics if m.period_key == period_key and m.corrected_ffr is not None]
    ranked = [(m, getattr(id_map[m.movie_id], covariate))
              for m in in_scope if getattr(id_map[m.movie_id], covariate) is not None]
    if len(ranked) < 2:
        raise MetricsError(f"covariate {covariate!r}: present for fewer than 2 movies")
    ranks = stats.average_ranks([v for _, v in ranked])
    rank_of = {m.movie_id: r for (m, _), r in zip(ranked, ranks)}

    bin_ranks: list[list[float]] = [[] for _ in range(N_BINS)]
    for m in in_scope:
        r = rank_of.get(m.movie_id)
        if r is not None:
            bin_ranks[ffr_bin(m.corrected_ffr)].append(r)
    means = [sum(rs) / len(rs) if rs else None for rs in bin_ranks]
    present = [v for v in means if v is not None]
    lo, hi = min(present), max(present)
    if hi == lo:
        return [0.5 if v is not None else None for v in means]
    return [(v - lo) / (hi - lo) if v is not None else None for v in means]


# ---------------------------------------------------------------------------
# Bechdel comparisons
# ---------------------------------------------------------------------------

def bechdel_comparison(
    metrics: Sequence[MovieMetrics],
    manifest: CorpusManifest,
    genres: Sequence[str],
) -> dict:
    """Per-genre mean FFR and Bechdel pass rate, with their rank correlation.

    Pass rate runs over covered movies only (score present); genres with no
    coverage drop out of the correlation. Needs at least 2 covered genres.
    """
    id_map = manifest.id_map
    ffr_rows = aggregate_genre(metrics, manifest, genres)
    covered: dict[str, list[bool]] = {g: [] for g in genres}
    for movie in manifest:
        if movie.passes_bechdel is None:
            continue
        for g in movie.genres:
            if g in covered:
                covered[g].append(movie.passes_bechdel)
    rows = []
    for row in ffr_rows:
        g = row["genre"]
        n_cov = len(covered[g])
        rows.append({
            **row,
            "covered": n_cov,
            "pass_rate": (sum(covered[g]) / n_cov) if n_cov else None,
        })
    comparable = [r for r in rows if r["pass_rate"] is not None and r["mean_ffr"] is not None]
    if len(comparable) < 2:
        raise MetricsError("fewer than 2 genres with Bechdel coverage")
    rho = stats.spearman([r["mean_ffr"] for r in comparable],
                         [r["pass_rate"] for r in comparable])
    return {"genres": rows, "spearman_rho": rho,
            "compared_genres": [r["genre"] for r in comparable]}


def bechdel_period_rates(manifest: CorpusManifest, partition: PeriodPartition) -> list[dict]:
    """Pass rate over covered movies per period; coverage reported."""
    rows = []
    id_map = manifest.id_map
    for period in partition.periods:
        flags = [id_map[mid].passes_bechdel for mid in period.movie_ids
                 if id_map[mid].passes_bechdel is not None]
        rows.append({
            "period": period.key,
            "covered": len(flags),
            "pass_rate": (sum(flags) / len(flags)) if flags else None,
        })
    return rows


# ---------------------------------------------------------------------------
# framing: face-ism, combinations, rule-of-thirds
# ---------------------------------------------------------------------------

def third_index(v: float) -> int:
    """Cell index for one axis: [0,1/3) -> 0, [1/3,2/3) -> 1, [2/3,1] -> 2."""
    if v < 1.0 / 3.0:
        return 0
    if v < 2.0 / 3.0:
        return 1
    return 2


def _sample_key(face) -> int:
    payload = f"{face.movie_id}:{face.frame_ts_ms}:{face.x:.9f}:{face.y:.9f}:{face.w:.9f}:{face.h:.9f}"
    return int.from_bytes(hashlib.blake2b(payload.encode(), digest_size=8).digest(), "big")


class _BottomKSample:
    """Order-independent uniform subsample: keep the k records whose stable
    hash keys are smallest, so parallel merges land on the same sample."""

    def __init__(self, k: int):
        self.k = k
        self._heap: list[tuple[int, float]] = []  # max-heap via negated keys

    def offer(self, key: int, value: float) -> None:
        if len(self._heap) < self.k:
            heapq.heappush(self._heap, (-key, value))
        elif key < -self._heap[0][0]:
            heapq.heapreplace(self._heap, (-key, value))

    def merge(self, other: "_BottomKSample") -> None:
        for item in other._heap:
            if len(self._heap) < self.k:
                heapq.heappush(self._heap, item)
            elif item > self._heap[0]:
                heapq.heapreplace(self._heap, item)

    def values(self) -> list[float]:
        return [v for _, v in sorted(self._heap, reverse=True)]


class FramingAccumulator:
    """Single-pass collector for every latest-period framing analysis."""

    def __init__(self, sample_cap: int = FACEISM_SAMPLE_CAP):
        self.combination_counts: Counter = Counter()
        # (nf, nm) -> gender -> 3x3 counts
        self.thirds: dict[tuple[int, int], dict[str, list[list[int]]]] = {}
        self.area_sketches = {g: stats.QuantileSketch() for g in GENDERS}
        self.area_sketch_all = stats.QuantileSketch()
        self.area_samples = {g: _BottomKSample(sample_cap) for g in GENDERS}
        self.face_counts = {g: 0 for g in GENDERS}
        self.frames = 0

    def add_frame(self, frame: FrameDetections) -> None:
        if not frame.faces:
            return
        self.frames += 1
        key = (frame.count("female"), frame.count("male"))
        self.combination_counts[key] += 1
        cells = self.thirds.setdefault(
            key, {g: [[0, 0, 0], [0, 0, 0], [0, 0, 0]] for g in GENDERS})
        for face in frame.faces:
            cx, cy = face.center
            cells[face.gender][third_index(cy)][third_index(cx)] += 1
            area = face.area
            self.face_counts[face.gender] += 1
            self.area_sketches[face.gender].insert(area)
            self.area_sketch_all.insert(area)
            self.area_samples[face.gender].offer(_sample_key(face), area)

    def merge(self, other: "FramingAccumulator") -> "FramingAccumulator":
        self.combination_counts.update(other.combination_counts)
        for key, per_gender in other.thirds.items():
            mine = self.thirds.setdefault(
                key, {g: [[0, 0, 0], [0, 0, 0], [0, 0, 0]] for g in GENDERS})
            for g in GENDERS:
                for r in range(3):
                    for c in range(3):
                        mine[g][r][c] += per_gender[g][r][c]
        for g in GENDERS:
            self.area_sketches[g] = self.area_sketches[g].merge(other.area_sketches[g])
            self.area_samples[g].merge(other.area_samples[g])
            self.face_counts[g] += other.face_counts[g]
        self.area_sketch_all = self.area_sketch_all.merge(other.area_sketch_all)
        self.frames += other.frames
        return self


def accumulate_framing(
    frames: Iterable[FrameDetections],
    movie_ids: Optional[set] = None,
    sample_cap: int = FACEISM_SAMPLE_CAP,
) -> FramingAccumulator:
    acc = FramingAccumulator(sample_cap=sample_cap)
    for frame in frames:
        if movie_ids is None or frame.movie_id in movie_ids:
            acc.add_frame(frame)
    return acc


def combination_key(nf: int, nm: int) -> str:
    return f"{nf}f{nm}m"


COVERAGE_EPSILON = 1e-12


def combinations(acc: FramingAccumulator) -> dict:
    """Distribution of per-frame gender combinations over frames with faces."""
    total = sum(acc.combination_counts.values())
    ordered = sorted(acc.combination_counts.items(), key=lambda kv: (-kv[1], kv[0]))
    rows, cum = [], 0.0
    for (nf, nm), count in ordered:
        share = count / total if total else 0.0
        cum += share
        rows.append({"combination": combination_key(nf, nm), "n_female": nf,
                     "n_male": nm, "frames": count, "share": share,
                     "cumulative_share": cum})
    return {
        "frames_with_faces": total,
        "rows": rows,
        "top_coverage": [r["cumulative_share"] for r in rows],
    }


def truncate_to_coverage(rows: Sequence[dict], coverage: float = COMBINATION_COVERAGE) -> list[dict]:
    """Smallest head of the ranked rows whose cumulative share reaches coverage."""
    out = []
    for row in rows:
        out.append(row)
        if row["cumulative_share"] >= coverage - COVERAGE_EPSILON:
            break
    return out


def thirds_matrices(acc: FramingAccumulator) -> list[dict]:
    """Per-combination, per-gender 3x3 cell counts and percentages."""
    out = []
    for (nf, nm), per_gender in sorted(acc.thirds.items()):
        entry = {"combination": combination_key(nf, nm), "n_female": nf, "n_male": nm,
                 "genders": {}}
        for g in GENDERS:
            counts = per_gender[g]
            total = sum(sum(r) for r in counts)
            entry["genders"][g] = {
                "faces": total,
                "counts": [list(r) for r in counts],
                "percent": [[(c / total * 100.0) if total else None for c in r] for r in counts],
            }
        out.append(entry)
    return out


def thirds_independence(acc: FramingAccumulator, min_faces: int = 1) -> list[dict]:
    """Pairwise chi-square over combination groups, genders pooled.

    For every pair of combinations: the 2x9 cell table, plus 2x3 tables of
    column sums (horizontal position) and row sums (vertical position).
    """
    flat: dict[tuple[int, int], list[int]] = {}
    for key, per_gender in acc.thirds.items():
        cells = [0] * 9
        for g in GENDERS:
            for r in range(3):
                for c in range(3):
                    cells[r * 3 + c] += per_gender[g][r][c]
        if sum(cells) >= min_faces:
            flat[key] = cells
    keys = sorted(flat)
    results = []
    for i in range(len(keys)):
        for j in range(i + 1, len(keys)):
            a, b = flat[keys[i]], flat[keys[j]]
            pair = [combination_key(*keys[i]), combination_key(*keys[j])]
            for name, table in (
                ("cells", [a, b]),
                ("horizontal", [[sum(a[c::3]) for c in range(3)], [sum(b[c::3]) for c in range(3)]]),
                ("vertical", [[sum(a[r * 3:r * 3 + 3]) for r in range(3)],
                              [sum(b[r * 3:r * 3 + 3]) for r in range(3)]]),
            ):
                try:
                    res = stats.chi_square(table)
                except stats.DegenerateInput:
                    continue
                results.append({"pair": pair, "axis": name, **res.as_dict()})
    return results


def faceism(acc: FramingAccumulator) -> dict:
    """Face area-fraction contrast between genders.

    Medians and the 20%-tail threshold come from the streamed sketches;
    the Mann-Whitney test runs on the bounded, order-independent area
    subsamples (exact values at desk scale, a uniform subsample beyond
    the cap).
    """
    for g in GENDERS:
        if acc.face_counts[g] == 0:
            raise MetricsError(f"no {g} faces in scope for face-ism")
    test = stats.mann_whitney_u(acc.area_samples["female"].values(),
                                acc.area_samples["male"].values())
    return {
        "faces": dict(acc.face_counts),
        "median_area": {g: acc.area_sketches[g].query(0.5) for g in GENDERS},
        "overall_median_area": acc.area_sketch_all.query(0.5),
        "tail_threshold_p20": acc.area_sketch_all.query(0.2),
        "deciles": {g: [acc.area_sketches[g].query(q / 10.0) for q in range(1, 10)]
                    for g in GENDERS},
        "mann_whitney": test.as_dict(),
        "sample_sizes": {g: len(acc.area_samples[g].values()) for g in GENDERS},
    }
