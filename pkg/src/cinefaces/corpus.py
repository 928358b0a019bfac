"""Movie manifest loading, filtering, enrichment, and period partitioning."""

from __future__ import annotations

import csv
import json
import logging
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional

log = logging.getLogger("cinefaces.corpus")

MANIFEST_COLUMNS = (
    "id", "title", "year", "genres", "runtime_min", "budget_usd", "gross_usd",
    "rating_value", "rating_count", "female_rating_share", "parental_rating",
    "seeders", "frame_width", "frame_height",
)
# absent values are representable for these; everything else is required
OPTIONAL_FIELDS = frozenset({"female_rating_share", "seeders", "bechdel_score"})

DEFAULT_EXCLUDED_GENRES = frozenset({"Documentary", "Animation"})


class ManifestError(ValueError):
    pass


class EmptyManifest(ManifestError):
    pass


class DuplicateId(ManifestError):
    pass


@dataclass(frozen=True)
class MovieRecord:
    id: str
    title: str
    year: int
    genres: frozenset[str]
    runtime_min: int
    budget_usd: int
    gross_usd: int
    rating_value: float
    rating_count: int
    parental_rating: str
    frame_width: int
    frame_height: int
    female_rating_share: Optional[float] = None
    seeders: Optional[int] = None
    bechdel_score: Optional[int] = None

    @property
    def passes_bechdel(self) -> Optional[bool]:
        """True only when all three test criteria are met (score 3)."""
        if self.bechdel_score is None:
            return None
        return self.bechdel_score == 3

    @property
    def duration_s(self) -> float:
        return self.runtime_min * 60.0


@dataclass
class LoadReport:
    source: str
    accepted: int = 0
    rejected: list[dict] = field(default_factory=list)

    def reject(self, row: int, movie_id: Optional[str], reason: str) -> None:
        self.rejected.append({"row": row, "id": movie_id, "reason": reason})


@dataclass
class CorpusManifest:
    movies: tuple[MovieRecord, ...]
    provenance: LoadReport

    def __post_init__(self):
        self.movies = tuple(sorted(self.movies, key=lambda m: m.id))
        ids = [m.id for m in self.movies]
        dupes = {i for i in ids if ids.count(i) > 1}
        if dupes:
            raise DuplicateId(f"duplicate movie ids: {sorted(dupes)}")

    def __len__(self) -> int:
        return len(self.movies)

    def __iter__(self):
        return iter(self.movies)

    def by_id(self, movie_id: str) -> MovieRecord:
        for m in self.movies:
            if m.id == movie_id:
                return m
        raise KeyError(movie_id)

    @property
    def id_map(self) -> dict[str, MovieRecord]:
        return {m.id: m for m in self.movies}


@dataclass(frozen=True)
class Period:
    year_lo: int
    year_hi: int
    movie_ids: frozenset[str]

    @property
    def key(self) -> str:
        return f"{self.year_lo}-{self.year_hi}"

    def __contains__(self, year: int) -> bool:
        return self.year_lo <= year <= self.year_hi


@dataclass
class PeriodPartition:
    periods: list[Period]

    def index_for_year(self, year: int) -> int:
        for i, p in enumerate(self.periods):
            if year in p:
                return i
        raise KeyError(f"year {year} outside partition")

    def period_for_year(self, year: int) -> Period:
        return self.periods[self.index_for_year(year)]

    @property
    def latest(self) -> Period:
        return self.periods[-1]

    def keys(self) -> list[str]:
        return [p.key for p in self.periods]


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def _parse_int(raw, minimum=None):
    v = int(str(raw).strip())
    if minimum is not None and v < minimum:
        raise ValueError(f"{v} < {minimum}")
    return v


def _parse_float(raw, lo=None, hi=None):
    v = float(str(raw).strip())
    if lo is not None and v < lo:
        raise ValueError(f"{v} < {lo}")
    if hi is not None and v > hi:
        raise ValueError(f"{v} > {hi}")
    return v


def _parse_genres(raw) -> frozenset[str]:
    if isinstance(raw, (list, tuple, set, frozenset)):
        parts = [str(g).strip() for g in raw]
    else:
        parts = [g.strip() for g in str(raw).split("|")]
    genres = frozenset(g for g in parts if g)
    if not genres:
        raise ValueError("no genres")
    return genres


def _is_absent(value) -> bool:
    return value is None or (isinstance(value, str) and value.strip() == "")


def _record_from_mapping(raw: dict) -> MovieRecord:
    """Build a MovieRecord, raising ValueError with a reason code on bad rows."""
    clean: dict = {}
    for name in MANIFEST_COLUMNS + ("bechdel_score",):
        value = raw.get(name)
        if _is_absent(value):
            if name in OPTIONAL_FIELDS:
                clean[name] = None
                continue
            raise ValueError(f"missing-field:{name}")
        try:
            if name in ("id", "title", "parental_rating"):
                clean[name] = str(value).strip()
            elif name == "year":
                clean[name] = _parse_int(value)
            elif name == "genres":
                clean[name] = _parse_genres(value)
            elif name in ("runtime_min", "frame_width", "frame_height"):
                clean[name] = _parse_int(value, minimum=1)
            elif name in ("budget_usd", "gross_usd", "rating_count", "seeders"):
                clean[name] = _parse_int(value, minimum=0)
            elif name == "rating_value":
                clean[name] = _parse_float(value, 0.0, 10.0)
            elif name == "female_rating_share":
                clean[name] = _parse_float(value, 0.0, 1.0)
            elif name == "bechdel_score":
                score = _parse_int(value)
                if score not in (0, 1, 2, 3):
                    raise ValueError(f"bechdel score {score}")
                clean[name] = score
        except ValueError as exc:
            if str(exc).startswith("missing-field"):
                raise
            raise ValueError(f"bad-value:{name}") from exc
    return MovieRecord(**clean)


def _iter_csv_rows(path: Path):
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return
        missing = [c for c in MANIFEST_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise ManifestError(f"{path}: manifest header missing columns {missing}")
        for i, row in enumerate(reader, start=2):
            yield i, row


def _iter_jsonl_rows(path: Path):
    with path.open(encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{i}: not valid JSON ({exc})") from exc
            if not isinstance(row, dict):
                raise ManifestError(f"{path}:{i}: expected a JSON object")
            yield i, row


def load_manifest(path) -> CorpusManifest:
    """Read a movie manifest (CSV or JSON-lines) keeping only complete rows.

    Rows missing a required field or carrying an invalid value are listed
    in the load report with a reason, never silently dropped. Duplicate
    ids and manifests with no valid rows are hard errors.
    """
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"{path}: manifest not readable")
    if path.suffix.lower() == ".csv":
        rows = _iter_csv_rows(path)
    elif path.suffix.lower() in (".jsonl", ".ndjson", ".json"):
        rows = _iter_jsonl_rows(path)
    else:
        with path.open(encoding="utf-8") as fh:
            head = fh.read(1)
        rows = _iter_jsonl_rows(path) if head == "{" else _iter_csv_rows(path)

    report = LoadReport(source=str(path))
    movies: list[MovieRecord] = []
    seen: set[str] = set()
    for lineno, raw in rows:
        try:
            record = _record_from_mapping(raw)
        except ValueError as exc:
            raw_id = raw.get("id")
            report.reject(lineno, str(raw_id) if raw_id else None, str(exc))
            continue
        if record.id in seen:
            raise DuplicateId(f"{path}:{lineno}: duplicate id {record.id!r}")
        seen.add(record.id)
        movies.append(record)
    if not movies:
        raise EmptyManifest(f"{path}: no valid manifest rows")
    report.accepted = len(movies)
    return CorpusManifest(movies=tuple(movies), provenance=report)


# ---------------------------------------------------------------------------
# filtering and partitioning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FilterCriteria:
    year_lo: int = 1985
    year_hi: int = 2019
    excluded_genres: frozenset[str] = DEFAULT_EXCLUDED_GENRES
    min_seeders: int = 3

    def __post_init__(self):
        if self.year_lo > self.year_hi:
            raise ValueError(f"year range {self.year_lo}..{self.year_hi} is empty")

    def admits(self, movie: MovieRecord) -> bool:
        if not self.year_lo <= movie.year <= self.year_hi:
            return False
        if movie.genres & self.excluded_genres:
            return False
        if self.min_seeders > 0:
            # a movie whose seeder count is unknown cannot clear the bar
            if movie.seeders is None or movie.seeders < self.min_seeders:
                return False
        return True


def filter_corpus(manifest: CorpusManifest, criteria: FilterCriteria) -> CorpusManifest:
    kept = tuple(m for m in manifest.movies if criteria.admits(m))
    report = LoadReport(source=manifest.provenance.source, accepted=len(kept))
    log.info("filter_corpus: kept %d of %d movies", len(kept), len(manifest))
    return CorpusManifest(movies=kept, provenance=report)


def split_periods(manifest: CorpusManifest, k: int) -> PeriodPartition:
    """Partition the corpus into k contiguous year intervals of near-equal size.

    Cut points sit at whole-year boundaries and are chosen to minimize the
    maximum deviation of period sizes from n/k; remaining ties are broken
    first toward the smallest size spread (largest minus smallest period),
    then by the earliest cut positions. Deviations are compared as exact
    integers (|size*k - n|), so no floating-point ties can flip a cut.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not manifest.movies:
        raise EmptyManifest("cannot partition an empty manifest")
    year_counts: dict[int, int] = {}
    for m in manifest.movies:
        year_counts[m.year] = year_counts.get(m.year, 0) + 1
    years = sorted(year_counts)
    if k > len(years):
        raise ManifestError(f"k={k} exceeds {len(years)} distinct years")

    counts = [year_counts[y] for y in years]
    g = len(years)
    n = len(manifest.movies)
    prefix = [0]
    for c in counts:
        prefix.append(prefix[-1] + c)

    def dev(i: int, t: int) -> int:
        # |segment_size * k - n|, an exact surrogate for |size - n/k|
        return abs((prefix[t + 1] - prefix[i]) * k - n)

    INF = float("inf")
    # best[i][j]: minimal max-deviation splitting years[i:] into j periods
    best = [[INF] * (k + 1) for _ in range(g + 1)]
    best[g][0] = 0
    for i in range(g - 1, -1, -1):
        for j in range(1, k + 1):
            for t in range(i, g - j + 1):
                cand = max(dev(i, t), best[t + 1][j - 1])
                if cand < best[i][j]:
                    best[i][j] = cand

    # Walk every max-deviation-optimal partition (pruned by the DP table)
    # and keep the one with the smallest spread, earliest cuts on ties.
    target_dev = best[0][k]
    best_choice: Optional[tuple[int, tuple[int, ...]]] = None
    sizes_stack: list[int] = []
    bounds_stack: list[int] = []
    budget = 500_000  # deterministic safety valve for adversarial tie blowups

    def walk(i: int, j: int) -> None:
        nonlocal best_choice, budget
        if budget <= 0:
            return
        budget -= 1
        if j == 0:
            cand = (max(sizes_stack) - min(sizes_stack), tuple(bounds_stack))
            if best_choice is None or cand < best_choice:
                best_choice = cand
            return
        for t in range(i, g - j + 1):
            if dev(i, t) <= target_dev and best[t + 1][j - 1] <= target_dev:
                sizes_stack.append(prefix[t + 1] - prefix[i])
                bounds_stack.append(t)
                walk(t + 1, j - 1)
                sizes_stack.pop()
                bounds_stack.pop()

    walk(0, k)
    assert best_choice is not None
    bounds = list(best_choice[1])

    periods: list[Period] = []
    movies_by_year: dict[int, list[str]] = {}
    for m in manifest.movies:
        movies_by_year.setdefault(m.year, []).append(m.id)
    start = 0
    for idx, t in enumerate(bounds):
        year_lo = years[0] if idx == 0 else periods[-1].year_hi + 1
        year_hi = years[-1] if idx == len(bounds) - 1 else years[t]
        ids = frozenset(
            mid for y in years[start:t + 1] for mid in movies_by_year.get(y, ())
        )
        periods.append(Period(year_lo=year_lo, year_hi=year_hi, movie_ids=ids))
        start = t + 1
    return PeriodPartition(periods=periods)


def top_genres(manifest: CorpusManifest, n: int) -> list[str]:
    """Genres by descending movie count; a movie counts once per genre it
    carries; ties break lexicographically."""
    if n < 1:
        raise ValueError("n must be >= 1")
    counts: dict[str, int] = {}
    for m in manifest.movies:
        for genre in m.genres:
            counts[genre] = counts.get(genre, 0) + 1
    ordered = sorted(counts, key=lambda g: (-counts[g], g))
    return ordered[:n]


# ---------------------------------------------------------------------------
# Bechdel enrichment
# ---------------------------------------------------------------------------

class BechdelUnavailable(RuntimeError):
    """The external Bechdel service could not be reached."""


class BechdelCache:
    """JSON-lines cache of Bechdel lookups, keyed by movie id.

    Known misses are cached as null ratings so they are not re-queried.
    Writes are serialized with a lock; the file is the source of truth and
    is re-readable at any time.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, Optional[int]] = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    rating = rec.get("rating")
                    self._entries[str(rec["id"])] = int(rating) if rating is not None else None

    def __contains__(self, movie_id: str) -> bool:
        return movie_id in self._entries

    def get(self, movie_id: str) -> Optional[int]:
        return self._entries.get(movie_id)

    def put(self, movie_id: str, rating: Optional[int]) -> None:
        with self._lock:
            self._entries[movie_id] = rating
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"id": movie_id, "rating": rating}) + "\n")


class HttpBechdelClient:
    """Thin client for the public Bechdel-test lookup API.

    The endpoint returns a record with ``imdbid`` and ``rating`` fields;
    a missing movie yields None. Any transport problem raises
    BechdelUnavailable so callers can fall back to cache-only mode.
    """

    DEFAULT_URL = "https://bechdeltest.com/api/v1/getMovieByImdbId"

    def __init__(self, base_url: str = DEFAULT_URL, timeout: float = 10.0):
        self.base_url = base_url
        self.timeout = timeout

    def lookup(self, movie_id: str) -> Optional[int]:
        import requests

        imdbid = movie_id[2:] if movie_id.startswith("tt") else movie_id
        try:
            resp = requests.get(self.base_url, params={"imdbid": imdbid}, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BechdelUnavailable(str(exc)) from exc
        if resp.status_code == 404:
            return None
        if resp.status_code != 200:
            raise BechdelUnavailable(f"HTTP {resp.status_code}")
        body = resp.json()
        rating = body.get("rating")
        if rating is None:
            return None
        return int(rating)


def enrich_bechdel(
    manifest: CorpusManifest,
    cache: BechdelCache,
    client=None,
) -> CorpusManifest:
    """Fill bechdel_score from the cache, then the client for cache misses.

    A network failure downgrades to cache-only with a warning; movies the
    service does not know keep an absent score.
    """
    client_ok = client is not None
    enriched: list[MovieRecord] = []
    uncovered = 0
    for movie in manifest.movies:
        if movie.bechdel_score is not None:
            enriched.append(movie)
            continue
        if movie.id in cache:
            rating = cache.get(movie.id)
        elif client_ok:
            try:
                rating = client.lookup(movie.id)
            except BechdelUnavailable as exc:
                log.warning("bechdel service unavailable (%s); continuing with cache only", exc)
                client_ok = False
                rating = None
            else:
                cache.put(movie.id, rating)
        else:
            rating = None
        if rating is None:
            uncovered += 1
        enriched.append(replace(movie, bechdel_score=rating))
    if uncovered:
        log.info("bechdel coverage: %d of %d movies uncovered", uncovered, len(manifest))
    return CorpusManifest(movies=tuple(enriched), provenance=manifest.provenance)
