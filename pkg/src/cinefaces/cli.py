"""Command-line pipeline.

Subcommands form a DAG of file artifacts, each written atomically
(temp file + rename) so every stage is resumable and re-runnable:

    plan               sampling plans from the manifest
    extract            decoder command list (optionally execute + verify)
    detect             drive the external detector over planned frames
    ingest             validate + normalize detection records, summary
    calibrate-sample   draw review tasks from single-face frames
    calibrate-serve    run the annotation HTTP service
    calibrate-compute  confusion matrices + correction factors from reviews
    analyze            every analysis document from detections
    report             CSV/plot-data/figure rendering of analyze output

Exit codes: 0 ok, 1 usage, 2 data error, 3 external-process failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import shlex
import subprocess
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import analysis, calibration, detection_io, metrics, report, sampling, service
from .corpus import (
    CorpusManifest, FilterCriteria, ManifestError, enrich_bechdel,
    filter_corpus, load_manifest, split_periods, BechdelCache, HttpBechdelClient,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_EXTERNAL = 3

SUBCOMMANDS = (
    "plan", "extract", "detect", "ingest", "calibrate-sample",
    "calibrate-serve", "calibrate-compute", "analyze", "report",
)


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    manifest: Optional[str] = None
    detections: Optional[str] = None
    factors: Optional[str] = None
    periods: int = 4
    interval_s: float = 2.0
    seed: int = 0
    out: Optional[str] = None
    jobs: int = 1
    uncorrected: bool = False
    # corpus filter
    year_lo: int = 1985
    year_hi: int = 2019
    exclude_genres: str = "Documentary|Animation"
    min_seeders: int = 3
    # analysis extras
    bechdel_cache: Optional[str] = None
    bechdel_fetch: bool = False
    top_genres: int = 10
    analyses: Optional[str] = None
    max_invalid: float = 0.01
    # stage-specific inputs
    plans: Optional[str] = None
    videos_dir: Optional[str] = None
    template: str = sampling.DEFAULT_COMMAND_TEMPLATE
    frames_dir: Optional[str] = None
    detector_cmd: Optional[str] = None
    run: bool = False
    tasks: Optional[str] = None
    reviews: Optional[str] = None
    reviews_log: Optional[str] = None
    n_tasks: int = 1000
    min_period_tasks: int = calibration.DEFAULT_MIN_TASKS_PER_PERIOD
    host: str = "127.0.0.1"
    port: int = 8040
    static_dir: Optional[str] = None
    analyze_dir: Optional[str] = None
    no_figures: bool = False

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) in (None, "")]
        if missing:
            flags = ", ".join("--" + n.replace("_", "-") for n in missing)
            raise UsageError(f"missing required option(s): {flags}")


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_BOOL_FIELDS = {"uncorrected", "run", "bechdel_fetch", "no_figures"}
_INT_FIELDS = {"periods", "seed", "jobs", "year_lo", "year_hi", "min_seeders",
               "top_genres", "n_tasks", "min_period_tasks", "port"}
_FLOAT_FIELDS = {"interval_s", "max_invalid"}


def read_config_file(path) -> dict:
    """Flat key=value config; keys mirror the CLI flags (dashes or
    underscores), # starts a comment, flags always win over the file."""
    values: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key not in _FIELD_TYPES:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        if key in _BOOL_FIELDS:
            values[key] = value.lower() in ("1", "true", "yes", "on")
        elif key in _INT_FIELDS:
            values[key] = int(value)
        elif key in _FLOAT_FIELDS:
            values[key] = float(value)
        else:
            values[key] = value
    return values


class WarningLog:
    """Structured warning sink, flushed to warnings.jsonl in the output dir."""

    def __init__(self):
        self.events: list[dict] = []

    def __call__(self, event: dict) -> None:
        self.events.append(event)

    def flush(self, out_dir: Path) -> None:
        text = "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)
        atomic_write_text(out_dir / "warnings.jsonl", text)


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def dump_doc(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# shared loading steps
# ---------------------------------------------------------------------------

def load_filtered_manifest(cfg: RunConfig) -> CorpusManifest:
    cfg.require("manifest")
    manifest = load_manifest(cfg.manifest)
    excluded = frozenset(g for g in cfg.exclude_genres.split("|") if g)
    criteria = FilterCriteria(year_lo=cfg.year_lo, year_hi=cfg.year_hi,
                              excluded_genres=excluded, min_seeders=cfg.min_seeders)
    filtered = filter_corpus(manifest, criteria)
    if not len(filtered):
        raise ManifestError("no movies left after filtering; check the filter flags")
    return filtered


def load_plans(cfg: RunConfig) -> list[sampling.SamplingPlan]:
    cfg.require("plans")
    plans = []
    with Path(cfg.plans).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            interval = float(row["interval_s"])
            count = int(row["count"])
            plans.append(sampling.SamplingPlan(
                movie_id=row["movie_id"], interval_s=interval,
                timestamps=tuple(i * interval for i in range(count)),
            ))
    if not plans:
        raise ManifestError(f"{cfg.plans}: no plans")
    return plans


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_plan(cfg: RunConfig) -> int:
    cfg.require("out")
    manifest = load_filtered_manifest(cfg)
    out = Path(cfg.out)
    lines = []
    for movie in manifest:
        plan = sampling.build_plan(movie, interval_s=cfg.interval_s)
        lines.append(json.dumps({
            "movie_id": plan.movie_id, "interval_s": plan.interval_s,
            "count": len(plan), "duration_s": movie.duration_s,
        }, sort_keys=True))
    atomic_write_text(out / "plans.jsonl", "\n".join(lines) + "\n")
    print(f"wrote {len(lines)} sampling plans to {out / 'plans.jsonl'}")
    return EXIT_OK


def cmd_extract(cfg: RunConfig) -> int:
    cfg.require("out", "videos_dir", "frames_dir")
    plans = load_plans(cfg)
    out = Path(cfg.out)
    commands = []
    for plan in plans:
        video = Path(cfg.videos_dir) / f"{plan.movie_id}.mp4"
        commands.extend(sampling.render_extraction_commands(
            plan, cfg.template, cfg.frames_dir, video))
        (Path(cfg.frames_dir) / plan.movie_id).mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "extract_commands.sh", "\n".join(commands) + "\n")
    print(f"wrote {len(commands)} extraction commands")
    if cfg.run:
        for command in commands:
            result = subprocess.run(command, shell=True)
            if result.returncode != 0:
                print(f"decoder command failed ({result.returncode}): {command}",
                      file=sys.stderr)
                return EXIT_EXTERNAL
        verification = [sampling.verify_frames(p, cfg.frames_dir) for p in plans]
        doc = {
            v.movie_id: {"expected": v.expected, "missing": v.missing}
            for v in verification
        }
        atomic_write_text(out / "extraction_report.json", dump_doc(doc))
        incomplete = [v.movie_id for v in verification if not v.complete]
        if incomplete:
            print(f"{len(incomplete)} movies have missing frames", file=sys.stderr)
    return EXIT_OK


def cmd_detect(cfg: RunConfig) -> int:
    cfg.require("out", "frames_dir", "detector_cmd")
    plans = load_plans(cfg)
    out = Path(cfg.out)
    det_dir = out / "detections"
    det_dir.mkdir(parents=True, exist_ok=True)
    cmd = shlex.split(cfg.detector_cmd)
    total = 0
    for plan in plans:
        lines = []
        for frame in detection_io.run_external_detector(cmd, plan, cfg.frames_dir):
            for face in frame.faces:
                lines.append(detection_io.detection_to_json(face))
        atomic_write_text(det_dir / f"{plan.movie_id}.jsonl",
                          "\n".join(lines) + ("\n" if lines else ""))
        total += len(lines)
    print(f"detector produced {total} records over {len(plans)} movies")
    return EXIT_OK


def cmd_ingest(cfg: RunConfig) -> int:
    cfg.require("out", "detections")
    out = Path(cfg.out)
    det_dir = out / "detections"
    det_dir.mkdir(parents=True, exist_ok=True)
    reader = detection_io.read_detections(cfg.detections, max_invalid_fraction=cfg.max_invalid)
    summary = detection_io.DetectionSummary()
    current: Optional[str] = None
    buffer: list[str] = []

    def flush():
        if current is not None:
            atomic_write_text(det_dir / f"{current}.jsonl", "\n".join(buffer) + "\n")

    for frame in reader:
        summary.add_frame(frame)
        if frame.movie_id != current:
            flush()
            current = frame.movie_id
            buffer = []
        for face in frame.faces:
            buffer.append(detection_io.detection_to_json(face))
    flush()
    doc = {"summary": summary.as_dict(), "tally": reader.tally.as_dict()}
    atomic_write_text(out / "ingest_summary.json", dump_doc(doc))
    print(f"ingested {summary.faces} faces over {summary.movie_count} movies "
          f"({reader.tally.invalid} invalid lines skipped)")
    return EXIT_OK


def cmd_calibrate_sample(cfg: RunConfig) -> int:
    cfg.require("out", "detections")
    manifest = load_filtered_manifest(cfg)
    reader = detection_io.read_detections(cfg.detections, max_invalid_fraction=cfg.max_invalid)
    tasks = calibration.sample_tasks(
        reader, manifest, n=cfg.n_tasks, seed=cfg.seed,
        frames_root=cfg.frames_dir or "frames")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    service.write_tasks(out / "tasks.jsonl", tasks)
    print(f"sampled {len(tasks)} review tasks to {out / 'tasks.jsonl'}")
    return EXIT_OK


def cmd_calibrate_serve(cfg: RunConfig) -> int:
    cfg.require("tasks", "out")
    import uvicorn

    tasks = service.load_tasks(cfg.tasks)
    log_path = Path(cfg.reviews_log) if cfg.reviews_log else Path(cfg.out) / "reviews.jsonl"
    store = service.ReviewStore(tasks, log_path)
    app = service.create_app(store, frames_base=cfg.frames_dir or "",
                             static_dir=cfg.static_dir)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
    return EXIT_OK


def cmd_calibrate_compute(cfg: RunConfig) -> int:
    cfg.require("out", "reviews")
    manifest = load_filtered_manifest(cfg)
    partition = split_periods(manifest, cfg.periods)
    warnings = WarningLog()
    rows = calibration.read_review_export(cfg.reviews)
    adjudicated = calibration.adjudicate_export(rows)
    if not adjudicated:
        raise calibration.CalibrationError("no adjudicated tasks (all reviews tied?)")
    fc, gc = calibration.build_confusions(adjudicated)
    factors = calibration.factors_by_period(
        adjudicated, partition, manifest,
        min_tasks=cfg.min_period_tasks, on_warning=warnings)
    out = Path(cfg.out)
    atomic_write_text(out / "factors.json", factors.to_json() + "\n")
    atomic_write_text(out / "confusions.json", dump_doc({
        "reviews": len(rows),
        "adjudicated": len(adjudicated),
        "indeterminate": len({r["task_id"] for r in rows}) - len(adjudicated),
        "face_confusion": fc.as_dict(),
        "gender_confusion": gc.as_dict(),
    }))
    warnings.flush(out)
    print(f"factors for {len(factors.by_period)} periods "
          f"(face accuracy {fc.accuracy:.1%}, gender accuracy {gc.accuracy:.1%})")
    return EXIT_OK


def _parse_analyses(cfg: RunConfig) -> Optional[set]:
    if not cfg.analyses:
        return None
    wanted = {a.strip() for a in cfg.analyses.split(",") if a.strip()}
    unknown = wanted - set(analysis.ANALYSIS_NAMES)
    if unknown:
        raise UsageError(f"unknown analyses: {sorted(unknown)} "
                         f"(known: {', '.join(analysis.ANALYSIS_NAMES)})")
    return wanted


def cmd_analyze(cfg: RunConfig) -> int:
    cfg.require("out", "detections")
    manifest = load_filtered_manifest(cfg)
    if cfg.bechdel_cache:
        cache = BechdelCache(cfg.bechdel_cache)
        client = HttpBechdelClient() if cfg.bechdel_fetch else None
        manifest = enrich_bechdel(manifest, cache, client)
    partition = split_periods(manifest, cfg.periods)

    if cfg.uncorrected:
        factors = None
    else:
        if not cfg.factors:
            raise UsageError(
                "analyze needs a factors file (--factors, produced by calibrate-compute) "
                "or an explicit --uncorrected")
        factors = calibration.CorrectionFactors.load(cfg.factors)
        missing = [k for k in partition.keys() if k not in factors.by_period]
        if missing:
            raise calibration.CalibrationError(
                f"factors file lacks periods {missing}; re-run calibrate-compute "
                f"with --periods {cfg.periods} on this manifest")

    warnings = WarningLog()
    collector = analysis.collect_detections(
        cfg.detections, latest_ids=frozenset(partition.latest.movie_ids),
        jobs=cfg.jobs, max_invalid_fraction=cfg.max_invalid)
    docs = analysis.build_documents(
        collector, manifest, partition, factors,
        top_n_genres=cfg.top_genres, on_warning=warnings,
        analyses=_parse_analyses(cfg))

    out = Path(cfg.out)
    for name, doc in docs.items():
        atomic_write_text(out / f"{name}.json", dump_doc(doc))
    warnings.flush(out)
    print(f"analyze wrote {len(docs)} documents to {out}")
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    cfg.require("out", "analyze_dir")
    analyze_dir = Path(cfg.analyze_dir)
    docs = {}
    for name in analysis.ANALYSIS_NAMES:
        path = analyze_dir / f"{name}.json"
        if not path.is_file():
            raise ManifestError(
                f"missing analysis document {path}; run the analyze subcommand first")
        docs[name] = json.loads(path.read_text(encoding="utf-8"))
    written = report.render_report(docs, cfg.out, figures=not cfg.no_figures)
    print(f"report wrote {len(written)} files to {cfg.out}")
    return EXIT_OK


COMMANDS = {
    "plan": cmd_plan,
    "extract": cmd_extract,
    "detect": cmd_detect,
    "ingest": cmd_ingest,
    "calibrate-sample": cmd_calibrate_sample,
    "calibrate-serve": cmd_calibrate_serve,
    "calibrate-compute": cmd_calibrate_compute,
    "analyze": cmd_analyze,
    "report": cmd_report,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("pipeline")
    g.add_argument("--config", help="flat key=value config file; flags win")
    g.add_argument("--manifest")
    g.add_argument("--detections")
    g.add_argument("--factors")
    g.add_argument("--periods", type=int)
    g.add_argument("--interval-s", dest="interval_s", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.add_argument("--jobs", type=int)
    g.add_argument("--uncorrected", action="store_const", const=True)
    f = common.add_argument_group("corpus filter")
    f.add_argument("--year-lo", dest="year_lo", type=int)
    f.add_argument("--year-hi", dest="year_hi", type=int)
    f.add_argument("--exclude-genres", dest="exclude_genres",
                   help="pipe-separated genre exclusions")
    f.add_argument("--min-seeders", dest="min_seeders", type=int)
    x = common.add_argument_group("stage inputs")
    x.add_argument("--plans")
    x.add_argument("--videos-dir", dest="videos_dir")
    x.add_argument("--template")
    x.add_argument("--frames-dir", dest="frames_dir")
    x.add_argument("--detector-cmd", dest="detector_cmd")
    x.add_argument("--run", action="store_const", const=True)
    x.add_argument("--tasks")
    x.add_argument("--reviews")
    x.add_argument("--reviews-log", dest="reviews_log")
    x.add_argument("--n-tasks", dest="n_tasks", type=int)
    x.add_argument("--min-period-tasks", dest="min_period_tasks", type=int)
    x.add_argument("--host")
    x.add_argument("--port", type=int)
    x.add_argument("--static-dir", dest="static_dir")
    x.add_argument("--analyze-dir", dest="analyze_dir")
    x.add_argument("--bechdel-cache", dest="bechdel_cache")
    x.add_argument("--bechdel-fetch", dest="bechdel_fetch", action="store_const", const=True)
    x.add_argument("--top-genres", dest="top_genres", type=int)
    x.add_argument("--analyses", help="comma-separated analysis toggle list")
    x.add_argument("--max-invalid", dest="max_invalid", type=float)
    x.add_argument("--no-figures", dest="no_figures", action="store_const", const=True)

    parser = _Parser(prog="cinefaces", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="subcommand", parser_class=_Parser)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], add_help=True)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, value in read_config_file(args.config).items():
            setattr(cfg, key, value)
    for field in dataclasses.fields(RunConfig):
        value = getattr(args, field.name, None)
        if value is not None:
            setattr(cfg, field.name, value)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "subcommand", None):
            raise UsageError("a subcommand is required "
                             f"(one of: {', '.join(SUBCOMMANDS)})")
        cfg = resolve_config(args)
        return COMMANDS[args.subcommand](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (detection_io.DetectorFailed, detection_io.ProtocolViolation) as exc:
        print(f"external process error: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    except (ManifestError, detection_io.DetectionError, calibration.CalibrationError,
            metrics.MetricsError, ValueError, OSError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
