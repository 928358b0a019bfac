from __future__ import annotations

import csv
import hashlib
import json
import sys
from pathlib import Path

import pytest

from cinefaces import cli, synth
from cinefaces.calibration import EXPORT_COLUMNS
from cinefaces.synth import SynthConfig


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    synth.generate(root, SynthConfig(n_movies=12, frames_per_movie=60, seed=11))
    return root


def run(*argv) -> int:
    return cli.main([str(a) for a in argv])


def common_args(corpus):
    return ["--manifest", corpus / "manifest.csv", "--min-seeders", "0"]


def tree_digest(root: Path) -> dict[str, str]:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


class TestPlanExtract:
    def test_plan_counts(self, corpus, tmp_path):
        assert run("plan", *common_args(corpus), "--out", tmp_path) == 0
        rows = [json.loads(l) for l in (tmp_path / "plans.jsonl").read_text().splitlines()]
        assert len(rows) == 12
        # 60 frames at 2s: runtime_min = ceil(120/60)+1 = 3 -> 90 samples
        assert all(r["count"] == 90 for r in rows)

    def test_extract_writes_commands(self, corpus, tmp_path):
        run("plan", *common_args(corpus), "--out", tmp_path)
        rc = run("extract", "--plans", tmp_path / "plans.jsonl",
                 "--videos-dir", "/videos", "--frames-dir", tmp_path / "frames",
                 "--out", tmp_path)
        assert rc == 0
        script = (tmp_path / "extract_commands.sh").read_text().splitlines()
        assert len(script) == 12 * 90
        assert "ffmpeg" in script[0] and "/videos/syn0000.mp4" in script[0]

    def test_extract_run_executes_and_verifies(self, corpus, tmp_path):
        run("plan", *common_args(corpus), "--out", tmp_path)
        # fake decoder: template just touches the output file
        rc = run("extract", "--plans", tmp_path / "plans.jsonl",
                 "--videos-dir", "/videos", "--frames-dir", tmp_path / "frames",
                 "--template", "printf x {input} {timestamp} > {output}",
                 "--run", "--out", tmp_path)
        assert rc == 0
        report = json.loads((tmp_path / "extraction_report.json").read_text())
        assert all(not v["missing"] for v in report.values())

    def test_failing_decoder_is_external_error(self, corpus, tmp_path):
        run("plan", *common_args(corpus), "--out", tmp_path)
        rc = run("extract", "--plans", tmp_path / "plans.jsonl",
                 "--videos-dir", "/videos", "--frames-dir", tmp_path / "frames",
                 "--template", "false {input} {timestamp} {output}",
                 "--run", "--out", tmp_path)
        assert rc == cli.EXIT_EXTERNAL

    def test_missing_plans_file_is_data_error(self, tmp_path):
        rc = run("extract", "--plans", tmp_path / "absent.jsonl",
                 "--videos-dir", "/videos", "--frames-dir", tmp_path / "frames",
                 "--out", tmp_path)
        assert rc == cli.EXIT_DATA


class TestIngest:
    def test_normalizes_and_summarizes(self, corpus, tmp_path):
        rc = run("ingest", "--detections", corpus / "detections", "--out", tmp_path)
        assert rc == 0
        summary = json.loads((tmp_path / "ingest_summary.json").read_text())
        assert summary["summary"]["movies"] == 12
        assert summary["tally"]["invalid"] == 0
        files = sorted((tmp_path / "detections").glob("*.jsonl"))
        assert len(files) == 12

    def test_corrupt_input_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("not json\n" * 5)
        rc = run("ingest", "--detections", bad, "--out", tmp_path / "out")
        assert rc == cli.EXIT_DATA


class TestCalibrate:
    def test_sample_tasks(self, corpus, tmp_path):
        rc = run("calibrate-sample", *common_args(corpus),
                 "--detections", corpus / "detections",
                 "--n-tasks", "8", "--seed", "5", "--out", tmp_path)
        assert rc == 0
        rows = [json.loads(l) for l in (tmp_path / "tasks.jsonl").read_text().splitlines()]
        assert len(rows) == 8
        genders = sorted(r["detected_gender"] for r in rows)
        assert genders.count("female") == 4

    def test_compute_factors(self, corpus, tmp_path):
        # reviews: every movie's detected gender confirmed by two reviewers,
        # with a couple of flips on female-detected tasks
        export = tmp_path / "reviews.csv"
        manifest_rows = list(csv.DictReader((corpus / "manifest.csv").open()))
        with export.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(EXPORT_COLUMNS))
            writer.writeheader()
            for i, row in enumerate(manifest_rows):
                detected = "female" if i % 2 else "male"
                answer = "male" if (detected == "female" and i in (1, 3)) else detected
                for reviewer in ("r1", "r2"):
                    writer.writerow({
                        "task_id": f"t{i:03d}", "movie_id": row["id"], "frame_ts_ms": 0,
                        "detected_gender": detected, "reviewer_id": reviewer,
                        "in_box": answer, "outside_box": "no", "submitted_at": "x",
                    })
        rc = run("calibrate-compute", *common_args(corpus),
                 "--reviews", export, "--min-period-tasks", "50", "--out", tmp_path)
        assert rc == 0
        factors = json.loads((tmp_path / "factors.json").read_text())
        assert len(factors) == 4
        # 6 female-detected tasks, 2 flipped: lambda_female = 4/6 globally,
        # and every period falls back to the global table (sparse)
        for entry in factors.values():
            assert entry["lambda_female"] == pytest.approx(4 / 6)
            assert entry["lambda_male"] == 1.0
        confusions = json.loads((tmp_path / "confusions.json").read_text())
        assert confusions["adjudicated"] == 12
        warnings = (tmp_path / "warnings.jsonl").read_text().splitlines()
        assert len(warnings) == 4  # one sparse-period fallback per period


class TestAnalyzeReport:
    def _analyze(self, corpus, out, *extra):
        return run("analyze", *common_args(corpus),
                   "--detections", corpus / "detections",
                   "--factors", corpus / "factors.json",
                   "--bechdel-cache", corpus / "bechdel_cache.jsonl",
                   "--out", out, *extra)

    def test_analyze_without_factors_names_producer(self, corpus, tmp_path, capsys):
        rc = run("analyze", *common_args(corpus),
                 "--detections", corpus / "detections", "--out", tmp_path)
        assert rc == cli.EXIT_USAGE
        assert "calibrate-compute" in capsys.readouterr().err

    def test_uncorrected_runs_without_factors(self, corpus, tmp_path):
        rc = run("analyze", *common_args(corpus),
                 "--detections", corpus / "detections", "--uncorrected",
                 "--out", tmp_path)
        assert rc == 0
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["corrected"] is False

    def test_full_report_files(self, corpus, tmp_path):
        assert self._analyze(corpus, tmp_path / "analysis") == 0
        rc = run("report", "--analyze-dir", tmp_path / "analysis",
                 "--out", tmp_path / "report")
        assert rc == 0
        for name in ("ffr_by_period.csv", "thirds_matrices.json", "combinations.csv",
                     "genre_ffr.csv", "bechdel_by_genre.csv", "covariate_tones.csv",
                     "faceism.csv", "figures/ffr_by_period.png"):
            assert (tmp_path / "report" / name).exists(), name

    def test_report_without_analyze_names_producer(self, tmp_path, capsys):
        rc = run("report", "--analyze-dir", tmp_path / "void", "--out", tmp_path / "r")
        assert rc == cli.EXIT_DATA
        assert "analyze" in capsys.readouterr().err

    def test_determinism_byte_identical(self, corpus, tmp_path):
        for tag in ("one", "two"):
            assert self._analyze(corpus, tmp_path / tag / "analysis") == 0
            assert run("report", "--analyze-dir", tmp_path / tag / "analysis",
                       "--out", tmp_path / tag / "report") == 0
        assert tree_digest(tmp_path / "one") == tree_digest(tmp_path / "two")

    def test_jobs_fanout_matches_serial(self, corpus, tmp_path):
        """Fan-out is deterministic for a fixed --jobs value; every document
        except the sketch-backed face-ism quantiles matches the serial run
        byte-for-byte, and those quantiles agree within the sketch bound."""
        assert self._analyze(corpus, tmp_path / "serial") == 0
        assert self._analyze(corpus, tmp_path / "parallel", "--jobs", "3") == 0
        assert self._analyze(corpus, tmp_path / "parallel2", "--jobs", "3") == 0
        assert tree_digest(tmp_path / "parallel") == tree_digest(tmp_path / "parallel2")

        serial = tree_digest(tmp_path / "serial")
        parallel = tree_digest(tmp_path / "parallel")
        assert set(serial) == set(parallel)
        for name in serial:
            if name != "faceism.json":
                assert serial[name] == parallel[name], name
        doc_s = json.loads((tmp_path / "serial" / "faceism.json").read_text())
        doc_p = json.loads((tmp_path / "parallel" / "faceism.json").read_text())
        assert doc_s["faces"] == doc_p["faces"]
        assert doc_s["mann_whitney"] == doc_p["mann_whitney"]  # hash-sampled, exact
        for g in ("female", "male"):
            assert doc_p["median_area"][g] == pytest.approx(doc_s["median_area"][g], rel=0.05)

    def test_report_values_match_planted_truth(self, tmp_path):
        """Golden check on the bundled 20-movie fixture: period means in
        ffr_by_period.csv equal the values recomputed independently from the
        truth ledger's realized counts and the affine correction."""
        root = tmp_path / "fixture"
        truth = synth.generate(root, SynthConfig())  # the bundled defaults
        assert self._analyze_fixture(root, tmp_path / "analysis") == 0
        assert run("report", "--analyze-dir", tmp_path / "analysis",
                   "--out", tmp_path / "report") == 0

        factors = json.loads((root / "factors.json").read_text())
        summary = json.loads((tmp_path / "analysis" / "summary.json").read_text())
        period_of = {}
        for key in summary["periods"]:
            lo, hi = key.split("-")
            for mid, info in truth["movies"].items():
                if int(lo) <= info["year"] <= int(hi):
                    period_of[mid] = key

        expected = {key: [] for key in summary["periods"]}
        for mid, info in truth["movies"].items():
            raw = info["detected_female"] / info["faces"]
            f = factors[period_of[mid]]
            slope = f["lambda_male"] + f["lambda_female"] - 1.0
            expected[period_of[mid]].append((1.0 - f["lambda_male"]) + slope * raw)

        rows = list(csv.DictReader((tmp_path / "report" / "ffr_by_period.csv").open()))
        assert len(rows) == 4
        for row in rows:
            values = expected[row["period"]]
            assert int(row["n"]) == len(values)
            assert float(row["mean_ffr"]) == pytest.approx(
                sum(values) / len(values), abs=5e-7)

        combos = list(csv.DictReader((tmp_path / "report" / "combinations.csv").open()))
        assert sum(float(r["share"]) for r in combos) == pytest.approx(1.0, abs=1e-4)

    def _analyze_fixture(self, root, out):
        return run("analyze", "--manifest", root / "manifest.csv", "--min-seeders", "0",
                   "--detections", root / "detections",
                   "--factors", root / "factors.json",
                   "--bechdel-cache", root / "bechdel_cache.jsonl",
                   "--out", out)

    def test_analysis_toggles(self, corpus, tmp_path):
        rc = self._analyze(corpus, tmp_path, "--analyses", "summary,ffr_by_period")
        assert rc == 0
        names = {p.name for p in tmp_path.glob("*.json")}
        assert names == {"summary.json", "ffr_by_period.json"}

    def test_unknown_toggle_is_usage_error(self, corpus, tmp_path):
        rc = self._analyze(corpus, tmp_path, "--analyses", "nonsense")
        assert rc == cli.EXIT_USAGE


class TestConfigAndErrors:
    def test_config_file_flags_win(self, corpus, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text(
            f"manifest = {corpus / 'manifest.csv'}\n"
            "min-seeders = 0\n"
            "periods = 2   # flag below overrides\n"
        )
        out = tmp_path / "out"
        rc = run("analyze", "--config", conf,
                 "--detections", corpus / "detections", "--uncorrected",
                 "--periods", "4", "--out", out)
        assert rc == 0
        summary = json.loads((out / "summary.json").read_text())
        assert len(summary["periods"]) == 4

    def test_unknown_config_key(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("frobnicate = yes\n")
        assert run("analyze", "--config", conf, "--out", tmp_path) == cli.EXIT_USAGE

    def test_missing_manifest_is_data_error(self, tmp_path):
        rc = run("plan", "--manifest", tmp_path / "nope.csv", "--out", tmp_path)
        assert rc == cli.EXIT_DATA

    def test_no_subcommand_is_usage(self, capsys):
        assert cli.main([]) == cli.EXIT_USAGE

    def test_detector_failure_is_external_error(self, corpus, tmp_path):
        run("plan", *common_args(corpus), "--out", tmp_path)
        rc = run("detect", "--plans", tmp_path / "plans.jsonl",
                 "--frames-dir", tmp_path / "frames",
                 "--detector-cmd", f"{sys.executable} -c 'import sys; sys.exit(1)'",
                 "--out", tmp_path)
        assert rc == cli.EXIT_EXTERNAL
