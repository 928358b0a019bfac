"""End-to-end detect path: plan -> bridge subprocess -> ingest -> analyze-ready."""

from __future__ import annotations

import json
import sys

import pytest

pytest.importorskip("detector_bridge")

from cinefaces import cli

from test_bridge_fixture import build_fixture


def test_detect_subcommand_with_real_bridge(tmp_path):
    frames_dir = tmp_path / "frames"
    plan = build_fixture(frames_dir)
    plans_path = tmp_path / "plans.jsonl"
    plans_path.write_text(json.dumps({
        "movie_id": plan.movie_id, "interval_s": plan.interval_s,
        "count": len(plan), "duration_s": 40.0,
    }) + "\n")

    rc = cli.main(["detect", "--plans", str(plans_path),
                   "--frames-dir", str(frames_dir),
                   "--detector-cmd", f"{sys.executable} -m detector_bridge",
                   "--out", str(tmp_path / "det")])
    assert rc == 0
    out_file = tmp_path / "det" / "detections" / "fix.jsonl"
    assert out_file.exists()
    assert out_file.read_text().strip()

    rc = cli.main(["ingest", "--detections", str(tmp_path / "det" / "detections"),
                   "--out", str(tmp_path / "ing")])
    assert rc == 0
    summary = json.loads((tmp_path / "ing" / "ingest_summary.json").read_text())
    assert summary["tally"]["invalid"] == 0
    assert summary["summary"]["faces"] >= 1
    assert summary["summary"]["movies"] == 1
