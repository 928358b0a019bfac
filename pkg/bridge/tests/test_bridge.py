from __future__ import annotations

import io
import json
from pathlib import Path

import pytest

from detector_bridge.bridge import parse_frame_path, run_bridge
from detector_bridge.engine import BridgeConfig, FaceBox, load_model, suppress_overlaps


def run_on(paths) -> tuple[list[str], str]:
    stdin = io.StringIO("".join(str(p) + "\n" for p in paths))
    stdout, stderr = io.StringIO(), io.StringIO()
    rc = run_bridge(BridgeConfig(), stdin=stdin, stdout=stdout, stderr=stderr)
    assert rc == 0
    return stdout.getvalue().split("\n"), stderr.getvalue()


def frames_and_records(lines):
    """Split protocol output into per-frame record batches."""
    frames, batch = [], []
    for line in lines[:-1]:  # trailing '' from final newline split
        if line == "":
            frames.append(batch)
            batch = []
        else:
            batch.append(json.loads(line))
    return frames


class TestPathParsing:
    def test_scheme(self):
        assert parse_frame_path(Path("frames/tt42/000002000.jpg")) == ("tt42", 2000)

    def test_bad_stem(self):
        with pytest.raises(ValueError):
            parse_frame_path(Path("frames/tt42/keyframe_a.jpg"))


class TestProtocol:
    def test_no_face_emits_blank_only(self, frame_factory):
        path = frame_factory("m1/000000000.jpg")
        lines, _ = run_on([path])
        assert frames_and_records(lines) == [[]]

    def test_centered_face_record_contains_center(self, frame_factory):
        path = frame_factory("m1/000002000.jpg", face_center=(0.5, 0.5))
        lines, _ = run_on([path])
        frames = frames_and_records(lines)
        assert len(frames) == 1 and len(frames[0]) >= 1
        rec = frames[0][0]
        assert rec["movie_id"] == "m1"
        assert rec["frame_ts_ms"] == 2000
        assert rec["x"] <= 0.5 <= rec["x"] + rec["w"]
        assert rec["y"] <= 0.5 <= rec["y"] + rec["h"]
        assert rec["gender"] in ("female", "male")

    def test_corrupt_file_among_ten(self, frame_factory):
        paths = []
        for i in range(10):
            name = f"m1/{i * 2000:09d}.jpg"
            if i == 4:
                p = frame_factory.root / name
                p.parent.mkdir(parents=True, exist_ok=True)
                p.write_bytes(b"this is not a jpeg")
                paths.append(p)
            else:
                paths.append(frame_factory(name, face_center=(0.5, 0.5) if i % 2 else None))
        lines, stderr = run_on(paths)
        frames = frames_and_records(lines)
        assert len(frames) == 10  # one terminator per input, bad file included
        assert frames[4] == []
        assert "skipping" in stderr
        detected = sum(1 for f in frames if f)
        assert detected >= 4  # the odd-indexed frames carry a face

    def test_output_validates_against_core_reader(self, frame_factory):
        from cinefaces.detection_io import parse_detection_line

        paths = [frame_factory(f"m1/{i * 2000:09d}.jpg",
                               face_center=(0.3 + 0.05 * i, 0.5)) for i in range(5)]
        lines, _ = run_on(paths)
        records = [l for l in lines if l.strip()]
        assert records
        for line in records:
            parse_detection_line(line)  # raises on any invalid record

    def test_deterministic(self, frame_factory):
        paths = [frame_factory(f"m1/{i * 2000:09d}.jpg",
                               face_center=(0.5, 0.4) if i != 1 else None) for i in range(3)]
        first, _ = run_on(paths)
        second, _ = run_on(paths)
        assert first == second

    def test_one_face_one_record(self, frame_factory):
        path = frame_factory("m1/000000000.jpg", face_center=(0.5, 0.5))
        lines, _ = run_on([path])
        frames = frames_and_records(lines)
        assert len(frames[0]) == 1  # overlapping multi-scale hits suppressed


class TestEngine:
    def test_suppress_overlaps_keeps_largest(self):
        boxes = [FaceBox(10, 10, 100, 100, "female"),
                 FaceBox(20, 20, 80, 80, "male"),
                 FaceBox(400, 300, 50, 50, "female")]
        kept = suppress_overlaps(boxes)
        assert len(kept) == 2
        assert kept[0].w == 100

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            BridgeConfig(threshold=1.5)

    def test_plugin_hook(self, frame_factory, monkeypatch):
        import sys
        import types

        module = types.ModuleType("fake_models")

        class Stub:
            def __init__(self, config):
                self.config = config

            def detect(self, image):
                return [FaceBox(0, 0, 10, 10, "female", confidence=0.9)]

        module.make = lambda config: Stub(config)
        monkeypatch.setitem(sys.modules, "fake_models", module)
        model = load_model(BridgeConfig(model="import:fake_models:make"))
        assert model.detect(None)[0].confidence == 0.9

    def test_unknown_model_rejected(self):
        with pytest.raises(ValueError):
            load_model(BridgeConfig(model="magic"))

    def test_threshold_filters_scored_detections(self, frame_factory, monkeypatch):
        import sys
        import types

        module = types.ModuleType("scored_models")

        class Scored:
            def __init__(self, config):
                pass

            def detect(self, image):
                return [FaceBox(0, 0, 10, 10, "female", confidence=0.2),
                        FaceBox(20, 20, 10, 10, "male", confidence=0.8)]

        module.make = lambda config: Scored(config)
        monkeypatch.setitem(sys.modules, "scored_models", module)
        path = frame_factory("m1/000000000.jpg")
        stdin = io.StringIO(str(path) + "\n")
        stdout = io.StringIO()
        run_bridge(BridgeConfig(model="import:scored_models:make", threshold=0.5),
                   stdin=stdin, stdout=stdout, stderr=io.StringIO())
        records = [json.loads(l) for l in stdout.getvalue().splitlines() if l.strip()]
        assert len(records) == 1
        assert records[0]["confidence"] == 0.8
