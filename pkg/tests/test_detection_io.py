from __future__ import annotations

import json
import sys
import textwrap

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cinefaces import detection_io as dio
from cinefaces import sampling

from test_corpus import movie


def det(mid="m1", ts=0, x=0.1, y=0.1, w=0.2, h=0.3, gender="female", conf=None):
    return dio.FaceDetection(movie_id=mid, frame_ts_ms=ts, x=x, y=y, w=w, h=h,
                             gender=gender, confidence=conf)


def line(**kw):
    return json.dumps(det(**kw).as_dict())


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return path


class TestValidate:
    def test_ok(self):
        dio.validate_detection(det())

    def test_out_of_bounds(self):
        with pytest.raises(dio.InvalidDetection) as err:
            dio.validate_detection(det(x=0.9, w=0.3))
        assert err.value.code == "OutOfBounds"

    def test_invalid_gender(self):
        with pytest.raises(dio.InvalidDetection) as err:
            dio.validate_detection(det(gender="unknown"))
        assert err.value.code == "InvalidGender"

    def test_non_positive_box(self):
        with pytest.raises(dio.InvalidDetection) as err:
            dio.validate_detection(det(w=0.0))
        assert err.value.code == "NonPositiveBox"

    def test_negative_timestamp(self):
        with pytest.raises(dio.InvalidDetection) as err:
            dio.validate_detection(det(ts=-5))
        assert err.value.code == "NegativeTimestamp"

    def test_confidence_range(self):
        with pytest.raises(dio.InvalidDetection) as err:
            dio.validate_detection(det(conf=1.5))
        assert err.value.code == "InvalidConfidence"
        dio.validate_detection(det(conf=0.5))


class TestReadDetections:
    def test_groups_frames(self, tmp_path):
        path = write_lines(tmp_path / "d.jsonl", [
            line(ts=0), line(ts=0, gender="male"), line(ts=2000),
        ])
        reader = dio.read_detections(path)
        frames = list(reader)
        assert [f.frame_ts_ms for f in frames] == [0, 2000]
        assert len(frames[0].faces) == 2
        assert reader.tally.invalid == 0
        assert reader.tally.records == 3

    def test_one_bad_line_in_hundred_is_tolerated(self, tmp_path):
        lines = [line(ts=2000 * i) for i in range(99)] + ["{not json"]
        path = write_lines(tmp_path / "d.jsonl", lines)
        reader = dio.read_detections(path)
        frames = list(reader)
        assert sum(len(f.faces) for f in frames) == 99
        assert reader.tally.invalid == 1

    def test_five_percent_bad_is_hard_error(self, tmp_path):
        lines = [line(ts=2000 * i) for i in range(19)] + ["garbage"]
        path = write_lines(tmp_path / "d.jsonl", lines)
        with pytest.raises(dio.CorruptInput):
            list(dio.read_detections(path))

    def test_frames_sorted_within_movie(self, tmp_path):
        path = write_lines(tmp_path / "d.jsonl", [line(ts=4000), line(ts=0), line(ts=2000)])
        frames = list(dio.read_detections(path))
        assert [f.frame_ts_ms for f in frames] == [0, 2000, 4000]

    def test_directory_of_files_in_sorted_order(self, tmp_path):
        write_lines(tmp_path / "b.jsonl", [line(mid="m2")])
        write_lines(tmp_path / "a.jsonl", [line(mid="m1")])
        frames = list(dio.read_detections(tmp_path))
        assert [f.movie_id for f in frames] == ["m1", "m2"]

    def test_movie_reappearance_is_error(self, tmp_path):
        path = write_lines(tmp_path / "d.jsonl", [
            line(mid="m1"), line(mid="m2"), line(mid="m1", ts=2000),
        ])
        with pytest.raises(dio.ContiguityError):
            list(dio.read_detections(path))

    def test_deterministic_for_fixed_input(self, tmp_path):
        lines = [line(ts=2000 * (i * 7 % 13), gender="male" if i % 3 else "female")
                 for i in range(13)]
        path = write_lines(tmp_path / "d.jsonl", lines)
        first = list(dio.read_detections(path))
        second = list(dio.read_detections(path))
        assert first == second

    def test_unreadable_path(self, tmp_path):
        with pytest.raises(dio.CorruptInput):
            dio.read_detections(tmp_path / "missing.jsonl")


DETECTOR_OK = """
import sys, json, os
for pathline in sys.stdin:
    path = pathline.strip()
    if not path:
        continue
    ts = int(os.path.splitext(os.path.basename(path))[0])
    rec = {"movie_id": "m1", "frame_ts_ms": ts, "x": 0.4, "y": 0.4,
           "w": 0.2, "h": 0.2, "gender": "female", "confidence": 0.9}
    print(json.dumps(rec))
    print()
"""

DETECTOR_PROSE = """
import sys
for pathline in sys.stdin:
    print("I found a face, I think?")
    print()
"""

DETECTOR_CRASH = """
import sys
sys.stderr.write("model meltdown\\n")
sys.exit(1)
"""


def detector_cmd(tmp_path, body) -> list[str]:
    script = tmp_path / "detector.py"
    script.write_text(textwrap.dedent(body))
    return [sys.executable, str(script)]


class TestRunExternalDetector:
    def _plan(self):
        return sampling.build_plan(movie("m1"), interval_s=2, duration_s=10)

    def test_record_per_frame(self, tmp_path):
        frames = list(dio.run_external_detector(
            detector_cmd(tmp_path, DETECTOR_OK), self._plan(), tmp_path / "frames"))
        assert len(frames) == 5
        assert [f.frame_ts_ms for f in frames] == [0, 2000, 4000, 6000, 8000]
        assert all(len(f.faces) == 1 for f in frames)

    def test_prose_is_protocol_violation(self, tmp_path):
        with pytest.raises(dio.ProtocolViolation):
            list(dio.run_external_detector(
                detector_cmd(tmp_path, DETECTOR_PROSE), self._plan(), tmp_path))

    def test_nonzero_exit_surfaces_diagnostics(self, tmp_path):
        with pytest.raises(dio.DetectorFailed) as err:
            list(dio.run_external_detector(
                detector_cmd(tmp_path, DETECTOR_CRASH), self._plan(), tmp_path))
        assert "model meltdown" in str(err.value)


class TestSummarize:
    def test_small_stream(self, tmp_path):
        path = write_lines(tmp_path / "d.jsonl", [
            line(ts=0), line(ts=0, gender="male"), line(ts=2000),
        ])
        s = dio.summarize(dio.read_detections(path))
        assert s.faces == 3
        assert s.frames_with_faces == 2
        assert s.movie_count == 1
        assert s.gender_counts == {"female": 2, "male": 1}
        assert s.mean_faces_per_movie == 3.0

    def test_empty_stream(self):
        s = dio.summarize([])
        assert s.faces == 0
        assert s.frames_with_faces == 0
        assert s.as_dict()["mean_faces_per_movie"] == 0.0

    def test_merge_equals_concat(self, tmp_path):
        a_lines = [line(mid="m1", ts=2000 * i, gender="female") for i in range(5)]
        b_lines = [line(mid="m2", ts=2000 * i, gender="male") for i in range(7)]
        pa = write_lines(tmp_path / "a.jsonl", a_lines)
        pb = write_lines(tmp_path / "b.jsonl", b_lines)
        sa = dio.summarize(dio.read_detections(pa))
        sb = dio.summarize(dio.read_detections(pb))
        both = dio.summarize(dio.read_detections(tmp_path))
        merged = sa.merge(sb)
        assert merged.as_dict() == both.as_dict()
        # commutative
        assert sb.merge(sa).as_dict() == merged.as_dict()

    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 3), st.booleans()),
                    min_size=0, max_size=40))
    def test_merge_property_over_disjoint_movies(self, spec):
        # spec rows: (movie index, faces in frame, gender flag)
        frames = []
        for i, (movie_idx, n_faces, is_female) in enumerate(spec):
            if n_faces == 0:
                continue
            gender = "female" if is_female else "male"
            faces = tuple(det(mid=f"m{movie_idx}", ts=2000 * i, gender=gender)
                          for _ in range(n_faces))
            frames.append(dio.FrameDetections(f"m{movie_idx}", 2000 * i, faces))
        # split by movie parity: disjoint movie sets
        part_a = [f for f in frames if int(f.movie_id[1:]) % 2 == 0]
        part_b = [f for f in frames if int(f.movie_id[1:]) % 2 == 1]
        merged = dio.summarize(part_a).merge(dio.summarize(part_b))
        whole = dio.summarize(frames)
        assert merged.as_dict() == whole.as_dict()
