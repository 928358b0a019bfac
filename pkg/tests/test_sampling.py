from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cinefaces import sampling

from test_corpus import movie


class TestBuildPlan:
    def test_ten_second_override(self):
        plan = sampling.build_plan(movie("m1"), interval_s=2, duration_s=10)
        assert plan.timestamps == (0, 2, 4, 6, 8)

    def test_feature_length_count(self):
        # floor(109 * 60 / 2) with an exact multiple: 3270 samples
        plan = sampling.build_plan(movie("m1", runtime_min=109), interval_s=2)
        assert len(plan) == 3270
        assert plan.timestamps[0] == 0
        assert plan.timestamps[-1] == 6538

    def test_zero_interval_rejected(self):
        with pytest.raises(ValueError):
            sampling.build_plan(movie("m1"), interval_s=0)

    def test_non_multiple_duration_keeps_last_sample_below_end(self):
        plan = sampling.build_plan(movie("m1"), interval_s=2, duration_s=9)
        assert plan.timestamps == (0, 2, 4, 6, 8)

    @given(
        minutes=st.integers(1, 240),
        interval=st.sampled_from([0.5, 1.0, 2.0, 3.0, 7.5]),
    )
    def test_spacing_and_bounds(self, minutes, interval):
        plan = sampling.build_plan(movie("m1", runtime_min=minutes), interval_s=interval)
        duration = minutes * 60
        assert plan.timestamps[0] == 0
        assert all(t < duration for t in plan.timestamps)
        for a, b in zip(plan.timestamps, plan.timestamps[1:]):
            assert b - a == pytest.approx(interval)
        # half-open [0, duration): one sample per full interval started
        import math
        expected = math.ceil(duration / interval)
        assert len(plan) == expected


class TestRenderCommands:
    def test_substitution(self, tmp_path):
        plan = sampling.build_plan(movie("m1"), interval_s=2, duration_s=6)
        cmds = sampling.render_extraction_commands(
            plan, "grab {input} at {timestamp} into {output}", tmp_path, "/videos/m1.mp4"
        )
        assert len(cmds) == 3
        assert cmds[1] == f"grab /videos/m1.mp4 at 2.000 into {tmp_path}/m1/000002000.jpg"

    def test_missing_placeholder(self, tmp_path):
        plan = sampling.build_plan(movie("m1"), interval_s=2, duration_s=6)
        with pytest.raises(sampling.MalformedTemplate):
            sampling.render_extraction_commands(plan, "grab {input} {output}", tmp_path, "x")

    def test_deterministic(self, tmp_path):
        plan = sampling.build_plan(movie("m1"), interval_s=2, duration_s=20)
        args = (plan, sampling.DEFAULT_COMMAND_TEMPLATE, tmp_path, "in.mp4")
        assert sampling.render_extraction_commands(*args) == sampling.render_extraction_commands(*args)

    def test_frame_naming_scheme(self):
        assert sampling.frame_filename("tt42", 2.0) == "tt42/000002000.jpg"
        assert sampling.frame_filename("tt42", 6538.0) == "tt42/006538000.jpg"


class TestVerifyFrames:
    def _plan(self):
        return sampling.build_plan(movie("m1"), interval_s=2, duration_s=6)

    def test_all_present(self, tmp_path):
        plan = self._plan()
        for p in plan.frame_paths(tmp_path):
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_bytes(b"jpeg")
        report = sampling.verify_frames(plan, tmp_path)
        assert report.complete
        assert report.missing == []

    def test_one_absent_and_one_empty(self, tmp_path):
        plan = self._plan()
        paths = plan.frame_paths(tmp_path)
        paths[0].parent.mkdir(parents=True, exist_ok=True)
        paths[0].write_bytes(b"jpeg")
        paths[1].write_bytes(b"")  # zero-length counts as missing
        report = sampling.verify_frames(plan, tmp_path)
        assert report.missing == [2.0, 4.0]

    def test_empty_dir_lists_everything(self, tmp_path):
        plan = self._plan()
        report = sampling.verify_frames(plan, tmp_path)
        assert report.missing == list(plan.timestamps)
