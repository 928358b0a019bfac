from __future__ import annotations

import numpy as np
import pytest
from PIL import Image


def astronaut_face() -> np.ndarray:
    from skimage import data

    return data.astronaut()[25:205, 130:320]


def render_frame(path, size=(640, 480), face_center=None, shade=96):
    """Write a jpeg frame: flat background, optionally the astronaut face
    pasted so its center lands at the given normalized coordinates."""
    width, height = size
    canvas = np.full((height, width, 3), shade, dtype=np.uint8)
    if face_center is not None:
        face = astronaut_face()
        fh, fw = face.shape[:2]
        cx, cy = face_center
        x0 = int(cx * width - fw / 2)
        y0 = int(cy * height - fh / 2)
        x0 = max(0, min(width - fw, x0))
        y0 = max(0, min(height - fh, y0))
        canvas[y0:y0 + fh, x0:x0 + fw] = face
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(canvas).save(path, quality=90)
    return path


@pytest.fixture
def frame_factory(tmp_path):
    def make(name, **kw):
        return render_frame(tmp_path / name, **kw)

    make.root = tmp_path
    return make
