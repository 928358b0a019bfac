"""Detection models: the built-in cascade + placeholder labeler, and the
import hook for user-supplied models."""

from __future__ import annotations

import hashlib
import importlib
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np


@dataclass(frozen=True)
class BridgeConfig:
    model: str = "builtin"
    threshold: float = 0.0  # applied to detections that carry a score
    batch_size: int = 8
    device: str = "cpu"

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0,1], got {self.threshold}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass(frozen=True)
class FaceBox:
    """One detected face in pixel coordinates, origin top-left."""
    x: int
    y: int
    w: int
    h: int
    gender: str
    confidence: Optional[float] = None


class Model(Protocol):
    def detect(self, image: np.ndarray) -> list[FaceBox]:
        ...


def _iou(a: FaceBox, b: FaceBox) -> float:
    ix = max(0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union else 0.0


def suppress_overlaps(boxes: list[FaceBox], iou_threshold: float = 0.4) -> list[FaceBox]:
    """Keep the largest box of each overlapping cluster (the cascade has no
    scores to rank by, and multi-scale sweeps fire several times per face)."""
    kept: list[FaceBox] = []
    for box in sorted(boxes, key=lambda b: (-b.w * b.h, b.y, b.x)):
        if all(_iou(box, k) < iou_threshold for k in kept):
            kept.append(box)
    kept.sort(key=lambda b: (b.y, b.x))
    return kept


class HashGenderLabeler:
    """Deterministic placeholder: a stable hash of the downsampled face crop
    decides the label. Roughly balanced, carries no signal; downstream
    calibration is what corrects whatever bias any labeler has."""

    def label(self, image: np.ndarray, x: int, y: int, w: int, h: int) -> str:
        crop = image[y:y + h, x:x + w]
        if crop.size == 0:
            return "female"
        # quantize hard so jpeg noise cannot flip the label
        small = crop[:: max(1, h // 8), :: max(1, w // 8)] // 32
        digest = hashlib.blake2b(small.tobytes(), digest_size=2).digest()
        return "female" if digest[0] % 2 == 0 else "male"


class BuiltinModel:
    """LBP frontal-face cascade (scikit-image's bundled training) plus the
    hash placeholder labeler. Deterministic; CPU only; no score output."""

    def __init__(self, config: BridgeConfig):
        from skimage import data as skdata
        from skimage.feature import Cascade

        self._cascade = Cascade(skdata.lbp_frontal_face_cascade_filename())
        self._labeler = HashGenderLabeler()
        self.config = config

    def detect(self, image: np.ndarray) -> list[FaceBox]:
        height, width = image.shape[:2]
        min_side = max(24, min(height, width) // 12)
        raw = self._cascade.detect_multi_scale(
            img=image, scale_factor=1.15, step_ratio=1,
            min_size=(min_side, min_side), max_size=(height, width))
        boxes = []
        for d in raw:
            x, y = int(d["c"]), int(d["r"])
            w, h = int(d["width"]), int(d["height"])
            # clip to the frame so normalized coordinates always validate
            x, y = max(0, x), max(0, y)
            w, h = min(w, width - x), min(h, height - y)
            if w <= 0 or h <= 0:
                continue
            boxes.append(FaceBox(x=x, y=y, w=w, h=h,
                                 gender=self._labeler.label(image, x, y, w, h)))
        return suppress_overlaps(boxes)


def load_model(config: BridgeConfig) -> Model:
    """model id: "builtin", or "import:<module>:<factory>" where the factory
    takes the BridgeConfig and returns an object with .detect(image)."""
    if config.model == "builtin":
        return BuiltinModel(config)
    if config.model.startswith("import:"):
        try:
            _, module_name, factory_name = config.model.split(":", 2)
        except ValueError:
            raise ValueError(f"bad model id {config.model!r}; "
                             "expected import:<module>:<factory>") from None
        module = importlib.import_module(module_name)
        factory = getattr(module, factory_name)
        return factory(config)
    raise ValueError(f"unknown model {config.model!r}")
