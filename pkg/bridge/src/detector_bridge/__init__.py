"""Reference implementation of the external detector protocol.

Reads frame image paths on stdin and emits face-detection records on
stdout, one JSON line per face and a blank line per frame, with
coordinates normalized to each image's own dimensions.

The built-in model pairs a trained LBP frontal-face cascade (shipped with
scikit-image, fully offline) with a deterministic placeholder gender
labeler. The placeholder is NOT a trained classifier: its labels are a
stable hash of the face crop, balanced but uninformative. Any serious run
must either plug in a real model (--model import:module:factory) or treat
the built-in labels as a stand-in to exercise the pipeline; either way the
downstream calibration protocol (human review, confusion matrices) is what
makes corrected metrics meaningful.
"""

from .engine import BridgeConfig, BuiltinModel, FaceBox, load_model
from .bridge import run_bridge

__all__ = ["BridgeConfig", "BuiltinModel", "FaceBox", "load_model", "run_bridge"]
__version__ = "0.1.0"
