"""The six evaluated detectors."""
from app.detectors.base import Detector, UnsupervisedDetector
from app.detectors.registry import MODEL_KINDS, build_detector, detector_class, load_detector, save_detector

__all__ = [
    "Detector",
    "UnsupervisedDetector",
    "MODEL_KINDS",
    "build_detector",
    "detector_class",
    "load_detector",
    "save_detector",
]
