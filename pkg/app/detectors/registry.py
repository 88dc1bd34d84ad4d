"""Detector kinds and construction by name."""
from pathlib import Path
from typing import Dict, Optional, Type, Union

from app.detectors.autoencoder import LinearAutoencoderDetector, NonlinearAutoencoderDetector
from app.detectors.base import Detector
from app.detectors.iforest import IsolationForestDetector
from app.detectors.intact import IntactDetector
from app.detectors.supervised import SupervisedDetector
from app.detectors.svdd import DeepSvddDetector
from app.exceptions import ConfigError
from app.models.run_config import IsolationForestConfig, TrainConfig
from app.neural.checkpoint import load_checkpoint, save_checkpoint


DETECTORS: Dict[str, Type[Detector]] = {
    IsolationForestDetector.kind: IsolationForestDetector,
    DeepSvddDetector.kind: DeepSvddDetector,
    NonlinearAutoencoderDetector.kind: NonlinearAutoencoderDetector,
    LinearAutoencoderDetector.kind: LinearAutoencoderDetector,
    SupervisedDetector.kind: SupervisedDetector,
    IntactDetector.kind: IntactDetector,
}

MODEL_KINDS = tuple(DETECTORS)


def detector_class(kind: str) -> Type[Detector]:
    """
    Look up a detector class.

    Raises:
        ConfigError: If the kind is unknown
    """
    try:
        return DETECTORS[kind]
    except KeyError:
        raise ConfigError(f"Unknown model kind: {kind}", details={"available": list(MODEL_KINDS)}) from None


def build_detector(kind: str, train_config: Optional[TrainConfig] = None,
                   iforest_config: Optional[IsolationForestConfig] = None) -> Detector:
    """Untrained detector of ``kind``; unsupervised kinds share the forest's contamination rate."""
    cls = detector_class(kind)
    iforest_config = iforest_config or IsolationForestConfig()
    if cls is IsolationForestDetector:
        return IsolationForestDetector(train_config, iforest_config)
    if issubclass(cls, (DeepSvddDetector, LinearAutoencoderDetector, NonlinearAutoencoderDetector)):
        return cls(train_config, contamination=iforest_config.contamination)
    return cls(train_config)


def save_detector(detector: Detector, path: Union[str, Path]) -> Path:
    return save_checkpoint(detector.to_checkpoint(), path)


def load_detector(path: Union[str, Path]) -> Detector:
    data = load_checkpoint(path)
    return detector_class(data["kind"]).from_checkpoint(data)
