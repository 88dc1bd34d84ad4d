"""JSON weight checkpoints."""
import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from app.models.run_config import TrainConfig
from app.neural.network import DenseNet


def net_payload(net: DenseNet, config: Optional[TrainConfig] = None) -> Dict[str, Any]:
    """Layer shapes, row-major weights, activation tags and the training config."""
    return {
        "network": net.to_dict(),
        "train_config": None if config is None else config.model_dump(mode="json"),
    }


def net_from_payload(payload: Dict[str, Any]) -> Tuple[DenseNet, Optional[TrainConfig]]:
    config = payload.get("train_config")
    return DenseNet.from_dict(payload["network"]), None if config is None else TrainConfig(**config)


def save_checkpoint(payload: Dict[str, Any], path: Union[str, Path]) -> Path:
    """
    Write a checkpoint document.

    Floats are written with full repr precision, so reloading is exact.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path: Union[str, Path]) -> Dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))
