"""Mini-batch training loop with early stopping on a validation monitor."""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from app.exceptions import DivergedError
from app.metrics import auroc
from app.models.run_config import TrainConfig
from app.neural.network import DenseNet, backward, forward
from app.neural.optimizers import make_optimizer


# Configure logging
logger = logging.getLogger(__name__)

LossFn = Callable[[np.ndarray, np.ndarray], Tuple[float, np.ndarray]]
ScoreFn = Callable[[DenseNet, Dict[str, np.ndarray]], np.ndarray]


@dataclass
class TrainingData:
    """Network inputs with regression/classification targets and optional binary labels.

    ``labels`` feeds the validation AUROC monitor; it is independent of
    ``targets`` (for autoencoders the targets are the inputs themselves).
    """
    inputs: Dict[str, np.ndarray]
    targets: np.ndarray
    labels: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return int(self.targets.shape[0])

    def batch(self, index: np.ndarray) -> "TrainingData":
        return TrainingData(
            inputs={name: array[index] for name, array in self.inputs.items()},
            targets=self.targets[index],
            labels=None if self.labels is None else self.labels[index],
        )

    @property
    def has_both_classes(self) -> bool:
        if self.labels is None or len(self.labels) == 0:
            return False
        positives = int(np.sum(self.labels))
        return 0 < positives < len(self.labels)


@dataclass
class History:
    """Per-epoch training record."""
    monitor: str = "val_auroc"
    epochs: List[Dict[str, Optional[float]]] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "monitor": self.monitor,
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
            "epochs": self.epochs,
        }


def _default_score(net: DenseNet, inputs: Dict[str, np.ndarray]) -> np.ndarray:
    output, _ = forward(net, inputs)
    return output[:, 0]


def _mean_loss(net: DenseNet, data: TrainingData, loss_fn: LossFn) -> float:
    output, _ = forward(net, data.inputs)
    value, _ = loss_fn(output, data.targets)
    return value


def train(net: DenseNet, train_data: TrainingData, val_data: Optional[TrainingData], config: TrainConfig,
          loss_fn: LossFn, score_fn: Optional[ScoreFn] = None) -> Tuple[DenseNet, History]:
    """
    Optimize ``net`` with mini-batches and keep the best epoch's weights.

    The monitor is validation AUROC of ``score_fn`` when validation labels
    hold both classes, otherwise the negative validation loss (or negative
    training loss without validation data). Training stops once the monitor
    has not improved for ``config.patience`` epochs.

    Args:
        net: Network to train (updated in place)
        train_data: Training inputs and targets
        val_data: Validation data for early stopping
        config: Optimizer, batch size, epochs, patience and seed
        loss_fn: Loss returning (value, dLoss/doutput)
        score_fn: Maps the network and inputs to violation scores

    Returns:
        (net restored to its best epoch, history)

    Raises:
        DivergedError: If a batch loss is not finite
    """
    score_fn = score_fn or _default_score
    optimizer = make_optimizer(config.optimizer, config.learning_rate, config.betas)
    rng = np.random.default_rng(config.seed)

    if val_data is not None and val_data.has_both_classes:
        monitor_name = "val_auroc"
    elif val_data is not None and len(val_data) > 0:
        monitor_name = "neg_val_loss"
    else:
        monitor_name = "neg_train_loss"
    history = History(monitor=monitor_name)

    n_rows = len(train_data)
    best_value = -math.inf
    best_state = net.get_state()
    wait = 0

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n_rows)
        total = 0.0
        for batch_number, start in enumerate(range(0, n_rows, config.batch_size)):
            batch = train_data.batch(order[start:start + config.batch_size])
            output, tape = forward(net, batch.inputs)
            value, grad_output = loss_fn(output, batch.targets)
            if not math.isfinite(value):
                raise DivergedError(epoch, batch_number)
            grads = backward(net, tape, grad_output)
            optimizer.step(net, grads.params)
            total += value * len(batch)
        train_loss = total / max(n_rows, 1)

        record: Dict[str, Optional[float]] = {"epoch": epoch, "train_loss": train_loss,
                                              "val_loss": None, "val_auroc": None}
        if val_data is not None and len(val_data) > 0:
            record["val_loss"] = _mean_loss(net, val_data, loss_fn)
            if val_data.has_both_classes:
                record["val_auroc"] = auroc(score_fn(net, val_data.inputs), val_data.labels)
        if monitor_name == "val_auroc":
            value = record["val_auroc"]
        elif monitor_name == "neg_val_loss":
            value = -record["val_loss"]
        else:
            value = -train_loss
        record["monitor"] = value
        history.epochs.append(record)

        if value > best_value:
            best_value = value
            best_state = net.get_state()
            history.best_epoch = epoch
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                history.stopped_early = True
                logger.info(f"Early stop after epoch {epoch}; best epoch {history.best_epoch}")
                break

    net.set_state(best_state)
    logger.info(
        f"Trained {n_rows} rows for {len(history.epochs)} epochs, "
        f"best {monitor_name}={best_value:.6f} at epoch {history.best_epoch}"
    )
    return net, history
