"""Finite-difference gradient checking and input sensitivities."""
import logging
from typing import Callable, Dict, List, Mapping, Tuple

import numpy as np

from app.exceptions import GradientCheckError
from app.neural.network import DenseNet, Inputs, Tape, backward, forward


# Configure logging
logger = logging.getLogger(__name__)


def _relu_pattern(net: DenseNet, tape: Tape) -> List[np.ndarray]:
    """On/off masks of every ReLU unit recorded in ``tape``."""
    stacks = [(layers, tape.branch_records[name]) for name, layers in net.branches.items()]
    stacks.append((net.head, tape.head_records))
    return [
        out > 0
        for layers, records in stacks
        for layer, (_, out) in zip(layers, records)
        if layer.activation == "relu"
    ]


def _same_pattern(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(net: DenseNet, inputs: Inputs, targets: np.ndarray,
                   loss_fn: Callable[[np.ndarray, np.ndarray], Tuple[float, np.ndarray]],
                   n_coords: int = 300, seed: int = 0, h: float = 1e-5) -> float:
    """
    Compare analytic parameter gradients with central finite differences.

    Coordinates are sampled uniformly over all parameter elements. Parameters
    are restored after each step. A coordinate whose +/- h step switches any ReLU
    unit on or off straddles a kink and is skipped; at least one coordinate must
    be compared.

    Args:
        net: Network at the parameter point to check
        inputs: Network inputs
        targets: Loss targets
        loss_fn: Loss returning (value, dLoss/doutput)
        n_coords: Number of coordinates to check (all if larger than the total)
        seed: Sampling seed
        h: Finite-difference step

    Returns:
        Maximum relative error |a - n| / max(|a|, |n|, 1e-5)

    Raises:
        GradientCheckError: If every sampled coordinate was skipped
    """
    output, tape = forward(net, inputs)
    _, grad_output = loss_fn(output, targets)
    analytic = backward(net, tape, grad_output).params
    pattern = _relu_pattern(net, tape)

    params = net.parameters()
    sizes = np.array([p.size for p in params])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    total = int(offsets[-1])
    rng = np.random.default_rng(seed)
    coords = np.arange(total) if n_coords >= total else rng.choice(total, size=n_coords, replace=False)

    worst = 0.0
    skipped = 0
    for coord in coords:
        which = int(np.searchsorted(offsets, coord, side="right") - 1)
        flat_index = int(coord - offsets[which])
        flat = params[which].reshape(-1)
        original = flat[flat_index]

        flat[flat_index] = original + h
        out_plus, tape_plus = forward(net, inputs)
        flat[flat_index] = original - h
        out_minus, tape_minus = forward(net, inputs)
        flat[flat_index] = original

        if not (_same_pattern(pattern, _relu_pattern(net, tape_plus))
                and _same_pattern(pattern, _relu_pattern(net, tape_minus))):
            skipped += 1
            continue
        plus, _ = loss_fn(out_plus, targets)
        minus, _ = loss_fn(out_minus, targets)
        numeric = (plus - minus) / (2.0 * h)
        exact = float(analytic[which].reshape(-1)[flat_index])
        error = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-5)
        worst = max(worst, error)
    net.touch()
    checked = len(coords) - skipped
    logger.info(f"Gradient check compared {checked} of {len(coords)} coordinates ({skipped} skipped at ReLU kinks)")
    if checked == 0:
        raise GradientCheckError(len(coords), skipped)
    return worst


def input_gradient(net: DenseNet, inputs: Inputs, branch: str) -> np.ndarray:
    """
    Per-row derivative of the (single) network output with respect to one input branch.

    Args:
        net: Network with a one-unit output
        inputs: Network inputs
        branch: Branch name

    Returns:
        Array shaped like the branch input
    """
    output, tape = forward(net, inputs)
    return backward(net, tape, np.ones_like(output)).inputs[branch]


def finite_difference_input_gradient(net: DenseNet, inputs: Mapping[str, np.ndarray], branch: str,
                                     h: float = 1e-5) -> np.ndarray:
    """Central-difference counterpart of :func:`input_gradient`."""
    base: Dict[str, np.ndarray] = {name: np.array(array, dtype=np.float64) for name, array in inputs.items()}
    target = base[branch]
    result = np.zeros_like(target)
    for column in range(target.shape[1]):
        shifted = dict(base)
        up = target.copy()
        up[:, column] += h
        shifted[branch] = up
        plus = forward(net, shifted)[0][:, 0]
        down = target.copy()
        down[:, column] -= h
        shifted[branch] = down
        minus = forward(net, shifted)[0][:, 0]
        result[:, column] = (plus - minus) / (2.0 * h)
    return result
