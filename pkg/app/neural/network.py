"""Dense networks with optional named input branches fused by concatenation.

A network is a set of input branches followed by a head. Each branch maps its
own input through a stack of dense layers; the branch outputs are concatenated
(in branch declaration order) and fed to the head. A plain feed-forward net is
a single branch with no layers and the whole stack in the head.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from app.exceptions import ShapeError, TapeError


ACTIVATIONS = ("relu", "sigmoid", "linear")
HEAD = "head"

LayerSpec = Tuple[int, str]
Inputs = Union[np.ndarray, Mapping[str, np.ndarray]]


def _activate(pre: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "sigmoid":
        # Split by sign so exp never overflows.
        out = np.empty_like(pre)
        positive = pre >= 0
        out[positive] = 1.0 / (1.0 + np.exp(-pre[positive]))
        exp_pre = np.exp(pre[~positive])
        out[~positive] = exp_pre / (1.0 + exp_pre)
        return out
    return pre


def _activation_grad(out: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return (out > 0).astype(np.float64)
    if activation == "sigmoid":
        return out * (1.0 - out)
    return np.ones_like(out)


@dataclass
class DenseLayer:
    """One affine map followed by an activation; ``bias`` is None for bias-free layers."""
    weight: np.ndarray
    bias: Optional[np.ndarray]
    activation: str

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    @property
    def width(self) -> int:
        return self.weight.shape[1]

    def parameters(self) -> List[np.ndarray]:
        return [self.weight] if self.bias is None else [self.weight, self.bias]

    def to_dict(self) -> dict:
        return {
            "in": self.fan_in,
            "out": self.width,
            "activation": self.activation,
            "weight": self.weight.ravel().tolist(),
            "bias": None if self.bias is None else self.bias.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DenseLayer":
        weight = np.asarray(data["weight"], dtype=np.float64).reshape(data["in"], data["out"])
        bias = None if data["bias"] is None else np.asarray(data["bias"], dtype=np.float64)
        return cls(weight=weight, bias=bias, activation=data["activation"])


@dataclass
class Tape:
    """Activations recorded by :func:`forward` at one parameter version."""
    version: int
    n_rows: int
    branch_records: Dict[str, List[Tuple[np.ndarray, np.ndarray]]]
    head_records: List[Tuple[np.ndarray, np.ndarray]]
    branch_widths: Dict[str, int]


@dataclass
class Gradients:
    """Parameter gradients (aligned with ``DenseNet.parameters()``) plus input-side gradients."""
    params: List[np.ndarray]
    inputs: Dict[str, np.ndarray]
    fusion: np.ndarray
    branch_upstream: Dict[str, np.ndarray] = field(default_factory=dict)


class DenseNet:
    """Dense network with named input branches and a fusion head."""

    def __init__(self, input_dims: Mapping[str, int], branches: Mapping[str, List[DenseLayer]],
                 head: List[DenseLayer]):
        """
        Initialize network from prepared layers.

        Args:
            input_dims: Input width of every branch, in fusion order
            branches: Layers of every branch (may be empty)
            head: Layers applied to the concatenated branch outputs

        Raises:
            ShapeError: If adjacent layer widths do not match
        """
        if list(input_dims) != list(branches):
            raise ShapeError("branch names do not match input names",
                             expected=list(input_dims), actual=list(branches))
        self.input_dims: Dict[str, int] = {name: int(dim) for name, dim in input_dims.items()}
        self.branches: Dict[str, List[DenseLayer]] = {name: list(layers) for name, layers in branches.items()}
        self.head: List[DenseLayer] = list(head)
        self.version = 0
        self._check_topology()

    def _check_topology(self) -> None:
        fused = 0
        for name, layers in self.branches.items():
            width = self.input_dims[name]
            for index, layer in enumerate(layers):
                self._check_layer(f"{name}.{index}", layer, width)
                width = layer.width
            fused += width
        width = fused
        for index, layer in enumerate(self.head):
            self._check_layer(f"{HEAD}.{index}", layer, width)
            width = layer.width

    @staticmethod
    def _check_layer(name: str, layer: DenseLayer, width: int) -> None:
        if layer.activation not in ACTIVATIONS:
            raise ShapeError(f"layer {name} has unknown activation {layer.activation}",
                             expected=list(ACTIVATIONS), actual=layer.activation)
        if layer.fan_in != width:
            raise ShapeError(f"layer {name} expects {layer.fan_in} inputs but receives {width}",
                             expected=width, actual=layer.fan_in)
        if layer.bias is not None and layer.bias.shape != (layer.width,):
            raise ShapeError(f"layer {name} bias has shape {layer.bias.shape}",
                             expected=(layer.width,), actual=layer.bias.shape)

    def __repr__(self) -> str:
        return f"<DenseNet(inputs={self.input_dims}, params={param_count(self)})>"

    # -- parameters --------------------------------------------------------

    def layers(self) -> List[Tuple[str, DenseLayer]]:
        """All layers with qualified names, branches first then the head."""
        named = [(f"{name}.{i}", layer) for name, layers in self.branches.items() for i, layer in enumerate(layers)]
        named.extend((f"{HEAD}.{i}", layer) for i, layer in enumerate(self.head))
        return named

    def named_parameters(self) -> List[Tuple[str, np.ndarray]]:
        named = []
        for name, layer in self.layers():
            named.append((f"{name}.weight", layer.weight))
            if layer.bias is not None:
                named.append((f"{name}.bias", layer.bias))
        return named

    def parameters(self) -> List[np.ndarray]:
        return [array for _, array in self.named_parameters()]

    def touch(self) -> None:
        """Mark parameters as changed; tapes recorded earlier become stale."""
        self.version += 1

    def get_state(self) -> List[np.ndarray]:
        return [array.copy() for array in self.parameters()]

    def set_state(self, state: Sequence[np.ndarray]) -> None:
        params = self.parameters()
        if len(params) != len(state):
            raise ShapeError("state has a different number of tensors", expected=len(params), actual=len(state))
        for target, source in zip(params, state):
            if target.shape != np.shape(source):
                raise ShapeError("state tensor shape mismatch", expected=target.shape, actual=np.shape(source))
            target[...] = source
        self.touch()

    @property
    def output_width(self) -> int:
        if self.head:
            return self.head[-1].width
        return sum(layers[-1].width if layers else self.input_dims[name] for name, layers in self.branches.items())

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "input_dims": dict(self.input_dims),
            "branches": {name: [layer.to_dict() for layer in layers] for name, layers in self.branches.items()},
            "head": [layer.to_dict() for layer in self.head],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DenseNet":
        return cls(
            input_dims=data["input_dims"],
            branches={name: [DenseLayer.from_dict(layer) for layer in layers]
                      for name, layers in data["branches"].items()},
            head=[DenseLayer.from_dict(layer) for layer in data["head"]],
        )


def _init_layer(fan_in: int, width: int, activation: str, use_bias: bool, init: str,
                rng: np.random.Generator) -> DenseLayer:
    if init == "zeros":
        weight = np.zeros((fan_in, width))
    elif init == "he_uniform":
        limit = np.sqrt(6.0 / fan_in)
        weight = rng.uniform(-limit, limit, size=(fan_in, width))
    else:
        raise ValueError(f"Unknown initialization: {init}")
    bias = np.zeros(width) if use_bias else None
    return DenseLayer(weight=weight, bias=bias, activation=activation)


def build_net(input_dims: Mapping[str, int], branch_specs: Mapping[str, Sequence[LayerSpec]],
              head_spec: Sequence[LayerSpec], seed: int = 0, init: str = "he_uniform",
              use_bias: bool = True) -> DenseNet:
    """
    Construct a network from (width, activation) specs.

    Weights are drawn uniform in +/- sqrt(6 / fan_in); biases start at zero.

    Args:
        input_dims: Input width per branch, in fusion order
        branch_specs: Layer specs per branch
        head_spec: Layer specs of the head
        seed: Initialization seed
        init: ``he_uniform`` or ``zeros``
        use_bias: False for bias-free networks

    Returns:
        The initialized network
    """
    rng = np.random.default_rng(seed)
    branches: Dict[str, List[DenseLayer]] = {}
    fused = 0
    for name, dim in input_dims.items():
        layers = []
        width = int(dim)
        for out, activation in branch_specs.get(name, ()):
            layers.append(_init_layer(width, out, activation, use_bias, init, rng))
            width = out
        branches[name] = layers
        fused += width
    head = []
    width = fused
    for out, activation in head_spec:
        head.append(_init_layer(width, out, activation, use_bias, init, rng))
        width = out
    return DenseNet(input_dims=input_dims, branches=branches, head=head)


def param_count(net: DenseNet) -> int:
    """Total number of weight and bias elements."""
    return int(sum(array.size for array in net.parameters()))


def _as_inputs(net: DenseNet, inputs: Inputs) -> Dict[str, np.ndarray]:
    if not isinstance(inputs, Mapping):
        if len(net.input_dims) != 1:
            raise ShapeError("network has several input branches; pass a mapping",
                             expected=list(net.input_dims), actual="array")
        inputs = {next(iter(net.input_dims)): inputs}
    if set(inputs) != set(net.input_dims):
        raise ShapeError("input branches do not match the network", expected=list(net.input_dims),
                         actual=sorted(inputs))
    arrays: Dict[str, np.ndarray] = {}
    n_rows = None
    for name, dim in net.input_dims.items():
        array = np.asarray(inputs[name], dtype=np.float64)
        if array.ndim == 1:
            array = array.reshape(-1, dim) if dim > 1 else array.reshape(-1, 1)
        if array.ndim != 2 or array.shape[1] != dim:
            raise ShapeError(f"input '{name}' must have shape (n, {dim})", expected=(None, dim), actual=array.shape)
        if n_rows is not None and array.shape[0] != n_rows:
            raise ShapeError("input branches have different row counts", expected=n_rows, actual=array.shape[0])
        n_rows = array.shape[0]
        arrays[name] = array
    return arrays


def _run(layers: List[DenseLayer], x: np.ndarray) -> Tuple[np.ndarray, List[Tuple[np.ndarray, np.ndarray]]]:
    records = []
    for layer in layers:
        pre = x @ layer.weight
        if layer.bias is not None:
            pre = pre + layer.bias
        out = _activate(pre, layer.activation)
        records.append((x, out))
        x = out
    return x, records


def forward(net: DenseNet, inputs: Inputs) -> Tuple[np.ndarray, Tape]:
    """
    Evaluate the network and record the activation tape.

    Args:
        net: Network
        inputs: Array (single-branch nets) or branch name -> array

    Returns:
        (output of shape (n, output_width), tape)

    Raises:
        ShapeError: If inputs do not match the declared branches
    """
    arrays = _as_inputs(net, inputs)
    branch_records: Dict[str, List[Tuple[np.ndarray, np.ndarray]]] = {}
    branch_widths: Dict[str, int] = {}
    outputs = []
    for name, layers in net.branches.items():
        out, records = _run(layers, arrays[name])
        branch_records[name] = records
        branch_widths[name] = out.shape[1]
        outputs.append(out)
    fused = outputs[0] if len(outputs) == 1 else np.concatenate(outputs, axis=1)
    output, head_records = _run(net.head, fused)
    n_rows = next(iter(arrays.values())).shape[0]
    tape = Tape(version=net.version, n_rows=n_rows, branch_records=branch_records,
                head_records=head_records, branch_widths=branch_widths)
    return output, tape


def _back(layers: List[DenseLayer], records: List[Tuple[np.ndarray, np.ndarray]],
          upstream: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    """Backpropagate through a layer stack; returns parameter grads (layer order) and input grad."""
    grads: List[List[np.ndarray]] = []
    delta = upstream
    for layer, (x, out) in zip(reversed(layers), reversed(records)):
        pre_grad = delta * _activation_grad(out, layer.activation)
        layer_grads = [x.T @ pre_grad]
        if layer.bias is not None:
            layer_grads.append(pre_grad.sum(axis=0))
        grads.append(layer_grads)
        delta = pre_grad @ layer.weight.T
    flat = [g for layer_grads in reversed(grads) for g in layer_grads]
    return flat, delta


def backward_branch(net: DenseNet, tape: Tape, branch: str,
                    upstream: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    """Gradients of one branch given the gradient arriving at its output."""
    return _back(net.branches[branch], tape.branch_records[branch], upstream)


def backward(net: DenseNet, tape: Tape, grad_output: np.ndarray) -> Gradients:
    """
    Backpropagate a loss gradient through the recorded tape.

    The gradient at the fusion point is split column-wise across the branches
    in fusion order, so every branch receives exactly its own slice.

    Args:
        net: Network that produced the tape
        tape: Tape from :func:`forward`
        grad_output: dLoss/dOutput, shape (n, output_width)

    Returns:
        Gradients aligned with ``net.parameters()``

    Raises:
        TapeError: If parameters changed since the tape was recorded
        ShapeError: If grad_output has the wrong shape
    """
    if tape.version != net.version:
        raise TapeError(tape.version, net.version)
    grad_output = np.asarray(grad_output, dtype=np.float64)
    expected = (tape.n_rows, net.output_width)
    if grad_output.shape != expected:
        raise ShapeError("output gradient shape mismatch", expected=expected, actual=grad_output.shape)

    head_grads, fusion = _back(net.head, tape.head_records, grad_output)

    branch_params: List[np.ndarray] = []
    input_grads: Dict[str, np.ndarray] = {}
    upstream: Dict[str, np.ndarray] = {}
    start = 0
    for name in net.branches:
        width = tape.branch_widths[name]
        upstream[name] = fusion[:, start:start + width]
        start += width
        grads, input_grad = backward_branch(net, tape, name, upstream[name])
        branch_params.extend(grads)
        input_grads[name] = input_grad

    return Gradients(params=branch_params + head_grads, inputs=input_grads, fusion=fusion,
                     branch_upstream=upstream)
