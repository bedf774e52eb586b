"""Feed-forward and generalized feed-forward (skip-connected) networks."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import (CONTINUOUS, NOMINAL, BinningSpec, Dataset, DatasetSchema, Instance)
from .errors import ConfigurationError, DomainError, ParseError, StructuralError

ACTIVATIONS = ("identity", "logistic", "hyperbolic", "exponential", "softmax",
               "unit_sum", "square_root", "sine", "ramp", "step")
VECTOR_ACTIVATIONS = ("softmax", "unit_sum")
CLASSIFICATION = "classification"
REGRESSION = "regression"
FORMAT_HEADER = "xtrepan-network 1"


def apply_activation(kind: str, z) -> np.ndarray:
    """Apply an activation to a vector, or row-wise to a 2-D batch."""
    z = np.asarray(z, dtype=float)
    if kind == "identity":
        return z.copy()
    if kind == "logistic":
        # tanh form avoids overflow warnings for large |z|
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    if kind == "hyperbolic":
        return np.tanh(z)
    if kind == "exponential":
        with np.errstate(over="ignore"):
            out = np.exp(z)
        if not np.all(np.isfinite(out)):
            raise DomainError("exponential activation overflowed to +inf")
        return out
    if kind == "softmax":
        shifted = z - np.max(z, axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / np.sum(e, axis=-1, keepdims=True)
    if kind == "unit_sum":
        s = np.sum(z, axis=-1, keepdims=True)
        if np.any(s == 0):
            raise DomainError("unit_sum activation with zero total")
        return z / s
    if kind == "square_root":
        if np.any(z < 0):
            raise DomainError("square_root activation on negative input")
        return np.sqrt(z)
    if kind == "sine":
        return np.sin(z)
    if kind == "ramp":
        return np.clip(z, -1.0, 1.0)
    if kind == "step":
        return (z >= 0).astype(float)
    raise StructuralError(f"unknown activation {kind!r}")


def activation_backward(kind: str, z: np.ndarray, y: np.ndarray, grad_y: np.ndarray) -> np.ndarray:
    """Chain rule through an activation: dL/dz given dL/dy (row-wise for batches)."""
    if kind == "identity":
        return grad_y
    if kind == "logistic":
        return grad_y * y * (1.0 - y)
    if kind == "hyperbolic":
        return grad_y * (1.0 - y * y)
    if kind == "exponential":
        return grad_y * y
    if kind == "softmax":
        return y * (grad_y - np.sum(grad_y * y, axis=-1, keepdims=True))
    if kind == "unit_sum":
        s = np.sum(z, axis=-1, keepdims=True)
        return (grad_y - np.sum(grad_y * y, axis=-1, keepdims=True)) / s
    if kind == "square_root":
        if np.any(y == 0):
            raise DomainError("square_root is not differentiable at 0")
        return grad_y / (2.0 * y)
    if kind == "sine":
        return grad_y * np.cos(z)
    if kind == "ramp":
        return grad_y * ((z > -1.0) & (z < 1.0))
    if kind == "step":
        raise ConfigurationError("step activation has no usable gradient; not supported for training")
    raise StructuralError(f"unknown activation {kind!r}")


def _frozen(a, ndim, what):
    arr = np.array(a, dtype=float, ndmin=ndim)
    if arr.ndim != ndim:
        raise StructuralError(f"{what}: expected {ndim}-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise StructuralError(f"{what}: non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Layer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights, 2, "layer weights"))
        object.__setattr__(self, "bias", _frozen(self.bias, 1, "layer bias"))
        if self.activation not in ACTIVATIONS:
            raise StructuralError(f"unknown activation {self.activation!r}")
        if self.bias.shape[0] != self.weights.shape[0]:
            raise StructuralError(
                f"bias length {self.bias.shape[0]} != weight rows {self.weights.shape[0]}")

    @property
    def out_dim(self):
        return self.weights.shape[0]

    @property
    def in_dim(self):
        return self.weights.shape[1]


@dataclass(frozen=True, eq=False)
class SkipConnection:
    """Extra weights from layer ``from_layer`` (0 = input) into ``to_layer``'s pre-activation."""
    from_layer: int
    to_layer: int
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", _frozen(self.weights, 2, "skip weights"))
        if not self.from_layer < self.to_layer - 1:
            raise StructuralError(
                f"skip {self.from_layer}->{self.to_layer} must jump over at least one layer")
        if self.from_layer < 0:
            raise StructuralError(f"skip {self.from_layer}->{self.to_layer}: negative layer index")


@dataclass(frozen=True)
class AttributeEncoding:
    """One input attribute: one-hot over tokens, or min-max scaling to [0, 1]."""
    name: str
    kind: str
    tokens: tuple[str, ...] = ()
    low: float = 0.0
    high: float = 1.0

    @property
    def width(self):
        return len(self.tokens) if self.kind == NOMINAL else 1


@dataclass(frozen=True)
class InputEncoding:
    attributes: tuple[AttributeEncoding, ...]

    @property
    def dim(self):
        return sum(a.width for a in self.attributes)

    @property
    def names(self):
        return tuple(a.name for a in self.attributes)

    @classmethod
    def fit(cls, dataset: Dataset) -> "InputEncoding":
        """Derive the encoding from a schema, with continuous ranges from ``dataset``."""
        encs = []
        for j, attr in enumerate(dataset.schema.inputs):
            if attr.is_nominal:
                encs.append(AttributeEncoding(attr.name, NOMINAL, attr.tokens))
            else:
                vals = [inst.values[j] for inst in dataset]
                lo, hi = (float(min(vals)), float(max(vals))) if vals else (0.0, 1.0)
                encs.append(AttributeEncoding(attr.name, CONTINUOUS, (), lo, hi))
        return cls(tuple(encs))

    def encode_batch(self, instances: Sequence[Instance]) -> np.ndarray:
        out = np.zeros((len(instances), self.dim))
        col = 0
        for j, enc in enumerate(self.attributes):
            if enc.kind == NOMINAL:
                index = {tok: i for i, tok in enumerate(enc.tokens)}
                for r, inst in enumerate(instances):
                    try:
                        out[r, col + index[inst.values[j]]] = 1.0
                    except KeyError:
                        raise StructuralError(
                            f"attribute {enc.name}: token {inst.values[j]!r} not in encoding") from None
            else:
                span = enc.high - enc.low
                vals = np.fromiter((inst.values[j] for inst in instances), float, len(instances))
                out[:, col] = (vals - enc.low) / span if span > 0 else 0.0
            col += enc.width
        return out

    def encode(self, inst: Instance) -> np.ndarray:
        return self.encode_batch([inst])[0]

    def check_schema(self, schema: DatasetSchema) -> None:
        if self.names != schema.input_names:
            raise StructuralError(
                f"network inputs {list(self.names)} do not match data inputs {list(schema.input_names)}")
        for enc, attr in zip(self.attributes, schema.inputs):
            if enc.kind != attr.kind or (enc.kind == NOMINAL and enc.tokens != attr.tokens):
                raise StructuralError(f"attribute {enc.name}: encoding does not match schema")


@dataclass(frozen=True, eq=False)
class Network:
    input_dim: int
    layers: tuple[Layer, ...]
    skips: tuple[SkipConnection, ...] = ()
    task: str = CLASSIFICATION
    class_labels: tuple[str, ...] = ()
    encoding: InputEncoding | None = None
    binning: BinningSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "skips", tuple(self.skips))
        object.__setattr__(self, "class_labels", tuple(self.class_labels))
        self._validate()

    def _validate(self):
        if not self.layers:
            raise StructuralError("network has no layers")
        if self.encoding is not None and self.encoding.dim != self.input_dim:
            raise StructuralError(f"encoding width {self.encoding.dim} != input_dim {self.input_dim}")
        dims = [self.input_dim] + [layer.out_dim for layer in self.layers]
        for k, layer in enumerate(self.layers, start=1):
            if layer.in_dim != dims[k - 1]:
                raise StructuralError(
                    f"layer {k}: expects {layer.in_dim} inputs but layer {k - 1} has {dims[k - 1]} outputs")
        for s in self.skips:
            if s.to_layer > len(self.layers):
                raise StructuralError(f"skip {s.from_layer}->{s.to_layer}: dangling target layer")
            want = (dims[s.to_layer], dims[s.from_layer])
            if s.weights.shape != want:
                raise StructuralError(
                    f"skip {s.from_layer}->{s.to_layer}: weights {s.weights.shape}, expected {want}")
        out = dims[-1]
        if self.task == CLASSIFICATION:
            k = len(self.class_labels)
            if k < 1:
                raise StructuralError("classification network needs class labels")
            if not (out == k or (k == 2 and out == 1)):
                raise StructuralError(f"output width {out} does not fit {k} class labels")
        elif self.task == REGRESSION:
            if out != 1:
                raise StructuralError(f"regression network must have one output, has {out}")
        else:
            raise StructuralError(f"unknown task {self.task!r}")

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    @property
    def labels(self) -> tuple[str, ...]:
        """Labels that ``predict_label`` can return."""
        if self.task == CLASSIFICATION:
            return self.class_labels
        if self.binning is None:
            raise ConfigurationError("regression network has no binning spec; labels undefined")
        return self.binning.labels

    def skips_into(self, k):
        return [s for s in self.skips if s.to_layer == k]


def forward_all(net: Network, X: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Pre-activations and activations for every layer on a batch (rows = instances).

    ``acts[0]`` is the input batch; ``pre[k]`` belongs to layer k (``pre[0]`` is None).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise StructuralError(f"input has shape {X.shape}, network expects (*, {net.input_dim})")
    acts = [X]
    pre: list = [None]
    for k, layer in enumerate(net.layers, start=1):
        z = acts[-1] @ layer.weights.T + layer.bias
        for s in net.skips_into(k):
            z = z + acts[s.from_layer] @ s.weights.T
        pre.append(z)
        acts.append(apply_activation(layer.activation, z))
    return pre, acts


def forward_batch(net: Network, X) -> np.ndarray:
    return forward_all(net, np.atleast_2d(np.asarray(X, dtype=float)))[1][-1]


def forward(net: Network, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != net.input_dim:
        raise StructuralError(f"input length {x.shape} != input_dim {net.input_dim}")
    return forward_batch(net, x[None, :])[0]


def label_from_output(net: Network, out: np.ndarray) -> str:
    if net.task == CLASSIFICATION:
        if out.shape[0] == 1 and len(net.class_labels) == 2:
            return net.class_labels[0] if out[0] < 0.5 else net.class_labels[1]
        return net.class_labels[int(np.argmax(out))]
    if net.binning is None:
        raise ConfigurationError("regression network needs a binning spec to produce labels")
    return net.binning.label(float(out[0]))


def encode_instances(net: Network, instances: Sequence[Instance]) -> np.ndarray:
    if net.encoding is None:
        return np.asarray([inst.values for inst in instances], dtype=float).reshape(len(instances), -1)
    return net.encoding.encode_batch(instances)


def predict_labels(net: Network, instances: Sequence[Instance]) -> list[str]:
    if not instances:
        return []
    outs = forward_batch(net, encode_instances(net, instances))
    return [label_from_output(net, row) for row in outs]


def predict_label(net: Network, inst: Instance) -> str:
    return predict_labels(net, [inst])[0]


# -- text format --------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def _row(values) -> str:
    return " ".join(_fmt(v) for v in values)


def save_network(net: Network) -> str:
    lines = [FORMAT_HEADER, f"input_dim {net.input_dim}", f"task {net.task}"]
    if net.task == CLASSIFICATION:
        lines.append("labels " + " ".join(net.class_labels))
    if net.binning is not None:
        lines.append("binning " + _row(net.binning.edges) + " | " + " ".join(net.binning.labels))
    encs = net.encoding.attributes if net.encoding is not None else ()
    lines.append(f"encoding {len(encs)}")
    for e in encs:
        if e.kind == NOMINAL:
            lines.append(f"nominal {e.name} " + " ".join(e.tokens))
        else:
            lines.append(f"continuous {e.name} {_fmt(e.low)} {_fmt(e.high)}")
    lines.append(f"layers {len(net.layers)}")
    for k, layer in enumerate(net.layers, start=1):
        lines.append(f"layer {k} {layer.out_dim} {layer.in_dim} {layer.activation}")
        lines.extend(_row(r) for r in layer.weights)
        lines.append("bias " + _row(layer.bias))
    lines.append(f"skips {len(net.skips)}")
    for s in net.skips:
        rows, cols = s.weights.shape
        lines.append(f"skip {s.from_layer} {s.to_layer} {rows} {cols}")
        lines.extend(_row(r) for r in s.weights)
    lines.append("end")
    return "\n".join(lines) + "\n"


class _Lines:
    def __init__(self, text):
        self.items = [(i, raw.split("#", 1)[0].split())
                      for i, raw in enumerate(text.splitlines(), start=1)]
        self.items = [(i, parts) for i, parts in self.items if parts]
        self.pos = 0

    def next(self, keyword=None, nargs=None):
        if self.pos >= len(self.items):
            raise ParseError(f"unexpected end of network file (wanted {keyword or 'more data'})")
        line_no, parts = self.items[self.pos]
        self.pos += 1
        if keyword is not None and parts[0] != keyword:
            raise ParseError(f"line {line_no}: expected '{keyword}', found '{parts[0]}'")
        if nargs is not None and len(parts) - 1 != nargs:
            raise ParseError(f"line {line_no}: '{parts[0]}' takes {nargs} fields, got {len(parts) - 1}")
        return line_no, parts

    def peek(self):
        return self.items[self.pos][1][0] if self.pos < len(self.items) else None


def _ints(parts, line_no):
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise ParseError(f"line {line_no}: expected integers, got {parts}") from None


def _floats(parts, line_no, n=None):
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ParseError(f"line {line_no}: expected numbers, got {parts}") from None
    if n is not None and len(vals) != n:
        raise ParseError(f"line {line_no}: expected {n} numbers, got {len(vals)}")
    return vals


def _matrix(lines: _Lines, rows, cols):
    out = []
    for _ in range(rows):
        line_no, parts = lines.next()
        out.append(_floats(parts, line_no, cols))
    return np.array(out, dtype=float).reshape(rows, cols)


def load_network(text: str) -> Network:
    """Parse the sectioned text format written by :func:`save_network`."""
    lines = _Lines(text)
    line_no, parts = lines.next()
    if " ".join(parts) != FORMAT_HEADER:
        raise ParseError(f"line {line_no}: missing '{FORMAT_HEADER}' header")
    line_no, parts = lines.next("input_dim", 1)
    (input_dim,) = _ints(parts[1:], line_no)
    line_no, parts = lines.next("task", 1)
    task = parts[1]
    labels: tuple = ()
    binning = None
    if lines.peek() == "labels":
        _, parts = lines.next("labels")
        labels = tuple(parts[1:])
    if lines.peek() == "binning":
        line_no, parts = lines.next("binning")
        if "|" not in parts:
            raise ParseError(f"line {line_no}: binning needs 'edges | labels'")
        bar = parts.index("|")
        try:
            binning = BinningSpec(tuple(_floats(parts[1:bar], line_no)), tuple(parts[bar + 1:]))
        except ConfigurationError as exc:
            raise ParseError(f"line {line_no}: {exc}") from None
    line_no, parts = lines.next("encoding", 1)
    (n_enc,) = _ints(parts[1:], line_no)
    encs = []
    for _ in range(n_enc):
        line_no, parts = lines.next()
        if parts[0] == "nominal" and len(parts) >= 3:
            encs.append(AttributeEncoding(parts[1], NOMINAL, tuple(parts[2:])))
        elif parts[0] == "continuous" and len(parts) == 4:
            lo, hi = _floats(parts[2:], line_no, 2)
            encs.append(AttributeEncoding(parts[1], CONTINUOUS, (), lo, hi))
        else:
            raise ParseError(f"line {line_no}: bad encoding entry {' '.join(parts)!r}")
    line_no, parts = lines.next("layers", 1)
    (n_layers,) = _ints(parts[1:], line_no)
    layers = []
    for k in range(1, n_layers + 1):
        line_no, parts = lines.next("layer", 4)
        idx, rows, cols = _ints(parts[1:4], line_no)
        if idx != k:
            raise ParseError(f"line {line_no}: expected layer {k}, found {idx}")
        w = _matrix(lines, rows, cols)
        b_line, b_parts = lines.next("bias")
        b = _floats(b_parts[1:], b_line, rows)
        try:
            layers.append(Layer(w, b, parts[4]))
        except StructuralError as exc:
            raise StructuralError(f"line {line_no}: layer {k}: {exc}") from None
    line_no, parts = lines.next("skips", 1)
    (n_skips,) = _ints(parts[1:], line_no)
    skips = []
    for _ in range(n_skips):
        line_no, parts = lines.next("skip", 4)
        src, dst, rows, cols = _ints(parts[1:], line_no)
        w = _matrix(lines, rows, cols)
        try:
            skips.append(SkipConnection(src, dst, w))
        except StructuralError as exc:
            raise StructuralError(f"line {line_no}: {exc}") from None
    lines.next("end", 0)
    encoding = InputEncoding(tuple(encs)) if encs else None
    return Network(input_dim, tuple(layers), tuple(skips), task, labels, encoding, binning)
