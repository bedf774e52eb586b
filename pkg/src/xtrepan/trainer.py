"""Backpropagation training with cross-validation early stopping."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import BinningSpec, Dataset, Instance
from .errors import ConfigurationError, TrainingError
from .network import (ACTIVATIONS, CLASSIFICATION, REGRESSION, InputEncoding, Layer, Network,
                      SkipConnection, activation_backward, encode_instances, forward_all)

CROSS_ENTROPY = "cross_entropy"
MEAN_SQUARE_ERROR = "mean_square_error"
LOSSES = (CROSS_ENTROPY, MEAN_SQUARE_ERROR)
_EPS = 1e-15


@dataclass(frozen=True)
class Topology:
    """Hidden layers as ``(size, activation)`` pairs; skips as ``(from_layer, to_layer)``.

    Layer 0 is the input and the output layer is ``len(hidden) + 1``.
    """
    hidden: tuple[tuple[int, str], ...] = ()
    output_activation: str = "logistic"
    skips: tuple[tuple[int, int], ...] = ()

    @classmethod
    def parse(cls, hidden: str, output_activation: str = "logistic", skips: str = "") -> "Topology":
        """Parse ``hidden="4:hyperbolic,3:logistic"`` and ``skips="0-2,1-3"``."""
        layers = []
        for part in filter(None, (p.strip() for p in hidden.split(","))):
            size, _, act = part.partition(":")
            try:
                layers.append((int(size), act or "hyperbolic"))
            except ValueError:
                raise ConfigurationError(f"bad hidden layer {part!r}; expected SIZE:ACTIVATION") from None
        pairs = []
        for part in filter(None, (p.strip() for p in skips.split(","))):
            try:
                a, b = part.split("-")
                pairs.append((int(a), int(b)))
            except ValueError:
                raise ConfigurationError(f"bad skip {part!r}; expected FROM-TO") from None
        return cls(tuple(layers), output_activation, tuple(pairs))


@dataclass(frozen=True)
class TrainConfig:
    topology: Topology
    loss: str = MEAN_SQUARE_ERROR
    learning_rate: float = 0.1
    max_epochs: int = 1000
    patience: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ConfigurationError(f"unknown loss {self.loss!r}")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if self.max_epochs < 0 or self.patience < 0 or self.seed < 0:
            raise ConfigurationError("max_epochs, patience and seed must be non-negative")
        for size, act in self.topology.hidden:
            if size < 1:
                raise ConfigurationError("hidden layer sizes must be positive")
            if act not in ACTIVATIONS:
                raise ConfigurationError(f"unknown activation {act!r}")
        if self.topology.output_activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.topology.output_activation!r}")
        if self.loss == CROSS_ENTROPY and self.topology.output_activation not in ("logistic", "softmax"):
            raise ConfigurationError("cross_entropy needs a logistic or softmax output layer")


@dataclass
class TrainReport:
    train_errors: list[float] = field(default_factory=list)
    cv_errors: list[float] = field(default_factory=list)
    stopping_epoch: int = 0
    stop_reason: str = "max_epochs"
    best_epoch: int = 0

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["epoch", "train_error", "cv_error"])
        for i, (tr, cv) in enumerate(zip(self.train_errors, self.cv_errors), start=1):
            w.writerow([i, repr(tr), repr(cv)])
        return out.getvalue()


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    skips: list[np.ndarray]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in (*self.weights, *self.biases, *self.skips)])


class EarlyStopping:
    """Tracks the best CV error; stops after ``patience`` epochs without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_error = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0
        self.stop = False

    def update(self, epoch: int, error: float) -> bool:
        """Record an epoch; returns True when it is the new best."""
        if error < self.best_error:
            self.best_error, self.best_epoch, self.bad_epochs = error, epoch, 0
            return True
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.stop = True
        return False


# -- parameters ---------------------------------------------------------------

def parameters(net: Network) -> list[np.ndarray]:
    """Writable copies of all parameters, ordered weights, biases, skips."""
    return ([np.array(l.weights) for l in net.layers] + [np.array(l.bias) for l in net.layers]
            + [np.array(s.weights) for s in net.skips])


def with_parameters(net: Network, params: Sequence[np.ndarray]) -> Network:
    L = len(net.layers)
    layers = tuple(Layer(params[k], params[L + k], net.layers[k].activation) for k in range(L))
    skips = tuple(SkipConnection(s.from_layer, s.to_layer, params[2 * L + i])
                  for i, s in enumerate(net.skips))
    return Network(net.input_dim, layers, skips, net.task, net.class_labels, net.encoding, net.binning)


def init_network(encoding: InputEncoding, topology: Topology, task: str,
                 class_labels: Sequence[str] = (), binning: BinningSpec | None = None,
                 rng: np.random.Generator | None = None) -> Network:
    """Fresh network with weights uniform in [-0.5, 0.5]."""
    rng = rng if rng is not None else np.random.default_rng(0)
    if task == REGRESSION:
        out_dim = 1
    elif len(class_labels) == 2 and topology.output_activation != "softmax":
        out_dim = 1
    else:
        out_dim = len(class_labels)
    dims = [encoding.dim] + [size for size, _ in topology.hidden] + [out_dim]
    acts = [act for _, act in topology.hidden] + [topology.output_activation]
    ws = [rng.uniform(-0.5, 0.5, (dims[k + 1], dims[k])) for k in range(len(acts))]
    bs = [rng.uniform(-0.5, 0.5, dims[k + 1]) for k in range(len(acts))]
    for a, b in topology.skips:
        if not (0 <= a < b - 1 and b <= len(acts)):
            raise ConfigurationError(f"skip {a}-{b} is not valid for {len(acts)} layers")
    skips = [SkipConnection(a, b, rng.uniform(-0.5, 0.5, (dims[b], dims[a]))) for a, b in topology.skips]
    layers = [Layer(w, b, act) for w, b, act in zip(ws, bs, acts)]
    return Network(encoding.dim, tuple(layers), tuple(skips), task, tuple(class_labels), encoding, binning)


def target_matrix(net: Network, targets: Sequence) -> np.ndarray:
    if net.task == REGRESSION:
        return np.asarray(targets, dtype=float).reshape(-1, 1)
    index = {lab: i for i, lab in enumerate(net.class_labels)}
    try:
        idx = np.array([index[t] for t in targets], dtype=int)
    except KeyError as exc:
        raise ConfigurationError(f"target {exc.args[0]!r} is not a network class label") from None
    if net.output_dim == 1:
        return idx.reshape(-1, 1).astype(float)
    Y = np.zeros((len(idx), net.output_dim))
    Y[np.arange(len(idx)), idx] = 1.0
    return Y


def batch_arrays(net: Network, instances: Sequence[Instance]) -> tuple[np.ndarray, np.ndarray]:
    return encode_instances(net, instances), target_matrix(net, [i.target for i in instances])


# -- loss and gradient ----------------------------------------------------------

def _loss_from_output(y: np.ndarray, Y: np.ndarray, loss: str) -> float:
    n = max(len(Y), 1)
    if loss == MEAN_SQUARE_ERROR:
        return float(np.sum((y - Y) ** 2) / n)
    p = np.clip(y, _EPS, 1 - _EPS)
    if y.shape[1] == 1:
        return float(-np.sum(Y * np.log(p) + (1 - Y) * np.log(1 - p)) / n)
    return float(-np.sum(Y * np.log(p)) / n)


def loss_value(net: Network, X: np.ndarray, Y: np.ndarray, loss: str) -> float:
    if len(X) == 0:
        return float("nan")
    return _loss_from_output(forward_all(net, X)[1][-1], Y, loss)


def loss_gradient(net: Network, X: np.ndarray, Y: np.ndarray, loss: str) -> Gradients:
    """Analytic gradient of the mean batch loss w.r.t. every weight, bias and skip weight."""
    if loss not in LOSSES:
        raise ConfigurationError(f"unknown loss {loss!r}")
    for layer in net.layers:
        if layer.activation == "step":
            raise ConfigurationError("step activation is not supported for training")
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).reshape(len(X), -1)
    n = len(X)
    pre, acts = forward_all(net, X)
    L = len(net.layers)
    y = acts[-1]
    out_act = net.layers[-1].activation
    grad_a = [np.zeros_like(a) for a in acts]
    delta_out = None
    if loss == MEAN_SQUARE_ERROR:
        grad_a[L] = 2.0 * (y - Y) / n
    elif (out_act == "softmax" and y.shape[1] > 1) or (out_act == "logistic" and y.shape[1] == 1):
        # matched pairs collapse to (y - t); avoids dividing by saturated outputs
        delta_out = (y - Y) / n
    else:
        p = np.clip(y, _EPS, 1 - _EPS)
        if y.shape[1] == 1:
            grad_a[L] = (-(Y / p) + (1 - Y) / (1 - p)) / n
        else:
            grad_a[L] = -(Y / p) / n

    gw = [None] * L
    gb = [None] * L
    gs = [np.zeros_like(s.weights) for s in net.skips]
    for k in range(L, 0, -1):
        layer = net.layers[k - 1]
        if k == L and delta_out is not None:
            delta = delta_out
        else:
            delta = activation_backward(layer.activation, pre[k], acts[k], grad_a[k])
        gw[k - 1] = delta.T @ acts[k - 1]
        gb[k - 1] = delta.sum(axis=0)
        grad_a[k - 1] += delta @ layer.weights
        for i, s in enumerate(net.skips):
            if s.to_layer == k:
                gs[i] = delta.T @ acts[s.from_layer]
                grad_a[s.from_layer] += delta @ s.weights
    return Gradients(gw, gb, gs)


# -- training loop ------------------------------------------------------------

def _check_data(dataset: Dataset, encoding: InputEncoding):
    encoding.check_schema(dataset.schema)


def train(train_set: Dataset, cv_set: Dataset, cfg: TrainConfig,
          binning: BinningSpec | None = None) -> tuple[Network, TrainReport]:
    """Full-batch gradient descent; returns the snapshot with the lowest CV error.

    An empty ``cv_set`` disables early stopping and the final network is returned.
    """
    if len(train_set) == 0:
        raise ConfigurationError("training set is empty")
    if train_set.schema != cv_set.schema:
        raise ConfigurationError("training and cross-validation sets have different schemas")
    schema = train_set.schema
    task = CLASSIFICATION if schema.is_classification else REGRESSION
    if task == REGRESSION and cfg.loss == CROSS_ENTROPY:
        raise ConfigurationError("cross_entropy needs a classification target")
    encoding = InputEncoding.fit(train_set)
    rng = np.random.default_rng(cfg.seed)
    net = init_network(encoding, cfg.topology, task, schema.class_labels or (), binning, rng)
    report = TrainReport()
    if cfg.max_epochs == 0:
        return net, report

    X, Y = batch_arrays(net, train_set.instances)
    Xcv, Ycv = batch_arrays(net, cv_set.instances)
    use_cv = len(cv_set) > 0
    stopper = EarlyStopping(cfg.patience)
    params = parameters(net)
    best = net
    current = net
    for epoch in range(1, cfg.max_epochs + 1):
        g = loss_gradient(current, X, Y, cfg.loss)
        grads = g.weights + g.biases + g.skips
        for p, d in zip(params, grads):
            p -= cfg.learning_rate * d
        if not all(np.all(np.isfinite(p)) for p in params):
            raise TrainingError(f"parameters diverged at epoch {epoch}", epoch)
        current = with_parameters(current, params)
        tr = loss_value(current, X, Y, cfg.loss)
        cv = loss_value(current, Xcv, Ycv, cfg.loss) if use_cv else float("nan")
        if not math.isfinite(tr) or (use_cv and not math.isfinite(cv)):
            raise TrainingError(f"non-finite loss at epoch {epoch}", epoch)
        report.train_errors.append(tr)
        report.cv_errors.append(cv)
        report.stopping_epoch = epoch
        if use_cv:
            if stopper.update(epoch, cv):
                best = current
            if stopper.stop:
                report.stop_reason = "early_stop"
                break
        else:
            best = current
    report.best_epoch = stopper.best_epoch if use_cv else report.stopping_epoch
    return best, report
