"""Confusion matrices, accuracy, kappa, fidelity and model comparison reports."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset, columns
from .errors import DomainError, StructuralError, ValidationError
from .network import Network, predict_labels
from .tree import Complexity, DecisionTree, classify_batch, complexity


class InputError(ValidationError):
    pass


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are actual classes, columns predicted classes."""
    labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        k = len(self.labels)
        if counts.shape != (k, k):
            raise InputError(f"counts shape {counts.shape} does not match {k} labels")
        if np.any(counts < 0):
            raise InputError("confusion counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return (isinstance(other, ConfusionMatrix) and self.labels == other.labels
                and np.array_equal(self.counts, other.counts))


def confusion_matrix(actual: Sequence[str], predicted: Sequence[str],
                     label_order: Sequence[str]) -> ConfusionMatrix:
    if len(actual) != len(predicted):
        raise InputError(f"{len(actual)} actual labels vs {len(predicted)} predictions")
    if len(actual) == 0:
        raise InputError("confusion matrix of empty input")
    index = {lab: i for i, lab in enumerate(label_order)}
    counts = np.zeros((len(index), len(index)), dtype=np.int64)
    for a, p in zip(actual, predicted):
        if a not in index or p not in index:
            raise InputError(f"label {a if a not in index else p!r} not in {list(label_order)}")
        counts[index[a], index[p]] += 1
    return ConfusionMatrix(tuple(label_order), counts)


def accuracy(cm: ConfusionMatrix) -> float:
    """Percent of instances on the diagonal."""
    if cm.total == 0:
        raise DomainError("accuracy of an empty confusion matrix")
    return 100.0 * np.trace(cm.counts) / cm.total


def per_class_accuracy(cm: ConfusionMatrix) -> dict[str, float]:
    """Correct predictions over all predictions of each class (column totals); 0 when a
    class is never predicted."""
    cols = cm.counts.sum(axis=0)
    diag = np.diag(cm.counts)
    return {lab: (100.0 * diag[j] / cols[j] if cols[j] else 0.0) for j, lab in enumerate(cm.labels)}


def kappa(cm: ConfusionMatrix) -> float:
    """Chance-corrected agreement (P(A) - P(E)) / (1 - P(E))."""
    n = cm.total
    if n == 0:
        raise DomainError("kappa of an empty confusion matrix")
    c = cm.counts.astype(float)
    p_a = np.trace(c) / n
    p_e = float(np.dot(c.sum(axis=1), c.sum(axis=0))) / (n * n)
    if p_e >= 1.0:
        return 1.0 if p_a >= 1.0 else 0.0
    return float((p_a - p_e) / (1.0 - p_e))


def tree_predictions(tree: DecisionTree, data: Dataset) -> list[str]:
    _check_compatible(tree, data)
    return classify_batch(tree, columns(data.schema, data.instances))


def _check_compatible(tree: DecisionTree, data: Dataset):
    names = data.schema.input_names
    for attr in tree.schema.inputs:
        if attr.name not in names:
            raise StructuralError(f"tree uses attribute {attr.name!r}, absent from the data")
    if tree.schema.input_names != names:
        raise StructuralError(
            f"tree inputs {list(tree.schema.input_names)} do not match data inputs {list(names)}")
    for a, b in zip(tree.schema.inputs, data.schema.inputs):
        if a.kind != b.kind or a.tokens != b.tokens:
            raise StructuralError(f"attribute {a.name}: tree and data declare it differently")


def fidelity(tree: DecisionTree, net: Network, data: Dataset) -> float:
    """Percent of instances where tree and network predict the same label."""
    if len(data) == 0:
        raise DomainError("fidelity over an empty dataset")
    ours = tree_predictions(tree, data)
    theirs = predict_labels(net, data.instances)
    return 100.0 * sum(a == b for a, b in zip(ours, theirs)) / len(data)


@dataclass
class Metrics:
    total_accuracy: float
    per_class_accuracy: dict
    kappa: float
    fidelity: Optional[float]
    complexity: Complexity
    confusion: ConfusionMatrix


def evaluate_tree(tree: DecisionTree, data: Dataset, net: Optional[Network] = None) -> Metrics:
    """Metrics of ``tree`` against the data's own labels (and the network, if given)."""
    if len(data) == 0:
        raise DomainError("cannot evaluate on an empty dataset")
    predicted = tree_predictions(tree, data)
    labels = tree.schema.class_labels
    actual = data.targets
    cm = confusion_matrix(actual, predicted, labels)
    fid = fidelity(tree, net, data) if net is not None else None
    return Metrics(accuracy(cm), per_class_accuracy(cm), kappa(cm), fid, complexity(tree), cm)


REPORT_HEADER = ("model", "accuracy", "kappa", "fidelity", "internal_nodes", "leaves", "literals")


@dataclass
class Report:
    rows: list[tuple[str, Metrics]]

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for name, m in self.rows:
            w.writerow(_cells(name, m))
        return out.getvalue()

    def to_text(self) -> str:
        table = [REPORT_HEADER] + [_cells(name, m) for name, m in self.rows]
        widths = [max(len(str(r[i])) for r in table) for i in range(len(REPORT_HEADER))]
        lines = ["  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip() for r in table]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def _cells(name, m: Metrics):
    fid = f"{m.fidelity:.2f}" if m.fidelity is not None else ""
    c = m.complexity
    return (name, f"{m.total_accuracy:.2f}", f"{m.kappa:.4f}", fid,
            str(c.internal_nodes), str(c.leaves), str(c.total_literals))


def compare_report(models: Sequence[tuple[str, DecisionTree]], net: Optional[Network],
                   test: Dataset) -> Report:
    """Metrics for each named tree, in the given order."""
    if not models:
        raise InputError("no models to compare")
    return Report([(name, evaluate_tree(tree, test, net)) for name, tree in models])
