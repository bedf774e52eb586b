"""C4.5-style induction: entropy, information gain, gain ratio, numeric thresholds."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset
from .errors import ConfigurationError, DataError, DomainError, InadmissibleAttribute
from .tree import (EQUALS, GREATER, DecisionTree, Internal, Leaf, Literal, MofNTest, Provenance,
                   params_digest)

_EPS = 1e-12


@dataclass(frozen=True)
class C45Params:
    min_instances_per_leaf: int = 2
    use_gain_ratio: bool = True
    max_depth: Optional[int] = None

    def __post_init__(self):
        if self.min_instances_per_leaf < 1:
            raise ConfigurationError("min_instances_per_leaf must be at least 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigurationError("max_depth must be non-negative")


def entropy(counts: Sequence[float]) -> float:
    """Shannon entropy in bits of a class-count vector (0 log 0 = 0)."""
    c = np.asarray(counts, dtype=float)
    if np.any(c < 0):
        raise DomainError("class counts must be non-negative")
    total = c.sum()
    if total <= 0:
        raise DomainError("entropy of an empty count vector")
    p = c[c > 0] / total
    return float(-np.sum(p * np.log2(p)))


def _partition_entropy(groups: Sequence[Sequence]) -> float:
    """Size-weighted mean entropy of label groups."""
    n = sum(len(g) for g in groups)
    return sum(len(g) / n * entropy(list(Counter(g).values())) for g in groups if len(g))


def _labels(data: Dataset) -> list:
    return [inst.target for inst in data]


def _groups(data: Dataset, attribute: str, threshold: Optional[float]) -> list[list]:
    j = data.schema.input_index(attribute)
    attr = data.schema.inputs[j]
    if attr.is_nominal:
        by_value: dict = {}
        for inst in data:
            by_value.setdefault(inst.values[j], []).append(inst.target)
        return [by_value[tok] for tok in attr.tokens if tok in by_value]
    if threshold is None:
        threshold, _ = best_threshold(data, attribute)
    above = [inst.target for inst in data if inst.values[j] > threshold]
    below = [inst.target for inst in data if inst.values[j] <= threshold]
    return [g for g in (below, above) if g]


def info_gain(data: Dataset, attribute: str, threshold: Optional[float] = None) -> float:
    """Entropy reduction from splitting on ``attribute``.

    Continuous attributes split in two at ``threshold`` (default: the best one);
    a continuous attribute with no admissible threshold has gain 0.
    """
    if len(data) == 0:
        raise DataError("information gain of an empty dataset")
    labels = _labels(data)
    base = entropy(list(Counter(labels).values()))
    try:
        groups = _groups(data, attribute, threshold)
    except InadmissibleAttribute:
        return 0.0
    return max(0.0, base - _partition_entropy(groups))


def split_information(data: Dataset, attribute: str, threshold: Optional[float] = None) -> float:
    groups = _groups(data, attribute, threshold)
    return entropy([len(g) for g in groups])


def gain_ratio(data: Dataset, attribute: str, threshold: Optional[float] = None) -> float:
    """Gain divided by split information; zero split information is inadmissible."""
    if len(data) == 0:
        raise DataError("gain ratio of an empty dataset")
    info = split_information(data, attribute, threshold)
    if info <= _EPS:
        raise InadmissibleAttribute(f"{attribute}: split information is zero")
    return info_gain(data, attribute, threshold) / info


def best_threshold(data: Dataset, attribute: str) -> tuple[float, float]:
    """Midpoint threshold with the highest gain (ties: smallest threshold)."""
    j = data.schema.input_index(attribute)
    if data.schema.inputs[j].is_nominal:
        raise ConfigurationError(f"{attribute} is nominal; thresholds apply to continuous attributes")
    x = np.array([inst.values[j] for inst in data], dtype=float)
    labels = _labels(data)
    distinct = np.unique(x)
    if len(distinct) < 2:
        raise InadmissibleAttribute(f"{attribute}: fewer than two distinct values")
    classes = sorted(set(labels), key=labels.index)
    y = np.array([classes.index(t) for t in labels])
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    onehot = np.zeros((len(xs), len(classes)))
    onehot[np.arange(len(xs)), ys] = 1.0
    cum = np.cumsum(onehot, axis=0)
    total = cum[-1]
    n = len(xs)
    base = entropy(total)
    best_t, best_gain = None, -1.0
    # last position of each distinct value in sorted order
    ends = np.flatnonzero(np.diff(xs) > 0)
    for e in ends:
        left = cum[e]
        right = total - left
        nl = e + 1
        g = base - (nl / n) * entropy(left) - ((n - nl) / n) * entropy(right)
        if g > best_gain + _EPS:
            best_gain = g
            best_t = (xs[e] + xs[e + 1]) / 2.0
    if best_gain <= _EPS:
        raise InadmissibleAttribute(f"{attribute}: no threshold has positive gain")
    return float(best_t), float(best_gain)


def majority_label(labels: Sequence, class_labels: Sequence[str]) -> str:
    """Most frequent label; ties go to the lowest class index."""
    counts = Counter(labels)
    return max(class_labels, key=lambda c: (counts.get(c, 0), -class_labels.index(c)))


def _score(data: Dataset, attribute: str, nominal: bool, use_ratio: bool):
    """(score, gain, threshold) or None when the attribute is inadmissible here."""
    threshold = None
    if not nominal:
        try:
            threshold, _ = best_threshold(data, attribute)
        except InadmissibleAttribute:
            return None
    gain = info_gain(data, attribute, threshold)
    if use_ratio:
        try:
            return gain_ratio(data, attribute, threshold), gain, threshold
        except InadmissibleAttribute:
            return None
    if nominal and split_information(data, attribute) <= _EPS:
        return None
    return gain, gain, threshold


def induce_c45(train: Dataset, params: C45Params = C45Params()) -> DecisionTree:
    """Recursive induction; multiway nominal splits are compiled to binary chains."""
    schema = train.schema
    if not schema.is_classification:
        raise ConfigurationError("C4.5 needs a nominal target; bin regression targets first")
    if len(train) == 0:
        raise DataError("cannot induce a tree from an empty dataset")
    class_labels = schema.class_labels

    def grow(data: Dataset, available: frozenset, depth: int):
        labels = _labels(data)
        majority = majority_label(labels, class_labels)
        if (len(set(labels)) <= 1 or len(data) < params.min_instances_per_leaf
                or (params.max_depth is not None and depth >= params.max_depth)):
            return Leaf(majority)
        best = None
        for attr in schema.inputs:
            if attr.is_nominal and attr.name not in available:
                continue
            scored = _score(data, attr.name, attr.is_nominal, params.use_gain_ratio)
            if scored is None:
                continue
            if best is None or scored[0] > best[1][0] + _EPS:
                best = (attr, scored)
        if best is None or best[1][1] <= _EPS:
            return Leaf(majority)
        attr, (_, _, threshold) = best
        j = schema.input_index(attr.name)
        if not attr.is_nominal:
            above = data.replace(i for i in data if i.values[j] > threshold)
            below = data.replace(i for i in data if i.values[j] <= threshold)
            test = MofNTest(1, (Literal(attr.name, GREATER, threshold),))
            return Internal(test, grow(above, available, depth + 1), grow(below, available, depth + 1))
        rest = available - {attr.name}
        children = []
        for tok in attr.tokens:
            subset = data.replace(i for i in data if i.values[j] == tok)
            children.append(grow(subset, rest, depth + 1) if len(subset) else Leaf(majority))
        node = children[-1]
        for k in range(len(attr.tokens) - 2, -1, -1):
            test = MofNTest(1, (Literal(attr.name, EQUALS, attr.tokens[k]),))
            node = Internal(test, children[k], node, len(attr.tokens) if k == 0 else 0)
        return node

    nominal = frozenset(a.name for a in schema.inputs if a.is_nominal)
    root = grow(train, nominal, 0)
    return DecisionTree(root, schema, Provenance("induced", params_digest(params)))
