"""Membership-query oracle: marginal feature models plus the network as labeler."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .dataset import Dataset, DatasetSchema, Instance, columns
from .errors import ConfigurationError, DataError, UnsatisfiableConstraint
from .network import Network, predict_labels
from .tree import MofNTest, mofn_mask

BANDWIDTH_FLOOR = 1e-6
DEFAULT_REJECTION_CAP = 10_000


def default_bandwidth(values: np.ndarray) -> float:
    """Training standard deviation scaled by 1/sqrt(n)."""
    return float(np.std(values)) / math.sqrt(len(values))


@dataclass(frozen=True)
class NominalModel:
    tokens: tuple[str, ...]
    probabilities: tuple[float, ...]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.choice(len(self.tokens), size=n, p=np.asarray(self.probabilities))
        out = np.empty(n, dtype=object)
        out[:] = [self.tokens[i] for i in idx]
        return out

    def frequency(self, token) -> float:
        return self.probabilities[self.tokens.index(token)]


@dataclass(frozen=True, eq=False)
class ContinuousModel:
    """Gaussian kernel density estimate, one kernel per training value."""
    values: np.ndarray
    bandwidth: float

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        centers = self.values[rng.integers(0, len(self.values), size=n)]
        return centers + rng.normal(0.0, self.bandwidth, size=n)


FeatureModel = Union[NominalModel, ContinuousModel]


def fit_feature_models(train: Dataset,
                       bandwidth_rule: Callable[[np.ndarray], float] = default_bandwidth
                       ) -> tuple[FeatureModel, ...]:
    if len(train) == 0:
        raise DataError("cannot fit feature models on an empty dataset")
    n = len(train)
    models = []
    for attr, col in zip(train.schema.inputs, columns(train.schema, train.instances)):
        if attr.is_nominal:
            counts = [int(np.sum(col == tok)) for tok in attr.tokens]
            models.append(NominalModel(attr.tokens, tuple(c / n for c in counts)))
        else:
            b = max(float(bandwidth_rule(col)), BANDWIDTH_FLOOR)
            models.append(ContinuousModel(np.array(col, dtype=float), b))
    return tuple(models)


@dataclass(frozen=True)
class Constraint:
    test: MofNTest
    satisfied: bool = True

    def mask(self, cols, schema) -> np.ndarray:
        m = mofn_mask(self.test, cols, schema)
        return m if self.satisfied else ~m

    def __str__(self):
        return f"{self.test} is {'satisfied' if self.satisfied else 'violated'}"


class Oracle:
    """Network plus feature models; answers membership queries.

    ``query_count`` counts instances labeled through :meth:`label`.
    """

    def __init__(self, network: Network, schema: DatasetSchema, models: Sequence[FeatureModel],
                 seed: int = 0, rejection_cap: int = DEFAULT_REJECTION_CAP):
        if rejection_cap < 1:
            raise ConfigurationError("rejection_cap must be at least 1")
        if len(models) != len(schema.inputs):
            raise ConfigurationError("one feature model per input attribute is required")
        self.network = network
        self.schema = schema
        self.models = tuple(models)
        self.seed = seed
        self.rejection_cap = rejection_cap
        self.query_count = 0

    @classmethod
    def fit(cls, network: Network, train: Dataset, seed: int = 0,
            rejection_cap: int = DEFAULT_REJECTION_CAP, bandwidth_rule=default_bandwidth) -> "Oracle":
        return cls(network, train.schema, fit_feature_models(train, bandwidth_rule), seed, rejection_cap)

    def rng(self, stream) -> np.random.Generator:
        key = list(stream) if isinstance(stream, (tuple, list)) else [stream]
        return np.random.default_rng(np.random.SeedSequence([self.seed, *key]))

    def label(self, instances: Sequence[Instance]) -> list[Instance]:
        labels = predict_labels(self.network, instances)
        self.query_count += len(instances)
        return [inst.with_target(lab) for inst, lab in zip(instances, labels)]


def _sample_columns(h: Oracle, rng, n):
    return [m.sample(rng, n) for m in h.models]


def draw_instances(h: Oracle, constraints: Sequence[Constraint], n: int, stream=0) -> list[Instance]:
    """Draw ``n`` unlabeled instances from the marginals, rejecting any that break a constraint.

    Fails once a single instance needs ``h.rejection_cap`` consecutive rejections.
    """
    if n < 0:
        raise ConfigurationError("cannot draw a negative number of instances")
    if n == 0:
        return []
    rng = h.rng(stream)
    accepted_cols: list[list[np.ndarray]] = [[] for _ in h.models]
    got = 0
    streak = 0
    while got < n:
        batch = min(max(256, 4 * (n - got)), 65536)
        cols = _sample_columns(h, rng, batch)
        ok = np.ones(batch, dtype=bool)
        for c in constraints:
            ok &= c.mask(cols, h.schema)
        need = n - got
        pos = np.flatnonzero(ok)[:need]
        # gap = rejections preceding each acceptance, carrying the streak across batches
        prev = np.concatenate(([-1 - streak], pos[:-1]))
        gaps = pos - prev - 1
        if len(pos) < need:
            streak = streak + batch if len(pos) == 0 else batch - 1 - int(pos[-1])
        if np.any(gaps >= h.rejection_cap) or (len(pos) < need and streak >= h.rejection_cap):
            worst = min(constraints, key=lambda c: int(np.sum(c.mask(cols, h.schema))), default=None)
            raise UnsatisfiableConstraint(
                f"no instance satisfied the path constraints in {h.rejection_cap} attempts; "
                f"most restrictive: {worst}", worst)
        for acc, col in zip(accepted_cols, cols):
            acc.append(col[pos])
        got += len(pos)
    merged = [np.concatenate(a) for a in accepted_cols]
    out = []
    for row in zip(*merged):
        out.append(Instance(tuple(v if isinstance(v, str) else float(v) for v in row)))
    return out


def ensure_min_sample(node_examples: Sequence[Instance], min_sample: int, h: Oracle,
                      constraints: Sequence[Constraint] = (), stream=0) -> list[Instance]:
    """Top up ``node_examples`` to ``min_sample`` with oracle-labeled draws."""
    if min_sample < 0:
        raise ConfigurationError("min_sample must be non-negative")
    missing = max(0, min_sample - len(node_examples))
    drawn = h.label(draw_instances(h, constraints, missing, stream))
    return list(node_examples) + drawn


def samples_to_csv(schema: DatasetSchema, instances: Sequence[Instance]) -> str:
    """Audit dump of drawn instances (target column holds the oracle label)."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow([*schema.input_names, schema.target.name])
    for inst in instances:
        w.writerow([repr(v) if isinstance(v, float) else v for v in inst.values] + [inst.target])
    return out.getvalue()
