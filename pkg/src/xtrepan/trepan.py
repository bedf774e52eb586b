"""Oracle-guided tree extraction with m-of-n, single-test and disjunctive splits."""
from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .c45 import majority_label
from .dataset import NOMINAL, TARGET, AttributeSpec, Dataset, DatasetSchema, Instance, columns
from .errors import ConfigurationError, ExtractionError, SplitFailure
from .network import Network
from .oracle import DEFAULT_REJECTION_CAP, Constraint, Oracle, draw_instances, ensure_min_sample
from .tree import (EQUALS, GREATER, DecisionTree, Internal, Leaf, Literal, MofNTest, Provenance,
                   mofn_mask, params_digest)

MOFN = "mofn"
SINGLE_TEST = "single_test"
DISJUNCTIVE = "disjunctive"
VARIANTS = (MOFN, SINGLE_TEST, DISJUNCTIVE)
_EPS = 1e-12


@dataclass(frozen=True)
class TrepanParams:
    min_sample: int = 1000
    max_internal_nodes: int = 50
    beam_width: int = 2
    variant: str = MOFN
    purity_stop: float = 0.99
    seed: int = 0
    rejection_cap: int = DEFAULT_REJECTION_CAP

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.min_sample < 0 or self.max_internal_nodes < 0 or self.seed < 0:
            raise ConfigurationError("min_sample, max_internal_nodes and seed must be non-negative")
        if self.beam_width < 1:
            raise ConfigurationError("beam_width must be at least 1")
        if not 0.5 < self.purity_stop <= 1.0:
            raise ConfigurationError("purity_stop must lie in (0.5, 1]")
        if self.rejection_cap < 1:
            raise ConfigurationError("rejection_cap must be at least 1")


@dataclass
class LeafRecord:
    node_id: int
    constraints: tuple[Constraint, ...]
    examples: list[Instance]
    reach: float
    fidelity: float
    label: str
    depth: int = 0


def node_priority(r: LeafRecord) -> float:
    """Expected fidelity gain from expanding: reach times infidelity."""
    return r.reach * (1.0 - r.fidelity)


# -- split search ------------------------------------------------------------------

def candidate_literals(samples: Sequence[Instance], schema: DatasetSchema) -> list[Literal]:
    """Equality literals for observed nominal tokens; ``>`` literals at class-boundary midpoints."""
    if not samples:
        return []
    cols = columns(schema, samples)
    labels = [s.target for s in samples]
    label_codes = {lab: i for i, lab in enumerate(dict.fromkeys(labels))}
    y = np.array([label_codes[lab] for lab in labels])
    out = []
    for attr, col in zip(schema.inputs, cols):
        if attr.is_nominal:
            observed = [tok for tok in attr.tokens if np.any(col == tok)]
            if len(observed) > 1:
                out.extend(Literal(attr.name, EQUALS, tok) for tok in observed)
            continue
        values, inverse = np.unique(col, return_inverse=True)
        if len(values) < 2:
            continue
        lo = np.full(len(values), np.iinfo(int).max)
        hi = np.full(len(values), -1)
        np.minimum.at(lo, inverse, y)
        np.maximum.at(hi, inverse, y)
        for i in range(len(values) - 1):
            mixed = lo[i] != hi[i] or lo[i + 1] != hi[i + 1]
            if mixed or lo[i] != lo[i + 1]:
                out.append(Literal(attr.name, GREATER, float((values[i] + values[i + 1]) / 2.0)))
    return out


def _entropy_rows(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(totals > 0, counts / np.maximum(totals, 1), 0.0)
        terms = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return terms.sum(axis=-1)


class _Scorer:
    """Information gain of m-of-n tests over a fixed literal truth matrix."""

    def __init__(self, samples: Sequence[Instance], schema: DatasetSchema, literals: Sequence[Literal]):
        cols = columns(schema, samples)
        self.truth = np.column_stack([
            lit.mask(cols[schema.input_index(lit.attribute)]) for lit in literals
        ]).astype(np.int8) if literals else np.zeros((len(samples), 0), dtype=np.int8)
        labels = [s.target for s in samples]
        codes = {lab: i for i, lab in enumerate(dict.fromkeys(labels))}
        self.y = np.array([codes[lab] for lab in labels])
        self.k = len(codes)
        self.n = len(samples)
        self.base = float(_entropy_rows(np.bincount(self.y, minlength=self.k).astype(float)))
        self.scored = 0

    def gain(self, m: int, idxs: Sequence[int]) -> float:
        self.scored += 1
        passed = self.truth[:, list(idxs)].sum(axis=1) >= m
        cp = np.bincount(self.y[passed], minlength=self.k).astype(float)
        cf = np.bincount(self.y[~passed], minlength=self.k).astype(float)
        np_, nf = cp.sum(), cf.sum()
        h = _entropy_rows(np.stack([cp, cf]))
        # a + b is order-independent, so complementary tests score identically
        return self.base - (np_ / self.n * h[0] + nf / self.n * h[1])


@dataclass
class SplitChoice:
    test: MofNTest
    gain: float
    candidates_scored: int


def choose_split(samples: Sequence[Instance], schema: DatasetSchema, p: TrepanParams) -> SplitChoice:
    labels = {s.target for s in samples}
    if len(labels) < 2:
        raise SplitFailure("samples carry a single label")
    literals = candidate_literals(samples, schema)
    if not literals:
        raise SplitFailure("no admissible literal")
    scorer = _Scorer(samples, schema, literals)

    best_gain, best_i = -1.0, 0
    for i in range(len(literals)):
        g = scorer.gain(1, (i,))
        if g > best_gain + _EPS:
            best_gain, best_i = g, i
    best = (best_gain, 1, (best_i,))

    if p.variant != SINGLE_TEST:
        beam = [best]
        seen = {(1, frozenset((best_i,)))}
        while True:
            cands = []
            for _, m, idxs in beam:
                for i in range(len(literals)):
                    if i in idxs:
                        continue
                    moves = [(m, idxs + (i,))]
                    if p.variant == MOFN:
                        moves.append((m + 1, idxs + (i,)))
                    for m2, idxs2 in moves:
                        key = (m2, frozenset(idxs2))
                        if key in seen:
                            continue
                        seen.add(key)
                        cands.append((scorer.gain(m2, idxs2), len(cands), m2, idxs2))
            if not cands:
                break
            cands.sort(key=lambda c: (-c[0], c[1]))
            beam = [(g, m2, idxs2) for g, _, m2, idxs2 in cands[:p.beam_width]]
            if beam[0][0] > best[0] + _EPS:
                best = beam[0]
            else:
                break

    gain, m, idxs = best
    test = MofNTest(m, tuple(literals[i] for i in idxs))
    return SplitChoice(test, float(gain), scorer.scored)


def search_split(samples: Sequence[Instance], schema: DatasetSchema, p: TrepanParams) -> MofNTest:
    """Best splitting test for the variant; raises :class:`SplitFailure` if none exists."""
    return choose_split(samples, schema, p).test


def split_gain(test: MofNTest, samples: Sequence[Instance], schema: DatasetSchema) -> float:
    scorer = _Scorer(samples, schema, test.literals)
    return float(scorer.gain(test.m, tuple(range(test.n))))


# -- extraction loop ---------------------------------------------------------------

@dataclass
class AuditEntry:
    node_id: int
    depth: int
    priority: float
    test: Optional[MofNTest]
    gain: float
    n_examples: int
    n_pass: int
    n_fail: int
    candidates_scored: int
    note: str = ""
    examples: list = field(default_factory=list, repr=False)


def audit_to_csv(entries: Sequence[AuditEntry]) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["node", "depth", "priority", "test", "gain", "examples", "pass", "fail",
                "candidates", "note"])
    for e in entries:
        w.writerow([e.node_id, e.depth, f"{e.priority:.6f}", str(e.test) if e.test else "",
                    f"{e.gain:.6f}", e.n_examples, e.n_pass, e.n_fail, e.candidates_scored, e.note])
    return out.getvalue()


def tree_schema(net: Network, schema: DatasetSchema) -> DatasetSchema:
    """The data schema with its target replaced by the network's output labels."""
    target = schema.target
    return schema.with_target(AttributeSpec(target.name, NOMINAL, net.labels, TARGET))


def extract_tree(net: Network, train: Dataset, p: TrepanParams = TrepanParams(),
                 audit: Optional[list] = None) -> DecisionTree:
    """Grow a tree best-first against the network oracle.

    Pass a list as ``audit`` to receive one :class:`AuditEntry` per expansion attempt.
    """
    if len(train) == 0:
        raise ExtractionError("cannot extract from an empty training set")
    if net.encoding is not None:
        net.encoding.check_schema(train.schema)
    schema = tree_schema(net, train.schema)
    class_labels = schema.class_labels
    oracle = Oracle.fit(net, train, p.seed, p.rejection_cap)
    oracle.schema = schema

    root_examples = ensure_min_sample(oracle.label(train.instances), p.min_sample, oracle, (), (0,))
    # reach is measured on one unconstrained draw, taken once and shared by every node
    reach_sample = oracle.label(draw_instances(oracle, (), p.min_sample, (0, 0)))
    reach_cols = columns(schema, reach_sample)
    n_reach = len(reach_sample)

    def record(node_id, constraints, examples, depth, fallback_label):
        labels = [e.target for e in examples]
        if labels:
            label = majority_label(labels, class_labels)
            fidelity = labels.count(label) / len(labels)
        else:
            label, fidelity = fallback_label, 1.0
        mask = np.ones(n_reach, dtype=bool)
        for c in constraints:
            mask &= c.mask(reach_cols, schema)
        reach = float(mask.mean()) if n_reach else 0.0
        return LeafRecord(node_id, tuple(constraints), list(examples), reach, fidelity, label, depth)

    next_id = 1
    root = record(0, (), root_examples, 0, class_labels[0])
    records = {0: root}
    splits: dict[int, tuple[MofNTest, int, int]] = {}
    heap: list = []

    def push(r: LeafRecord):
        if r.examples and r.fidelity < p.purity_stop:
            heapq.heappush(heap, (-node_priority(r), r.node_id))

    push(root)
    internal = 0
    while heap and internal < p.max_internal_nodes:
        neg_priority, node_id = heapq.heappop(heap)
        rec = records[node_id]
        entry = AuditEntry(node_id, rec.depth, -neg_priority, None, 0.0, len(rec.examples), 0, 0, 0)
        if audit is not None:
            audit.append(entry)
        rec.examples = ensure_min_sample(rec.examples, p.min_sample, oracle, rec.constraints, (node_id,))
        entry.n_examples = len(rec.examples)
        entry.examples = rec.examples
        try:
            choice = choose_split(rec.examples, schema, p)
        except SplitFailure as exc:
            entry.note = f"kept as leaf: {exc}"
            continue
        entry.test, entry.gain, entry.candidates_scored = choice.test, choice.gain, choice.candidates_scored
        if choice.gain <= _EPS:
            entry.note = "kept as leaf: no test has positive gain"
            continue
        cols = columns(schema, rec.examples)
        passed = mofn_mask(choice.test, cols, schema)
        entry.n_pass, entry.n_fail = int(passed.sum()), int((~passed).sum())
        child_ids = []
        for satisfied, branch in ((True, passed), (False, ~passed)):
            child_id = next_id
            next_id += 1
            constraints = rec.constraints + (Constraint(choice.test, satisfied),)
            examples = [e for e, b in zip(rec.examples, branch) if b]
            examples = ensure_min_sample(examples, p.min_sample, oracle, constraints, (child_id,))
            child = record(child_id, constraints, examples, rec.depth + 1, rec.label)
            records[child_id] = child
            child_ids.append(child_id)
            push(child)
        splits[node_id] = (choice.test, child_ids[0], child_ids[1])
        internal += 1

    def build(node_id):
        if node_id in splits:
            test, a, b = splits[node_id]
            return Internal(test, build(a), build(b))
        return Leaf(records[node_id].label)

    return DecisionTree(build(0), schema, Provenance("extracted", params_digest(p)))
