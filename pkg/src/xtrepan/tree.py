"""Literals, m-of-n tests and binary decision trees over a dataset schema."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .dataset import DatasetSchema, Instance, dump_schema, parse_schema
from .errors import ParseError, SchemaError, StructuralError

EQUALS = "=="
GREATER = ">"
LESS_EQUAL = "<="
RELATIONS = (EQUALS, GREATER, LESS_EQUAL)
FORMAT_HEADER = "xtrepan-tree 1"


@dataclass(frozen=True)
class Literal:
    attribute: str
    relation: str
    value: Union[str, float]

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise StructuralError(f"unknown relation {self.relation!r}")
        if self.relation != EQUALS:
            object.__setattr__(self, "value", float(self.value))

    def holds(self, value) -> bool:
        if self.relation == EQUALS:
            return value == self.value
        if self.relation == GREATER:
            return value > self.value
        return value <= self.value

    def mask(self, column: np.ndarray) -> np.ndarray:
        if self.relation == EQUALS:
            return column == self.value
        if self.relation == GREATER:
            return column > self.value
        return column <= self.value

    def check(self, schema: DatasetSchema):
        attr = schema.attribute(self.attribute)
        if attr.is_nominal:
            if self.relation != EQUALS:
                raise SchemaError(f"literal {self}: nominal attribute needs '=='")
            if self.value not in attr.tokens:
                raise SchemaError(f"literal {self}: {self.value!r} is not a token of {attr.name}")
        elif self.relation == EQUALS:
            raise SchemaError(f"literal {self}: continuous attribute needs a threshold relation")

    def __str__(self):
        v = self.value if self.relation == EQUALS else repr(self.value)
        return f"{self.attribute} {self.relation} {v}"


@dataclass(frozen=True)
class MofNTest:
    m: int
    literals: tuple[Literal, ...]

    def __post_init__(self):
        object.__setattr__(self, "literals", tuple(self.literals))
        if not 1 <= self.m <= len(self.literals):
            raise StructuralError(f"m-of-n test needs 1 <= m <= n, got m={self.m}, n={len(self.literals)}")
        if len(set(self.literals)) != len(self.literals):
            raise StructuralError("m-of-n test has duplicate literals")

    @property
    def n(self):
        return len(self.literals)

    def key(self):
        """Identity up to literal order."""
        return self.m, frozenset(self.literals)

    def __str__(self):
        return f"{self.m}-of-{{{', '.join(str(l) for l in self.literals)}}}"


def evaluate_test(test: MofNTest, inst: Instance, schema: DatasetSchema) -> bool:
    """True iff at least ``test.m`` literals hold on ``inst``."""
    hits = 0
    for lit in test.literals:
        j = _index(schema, lit.attribute)
        hits += lit.holds(inst.values[j])
        if hits >= test.m:
            return True
    return False


def _index(schema, name):
    try:
        return schema.input_names.index(name)
    except ValueError:
        raise StructuralError(f"literal references unknown attribute {name!r}") from None


def mofn_mask(test: MofNTest, cols: Sequence[np.ndarray], schema: DatasetSchema) -> np.ndarray:
    """Vectorized :func:`evaluate_test` over column arrays (see ``dataset.columns``)."""
    n = len(cols[0]) if cols else 0
    hits = np.zeros(n, dtype=int)
    for lit in test.literals:
        hits += lit.mask(cols[_index(schema, lit.attribute)])
    return hits >= test.m


@dataclass(frozen=True)
class Leaf:
    label: str


@dataclass(frozen=True)
class Internal:
    """Binary test node. ``arity`` > 2 marks the head of a compiled multiway split;
    ``arity`` == 0 marks a continuation node of such a split."""
    test: MofNTest
    passed: "Node"
    failed: "Node"
    arity: int = 2


Node = Union[Leaf, Internal]


@dataclass(frozen=True)
class Provenance:
    kind: str  # "extracted" | "induced"
    digest: str

    def __post_init__(self):
        if self.kind not in ("extracted", "induced"):
            raise StructuralError(f"unknown provenance {self.kind!r}")


def params_digest(params) -> str:
    return hashlib.sha256(repr(params).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class DecisionTree:
    root: Node
    schema: DatasetSchema
    provenance: Provenance

    def __post_init__(self):
        labels = self.schema.class_labels
        if labels is None:
            raise StructuralError("tree schema needs a nominal target")
        for node in walk(self.root):
            if isinstance(node, Leaf):
                if node.label not in labels:
                    raise StructuralError(f"leaf label {node.label!r} not in {list(labels)}")
            elif isinstance(node, Internal):
                for lit in node.test.literals:
                    try:
                        lit.check(self.schema)
                    except SchemaError as exc:
                        raise StructuralError(str(exc)) from None
            else:
                raise StructuralError(f"malformed node {node!r}")


def walk(node: Node):
    """Pre-order traversal, pass branch before fail branch."""
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        if isinstance(cur, Internal):
            stack.append(cur.failed)
            stack.append(cur.passed)


def classify(tree: DecisionTree, inst: Instance) -> str:
    node = tree.root
    while isinstance(node, Internal):
        node = node.passed if evaluate_test(node.test, inst, tree.schema) else node.failed
    if not isinstance(node, Leaf):
        raise StructuralError(f"malformed node {node!r}")
    return node.label


def classify_batch(tree: DecisionTree, cols: Sequence[np.ndarray]) -> list[str]:
    n = len(cols[0]) if cols else 0
    out = [None] * n

    def route(node, idx):
        if len(idx) == 0:
            return
        if isinstance(node, Leaf):
            for i in idx:
                out[i] = node.label
            return
        sub = [c[idx] for c in cols]
        m = mofn_mask(node.test, sub, tree.schema)
        route(node.passed, idx[m])
        route(node.failed, idx[~m])

    route(tree.root, np.arange(n))
    return out


@dataclass(frozen=True)
class Complexity:
    internal_nodes: int
    leaves: int
    total_literals: int


def complexity(tree_or_node) -> Complexity:
    node = tree_or_node.root if isinstance(tree_or_node, DecisionTree) else tree_or_node
    internal = leaves = literals = 0
    for cur in walk(node):
        if isinstance(cur, Leaf):
            leaves += 1
        else:
            internal += 1
            literals += cur.test.n
    return Complexity(internal, leaves, literals)


def multiway_splits(tree: DecisionTree) -> int:
    """Number of splits in the original (pre-compilation) tree."""
    return sum(1 for n in walk(tree.root) if isinstance(n, Internal) and n.arity > 0)


# -- text formats ---------------------------------------------------------------

def _dot_escape(text):
    return text.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(tree: DecisionTree) -> str:
    lines = ["digraph tree {"]
    counter = 0

    def emit(node):
        nonlocal counter
        my_id = f"n{counter}"
        counter += 1
        if isinstance(node, Leaf):
            lines.append(f'  {my_id} [label="{_dot_escape(node.label)}", shape=ellipse];')
            return my_id
        lines.append(f'  {my_id} [label="{_dot_escape(str(node.test))}", shape=box];')
        p = emit(node.passed)
        lines.append(f'  {my_id} -> {p} [label="true"];')
        f = emit(node.failed)
        lines.append(f'  {my_id} -> {f} [label="false"];')
        return my_id

    emit(tree.root)
    lines.append("}")
    return "\n".join(lines) + "\n"


def _literal_text(lit: Literal) -> str:
    return str(lit)


def serialize(tree: DecisionTree) -> str:
    lines = [FORMAT_HEADER, f"provenance {tree.provenance.kind} {tree.provenance.digest}", "schema"]
    lines.extend("  " + l for l in dump_schema(tree.schema).splitlines())
    lines.append("nodes")

    def emit(node, depth):
        pad = "  " * depth
        if isinstance(node, Leaf):
            lines.append(f"{pad}leaf {node.label}")
            return
        lits = " ; ".join(_literal_text(l) for l in node.test.literals)
        lines.append(f"{pad}test {node.test.m} {node.arity} | {lits}")
        emit(node.passed, depth + 1)
        emit(node.failed, depth + 1)

    emit(tree.root, 0)
    lines.append("end")
    return "\n".join(lines) + "\n"


def _parse_literal(text: str, line_no: int) -> Literal:
    parts = text.split()
    if len(parts) != 3 or parts[1] not in RELATIONS:
        raise ParseError(f"line {line_no}: bad literal {text.strip()!r}")
    attr, rel, val = parts
    if rel != EQUALS:
        try:
            val = float(val)
        except ValueError:
            raise ParseError(f"line {line_no}: bad threshold {val!r}") from None
        if not math.isfinite(val):
            raise ParseError(f"line {line_no}: non-finite threshold")
    return Literal(attr, rel, val)


def deserialize(text: str) -> DecisionTree:
    raw = text.splitlines()
    rows = [(i, line.strip()) for i, line in enumerate(raw, start=1) if line.strip()]
    pos = 0

    def take(expected=None):
        nonlocal pos
        if pos >= len(rows):
            raise ParseError(f"unexpected end of tree text (wanted {expected or 'a node'})")
        line_no, line = rows[pos]
        pos += 1
        if expected is not None and not line.startswith(expected):
            raise ParseError(f"line {line_no}: expected '{expected}', found {line!r}")
        return line_no, line

    line_no, line = take(FORMAT_HEADER)
    if line != FORMAT_HEADER:
        raise ParseError(f"line {line_no}: bad header {line!r}")
    line_no, line = take("provenance")
    parts = line.split()
    if len(parts) != 3:
        raise ParseError(f"line {line_no}: expected 'provenance <kind> <digest>'")
    try:
        provenance = Provenance(parts[1], parts[2])
    except StructuralError as exc:
        raise ParseError(f"line {line_no}: {exc}") from None
    take("schema")
    schema_lines = []
    while pos < len(rows) and rows[pos][1] != "nodes":
        schema_lines.append(rows[pos][1])
        pos += 1
    try:
        schema = parse_schema("\n".join(schema_lines))
    except (ParseError, SchemaError) as exc:
        raise ParseError(f"embedded schema: {exc}") from None
    take("nodes")

    def node():
        line_no, line = take()
        if line.startswith("leaf "):
            return Leaf(line[5:].strip())
        if not line.startswith("test "):
            raise ParseError(f"line {line_no}: expected 'leaf' or 'test', found {line!r}")
        head, bar, body = line[5:].partition("|")
        try:
            m, arity = (int(x) for x in head.split())
        except ValueError:
            raise ParseError(f"line {line_no}: expected 'test <m> <arity> | literals'") from None
        if not bar:
            raise ParseError(f"line {line_no}: missing '|' before literals")
        lits = tuple(_parse_literal(t, line_no) for t in body.split(";"))
        try:
            test = MofNTest(m, lits)
        except StructuralError as exc:
            raise ParseError(f"line {line_no}: {exc}") from None
        passed = node()
        failed = node()
        return Internal(test, passed, failed, arity)

    root = node()
    take("end")
    if pos != len(rows):
        raise ParseError(f"line {rows[pos][0]}: trailing content after 'end'")
    return DecisionTree(root, schema, provenance)
