"""Typed tabular data: schemas, CSV ingestion, target binning and splits."""
from __future__ import annotations

import bisect
import csv
import io
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DataError, ParseError, SchemaError

NOMINAL = "nominal"
CONTINUOUS = "continuous"
INPUT = "input"
TARGET = "target"

# Names and tokens appear unquoted in every text format we write.
_TOKEN_RE = re.compile(r"^[^\s,;{}\[\]\"#|]+$")


def _check_token(text, what):
    if not isinstance(text, str) or not _TOKEN_RE.match(text):
        raise SchemaError(f"invalid {what} {text!r}: must be non-empty, without whitespace or ,;{{}}[]\"#|")


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    kind: str
    tokens: tuple[str, ...] = ()
    role: str = INPUT

    def __post_init__(self):
        _check_token(self.name, "attribute name")
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.kind not in (NOMINAL, CONTINUOUS):
            raise SchemaError(f"attribute {self.name}: unknown kind {self.kind!r}")
        if self.role not in (INPUT, TARGET):
            raise SchemaError(f"attribute {self.name}: unknown role {self.role!r}")
        if self.kind == NOMINAL:
            if not self.tokens:
                raise SchemaError(f"attribute {self.name}: nominal token list is empty")
            if len(set(self.tokens)) != len(self.tokens):
                raise SchemaError(f"attribute {self.name}: duplicate tokens")
            for tok in self.tokens:
                _check_token(tok, f"token of {self.name}")
        elif self.tokens:
            raise SchemaError(f"attribute {self.name}: continuous attributes take no tokens")

    @property
    def is_nominal(self):
        return self.kind == NOMINAL


@dataclass(frozen=True)
class DatasetSchema:
    attributes: tuple[AttributeSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("attribute names are not unique")
        n_targets = sum(a.role == TARGET for a in self.attributes)
        if n_targets != 1:
            raise SchemaError(f"schema needs exactly one target attribute, found {n_targets}")

    @property
    def inputs(self) -> tuple[AttributeSpec, ...]:
        return tuple(a for a in self.attributes if a.role == INPUT)

    @property
    def input_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.inputs)

    @property
    def target(self) -> AttributeSpec:
        return next(a for a in self.attributes if a.role == TARGET)

    @property
    def is_classification(self):
        return self.target.is_nominal

    @property
    def class_labels(self) -> tuple[str, ...] | None:
        return self.target.tokens if self.is_classification else None

    def input_index(self, name) -> int:
        try:
            return self.input_names.index(name)
        except ValueError:
            raise SchemaError(f"unknown input attribute {name!r}") from None

    def attribute(self, name) -> AttributeSpec:
        return self.inputs[self.input_index(name)]

    def with_target(self, target: AttributeSpec) -> "DatasetSchema":
        attrs = tuple(target if a.role == TARGET else a for a in self.attributes)
        return DatasetSchema(attrs)


@dataclass(frozen=True)
class Instance:
    values: tuple
    target: object = None

    def with_target(self, target) -> "Instance":
        return Instance(self.values, target)


@dataclass(frozen=True)
class Dataset:
    schema: DatasetSchema
    instances: tuple[Instance, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    @property
    def targets(self) -> list:
        return [inst.target for inst in self.instances]

    def subset(self, indices) -> "Dataset":
        return Dataset(self.schema, tuple(self.instances[i] for i in indices))

    def replace(self, instances) -> "Dataset":
        return Dataset(self.schema, tuple(instances))


@dataclass(frozen=True)
class BinningSpec:
    edges: tuple[float, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        edges = tuple(float(e) for e in self.edges)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "labels", tuple(self.labels))
        if not all(math.isfinite(e) for e in edges):
            raise ConfigurationError("bin edges must be finite")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ConfigurationError("bin edges must be strictly increasing")
        if len(self.labels) != len(edges) + 1:
            raise ConfigurationError(
                f"{len(edges)} bin edges need {len(edges) + 1} labels, got {len(self.labels)}")
        if len(set(self.labels)) != len(self.labels):
            raise ConfigurationError("bin labels must be distinct")
        for lab in self.labels:
            _check_token(lab, "bin label")

    def index(self, value: float) -> int:
        """Bin index of ``value``; bins are (e[i-1], e[i]] and saturate at both ends."""
        if not math.isfinite(value):
            raise DataError(f"cannot bin non-finite value {value!r}")
        return bisect.bisect_left(self.edges, value)

    def label(self, value: float) -> str:
        return self.labels[self.index(value)]

    @classmethod
    def parse(cls, text: str) -> "BinningSpec":
        """Parse ``"10,20,30:A,B,C,D"``."""
        try:
            edges_text, labels_text = text.split(":")
            edges = [float(e) for e in edges_text.split(",") if e.strip()]
        except ValueError:
            raise ConfigurationError(f"bad binning spec {text!r}; expected 'e1,e2,...:L1,L2,...'") from None
        return cls(tuple(edges), tuple(s.strip() for s in labels_text.split(",")))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    cv_fraction: float
    test_fraction: float
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_fraction, self.cv_fraction, self.test_fraction)
        if any(not (0.0 <= f <= 1.0) for f in fracs):
            raise ConfigurationError(f"split fractions must lie in [0, 1]: {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigurationError(f"split fractions must sum to 1: {fracs}")
        if self.seed < 0:
            raise ConfigurationError("seed must be non-negative")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "SplitSpec":
        try:
            parts = [float(p) for p in text.split(",")]
        except ValueError:
            raise ConfigurationError(f"bad split {text!r}") from None
        if len(parts) != 3:
            raise ConfigurationError(f"split needs three fractions, got {text!r}")
        return cls(*parts, seed=seed)


def _parse_value(attr: AttributeSpec, text: str, row: int):
    if attr.is_nominal:
        if text not in attr.tokens:
            raise SchemaError(
                f"row {row}, column {attr.name}: {text!r} is not one of {list(attr.tokens)}")
        return text
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"row {row}, column {attr.name}: {text!r} is not a number") from None
    if not math.isfinite(value):
        raise ParseError(f"row {row}, column {attr.name}: non-finite value {text!r}")
    return value


def parse_dataset(csv_text: str, schema: DatasetSchema) -> Dataset:
    """Parse CSV text whose header lists the schema attributes in order.

    Row numbers in error messages count the header as row 1.
    """
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("CSV text is empty (no header row)") from None
    expected = [a.name for a in schema.attributes]
    if header != expected:
        raise ParseError(f"header {header} does not match schema attributes {expected}")
    instances = []
    for row_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(expected):
            raise ParseError(f"row {row_no}: expected {len(expected)} fields, got {len(row)}")
        values = []
        target = None
        for attr, cell in zip(schema.attributes, row):
            v = _parse_value(attr, cell.strip(), row_no)
            if attr.role == TARGET:
                target = v
            else:
                values.append(v)
        instances.append(Instance(tuple(values), target))
    return Dataset(schema, tuple(instances))


def _format_value(v):
    return repr(float(v)) if isinstance(v, (float, int, np.floating)) and not isinstance(v, bool) else str(v)


def to_csv(dataset: Dataset) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([a.name for a in dataset.schema.attributes])
    for inst in dataset.instances:
        it = iter(inst.values)
        row = [_format_value(inst.target if a.role == TARGET else next(it))
               for a in dataset.schema.attributes]
        writer.writerow(row)
    return out.getvalue()


def validate_instance(inst: Instance, schema: DatasetSchema) -> None:
    inputs = schema.inputs
    if len(inst.values) != len(inputs):
        raise SchemaError(f"instance has {len(inst.values)} values, schema has {len(inputs)} inputs")
    for attr, v in zip(inputs, inst.values):
        if attr.is_nominal:
            if v not in attr.tokens:
                raise SchemaError(f"attribute {attr.name}: {v!r} is not a declared token")
        elif not (isinstance(v, (int, float, np.floating)) and math.isfinite(v)):
            raise SchemaError(f"attribute {attr.name}: {v!r} is not a finite real")


def bin_target(dataset: Dataset, spec: BinningSpec) -> Dataset:
    """Replace a continuous target by the label of its bin."""
    target = dataset.schema.target
    if target.is_nominal:
        raise ConfigurationError(f"target {target.name} is already nominal")
    schema = dataset.schema.with_target(AttributeSpec(target.name, NOMINAL, spec.labels, TARGET))
    return Dataset(schema, tuple(inst.with_target(spec.label(inst.target)) for inst in dataset))


def _rounded(n, fraction):
    return int(math.floor(n * fraction + 0.5))


def split_dataset(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Seeded train/cv/test partition; rounding remainders go to train."""
    n = len(dataset)
    if n == 0:
        raise DataError("cannot split an empty dataset")
    n_cv = _rounded(n, spec.cv_fraction)
    n_test = _rounded(n, spec.test_fraction)
    if n_cv + n_test > n:
        n_test = n - n_cv
    perm = np.random.default_rng(spec.seed).permutation(n)
    cv_idx = sorted(perm[:n_cv].tolist())
    test_idx = sorted(perm[n_cv:n_cv + n_test].tolist())
    train_idx = sorted(perm[n_cv + n_test:].tolist())
    return dataset.subset(train_idx), dataset.subset(cv_idx), dataset.subset(test_idx)


def columns(schema: DatasetSchema, instances: Sequence[Instance]) -> list[np.ndarray]:
    """Column arrays, one per input attribute: object arrays for nominal, float for continuous."""
    cols = []
    for j, attr in enumerate(schema.inputs):
        raw = [inst.values[j] for inst in instances]
        if attr.is_nominal:
            arr = np.empty(len(raw), dtype=object)
            arr[:] = raw
        else:
            arr = np.asarray(raw, dtype=float)
        cols.append(arr)
    return cols


# -- schema files -----------------------------------------------------------

def parse_schema(text: str) -> DatasetSchema:
    """Parse the line-oriented schema format (see docs/formats.md)."""
    attrs = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ParseError(f"schema line {line_no}: expected '<role> <name> <kind> [tokens...]'")
        role, name, kind, tokens = parts[0], parts[1], parts[2], parts[3:]
        try:
            attrs.append(AttributeSpec(name, kind, tuple(tokens), role))
        except SchemaError as exc:
            raise ParseError(f"schema line {line_no}: {exc}") from None
    return DatasetSchema(tuple(attrs))


def dump_schema(schema: DatasetSchema) -> str:
    lines = []
    for a in schema.attributes:
        lines.append(" ".join([a.role, a.name, a.kind, *a.tokens]))
    return "\n".join(lines) + "\n"


def read_dataset(csv_path, schema_path) -> Dataset:
    with open(schema_path, encoding="utf-8") as fh:
        schema = parse_schema(fh.read())
    with open(csv_path, encoding="utf-8") as fh:
        return parse_dataset(fh.read(), schema)


def bundled_text(name: str) -> str:
    return resources.files("xtrepan.data").joinpath(name).read_text(encoding="utf-8")


def load_play_tennis() -> Dataset:
    """The 14-day play-tennis table (Quinlan's classic)."""
    schema = parse_schema(bundled_text("play_tennis.schema"))
    return parse_dataset(bundled_text("play_tennis.csv"), schema)
