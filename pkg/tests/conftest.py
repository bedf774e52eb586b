import itertools
from pathlib import Path

import numpy as np
import pytest

from xtrepan.dataset import CONTINUOUS, NOMINAL, Dataset, Instance, load_play_tennis, parse_schema
from xtrepan.network import AttributeEncoding, InputEncoding, Layer, Network

FIXTURES = Path(__file__).parent / "fixtures"

# filled by test_acceptance; echoed after the run so the lines survive output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

BOOL3_SCHEMA = parse_schema(
    "input x1 nominal T F\ninput x2 nominal T F\ninput x3 nominal T F\ntarget y nominal neg pos\n")


def two_of_three(values):
    return "pos" if list(values).count("T") >= 2 else "neg"


def bool3_dataset():
    rows = itertools.product("TF", repeat=3)
    return Dataset(BOOL3_SCHEMA, tuple(Instance(r, two_of_three(r)) for r in rows))


def two_of_three_network():
    """Logistic unit over the one-hot inputs: fires iff at least two inputs are T."""
    enc = InputEncoding.fit(bool3_dataset())
    w = np.array([[10.0, 0.0, 10.0, 0.0, 10.0, 0.0]])
    return Network(6, (Layer(w, [-15.0], "logistic"),), (), "classification", ("neg", "pos"), enc)


def constant_network(schema, label_index=0, labels=("neg", "pos")):
    """Network that ignores its inputs and always predicts ``labels[label_index]``."""
    encs = []
    for a in schema.inputs:
        if a.is_nominal:
            encs.append(AttributeEncoding(a.name, NOMINAL, a.tokens))
        else:
            encs.append(AttributeEncoding(a.name, CONTINUOUS, (), 0.0, 1.0))
    enc = InputEncoding(tuple(encs))
    w = np.zeros((len(labels), enc.dim))
    b = np.zeros(len(labels))
    b[label_index] = 1.0
    return Network(enc.dim, (Layer(w, b, "identity"),), (), "classification", tuple(labels), enc)


@pytest.fixture
def play_tennis():
    return load_play_tennis()


@pytest.fixture
def bool3():
    return bool3_dataset()


@pytest.fixture
def net_2of3():
    return two_of_three_network()
