import math

import pytest
from hypothesis import given, settings, strategies as st

from xtrepan.c45 import (C45Params, best_threshold, entropy, gain_ratio, induce_c45, info_gain,
                         majority_label, split_information)
from xtrepan.dataset import Dataset, Instance, parse_schema
from xtrepan.errors import DomainError, InadmissibleAttribute
from xtrepan.metrics import accuracy, confusion_matrix, tree_predictions
from xtrepan.tree import Internal, Leaf, complexity, multiway_splits, serialize, walk

# Reference values computed by hand from the class counts of each branch.
PLAY_TENNIS_GAINS = {"Outlook": 0.246750, "Humidity": 0.151836, "Wind": 0.048127,
                     "Temperature": 0.029223}


def test_entropy_reference():
    assert entropy([9, 5]) == pytest.approx(0.940286, abs=1e-6)
    assert entropy([7, 7]) == pytest.approx(1.0)
    assert entropy([4, 0]) == 0.0


def test_entropy_domain():
    with pytest.raises(DomainError):
        entropy([0, 0])
    with pytest.raises(DomainError):
        entropy([-1, 2])


@given(st.lists(st.integers(0, 100), min_size=1, max_size=8).filter(lambda c: sum(c) > 0))
def test_entropy_bounds(counts):
    h = entropy(counts)
    assert -1e-12 <= h <= math.log2(len(counts)) + 1e-9


@pytest.mark.parametrize("attr,gain", PLAY_TENNIS_GAINS.items())
def test_play_tennis_gains(play_tennis, attr, gain):
    assert info_gain(play_tennis, attr) == pytest.approx(gain, abs=1e-5)


def test_play_tennis_ratio(play_tennis):
    assert split_information(play_tennis, "Outlook") == pytest.approx(1.577406, abs=1e-6)
    assert gain_ratio(play_tennis, "Outlook") == pytest.approx(0.156428, abs=1e-5)


def test_play_tennis_tree(play_tennis):
    tree = induce_c45(play_tennis, C45Params(use_gain_ratio=False))
    root = tree.root
    assert root.test.literals[0].attribute == "Outlook"
    assert root.arity == 3
    assert multiway_splits(tree) == 3
    cm = confusion_matrix(play_tennis.targets, tree_predictions(tree, play_tennis), ("Yes", "No"))
    assert accuracy(cm) == 100.0
    attrs = {n.test.literals[0].attribute for n in walk(root) if isinstance(n, Internal)}
    assert attrs == {"Outlook", "Humidity", "Wind"}


def test_gain_ratio_root_is_outlook(play_tennis):
    assert induce_c45(play_tennis).root.test.literals[0].attribute == "Outlook"


CONT = parse_schema("input x continuous\ninput z continuous\ntarget y nominal a b\n")


def _cont(rows):
    return Dataset(CONT, tuple(Instance((x, z), y) for x, z, y in rows))


def test_best_threshold_midpoint():
    d = _cont([(1.0, 0, "a"), (2.0, 0, "a"), (4.0, 0, "b"), (6.0, 0, "b")])
    t, g = best_threshold(d, "x")
    assert t == 3.0 and g == pytest.approx(1.0)


def test_best_threshold_tie_takes_smallest():
    d = _cont([(1.0, 0, "a"), (2.0, 0, "b"), (3.0, 0, "a"), (4.0, 0, "b")])
    t, _ = best_threshold(d, "x")
    assert t == 1.5


def test_constant_attribute_inadmissible():
    d = _cont([(1.0, 0, "a"), (1.0, 0, "b")])
    with pytest.raises(InadmissibleAttribute):
        best_threshold(d, "x")
    assert info_gain(d, "x") == 0.0


def test_continuous_split_tree():
    d = _cont([(x, 0.0, "a" if x > 2.5 else "b") for x in range(6)])
    tree = induce_c45(d)
    lit = tree.root.test.literals[0]
    assert (lit.attribute, lit.relation, lit.value) == ("x", ">", 2.5)
    assert tree.root.passed == Leaf("a") and tree.root.failed == Leaf("b")


def test_min_instances_and_depth(play_tennis):
    assert complexity(induce_c45(play_tennis, C45Params(min_instances_per_leaf=20))).internal_nodes == 0
    assert isinstance(induce_c45(play_tennis, C45Params(max_depth=0)).root, Leaf)


def test_majority_tie_lowest_index():
    assert majority_label(["b", "a"], ("a", "b")) == "a"
    assert majority_label(["b", "b", "a"], ("a", "b")) == "b"


NOM = parse_schema("input u nominal 0 1 2\ninput v nominal 0 1\ninput w nominal 0 1 2\n"
                   "target y nominal a b\n")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("012"), st.sampled_from("01"), st.sampled_from("012"),
                          st.sampled_from("ab")), min_size=2, max_size=25))
def test_root_is_brute_force_argmax(rows):
    d = Dataset(NOM, tuple(Instance(r[:3], r[3]) for r in rows))
    for attr in ("u", "v", "w"):
        assert info_gain(d, attr) >= 0.0
    gains = {a: info_gain(d, a) for a in ("u", "v", "w")
             if len({i.values[NOM.input_index(a)] for i in d}) > 1}
    tree = induce_c45(d, C45Params(min_instances_per_leaf=1, use_gain_ratio=False))
    if not gains or max(gains.values()) <= 1e-12 or len(set(d.targets)) == 1:
        assert isinstance(tree.root, Leaf)
        return
    best = max(gains.values())
    root_attr = tree.root.test.literals[0].attribute
    assert gains[root_attr] == pytest.approx(best, abs=1e-9)
    # first attribute in schema order wins ties
    assert root_attr == next(a for a in ("u", "v", "w") if a in gains and gains[a] >= best - 1e-12)


def test_overcast_branch_is_pure_yes(play_tennis):
    root = induce_c45(play_tennis).root
    overcast = root.failed
    assert overcast.test.literals[0].value == "Overcast"
    assert overcast.passed == Leaf("Yes")


@pytest.mark.parametrize("k", [2, 3, 4, 7])
def test_entropy_maximal_on_uniform(k):
    assert entropy([5] * k) == pytest.approx(math.log2(k))


def test_induction_repeatable(play_tennis):
    assert serialize(induce_c45(play_tennis)) == serialize(induce_c45(play_tennis))
