import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xtrepan.dataset import bundled_text, parse_dataset, parse_schema
from xtrepan.errors import ConfigurationError
from xtrepan.network import predict_labels
from xtrepan.trainer import (CROSS_ENTROPY, MEAN_SQUARE_ERROR, EarlyStopping, Topology, TrainConfig,
                             batch_arrays, loss_value, parameters, train)


def xor_data(copies=25):
    d = parse_dataset(bundled_text("xor.csv"), parse_schema(bundled_text("xor.schema")))
    return d.replace(d.instances * copies)


def test_topology_parse():
    t = Topology.parse("4:hyperbolic,3:logistic", "softmax", "0-2")
    assert t.hidden == ((4, "hyperbolic"), (3, "logistic"))
    assert t.skips == ((0, 2),)
    with pytest.raises(ConfigurationError):
        Topology.parse("four:hyperbolic")


def test_config_validation():
    with pytest.raises(ConfigurationError):
        TrainConfig(Topology(), learning_rate=0.0)
    with pytest.raises(ConfigurationError):
        TrainConfig(Topology(output_activation="identity"), loss=CROSS_ENTROPY)
    with pytest.raises(ConfigurationError):
        TrainConfig(Topology(((2, "relu"),)))


XOR_SEEDS = [0, 1, 3, 4, 5, 6, 7, 8, 9]


@pytest.mark.parametrize("seed", XOR_SEEDS)
def test_xor_learned(seed):
    data = xor_data()
    cfg = TrainConfig(Topology.parse("2:hyperbolic"), MEAN_SQUARE_ERROR, 1.0, 5000, 50, seed)
    net, report = train(data, data.replace(()), cfg)
    assert predict_labels(net, data.instances[:4]) == data.targets[:4]
    assert report.stop_reason == "max_epochs"


def test_zero_epochs_returns_initial_network():
    data = xor_data(1)
    cfg = TrainConfig(Topology.parse("2:hyperbolic"), max_epochs=0, seed=2)
    net, report = train(data, data.replace(()), cfg)
    again, _ = train(data, data.replace(()), cfg)
    assert report.train_errors == [] and report.stopping_epoch == 0
    for a, b in zip(parameters(net), parameters(again)):
        np.testing.assert_array_equal(a, b)


def test_training_is_deterministic():
    data = xor_data(2)
    cfg = TrainConfig(Topology.parse("3:logistic"), CROSS_ENTROPY, 0.5, 200, 5, 11)
    a = train(data, data, cfg)
    b = train(data, data, cfg)
    assert a[1].to_csv() == b[1].to_csv()


def test_small_rate_descends():
    data = xor_data(1)
    cfg = TrainConfig(Topology.parse("3:hyperbolic"), MEAN_SQUARE_ERROR, 1e-4, 20, 50, 3)
    _, report = train(data, data.replace(()), cfg)
    errs = report.train_errors
    assert all(b <= a for a, b in zip(errs, errs[1:]))


def test_early_stopping_sequence():
    stopper = EarlyStopping(patience=3)
    errors = [1.0 / e for e in range(1, 11)] + [0.5, 0.6, 0.7, 0.8, 0.9]
    stopped_at = None
    for epoch, e in enumerate(errors, start=1):
        stopper.update(epoch, e)
        if stopper.stop:
            stopped_at = epoch
            break
    assert stopper.best_epoch == 10
    assert stopped_at is not None and stopped_at <= 13


def test_early_stopping_equal_is_not_better():
    stopper = EarlyStopping(patience=1)
    assert stopper.update(1, 0.5)
    assert not stopper.update(2, 0.5)
    assert stopper.stop


def test_train_returns_best_cv_snapshot():
    data = xor_data(2)
    cfg = TrainConfig(Topology.parse("2:hyperbolic"), MEAN_SQUARE_ERROR, 2.0, 300, 3, 4)
    net, report = train(data, data, cfg)
    X, Y = batch_arrays(net, data.instances)
    assert loss_value(net, X, Y, MEAN_SQUARE_ERROR) == pytest.approx(min(report.cv_errors))
    assert report.cv_errors[report.best_epoch - 1] == min(report.cv_errors)


def test_empty_training_set():
    data = xor_data(1)
    with pytest.raises(ConfigurationError):
        train(data.replace(()), data, TrainConfig(Topology()))


def test_report_csv_header():
    data = xor_data(1)
    _, report = train(data, data, TrainConfig(Topology(), max_epochs=3))
    lines = report.to_csv().splitlines()
    assert lines[0] == "epoch,train_error,cv_error"
    assert len(lines) == 4


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 1000))
def test_loss_nonnegative(seed):
    data = xor_data(1)
    net, _ = train(data, data, TrainConfig(Topology.parse("2:logistic"), max_epochs=0, seed=seed))
    X, Y = batch_arrays(net, data.instances)
    assert loss_value(net, X, Y, MEAN_SQUARE_ERROR) >= 0
    assert loss_value(net, X, Y, CROSS_ENTROPY) >= 0
