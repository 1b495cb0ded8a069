import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hornets.activations import ActivationKind
from hornets.datagen import Dataset, GateSpec, generate_gate_dataset
from hornets.layers import ConfigError, Route
from hornets.numeric import RngStream
from hornets.training import (
    AdamState,
    HorNetsConfig,
    TrainingError,
    adam_step,
    augment_pseudovariables,
    cross_entropy_loss,
    dumps_model,
    fit,
    init_model,
    load_model,
    m_init_bound,
    model_from_dict,
    model_to_dict,
    predict,
    remap_binary_signs,
    resample_combinations,
    sample_combinations,
    _unrank,
)

FAST = dict(epochs=30, early_stop_patience=30)


def test_remap_and_augment():
    x = np.array([[0, 1, 1]])
    r = remap_binary_signs(x)
    assert r.tolist() == [[-1, 1, 1]]
    a = augment_pseudovariables(r, 2, feature_count=3)
    assert a.tolist() == [[-1, 1, 1, 1, 1]]
    with pytest.raises(ConfigError, match="already augmented"):
        augment_pseudovariables(a, 2, feature_count=3)
    with pytest.raises(ValueError):
        remap_binary_signs([[0, 2]])


def test_unrank_enumerates_in_lex_order():
    import itertools

    assert [_unrank(i, 5, 3) for i in range(10)] == list(itertools.combinations(range(5), 3))


@given(st.integers(3, 30), st.integers(1, 6), st.integers(1, 80), st.integers(0, 1000))
def test_sample_combinations_distinct_sorted(n, r, count, seed):
    if r > n:
        with pytest.raises(ConfigError):
            sample_combinations(n, r, count, RngStream(seed))
        return
    c = sample_combinations(n, r, count, RngStream(seed))
    assert c.shape == (min(count, math.comb(n, r)), r)
    assert np.all(np.diff(c, axis=1) > 0)
    assert len({tuple(row) for row in c.tolist()}) == c.shape[0]
    assert c.min() >= 0 and c.max() < n


def test_sample_combinations_uniform():
    # C(6, 2) = 15 sets; each should appear close to 1/15 of the time
    counts = {}
    rng = RngStream(0)
    for _ in range(3000):
        row = tuple(sample_combinations(6, 2, 1, rng)[0])
        counts[row] = counts.get(row, 0) + 1
    assert len(counts) == 15
    assert max(counts.values()) < 2 * 3000 / 15 and min(counts.values()) > 0.5 * 3000 / 15


def test_sample_combinations_large_space_path():
    c = sample_combinations(200, 8, 50, RngStream(1), exclude=[tuple(range(8))])
    assert c.shape == (50, 8)
    assert tuple(range(8)) not in {tuple(r) for r in c.tolist()}


def test_cross_entropy_gradient_and_values():
    logits = np.array([[2.0, 0.0], [0.0, 0.0]])
    y = np.array([0, 1])
    loss, d = cross_entropy_loss(logits, y)
    expected = (math.log(1 + math.exp(-2)) + math.log(2)) / 2
    assert loss == pytest.approx(expected)
    assert np.allclose(d.sum(axis=1), 0)
    with pytest.raises(ValueError):
        cross_entropy_loss(logits, [0, 2])


def test_adam_first_step_moves_by_learning_rate():
    p = {"w": np.array([1.0, -1.0, 0.0])}
    adam_step(p, {"w": np.array([0.5, -2.0, 0.0])}, AdamState(), 0.1)
    assert np.allclose(p["w"], [0.9, -0.9, 0.0], atol=1e-6)


def test_adam_minimizes_quadratic():
    p = {"x": np.array([5.0])}
    st_ = AdamState()
    for _ in range(2000):
        adam_step(p, {"x": 2 * p["x"]}, st_, 0.05)
    assert abs(p["x"][0]) < 1e-2


def test_config_validation_and_round_trip():
    cfg = HorNetsConfig(activation="relu", route="categorical")
    assert cfg.activation == ActivationKind.relu() and cfg.route is Route.CATEGORICAL
    assert HorNetsConfig.from_dict(cfg.to_dict()) == cfg
    for bad in (dict(order=0), dict(num_rules=1), dict(learning_rate=0), dict(dropout_rate=1.0),
                dict(p_norm=0.5), dict(resample_fraction=1.5), dict(batch_size=0)):
        with pytest.raises(ConfigError):
            HorNetsConfig(**bad)


def test_m_init_bound():
    assert m_init_bound(1) == 0.5 and m_init_bound(4) == 0.5
    assert m_init_bound(16) == pytest.approx(0.25)


def test_init_model_shapes():
    m = init_model(8, 2, HorNetsConfig(order=3, num_rules=20), RngStream(0))
    assert m.cat.M.shape == (20, 3) and m.cat.comb.shape == (20, 3)
    assert m.lin.w.shape == (8, 2)
    assert m.augmented_dim == 11
    assert m.is_pseudovariable(8) and not m.is_pseudovariable(7)
    m.cat.validate(m.augmented_dim)


def test_resample_replaces_lowest_and_keeps_survivors():
    m = init_model(20, 2, HorNetsConfig(order=3, num_rules=10, resample_fraction=0.3), RngStream(0))
    comb0, M0 = m.cat.comb.copy(), m.cat.M.copy()
    scores = np.arange(10, dtype=float)[::-1]  # rows 7, 8, 9 lowest
    rows = resample_combinations(m, scores, RngStream(1))
    assert rows.tolist() == [7, 8, 9]
    assert np.array_equal(m.cat.comb[:7], comb0[:7]) and np.array_equal(m.cat.M[:7], M0[:7])
    m.cat.validate(m.augmented_dim)


def test_resample_skips_exhaustive_table():
    m = init_model(3, 2, HorNetsConfig(order=2, num_rules=100), RngStream(0))
    assert m.cat.num_rules == math.comb(5, 2)
    assert resample_combinations(m, np.zeros(10), RngStream(1), 0.5).size == 0


def test_fit_learns_and_gate():
    ds = generate_gate_dataset(GateSpec("and", 3, 128, seed=1))
    model, report = fit(ds, HorNetsConfig(seed=0, epochs=100))
    assert (predict(model, ds.features) == ds.labels).mean() == 1.0
    assert report.route_counts["categorical"] > 0 and report.route_counts["continuous"] == 0
    assert model.fitted_route is Route.CATEGORICAL
    assert report.losses[-1] < report.losses[0]


def test_fit_continuous_route():
    rng = np.random.default_rng(0)
    # nonnegative features: the polyClip gate keeps magnitude, not sign
    x = rng.uniform(0, 1, size=(120, 4))
    y = (x[:, 0] - x[:, 1] > 0).astype(int)
    model, report = fit(Dataset(x, y), HorNetsConfig(seed=1, epochs=60, learning_rate=0.05))
    assert model.fitted_route is Route.CONTINUOUS
    assert (predict(model, x) == y).mean() > 0.85


def test_fit_is_deterministic():
    ds = generate_gate_dataset(GateSpec("xor", 8, 64, seed=2))
    cfg = HorNetsConfig(seed=3, **FAST)
    a, ra = fit(ds, cfg)
    b, rb = fit(ds, cfg)
    assert dumps_model(a) == dumps_model(b)
    assert ra.losses == rb.losses


def test_fit_errors():
    ds = Dataset(np.zeros((4, 3)), [1, 1, 1, 1], class_count=2)
    with pytest.raises(ValueError, match="single class"):
        fit(ds, HorNetsConfig())
    x = np.random.default_rng(0).normal(size=(8, 3))
    with pytest.raises(TrainingError, match="non-finite"), np.errstate(all="ignore"):
        fit(Dataset(x, [0, 1] * 4), HorNetsConfig(learning_rate=1e308, epochs=5))


def test_early_stopping():
    ds = generate_gate_dataset(GateSpec("not", 3, 64, seed=0))
    _, report = fit(ds, HorNetsConfig(epochs=1000, early_stop_patience=2, learning_rate=0.1))
    assert report.stopped_early and report.epochs_run < 1000


def test_serialization_round_trip(tmp_path):
    ds = generate_gate_dataset(GateSpec("or", 4, 64, seed=5))
    model, _ = fit(ds, HorNetsConfig(**FAST))
    path = tmp_path / "m.json"
    model.save(path)
    loaded = load_model(path)
    assert dumps_model(loaded) == path.read_text()
    assert np.array_equal(predict(loaded, ds.features), predict(model, ds.features))
    d = model_to_dict(model)
    assert d["format"] == "hornets-model" and d["version"] == 1
    d["version"] = 99
    with pytest.raises(ValueError):
        model_from_dict(d)
