import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hornets.benchmark import (
    FULL_GRID,
    CsvFormatError,
    GridSpec,
    StratificationError,
    fit_logistic_baseline,
    grid_search,
    holdout_scores,
    load_csv,
    log_comb_exact,
    macro_f1,
    predict_logistic,
    run_cv,
    save_csv,
    stirling_combination_estimate,
    stirling_log_terms,
    stratified_folds,
    stratified_holdout,
    synthetic_suite,
)
from hornets.datagen import Dataset, GateSpec, generate_gate_dataset
from hornets.numeric import RngStream
from hornets.training import HorNetsConfig
from oracles import confusion_f1, log_comb

QUICK = HorNetsConfig(epochs=15, early_stop_patience=15, num_rules=8, order=2)


# --- macro-F1 ------------------------------------------------------------------

def test_macro_f1_examples():
    assert macro_f1([0, 1, 1, 0], [0, 1, 1, 0], 2) == 1.0
    assert macro_f1([0, 0, 1, 1], [0, 1, 0, 1], 2) == pytest.approx(0.5)
    assert macro_f1([0, 0, 1, 1], [0, 0, 0, 0], 2) == pytest.approx(1 / 3)


def test_macro_f1_excludes_absent_class():
    assert macro_f1([0, 1], [0, 1], 3) == 1.0


def test_macro_f1_errors():
    with pytest.raises(ValueError):
        macro_f1([0, 1], [0], 2)
    with pytest.raises(ValueError):
        macro_f1([0, 3], [0, 1], 2)


labels = st.lists(st.integers(0, 3), min_size=1, max_size=40)


@given(st.data())
def test_macro_f1_matches_confusion_oracle(data):
    t = data.draw(labels)
    p = data.draw(st.lists(st.integers(0, 3), min_size=len(t), max_size=len(t)))
    assert macro_f1(t, p, 4) == pytest.approx(confusion_f1(t, p, 4))
    assert 0.0 <= macro_f1(t, p, 4) <= 1.0


@given(st.data(), st.permutations(range(4)))
def test_macro_f1_relabel_invariant(data, perm):
    t = data.draw(labels)
    p = data.draw(st.lists(st.integers(0, 3), min_size=len(t), max_size=len(t)))
    pt = [perm[v] for v in t]
    pp = [perm[v] for v in p]
    assert macro_f1(t, p, 4) == pytest.approx(macro_f1(pt, pp, 4))


# --- splits --------------------------------------------------------------------

def test_balanced_folds():
    y = np.array([0] * 50 + [1] * 50)
    folds = stratified_folds(y, 5, RngStream(0))
    for f in folds:
        assert np.bincount(y[f]).tolist() == [10, 10]


def test_remainder_folds():
    y = np.zeros(49, dtype=int)
    sizes = sorted(len(f) for f in stratified_folds(y, 5, RngStream(0)))
    assert sizes == [9, 10, 10, 10, 10]


@given(st.lists(st.integers(0, 2), min_size=15, max_size=80), st.integers(2, 5), st.integers(0, 99))
def test_folds_partition(y, k, seed):
    y = np.array(y)
    if np.bincount(y).min(initial=99) < k or any(np.sum(y == c) < k for c in np.unique(y)):
        with pytest.raises(StratificationError):
            stratified_folds(y, k, RngStream(seed))
        return
    folds = stratified_folds(y, k, RngStream(seed))
    everything = np.concatenate(folds)
    assert sorted(everything.tolist()) == list(range(len(y)))
    for c in np.unique(y):
        per = [int(np.sum(y[f] == c)) for f in folds]
        assert max(per) - min(per) <= 1
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1


def test_stratification_error_names_class():
    with pytest.raises(StratificationError, match="class 1 has 3"):
        stratified_folds([0] * 10 + [1] * 3, 5, RngStream(0))


def test_holdout_split():
    y = np.array([0] * 60 + [1] * 68)
    train, test = stratified_holdout(y, 0.3, RngStream(1))
    assert len(set(train) & set(test)) == 0 and len(train) + len(test) == 128
    assert np.bincount(y[test]).tolist() == [18, 20]


# --- cross-validation and grid -------------------------------------------------

def test_run_cv_report():
    ds = generate_gate_dataset(GateSpec("and", 3, 60, seed=1))
    rep = run_cv(ds, QUICK)
    assert len(rep.scores) == 25
    again = run_cv(ds, QUICK)
    assert rep.to_json(timing=False) == again.to_json(timing=False)
    d = rep.to_dict()
    assert len(d["scores"]) == 25 and len(d["fit_seconds"]) == 25
    assert 0.0 <= d["mean"] <= 1.0
    assert rep.std == pytest.approx(np.std([s["macro_f1"] for s in d["scores"]]))


def test_run_cv_jobs_independent():
    ds = generate_gate_dataset(GateSpec("xor", 4, 40, seed=2))
    a = run_cv(ds, QUICK, folds=3, seeds=2, jobs=1)
    b = run_cv(ds, QUICK, folds=3, seeds=2, jobs=2)
    assert a.scores == b.scores


def test_constant_report_statistics():
    from hornets.benchmark import EvalReport

    rep = EvalReport({}, 2, 1, {(0, 0): 0.7, (1, 0): 0.7})
    assert rep.mean == pytest.approx(0.7) and rep.std == 0.0


def test_grid_spec():
    assert len(FULL_GRID) == 600
    assert len(FULL_GRID.configs()) == 600
    with pytest.raises(ValueError):
        GridSpec(orders=())
    g = GridSpec.from_dict({"activations": ["polyclip:0"], "orders": [2], "rule_counts": [4],
                            "learning_rates": [0.1], "epochs": 5})
    assert len(g) == 1 and g.configs()[0].epochs == 5
    with pytest.raises(ValueError):
        GridSpec.from_dict({"bogus": 1})


def test_grid_search_ranking():
    ds = generate_gate_dataset(GateSpec("and", 3, 40, seed=3))
    grid = GridSpec(("polyclip", "relu"), (2,), (4,), (0.01, 0.1), extra={"epochs": 10})
    res = grid_search(ds, grid, folds=2, seeds=1, base=QUICK)
    assert len(res) == 4
    means = [r.report.mean for r in res]
    assert means == sorted(means, reverse=True)
    assert [r.rank for r in res] == [0, 1, 2, 3]
    single = grid_search(ds, GridSpec(("relu",), (2,), (4,), (0.1,)), folds=2, seeds=1, base=QUICK)
    assert len(single) == 1


def test_synthetic_suite_rows_and_jobs():
    grid = GridSpec(("polyclip:0",), (2,), (4,), (0.05,), extra={"epochs": 10})
    a = synthetic_suite(["xor"], [3, 8], grid, reps=2)
    b = synthetic_suite(["xor"], [3, 8], grid, reps=2, jobs=2)
    assert [(r.gate, r.dim, r.method) for r in a] == [
        ("xor", 3, "hornets-polyclip"), ("xor", 3, "logistic"),
        ("xor", 8, "hornets-polyclip"), ("xor", 8, "logistic")]
    assert [r.scores for r in a] == [r.scores for r in b]


# --- logistic baseline ---------------------------------------------------------

def test_logistic_separable():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(-2, 0.5, (20, 2)), rng.normal(2, 0.5, (20, 2))])
    y = np.array([0] * 20 + [1] * 20)
    m = fit_logistic_baseline(Dataset(x, y))
    assert (predict_logistic(m, x) == y).mean() == 1.0


def test_logistic_two_point_boundary():
    # two points: boundary is the perpendicular bisector, so each side keeps its label
    x = np.array([[1.0, 0.0], [-1.0, 0.0]])
    m = fit_logistic_baseline(Dataset(x, [1, 0]))
    assert predict_logistic(m, [[0.3, 5.0], [-0.3, -5.0]]).tolist() == [1, 0]


def test_logistic_on_gates():
    xor = holdout_scores("xor", 3, [None], reps=10).mean()
    and_ = holdout_scores("and", 3, [None], reps=10).mean()
    assert xor <= 0.65
    assert and_ >= 0.95


# --- Stirling ------------------------------------------------------------------

def test_stirling_examples():
    # full form at n=10, r=2 evaluates to 46.997 (4.4% above C(10, 2) = 45)
    assert stirling_combination_estimate(10, 2) == pytest.approx(46.99700553, rel=1e-8)
    log_est = math.log(stirling_combination_estimate(64, 8))
    assert abs(log_est - log_comb(64, 8)) / log_comb(64, 8) <= 0.01
    assert stirling_combination_estimate(4, 2) == pytest.approx(6, rel=0.10)
    assert stirling_combination_estimate(9, 0) == 1.0 and stirling_combination_estimate(9, 9) == 1.0
    with pytest.raises(ValueError):
        stirling_combination_estimate(3, 4)


def test_stirling_dominant_term():
    full, dom = stirling_log_terms(100, 10)
    assert dom == pytest.approx(100 * math.log(100) - 10 * math.log(10) - 90 * math.log(90))
    assert full < dom


def test_stirling_large_n_no_overflow():
    assert math.isfinite(stirling_log_terms(10**6, 5 * 10**5)[0])
    assert log_comb_exact(10, 3) == pytest.approx(math.log(120))


@given(st.integers(20, 128), st.data())
def test_stirling_log_error_bound(n, data):
    r = data.draw(st.integers(2, n - 2))
    est = stirling_log_terms(n, r)[0]
    assert abs(est - log_comb(n, r)) / log_comb(n, r) <= 0.01


# --- CSV -------------------------------------------------------------------------

def test_csv_round_trip(tmp_path):
    ds = generate_gate_dataset(GateSpec("xnor", 6, 50, seed=4))
    path = tmp_path / "d.csv"
    save_csv(ds, path)
    back = load_csv(path)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert back.feature_names == ds.feature_names


def test_csv_continuous_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.normal(size=(10, 3)) * 1e-7, rng.integers(0, 3, 10), class_count=3)
    save_csv(ds, tmp_path / "c.csv")
    back = load_csv(tmp_path / "c.csv")
    assert np.max(np.abs(back.features - ds.features)) <= 1e-12


def test_csv_string_labels(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("a,b,label\n1,2,yes\n3,4,no\n5,6,yes\n")
    ds = load_csv(p)
    assert len(ds) == 3
    assert ds.labels.tolist() == [0, 1, 0] and ds.class_names == ["yes", "no"]
    save_csv(ds, tmp_path / "s2.csv")
    assert (tmp_path / "s2.csv").read_text() == p.read_text()


@pytest.mark.parametrize("body,line", [
    ("a,b,label\n1,2,0\n1,0\n", 3),
    ("a,b,label\n1,2,0\n1,x,1\n", 3),
    ("a,b,label\n1,2,0\n1,2,\n", 3),
    ("a,b,label\n1,2,-1\n", 2),
])
def test_csv_errors_cite_line(tmp_path, body, line):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(CsvFormatError, match=f":{line}:"):
        load_csv(p)


def test_csv_requires_label_header(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("a,b,target\n1,2,0\n")
    with pytest.raises(CsvFormatError, match=":1:"):
        load_csv(p)
