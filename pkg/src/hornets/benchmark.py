"""Evaluation harness: macro-F1, stratified splits, cross-validation, grid search,
a logistic-regression baseline, CSV I/O and the Stirling size estimate.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .activations import ActivationKind
from .datagen import GATES, Dataset, GateSpec, generate_gate_dataset
from .numeric import RngStream, derive_seed
from .training import HorNetsConfig, cross_entropy_loss, fit, predict

LABEL_COLUMN = "label"
REPORT_FORMAT = "hornets-eval-report"


class StratificationError(ValueError):
    pass


class CsvFormatError(ValueError):
    pass


# --- metrics -----------------------------------------------------------------

def macro_f1(y_true, y_pred, class_count: int | None = None) -> float:
    """Unweighted mean of per-class F1.

    Classes absent from both truth and prediction are left out of the mean;
    a class with a zero F1 denominator otherwise scores 0.
    """
    t = np.asarray(y_true, dtype=np.int64).ravel()
    p = np.asarray(y_pred, dtype=np.int64).ravel()
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.size} labels vs {p.size} predictions")
    if t.size == 0:
        raise ValueError("macro_f1 of an empty label set")
    if class_count is None:
        class_count = int(max(t.max(), p.max())) + 1
    if min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= class_count:
        raise ValueError(f"labels must lie in [0, {class_count})")
    f1s = []
    for c in range(class_count):
        tp = int(np.sum((t == c) & (p == c)))
        n_true = int(np.sum(t == c))
        n_pred = int(np.sum(p == c))
        if n_true == 0 and n_pred == 0:
            continue
        f1s.append(2 * tp / (n_true + n_pred))
    return float(np.mean(f1s))


# --- splits ------------------------------------------------------------------

def stratified_folds(labels, k: int, rng: RngStream) -> list[np.ndarray]:
    """Shuffle each class, then deal its members round-robin over ``k`` folds."""
    y = np.asarray(labels, dtype=np.int64).ravel()
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    classes, counts = np.unique(y, return_counts=True)
    for c, n in zip(classes, counts):
        if n < k:
            raise StratificationError(f"class {c} has {n} members, fewer than {k} folds")
    parts: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for c in classes:
        members = np.flatnonzero(y == c)
        members = members[rng.permutation(members.size)]
        for i, idx in enumerate(members.tolist()):
            parts[(offset + i) % k].append(idx)
        # continue the deal where the last class stopped so fold sizes stay within one
        offset = (offset + members.size) % k
    return [np.sort(np.asarray(p, dtype=np.int64)) for p in parts]


def stratified_holdout(labels, test_fraction: float, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """Per-class split; each class keeps round(test_fraction * n) rows for testing, at least one on each side."""
    y = np.asarray(labels, dtype=np.int64).ravel()
    if not 0 < test_fraction < 1:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    train, test = [], []
    for c in np.unique(y):
        members = np.flatnonzero(y == c)
        if members.size < 2:
            raise StratificationError(f"class {c} has {members.size} member(s); cannot hold out")
        members = members[rng.permutation(members.size)]
        n_test = min(max(int(round(test_fraction * members.size)), 1), members.size - 1)
        test.extend(members[:n_test].tolist())
        train.extend(members[n_test:].tolist())
    return np.sort(np.asarray(train, dtype=np.int64)), np.sort(np.asarray(test, dtype=np.int64))


# --- cross-validation --------------------------------------------------------

@dataclass
class EvalReport:
    config: dict
    folds: int
    seeds: int
    scores: dict[tuple[int, int], float] = field(default_factory=dict)  # (fold, seed) -> macro-F1
    fit_seconds: dict[tuple[int, int], float] = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return np.array([self.scores[k] for k in sorted(self.scores)])

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def std(self) -> float:
        return float(self.values.std())

    @property
    def total_seconds(self) -> float:
        return float(sum(self.fit_seconds.values()))

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "format": REPORT_FORMAT,
            "version": 1,
            "config": self.config,
            "folds": self.folds,
            "seeds": self.seeds,
            "scores": [{"fold": f, "seed": s, "macro_f1": self.scores[(f, s)]}
                       for f, s in sorted(self.scores)],
            "mean": self.mean,
            "std": self.std,
        }
        if timing:
            d["fit_seconds"] = [{"fold": f, "seed": s, "seconds": self.fit_seconds[(f, s)]}
                                for f, s in sorted(self.fit_seconds)]
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), sort_keys=True, indent=1) + "\n"


def _cv_cell(args):
    dataset, config, train_idx, test_idx, fit_seed = args
    t0 = time.perf_counter()
    model, _ = fit(dataset.subset(train_idx), replace(config, seed=fit_seed))
    elapsed = time.perf_counter() - t0
    test = dataset.subset(test_idx)
    return macro_f1(test.labels, predict(model, test.features), dataset.class_count), elapsed


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def cv_cells(dataset: Dataset, config: HorNetsConfig, folds: int = 5, seeds: int = 5):
    """Every (fold, seed) cell with its own index split and derived fit seed."""
    cells = []
    for s in range(seeds):
        parts = stratified_folds(dataset.labels, folds, RngStream(derive_seed(config.seed, 0, s)))
        for f in range(folds):
            train = np.sort(np.concatenate([parts[i] for i in range(folds) if i != f]))
            cells.append(((f, s), (dataset, config, train, parts[f], derive_seed(config.seed, 1, s, f))))
    return cells


def run_cv(dataset: Dataset, config: HorNetsConfig, folds: int = 5, seeds: int = 5,
           jobs: int = 1) -> EvalReport:
    """Stratified k-fold repeated over ``seeds`` reshuffles; cell seeds derive from ``config.seed``."""
    cells = cv_cells(dataset, config, folds, seeds)
    out = _map(_cv_cell, [c[1] for c in cells], jobs)
    report = EvalReport(config.to_dict(), folds, seeds)
    for (key, _), (score, secs) in zip(cells, out):
        report.scores[key] = score
        report.fit_seconds[key] = secs
    return report


# --- grid search -------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    activations: tuple[str, ...] = ("relu", "polyclip")
    orders: tuple[int, ...] = (4, 8, 16, 32, 64, 128, 512, 1024, 2048, 4096)
    rule_counts: tuple[int, ...] = (4, 8, 16, 32, 64, 128, 512, 1024, 2048, 4096)
    learning_rates: tuple[float, ...] = (0.001, 0.01, 0.1)
    batch_size: int = 15
    extra: dict = field(default_factory=dict, hash=False, compare=False)  # other HorNetsConfig fields

    def __post_init__(self):
        for name in ("activations", "orders", "rule_counts", "learning_rates"):
            axis = tuple(getattr(self, name))
            if not axis:
                raise ValueError(f"grid axis {name!r} is empty")
            object.__setattr__(self, name, axis)
        for a in self.activations:
            ActivationKind.parse(a)

    def __len__(self):
        return len(self.activations) * len(self.orders) * len(self.rule_counts) * len(self.learning_rates)

    def configs(self, base: HorNetsConfig | None = None) -> list[HorNetsConfig]:
        base = base or HorNetsConfig()
        out = []
        for act, order, rules, lr in itertools.product(self.activations, self.orders,
                                                       self.rule_counts, self.learning_rates):
            out.append(replace(base, activation=ActivationKind.parse(act), order=order,
                               num_rules=rules, learning_rate=lr, batch_size=self.batch_size,
                               **self.extra))
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("activations", "orders", "rule_counts", "learning_rates"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        axes = {"activations", "orders", "rule_counts", "learning_rates", "batch_size"}
        unknown = set(d) - axes - {"extra"}
        extra = dict(d.get("extra", {}))
        extra.update({k: d[k] for k in unknown})
        bad = set(extra) - set(HorNetsConfig.__dataclass_fields__)
        if bad:
            raise ValueError(f"unknown grid keys: {', '.join(sorted(bad))}")
        kw = {k: tuple(d[k]) if k != "batch_size" else int(d[k]) for k in axes if k in d}
        return cls(extra=extra, **kw)


FULL_GRID = GridSpec()


@dataclass
class GridResult:
    rank: int
    config: HorNetsConfig
    report: EvalReport


def grid_search(dataset: Dataset, grid: GridSpec, folds: int = 5, seeds: int = 5,
                base: HorNetsConfig | None = None, jobs: int = 1) -> list[GridResult]:
    """Cartesian sweep; ranked by mean macro-F1 descending, then by total fit time."""
    configs = grid.configs(base)
    cells, owner = [], []
    for ci, cfg in enumerate(configs):
        for key, args in cv_cells(dataset, cfg, folds, seeds):
            cells.append(args)
            owner.append((ci, key))
    out = _map(_cv_cell, cells, jobs)
    reports = [EvalReport(cfg.to_dict(), folds, seeds) for cfg in configs]
    for (ci, key), (score, secs) in zip(owner, out):
        reports[ci].scores[key] = score
        reports[ci].fit_seconds[key] = secs
    order = sorted(range(len(configs)), key=lambda i: (-reports[i].mean, reports[i].total_seconds, i))
    return [GridResult(r, configs[i], reports[i]) for r, i in enumerate(order)]


# --- logistic-regression baseline -----------------------------------------------

@dataclass
class LogisticModel:
    w: np.ndarray
    b: np.ndarray


def fit_logistic_baseline(dataset: Dataset, lr: float = 0.1, epochs: int = 500,
                          seed: int = 0) -> LogisticModel:
    """Multinomial logistic regression, full-batch gradient descent on mean cross-entropy.

    Weights start at zero, so the result does not depend on ``seed``; it is
    accepted for interface symmetry with ``fit``.
    """
    x, y = dataset.features, dataset.labels
    if x.shape[0] == 0:
        raise ValueError("cannot fit an empty dataset")
    k = max(dataset.class_count, int(y.max()) + 1)
    w = np.zeros((x.shape[1], k))
    b = np.zeros(k)
    for _ in range(epochs):
        _, d = cross_entropy_loss(x @ w + b, y)
        w -= lr * (x.T @ d)
        b -= lr * d.sum(axis=0)
    return LogisticModel(w, b)


def predict_logistic(model: LogisticModel, x) -> np.ndarray:
    return np.argmax(np.asarray(x, dtype=np.float64) @ model.w + model.b, axis=1)


# --- Stirling estimate -----------------------------------------------------------

def log_comb_exact(n: int, r: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(r + 1) - math.lgamma(n - r + 1)


def stirling_log_terms(n: int, r: int) -> tuple[float, float]:
    """(log of full Stirling form, log of the dominant n^n / (r^r (n-r)^(n-r)) term)."""
    if not 0 < r < n:
        raise ValueError(f"need 0 < r < n, got n={n}, r={r}")
    m = n - r
    dominant = n * math.log(n) - r * math.log(r) - m * math.log(m)
    prefactor = 0.5 * math.log(n / (2 * math.pi * r * m))
    return prefactor + dominant, dominant


def stirling_combination_estimate(n: int, r: int) -> float:
    """Estimate of C(n, r) from Stirling's formula; exact 1 when r is 0 or n."""
    if r < 0 or r > n:
        raise ValueError(f"need 0 <= r <= n, got n={n}, r={r}")
    if r in (0, n):
        return 1.0
    return math.exp(stirling_log_terms(n, r)[0])


# --- CSV -------------------------------------------------------------------------

def load_csv(path) -> Dataset:
    """Header row, numeric feature columns, last column ``label``.

    Integer labels are used as class ids. Otherwise labels are mapped to ids in
    order of first appearance and the originals kept as ``class_names``.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError(f"{path}: empty file")
    header = rows[0]
    if len(header) < 2 or header[-1].strip() != LABEL_COLUMN:
        raise CsvFormatError(f"{path}:1: last header column must be {LABEL_COLUMN!r}")
    width = len(header)
    feats, raw_labels = [], []
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise CsvFormatError(f"{path}:{line}: expected {width} fields, got {len(row)}")
        try:
            feats.append([float(v) for v in row[:-1]])
        except ValueError as exc:
            raise CsvFormatError(f"{path}:{line}: non-numeric feature value ({exc})") from None
        if not row[-1].strip():
            raise CsvFormatError(f"{path}:{line}: missing label")
        raw_labels.append((line, row[-1].strip()))
    class_names = None
    try:
        labels = [int(v) for _, v in raw_labels]
        if any(v < 0 for v in labels):
            line = next(ln for ln, v in raw_labels if int(v) < 0)
            raise CsvFormatError(f"{path}:{line}: negative class id")
    except ValueError as exc:
        if isinstance(exc, CsvFormatError):
            raise
        ids: dict[str, int] = {}
        for _, v in raw_labels:
            ids.setdefault(v, len(ids))
        labels = [ids[v] for _, v in raw_labels]
        class_names = list(ids)
    x = np.asarray(feats, dtype=np.float64).reshape(len(feats), width - 1)
    count = len(class_names) if class_names else (max(labels) + 1 if labels else 0)
    return Dataset(x, np.asarray(labels, dtype=np.int64), [h.strip() for h in header[:-1]],
                   count, class_names=class_names)


def _fmt(v: float) -> str:
    if float(v).is_integer() and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def save_csv(dataset: Dataset, path) -> None:
    names = dataset.class_names
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(dataset.feature_names) + [LABEL_COLUMN])
        for row, lab in zip(dataset.features, dataset.labels.tolist()):
            w.writerow([_fmt(v) for v in row] + [names[lab] if names else lab])


# --- synthetic suite -------------------------------------------------------------

HOLDOUT_TEST_FRACTION = 0.3


def method_name(activation: ActivationKind) -> str:
    return f"hornets-{activation.name}"


def _holdout_cell(args):
    spec, cfg, split_seed, fit_seed = args
    ds = generate_gate_dataset(spec)
    train, test = stratified_holdout(ds.labels, HOLDOUT_TEST_FRACTION, RngStream(split_seed))
    test_ds = ds.subset(test)
    if cfg is None:
        model = fit_logistic_baseline(ds.subset(train))
        pred = predict_logistic(model, test_ds.features)
    else:
        model, _ = fit(ds.subset(train), replace(cfg, seed=fit_seed))
        pred = predict(model, test_ds.features)
    return macro_f1(test_ds.labels, pred, 2)


def gate_spec(gate: str, dim: int, rep: int, base_seed: int = 0, count: int = 128) -> GateSpec:
    return GateSpec(gate, dim, count, derive_seed(base_seed, GATES.index(gate.lower()), dim, rep))


def holdout_scores(gate: str, dim: int, configs: list[HorNetsConfig | None], reps: int,
                   base_seed: int = 0, count: int = 128, jobs: int = 1) -> np.ndarray:
    """(len(configs), reps) holdout macro-F1; ``None`` stands for the logistic baseline.

    Repetition ``rep`` uses the same data and split for every config.
    """
    gi = GATES.index(gate.lower())
    items = []
    for cfg in configs:
        for rep in range(reps):
            spec = gate_spec(gate, dim, rep, base_seed, count)
            items.append((spec, cfg, derive_seed(base_seed, 101, gi, dim, rep),
                          derive_seed(base_seed, 202, gi, dim, rep)))
    return np.asarray(_map(_holdout_cell, items, jobs)).reshape(len(configs), reps)


@dataclass
class SuiteRow:
    gate: str
    dim: int
    method: str
    mean: float
    std: float
    best_config: dict | None
    scores: list[float]


def synthetic_suite(gates, dims, grid: GridSpec, reps: int = 10, base_seed: int = 0,
                    count: int = 128, jobs: int = 1, base: HorNetsConfig | None = None,
                    progress=None) -> list[SuiteRow]:
    """Best-of-grid holdout score per activation family, plus the logistic baseline."""
    configs = grid.configs(base)
    rows = []
    for gate in gates:
        for dim in dims:
            if progress:
                progress(f"{gate} d={dim}: {len(configs)} configs x {reps} reps")
            scores = holdout_scores(gate, dim, list(configs) + [None], reps, base_seed, count, jobs)
            means = scores.mean(axis=1)
            families: dict[str, list[int]] = {}
            for i, cfg in enumerate(configs):
                families.setdefault(method_name(cfg.activation), []).append(i)
            for name, idx in families.items():
                best = max(idx, key=lambda i: (means[i], -i))
                rows.append(SuiteRow(gate, dim, name, float(means[best]), float(scores[best].std()),
                                     configs[best].to_dict(), scores[best].tolist()))
            rows.append(SuiteRow(gate, dim, "logistic", float(means[-1]), float(scores[-1].std()),
                                 None, scores[-1].tolist()))
    return rows
