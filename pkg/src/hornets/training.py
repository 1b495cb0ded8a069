"""End-to-end training of a HorNets model.

Categorical batches are sign-remapped to {-1, +1}, extended with constant
pseudovariable columns and fed to catInt; everything else goes through
linAtt. Combinations with low softmax mass are resampled after each epoch.
"""
from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .activations import ActivationKind
from .datagen import Dataset
from .layers import (
    CatIntParams,
    ConfigError,
    LinAttParams,
    Route,
    cat_int_backward,
    cat_int_forward,
    cat_router,
    lin_att_backward,
    lin_att_forward,
)
from .numeric import RngStream, ShapeError, as_matrix, row_softmax

MODEL_FORMAT = "hornets-model"
MODEL_VERSION = 1
MIN_IMPROVEMENT = 1e-5


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class HorNetsConfig:
    activation: ActivationKind = ActivationKind.polyclip(1)
    order: int = 4
    num_rules: int = 64
    learning_rate: float = 0.01
    batch_size: int = 15
    epochs: int = 100
    dropout_rate: float = 0.2
    p_norm: float = 2.0
    epsilon: float = 1e-12
    resample_fraction: float = 0.1
    seed: int = 0
    early_stop_patience: int = 10
    route: Route | None = None  # pins the route; None routes every batch

    def __post_init__(self):
        if isinstance(self.activation, str):
            object.__setattr__(self, "activation", ActivationKind.parse(self.activation))
        if isinstance(self.route, str):
            object.__setattr__(self, "route", Route(self.route))
        self.validate()

    def validate(self, feature_count: int | None = None) -> None:
        if self.order < 1:
            raise ConfigError(f"order must be >= 1, got {self.order}")
        if self.num_rules < 2:
            raise ConfigError(f"num_rules must be >= 2 (softmax over one rule is constant), got {self.num_rules}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.p_norm < 1:
            raise ConfigError(f"p_norm must be >= 1, got {self.p_norm}")
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 <= self.resample_fraction <= 1:
            raise ConfigError(f"resample_fraction must lie in [0, 1], got {self.resample_fraction}")
        if self.early_stop_patience < 1:
            raise ConfigError(f"early_stop_patience must be positive, got {self.early_stop_patience}")
        if feature_count is not None and self.order > feature_count + self.order:
            raise ConfigError(f"order {self.order} exceeds augmented width {feature_count + self.order}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["activation"] = str(self.activation)
        d["route"] = None if self.route is None else self.route.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HorNetsConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass
class HorNetsModel:
    config: HorNetsConfig
    lin: LinAttParams
    cat: CatIntParams
    class_count: int
    feature_count: int
    fitted_route: Route | None = None

    @property
    def augmented_dim(self) -> int:
        return self.feature_count + self.cat.order

    def is_pseudovariable(self, index: int) -> bool:
        return index >= self.feature_count

    def predict(self, x) -> np.ndarray:
        return predict(self, x)

    def save(self, path) -> None:
        save_model(self, path)


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    epochs_run: int = 0
    stopped_early: bool = False
    comb_table: np.ndarray | None = None
    route_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "losses": list(self.losses),
            "epochs_run": self.epochs_run,
            "stopped_early": self.stopped_early,
            "comb_table": None if self.comb_table is None else self.comb_table.tolist(),
            "route_counts": dict(self.route_counts),
        }


# --- input preparation -------------------------------------------------------

def remap_binary_signs(x) -> np.ndarray:
    """Map {0, 1} entries to {-1, +1}."""
    x = as_matrix(x)
    if not np.all((x == 0) | (x == 1)):
        bad = x[(x != 0) & (x != 1)][0]
        raise ValueError(f"categorical input must be 0/1, found {bad!r}")
    return 2.0 * x - 1.0


def augment_pseudovariables(x, order: int, feature_count: int | None = None) -> np.ndarray:
    """Append ``order`` constant +1 columns.

    Pass ``feature_count`` to reject input that already carries them.
    """
    if order < 1:
        raise ConfigError(f"order must be >= 1, got {order}")
    x = as_matrix(x)
    if feature_count is not None and x.shape[1] != feature_count:
        raise ConfigError(f"expected {feature_count} raw features, got {x.shape[1]}"
                          " (already augmented?)")
    return np.hstack([x, np.ones((x.shape[0], order))])


def prepare_categorical(x, model: HorNetsModel) -> np.ndarray:
    return augment_pseudovariables(remap_binary_signs(x), model.cat.order, model.feature_count)


# --- combination tables ---------------------------------------------------------

def _unrank(rank: int, n: int, r: int) -> tuple[int, ...]:
    """Lexicographic combination of ``range(n)`` with index ``rank``."""
    out = []
    x = 0
    for slot in range(r, 0, -1):
        while True:
            c = math.comb(n - x - 1, slot - 1)
            if rank < c:
                break
            rank -= c
            x += 1
        out.append(x)
        x += 1
    return tuple(out)


def _draw_sets(n: int, r: int, count: int, rng: RngStream, exclude: set) -> list[tuple[int, ...]]:
    total = math.comb(n, r)
    available = total - len(exclude)
    count = min(count, available)
    if count <= 0:
        return []
    if total <= 4 * (count + len(exclude)):
        # small space: draw ranks directly
        pool = [rk for rk in range(total) if _unrank(rk, n, r) not in exclude] if exclude else None
        if pool is None:
            ranks = rng.choice(total, count, replace=False)
            return [_unrank(int(rk), n, r) for rk in ranks]
        picks = rng.choice(len(pool), count, replace=False)
        return [_unrank(pool[int(p)], n, r) for p in picks]
    out: list[tuple[int, ...]] = []
    seen = set(exclude)
    while len(out) < count:
        need = count - len(out)
        keys = rng.random((need + 8, n))
        idx = np.sort(np.argpartition(keys, r - 1, axis=1)[:, :r], axis=1)
        for row in idx.tolist():
            t = tuple(row)
            if t not in seen:
                seen.add(t)
                out.append(t)
                if len(out) == count:
                    break
    return out


def sample_combinations(augmented_dim: int, order: int, num_rules: int, rng: RngStream,
                        exclude=()) -> np.ndarray:
    """``num_rules`` distinct ascending index sets of size ``order``, uniform over all sets.

    Clamped to the number of available sets; rows in ``exclude`` are never drawn.
    """
    if order > augmented_dim:
        raise ConfigError(f"order {order} exceeds input width {augmented_dim}")
    if order < 1:
        raise ConfigError(f"order must be >= 1, got {order}")
    excl = {tuple(int(i) for i in row) for row in exclude}
    sets = _draw_sets(augmented_dim, order, num_rules, rng, excl)
    return np.array(sets, dtype=np.int64).reshape(len(sets), order)


def resample_combinations(model: HorNetsModel, scores, rng: RngStream,
                          fraction: float | None = None) -> np.ndarray:
    """Replace the lowest-scoring combinations by fresh draws; returns replaced row indices.

    Survivor rows of the table and of M are left untouched.
    """
    cat = model.cat
    fraction = model.config.resample_fraction if fraction is None else fraction
    n_rules = cat.num_rules
    n_replace = math.ceil(fraction * n_rules - 1e-12)
    total = math.comb(model.augmented_dim, cat.order)
    if n_replace <= 0 or total <= n_rules and n_replace < n_rules:
        return np.empty(0, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    # stable sort: ties resolved toward lower row index being replaced first
    rows = np.sort(np.argsort(scores, kind="stable")[:n_replace])
    survivors = np.setdiff1d(np.arange(n_rules), rows)
    fresh = sample_combinations(model.augmented_dim, cat.order, len(rows), rng,
                                exclude=cat.comb[survivors])
    rows = rows[: fresh.shape[0]]
    cat.comb[rows] = fresh
    bound = m_init_bound(cat.order)
    cat.M[rows] = rng.uniform(-bound, bound, (len(rows), cat.order))
    return rows


def m_init_bound(order: int) -> float:
    """Half-width of the uniform init for M rows: 0.5 up to order 4, then 1/sqrt(order).

    Keeps the pre-activation spread near 0.58 so large orders do not start saturated.
    """
    return min(0.5, 1.0 / math.sqrt(order))


# --- loss and optimizer ---------------------------------------------------------

def cross_entropy_loss(logits, y):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    logits = as_matrix(logits)
    y = np.asarray(y, dtype=np.int64).ravel()
    n, c = logits.shape
    if y.shape[0] != n:
        raise ShapeError(f"{y.shape[0]} labels for {n} logit rows")
    if y.size and (y.min() < 0 or y.max() >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(logsum - z[np.arange(n), y]))
    d = row_softmax(logits)
    d[np.arange(n), y] -= 1.0
    return loss, d / n


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              learning_rate: float) -> None:
    """In-place bias-corrected Adam update of every array in ``params``."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# --- model construction, fit and predict ------------------------------------------

def init_model(feature_count: int, class_count: int, config: HorNetsConfig,
               rng: RngStream) -> HorNetsModel:
    config.validate(feature_count)
    aug = feature_count + config.order
    comb = sample_combinations(aug, config.order, config.num_rules, rng)
    n_rules = comb.shape[0]
    if n_rules < 2:
        raise ConfigError(f"only {n_rules} combination(s) of order {config.order} exist"
                          f" over {aug} columns; need at least 2")
    M = rng.uniform(-m_init_bound(config.order), m_init_bound(config.order), (n_rules, config.order))
    bound = 1.0 / math.sqrt(n_rules)
    cat = CatIntParams(M, comb, rng.uniform(-bound, bound, (n_rules, class_count)),
                       np.zeros(class_count), config.dropout_rate)
    bound = 1.0 / math.sqrt(feature_count)
    lin = LinAttParams(rng.uniform(-bound, bound, (feature_count, class_count)),
                       np.zeros(class_count), config.p_norm, config.epsilon)
    return HorNetsModel(config, lin, cat, class_count, feature_count)


def _batch_step(model, xb, yb, route, opt, drop_rng):
    cfg = model.config
    act = cfg.activation
    if route is Route.CATEGORICAL:
        xa = prepare_categorical(xb, model)
        logits, cache = cat_int_forward(xa, model.cat, act, training=True, rng=drop_rng)
        loss, d = cross_entropy_loss(logits, yb)
        gM, gw, gb = cat_int_backward(cache, d, model.cat, act)
        adam_step(model.cat.arrays(), {"M": gM, "w": gw, "b": gb}, opt, cfg.learning_rate)
        return loss, cache.s
    logits, cache = lin_att_forward(xb, model.lin, act)
    loss, d = cross_entropy_loss(logits, yb)
    gw, gb = lin_att_backward(cache, d, model.lin)
    adam_step(model.lin.arrays(), {"w": gw, "b": gb}, opt, cfg.learning_rate)
    return loss, None


def fit(dataset: Dataset, config: HorNetsConfig) -> tuple[HorNetsModel, TrainReport]:
    x = dataset.features
    y = dataset.labels
    if x.shape[0] == 0:
        raise ValueError("cannot fit an empty dataset")
    if np.unique(y).size < 2:
        raise ValueError("training data contains a single class")
    class_count = max(dataset.class_count, int(y.max()) + 1)
    root = RngStream(config.seed)
    model = init_model(x.shape[1], class_count, config, root.spawn(1))
    shuffle_rng, drop_rng, resample_rng = root.spawn(2), root.spawn(3), root.spawn(4)
    report = TrainReport(route_counts={r.value: 0 for r in Route})
    cat_opt, lin_opt = AdamState(), AdamState()
    best, stale = math.inf, 0
    n = x.shape[0]
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        mass = np.zeros(model.cat.num_rules)
        cat_rows = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = x[idx], y[idx]
            route = config.route or cat_router(xb)
            report.route_counts[route.value] += 1
            if route is Route.CATEGORICAL:
                loss, s = _batch_step(model, xb, yb, route, cat_opt, drop_rng)
                mass += s.sum(axis=0)
                cat_rows += len(idx)
            else:
                loss, _ = _batch_step(model, xb, yb, route, lin_opt, None)
            loss_sum += loss * len(idx)
        epoch_loss = loss_sum / n
        if not math.isfinite(epoch_loss):
            raise TrainingError(f"non-finite training loss in epoch {epoch}")
        report.losses.append(epoch_loss)
        report.epochs_run = epoch + 1
        if cat_rows and config.resample_fraction > 0:
            rows = resample_combinations(model, mass / cat_rows, resample_rng)
            for key in ("M",):
                if key in cat_opt.m and rows.size:
                    cat_opt.m[key][rows] = 0.0
                    cat_opt.v[key][rows] = 0.0
        if epoch_loss < best - MIN_IMPROVEMENT:
            best, stale = epoch_loss, 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                report.stopped_early = True
                break
    counts = report.route_counts
    if counts[Route.CATEGORICAL.value] or counts[Route.CONTINUOUS.value]:
        model.fitted_route = (Route.CATEGORICAL
                              if counts[Route.CATEGORICAL.value] >= counts[Route.CONTINUOUS.value]
                              else Route.CONTINUOUS)
    report.comb_table = model.cat.comb.copy()
    return model, report


def route_for(model: HorNetsModel, x) -> Route:
    return model.config.route or cat_router(x)


def predict_logits(model: HorNetsModel, x) -> np.ndarray:
    x = as_matrix(x)
    if x.shape[1] != model.feature_count:
        raise ShapeError(f"model expects {model.feature_count} features, got {x.shape[1]}")
    act = model.config.activation
    if route_for(model, x) is Route.CATEGORICAL:
        logits, _ = cat_int_forward(prepare_categorical(x, model), model.cat, act)
    else:
        logits, _ = lin_att_forward(x, model.lin, act)
    return logits


def predict(model: HorNetsModel, x) -> np.ndarray:
    """Arg-max class per row; ties go to the lowest class index."""
    return np.argmax(predict_logits(model, x), axis=1)


# --- serialization ----------------------------------------------------------------

def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    dtype = "<f8" if a.dtype.kind == "f" else "<i8"
    return {"dtype": dtype, "shape": list(a.shape),
            "data": base64.b64encode(a.astype(dtype).tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    a = np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"])
    return a.astype(np.float64 if d["dtype"] == "<f8" else np.int64)


def model_to_dict(model: HorNetsModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": model.config.to_dict(),
        "class_count": model.class_count,
        "feature_count": model.feature_count,
        "fitted_route": None if model.fitted_route is None else model.fitted_route.value,
        "lin_att": {"w": _encode(model.lin.w), "b": _encode(model.lin.b),
                    "p": model.lin.p, "epsilon": model.lin.epsilon},
        "cat_int": {"M": _encode(model.cat.M), "comb": _encode(model.cat.comb),
                    "w": _encode(model.cat.w), "b": _encode(model.cat.b),
                    "dropout_rate": model.cat.dropout_rate},
    }


def model_from_dict(d: dict) -> HorNetsModel:
    if d.get("format") != MODEL_FORMAT:
        raise ValueError("not a hornets model file")
    if d.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')}")
    cfg = HorNetsConfig.from_dict(d["config"])
    la, ci = d["lin_att"], d["cat_int"]
    lin = LinAttParams(_decode(la["w"]), _decode(la["b"]), la["p"], la["epsilon"])
    cat = CatIntParams(_decode(ci["M"]), _decode(ci["comb"]), _decode(ci["w"]), _decode(ci["b"]),
                       ci["dropout_rate"])
    route = d.get("fitted_route")
    model = HorNetsModel(cfg, lin, cat, d["class_count"], d["feature_count"],
                         None if route is None else Route(route))
    cat.validate(model.augmented_dim)
    return model


def dumps_model(model: HorNetsModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, indent=1) + "\n"


def save_model(model: HorNetsModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> HorNetsModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def with_overrides(config: HorNetsConfig, **changes) -> HorNetsConfig:
    return replace(config, **changes)
