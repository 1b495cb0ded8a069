"""Read Horn-clause-style rules off a fitted catInt block.

Each combination is scored by the mean softmax mass it receives over a
dataset (dropout off). Its M row is discretized to {-1, 0, 1}; pseudovariable
slots and zero entries are dropped and the rest become a conjunction of
literals, +1 -> f, -1 -> ¬f.

The downstream linear head is not consulted, so clause polarity reflects M
alone.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .activations import discretize
from .datagen import Dataset
from .layers import Route, cat_int_forward
from .training import HorNetsModel, prepare_categorical

EMPTY_CLAUSE = "⊤ (no literals)"
RULES_FORMAT = "hornets-rules"


class UnsupportedRouteError(ValueError):
    """Rule extraction needs a model trained through the categorical route."""


@dataclass
class RuleEntry:
    combination: int
    feature_indices: list[int]
    signs: list[int]
    score: float
    clause: str

    def to_dict(self) -> dict:
        return {"combination": self.combination, "feature_indices": list(self.feature_indices),
                "signs": list(self.signs), "score": self.score, "clause": self.clause}


@dataclass
class RuleReport:
    entries: list[RuleEntry] = field(default_factory=list)
    feature_names: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def to_dict(self) -> dict:
        return {"format": RULES_FORMAT, "version": 1,
                "feature_names": list(self.feature_names),
                "entries": [e.to_dict() for e in self.entries]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, ensure_ascii=False) + "\n"

    def to_text(self) -> str:
        return "".join(f"{e.score:.6f}\t{e.clause}\n" for e in self.entries)


def _check_route(model: HorNetsModel, x: np.ndarray) -> None:
    if model.fitted_route is Route.CONTINUOUS or model.config.route is Route.CONTINUOUS:
        raise UnsupportedRouteError("model was fitted through the continuous (linAtt) route;"
                                    " rules need the categorical (catInt) route")
    if model.fitted_route is None and model.config.route is None:
        raise UnsupportedRouteError("model has not been fitted through the categorical route")
    if not np.all((x == 0) | (x == 1)):
        raise UnsupportedRouteError("dataset is not binary, so it would take the continuous route")


def score_interactions(model: HorNetsModel, dataset: Dataset) -> np.ndarray:
    """Mean softmax mass per combination over every row of ``dataset``."""
    x = dataset.features
    _check_route(model, x)
    if x.shape[0] == 0:
        raise ValueError("cannot score interactions on an empty dataset")
    _, cache = cat_int_forward(prepare_categorical(x, model), model.cat, model.config.activation)
    return cache.s.mean(axis=0)


def render_clause(indices, signs, names) -> str:
    lits = [names[i] if s > 0 else "¬" + names[i] for i, s in zip(indices, signs)]
    return " ∧ ".join(lits) if lits else EMPTY_CLAUSE


def rule_for_row(model: HorNetsModel, c: int, names) -> tuple[list[int], list[int], str]:
    signs = discretize(model.cat.M[c])
    idx, sg = [], []
    for j, s in zip(model.cat.comb[c].tolist(), signs.tolist()):
        if s == 0 or model.is_pseudovariable(j):
            continue
        idx.append(j)
        sg.append(s)
    return idx, sg, render_clause(idx, sg, names)


def extract_rules(model: HorNetsModel, dataset: Dataset, top_n: int = 10) -> RuleReport:
    if top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    scores = score_interactions(model, dataset)
    names = list(dataset.feature_names) or [f"f{i}" for i in range(model.feature_count)]
    # stable sort on the negated score keeps lower combination index first on ties
    ranked = np.argsort(-scores, kind="stable")[:top_n]
    entries = []
    for c in ranked.tolist():
        idx, sg, clause = rule_for_row(model, c, names)
        entries.append(RuleEntry(c, idx, sg, float(scores[c]), clause))
    return RuleReport(entries, names)

