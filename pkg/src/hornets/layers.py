"""Routing, the continuous linAtt block and the categorical catInt block.

Both blocks end in a linear head; backward functions return gradients of
whatever scalar produced ``d_logits`` (in training, the mean cross-entropy).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import kernels
from .activations import ActivationKind
from .numeric import RngStream, ShapeError, as_matrix, row_pnorm, row_softmax


class Route(str, enum.Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"


class ConfigError(ValueError):
    """Invalid model configuration (shapes, orders, indices)."""


def cat_router(batch) -> Route:
    """Categorical when the whole batch holds at most two distinct values."""
    flat = np.asarray(batch, dtype=np.float64).ravel()
    if flat.size == 0:
        raise ValueError("cannot route an empty batch")
    # two passes instead of np.unique: no sort on large continuous batches
    other = flat[flat != flat[0]]
    if other.size and np.any(other != other[0]):
        return Route.CONTINUOUS
    return Route.CATEGORICAL


@dataclass
class LinAttParams:
    w: np.ndarray
    b: np.ndarray
    p: float = 2.0
    epsilon: float = 1e-12

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}


@dataclass
class LinAttCache:
    x: np.ndarray
    x0: np.ndarray
    x1: np.ndarray


def lin_att_forward(x, params: LinAttParams, act: ActivationKind):
    """x0 = x / max(||x||_p, eps) per row; x1 = act(x0) * x; logits = x1 @ w + b."""
    x = as_matrix(x)
    if x.shape[1] != params.w.shape[0]:
        raise ShapeError(f"input has {x.shape[1]} columns, linAtt expects {params.w.shape[0]}")
    norm = np.maximum(row_pnorm(x, params.p), params.epsilon)
    x0 = x / norm
    x1 = kernels.activate(x0, act.code) * x
    logits = x1 @ params.w + params.b
    return logits, LinAttCache(x, x0, x1)


def lin_att_backward(cache: LinAttCache, d_logits, params: LinAttParams):
    d_logits = as_matrix(d_logits)
    if d_logits.shape != (cache.x.shape[0], params.w.shape[1]):
        raise RuntimeError(f"gradient shape {d_logits.shape} does not match cached batch")
    # the gate depends on x only, which is data; no gradient flows into it
    return cache.x1.T @ d_logits, d_logits.sum(axis=0)


@dataclass
class CatIntParams:
    M: np.ndarray  # (num_rules, order)
    comb: np.ndarray  # (num_rules, order) int64 indices into the augmented input
    w: np.ndarray  # (num_rules, num_classes)
    b: np.ndarray
    dropout_rate: float = 0.2

    @property
    def num_rules(self) -> int:
        return self.comb.shape[0]

    @property
    def order(self) -> int:
        return self.comb.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"M": self.M, "w": self.w, "b": self.b}

    def validate(self, augmented_dim: int) -> None:
        comb = self.comb
        if comb.ndim != 2 or self.M.shape != comb.shape:
            raise ConfigError(f"M shape {self.M.shape} does not match combination table {comb.shape}")
        if comb.size and (comb.min() < 0 or comb.max() >= augmented_dim):
            raise ConfigError(f"combination index out of range for augmented width {augmented_dim}")
        srt = np.sort(comb, axis=1)
        if np.any(srt[:, 1:] == srt[:, :-1]):
            raise ConfigError("a combination repeats a feature index")
        if len({tuple(r) for r in srt.tolist()}) != comb.shape[0]:
            raise ConfigError("combination table has duplicate rows")


@dataclass
class CatIntCache:
    x: np.ndarray
    pre: np.ndarray
    F: np.ndarray
    mask: np.ndarray | None  # already divided by the keep probability
    s: np.ndarray


def comb_act_op(M, x, comb, act: ActivationKind = ActivationKind()):
    """F[b, c] = act(sum_j x[b, comb[c, j]] * M[c, j])."""
    F, _ = _comb_act(M, as_matrix(x), comb, act)
    return F


def _comb_act(M, x, comb, act):
    comb = np.asarray(comb, dtype=np.int64)
    if comb.size and (comb.min() < 0 or comb.max() >= x.shape[1]):
        raise ConfigError(f"combination index out of range for input width {x.shape[1]}")
    M = np.asarray(M, dtype=np.float64)
    if M.shape != comb.shape:
        raise ConfigError(f"M shape {M.shape} does not match combination table {comb.shape}")
    pre, F = kernels.comb_act_forward(x, comb, M, act.code)
    return F, pre


def cat_int_forward(x, params: CatIntParams, act: ActivationKind, training: bool = False,
                    rng: RngStream | None = None):
    """logits = softmax(dropout(combActOp(M, x))) @ w + b; dropout only when training."""
    x = as_matrix(x)
    F, pre = _comb_act(params.M, x, params.comb, act)
    mask = None
    x0 = F
    rate = params.dropout_rate
    if training and rate > 0:
        if rng is None:
            raise ValueError("training-mode dropout needs an RngStream")
        keep = 1.0 - rate
        mask = (rng.random(F.shape) < keep) / keep
        x0 = F * mask
    s = row_softmax(x0)
    logits = s @ params.w + params.b
    return logits, CatIntCache(x, pre, F, mask, s)


def cat_int_backward(cache: CatIntCache, d_logits, params: CatIntParams, act: ActivationKind):
    """Returns (grad_M, grad_w, grad_b)."""
    d_logits = as_matrix(d_logits)
    if d_logits.shape != (cache.s.shape[0], params.w.shape[1]) or cache.s.shape[1] != params.num_rules:
        raise RuntimeError("cached forward pass does not match this gradient / parameter set")
    s = cache.s
    grad_w = s.T @ d_logits
    grad_b = d_logits.sum(axis=0)
    ds = d_logits @ params.w.T
    dx0 = s * (ds - np.einsum("ij,ij->i", ds, s)[:, None])
    dF = dx0 if cache.mask is None else dx0 * cache.mask
    grad_M = kernels.comb_act_backward(cache.x, params.comb, cache.pre, dF, act.code)
    return grad_M, grad_w, grad_b
