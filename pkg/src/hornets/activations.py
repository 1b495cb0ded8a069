"""polyClip activations, ReLU, and weight discretization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_K = 16


@dataclass(frozen=True)
class ActivationKind:
    """``name`` is ``"polyclip"`` or ``"relu"``; ``k`` only matters for polyclip."""

    name: str = "polyclip"
    k: int = 1

    def __post_init__(self):
        if self.name not in ("polyclip", "relu"):
            raise ValueError(f"unknown activation {self.name!r}")
        if not isinstance(self.k, (int, np.integer)) or isinstance(self.k, bool):
            raise ValueError(f"k must be an integer, got {self.k!r}")
        if not 0 <= self.k <= MAX_K:
            raise ValueError(f"k must lie in [0, {MAX_K}], got {self.k}")

    @classmethod
    def polyclip(cls, k: int = 1) -> "ActivationKind":
        return cls("polyclip", int(k))

    @classmethod
    def relu(cls) -> "ActivationKind":
        return cls("relu", 0)

    @classmethod
    def parse(cls, text: str) -> "ActivationKind":
        """Parse ``"relu"``, ``"polyclip"`` or ``"polyclip:K"``."""
        name, _, k = text.strip().lower().partition(":")
        if name == "relu":
            return cls.relu()
        if name == "polyclip":
            return cls.polyclip(int(k) if k else 1)
        raise ValueError(f"unknown activation {text!r}")

    @property
    def code(self) -> int:
        """Integer tag understood by the kernels: -1 for ReLU, else k."""
        return -1 if self.name == "relu" else self.k

    def __str__(self):
        return "relu" if self.name == "relu" else f"polyclip:{self.k}"

    def __call__(self, x):
        return relu(x) if self.name == "relu" else poly_clip(x, self.k)

    def grad(self, x):
        return relu_grad(x) if self.name == "relu" else poly_clip_grad(x, self.k)


def poly_clip(x, k: int = 1):
    """clip(x**(2k+1), -1, 1).

    Clipping the base first is equivalent for odd exponents and cannot overflow.
    """
    out = np.clip(x, -1.0, 1.0) ** (2 * k + 1)
    return float(out) if np.ndim(out) == 0 else out


def poly_clip_grad(x, k: int = 1):
    # subgradient 0 on the flat region and at |x| == 1
    x = np.asarray(x, dtype=np.float64)
    inside = np.abs(x) < 1.0
    out = np.where(inside, (2 * k + 1) * np.where(inside, x, 0.0) ** (2 * k), 0.0)
    return float(out) if out.ndim == 0 else out


def relu(x):
    out = np.maximum(x, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def relu_grad(x):
    out = (np.asarray(x) > 0).astype(np.float64)
    return float(out) if out.ndim == 0 else out


def discretize(x):
    """round(clip(x, -1, 1)) with halves rounded away from zero; values in {-1, 0, 1}."""
    c = np.clip(x, -1.0, 1.0)
    out = np.sign(c) * np.floor(np.abs(c) + 0.5)
    if np.ndim(out) == 0:
        return int(out)
    return out.astype(np.int64)
