"""Synthetic logic-gate benchmark: Bernoulli(0.5) bit matrices with a gate target."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .numeric import RngStream, derive_seed

GATES = ("and", "or", "not", "xor", "xnor")
DEFAULT_DIMS = (3, 4, 8, 16, 32, 64, 128)


@dataclass(frozen=True)
class GateSpec:
    op: str
    dim: int
    count: int = 128
    seed: int = 0
    j0: int = 0
    j1: int = 1

    def __post_init__(self):
        op = self.op.lower()
        object.__setattr__(self, "op", op)
        if op not in GATES:
            raise ValueError(f"unknown gate {self.op!r}; choose from {', '.join(GATES)}")
        if self.dim < 3:
            raise ValueError(f"dim must be >= 3, got {self.dim}")
        if self.count < 1:
            raise ValueError(f"count must be positive, got {self.count}")
        if self.j0 == self.j1 or not (0 <= self.j0 < self.dim and 0 <= self.j1 < self.dim):
            raise ValueError(f"generating indices ({self.j0}, {self.j1}) must be distinct and < dim")

    @property
    def name(self) -> str:
        return f"{self.op}_d{self.dim}"


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    feature_names: list[str] = field(default_factory=list)
    class_count: int = 0
    provenance: GateSpec | None = None
    class_names: list[str] | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {self.features.shape}")
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.labels.shape[0] != self.features.shape[0]:
            raise ValueError(f"{self.labels.shape[0]} labels for {self.features.shape[0]} rows")
        if not self.feature_names:
            self.feature_names = [f"f{i}" for i in range(self.features.shape[1])]
        if len(self.feature_names) != self.features.shape[1]:
            raise ValueError("feature_names length does not match the feature count")
        if not self.class_count:
            self.class_count = int(self.labels.max()) + 1 if self.labels.size else 0
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")

    def __len__(self):
        return self.features.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], list(self.feature_names),
                       self.class_count, self.provenance, self.class_names)


def apply_gate(op: str, a, b=0):
    """Truth table of ``op`` on bits; NOT reads ``a`` only. Works elementwise on arrays."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    op = op.lower()
    if op == "and":
        out = a & b
    elif op == "or":
        out = a | b
    elif op == "not":
        out = 1 - a
    elif op == "xor":
        out = a ^ b
    elif op == "xnor":
        out = 1 - (a ^ b)
    else:
        raise ValueError(f"unknown gate {op!r}")
    return int(out) if out.ndim == 0 else out


def generate_gate_dataset(spec: GateSpec) -> Dataset:
    rng = RngStream(spec.seed)
    bits = rng.bernoulli(0.5, (spec.count, spec.dim))
    labels = apply_gate(spec.op, bits[:, spec.j0], bits[:, spec.j1])
    return Dataset(bits.astype(np.float64), labels, class_count=2, provenance=spec)


def generate_suite(gates: Iterable[str] = GATES, dims: Iterable[int] = DEFAULT_DIMS,
                   repetitions: int = 30, base_seed: int = 0, count: int = 128) -> list[Dataset]:
    out = []
    for gate in gates:
        # keyed by gate name, not list position, so subsets of a suite agree
        gi = GATES.index(gate.lower())
        for dim in dims:
            for rep in range(repetitions):
                seed = derive_seed(base_seed, gi, dim, rep)
                out.append(generate_gate_dataset(GateSpec(gate, dim, count, seed)))
    return out
