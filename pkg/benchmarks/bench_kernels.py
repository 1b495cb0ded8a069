"""Time the compiled combination kernels against the numpy reference.

    python benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from hornets import _kernels_py

try:
    from hornets import _kernels
except ImportError:
    _kernels = None

SHAPES = [  # (batch, augmented width, rules, order)
    (15, 20, 64, 4),
    (15, 48, 256, 16),
    (15, 160, 512, 32),
    (128, 160, 2048, 32),
]


def _problem(nb, d, nc, order, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.choice([-1.0, 1.0], size=(nb, d))
    comb = np.sort(np.argsort(rng.random((nc, d)), axis=1)[:, :order], axis=1)
    M = rng.uniform(-0.5, 0.5, (nc, order))
    dF = rng.normal(size=(nb, nc))
    return x, comb, M, dF


def _time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--code", type=int, default=1, help="activation code (-1 relu, else polyClip k)")
    args = ap.parse_args(argv)
    impls = {"numpy": _kernels_py}
    if _kernels is not None:
        impls["cython"] = _kernels
    else:
        print("compiled extension not built; timing numpy only")
    print(f"{'shape (b,d,C,o)':<22}{'pass':<10}" + "".join(f"{n:>12}" for n in impls) + f"{'speedup':>10}")
    for shape in SHAPES:
        x, comb, M, dF = _problem(*shape)
        pre, _ = _kernels_py.comb_act_forward(x, comb, M, args.code)
        for name, call in (
            ("forward", lambda k: k.comb_act_forward(x, comb, M, args.code)),
            ("backward", lambda k: k.comb_act_backward(x, comb, pre, dF, args.code)),
        ):
            ms = {n: 1e3 * _time(lambda k=k: call(k), args.repeat) for n, k in impls.items()}
            speed = f"{ms['numpy'] / ms['cython']:>9.1f}x" if "cython" in ms else ""
            print(f"{str(shape):<22}{name:<10}" + "".join(f"{v:>10.3f}ms" for v in ms.values()) + speed)


if __name__ == "__main__":
    main()
