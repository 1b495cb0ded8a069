"""Pure numpy kernels. Reference implementation and fallback for ``_kernels``.

``code`` selects the activation: -1 is ReLU, k >= 0 is polyClip of order k.
"""
import numpy as np


def activate(pre, code):
    if code < 0:
        return np.maximum(pre, 0.0)
    return np.clip(pre, -1.0, 1.0) ** (2 * code + 1)


def activate_grad(pre, code):
    if code < 0:
        return (pre > 0).astype(np.float64)
    inside = np.abs(pre) < 1.0
    if code == 0:
        return inside.astype(np.float64)
    return np.where(inside, (2 * code + 1) * pre ** (2 * code), 0.0)


def comb_act_forward(x, comb, M, code):
    """pre[b, c] = sum_j x[b, comb[c, j]] * M[c, j]; returns (pre, act(pre))."""
    pre = np.einsum("bcj,cj->bc", x[:, comb], M)
    return pre, activate(pre, code)


def comb_act_backward(x, comb, pre, dF, code):
    """Gradient w.r.t. M given upstream gradient ``dF`` on the activated output."""
    dpre = dF * activate_grad(pre, code)
    return np.einsum("bc,bcj->cj", dpre, x[:, comb])
