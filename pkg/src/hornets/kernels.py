"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``HORNETS_PURE_PYTHON=1`` to force the numpy path.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("HORNETS_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

activate = _impl.activate
activate_grad = _impl.activate_grad
comb_act_forward = _impl.comb_act_forward
comb_act_backward = _impl.comb_act_backward
