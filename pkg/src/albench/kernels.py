"""Kernel backend selection.

Prefers the compiled extension (``albench._mlp``) and falls back to the
pure-numpy implementation when it is not built. Set ALBENCH_BACKEND=numpy
or ALBENCH_BACKEND=cython to force a choice (the latter raises if the
extension is missing). Results are deterministic per backend; the two
backends agree to floating-point accumulation order.
"""

import os

from . import _mlp_py

_requested = os.environ.get("ALBENCH_BACKEND", "").strip().lower()

if _requested == "numpy":
    _impl = _mlp_py
    BACKEND = "numpy"
elif _requested == "cython":
    from . import _mlp as _impl  # noqa: F401  (ImportError here is intentional)

    BACKEND = "cython"
elif _requested:
    raise ValueError(f"ALBENCH_BACKEND must be 'numpy' or 'cython', got {_requested!r}")
else:
    try:
        from . import _mlp as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _mlp_py
        BACKEND = "numpy"

forward_batch = _impl.forward_batch
loss_and_grad = _impl.loss_and_grad
train_mlp = _impl.train_mlp
