"""Backend dispatch for the hot elementwise kernels.

Prefers the compiled Cython module and falls back to the numpy
implementation when the extension is absent. `INFREG_KERNELS=numpy` or
`INFREG_KERNELS=cython` forces a backend (the latter raises if the
extension was not built). Both backends share signatures and, on one
platform, produce matching results to machine precision.
"""

import os

_forced = os.environ.get("INFREG_KERNELS", "").strip().lower()
if _forced not in ("", "numpy", "cython"):
    raise ValueError(
        f"INFREG_KERNELS must be 'numpy' or 'cython', got {_forced!r}"
    )

if _forced == "numpy":
    from infreg._kernels import _pykernels as _impl

    BACKEND = "numpy"
else:
    try:
        from infreg._kernels import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        if _forced == "cython":
            raise
        from infreg._kernels import _pykernels as _impl  # type: ignore[no-redef]

        BACKEND = "numpy"

tanh_fwd = _impl.tanh_fwd
sigmoid_fwd = _impl.sigmoid_fwd
relu_fwd = _impl.relu_fwd
tanh_bwd_acc = _impl.tanh_bwd_acc
sigmoid_bwd_acc = _impl.sigmoid_bwd_acc
relu_bwd_acc = _impl.relu_bwd_acc
adam_update = _impl.adam_update

__all__ = [
    "BACKEND",
    "tanh_fwd",
    "sigmoid_fwd",
    "relu_fwd",
    "tanh_bwd_acc",
    "sigmoid_bwd_acc",
    "relu_bwd_acc",
    "adam_update",
]
