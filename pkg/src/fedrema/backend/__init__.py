"""Kernel backend selection.

The hot inner loops of local training (affine forward/backward, ReLU,
SGD updates) live behind a tiny kernel API with two implementations:
a compiled Cython extension and a pure-numpy fallback. The compiled one
is preferred when it was built; set ``FEDREMA_BACKEND=numpy`` or
``FEDREMA_BACKEND=compiled`` to force a choice (the latter raises if
the extension is missing).
"""

import os

from fedrema.backend import numpy_backend

_requested = os.environ.get("FEDREMA_BACKEND", "auto")

if _requested == "numpy":
    _impl = numpy_backend
elif _requested in ("auto", "compiled"):
    try:
        from fedrema.backend import _kernels as _impl
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = numpy_backend
else:
    raise ValueError(f"unknown FEDREMA_BACKEND={_requested!r}")

BACKEND = _impl.BACKEND

affine = _impl.affine
affine_param_grads = _impl.affine_param_grads
affine_input_grad = _impl.affine_input_grad
relu = _impl.relu
relu_grad = _impl.relu_grad
sgd_update = _impl.sgd_update
