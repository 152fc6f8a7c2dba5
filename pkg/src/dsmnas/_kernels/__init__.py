"""Hot kernels with a compiled backend and a numpy fallback.

The compiled module is used when it was built and ``DSMNAS_PURE_PYTHON`` is
unset. Both backends expose the same functions; ``BACKEND`` names the active
one.
"""

import os

from . import _pykernels

if os.environ.get("DSMNAS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.BACKEND
hamming_rows = _impl.hamming_rows
hamming_pairs = _impl.hamming_pairs
additive_scores = _impl.additive_scores
lstm_gates_forward = _impl.lstm_gates_forward
lstm_gates_backward = _impl.lstm_gates_backward


def backends():
    """Modules for every backend available in this install, keyed by name."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found
