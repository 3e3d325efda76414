"""Backend dispatch for the hot message-passing kernels.

numba is used when importable unless ``CONFMIL_DISABLE_NUMBA`` is set to a
non-empty value other than ``0``; otherwise the numpy/scipy path runs.
"""

import os

import numpy as np

from . import _numpy_kernels

_disabled = os.environ.get("CONFMIL_DISABLE_NUMBA", "") not in ("", "0")

_impl = _numpy_kernels
BACKEND = "numpy"
if not _disabled:
    try:
        from . import _numba_kernels
    except ImportError:  # numba missing
        pass
    else:
        _impl = _numba_kernels
        BACKEND = "numba"


def _pick(*arrays):
    # the JIT kernels are compiled for float64 only
    if all(a.dtype == np.float64 for a in arrays):
        return _impl
    return _numpy_kernels


def edge_messages(P, ef, src, dst, n_nodes):
    """Sum edge-conditioned messages into destination nodes.

    P: (N, F, H) per-node projections, ef: (E, F) edge coefficients,
    src/dst: (E,) int64.  Returns m of shape (n_nodes, H).
    """
    return _pick(P, ef).edge_messages(
        np.ascontiguousarray(P), np.ascontiguousarray(ef), src, dst, int(n_nodes)
    )


def edge_messages_grad(gm, ef, src, dst, n_nodes):
    """Gradient of edge_messages with respect to P, shape (n_nodes, F, H)."""
    return _pick(gm, ef).edge_messages_grad(
        np.ascontiguousarray(gm), np.ascontiguousarray(ef), src, dst, int(n_nodes)
    )
