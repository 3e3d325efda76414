"""JIT versions of the kernels in _numpy_kernels; same signatures."""

import numpy as np
from numba import njit


@njit(cache=True)
def edge_messages(P, ef, src, dst, n_nodes):
    E, F = ef.shape
    H = P.shape[2]
    m = np.zeros((n_nodes, H))
    msg = np.empty(H)
    for e in range(E):
        s = src[e]
        msg[:] = 0.0
        for f in range(F):
            w = ef[e, f]
            for i in range(H):
                msg[i] += w * P[s, f, i]
        d = dst[e]
        for i in range(H):
            m[d, i] += msg[i]
    return m


@njit(cache=True)
def edge_messages_grad(gm, ef, src, dst, n_nodes):
    E, F = ef.shape
    H = gm.shape[1]
    gP = np.zeros((n_nodes, F, H))
    for e in range(E):
        s = src[e]
        d = dst[e]
        for f in range(F):
            w = ef[e, f]
            for i in range(H):
                gP[s, f, i] += w * gm[d, i]
    return gP
