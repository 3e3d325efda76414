"""Reference implementations of the message-passing scatter/gather kernels."""

import numpy as np
import scipy.sparse as sp


def _incidence(index, n_rows, dtype):
    n_edges = index.shape[0]
    return sp.csr_matrix(
        (np.ones(n_edges, dtype=dtype), (index, np.arange(n_edges))), shape=(n_rows, n_edges)
    )


def edge_messages(P, ef, src, dst, n_nodes):
    # msg_e[i] = sum_f ef[e, f] * P[src_e, f, i];  m[n] = sum_{dst_e = n} msg_e
    msg = np.einsum("ef,efi->ei", ef, P[src])
    return np.asarray(_incidence(dst, n_nodes, msg.dtype) @ msg)


def edge_messages_grad(gm, ef, src, dst, n_nodes):
    # gP[n, f, i] = sum_{src_e = n} ef[e, f] * gm[dst_e, i]
    outer = ef[:, :, None] * gm[dst][:, None, :]
    E, F, H = outer.shape
    g = _incidence(src, n_nodes, outer.dtype) @ outer.reshape(E, F * H)
    return np.asarray(g).reshape(n_nodes, F, H)
