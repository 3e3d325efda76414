"""Elementwise activations, softmax, clamped BCE and the GRU cell.

Arrays are float64; longdouble inputs pass through unchanged (used by the
extended-precision gradient oracle).  Batched functions treat the leading axis as the
batch axis, so a single vector and an (N, h) stack share one code path.
"""

from __future__ import annotations

from collections.abc import Mapping
from typing import Dict

import numpy as np
from scipy.special import expit

from ..errors import DomainError, ShapeError

ParamStore = Dict[str, np.ndarray]

BCE_CLAMP = 1e-7
GRU_KEYS = ("W_r", "U_r", "b_r", "W_z", "U_z", "b_z", "W_n", "U_n", "b_n")


def _float(a):
    # keeps float64/longdouble inputs as they are; anything else becomes float64
    a = np.asarray(a)
    return a if a.dtype.kind == "f" else a.astype(np.float64)


def sigmoid(x):
    return expit(_float(x))


def softmax(z) -> np.ndarray:
    """Max-shifted softmax of a 1-D score vector."""
    z = _float(z)
    if z.ndim != 1:
        raise ShapeError(f"softmax expects a vector, got shape {z.shape}")
    if z.size == 0:
        raise DomainError("softmax of an empty vector")
    if not np.all(np.isfinite(z)):
        raise DomainError("softmax input must be finite")
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_backward(alpha: np.ndarray, g_alpha: np.ndarray) -> np.ndarray:
    # J^T g for J = diag(a) - a a^T
    return alpha * (g_alpha - np.dot(alpha, g_alpha))


def _check_label(y):
    y = _float(y)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DomainError(f"labels must be 0 or 1, got {y}")
    return y


def bce_loss(p, y):
    """Binary cross-entropy with p clamped into [1e-7, 1 - 1e-7]."""
    y = _check_label(y)
    pc = np.clip(_float(p), BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    return loss[()]


def bce_grad(p, y):
    """d bce_loss / dp; zero wherever the clamp is active."""
    y = _check_label(y)
    p = _float(p)
    inside = (p >= BCE_CLAMP) & (p <= 1.0 - BCE_CLAMP)
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    g = np.where(inside, -y / pc + (1.0 - y) / (1.0 - pc), 0.0)
    return g[()]


def _gru_params(params: Mapping[str, np.ndarray], hidden: int):
    missing = [k for k in GRU_KEYS if k not in params]
    if missing:
        raise ShapeError(f"GRU params missing {missing}")
    for k in GRU_KEYS:
        want = (hidden,) if k.startswith("b_") else (hidden, hidden)
        if params[k].shape != want:
            raise ShapeError(f"GRU param {k} has shape {params[k].shape}, expected {want}")
    return [params[k] for k in GRU_KEYS]


def gru_forward(x: np.ndarray, h: np.ndarray, params: Mapping[str, np.ndarray]):
    """GRU update for one vector or a stack of row vectors.

    r = sig(W_r x + U_r h + b_r), z = sig(W_z x + U_z h + b_z),
    n = tanh(W_n x + r * (U_n h + b_n)), h' = (1 - z) * n + z * h.

    Returns (h', cache) where cache feeds gru_backward.
    """
    x = _float(x)
    h = _float(h)
    if x.shape != h.shape:
        raise ShapeError(f"GRU input {x.shape} and state {h.shape} differ")
    W_r, U_r, b_r, W_z, U_z, b_z, W_n, U_n, b_n = _gru_params(params, h.shape[-1])
    # one matmul per operand instead of six small ones
    k = h.shape[-1]
    ax = x @ np.concatenate((W_r, W_z, W_n)).T
    ah = h @ np.concatenate((U_r, U_z, U_n)).T + np.concatenate((b_r, b_z, b_n))
    rz = expit(ax[..., :2 * k] + ah[..., :2 * k])
    r, z = rz[..., :k], rz[..., k:]
    u = ah[..., 2 * k:]
    n = np.tanh(ax[..., 2 * k:] + r * u)
    h_new = (1.0 - z) * n + z * h
    return h_new, (x, h, r, z, u, n)


def gru_cell(x, h, params: Mapping[str, np.ndarray]) -> np.ndarray:
    return gru_forward(x, h, params)[0]


def gru_backward(cache, g_out: np.ndarray, params: Mapping[str, np.ndarray]):
    """Vector-Jacobian product of gru_forward.

    Returns (g_x, g_h, grads) with grads keyed like GRU_KEYS.  Gradients of
    the weights are summed over the batch axis.
    """
    x, h, r, z, u, n = cache
    W_r, U_r, _, W_z, U_z, _, W_n, U_n, _ = _gru_params(params, h.shape[-1])
    x2 = np.atleast_2d(x)
    h2 = np.atleast_2d(h)
    g = np.atleast_2d(g_out)
    r, z, u, n = (np.atleast_2d(a) for a in (r, z, u, n))

    g_n = g * (1.0 - z)
    g_z = g * (h2 - n)
    g_h = g * z
    g_an = g_n * (1.0 - n * n)
    g_r = g_an * u
    g_u = g_an * r
    g_az = g_z * z * (1.0 - z)
    g_ar = g_r * r * (1.0 - r)

    g_x = g_an @ W_n + g_az @ W_z + g_ar @ W_r
    g_h = g_h + g_u @ U_n + g_az @ U_z + g_ar @ U_r
    grads = {
        "W_r": g_ar.T @ x2,
        "U_r": g_ar.T @ h2,
        "b_r": g_ar.sum(axis=0),
        "W_z": g_az.T @ x2,
        "U_z": g_az.T @ h2,
        "b_z": g_az.sum(axis=0),
        "W_n": g_an.T @ x2,
        "U_n": g_u.T @ h2,
        "b_n": g_u.sum(axis=0),
    }
    if np.ndim(g_out) == 1:
        g_x, g_h = g_x[0], g_h[0]
    return g_x, g_h, grads
