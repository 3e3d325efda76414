"""Conformer-ensemble classifier: edge-conditioned message passing with GRU
updates per conformer, attention pooling over the bag, sigmoid head.

All bags in a batch are packed into one disjoint graph so every message
round is a handful of dense matmuls plus one gather/scatter kernel.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import CompatibilityError, DomainError, FormatError, ShapeError, StateError
from .molkit import Conformer, ConformerBag, MolecularGraph
from .numkern import edge_messages, grad_check, edge_messages_grad, gru_backward, gru_forward, sigmoid, softmax
from .numkern.ops import BCE_CLAMP, GRU_KEYS, ParamStore, bce_loss, softmax_backward
from .spatialgraph import DEFAULT_FEATS, FeatConfig, SpatialGraph, featurize

HIDDEN = 16
ATTN_DIM = 128
ITERATIONS = 3


def param_shapes(node_dim: int = DEFAULT_FEATS.node_dim, edge_dim: int = DEFAULT_FEATS.edge_dim) -> dict:
    h = HIDDEN
    shapes = {
        "embed.W": (h, node_dim),
        "embed.b": (h,),
        "edge.W": (h * h, edge_dim),
        "edge.b": (h * h,),
    }
    for k in GRU_KEYS:
        shapes[f"gru.{k}"] = (h,) if k.startswith("b_") else (h, h)
    shapes.update({"attn.V": (ATTN_DIM, h), "attn.w": (ATTN_DIM,), "head.w": (h,), "head.b": (1,)})
    return shapes


def _fans(name: str, shape: tuple) -> tuple:
    # (fan_in, fan_out) of the linear map each weight implements
    if name in ("attn.w", "head.w"):
        return shape[0], 1
    return shape[1], shape[0]


def init_params(seed: int, node_dim: int = DEFAULT_FEATS.node_dim,
                edge_dim: int = DEFAULT_FEATS.edge_dim) -> ParamStore:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(node_dim, edge_dim).items():
        if name.split(".")[1].startswith("b"):
            params[name] = np.zeros(shape)
        else:
            fan_in, fan_out = _fans(name, shape)
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def _gru_view(params: ParamStore) -> dict:
    return {k: params[f"gru.{k}"] for k in GRU_KEYS}


def _edge_matrix(params: ParamStore) -> np.ndarray:
    # M[j, f*H + i] = A_f[i, j]; the last block f = edge_dim is the bias matrix
    W, b = params["edge.W"], params["edge.b"]
    Wt = np.concatenate([W.T, b[None, :]], axis=0).reshape(-1, HIDDEN, HIDDEN)
    return Wt.transpose(2, 0, 1).reshape(HIDDEN, -1)


# ------------------------------------------------------------------ packing

@dataclass
class PackedGraphs:
    x: np.ndarray  # (N, d_v)
    src: np.ndarray  # (E,)
    dst: np.ndarray  # (E,)
    ef: np.ndarray  # (E, d_e + 1), trailing column of ones
    conf_ptr: np.ndarray  # (C + 1,) node offsets
    bag_ptr: np.ndarray  # (B + 1,) conformer offsets

    @property
    def n_nodes(self) -> int:
        return self.x.shape[0]

    @property
    def n_bags(self) -> int:
        return self.bag_ptr.size - 1


def pack(bags: list) -> PackedGraphs:
    """Pack a list of bags, each a list of SpatialGraph, into one graph."""
    xs, srcs, dsts, efs = [], [], [], []
    conf_ptr = [0]
    bag_ptr = [0]
    offset = 0
    for graphs in bags:
        if not graphs:
            raise DomainError("cannot pack an empty bag")
        for sg in graphs:
            xs.append(sg.node_features)
            srcs.append(sg.src + offset)
            dsts.append(sg.dst + offset)
            efs.append(sg.edge_features)
            offset += sg.n_nodes
            conf_ptr.append(offset)
        bag_ptr.append(len(conf_ptr) - 1)
    ef = np.concatenate(efs, axis=0)
    ef = np.concatenate([ef, np.ones((ef.shape[0], 1))], axis=1)
    return PackedGraphs(
        np.concatenate(xs, axis=0),
        np.concatenate(srcs).astype(np.int64),
        np.concatenate(dsts).astype(np.int64),
        ef,
        np.asarray(conf_ptr, dtype=np.int64),
        np.asarray(bag_ptr, dtype=np.int64),
    )


def concat_packed(parts: list) -> PackedGraphs:
    """Join already packed bags without re-featurizing."""
    node_off = np.cumsum([0] + [p.n_nodes for p in parts])
    conf_off = np.cumsum([0] + [p.conf_ptr.size - 1 for p in parts])
    return PackedGraphs(
        np.concatenate([p.x for p in parts]),
        np.concatenate([p.src + o for p, o in zip(parts, node_off)]),
        np.concatenate([p.dst + o for p, o in zip(parts, node_off)]),
        np.concatenate([p.ef for p in parts]),
        np.concatenate([[0]] + [p.conf_ptr[1:] + o for p, o in zip(parts, node_off)]),
        np.concatenate([[0]] + [p.bag_ptr[1:] + o for p, o in zip(parts, conf_off)]),
    )


def featurize_bag(bag: ConformerBag, config: FeatConfig = DEFAULT_FEATS) -> PackedGraphs:
    return pack([[featurize(bag.graph, c, config) for c in bag.conformers]])


# ------------------------------------------------------------------ forward

@dataclass
class BagOutput:
    prob: float
    alpha: np.ndarray
    context: np.ndarray
    embeddings: np.ndarray  # (K, HIDDEN)
    cache: object = field(default=None, repr=False)


def _check_params(params: ParamStore, packed: PackedGraphs):
    d_v = packed.x.shape[1]
    d_e = packed.ef.shape[1] - 1
    for name, shape in param_shapes(d_v, d_e).items():
        if name not in params:
            raise ShapeError(f"missing parameter {name}")
        if params[name].shape != shape:
            raise ShapeError(f"{name} has shape {params[name].shape}, expected {shape}")


def encode(packed: PackedGraphs, params: ParamStore):
    """Conformer embeddings H (C, HIDDEN) and the per-round cache."""
    _check_params(params, packed)
    M = _edge_matrix(params)
    gp = _gru_view(params)
    n = packed.n_nodes
    h = packed.x @ params["embed.W"].T + params["embed.b"]
    rounds = []
    for _ in range(ITERATIONS):
        P = (h @ M).reshape(n, -1, HIDDEN)
        m = edge_messages(P, packed.ef, packed.src, packed.dst, n)
        h_new, gcache = gru_forward(m, h, gp)
        rounds.append((h, gcache))
        h = h_new
    H = np.add.reduceat(h, packed.conf_ptr[:-1], axis=0)
    return H, (M, rounds)


def attend(H: np.ndarray, params: ParamStore):
    """Attention pooling of a (K, HIDDEN) stack: returns (context, alpha, tanh act)."""
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] == 0:
        raise DomainError("attention needs at least one embedding")
    act = np.tanh(H @ params["attn.V"].T)
    alpha = softmax(act @ params["attn.w"])
    return alpha @ H, alpha, act


def forward(packed: PackedGraphs, params: ParamStore):
    """Bag probabilities (B,), list of alphas, contexts (B, HIDDEN), H, cache."""
    H, enc_cache = encode(packed, params)
    return _pool(packed, H, enc_cache, params)


def _pool(packed, H, enc_cache, params):
    probs = np.empty(packed.n_bags, dtype=H.dtype)
    contexts = np.empty((packed.n_bags, HIDDEN), dtype=H.dtype)
    alphas, acts = [], []
    for b in range(packed.n_bags):
        lo, hi = packed.bag_ptr[b], packed.bag_ptr[b + 1]
        c, alpha, act = attend(H[lo:hi], params)
        contexts[b] = c
        alphas.append(alpha)
        acts.append(act)
    logits = contexts @ params["head.w"] + params["head.b"][0]
    probs[:] = sigmoid(logits)
    cache = {"packed": packed, "H": H, "enc": enc_cache, "alphas": alphas, "acts": acts,
             "contexts": contexts, "probs": probs}
    return probs, alphas, contexts, H, cache


# ------------------------------------------------------------------ backward

def _attention_backward(H, alpha, act, g_context, params, grads):
    g_alpha = H @ g_context
    g_H = alpha[:, None] * g_context[None, :]
    g_z = softmax_backward(alpha, g_alpha)
    grads["attn.w"] += act.T @ g_z
    g_pre = (g_z[:, None] * params["attn.w"][None, :]) * (1.0 - act * act)
    grads["attn.V"] += g_pre.T @ H
    return g_H + g_pre @ params["attn.V"]


def backward(cache, labels, params: ParamStore):
    """Mean clamped-BCE loss over the packed bags and its exact gradient."""
    if cache is None:
        raise StateError("backward needs the cache of a matching forward pass")
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    packed = cache["packed"]
    probs = cache["probs"]
    B = packed.n_bags
    if labels.size != B:
        raise ShapeError(f"{labels.size} labels for {B} bags")
    loss = float(np.mean(bce_loss(probs, labels)))

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    inside = (probs >= BCE_CLAMP) & (probs <= 1.0 - BCE_CLAMP)
    g_logit = np.where(inside, probs - labels, 0.0) / B
    grads["head.w"] += g_logit @ cache["contexts"]
    grads["head.b"][0] += g_logit.sum()

    H = cache["H"]
    g_H = np.empty_like(H)
    for b in range(B):
        lo, hi = packed.bag_ptr[b], packed.bag_ptr[b + 1]
        g_c = g_logit[b] * params["head.w"]
        g_H[lo:hi] = _attention_backward(H[lo:hi], cache["alphas"][b], cache["acts"][b], g_c, params, grads)

    M, rounds = cache["enc"]
    gp = _gru_view(params)
    n = packed.n_nodes
    g_h = np.repeat(g_H, np.diff(packed.conf_ptr), axis=0)
    g_M = np.zeros_like(M)
    for h, gcache in reversed(rounds):
        g_m, g_h, g_gru = gru_backward(gcache, g_h, gp)
        for k, v in g_gru.items():
            grads[f"gru.{k}"] += v
        g_P = edge_messages_grad(g_m, packed.ef, packed.src, packed.dst, n).reshape(n, -1)
        g_M += h.T @ g_P
        g_h = g_h + g_P @ M.T
    g_Wt = g_M.reshape(HIDDEN, -1, HIDDEN).transpose(1, 2, 0)
    grads["edge.W"] += g_Wt[:-1].reshape(g_Wt.shape[0] - 1, -1).T
    grads["edge.b"] += g_Wt[-1].reshape(-1)
    grads["embed.W"] += g_h.T @ packed.x
    grads["embed.b"] += g_h.sum(axis=0)
    return loss, grads


def loss_and_grad(packed: PackedGraphs, labels, params: ParamStore):
    probs, *_, cache = forward(packed, params)
    return backward(cache, labels, params)


_ENCODER_KEYS = ("embed.", "edge.", "gru.")


def bag_loss_fn(packed: PackedGraphs, labels):
    """Closure in the form grad_check expects.

    The gradient call pins the encoder weights and output; loss-only calls
    whose encoder weights are bit-identical (attention and head probes) reuse
    that output instead of re-running message passing.
    """
    labels = np.asarray(labels, dtype=np.float64)
    pinned = {}

    def fn(params, with_grad):
        enc = {k: v for k, v in params.items() if k.startswith(_ENCODER_KEYS)}
        if with_grad:
            probs, _, _, H, cache = forward(packed, params)
            pinned.update(params={k: v.copy() for k, v in enc.items()}, H=H)
            return backward(cache, labels, params)
        if pinned and all(np.array_equal(v, pinned["params"][k]) for k, v in enc.items()):
            H = pinned["H"]
        else:
            H = encode(packed, params)[0]
        probs = _pool(packed, H, None, params)[0]
        return float(np.mean(bce_loss(probs, labels)))

    return fn


def precise_loss_fn(packed: PackedGraphs, labels):
    """Loss closure evaluated in extended precision (np.longdouble).

    Used as the finite-difference oracle for coordinates whose float64
    central difference is swamped by cancellation.
    """
    ld = np.longdouble
    wide = PackedGraphs(packed.x.astype(ld), packed.src, packed.dst, packed.ef.astype(ld),
                        packed.conf_ptr, packed.bag_ptr)
    labels = np.asarray(labels, dtype=ld)

    def fn(params):
        probs = forward(wide, {k: np.asarray(v, dtype=ld) for k, v in params.items()})[0]
        return np.mean(bce_loss(probs, labels))

    return fn


# ------------------------------------------------------------------ bag-level API

def encode_conformer(sg: SpatialGraph, params: ParamStore) -> np.ndarray:
    return encode(pack([[sg]]), params)[0][0]


def predict_packed(packed: PackedGraphs, params: ParamStore) -> list:
    probs, alphas, contexts, H, cache = forward(packed, params)
    outs = []
    for b in range(packed.n_bags):
        lo, hi = packed.bag_ptr[b], packed.bag_ptr[b + 1]
        outs.append(BagOutput(float(probs[b]), alphas[b], contexts[b], H[lo:hi]))
    if packed.n_bags == 1:
        outs[0].cache = cache
    return outs


def predict_bag(bag: ConformerBag, params: ParamStore, featconfig: FeatConfig = DEFAULT_FEATS) -> BagOutput:
    """Forward pass on one bag; the returned output carries the backward cache."""
    return predict_packed(featurize_bag(bag, featconfig), params)[0]


def backward_bag(output: BagOutput, label, params: ParamStore) -> ParamStore:
    """Gradients of bce(prob, label) for the forward pass that made ``output``."""
    if output.cache is None:
        raise StateError("output carries no forward cache")
    return backward(output.cache, [label], params)[1]


# ------------------------------------------------------------------ toy bags

def random_toy_bag(rng: np.random.Generator, n_atoms: int = 4, n_conformers: int = 2,
                   bag_id: str = "toy") -> ConformerBag:
    """Small random bag: an N-C-C-N chain plus extra atoms, random coordinates.

    Coordinates are spread over ~3 A so both bonded and spatial edges occur.
    """
    if n_atoms < 4:
        raise DomainError("toy bag needs at least four atoms for the motif")
    orders = ("single", "double", "aromatic")
    atoms = [("N", False), ("C", True), ("C", True), ("N", False)]
    bonds = [(0, 1, "single"), (1, 2, orders[rng.integers(3)]), (2, 3, "single")]
    extra = ("C", "O", "F", "Cl", "N")
    for a in range(4, n_atoms):
        atoms.append((extra[rng.integers(len(extra))], bool(rng.integers(2))))
        bonds.append((int(rng.integers(a)), a, orders[rng.integers(3)]))
    graph = MolecularGraph(atoms, bonds, (0, 1, 2, 3))
    confs = [Conformer(rng.uniform(0.0, 3.0, size=(n_atoms, 3)), float(rng.uniform(0, 5)), 0)
             for _ in range(n_conformers)]
    return ConformerBag(bag_id, graph, confs, int(rng.integers(2)))


GRADCHECK_CONFORMERS = (1, 2, 5)


def gradcheck_bags(seed: int, n_bags: int) -> list:
    """Toy bags for the full-model gradient check; K cycles through 1, 2, 5."""
    rng = np.random.default_rng(seed)
    return [random_toy_bag(rng, 4 + (i // 3) % 3, GRADCHECK_CONFORMERS[i % 3], f"gc{i}")
            for i in range(n_bags)]


def gradcheck_suite(seed: int = 0, n_bags: int = 10, param_seeds: int = 25,
                    corrupt: bool = False) -> list:
    """Relative errors of the full model, one per parameter seed.

    Parameter seed s is checked on bag s mod n_bags.  ``corrupt`` scales the
    analytic head-bias gradient by 1.1 so callers can confirm the check bites.
    """
    bags = gradcheck_bags(seed, n_bags)
    packed = [featurize_bag(b) for b in bags]
    errors = []
    for s in range(param_seeds):
        b = s % n_bags
        labels = [bags[b].bag_label]
        fn = bag_loss_fn(packed[b], labels)
        if corrupt:
            fn = _corrupted(fn)
        errors.append(grad_check(fn, init_params(seed + s),
                                 precise_fn=precise_loss_fn(packed[b], labels)))
    return errors


def _corrupted(fn):
    def wrapped(params, with_grad):
        out = fn(params, with_grad)
        if with_grad:
            loss, grads = out
            grads = dict(grads, **{"head.b": grads["head.b"] * 1.1})
            return loss, grads
        return out
    return wrapped


# ------------------------------------------------------------------ checkpoints

MAGIC = b"CMILCKPT"
CHECKPOINT_VERSION = 1
_HEAD = struct.Struct("<8sI5I")


def save_model(params: ParamStore, path, info: dict | None = None) -> None:
    """Binary checkpoint: magic, version, dims (hidden, attn, T, d_v, d_e),
    a length-prefixed JSON info blob, then length-prefixed named float64
    tensors, all little-endian."""
    d_v = params["embed.W"].shape[1]
    d_e = params["edge.W"].shape[1]
    meta = {"tool": f"confmil {__version__}"}
    meta.update(info or {})
    blob = json.dumps(meta, sort_keys=True).encode()
    out = bytearray(_HEAD.pack(MAGIC, CHECKPOINT_VERSION, HIDDEN, ATTN_DIM, ITERATIONS, d_v, d_e))
    out += struct.pack("<I", len(blob)) + blob
    out += struct.pack("<I", len(params))
    for name, arr in params.items():
        key = name.encode()
        out += struct.pack("<I", len(key)) + key
        out += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(out))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError("checkpoint is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def load_model(path, with_info: bool = False):
    with open(path, "rb") as fh:
        rd = _Reader(fh.read())
    magic, version, hidden, attn, iters, d_v, d_e = rd.unpack(_HEAD.format)
    if magic != MAGIC:
        raise FormatError(f"{path}: not a confmil checkpoint")
    if version != CHECKPOINT_VERSION:
        raise CompatibilityError(f"checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    if (hidden, attn, iters) != (HIDDEN, ATTN_DIM, ITERATIONS):
        raise CompatibilityError(f"checkpoint dims {(hidden, attn, iters)} do not match this model")
    (blob_len,) = rd.unpack("<I")
    try:
        info = json.loads(rd.take(blob_len).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError("corrupt checkpoint info block") from exc
    (count,) = rd.unpack("<I")
    params = {}
    for _ in range(count):
        (klen,) = rd.unpack("<I")
        name = rd.take(klen).decode()
        (ndim,) = rd.unpack("<I")
        shape = rd.unpack(f"<{ndim}I")
        size = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(rd.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
    if rd.pos != len(rd.data):
        raise FormatError("trailing bytes after last tensor")
    expected = param_shapes(d_v, d_e)
    if list(params) != list(expected) or any(params[k].shape != s for k, s in expected.items()):
        raise CompatibilityError("checkpoint tensors do not match the model layout")
    return (params, info) if with_info else params
