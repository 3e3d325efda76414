"""Conformer -> attributed spatial graph (typed covalent + distance-cutoff edges)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, VocabularyError
from .molkit import Conformer, MolecularGraph

EDGE_TYPES = ("single", "double", "aromatic", "spatial")


@dataclass(frozen=True)
class FeatConfig:
    elements: tuple = ("C", "N", "F", "Cl", "O")
    rbf_centers: tuple = tuple(np.linspace(0.0, 5.0, 8).tolist())
    rbf_gamma: float = 0.5
    cutoff: float = 4.0

    def __post_init__(self):
        if np.any(np.diff(self.rbf_centers) <= 0):
            raise DomainError("rbf centres must be strictly increasing")
        if self.cutoff <= 1.6 or self.rbf_gamma <= 0:
            raise DomainError("cutoff must exceed the longest bond and the rbf width must be positive")

    @property
    def node_dim(self) -> int:
        return len(self.elements) + 1

    @property
    def edge_dim(self) -> int:
        return len(EDGE_TYPES) + len(self.rbf_centers)


DEFAULT_FEATS = FeatConfig()


@dataclass
class SpatialGraph:
    node_features: np.ndarray  # (N, d_v)
    src: np.ndarray  # (E,) message source j
    dst: np.ndarray  # (E,) message target i
    edge_features: np.ndarray  # (E, d_e)

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def n_edges(self) -> int:
        return self.src.shape[0]

    def neighbors(self, i: int) -> np.ndarray:
        """Indices j with an edge j -> i."""
        return self.src[self.dst == i]


def rbf_expand(d, config: FeatConfig = DEFAULT_FEATS) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if np.any(d < 0):
        raise DomainError("distance must be nonnegative")
    c = np.asarray(config.rbf_centers)
    return np.exp(-((d[..., None] - c) ** 2) / config.rbf_gamma**2)


def node_features(graph: MolecularGraph, config: FeatConfig = DEFAULT_FEATS) -> np.ndarray:
    x = np.zeros((graph.n_atoms, config.node_dim))
    index = {el: k for k, el in enumerate(config.elements)}
    for a, (el, aromatic) in enumerate(graph.atoms):
        if el not in index:
            raise VocabularyError(f"element {el!r} not in vocabulary {config.elements}")
        x[a, index[el]] = 1.0
        x[a, -1] = float(aromatic)
    return x


def featurize(graph: MolecularGraph, conformer: Conformer, config: FeatConfig = DEFAULT_FEATS) -> SpatialGraph:
    """Edges: every covalent bond (typed by order) plus unbonded pairs closer
    than the cutoff (typed spatial), both directions, sorted by (dst, src).
    Edge feature = type one-hot + RBF expansion of the distance."""
    xyz = conformer.coords
    n = graph.n_atoms
    if xyz.shape != (n, 3):
        raise DomainError(f"coords shape {xyz.shape} does not match {n} atoms")
    x = node_features(graph, config)

    etype = np.full((n, n), -1, dtype=np.int64)
    for i, j, order in graph.bonds:
        etype[i, j] = etype[j, i] = EDGE_TYPES.index(order)
    dist = np.sqrt(((xyz[:, None, :] - xyz[None, :, :]) ** 2).sum(-1))
    spatial = (etype < 0) & (dist < config.cutoff)
    np.fill_diagonal(spatial, False)
    etype[spatial] = EDGE_TYPES.index("spatial")

    dst, src = np.nonzero(etype >= 0)  # row-major -> sorted by (dst, src)
    ef = np.zeros((dst.size, config.edge_dim))
    ef[np.arange(dst.size), etype[dst, src]] = 1.0
    ef[:, len(EDGE_TYPES):] = rbf_expand(dist[dst, src], config)
    return SpatialGraph(x, src.astype(np.int64), dst.astype(np.int64), ef)
