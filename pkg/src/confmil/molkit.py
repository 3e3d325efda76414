"""Heavy-atom molecular graphs, torsion geometry, labels and circular fingerprints."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DomainError, GeometryError, SpecError

BOND_ORDERS = ("single", "double", "aromatic")
# bond-order contribution to valence, aromatic counted as 1.5
_VALENCE_ORDER = {"single": 1.0, "double": 2.0, "aromatic": 1.5}
VALENCE = {"C": 4, "N": 3, "O": 2, "F": 1, "Cl": 1}
ATOMIC_MASS = {"C": 12.011, "N": 14.007, "O": 15.999, "F": 18.998, "Cl": 35.453}
H_MASS = 1.008

KEY_DIHEDRAL_DEG = 1.0


@dataclass
class MolecularGraph:
    atoms: list  # [(element, aromatic)]
    bonds: list  # [(i, j, order)]
    motif: tuple  # (N, C, C, N) atom indices
    scaffold: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.atoms = [(str(el), bool(ar)) for el, ar in self.atoms]
        self.bonds = [(int(i), int(j), str(o)) for i, j, o in self.bonds]
        self.motif = tuple(int(a) for a in self.motif)
        self.validate()

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def validate(self):
        n = self.n_atoms
        if n == 0:
            raise SpecError("graph has no atoms")
        seen = set()
        for i, j, order in self.bonds:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise SpecError(f"invalid bond ({i}, {j})")
            if order not in BOND_ORDERS:
                raise SpecError(f"unknown bond order {order!r}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise SpecError(f"duplicate bond {key}")
            seen.add(key)
        if len(self.motif) != 4 or any(not 0 <= a < n for a in self.motif):
            raise SpecError(f"motif {self.motif} is not four valid atom indices")
        a, b, c, d = self.motif
        for p, q in ((a, b), (b, c), (c, d)):
            if (min(p, q), max(p, q)) not in seen:
                raise SpecError(f"motif atoms {p}-{q} are not bonded")
        if [self.atoms[k][0] for k in self.motif] != ["N", "C", "C", "N"]:
            raise SpecError("motif must be an N-C-C-N path")
        if len(self._component(0)) != n:
            raise SpecError("graph is not connected")

    def neighbors(self) -> list:
        adj = [[] for _ in self.atoms]
        for i, j, order in self.bonds:
            adj[i].append((j, order))
            adj[j].append((i, order))
        return adj

    def _component(self, start, skip_bond=None) -> set:
        adj = self.neighbors()
        seen = {start}
        stack = [start]
        while stack:
            a = stack.pop()
            for b, _ in adj[a]:
                if skip_bond is not None and {a, b} == set(skip_bond):
                    continue
                if b not in seen:
                    seen.add(b)
                    stack.append(b)
        return seen

    def bond_in_ring(self, i: int, j: int) -> bool:
        return j in self._component(i, skip_bond=(i, j))

    def heavy_degree(self) -> list:
        return [len(nb) for nb in self.neighbors()]

    def implicit_hydrogens(self) -> list:
        total = [0.0] * self.n_atoms
        for i, j, order in self.bonds:
            total[i] += _VALENCE_ORDER[order]
            total[j] += _VALENCE_ORDER[order]
        return [max(0, VALENCE[el] - int(round(t))) for (el, _), t in zip(self.atoms, total)]

    def molecular_weight(self) -> float:
        heavy = sum(ATOMIC_MASS[el] for el, _ in self.atoms)
        return heavy + H_MASS * sum(self.implicit_hydrogens())

    def rotatable_bonds(self) -> int:
        """Acyclic single bonds joining two ring atoms (the biaryl axis)."""
        ring_atom = [False] * self.n_atoms
        for i, j, _ in self.bonds:
            if self.bond_in_ring(i, j):
                ring_atom[i] = ring_atom[j] = True
        return sum(
            1
            for i, j, order in self.bonds
            if order == "single" and ring_atom[i] and ring_atom[j] and not self.bond_in_ring(i, j)
        )


@dataclass
class Conformer:
    coords: np.ndarray
    energy: float
    instance_label: int | None = None

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(self.energy):
            raise DomainError("conformer energy must be finite")


@dataclass
class ConformerBag:
    id: str
    graph: MolecularGraph
    conformers: list
    bag_label: int | None = None

    MAX_CONFORMERS = 30

    def __post_init__(self):
        if not 1 <= len(self.conformers) <= self.MAX_CONFORMERS:
            raise DomainError(f"bag {self.id} has {len(self.conformers)} conformers, need 1..30")
        for c in self.conformers:
            if c.coords.shape[0] != self.graph.n_atoms:
                raise DomainError(f"bag {self.id}: coords do not match atom count")

    @property
    def K(self) -> int:
        return len(self.conformers)


def dihedral(p1, p2, p3, p4) -> float:
    """Signed torsion angle p1-p2-p3-p4 in degrees, range (-180, 180]."""
    p1, p2, p3, p4 = (np.asarray(p, dtype=np.float64) for p in (p1, p2, p3, p4))
    b1 = p2 - p1
    b2 = p3 - p2
    b3 = p4 - p3
    nb2 = np.linalg.norm(b2)
    if nb2 < 1e-12:
        raise GeometryError("central bond has zero length")
    n1 = np.cross(b1, b2)
    n2 = np.cross(b2, b3)
    scale = nb2 * max(np.linalg.norm(b1), np.linalg.norm(b3), 1e-300)
    if np.linalg.norm(n1) < 1e-10 * scale or np.linalg.norm(n2) < 1e-10 * scale:
        raise GeometryError("outer bond is collinear with the central bond")
    y = nb2 * np.dot(b1, n2)
    x = np.dot(n1, n2)
    ang = float(np.degrees(np.arctan2(y, x)))
    return 180.0 if ang <= -180.0 else ang


def motif_dihedral(conformer: Conformer, graph: MolecularGraph) -> float:
    return dihedral(*(conformer.coords[k] for k in graph.motif))


def is_key_instance(conformer: Conformer, graph: MolecularGraph) -> bool:
    return abs(motif_dihedral(conformer, graph)) < KEY_DIHEDRAL_DEG


def bag_label(bag: ConformerBag) -> int:
    """OR of the key-instance test over the bag; fills in instance labels."""
    if not bag.conformers:
        raise DomainError(f"bag {bag.id} is empty")
    for c in bag.conformers:
        c.instance_label = int(is_key_instance(c, bag.graph))
    bag.bag_label = int(any(c.instance_label for c in bag.conformers))
    return bag.bag_label


# ---------------------------------------------------------------- fingerprints

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF
_BOND_CODE = {"single": 1, "double": 2, "aromatic": 4}


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _initial_invariant(element: str, degree: int, aromatic: bool) -> int:
    return fnv1a64(f"{element}|{degree}|{int(aromatic)}".encode())


def ecfp_ids(graph: MolecularGraph, radius: int = 2) -> set:
    """Unfolded Morgan environment identifiers up to ``radius``.

    Round 0 hashes (element, heavy degree, aromatic).  Round r hashes the
    atom's previous id with the sorted (bond code, neighbour id) pairs.  An
    environment whose bond set was already produced is dropped (lowest id
    wins within a round).
    """
    adj = graph.neighbors()
    degree = [len(nb) for nb in adj]
    ids = [_initial_invariant(el, degree[a], ar) for a, (el, ar) in enumerate(graph.atoms)]
    found = set(ids)
    envs = [frozenset() for _ in graph.atoms]
    seen_envs = set()
    for r in range(1, radius + 1):
        new_ids = []
        new_envs = []
        for a in range(graph.n_atoms):
            pairs = sorted((_BOND_CODE[order], ids[b]) for b, order in adj[a])
            payload = struct.pack("<QQ", r, ids[a])
            payload += b"".join(struct.pack("<QQ", code, nid) for code, nid in pairs)
            new_ids.append(fnv1a64(payload))
            env = set(envs[a])
            for b, _ in adj[a]:
                env |= envs[b]
                env.add((min(a, b), max(a, b)))
            new_envs.append(frozenset(env))
        for env, ident in sorted(zip(new_envs, new_ids), key=lambda t: t[1]):
            if env in seen_envs:
                continue
            seen_envs.add(env)
            found.add(ident)
        ids, envs = new_ids, new_envs
    return found


def ecfp(graph: MolecularGraph, radius: int = 2, nbits: int = 128) -> np.ndarray:
    """Folded circular fingerprint as a uint8 bit vector of length ``nbits``."""
    bits = np.zeros(nbits, dtype=np.uint8)
    for ident in ecfp_ids(graph, radius):
        bits[ident % nbits] = 1
    return bits


def tanimoto(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.count_nonzero(a | b)
    return 1.0 if union == 0 else np.count_nonzero(a & b) / union
