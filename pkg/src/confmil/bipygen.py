"""Synthetic bipyridine conformer-ensemble dataset.

Each molecule is a 2,2'-bipyridine core with substituents drawn from a small
alphabet.  The only conformational degree of freedom is the inter-ring
torsion (N1-C2-C2'-N1').  Conformers are drawn from a 2-degree torsion grid
with Boltzmann weights of a surrogate torsion potential, deduplicated into
5-degree bins, embedded in 3D and labelled from their measured dihedral.

Random streams: molecule ``i`` of generation attempt ``a`` draws from
``numpy.random.Generator(PCG64(SeedSequence(seed, spawn_key=(a, i))))``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CompatibilityError, FormatError, GenerationError, SpecError
from .molkit import Conformer, ConformerBag, MolecularGraph, bag_label, motif_dihedral

FORMAT_NAME = "confmil-bags"
FORMAT_VERSION = 1

AROMATIC_BOND = 1.39  # ring bond and hexagon circumradius
INTER_RING_BOND = 1.48
SUBSTITUENT_BOND = 1.50

TEMPLATES = ("plain", "ortho", "fused-cis", "fused-trans")
SUBSTITUENTS = ("C1", "C2", "F", "Cl", "O")
RING_POSITIONS = (3, 4, 5, 6)
ORTHO_BULK = {"F": 1, "O": 2, "C1": 2, "Cl": 3, "C2": 3}
_SUB_ATOMS = {"C1": ["C"], "C2": ["C", "C"], "F": ["F"], "Cl": ["Cl"], "O": ["O"]}

# ring atom order: C2, N1, C6, C5, C4, C3 -> local indices 0..5
_POS_TO_LOCAL = {3: 5, 4: 4, 5: 3, 6: 2}
_RING_A_ANGLES = np.radians([0.0, 60.0, 120.0, 180.0, 240.0, 300.0])
_RING_B_ANGLES = np.radians([180.0, 120.0, 60.0, 0.0, -60.0, -120.0])
_FIXED_PHI = {"fused-cis": 0.0, "fused-trans": 180.0}


@dataclass(frozen=True)
class ScaffoldSpec:
    template: str = "plain"
    substituents: tuple = ()  # (("A", 4), "C1"), ...

    def __post_init__(self):
        if self.template not in TEMPLATES:
            raise SpecError(f"unknown template {self.template!r}")
        subs = tuple(sorted(((str(r), int(p)), s) for (r, p), s in self.substituents))
        object.__setattr__(self, "substituents", subs)
        seen = set()
        for (ring, pos), sym in subs:
            if ring not in ("A", "B") or pos not in RING_POSITIONS:
                raise SpecError(f"invalid ring position {ring}{pos}")
            if sym not in SUBSTITUENTS:
                raise SpecError(f"unknown substituent {sym!r}")
            if (ring, pos) in seen:
                raise SpecError(f"position {ring}{pos} substituted twice")
            seen.add((ring, pos))
        ortho = {ring for (ring, pos), _ in subs if pos == 3}
        if self.template == "plain" and ortho:
            raise SpecError("plain template takes no ortho (3/3') substituents")
        if self.template == "ortho" and not ortho:
            raise SpecError("ortho template needs at least one 3/3' substituent")
        if self.template == "fused-cis" and ortho:
            raise SpecError("fused-cis bridge occupies both 3 positions")
        if self.template == "fused-trans" and "A" in ortho:
            raise SpecError("fused-trans bridge occupies position A3")

    @property
    def rigid(self) -> bool:
        return self.template in _FIXED_PHI

    @property
    def rotatable_bonds(self) -> int:
        return 0 if self.rigid else 1

    def ortho_bulk(self) -> int:
        return sum(ORTHO_BULK[s] for (_, pos), s in self.substituents if pos == 3)


@dataclass(frozen=True)
class TorsionPotential:
    k_planar: float = 20.0
    s_steric: float = 0.5
    w_steric: float = 30.0

    def __post_init__(self):
        if min(self.k_planar, self.s_steric, self.w_steric) < 0:
            raise SpecError("torsion potential terms must be nonnegative")


@dataclass
class GeneratorConfig:
    seed: int = 7
    n_molecules: int = 1157
    max_conformers: int = 30
    kT: float = 0.6
    grid_step: float = 2.0
    dedupe_bin: float = 5.0
    balance: tuple = (0.25, 0.45)
    k_planar: float = 20.0
    w_steric: float = 30.0
    # s_steric indexed by total ortho bulk (last entry reused above the table)
    steric_by_bulk: tuple = (0.5, 1.0, 10.0, 12.0, 14.0, 16.0, 18.0)
    rigid_fraction: float = 0.01
    ortho_empty_prob: float = 0.5
    other_empty_prob: float = 0.45
    max_attempts: int = 8

    def __post_init__(self):
        if not 1 <= self.max_conformers <= 30:
            raise SpecError("max_conformers must be in 1..30")
        if self.n_molecules < 1:
            raise SpecError("n_molecules must be positive")
        grid = torsion_grid(self.grid_step)
        if not np.any(grid == 0.0):
            raise SpecError("torsion grid must contain 0 degrees")
        if (360.0 / self.dedupe_bin) % 1 != 0:
            raise SpecError("dedupe_bin must divide 360")
        lo, hi = self.balance
        if not 0.0 <= lo <= hi <= 1.0:
            raise SpecError(f"invalid balance window {self.balance}")
        self.balance = (float(lo), float(hi))
        self.steric_by_bulk = tuple(float(s) for s in self.steric_by_bulk)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["balance"] = list(self.balance)
        d["steric_by_bulk"] = list(self.steric_by_bulk)
        return d

    def potential_for(self, spec: ScaffoldSpec) -> TorsionPotential:
        table = self.steric_by_bulk
        s = table[min(spec.ortho_bulk(), len(table) - 1)]
        return TorsionPotential(self.k_planar, s, self.w_steric)


@dataclass
class DatasetStats:
    properties: dict = field(default_factory=dict)  # name -> (min, max, mean, std)
    n_positive: int = 0
    n_negative: int = 0

    @property
    def n_molecules(self) -> int:
        return self.n_positive + self.n_negative

    def lines(self) -> list:
        out = [f"n_molecules={self.n_molecules}", f"n_positive={self.n_positive}",
               f"n_negative={self.n_negative}"]
        for name, vals in self.properties.items():
            for tag, v in zip(("min", "max", "mean", "std"), vals):
                out.append(f"{name}.{tag}={v:.4f}")
        return out


# ------------------------------------------------------------------ topology

def enumerate_scaffold(spec: ScaffoldSpec) -> MolecularGraph:
    """Heavy-atom graph for a scaffold; motif is N1-C2-C2'-N1' = (1, 0, 6, 7)."""
    atoms = []
    bonds = []
    for ring in range(2):
        off = 6 * ring
        atoms += [("C", True), ("N", True)] + [("C", True)] * 4
        bonds += [(off + k, off + (k + 1) % 6, "aromatic") for k in range(6)]
    bonds.append((0, 6, "single"))
    if spec.rigid:
        b1, b2 = len(atoms), len(atoms) + 1
        atoms += [("C", False), ("C", False)]
        partner = 11 if spec.template == "fused-cis" else 7
        bonds += [(5, b1, "single"), (b1, b2, "double"), (b2, partner, "single")]
    for (ring, pos), sym in spec.substituents:
        anchor = (0 if ring == "A" else 6) + _POS_TO_LOCAL[pos]
        prev = anchor
        for el in _SUB_ATOMS[sym]:
            atoms.append((el, False))
            bonds.append((prev, len(atoms) - 1, "single"))
            prev = len(atoms) - 1
    graph = MolecularGraph(atoms, bonds, (1, 0, 6, 7), scaffold=spec)
    if not 10 <= graph.n_atoms <= 32:
        raise SpecError(f"scaffold has {graph.n_atoms} heavy atoms, outside [10, 32]")
    return graph


# ------------------------------------------------------------------ energetics

def torsion_energy(phi, pot: TorsionPotential):
    """Surrogate strain energy (kcal/mol) at inter-ring torsion ``phi`` (degrees)."""
    phi = np.asarray(phi, dtype=np.float64)
    planar = pot.k_planar * (1.0 - np.cos(np.radians(2.0 * phi))) / 2.0
    if pot.w_steric > 0:
        steric = pot.s_steric * np.exp(-((phi / pot.w_steric) ** 2))
    else:
        steric = np.where(phi == 0.0, pot.s_steric, 0.0)
    e = planar + steric
    return float(e) if e.ndim == 0 else e


def torsion_grid(step: float) -> np.ndarray:
    """Grid over (-180, 180] that contains 0 exactly."""
    k = int(math.floor(180.0 / step + 1e-9))
    grid = step * np.arange(-k, k + 1, dtype=np.float64)
    return grid[grid > -180.0]


# ------------------------------------------------------------------ geometry

def _rot_x(theta_deg: float) -> np.ndarray:
    t = math.radians(theta_deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def embed_conformer(graph: MolecularGraph, phi: float, pot: TorsionPotential | None = None) -> Conformer:
    """3D coordinates with the motif dihedral equal to ``phi``.

    Ring A lies in the xy-plane with C2 at the origin; the inter-ring bond
    runs along +x and ring B is rotated about it by ``phi``.
    """
    spec = graph.scaffold
    if not isinstance(spec, ScaffoldSpec):
        raise SpecError("embed_conformer needs a graph built by enumerate_scaffold")
    if not -180.0 < phi <= 180.0:
        raise SpecError(f"phi={phi} outside (-180, 180]")
    if spec.rigid and abs(phi - _FIXED_PHI[spec.template]) > 1e-9:
        raise SpecError(f"{spec.template} only admits phi={_FIXED_PHI[spec.template]}")
    pot = pot if pot is not None else GeneratorConfig().potential_for(spec)

    R = AROMATIC_BOND
    coords = np.zeros((graph.n_atoms, 3))
    centre_a = np.array([-R, 0.0, 0.0])
    centre_b = np.array([INTER_RING_BOND + R, 0.0, 0.0])
    coords[0:6, 0] = centre_a[0] + R * np.cos(_RING_A_ANGLES)
    coords[0:6, 1] = R * np.sin(_RING_A_ANGLES)
    local_b = np.zeros((6, 3))
    local_b[:, 0] = centre_b[0] + R * np.cos(_RING_B_ANGLES)
    local_b[:, 1] = R * np.sin(_RING_B_ANGLES)
    rot = _rot_x(phi)
    coords[6:12] = local_b @ rot.T

    def outward(atom):
        centre = centre_a if atom < 6 else centre_b @ rot.T
        d = coords[atom] - centre
        return d / np.linalg.norm(d)

    nxt = 12
    if spec.rigid:
        partner = 11 if spec.template == "fused-cis" else 7
        coords[nxt] = coords[5] + R * outward(5)
        coords[nxt + 1] = coords[partner] + R * outward(partner)
        nxt += 2
    for (ring, pos), sym in spec.substituents:
        anchor = (0 if ring == "A" else 6) + _POS_TO_LOCAL[pos]
        u = outward(anchor)
        for k in range(len(_SUB_ATOMS[sym])):
            coords[nxt] = coords[anchor] + SUBSTITUENT_BOND * (k + 1) * u
            nxt += 1
    return Conformer(coords, torsion_energy(phi, pot))


# ------------------------------------------------------------------ sampling

def _bin_representatives(phis: np.ndarray, bin_width: float) -> list:
    """Keep one draw per torsion bin: the one closest to the bin centre.

    Bins are centred on multiples of ``bin_width`` and wrap at 180; ties go
    to the earlier draw.  Output follows the order bins were first hit.
    """
    n_bins = int(round(360.0 / bin_width))
    kept = {}
    order = []
    for draw, phi in enumerate(phis):
        b = int(np.round(phi / bin_width)) % n_bins
        centre = b * bin_width
        dist = abs((phi - centre + 180.0) % 360.0 - 180.0)
        if b not in kept:
            order.append(b)
            kept[b] = (dist, draw, phi)
        elif dist < kept[b][0]:
            kept[b] = (dist, draw, phi)
    return [kept[b][2] for b in order]


def boltzmann_weights(pot: TorsionPotential, config: GeneratorConfig):
    grid = torsion_grid(config.grid_step)
    e = torsion_energy(grid, pot)
    w = np.exp(-(e - e.min()) / config.kT)
    return grid, w / w.sum()


def sample_ensemble(graph: MolecularGraph, pot: TorsionPotential, config: GeneratorConfig,
                    rng: np.random.Generator, bag_id: str = "bag") -> ConformerBag:
    """Draw up to ``max_conformers`` grid torsions without replacement.

    Draw probabilities are proportional to exp(-E/kT).  Conformer order is
    the order in which their bins were first drawn.
    """
    spec = graph.scaffold
    if spec is not None and spec.rigid:
        phis = [_FIXED_PHI[spec.template]]
    else:
        grid, p = boltzmann_weights(pot, config)
        size = min(config.max_conformers, int(np.count_nonzero(p)))
        idx = rng.choice(grid.size, size=size, replace=False, p=p)
        phis = _bin_representatives(grid[idx], config.dedupe_bin)
    confs = [embed_conformer(graph, float(phi), pot) for phi in phis]
    bag = ConformerBag(bag_id, graph, confs)
    bag_label(bag)
    return bag


# ------------------------------------------------------------------ dataset

def draw_scaffold(rng: np.random.Generator, config: GeneratorConfig) -> ScaffoldSpec:
    def pick(p_empty):
        if rng.random() < p_empty:
            return None
        return SUBSTITUENTS[rng.integers(len(SUBSTITUENTS))]

    if rng.random() < config.rigid_fraction:
        template = "fused-cis" if rng.random() < 0.5 else "fused-trans"
    else:
        template = None
    subs = []
    for ring in ("A", "B"):
        for pos in RING_POSITIONS:
            if pos == 3:
                if template == "fused-cis" or (template == "fused-trans" and ring == "A"):
                    continue
                sym = pick(config.ortho_empty_prob)
            else:
                sym = pick(config.other_empty_prob)
            if sym is not None:
                subs.append(((ring, pos), sym))
    if template is None:
        template = "ortho" if any(pos == 3 for (_, pos), _ in subs) else "plain"
    return ScaffoldSpec(template, tuple(subs))


def _molecule_rng(seed: int, attempt: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(attempt, index))))


def generate_molecule(config: GeneratorConfig, attempt: int, index: int) -> ConformerBag:
    rng = _molecule_rng(config.seed, attempt, index)
    spec = draw_scaffold(rng, config)
    graph = enumerate_scaffold(spec)
    return sample_ensemble(graph, config.potential_for(spec), config, rng, bag_id=f"bipy-{index:05d}")


def generate_dataset(config: GeneratorConfig):
    """Generate ``n_molecules`` bags whose positive fraction is in ``config.balance``.

    Retries with fresh attempt streams; raises GenerationError when every
    attempt misses the window.
    """
    lo, hi = config.balance
    tried = []
    for attempt in range(config.max_attempts):
        bags = [generate_molecule(config, attempt, i) for i in range(config.n_molecules)]
        frac = sum(b.bag_label for b in bags) / len(bags)
        if lo <= frac <= hi:
            return bags, compute_stats(bags)
        tried.append(round(frac, 4))
    raise GenerationError(
        f"positive fraction outside [{lo}, {hi}] after {config.max_attempts} attempts; "
        f"observed fractions {tried}"
    )


def compute_stats(bags) -> DatasetStats:
    props = {
        "conformers": [b.K for b in bags],
        "heavy_atoms": [b.graph.n_atoms for b in bags],
        "molecular_weight": [b.graph.molecular_weight() for b in bags],
        "rotatable_bonds": [b.graph.rotatable_bonds() for b in bags],
    }
    stats = DatasetStats()
    for name, vals in props.items():
        v = np.asarray(vals, dtype=np.float64)
        stats.properties[name] = (float(v.min()), float(v.max()), float(v.mean()), float(v.std()))
    stats.n_positive = sum(1 for b in bags if b.bag_label == 1)
    stats.n_negative = len(bags) - stats.n_positive
    return stats


# ------------------------------------------------------------------ file format

def _r9(x: float) -> float:
    return float(f"{x:.9g}")


def bag_to_record(bag: ConformerBag) -> dict:
    g = bag.graph
    return {
        "id": bag.id,
        "atoms": [[el, ar] for el, ar in g.atoms],
        "bonds": [[i, j, o] for i, j, o in g.bonds],
        "motif": list(g.motif),
        "conformers": [
            {
                "coords": [[_r9(v) for v in row] for row in c.coords.tolist()],
                "energy": _r9(c.energy),
                "instance_label": int(c.instance_label),
            }
            for c in bag.conformers
        ],
        "bag_label": int(bag.bag_label),
    }


def record_to_bag(rec: dict) -> ConformerBag:
    try:
        graph = MolecularGraph(rec["atoms"], rec["bonds"], rec["motif"])
        confs = [
            Conformer(np.array(c["coords"], dtype=np.float64), float(c["energy"]), int(c["instance_label"]))
            for c in rec["conformers"]
        ]
        return ConformerBag(str(rec["id"]), graph, confs, int(rec["bag_label"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed bag record: {exc}") from exc


def write_dataset(path, bags, header: dict) -> None:
    head = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "tool": f"confmil {__version__}"}
    head.update(header)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(head, sort_keys=True) + "\n")
        for bag in bags:
            fh.write(json.dumps(bag_to_record(bag), separators=(",", ":")) + "\n")


def read_dataset(path):
    """Returns (header, bags)."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: bad header line") from exc
        if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
            raise FormatError(f"{path}: not a {FORMAT_NAME} file")
        if header.get("version") != FORMAT_VERSION:
            raise CompatibilityError(f"{path}: unsupported format version {header.get('version')}")
        bags = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON") from exc
            bags.append(record_to_bag(rec))
    return header, bags


def recheck_labels(bag: ConformerBag) -> bool:
    """True when stored labels agree with dihedrals recomputed from coordinates."""
    inst = [int(abs(motif_dihedral(c, bag.graph)) < 1.0) for c in bag.conformers]
    return inst == [c.instance_label for c in bag.conformers] and bag.bag_label == int(any(inst))
