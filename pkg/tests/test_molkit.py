import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from confmil.errors import DomainError, GeometryError, SpecError
from confmil.molkit import (
    Conformer,
    ConformerBag,
    MolecularGraph,
    bag_label,
    dihedral,
    ecfp,
    ecfp_ids,
    fnv1a64,
    is_key_instance,
    tanimoto,
)

from oracles import dihedral_acos


def chain_graph():
    return MolecularGraph([("N", False), ("C", True), ("C", True), ("N", False)],
                          [(0, 1, "single"), (1, 2, "single"), (2, 3, "single")], (0, 1, 2, 3))


def torsion_coords(phi_deg):
    t = np.radians(phi_deg)
    return np.array([[1.0, 0, 0], [0, 0, 0], [0, 1.0, 0], [np.cos(t), 1.0, -np.sin(t)]])


# ---------------------------------------------------------------- dihedral

def test_dihedral_examples():
    assert dihedral((1, 0, 0), (0, 0, 0), (0, 1, 0), (1, 1, 0)) == pytest.approx(0.0, abs=1e-12)
    assert dihedral((1, 0, 0), (0, 0, 0), (0, 1, 0), (-1, 1, 0)) == 180.0
    assert abs(dihedral((1, 0, 0), (0, 0, 0), (0, 1, 0), (0, 1, 1))) == pytest.approx(90.0)


def test_dihedral_range_maps_minus_180():
    pts = torsion_coords(180.0)
    pts[3, 2] = -1e-300
    assert dihedral(*pts) == 180.0


@pytest.mark.parametrize("pts", [
    [(1, 0, 0), (0, 0, 0), (0, 0, 0), (1, 1, 0)],
    [(0, 2, 0), (0, 0, 0), (0, 1, 0), (1, 1, 0)],
    [(1, 0, 0), (0, 0, 0), (0, 1, 0), (0, 3, 0)],
])
def test_dihedral_degenerate(pts):
    with pytest.raises(GeometryError):
        dihedral(*pts)


@given(st.floats(-179.0, 179.0))
def test_dihedral_matches_acos_oracle(phi):
    pts = torsion_coords(phi)
    ours = dihedral(*pts)
    assert ours == pytest.approx(dihedral_acos(*pts.tolist()), abs=1e-6)
    assert ours == pytest.approx(phi, abs=1e-9)


@given(st.floats(-179.0, 179.0), st.integers(0, 2**32 - 1))
def test_dihedral_rigid_motion_invariance(phi, seed):
    rng = np.random.default_rng(seed)
    pts = torsion_coords(phi)
    R = Rotation.random(random_state=seed).as_matrix()
    moved = pts @ R.T + rng.normal(0, 5, 3)
    assert dihedral(*moved) == pytest.approx(dihedral(*pts), abs=1e-9)


@given(st.floats(-179.0, 179.0))
def test_dihedral_reversal_and_mirror(phi):
    pts = torsion_coords(phi)
    # walking the path backwards keeps the sense of rotation; a mirror image flips it
    assert dihedral(*pts[::-1]) == pytest.approx(dihedral(*pts), abs=1e-9)
    mirrored = pts * np.array([1.0, 1.0, -1.0])
    assert dihedral(*mirrored) == pytest.approx(-dihedral(*pts), abs=1e-9)


# ---------------------------------------------------------------- labels

@pytest.mark.parametrize("phi,key", [(0.0, True), (0.99, True), (-0.99, True), (1.0, False),
                                     (-1.0, False), (179.0, False)])
def test_key_instance_threshold(phi, key):
    assert is_key_instance(Conformer(torsion_coords(phi), 0.0), chain_graph()) is key


@pytest.mark.parametrize("phis,label", [([90.0, 45.0, 0.0], 1), ([90.0, 45.0, 30.0], 0), ([0.0], 1)])
def test_bag_label_is_or(phis, label):
    bag = ConformerBag("b", chain_graph(), [Conformer(torsion_coords(p), 0.0) for p in phis])
    assert bag_label(bag) == label
    assert [c.instance_label for c in bag.conformers] == [int(abs(p) < 1) for p in phis]


def test_bag_size_limits():
    g = chain_graph()
    with pytest.raises(DomainError):
        ConformerBag("e", g, [])
    with pytest.raises(DomainError):
        ConformerBag("big", g, [Conformer(torsion_coords(10.0), 0.0)] * 31)


# ---------------------------------------------------------------- graph validation

def test_graph_validation():
    atoms = [("N", False), ("C", True), ("C", True), ("N", False)]
    with pytest.raises(SpecError):
        MolecularGraph(atoms, [(0, 1, "single"), (1, 2, "single")], (0, 1, 2, 3))  # motif unbonded
    with pytest.raises(SpecError):
        MolecularGraph(atoms + [("C", False)], [(0, 1, "single"), (1, 2, "single"), (2, 3, "single")],
                       (0, 1, 2, 3))  # disconnected
    with pytest.raises(SpecError):
        MolecularGraph(atoms, [(0, 0, "single")], (0, 1, 2, 3))
    with pytest.raises(SpecError):
        MolecularGraph(atoms, [(0, 1, "triple"), (1, 2, "single"), (2, 3, "single")], (0, 1, 2, 3))


def test_molecular_weight_of_methylamine_like_chain():
    g = MolecularGraph([("N", False), ("C", False), ("C", False), ("N", False)],
                       [(0, 1, "single"), (1, 2, "single"), (2, 3, "single")], (0, 1, 2, 3))
    # ethylenediamine C2H8N2
    assert g.molecular_weight() == pytest.approx(2 * 12.011 + 2 * 14.007 + 8 * 1.008)


# ---------------------------------------------------------------- fingerprints

def test_fnv1a_reference_values():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C


def bipy_like():
    from confmil.bipygen import ScaffoldSpec, enumerate_scaffold

    return enumerate_scaffold(ScaffoldSpec("plain", ((("A", 4), "C1"),)))


def relabel(graph, perm):
    inv = np.argsort(perm)  # new index of old atom a is inv[a]
    atoms = [graph.atoms[p] for p in perm]
    bonds = [(int(inv[i]), int(inv[j]), o) for i, j, o in graph.bonds]
    return MolecularGraph(atoms, bonds, tuple(int(inv[a]) for a in graph.motif))


def test_ecfp_deterministic_and_length():
    g = bipy_like()
    fp = ecfp(g)
    assert fp.shape == (128,) and fp.dtype == np.uint8
    assert np.array_equal(fp, ecfp(bipy_like()))


@given(st.permutations(list(range(13))))
def test_ecfp_isomorphism_invariance(perm):
    g = bipy_like()
    assert ecfp_ids(relabel(g, perm)) == ecfp_ids(g)


def test_ecfp_hand_enumerated_environments():
    # chain N-C-C-N.  radius 0: {N, C} types.  radius 1: N(C) and C(N,C), two new ids.
    # radius 2: an N's bond set {N-C, C-C} repeats the radius-1 C environment and
    # is dropped; both C atoms now cover all three bonds and share one new id.
    g = chain_graph()
    ids = ecfp_ids(g, 2)
    r0 = ecfp_ids(g, 0)
    r1 = ecfp_ids(g, 1)
    assert len(r0) == 2
    assert len(r1) == 4
    assert len(ids) == 5


def test_ecfp_substituent_changes_similarity():
    from confmil.bipygen import ScaffoldSpec, enumerate_scaffold

    a = enumerate_scaffold(ScaffoldSpec("plain", ()))
    b = enumerate_scaffold(ScaffoldSpec("plain", ((("A", 5), "F"),)))
    assert ecfp_ids(a) != ecfp_ids(b)
    assert tanimoto(ecfp(a), ecfp(b)) < 1.0
    assert tanimoto(ecfp(a), ecfp(a)) == 1.0
