import numpy as np
import pytest
from hypothesis import given, strategies as st

from feedbacksim.operators import (
    SpaceError,
    SpaceSignature,
    Subsystem,
    anticommutator,
    build_generator,
    commutator,
    embed,
    fock_pair,
    identity,
    interior_mask,
    tensor,
)

GENS = ["annihilate", "create", "x", "y", "number"]


def test_subsystem_validation():
    with pytest.raises(SpaceError):
        Subsystem("q", "qubit", 3)
    with pytest.raises(SpaceError):
        Subsystem("f", "fock", 1)
    with pytest.raises(SpaceError):
        SpaceSignature.of(("a", "fock", 3), ("a", "qubit"))


def test_dimension_is_product():
    sp = SpaceSignature.of(("1", "fock", 3), ("A", "qubit"), ("2", "fock", 4))
    assert sp.dim == 24
    assert sp.dims == (3, 2, 4)


def test_annihilation_entries():
    sp = SpaceSignature.of(("c", "fock", 4))
    a = build_generator(sp, "c", "annihilate").mat
    for n in range(1, 4):
        assert a[n - 1, n] == pytest.approx(np.sqrt(n))
    assert np.count_nonzero(a) == 3


def test_create_is_adjoint_exactly():
    sp = fock_pair(5)
    a = build_generator(sp, "1", "a")
    ad = build_generator(sp, "1", "adag")
    assert np.array_equal(a.dag().mat, ad.mat)


def test_quadrature_convention():
    sp = SpaceSignature.of(("c", "fock", 6))
    a, x, y = (build_generator(sp, "c", n) for n in ("a", "x", "y"))
    assert np.allclose((x + 1j * y).mat, a.mat, atol=1e-15)


@pytest.mark.parametrize("d", [3, 6, 12])
def test_xy_commutator_interior(d):
    # exact on the block with indices < d-1 only
    sp = SpaceSignature.of(("c", "fock", d))
    x, y = build_generator(sp, "c", "x"), build_generator(sp, "c", "y")
    c = commutator(x, y).interior()
    assert np.allclose(c, 0.5j * np.eye(d - 1), atol=1e-14)
    # and visibly wrong at the truncation edge
    assert abs(commutator(x, y).mat[-1, -1] - 0.5j) > 0.1


def test_interior_mask_two_modes():
    sp = fock_pair(3)
    m = interior_mask(sp)
    assert m.sum() == 4


@pytest.mark.parametrize("g1", GENS)
@pytest.mark.parametrize("g2", GENS + ["pauli_x", "pauli_z"])
def test_disjoint_generators_commute(g1, g2):
    sp = SpaceSignature.of(("1", "fock", 3), ("A", "qubit")) if g2.startswith("pauli") else fock_pair(3)
    other = "A" if g2.startswith("pauli") else "2"
    A, B = build_generator(sp, "1", g1), build_generator(sp, other, g2)
    assert np.count_nonzero(commutator(A, B).mat) == 0


def test_pauli_algebra():
    sp = SpaceSignature.of(("q", "qubit"))
    sx, sy, sz = (build_generator(sp, "q", n) for n in ("sx", "sy", "sz"))
    assert np.allclose(commutator(sz, sx).mat, 2j * sy.mat)
    assert np.allclose(anticommutator(sx, sx).mat, 2 * np.eye(2))


def test_anticommutator_of_commuting():
    sp = fock_pair(3, ("A", "B"))
    XA, XB = build_generator(sp, "A", "x"), build_generator(sp, "B", "x")
    assert np.allclose(anticommutator(XA, XB).mat, 2 * (XA @ XB).mat)


@pytest.mark.parametrize("name", ["x", "y", "number", "pauli_x", "pauli_y", "pauli_z"])
def test_hermitian_generators(name):
    sp = SpaceSignature.of(("c", "fock", 5), ("q", "qubit"))
    label = "q" if name.startswith("pauli") else "c"
    assert build_generator(sp, label, name).is_hermitian()


def test_errors():
    sp = SpaceSignature.of(("c", "fock", 3), ("q", "qubit"))
    with pytest.raises(SpaceError):
        build_generator(sp, "zz", "a")
    with pytest.raises(SpaceError):
        build_generator(sp, "q", "annihilate")
    with pytest.raises(SpaceError):
        build_generator(sp, "c", "pauli_x")
    other = fock_pair(3)
    with pytest.raises(SpaceError):
        commutator(identity(sp), identity(other))


def test_tensor_matches_embed():
    sp = fock_pair(3)
    a1 = build_generator(sp, "1", "a")
    n2 = build_generator(sp, "2", "n")
    sp1 = SpaceSignature.of(("1", "fock", 3))
    sp2 = SpaceSignature.of(("2", "fock", 3))
    t = tensor(build_generator(sp1, "1", "a"), build_generator(sp2, "2", "n"))
    assert np.allclose(t.mat, (a1 @ n2).mat)


@given(st.integers(2, 7), st.integers(2, 5))
def test_number_is_adag_a(d1, d2):
    sp = SpaceSignature.of(("1", "fock", d1), ("2", "fock", d2))
    for lab in ("1", "2"):
        a = build_generator(sp, lab, "a")
        assert np.allclose((a.dag() @ a).mat, build_generator(sp, lab, "n").mat)


@given(st.integers(2, 6))
def test_embed_local_identity(d):
    sp = fock_pair(d)
    e = embed(sp, "2", np.eye(d))
    assert np.allclose(e.mat, np.eye(d * d))
