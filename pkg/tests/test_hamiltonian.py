import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from rydquench.hamiltonian import (build_hamiltonian, build_sector_hamiltonian, classical_energy,
                                   full_space_operator, h0_decomposition, is_hermitian, vacuum_energy)
from rydquench.hilbert import enumerate_basis, from_bitstring, translation_sector
from rydquench.lattice import (LatticeSpec, apply_disorder, build_ring, build_square,
                               interaction_matrix, nearest_neighbor_interactions)
from rydquench.params import QuenchParams

P = QuenchParams(omega=2 * np.pi * 2.5, delta=3.1)


def pair_lattice(a=5.0):
    return LatticeSpec(np.array([[0.0, 0.0], [a, 0.0]]), "ring1d", a)


def test_classical_energy_examples():
    lat = build_ring(4, 5.0)
    v1 = 30.0
    V = nearest_neighbor_interactions(lat, v1)
    assert classical_energy(0, lat, P, V) == 0
    assert classical_energy(1, lat, P, V) == -P.delta
    assert classical_energy(from_bitstring("0110"), lat, P, V) == pytest.approx(-2 * P.delta + v1)


def test_single_site():
    lat = LatticeSpec(np.array([[0.0, 0.0]]), "ring1d", 1.0)
    H = build_hamiltonian(lat, P, enumerate_basis(lat, "full")).toarray()
    assert np.allclose(H, [[0, P.omega / 2], [P.omega / 2, -P.delta]])


def test_two_sites_full():
    lat = pair_lattice()
    v1 = P.c6 / 5.0**6
    H = build_hamiltonian(lat, P, enumerate_basis(lat, "full")).toarray()
    h = P.omega / 2
    expected = np.array([[0, h, h, 0],
                         [h, -P.delta, 0, h],
                         [h, 0, -P.delta, h],
                         [0, h, h, -2 * P.delta + v1]])
    assert np.allclose(H, expected, rtol=1e-12, atol=1e-9)


def test_ring16_offdiagonal_count():
    lat = build_ring(16, 6.0)
    H = build_hamiltonian(lat, P, enumerate_basis(lat, "full"))
    off = H - sp.diags(H.diagonal())
    off.eliminate_zeros()
    assert off.nnz == 16 * 2**16


def test_h0_examples():
    lat = build_ring(8, 6.0)
    basis = enumerate_basis(lat, "full")
    d, lam = h0_decomposition(lat, P, basis)
    v1 = P.v1(6.0)
    assert d[basis.index_of(0)] == 0
    assert d[basis.index_of(from_bitstring("01100000"))] == pytest.approx(v1)
    ratio = d / v1
    assert np.allclose(ratio, np.round(ratio)) and ratio.min() >= 0
    assert lam == max(abs(P.delta), P.omega, P.v2(6.0, "ring1d"))


@pytest.mark.parametrize("kind", ["full", "blockade_nn"])
def test_hermitian(kind):
    lat = apply_disorder(build_square(3, 3, 5.0), 0.2, 1)
    H = build_hamiltonian(lat, P, enumerate_basis(lat, kind))
    assert is_hermitian(H)


def test_subspace_restriction_consistency():
    lat = build_ring(10, 5.5)
    full = enumerate_basis(lat, "full")
    Hf = build_hamiltonian(lat, P, full)
    for kind, kw in [("blockade_nn", {}), ("island_shell", {"k": 2}), ("island_pair_shell", {})]:
        sub = enumerate_basis(lat, kind, **kw)
        Hs = build_hamiltonian(lat, P, sub).toarray()
        idx = full.index(sub.states)
        assert np.array_equal(Hf[idx][:, idx].toarray(), Hs)


@given(st.integers(0, 2**12 - 1), st.floats(-50, 50))
def test_diagonal_matches_classical_energy(x, delta):
    lat = build_ring(12, 6.0)
    p = P.with_delta(delta)
    basis = enumerate_basis(lat, "full")
    V = interaction_matrix(lat, p)
    H = build_hamiltonian(lat, p, basis, V)
    assert H[x, x] == pytest.approx(classical_energy(x, lat, p, V), rel=1e-12, abs=1e-9)


def test_vacuum_energy_zero():
    lat = build_ring(6, 6.0)
    basis = enumerate_basis(lat, "blockade_nn")
    assert vacuum_energy(build_hamiltonian(lat, P, basis), basis) == 0


def test_matrix_free_operator_matches_csr():
    lat = build_ring(9, 6.0)
    basis = enumerate_basis(lat, "full")
    H = build_hamiltonian(lat, P, basis)
    op = full_space_operator(lat, P)
    v = np.random.default_rng(3).normal(size=basis.dim) + 0j
    assert np.allclose(op @ v, H @ v, rtol=0, atol=1e-10)
    assert np.allclose(op.toarray(), H.toarray())


def test_sector_hamiltonian_spectrum_in_full():
    lat = build_ring(8, 6.0)
    basis = enumerate_basis(lat, "full")
    sec = translation_sector(basis, lat)
    Hs = build_sector_hamiltonian(lat, P, sec)
    assert is_hermitian(Hs, 1e-12)
    Ef = np.linalg.eigvalsh(build_hamiltonian(lat, P, basis).toarray())
    for e in np.linalg.eigvalsh(Hs.toarray()):
        assert np.min(np.abs(Ef - e)) < 1e-9
