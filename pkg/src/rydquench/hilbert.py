"""Computational bases for the full space and constrained subspaces.

A configuration is an integer whose bit ``j`` is the occupation n_j of site
``j``.  Every basis stores its configurations sorted ascending, so lookups are
a binary search.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lattice import LatticeSpec

MAX_ENUMERATION_SITES = 24

BASIS_KINDS = ("full", "blockade_nn", "blockade_xyd", "island_shell",
               "island_pair_shell", "resonance_manifold", "custom")


class BasisError(ValueError):
    pass


def popcount(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(x).astype(np.int64)
    out = np.zeros(x.shape, dtype=np.int64)
    y = x.copy()
    while np.any(y):
        out += y & 1
        y >>= 1
    return out


def bits(states, n_sites: int) -> np.ndarray:
    """Occupation matrix of shape ``(len(states), n_sites)`` with 0/1 entries."""
    s = np.asarray(states, dtype=np.int64)
    return ((s[:, None] >> np.arange(n_sites)) & 1).astype(np.int8)


def to_bitstring(x: int, n_sites: int) -> str:
    """Site 0 first: ``to_bitstring(0b0110, 4) == "0110"``."""
    return "".join(str((int(x) >> j) & 1) for j in range(n_sites))


def from_bitstring(s: str) -> int:
    return sum(1 << j for j, c in enumerate(s.strip()) if c == "1")


def hamming(x) -> np.ndarray:
    return popcount(x)


@dataclass(frozen=True, eq=False)
class BasisIndex:
    kind: str
    n_sites: int
    states: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.int64)
        if s.ndim != 1:
            raise BasisError("states must be one-dimensional")
        if len(s) > 1 and np.any(np.diff(s) <= 0):
            raise BasisError("states must be strictly increasing")
        s.setflags(write=False)
        object.__setattr__(self, "states", s)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return len(self.states)

    def index(self, configs) -> np.ndarray:
        """Positions of ``configs`` in the basis, ``-1`` where absent."""
        c = np.asarray(configs, dtype=np.int64)
        pos = np.searchsorted(self.states, c)
        pos_c = np.minimum(pos, len(self.states) - 1)
        found = self.states[pos_c] == c if len(self.states) else np.zeros(c.shape, bool)
        return np.where(found, pos_c, -1)

    def index_of(self, config: int) -> int:
        i = int(self.index(config))
        if i < 0:
            raise KeyError(f"configuration {config:#x} not in basis")
        return i

    def __contains__(self, config) -> bool:
        return int(self.index(int(config))) >= 0

    def basis_vector(self, config: int = 0) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index_of(config)] = 1.0
        return v

    def hamming_weights(self) -> np.ndarray:
        return popcount(self.states)


# enumeration -------------------------------------------------------------

def _all_states(n: int) -> np.ndarray:
    if n > MAX_ENUMERATION_SITES:
        raise BasisError(f"refusing to enumerate 2^{n} configurations")
    return np.arange(1 << n, dtype=np.int64)


def _bond_masks(bonds) -> np.ndarray:
    return np.array([(1 << j) | (1 << k) for j, k in bonds], dtype=np.int64)


def _independent_sets(n: int, bonds) -> np.ndarray:
    states = _all_states(n)
    keep = np.ones(len(states), dtype=bool)
    for m in _bond_masks(bonds):
        keep &= (states & m) != m
    return states[keep]


def max_run_lengths(states, lat: LatticeSpec) -> np.ndarray:
    """Longest run of consecutive excitations along a 1D loop (N for all-ones)."""
    s = np.asarray(states, dtype=np.int64)
    order = lat.chain_order
    n = len(order)
    best = np.zeros(len(s), dtype=np.int64)
    cur = np.zeros(len(s), dtype=np.int64)
    # two laps so runs crossing the seam are counted whole
    for p in range(2 * n):
        b = (s >> order[p % n]) & 1
        cur = (cur + 1) * b
        np.maximum(best, cur, out=best)
    return np.minimum(best, n)


def island_counts_1d(states, lat: LatticeSpec, k: int) -> np.ndarray:
    """Number of isolated runs of exactly ``k`` excitations (pattern 0 1..1 0)."""
    s = np.asarray(states, dtype=np.int64)
    order = lat.chain_order
    n = len(order)
    out = np.zeros(len(s), dtype=np.int64)
    if k < 1 or k >= n:
        return out
    for start in range(n):
        run = 0
        for p in range(1, k + 1):
            run |= 1 << order[(start + p) % n]
        bound = (1 << order[start]) | (1 << order[(start + k + 1) % n])
        out += ((s & run) == run) & ((s & bound) == 0)
    return out


def enumerate_basis(lat: LatticeSpec, kind: str = "full", **params) -> BasisIndex:
    """Enumerate a basis of the given kind for ``lat``.

    Kinds: ``full``; ``blockade_nn`` (no two excited nearest neighbours);
    ``blockade_xyd`` (2D only, diagonals blockaded too); ``island_shell`` with
    ``k`` (1D, every excitation run has length <= k, so k=1 is the blockade
    subspace); ``island_pair_shell`` (1D, blockade subspace plus
    configurations of 1- and 2-islands only with equally many of each).
    """
    n = lat.n_sites
    if kind == "full":
        states = _all_states(n)
    elif kind == "blockade_nn":
        states = _independent_sets(n, lat.nn_bonds())
    elif kind == "blockade_xyd":
        if lat.is_1d:
            raise BasisError("blockade_xyd is defined for square2d lattices only")
        states = _independent_sets(n, lat.nn_bonds() + lat.diagonal_bonds())
    elif kind == "island_shell":
        if not lat.is_1d:
            raise BasisError("island shells are defined for 1D loops only")
        k = int(params.get("k", 1))
        if k < 1:
            raise BasisError("island_shell needs k >= 1")
        states = _all_states(n)
        if k < n:
            states = states[max_run_lengths(states, lat) <= k]
        params = {"k": k}
    elif kind == "island_pair_shell":
        if not lat.is_1d:
            raise BasisError("island_pair_shell is defined for 1D loops only")
        states = _all_states(n)
        shell2 = states[max_run_lengths(states, lat) <= 2]
        c1 = island_counts_1d(shell2, lat, 1)
        c2 = island_counts_1d(shell2, lat, 2)
        keep = (c2 == 0) | (c1 == c2)
        states = shell2[keep]
        params = {}
    else:
        raise BasisError(f"unsupported basis kind {kind!r}")
    return BasisIndex(kind, n, states, dict(params))


def resonance_manifold(lat: LatticeSpec, params, e0: float = 0.0, tol: float | None = None,
                       interactions=None) -> BasisIndex:
    """All configurations with classical energy within ``tol`` of ``e0``.

    ``interactions`` overrides the interaction matrix (pass a nearest-neighbour
    only matrix for effective-Hamiltonian work).  Default ``tol`` is 1e-6 Omega.
    """
    from .hamiltonian import classical_energies, interactions_for

    if tol is None:
        tol = 1e-6 * params.omega
    V = interactions_for(lat, params, interactions)
    states = _all_states(lat.n_sites)
    e = classical_energies(states, V, params.delta)
    keep = np.abs(e - e0) <= tol
    return BasisIndex("resonance_manifold", lat.n_sites, states[keep],
                      {"e0": float(e0), "tol": float(tol)})


def subset_basis(parent: BasisIndex, mask) -> BasisIndex:
    return BasisIndex("custom", parent.n_sites, parent.states[np.asarray(mask, bool)])


# symmetric sectors ----------------------------------------------------------

def translate_states(states, T) -> np.ndarray:
    """Apply the site map ``T`` (site j -> T[j]) to every configuration."""
    s = np.asarray(states, dtype=np.int64)
    out = np.zeros_like(s)
    for j, tj in enumerate(T):
        out |= ((s >> j) & 1) << int(tj)
    return out


@dataclass(frozen=True, eq=False)
class SymmetricSector:
    """Fully symmetric sector of a basis closed under a group of site maps.

    Sector state ``a`` is the normalised sum over the orbit of ``reps[a]``.
    ``parent_to_sector`` gives the orbit of each parent configuration and
    ``group`` holds the site maps (identity first).  For a uniform loop the
    group is the translations and this is the zero-momentum sector.
    """

    parent: BasisIndex
    reps: np.ndarray
    orbit_sizes: np.ndarray
    parent_to_sector: np.ndarray
    group: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.reps)

    def expand(self, c) -> np.ndarray:
        """Sector amplitudes -> parent-basis vector."""
        c = np.asarray(c)
        return c[self.parent_to_sector] / np.sqrt(self.orbit_sizes[self.parent_to_sector])

    def restrict(self, psi) -> np.ndarray:
        """Parent vector -> sector amplitudes (exact for symmetric states)."""
        psi = np.asarray(psi, dtype=complex)
        out = np.zeros(self.dim, dtype=complex)
        np.add.at(out, self.parent_to_sector, psi)
        return out / np.sqrt(self.orbit_sizes)

    def index_of(self, config: int) -> int:
        return int(self.parent_to_sector[self.parent.index_of(config)])


def symmetric_sector(basis: BasisIndex, group) -> SymmetricSector:
    """Orbits of ``basis`` under ``group`` (a list of site maps forming a group)."""
    group = np.asarray(group, dtype=np.int64)
    s = basis.states
    stack = np.vstack([translate_states(s, g) for g in group])
    for row in stack:
        if np.any(basis.index(row) < 0):
            raise BasisError("basis is not closed under the symmetry group")
    rep = stack.min(axis=0)
    srt = np.sort(stack, axis=0)
    size = 1 + np.count_nonzero(np.diff(srt, axis=0), axis=0)
    reps, inverse = np.unique(rep, return_inverse=True)
    orbit = np.zeros(len(reps), dtype=np.int64)
    orbit[inverse] = size
    return SymmetricSector(basis, reps, orbit, inverse.astype(np.int64), group)


def translation_sector(basis: BasisIndex, lat: LatticeSpec) -> SymmetricSector:
    if not lat.is_translation_invariant():
        raise BasisError("lattice is not invariant under translation along the loop")
    return symmetric_sector(basis, lat.symmetry_group())


def lattice_sector(basis: BasisIndex, lat: LatticeSpec) -> SymmetricSector | None:
    """Symmetric sector under every distance-preserving site map, ``None`` if there are none."""
    group = lat.symmetry_group()
    if len(group) < 2:
        return None
    return symmetric_sector(basis, group)


# projection --------------------------------------------------------------

def project_state(v, source: BasisIndex, target: BasisIndex) -> np.ndarray:
    """Copy amplitudes of shared configurations from ``source`` to ``target``.

    Works both for restriction to a subspace and for embedding into a larger
    basis.  No renormalisation.
    """
    if source.n_sites != target.n_sites:
        raise BasisError("bases have different site counts")
    v = np.asarray(v)
    if v.shape[0] != source.dim:
        raise BasisError("vector length does not match source basis")
    out = np.zeros((target.dim,) + v.shape[1:], dtype=np.result_type(v.dtype, complex))
    idx = source.index(target.states)
    hit = idx >= 0
    out[hit] = v[idx[hit]]
    return out


def projector_mask(full: BasisIndex, sub: BasisIndex) -> np.ndarray:
    """Boolean diagonal of P (configurations of ``sub``) on ``full``; Q is its complement."""
    return sub.index(full.states) >= 0


# hex dump ----------------------------------------------------------------

def dump_basis(basis: BasisIndex, path) -> None:
    width = max(1, (basis.n_sites + 3) // 4)
    lines = [f"{int(s):0{width}x}" for s in basis.states]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_basis(path, n_sites: int, kind: str = "custom") -> BasisIndex:
    text = Path(path).read_text().split()
    return BasisIndex(kind, n_sites, np.array([int(t, 16) for t in text], dtype=np.int64))
