"""Atom geometries and the van der Waals interaction matrix.

Sites are numbered so that site ``j`` maps to bit ``j`` of a configuration:
1D loops are listed in chain order, 2D grids row-major (``j * nx + i`` for the
atom at ``(i a, j a)``).  Adjacency is topological (chain order or grid
index), so positional disorder changes interactions but never the bonds.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import json
import math

import numpy as np

GEOMETRY_KINDS = ("ring1d", "flattened_rect_1d", "square2d")


class GeometryError(ValueError):
    """Raised for lattices that cannot be constructed or used."""


class SingularGeometryError(GeometryError):
    """Two atoms sit on top of each other."""


@dataclass(frozen=True, eq=False)
class LatticeSpec:
    positions: np.ndarray
    geometry_kind: str
    a: float
    chain_order: tuple[int, ...] | None = None
    dims: tuple[int, int] | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "positions", pos)
        if self.geometry_kind not in GEOMETRY_KINDS:
            raise GeometryError(f"unknown geometry kind {self.geometry_kind!r}")
        if self.is_1d:
            order = tuple(range(len(pos))) if self.chain_order is None else tuple(int(i) for i in self.chain_order)
            if sorted(order) != list(range(len(pos))):
                raise GeometryError("chain_order must be a permutation of the sites")
            object.__setattr__(self, "chain_order", order)
        else:
            if self.dims is None:
                raise GeometryError("square2d needs dims = (nx, ny)")
            nx, ny = (int(d) for d in self.dims)
            if nx * ny != len(pos):
                raise GeometryError(f"dims {nx}x{ny} do not match {len(pos)} sites")
            object.__setattr__(self, "dims", (nx, ny))
            object.__setattr__(self, "chain_order", None)

    @property
    def n_sites(self) -> int:
        return len(self.positions)

    @property
    def is_1d(self) -> bool:
        return self.geometry_kind != "square2d"

    def nn_bonds(self) -> list[tuple[int, int]]:
        """Nearest-neighbour bonds ``(j, k)`` with ``j < k``, each listed once."""
        bonds = set()
        if self.is_1d:
            order = self.chain_order
            n = len(order)
            if n < 2:
                return []
            for p in range(n):
                j, k = order[p], order[(p + 1) % n]
                if j != k:
                    bonds.add((min(j, k), max(j, k)))
        else:
            nx, ny = self.dims
            for y in range(ny):
                for x in range(nx):
                    s = y * nx + x
                    if x + 1 < nx:
                        bonds.add((s, s + 1))
                    if y + 1 < ny:
                        bonds.add((s, s + nx))
        return sorted(bonds)

    def diagonal_bonds(self) -> list[tuple[int, int]]:
        """Diagonal (second-neighbour) bonds of a square grid; empty in 1D."""
        if self.is_1d:
            return []
        nx, ny = self.dims
        bonds = []
        for y in range(ny - 1):
            for x in range(nx):
                s = y * nx + x
                if x + 1 < nx:
                    bonds.append((s, s + nx + 1))
                if x - 1 >= 0:
                    bonds.append((min(s, s + nx - 1), max(s, s + nx - 1)))
        return sorted(bonds)

    def neighbors(self, adjacency: str = "nn") -> list[list[int]]:
        """Neighbour lists under ``"nn"`` (chain/xy) or ``"nnd"`` (xy + diagonals)."""
        bonds = self.nn_bonds()
        if adjacency == "nnd":
            bonds = bonds + self.diagonal_bonds()
        elif adjacency != "nn":
            raise ValueError(f"unknown adjacency {adjacency!r}")
        nbrs: list[list[int]] = [[] for _ in range(self.n_sites)]
        for j, k in bonds:
            nbrs[j].append(k)
            nbrs[k].append(j)
        return [sorted(set(n)) for n in nbrs]

    def translation(self) -> np.ndarray | None:
        """Site map j -> next site along the loop (1D only)."""
        if not self.is_1d:
            return None
        order = self.chain_order
        n = len(order)
        T = np.empty(n, dtype=np.int64)
        for p in range(n):
            T[order[p]] = order[(p + 1) % n]
        return T

    def is_translation_invariant(self, rtol: float = 1e-9) -> bool:
        """True when shifting every site one step along the loop preserves all distances."""
        T = self.translation()
        if T is None:
            return False
        r = self.distances()
        return bool(np.allclose(r[np.ix_(T, T)], r, rtol=rtol, atol=1e-12 * max(1.0, self.a)))

    def symmetry_group(self, rtol: float = 1e-9) -> np.ndarray:
        """Site permutations that preserve every pairwise distance, identity first.

        Candidates are the loop translations (1D) or the symmetries of the
        rectangle (2D: reflections, plus 90 degree rotations when square).
        Disorder usually leaves only the identity.
        """
        n = self.n_sites
        cands = []
        if self.is_1d:
            T = self.translation()
            g = np.arange(n)
            for _ in range(n):
                cands.append(g.copy())
                g = T[g]
        elif self.dims is not None:
            nx, ny = self.dims
            ys, xs = np.divmod(np.arange(n), nx)
            moves = [(xs, ys), (nx - 1 - xs, ys), (xs, ny - 1 - ys), (nx - 1 - xs, ny - 1 - ys)]
            if nx == ny:
                moves += [(ys, xs), (nx - 1 - ys, xs), (ys, nx - 1 - xs), (nx - 1 - ys, nx - 1 - xs)]
            cands = [(y2 * nx + x2).astype(np.int64) for x2, y2 in moves]
        else:
            cands = [np.arange(n)]
        r = self.distances()
        tol = 1e-12 * max(1.0, self.a)
        keep = [g for g in cands if np.allclose(r[np.ix_(g, g)], r, rtol=rtol, atol=tol)]
        return np.array(keep, dtype=np.int64)

    def distances(self) -> np.ndarray:
        diff = self.positions[:, None, :] - self.positions[None, :, :]
        return np.sqrt((diff**2).sum(-1))

    def with_spacing(self, a: float) -> "LatticeSpec":
        """Same geometry rescaled to spacing ``a``."""
        return replace(self, positions=self.positions * (a / self.a), a=a)

    # serialisation -------------------------------------------------------

    def to_dict(self) -> dict:
        out = {
            "geometry_kind": self.geometry_kind,
            "a_um": float(self.a),
            "positions": self.positions.tolist(),
        }
        if self.is_1d:
            out["chain_order"] = list(self.chain_order)
        else:
            out["dims"] = list(self.dims)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeSpec":
        unknown = set(d) - {"geometry_kind", "a_um", "positions", "chain_order", "dims"}
        if unknown:
            raise GeometryError(f"unknown lattice keys: {sorted(unknown)}")
        return cls(
            positions=np.asarray(d["positions"], dtype=float),
            geometry_kind=d["geometry_kind"],
            a=float(d["a_um"]),
            chain_order=tuple(d["chain_order"]) if d.get("chain_order") is not None else None,
            dims=tuple(d["dims"]) if d.get("dims") is not None else None,
        )

    @classmethod
    def from_json(cls, text: str) -> "LatticeSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class InteractionMatrix:
    V: np.ndarray
    cutoff_radius: float | None = None

    @property
    def n_sites(self) -> int:
        return self.V.shape[0]

    def pairs(self):
        """Upper-triangle pairs ``(j, k, V_jk)`` with nonzero interaction."""
        j, k = np.nonzero(np.triu(self.V, 1))
        return [(int(a), int(b), float(self.V[a, b])) for a, b in zip(j, k)]


def build_ring(n: int, a: float) -> LatticeSpec:
    """N atoms on a circle with nearest-neighbour chord length ``a``."""
    if n < 3:
        raise GeometryError(f"a ring needs at least 3 sites, got {n}")
    radius = a / (2.0 * math.sin(math.pi / n))
    phi = 2.0 * np.pi * np.arange(n) / n
    pos = radius * np.column_stack([np.cos(phi), np.sin(phi)])
    return LatticeSpec(pos, "ring1d", a, chain_order=tuple(range(n)))


def _rect_sides(n: int) -> tuple[int, int]:
    if n < 8 or n % 2:
        raise GeometryError(
            f"flattened rectangle needs an even N >= 8 (N = 2(p + q), p, q >= 2), got {n}")
    half = n // 2
    p = (half + 1) // 2
    return p, half - p


def build_flattened_rect(n: int, a: float) -> LatticeSpec:
    """Closed loop on a rectangle whose corners are cut by 45 degree links.

    The loop has two horizontal sides of ``p`` sites and two vertical sides of
    ``q`` sites (``n = 2(p + q)``, ``|p - q| <= 1``).  Consecutive sides are
    joined by a diagonal step of length ``a``, so every chain bond is ``a``.
    """
    p, q = _rect_sides(n)
    c = a / math.sqrt(2.0)
    w = (p - 1) * a + 2 * c
    h = (q - 1) * a + 2 * c
    pts = []
    pts += [(c + i * a, 0.0) for i in range(p)]             # bottom, left to right
    pts += [(w, c + i * a) for i in range(q)]               # right, upwards
    pts += [(w - c - i * a, h) for i in range(p)]           # top, right to left
    pts += [(0.0, h - c - i * a) for i in range(q)]         # left, downwards
    return LatticeSpec(np.array(pts), "flattened_rect_1d", a, chain_order=tuple(range(n)))


def build_square(nx: int, ny: int, a: float) -> LatticeSpec:
    if nx < 2 or ny < 2:
        raise GeometryError(f"square lattice needs nx, ny >= 2, got {nx}x{ny}")
    ys, xs = np.divmod(np.arange(nx * ny), nx)
    pos = a * np.column_stack([xs, ys]).astype(float)
    return LatticeSpec(pos, "square2d", a, dims=(nx, ny))


def apply_disorder(lat: LatticeSpec, sigma: float, seed: int) -> LatticeSpec:
    """Shift every coordinate by an independent N(0, sigma^2) draw."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return lat
    rng = np.random.default_rng(seed)
    shift = rng.normal(0.0, sigma, size=lat.positions.shape)
    return replace(lat, positions=lat.positions + shift)


def interaction_matrix(lat: LatticeSpec, params, cutoff: float | None = None) -> InteractionMatrix:
    """V_jk = C6 / r_jk^6 for every pair (optionally only within ``cutoff``)."""
    r = lat.distances()
    off = ~np.eye(lat.n_sites, dtype=bool)
    if lat.n_sites > 1 and np.min(r[off]) <= 1e-12:
        raise SingularGeometryError("coincident atoms")
    V = np.zeros_like(r)
    V[off] = params.c6 / r[off] ** 6
    if cutoff is not None:
        V[r > cutoff] = 0.0
    V = 0.5 * (V + V.T)
    return InteractionMatrix(V, cutoff)


def nearest_neighbor_interactions(lat: LatticeSpec, v1: float) -> InteractionMatrix:
    """Interaction matrix with only the nearest-neighbour bonds, all equal to ``v1``."""
    V = np.zeros((lat.n_sites, lat.n_sites))
    for j, k in lat.nn_bonds():
        V[j, k] = V[k, j] = v1
    return InteractionMatrix(V)
