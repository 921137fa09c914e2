"""Observables on state vectors and on sampled bitstrings.

Diagonal observables are stored as per-configuration tables built once per
basis and reused at every time step.  Names follow the usual conventions:

    O_Z   = (1/N) sum_j Z_j            O_n  = (1/N) sum_j n_j
    O_ZZ  = (1/N) sum_<jk> Z_j Z_k     O_nn = (1/N) sum_<jk> n_j n_k
    O_X   = (1/N) sum_j X_j            O_XX = (1/N) sum_<jk> X_j X_k
    O_L{k}  k-islands, clustering and isolation with the same adjacency
    O_H{k}  2D k-islands clustered along x/y but isolated across diagonals too
    O_xyd{k} 2D k-islands clustered with diagonals included

with Z = 1 - 2n and <jk> the nearest-neighbour bonds.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
import re

import numpy as np
import scipy.sparse as sp

from .hilbert import BasisIndex, popcount
from .lattice import LatticeSpec

DIAGONAL_NAMES = ("O_Z", "O_n", "O_ZZ", "O_nn")
OFFDIAGONAL_NAMES = ("O_X", "O_XX")
_ISLAND_RE = re.compile(r"^O_(L|H|xyd)(\d+)$")


@dataclass(frozen=True)
class IslandSpec:
    k: int
    adjacency: str = "chain"          # chain | xy | xyd
    isolation: str = "same"           # same | diagonal

    def check(self, lat: LatticeSpec) -> None:
        if self.k < 1:
            raise ValueError("island size must be >= 1")
        if lat.is_1d and (self.adjacency != "chain" or self.isolation != "same"):
            raise ValueError("1D lattices only support chain islands")
        if not lat.is_1d and self.adjacency == "chain":
            raise ValueError("chain islands need a 1D lattice")
        if self.adjacency not in ("chain", "xy", "xyd") or self.isolation not in ("same", "diagonal"):
            raise ValueError(f"bad island spec {self}")

    @property
    def cluster_adjacency(self) -> str:
        return "nnd" if self.adjacency == "xyd" else "nn"

    @property
    def isolation_adjacency(self) -> str:
        if self.isolation == "diagonal":
            return "nnd"
        return self.cluster_adjacency


def island_spec_for(name: str, lat: LatticeSpec) -> IslandSpec:
    m = _ISLAND_RE.match(name)
    if not m:
        raise KeyError(name)
    flavour, k = m.group(1), int(m.group(2))
    if lat.is_1d:
        if flavour != "L":
            raise ValueError(f"{name} is only defined on 2D lattices")
        return IslandSpec(k, "chain", "same")
    if flavour == "L":
        return IslandSpec(k, "xy", "same")
    if flavour == "H":
        return IslandSpec(k, "xy", "diagonal")
    return IslandSpec(k, "xyd", "same")


# per-configuration values ----------------------------------------------------

def _bond_products(states, bonds) -> np.ndarray:
    out = np.zeros(len(states), dtype=np.int64)
    for j, k in bonds:
        out += (states >> j) & (states >> k) & 1
    return out


def diagonal_values(states, lat: LatticeSpec, name: str) -> np.ndarray:
    """Value of a diagonal observable on each configuration."""
    s = np.asarray(states, dtype=np.int64)
    n = lat.n_sites
    if name == "O_n":
        return popcount(s) / n
    if name == "O_Z":
        return 1.0 - 2.0 * popcount(s) / n
    if name == "O_nn":
        return _bond_products(s, lat.nn_bonds()) / n
    if name == "O_ZZ":
        zz = np.zeros(len(s))
        for j, k in lat.nn_bonds():
            zj = 1 - 2 * ((s >> j) & 1)
            zk = 1 - 2 * ((s >> k) & 1)
            zz += zj * zk
        return zz / n
    if name in ("Q_n", "hamming"):
        return popcount(s).astype(float)
    if name == "Q_n2":
        return popcount(s).astype(float) ** 2
    if _ISLAND_RE.match(name):
        return island_table(s, lat, island_spec_for(name, lat)) / n
    raise KeyError(f"unknown diagonal observable {name!r}")


def count_islands(x: int, lat: LatticeSpec, spec: IslandSpec) -> int:
    """Count isolated clusters of exactly ``spec.k`` excitations by depth-first search."""
    spec.check(lat)
    n = lat.n_sites
    excited = [(int(x) >> j) & 1 for j in range(n)]
    if all(excited) and lat.is_1d:
        return 0
    cl = lat.neighbors(spec.cluster_adjacency)
    iso = lat.neighbors(spec.isolation_adjacency)
    seen = [False] * n
    count = 0
    for start in range(n):
        if not excited[start] or seen[start]:
            continue
        comp = []
        stack = [start]
        seen[start] = True
        while stack:
            s = stack.pop()
            comp.append(s)
            for t in cl[s]:
                if excited[t] and not seen[t]:
                    seen[t] = True
                    stack.append(t)
        if len(comp) != spec.k:
            continue
        members = set(comp)
        if all(not excited[t] for s in comp for t in iso[s] if t not in members):
            count += 1
    return count


def lattice_animals(lat: LatticeSpec, k: int, adjacency: str = "nn") -> list[frozenset]:
    """All connected site sets of size ``k`` under ``adjacency``."""
    nbrs = lat.neighbors(adjacency)
    current = {frozenset([s]) for s in range(lat.n_sites)}
    for _ in range(k - 1):
        grown = set()
        for a in current:
            for s in a:
                for t in nbrs[s]:
                    if t not in a:
                        grown.add(a | {t})
        current = grown
    return sorted(current, key=lambda a: sorted(a))


def island_table(states, lat: LatticeSpec, spec: IslandSpec) -> np.ndarray:
    """Island counts for many configurations at once.

    Each connected set S of k sites contributes when all of S is excited and
    every site bordering S (isolation adjacency) is empty; this is the
    multi-dimensional version of (1-n) n...n (1-n).
    """
    spec.check(lat)
    s = np.asarray(states, dtype=np.int64)
    out = np.zeros(len(s), dtype=np.int64)
    if lat.is_1d and spec.k >= lat.n_sites:
        return out
    iso = lat.neighbors(spec.isolation_adjacency)
    for animal in lattice_animals(lat, spec.k, spec.cluster_adjacency):
        inner = 0
        for t in animal:
            inner |= 1 << t
        border = 0
        for t in animal:
            for u in iso[t]:
                if u not in animal:
                    border |= 1 << u
        out += ((s & inner) == inner) & ((s & border) == 0)
    return out


# off-diagonal operators ------------------------------------------------------

def offdiagonal_operator(basis: BasisIndex, lat: LatticeSpec, name: str) -> sp.csr_matrix:
    """O_X or O_XX restricted to ``basis`` (flips leaving the basis dropped)."""
    n = lat.n_sites
    if name == "O_X":
        masks = [1 << j for j in range(n)]
    elif name == "O_XX":
        masks = [(1 << j) | (1 << k) for j, k in lat.nn_bonds()]
    else:
        raise KeyError(f"unknown off-diagonal observable {name!r}")
    rows, cols = [], []
    ar = np.arange(basis.dim)
    for m in masks:
        tgt = basis.index(basis.states ^ m)
        ok = tgt >= 0
        rows.append(ar[ok])
        cols.append(tgt[ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.full(len(rows), 1.0 / n)
    return sp.coo_matrix((data, (rows, cols)), shape=(basis.dim, basis.dim)).tocsr()


# expectation values ------------------------------------------------------------

def probabilities(psi) -> np.ndarray:
    psi = np.asarray(psi)
    return (psi.real**2 + psi.imag**2) if np.iscomplexobj(psi) else psi**2


def expect_diagonal(psi, basis: BasisIndex, lat: LatticeSpec, name: str) -> float:
    return float(probabilities(psi) @ diagonal_values(basis.states, lat, name))


def expect_offdiagonal(psi, basis: BasisIndex, lat: LatticeSpec, name: str) -> float:
    op = offdiagonal_operator(basis, lat, name)
    psi = np.asarray(psi, dtype=complex)
    return float(np.real(np.vdot(psi, op @ psi)))


def island_observable(psi, basis: BasisIndex, lat: LatticeSpec, spec: IslandSpec) -> float:
    return float(probabilities(psi) @ island_table(basis.states, lat, spec)) / lat.n_sites


@dataclass(frozen=True)
class HammingHistogram:
    probs: np.ndarray

    @property
    def mean(self) -> float:
        a = np.arange(len(self.probs))
        return float(self.probs @ a)

    @property
    def variance(self) -> float:
        a = np.arange(len(self.probs))
        return float(self.probs @ a**2 - self.mean**2)


def hamming_histogram(psi, basis: BasisIndex) -> HammingHistogram:
    w = basis.hamming_weights()
    probs = np.bincount(w, weights=probabilities(psi), minlength=basis.n_sites + 1)
    return HammingHistogram(probs)


def time_average(times, series, t0: float | None = None, t1: float | None = None) -> float:
    """Trapezoidal average of ``series`` over ``[t0, t1]`` (defaults: whole grid)."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(series, dtype=float)
    t0 = t[0] if t0 is None else float(t0)
    t1 = t[-1] if t1 is None else float(t1)
    eps = 1e-9 * max(1.0, abs(t[-1]))
    if not (t0 < t1) or t0 < t[0] - eps or t1 > t[-1] + eps:
        raise ValueError(f"averaging window [{t0}, {t1}] outside grid [{t[0]}, {t[-1]}]")
    inside = (t > t0) & (t < t1)
    tt = np.concatenate([[t0], t[inside], [t1]])
    yy = np.concatenate([[np.interp(t0, t, y)], y[inside], [np.interp(t1, t, y)]])
    return float(np.trapezoid(yy, tt) / (t1 - t0)) if hasattr(np, "trapezoid") \
        else float(np.trapz(yy, tt) / (t1 - t0))


class ObservableSet:
    """Evaluates a fixed list of observables on states of one basis.

    ``names`` may contain diagonal names, island names, ``O_X``/``O_XX``,
    ``Q_n``/``Q_n2`` (Hamming moments) and ``hamming`` (adds ``p_0..p_N``).
    ``operators`` adds arbitrary named operators, e.g. ``{"energy": H}``.
    """

    def __init__(self, basis: BasisIndex, lat: LatticeSpec, names, operators=None):
        self.basis = basis
        self.lat = lat
        self.names = list(names)
        self._diag_names = []
        rows = []
        self._ops = {}
        self._hist = False
        for name in self.names:
            if name in OFFDIAGONAL_NAMES:
                self._ops[name] = offdiagonal_operator(basis, lat, name)
            elif name == "hamming":
                self._hist = True
            else:
                rows.append(diagonal_values(basis.states, lat, name).astype(float))
                self._diag_names.append(name)
        for name, op in (operators or {}).items():
            self._ops[name] = op
            self.names.append(name)
        self._table = np.vstack(rows) if rows else np.zeros((0, basis.dim))
        self._weights = basis.hamming_weights()

    @property
    def columns(self) -> list[str]:
        cols = [n for n in self.names if n != "hamming"]
        if self._hist:
            cols += [f"p_{a}" for a in range(self.basis.n_sites + 1)]
        return cols

    def __call__(self, psi) -> dict[str, float]:
        p = probabilities(psi)
        out = dict(zip(self._diag_names, (self._table @ p).tolist()))
        for name, op in self._ops.items():
            out[name] = float(np.real(np.vdot(psi, op @ psi)))
        if self._hist:
            h = np.bincount(self._weights, weights=p, minlength=self.basis.n_sites + 1)
            out.update({f"p_{a}": float(v) for a, v in enumerate(h)})
        return {c: out[c] for c in self.columns}


# bitstring samples -----------------------------------------------------------

def parse_samples(lines, n_sites: int | None = None):
    """Parse shot lines of 0/1 (site 0 first).  Lines with ``x`` (lost atoms) are dropped.

    Returns ``(configs, n_dropped)``.
    """
    configs = []
    dropped = 0
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if n_sites is not None and len(line) != n_sites:
            raise ValueError(f"sample {line!r} has length {len(line)}, expected {n_sites}")
        if set(line) - {"0", "1", "x"}:
            raise ValueError(f"sample {line!r} contains characters other than 0/1/x")
        if "x" in line:
            dropped += 1
            continue
        configs.append(sum(1 << j for j, c in enumerate(line) if c == "1"))
    return np.array(configs, dtype=np.int64), dropped


def sample_estimates(configs, lat: LatticeSpec, names) -> dict[str, tuple[float, float]]:
    """Mean and standard error of diagonal observables over measured bitstrings."""
    configs = np.asarray(configs, dtype=np.int64)
    n = len(configs)
    out = {}
    for name in names:
        vals = diagonal_values(configs, lat, name).astype(float)
        mean = float(np.mean(vals)) if n else math.nan
        err = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        out[name] = (mean, err)
    return out
