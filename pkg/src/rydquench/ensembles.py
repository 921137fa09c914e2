"""Thermal, subspace-restricted and diagonal ensembles.

All ensembles work from a dense eigendecomposition of H on some basis.  Over
the full space this is the quench Hamiltonian itself; over a constrained
basis (blockade, island shells) the same formulas give the prethermal
ensemble of that subspace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import logging
import math
import threading

import numpy as np
from scipy.optimize import brentq

from .hamiltonian import DimensionError, build_hamiltonian
from .hilbert import BasisIndex
from .observables import OFFDIAGONAL_NAMES, diagonal_values, offdiagonal_operator

log = logging.getLogger(__name__)

DENSE_MAX_DIM = 1 << 14
FULL_SPACE_MAX_SITES = 14

# at most one full-space eigendecomposition in flight per process
_FULL_SPACE_SLOT = threading.BoundedSemaphore(1)


class UndefinedBetaError(ValueError):
    """A flat spectrum admits no inverse temperature."""


@dataclass
class SpectralDecomposition:
    energies: np.ndarray
    vectors: np.ndarray | None
    overlaps: np.ndarray
    basis: BasisIndex | None = None
    values: dict = field(default_factory=dict)
    initial: np.ndarray | None = None

    @property
    def mean_hamming(self) -> np.ndarray:
        if self.vectors is None or self.basis is None:
            raise ValueError("eigenvectors and basis needed")
        w = self.basis.hamming_weights().astype(float)
        return w @ (np.abs(self.vectors) ** 2)

    def degenerate_groups(self, rtol: float = 1e-9) -> list[np.ndarray]:
        """Index groups of (numerically) equal energies, singletons included."""
        E = self.energies
        scale = max(1.0, float(np.max(np.abs(E)))) if len(E) else 1.0
        cuts = np.nonzero(np.diff(E) > rtol * scale)[0] + 1
        return np.split(np.arange(len(E)), cuts)


@dataclass
class EnsembleResult:
    beta_eff: float
    subspace_kind: str
    values: dict
    energy_check: float
    e0: float = 0.0


def eigendecompose(H, basis: BasisIndex | None = None) -> tuple[np.ndarray, np.ndarray]:
    dim = H.shape[0]
    if dim > DENSE_MAX_DIM:
        raise DimensionError(f"dense eigendecomposition limited to dim <= {DENSE_MAX_DIM}")
    Hd = H.toarray() if hasattr(H, "toarray") else np.asarray(H)
    if basis is not None and basis.kind == "full":
        with _FULL_SPACE_SLOT:
            return np.linalg.eigh(Hd)
    return np.linalg.eigh(Hd)


def eigenstate_expectations(vectors, basis: BasisIndex, lat, names) -> dict[str, np.ndarray]:
    """<psi_i|O|psi_i> for every eigenvector column and observable name."""
    prob = np.abs(vectors) ** 2
    out = {}
    for name in names:
        if name in OFFDIAGONAL_NAMES:
            op = offdiagonal_operator(basis, lat, name)
            out[name] = np.real(np.sum(vectors.conj() * (op @ vectors), axis=0))
        else:
            out[name] = diagonal_values(basis.states, lat, name) @ prob
    return out


def _mean_energy(E, beta: float) -> float:
    if beta == 0:
        return float(np.mean(E))
    ref = E.min() if beta > 0 else E.max()
    w = np.exp(-beta * (E - ref))
    return float(w @ E / w.sum())


def _weights(E, beta: float) -> np.ndarray:
    if math.isinf(beta):
        target = E.min() if beta > 0 else E.max()
        w = (np.abs(E - target) <= 1e-9 * max(1.0, abs(target))).astype(float)
    else:
        ref = E.min() if beta >= 0 else E.max()
        w = np.exp(-beta * (E - ref))
    return w / w.sum()


def effective_beta(energies, e0: float, tol: float = 1e-9) -> float:
    """Solve Tr(H e^{-bH}) / Tr(e^{-bH}) = e0 for b.

    Returns +inf / -inf when e0 sits at or beyond the lower / upper edge of
    the spectrum.  Raises :class:`UndefinedBetaError` for a flat spectrum.
    """
    E = np.sort(np.asarray(energies, dtype=float))
    lo, hi = E[0], E[-1]
    width = hi - lo
    if width <= 1e-12 * max(1.0, abs(hi)):
        raise UndefinedBetaError("flat spectrum")
    if e0 <= lo:
        return math.inf
    if e0 >= hi:
        return -math.inf
    f = lambda b: _mean_energy(E, b) - e0  # noqa: E731 - decreasing in b
    f0 = f(0.0)
    if abs(f0) <= tol * width:
        return 0.0
    direction = 1.0 if f0 > 0 else -1.0
    b = direction / width
    while f(b) * direction > 0:
        b *= 2.0
        if abs(b) > 1e6 / width:
            return math.inf * direction
    a = b / 2.0 if abs(b) > 1.0 / width else 0.0
    root = brentq(f, min(a, b), max(a, b), xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(root)


def thermal_expectation(energies, eigen_values, beta: float) -> float:
    """Tr(O e^{-bH}) / Tr(e^{-bH}) from per-eigenstate expectations."""
    E = np.asarray(energies, dtype=float)
    return float(_weights(E, beta) @ np.asarray(eigen_values, dtype=float))


def thermal_ensemble(lat, params, basis: BasisIndex, names=("O_ZZ",), e0: float | None = None,
                     interactions=None) -> EnsembleResult:
    """Canonical ensemble on ``basis`` matched to the quench energy <0|H|0>."""
    if basis.kind == "full" and basis.n_sites > FULL_SPACE_MAX_SITES:
        raise DimensionError(f"full-space ensembles capped at N <= {FULL_SPACE_MAX_SITES}")
    H = build_hamiltonian(lat, params, basis, interactions)
    if e0 is None:
        i0 = basis.index_of(0)
        e0 = float(H[i0, i0])
    E, U = eigendecompose(H, basis)
    beta = effective_beta(E, e0)
    vals = eigenstate_expectations(U, basis, lat, names)
    res = {n: thermal_expectation(E, v, beta) for n, v in vals.items()}
    check = abs(thermal_expectation(E, E, beta) - e0)
    return EnsembleResult(beta, basis.kind, res, check, e0)


def overlap_spectrum(lat, params, basis: BasisIndex, names=(), interactions=None,
                     initial: int = 0) -> SpectralDecomposition:
    """Eigenpairs with |<psi_i|initial>|^2 and per-eigenstate observables."""
    if basis.kind == "full" and basis.n_sites > FULL_SPACE_MAX_SITES:
        raise DimensionError(f"full-space spectra capped at N <= {FULL_SPACE_MAX_SITES}")
    H = build_hamiltonian(lat, params, basis, interactions)
    E, U = eigendecompose(H, basis)
    psi0 = np.zeros(basis.dim)
    psi0[basis.index_of(initial)] = 1.0
    c = U.T @ psi0
    vals = eigenstate_expectations(U, basis, lat, names)
    return SpectralDecomposition(E, U, np.abs(c) ** 2, basis, vals, psi0)


def diagonal_ensemble(spec: SpectralDecomposition, name: str, lat=None, rtol: float = 1e-9) -> float:
    """Infinite-time average of ``name`` after starting from ``spec.initial``.

    For a nondegenerate spectrum this is sum_i |c_i|^2 <psi_i|O|psi_i>.  Exactly
    degenerate levels (common on symmetric rings) are handled by projecting the
    initial state onto each eigenspace, which is what the long-time average
    actually converges to; the number of such levels is logged.
    """
    if spec.vectors is None or spec.initial is None:
        if name not in spec.values:
            raise ValueError(f"no eigenstate values for {name}")
        return float(spec.overlaps @ spec.values[name])
    groups = spec.degenerate_groups(rtol)
    n_deg = sum(1 for g in groups if len(g) > 1)
    if n_deg:
        log.debug("diagonal ensemble: %d degenerate levels resolved by projection", n_deg)
    U = spec.vectors
    c = U.conj().T @ spec.initial
    if name in OFFDIAGONAL_NAMES:
        if lat is None:
            raise ValueError("off-diagonal observables need the lattice")
        op = offdiagonal_operator(spec.basis, lat, name)
        diag = None
    else:
        if lat is None and name not in spec.values:
            raise ValueError("lattice needed to tabulate the observable")
        diag = diagonal_values(spec.basis.states, lat, name) if lat is not None else None
    total = 0.0
    for g in groups:
        if len(g) == 1 and name in spec.values:
            total += abs(c[g[0]]) ** 2 * spec.values[name][g[0]]
            continue
        proj = U[:, g] @ c[g]
        if diag is not None:
            total += float(diag @ (np.abs(proj) ** 2))
        elif name in OFFDIAGONAL_NAMES:
            total += float(np.real(np.vdot(proj, op @ proj)))
        else:
            total += float(np.sum(np.abs(c[g]) ** 2 * spec.values[name][g]))
    return float(total)
