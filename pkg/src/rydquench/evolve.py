"""Time evolution under a constant Hamiltonian.

Two propagators share one output type: an exact one from a dense
eigendecomposition and a Lanczos (Krylov) one for larger spaces.  The Krylov
propagator builds one Krylov space per substep and evaluates every requested
output time inside that substep from the same space, so a fine recording grid
costs little beyond the matrix-vector products.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
import math
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .hamiltonian import (FullSpaceOperator, build_hamiltonian, build_sector_hamiltonian,
                          full_space_operator)
from .hilbert import BasisIndex, SymmetricSector, lattice_sector
from .observables import ObservableSet

DENSE_MAX_DIM = 1 << 14
MIN_SUBSTEP = 1e-6


class PropagationError(RuntimeError):
    pass


@dataclass
class Trajectory:
    times: np.ndarray
    recorded: dict = field(default_factory=dict)
    states: np.ndarray | None = None
    basis: BasisIndex | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.recorded[name]

    @property
    def final_state(self) -> np.ndarray:
        if self.states is None:
            raise ValueError("states were not retained")
        return self.states[-1]

    def to_csv(self, path, names=None) -> None:
        names = list(self.recorded) if names is None else list(names)
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_us", *names])
            for i, t in enumerate(self.times):
                w.writerow([repr(float(t))] + [repr(float(self.recorded[n][i])) for n in names])


class _Recorder:
    def __init__(self, n_times: int, dim: int, observables, keep_states: bool):
        self.obs = observables
        self.rows = [None] * n_times
        self.states = np.empty((n_times, dim), dtype=complex) if keep_states else None

    def put(self, i: int, psi) -> None:
        if self.states is not None:
            self.states[i] = psi
        if self.obs is not None:
            self.rows[i] = self.obs(psi)

    def trajectory(self, times, basis) -> Trajectory:
        rec = {}
        if self.obs is not None and len(self.rows):
            for name in self.rows[0]:
                rec[name] = np.array([r[name] for r in self.rows])
        return Trajectory(times, rec, self.states, basis)


def _check_inputs(H, psi0, times):
    psi0 = np.asarray(psi0, dtype=complex)
    if H.shape[0] != H.shape[1] or H.shape[0] != psi0.shape[0]:
        raise ValueError("H and psi0 have incompatible shapes")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if len(times) > 1 and np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    return psi0, times


def propagate_dense(H, psi0, times, observables=None, keep_states: bool = True,
                    basis: BasisIndex | None = None) -> Trajectory:
    """psi(t) = sum_i exp(-i E_i t) <i|psi0> |i> from a full eigendecomposition."""
    psi0, times = _check_inputs(H, psi0, times)
    dim = psi0.shape[0]
    if dim > DENSE_MAX_DIM:
        raise PropagationError(f"dense propagation limited to dim <= {DENSE_MAX_DIM}, got {dim}")
    Hd = H.toarray() if sp.issparse(H) else np.asarray(H)
    E, U = np.linalg.eigh(Hd)
    c = U.conj().T @ psi0
    rec = _Recorder(len(times), dim, observables, keep_states)
    chunk = max(1, (1 << 22) // max(dim, 1))
    for start in range(0, len(times), chunk):
        ts = times[start:start + chunk]
        block = U @ (np.exp(-1j * np.outer(E, ts)) * c[:, None])
        for i in range(len(ts)):
            rec.put(start + i, psi0 if ts[i] == 0 else block[:, i])
    return rec.trajectory(times, basis)


def _lanczos(H, v0, m: int):
    """Plain three-term Lanczos: basis rows, tridiagonal (alpha, beta), next beta."""
    dim = v0.shape[0]
    V = np.empty((m, dim), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    nrm = np.linalg.norm(v0)
    V[0] = v0 / nrm
    k = m
    for j in range(m):
        w = H @ V[j]
        a = np.vdot(V[j], w).real
        alpha[j] = a
        w -= a * V[j]
        if j > 0:
            w -= beta[j - 1] * V[j - 1]
        b = np.linalg.norm(w)
        beta[j] = b
        if b < 1e-13 * max(1.0, abs(a)):
            k = j + 1           # invariant subspace: exact within span
            beta[j] = 0.0
            break
        if j + 1 < m:
            V[j + 1] = w / b
    return V[:k], alpha[:k], beta[:k - 1], beta[k - 1], nrm


def _small_exp(alpha, beta, taus):
    """Columns exp(-i tau T) e_1 for each tau."""
    if len(alpha) == 1:
        return np.exp(-1j * alpha[0] * np.asarray(taus))[None, :]
    theta, S = sla.eigh_tridiagonal(alpha, beta)
    return S @ (np.exp(-1j * np.outer(theta, taus)) * S[0][:, None])


def propagate_krylov(H, psi0, times, krylov_dim: int = 30, substep: float = 0.01,
                     observables=None, keep_states: bool = False,
                     basis: BasisIndex | None = None, tol: float = 1e-11) -> Trajectory:
    """Lanczos propagation with a-posteriori step control.

    Each step of length at most ``substep`` is accepted when the Krylov error
    estimate beta_m |[exp(-i tau T) e_1]_m| is below ``tol``; otherwise the
    step is halved.  Steps below 1e-6 us raise :class:`PropagationError`.
    """
    if krylov_dim < 4:
        raise ValueError("krylov_dim must be >= 4")
    psi0, times = _check_inputs(H, psi0, times)
    if not isinstance(H, FullSpaceOperator):
        if not sp.issparse(H):
            H = sp.csr_matrix(H)
        H = H.astype(complex).tocsr()
    dim = psi0.shape[0]
    m = min(krylov_dim, dim)
    rec = _Recorder(len(times), dim, observables, keep_states)

    psi = psi0.copy()
    t = times[0]
    i_next = 0
    if abs(times[0]) < 1e-15:
        rec.put(0, psi)
        i_next = 1
    else:
        t = 0.0
    while i_next < len(times):
        t_target = times[-1]
        step = min(substep, t_target - t)
        V, alpha, beta, b_last, nrm = _lanczos(H, psi, m)
        exact = b_last == 0.0
        while True:
            y_end = _small_exp(alpha, beta, [step])[:, 0]
            err = 0.0 if exact else b_last * abs(y_end[-1]) * nrm
            if err <= tol:
                break
            step *= 0.5
            if step < MIN_SUBSTEP:
                raise PropagationError("Krylov substep fell below 1e-6 us")
        t_end = t + step
        # output times falling inside (t, t_end]
        j = i_next
        while j < len(times) and times[j] <= t_end + 1e-12:
            j += 1
        if j > i_next:
            taus = times[i_next:j] - t
            block = (_small_exp(alpha, beta, taus) * nrm).T @ V
            for q, row in enumerate(block):
                rec.put(i_next + q, row)
            i_next = j
        if i_next >= len(times):
            break
        psi = nrm * (y_end @ V)
        t = t_end
    return rec.trajectory(times, basis)


def time_grid(t_final: float, dt: float) -> np.ndarray:
    if t_final < 0 or dt <= 0:
        raise ValueError("need t_final >= 0 and dt > 0")
    n = int(round(t_final / dt))
    if not math.isclose(n * dt, t_final, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("t_final must be an integer multiple of dt")
    return dt * np.arange(n + 1)


class _SectorObservables:
    """Evaluates parent-basis observables on symmetric-sector vectors."""

    def __init__(self, sector, obs, H_sector=None):
        self.sector = sector
        self.obs = obs
        self.H = H_sector

    def __call__(self, c):
        out = self.obs(self.sector.expand(c)) if self.obs is not None else {}
        if self.H is not None:
            out["energy"] = float(np.real(np.vdot(c, self.H @ c)))
        return out


def _auto_method(lat, basis) -> str:
    if basis.dim > 1500 and len(lat.symmetry_group()) > 1:
        return "sector"
    return "dense" if basis.dim <= 1500 else "krylov"


def quench_from_vacuum(lat, params, basis: BasisIndex, t_final: float = 10.0, dt: float = 0.01,
                       observables=("O_ZZ",), method: str = "auto", keep_states: bool = False,
                       krylov_dim: int = 30, substep: float = 0.01, interactions=None,
                       H=None, sector: SymmetricSector | None = None) -> Trajectory:
    """Evolve |0...0> under the quench Hamiltonian and record ``observables``.

    ``observables`` is a list of names understood by :class:`ObservableSet`
    (``"energy"`` records <H>) or a ready ObservableSet.  ``method``:

    * ``"dense"``  exact propagation on ``basis``
    * ``"krylov"`` Lanczos propagation (matrix-free on the full space)
    * ``"sector"`` propagation in the fully symmetric sector of the lattice
      symmetry group (translations of a uniform loop, reflections and
      rotations of a clean square); the vacuum and H are invariant, so
      nothing is lost.  Dense below dimension 1500, Lanczos above.
    * ``"auto"``   sector above dimension 1500 when the lattice has a
      symmetry, else dense up to 1500 and Krylov beyond.

    Retained states are always parent-basis vectors.
    """
    if 0 not in basis:
        raise ValueError("basis does not contain the all-zero configuration")
    if method == "auto":
        method = _auto_method(lat, basis) if H is None else (
            "dense" if basis.dim <= 1500 else "krylov")
    want_energy = not isinstance(observables, ObservableSet) and "energy" in observables
    if isinstance(observables, ObservableSet):
        obs = observables
    else:
        obs = ObservableSet(basis, lat, [n for n in observables if n != "energy"])
    times = time_grid(t_final, dt)

    if method == "sector":
        if sector is None:
            sector = lattice_sector(basis, lat)
            if sector is None:
                raise ValueError("lattice has no symmetry to reduce by")
        Hs = build_sector_hamiltonian(lat, params, sector, interactions)
        rec_obs = _SectorObservables(sector, obs, Hs if want_energy else None)
        c0 = np.zeros(sector.dim, dtype=complex)
        c0[sector.index_of(0)] = 1.0
        if sector.dim <= 1500:
            traj = propagate_dense(Hs, c0, times, rec_obs, keep_states, basis)
        else:
            traj = propagate_krylov(Hs, c0, times, max(krylov_dim, 40), max(substep, 0.05),
                                    rec_obs, keep_states, basis)
        if traj.states is not None:
            traj.states = np.array([sector.expand(c) for c in traj.states])
        return traj

    if H is None:
        if method == "krylov" and basis.kind == "full":
            H = full_space_operator(lat, params, interactions)
        else:
            H = build_hamiltonian(lat, params, basis, interactions)
    if want_energy:
        obs = ObservableSet(basis, lat, obs.names, {"energy": H})
    psi0 = basis.basis_vector(0)
    if method == "dense":
        return propagate_dense(H, psi0, times, obs, keep_states, basis)
    if method == "krylov":
        return propagate_krylov(H, psi0, times, krylov_dim, substep, obs, keep_states, basis)
    raise ValueError(f"unknown method {method!r}")
