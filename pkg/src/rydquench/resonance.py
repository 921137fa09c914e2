"""Resonances of the quench: perturbative line shapes and effective models.

H is split into the classical part H_c (diagonal: interactions and detuning)
and the drive V_q = (Omega/2) sum_j X_j.  Product states |m> are eigenstates
of H_c with energies E_m, and a resonance occurs whenever some E_m equals the
vacuum energy E_0.

Observables are given either by name (``O_Z``, ``O_n``, ``O_ZZ``, ``O_nn``,
``O_X``, ``O_XX`` and island names) or as a :class:`PauliSum`.
"""

from __future__ import annotations

from dataclasses import dataclass
import itertools
import warnings

import numpy as np
import scipy.sparse as sp

from .hamiltonian import classical_energies, interactions_for
from .hilbert import BasisIndex, enumerate_basis, popcount
from .lattice import LatticeSpec, nearest_neighbor_interactions
from .observables import OFFDIAGONAL_NAMES, diagonal_values, island_table, IslandSpec
from .params import QuenchParams

__all__ = [
    "PauliSum", "PTConfig", "observable_matrix", "pt_second_order", "pt_xx_closed_form",
    "pt_scan", "minimal_order", "effective_2island_basis", "build_effective_2island_h",
    "validate_effective_h",
]


@dataclass(frozen=True)
class PauliSum:
    """sum_t coef_t * prod_j sigma_j with each term a ``{site: "X"|"Y"|"Z"}`` map."""

    terms: tuple

    @classmethod
    def from_terms(cls, terms) -> "PauliSum":
        clean = []
        for coef, ops in terms:
            ops = {int(k): str(v).upper() for k, v in dict(ops).items()}
            if set(ops.values()) - {"X", "Y", "Z"}:
                raise ValueError(f"bad Pauli letters in {ops}")
            clean.append((complex(coef), tuple(sorted(ops.items()))))
        return cls(tuple(clean))

    def masks(self):
        for coef, ops in self.terms:
            fx = sum(1 << j for j, p in ops if p in "XY")
            zy = [(j, p) for j, p in ops if p in "YZ"]
            yield coef, fx, zy

    def act(self, x: int) -> list[tuple[int, complex]]:
        """Nonzero (x', <x'|O|x>) for configuration ``x``."""
        out = {}
        for coef, fx, zy in self.masks():
            amp = coef
            for j, p in zy:
                b = (x >> j) & 1
                if p == "Z":
                    amp *= -1 if b else 1
                else:                        # Y|0> = i|1>, Y|1> = -i|0>
                    amp *= -1j if b else 1j
            y = x ^ fx
            out[y] = out.get(y, 0) + amp
        return [(y, a) for y, a in out.items() if a != 0]


def named_pauli_sum(name: str, lat: LatticeSpec) -> PauliSum | None:
    """Pauli-string form of the named Pauli observables (``None`` for others)."""
    n = lat.n_sites
    if name == "O_Z":
        return PauliSum.from_terms([(1 / n, {j: "Z"}) for j in range(n)])
    if name == "O_ZZ":
        return PauliSum.from_terms([(1 / n, {j: "Z", k: "Z"}) for j, k in lat.nn_bonds()])
    if name == "O_X":
        return PauliSum.from_terms([(1 / n, {j: "X"}) for j in range(n)])
    if name == "O_XX":
        return PauliSum.from_terms([(1 / n, {j: "X", k: "X"}) for j, k in lat.nn_bonds()])
    return None


def observable_matrix(obs, basis: BasisIndex, lat: LatticeSpec) -> sp.csr_matrix:
    """Matrix of ``obs`` on ``basis``; matrix elements leaving the basis are dropped."""
    if isinstance(obs, str):
        if obs not in OFFDIAGONAL_NAMES:
            return sp.diags(diagonal_values(basis.states, lat, obs).astype(complex)).tocsr()
        obs = named_pauli_sum(obs, lat)
    rows, cols, vals = [], [], []
    for coef, fx, zy in obs.masks():
        amp = np.full(basis.dim, coef, dtype=complex)
        for j, p in zy:
            b = (basis.states >> j) & 1
            amp *= np.where(b == 1, -1, 1) if p == "Z" else np.where(b == 1, -1j, 1j)
        tgt = basis.index(basis.states ^ fx)
        ok = tgt >= 0
        rows.append(tgt[ok])
        cols.append(np.nonzero(ok)[0])
        vals.append(amp[ok])
    if not rows:
        return sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(basis.dim, basis.dim))
    return M.tocsr()


# Dyson series --------------------------------------------------------------

@dataclass(frozen=True)
class PTConfig:
    delta_reg: float
    order: int = 2
    observable: object = "O_XX"

    def __post_init__(self):
        if self.delta_reg <= 0:
            raise ValueError("delta_reg must be positive")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")


def _low_weight_basis(n: int, max_weight: int = 2) -> BasisIndex:
    states = {0}
    for w in range(1, max_weight + 1):
        for sites in itertools.combinations(range(n), w):
            states.add(sum(1 << s for s in sites))
    return BasisIndex("custom", n, np.array(sorted(states), dtype=np.int64))


def pt_second_order(lat: LatticeSpec, params: QuenchParams, obs=None, cfg: PTConfig | None = None,
                    interactions=None) -> float:
    """Long-time average of <O> - <0|O|0> to second order in Omega.

    Evaluates 2 Re[d1 + d2] with

        d1 = -(Omega/2) sum_m <m|X|0><0|O~|m> / D_m
        d2 = (1/2)(Omega/2)^2 sum_{m,m'} [<m|X|0><0|X|m'><m'|O~|m>
                                         + <m|X|m'><m'|X|0><0|O~|m>] / (D_m D_m')

    where X = sum_j X_j, O~ = O - <0|O|0>, D_m = E_m - E_0 - i delta and the
    sums run over configurations other than the vacuum.  Only configurations
    of Hamming weight <= 2 can contribute.
    """
    if cfg is None:
        cfg = PTConfig(0.05 * params.omega)
    if obs is None:
        obs = cfg.observable
    _check_regularisation(params, cfg, lat)
    n = lat.n_sites
    S = _low_weight_basis(n, 2)
    V = interactions_for(lat, params, interactions)
    E = classical_energies(S.states, V, params.delta)
    i0 = S.index_of(0)
    D = E - E[i0] - 1j * cfg.delta_reg
    inv = np.where(np.arange(S.dim) == i0, 0.0, 1.0 / D)     # m != 0 only
    X = np.zeros((S.dim, S.dim))
    for j in range(n):
        tgt = S.index(S.states ^ (1 << j))
        ok = tgt >= 0
        X[tgt[ok], np.nonzero(ok)[0]] = 1.0
    O = observable_matrix(obs, S, lat).toarray()
    O = O - O[i0, i0] * np.eye(S.dim)
    half = 0.5 * params.omega
    x0 = X[:, i0]
    d1 = -half * np.sum(x0 * O[i0, :] * inv)
    d = d1
    if cfg.order == 2:
        a = x0 * inv                                   # <m|X|0>/D_m
        b = X[i0, :] * inv                             # <0|X|m'>/D_m'
        term1 = b @ O @ a                              # sum_{m,m'} b_m' O_m'm a_m
        term2 = (O[i0, :] * inv) @ X @ a               # sum <0|O|m>/D_m <m|X|m'> a_m'
        d = d + 0.5 * half**2 * (term1 + term2)
    return float(2.0 * np.real(d))


def _check_regularisation(params, cfg, lat):
    scales = [params.omega, abs(params.delta), params.v1(lat.a) if lat.a > 0 else np.inf]
    scales = [s for s in scales if s > 0]
    if scales and cfg.delta_reg > 0.2 * min(scales):
        warnings.warn("regularisation delta is not small compared to Omega, |Delta|, V1",
                      RuntimeWarning, stacklevel=3)


def pt_xx_closed_form(params: QuenchParams, v1: float, delta_reg: float) -> float:
    """Second-order O_XX response of a ring with nearest-neighbour interactions only.

    (Omega^2/2) Re[1/((2 Delta - V1 - i d)(Delta - i d)) + 1/(Delta - i d)^2]

    The prefactor 2 (Omega/2)^2 is what the Dyson evaluator gives for
    O_XX = (1/N) sum X_j X_{j+1}.  The quench long-time average from exact
    diagonalization at weak drive has the same detuning dependence and is
    larger by a factor 2, so only the line shape is meaningful.
    """
    D = params.delta - 1j * delta_reg
    val = 1.0 / ((2 * params.delta - v1 - 1j * delta_reg) * D) + 1.0 / D**2
    return float(0.5 * params.omega**2 * np.real(val))


def pt_scan(lat: LatticeSpec, params: QuenchParams, deltas_over_omega, cfg: PTConfig,
            interactions=None):
    """Response on a detuning grid; rows ``(delta_over_omega, response)``."""
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for x in deltas_over_omega:
            p = params.with_delta(float(x) * params.omega)
            rows.append((float(x), pt_second_order(lat, p, cfg.observable, cfg, interactions)))
    return rows


# minimal order -------------------------------------------------------------

def _images(obs, lat: LatticeSpec, m: int) -> list[int]:
    """Configurations O|m> reaches (diagonal observables leave m fixed)."""
    if isinstance(obs, str):
        p = named_pauli_sum(obs, lat)
        if p is None:
            return [m]
        obs = p
    if obs is None or (isinstance(obs, PauliSum) and not obs.terms):
        return [m]
    return [y for y, _ in obs.act(m)]


def minimal_order(lat: LatticeSpec, params: QuenchParams, obs, manifold: BasisIndex) -> int:
    """Lowest Dyson order at which ``obs`` responds to a resonance in ``manifold``.

    The ladder climbs from |0> to the resonant |m> (hdist(0, m) drive
    insertions) and must come back down from O|m> to |0> (hdist(0, O m)
    insertions), so p = min over m != 0 of hdist(0, m) + hdist(0, O m).
    For diagonal observables this is 2 hdist(0, m).  ``obs=None`` means the
    identity.
    """
    states = [int(s) for s in manifold.states if s != 0]
    if not states:
        raise ValueError("resonance manifold has no configuration besides the vacuum")
    best = None
    for m in states:
        up = int(popcount(m))
        for y in _images(obs, lat, m):
            p = up + int(popcount(y))
            best = p if best is None else min(best, p)
    if best is None:
        raise ValueError("observable annihilates every resonant configuration")
    return best


# effective Hamiltonian at 2 Delta = V1 --------------------------------------

def _nn_bond_counts(states, lat):
    out = np.zeros(len(states), dtype=np.int64)
    for j, k in lat.nn_bonds():
        out += (states >> j) & (states >> k) & 1
    return out


def effective_2island_basis(lat: LatticeSpec) -> BasisIndex:
    """Configurations degenerate with the vacuum when 2 Delta = V1 (nearest-neighbour H_c).

    The classical energy is V1 (#bonds - |x|/2), so these are exactly the
    configurations with twice as many excited bonds as excitations.
    """
    if not lat.is_1d:
        raise ValueError("the 2-island effective model is defined on 1D loops")
    full = enumerate_basis(lat, "full")
    s = full.states
    keep = 2 * _nn_bond_counts(s, lat) == popcount(s)
    return BasisIndex("resonance_manifold", lat.n_sites, s[keep], {"resonance": "2island"})


def build_effective_2island_h(lat: LatticeSpec, params: QuenchParams, include_shifts: bool = False,
                              general_shuffle: bool = False):
    """Second-order effective Hamiltonian on the 2-island resonant manifold.

    Terms, with chain positions taken around the loop:

    * pair creation  00 <-> 11 on (i, i+1) with i-1, i+2 empty, amplitude Omega^2/(2 Delta)
    * shuffles       11011 <-> 11101 and 11011 <-> 10111, amplitude Omega^2/(6 Delta)
    * hopping        a single excitation moves to an empty neighbour whose other
                     neighbour is empty, amplitude -Omega^2/(2 Delta)
    * diagonal       V1 sum n_j n_{j+1} - Delta sum n_j

    ``general_shuffle`` admits every shuffle whose moving excitation has both
    outer neighbours excited (also 1+2 <-> 2+1 conversions), which is what a
    brute-force second-order calculation produces.  ``include_shifts`` adds the
    second-order diagonal energy shifts.  Returns ``(H, basis)``.
    """
    basis = effective_2island_basis(lat)
    delta, omega = params.delta, params.omega
    if delta <= 0:
        raise ValueError("the effective model needs Delta > 0")
    v1 = params.v1(lat.a)
    if omega > 0.2 * min(delta, v1):
        warnings.warn("effective model assumes Delta, V1 >> Omega", RuntimeWarning, stacklevel=2)
    order = lat.chain_order
    n = len(order)
    bit = [1 << order[p] for p in range(n)]
    t_pair = omega**2 / (2 * delta)
    t_shuf = omega**2 / (6 * delta)
    t_hop = -omega**2 / (2 * delta)

    def occ(x, p):
        return 1 if x & bit[p % n] else 0

    entries = {}

    def add(i, y, amp):
        j = int(basis.index(y))
        if j >= 0:
            key = (min(i, j), max(i, j))
            if key not in entries:
                entries[key] = amp

    for i, x in enumerate(basis.states.tolist()):
        for p in range(n):
            a, b = p, p + 1
            na, nb = occ(x, a), occ(x, b)
            left, right = occ(x, a - 1), occ(x, b + 1)
            pair = bit[a % n] | bit[b % n]
            if na == nb == 0 and left == right == 0:
                add(i, x | pair, t_pair)
            elif na != nb:
                y = x ^ pair
                if left == right == 0:
                    add(i, y, t_hop)
                elif left == right == 1:
                    # moving excitation flanked by excitations: a shuffle.  The
                    # 11011 <-> 11101 / 10111 patterns also need a-2 or b+2 excited.
                    if general_shuffle or occ(x, a - 2) or occ(x, b + 2):
                        add(i, y, t_shuf)

    rows, cols, vals = [], [], []
    for (i, j), amp in entries.items():
        rows += [i, j]
        cols += [j, i]
        vals += [amp, amp]
    diag = v1 * _nn_bond_counts(basis.states, lat) - delta * popcount(basis.states)
    if include_shifts:
        diag = diag + _second_order_shifts(lat, params, basis)
    H = sp.coo_matrix((vals, (rows, cols)), shape=(basis.dim, basis.dim)).tocsr() + sp.diags(diag)
    return H.tocsr(), basis


def _second_order_shifts(lat: LatticeSpec, params: QuenchParams, basis: BasisIndex) -> np.ndarray:
    """(Omega/2)^2 sum_j 1/(E_x - E_{x ^ j}) over flips leaving the manifold."""
    V = nearest_neighbor_interactions(lat, params.v1(lat.a)).V
    e = classical_energies(basis.states, V, params.delta)
    shift = np.zeros(basis.dim)
    for j in range(lat.n_sites):
        y = basis.states ^ (1 << j)
        outside = basis.index(y) < 0
        ey = classical_energies(y, V, params.delta)
        gap = e - ey
        shift += np.where(outside, 1.0 / np.where(outside, gap, 1.0), 0.0)
    return 0.25 * params.omega**2 * shift


def validate_effective_h(lat: LatticeSpec, params: QuenchParams, t_final: float, dt: float = 0.01,
                         include_shifts: bool = False, general_shuffle: bool = False,
                         reference: str = "full") -> dict:
    """Compare O_L2(t) from the effective model with the exact quench from |0...0>.

    The exact reference runs on the full space with all-pairs interactions
    (``reference="full"``) or with nearest-neighbour interactions only
    (``reference="nn"``), which isolates the truncation error of the effective
    model from the longer-range tails it leaves out.  Returns max / mean
    absolute deviation and the first-oscillation amplitudes (the maximum of
    O_L2 over the window) of both evolutions.
    """
    if reference not in ("full", "nn"):
        raise ValueError("reference must be 'full' or 'nn'")
    from .evolve import propagate_dense, propagate_krylov, time_grid
    from .hamiltonian import build_hamiltonian

    times = time_grid(t_final, dt)
    spec = IslandSpec(2, "chain", "same")
    H_eff, eb = build_effective_2island_h(lat, params, include_shifts, general_shuffle)
    table_eff = island_table(eb.states, lat, spec) / lat.n_sites
    eff = propagate_dense(H_eff, eb.basis_vector(0), times, keep_states=True)
    l2_eff = (np.abs(eff.states) ** 2) @ table_eff

    full = enumerate_basis(lat, "full")
    table_full = island_table(full.states, lat, spec) / lat.n_sites
    V = nearest_neighbor_interactions(lat, params.v1(lat.a)) if reference == "nn" else None
    H = build_hamiltonian(lat, params, full, V)
    obs = lambda psi: {"O_L2": float((np.abs(psi) ** 2) @ table_full)}  # noqa: E731
    if full.dim <= 4096:
        ref = propagate_dense(H, full.basis_vector(0), times, obs, keep_states=False)
    else:
        ref = propagate_krylov(H, full.basis_vector(0), times, 40, 0.05, obs)
    l2_full = ref["O_L2"]
    dev = np.abs(l2_eff - l2_full)
    amp_full = float(np.max(l2_full))
    amp_eff = float(np.max(l2_eff))
    return {
        "times": times,
        "O_L2_full": l2_full,
        "O_L2_eff": l2_eff,
        "max_abs_dev": float(dev.max()),
        "mean_abs_dev": float(dev.mean()),
        "amplitude_full": amp_full,
        "amplitude_eff": amp_eff,
        "amplitude_rel_dev": abs(amp_eff - amp_full) / amp_full if amp_full > 0 else 0.0,
        "dim_eff": eb.dim,
        "reference": reference,
    }
