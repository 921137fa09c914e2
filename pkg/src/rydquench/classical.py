"""Mean-field (single classical spin) limit of the quench.

The zero-momentum magnetization M obeys

    dM/dt = h(M) x M,   h = (Omega, 0, -Delta + K (1 + M_z) / 2),   K = sum_i z_i V_i

where shell i has z_i neighbours at interaction V_i.  The quench starts from
M = -z (all atoms in the ground state).  Its switching boundary is the
Stoner-Wohlfarth astroid |Omega|^(2/3) + |Delta - K|^(2/3) = |K|^(2/3).
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numba
import numpy as np

from .params import QuenchParams

# RK4 is not norm preserving; at K ~ 35 Omega a step of 1e-3 us rotates M by
# ~0.5 rad and |M| drifts by ~1e-4 over 100 us.  1e-5 us keeps the drift near
# 1e-13 on the 1.4 cut at about 0.5 s per 100 us trajectory.
DEFAULT_DT = 1e-5
NORM_ERROR = 1e-6


class StepSizeError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClassicalParams:
    omega: float
    delta: float
    zV: tuple = ()

    def __post_init__(self):
        for z, _ in self.zV:
            if int(z) != z or z <= 0:
                raise ValueError("coordination numbers must be positive integers")

    @property
    def K(self) -> float:
        return float(sum(z * v for z, v in self.zV))

    @classmethod
    def for_geometry(cls, params: QuenchParams, a: float, geometry_kind: str = "square2d",
                     shells: int = 3) -> "ClassicalParams":
        """Shells of a square lattice (a, sqrt2 a, 2a; z = 4) or a chain (a, 2a, 3a; z = 2)."""
        v1 = params.v1(a)
        if geometry_kind == "square2d":
            dists = [1.0, math.sqrt(2.0), 2.0, math.sqrt(5.0)]
            zs = [4, 4, 4, 8]
        else:
            dists = [1.0, 2.0, 3.0, 4.0]
            zs = [2, 2, 2, 2]
        if not 1 <= shells <= len(dists):
            raise ValueError(f"shells must be in 1..{len(dists)}")
        zV = tuple((zs[i], v1 / dists[i] ** 6) for i in range(shells))
        return cls(params.omega, params.delta, zV)

    def with_delta(self, delta: float) -> "ClassicalParams":
        return ClassicalParams(self.omega, delta, self.zV)


@dataclass
class ClassicalTrajectory:
    times: np.ndarray          # recorded sample times
    M: np.ndarray              # (len(times), 3)
    averages: dict             # exact step-level time averages
    max_norm_drift: float
    dt: float


@numba.njit(cache=True)
def _rhs(m, omega, delta, K, out):
    hz = -delta + 0.5 * K * (1.0 + m[2])
    # h x M with h = (omega, 0, hz)
    out[0] = -hz * m[1]
    out[1] = hz * m[0] - omega * m[2]
    out[2] = omega * m[1]


@numba.njit(cache=True)
def _integrate(m0, omega, delta, K, dt, n_steps, record_every):
    n_rec = n_steps // record_every + 1
    rec = np.empty((n_rec, 3))
    m = m0.copy()
    k1 = np.empty(3)
    k2 = np.empty(3)
    k3 = np.empty(3)
    k4 = np.empty(3)
    tmp = np.empty(3)
    # trapezoidal sums of Sx, Sy, Sz, Sx^2, Sy^2, Sz^2, island analog
    acc = np.zeros(7)
    prev = np.empty(7)
    cur = np.empty(7)
    drift = 0.0

    def feats(m, f):
        f[0] = m[0]
        f[1] = m[1]
        f[2] = m[2]
        f[3] = m[0] * m[0]
        f[4] = m[1] * m[1]
        f[5] = m[2] * m[2]
        f[6] = (1.0 - m[2]) ** 4 * m[2] / 32.0

    feats(m, prev)
    rec[0] = m
    r = 1
    for step in range(1, n_steps + 1):
        _rhs(m, omega, delta, K, k1)
        for c in range(3):
            tmp[c] = m[c] + 0.5 * dt * k1[c]
        _rhs(tmp, omega, delta, K, k2)
        for c in range(3):
            tmp[c] = m[c] + 0.5 * dt * k2[c]
        _rhs(tmp, omega, delta, K, k3)
        for c in range(3):
            tmp[c] = m[c] + dt * k3[c]
        _rhs(tmp, omega, delta, K, k4)
        for c in range(3):
            m[c] += dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
        d = abs(math.sqrt(m[0] * m[0] + m[1] * m[1] + m[2] * m[2]) - 1.0)
        if d > drift:
            drift = d
        feats(m, cur)
        for c in range(7):
            acc[c] += 0.5 * (prev[c] + cur[c])
            prev[c] = cur[c]
        if step % record_every == 0:
            rec[r] = m
            r += 1
    if n_steps > 0:
        acc /= n_steps
    else:
        acc[:] = prev
    return rec[:r], acc, drift


_FEATURES = ("Sx", "Sy", "Sz", "Sx2", "Sy2", "Sz2", "island1_classical")


def integrate_magnetization(p: ClassicalParams, t_final: float = 100.0, dt: float = DEFAULT_DT,
                            m0=(0.0, 0.0, -1.0), record_every: int | None = None,
                            check_norm: bool = True) -> ClassicalTrajectory:
    """Fixed-step RK4 without renormalisation; the norm drift is the accuracy check.

    Time averages of S_a, S_a^2 and the island analog are accumulated at every
    step; only every ``record_every``-th point is stored (default: ~10^4 samples).
    Raises :class:`StepSizeError` when |M| drifts by more than 1e-6.
    """
    m0 = np.asarray(m0, dtype=float)
    if abs(np.linalg.norm(m0) - 1.0) > 1e-12:
        raise ValueError("|M(0)| must be 1")
    n_steps = int(round(t_final / dt))
    if n_steps < 0:
        raise ValueError("t_final must be non-negative")
    if record_every is None:
        record_every = max(1, n_steps // 10000)
    rec, acc, drift = _integrate(m0, float(p.omega), float(p.delta), float(p.K), float(dt),
                                 n_steps, int(record_every))
    if check_norm and drift > NORM_ERROR:
        raise StepSizeError(f"|M| drifted by {drift:.2e}; reduce dt")
    times = dt * record_every * np.arange(len(rec))
    return ClassicalTrajectory(times, rec, dict(zip(_FEATURES, acc.tolist())), float(drift), dt)


def classical_observables(traj) -> dict[str, float]:
    """Time-averaged <S_a>, <S_a^2> and the 1-island analog 2^-5 (1 - S_z)^4 S_z.

    Accepts a :class:`ClassicalTrajectory` (exact step-level averages) or a
    raw ``(T, 3)`` array of samples on a uniform grid.
    """
    if isinstance(traj, ClassicalTrajectory):
        return dict(traj.averages)
    M = np.atleast_2d(np.asarray(traj, dtype=float))
    feats = np.column_stack([M[:, 0], M[:, 1], M[:, 2], M[:, 0] ** 2, M[:, 1] ** 2, M[:, 2] ** 2,
                             (1 - M[:, 2]) ** 4 * M[:, 2] / 32.0])
    if len(M) == 1:
        vals = feats[0]
    else:
        vals = 0.5 * (feats[1:] + feats[:-1]).mean(axis=0)
    return dict(zip(_FEATURES, vals.tolist()))


def energy(M, p: ClassicalParams) -> np.ndarray:
    """Conserved mean-field energy per site, Omega M_x - Delta M_z + K (1 + M_z)^2 / 4."""
    M = np.atleast_2d(M)
    return p.omega * M[:, 0] - p.delta * M[:, 2] + 0.25 * p.K * (1 + M[:, 2]) ** 2


def astroid_residual(p: ClassicalParams, delta: float) -> float:
    K = p.K
    return abs(abs(p.omega) ** (2 / 3) + abs(delta - K) ** (2 / 3) - abs(K) ** (2 / 3))


def astroid_boundary(p: ClassicalParams):
    """Detunings on the astroid at drive Omega: ``(lower, upper)``, a single value, or ``None``.

    Two branches Delta = K -/+ (K^(2/3) - Omega^(2/3))^(3/2) exist while |K| > |Omega|;
    at |K| = |Omega| they merge at Delta = K; below that the transition is a crossover.
    """
    K = p.K
    w = abs(p.omega) ** (2 / 3)
    k = abs(K) ** (2 / 3)
    if math.isclose(k, w, rel_tol=1e-12):
        return (K,)
    if k < w:
        return None
    r = (k - w) ** 1.5
    return (K - r, K + r)


def approximate_critical_delta(p: ClassicalParams) -> float:
    """Large-K estimate of the lower branch, (3/2) K^(1/3) Omega^(2/3)."""
    return 1.5 * abs(p.K) ** (1 / 3) * abs(p.omega) ** (2 / 3)


def classical_sweep(params: QuenchParams, a: float, deltas_over_omega, geometry_kind: str = "square2d",
                    shells: int = 3, t_final: float = 100.0, dt: float = DEFAULT_DT) -> list[dict]:
    """Long-time averages on a detuning cut; one dict per point."""
    base = ClassicalParams.for_geometry(params, a, geometry_kind, shells)
    rows = []
    for x in deltas_over_omega:
        cp = base.with_delta(float(x) * params.omega)
        obs = integrate_magnetization(cp, t_final, dt).averages
        rows.append({"delta_over_omega": float(x), **obs})
    return rows


def steepest_change(x, y) -> float:
    """Midpoint of the grid interval where ``y`` changes fastest."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = int(np.argmax(np.abs(np.diff(y) / np.diff(x))))
    return float(0.5 * (x[k] + x[k + 1]))
