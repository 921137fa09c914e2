"""Parameter sweeps over (Delta/Omega, R_b/a, disorder seed).

Every grid point and disorder realization is an independent job.  Jobs reduce
their trajectory to time-averaged observables before returning, so only a
handful of floats per job cross process boundaries.  Results are always
ordered by (R_b/a, Delta/Omega, seed) regardless of completion order.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
import json
import math
from pathlib import Path
import traceback

import numpy as np
from scipy.signal import find_peaks, peak_widths

from .classical import ClassicalParams, integrate_magnetization
from .evolve import quench_from_vacuum
from .hamiltonian import FullSpaceOperator, build_hamiltonian, classical_energies
from .hilbert import enumerate_basis, lattice_sector, popcount
from .lattice import apply_disorder, build_flattened_rect, build_ring, build_square, interaction_matrix
from .observables import ObservableSet, time_average
from .params import QuenchParams
from .resonance import PTConfig, pt_second_order

ENGINES = ("quantum-full", "quantum-subspace", "classical", "pt")


class BudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSpec:
    min: float
    max: float
    step: float = 1.0
    explicit: tuple = ()           # irregular grids list their points here

    def __post_init__(self):
        if self.explicit:
            if list(self.explicit) != sorted(set(self.explicit)):
                raise ValueError("explicit grid values must be strictly increasing")
            return
        if self.max < self.min:
            raise ValueError("grid max below min")
        if self.max > self.min and self.step <= 0:
            raise ValueError("grid step must be positive")

    def values(self) -> np.ndarray:
        if self.explicit:
            return np.array(self.explicit, dtype=float)
        if self.max == self.min:
            return np.array([float(self.min)])
        n = int(math.floor((self.max - self.min) / self.step + 1e-9)) + 1
        return np.round(self.min + self.step * np.arange(n), 10)

    @classmethod
    def point(cls, x: float) -> "GridSpec":
        return cls(x, x, 1.0)

    @classmethod
    def from_values(cls, xs) -> "GridSpec":
        xs = tuple(float(x) for x in xs)
        if not xs:
            raise ValueError("empty grid")
        return cls(xs[0], xs[-1], 1.0, xs)


@dataclass(frozen=True)
class DisorderSpec:
    sigma: float = 0.0
    n_realizations: int = 1
    base_seed: int = 0

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def seeds(self) -> list[int]:
        return [self.base_seed + r for r in range(self.n_realizations)]


@dataclass(frozen=True)
class LatticeTemplate:
    """Geometry without a spacing: ``kind`` plus ``n`` (1D) or ``dims`` (2D)."""

    kind: str
    n: int | None = None
    dims: tuple | None = None

    def build(self, a: float):
        if self.kind == "ring1d":
            return build_ring(self.n, a)
        if self.kind == "flattened_rect_1d":
            return build_flattened_rect(self.n, a)
        if self.kind == "square2d":
            return build_square(self.dims[0], self.dims[1], a)
        raise ValueError(f"unknown geometry {self.kind!r}")

    @property
    def n_sites(self) -> int:
        return self.n if self.dims is None else self.dims[0] * self.dims[1]


@dataclass(frozen=True)
class SweepPlan:
    delta_over_omega: GridSpec
    rb_over_a: GridSpec
    engine: str = "quantum-full"
    subspace_kind: str = "blockade_nn"
    subspace_k: int = 1
    disorder: DisorderSpec = field(default_factory=DisorderSpec)
    observables: tuple = ("O_ZZ",)
    t_final: float = 10.0
    dt: float = 0.01
    avg_window: tuple | None = None
    krylov_dim: int = 30
    substep: float = 0.01
    method: str = "auto"                # auto | dense | krylov | sector
    pt_delta_reg: float = 0.05          # in units of Omega
    classical_shells: int = 3
    classical_dt: float = 1e-5

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}")
        if not len(self.observables):
            raise ValueError("no observables requested")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SweepPlan":
        d = dict(d)
        for key in ("delta_over_omega", "rb_over_a"):
            g = dict(d[key])
            g["explicit"] = tuple(g.get("explicit", ()))
            d[key] = GridSpec(**g)
        if "disorder" in d:
            d["disorder"] = DisorderSpec(**d["disorder"])
        d["observables"] = tuple(d.get("observables", ("O_ZZ",)))
        if d.get("avg_window") is not None:
            d["avg_window"] = tuple(d["avg_window"])
        return cls(**d)

    def jobs(self) -> list[tuple[float, float, int]]:
        return [(float(x), float(rb), s)
                for rb in self.rb_over_a.values()
                for x in self.delta_over_omega.values()
                for s in self.disorder.seeds()]


@dataclass
class PhaseDiagramGrid:
    rows: list
    observables: tuple
    failures: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    aggregated: bool = False

    def column(self, name: str, rb_over_a: float | None = None) -> np.ndarray:
        rows = self.rows if rb_over_a is None else [r for r in self.rows
                                                     if math.isclose(r["rb_over_a"], rb_over_a)]
        return np.array([r[name] for r in rows])

    def cut(self, name: str, rb_over_a: float | None = None):
        """(Delta/Omega values, observable values) along one R_b/a."""
        rbs = sorted({r["rb_over_a"] for r in self.rows})
        rb = rbs[0] if rb_over_a is None else rb_over_a
        rows = [r for r in self.rows if math.isclose(r["rb_over_a"], rb)]
        rows.sort(key=lambda r: r["delta_over_omega"])
        return (np.array([r["delta_over_omega"] for r in rows]), np.array([r[name] for r in rows]))


# job execution -------------------------------------------------------------

_CACHE: dict = {}


def _context(template: LatticeTemplate, params: QuenchParams, plan: SweepPlan, rb: float, seed: int):
    """Lattice, basis, observable tables and Delta-free energies, reused across detunings."""
    key = (template, params.omega, params.c6, plan.engine, plan.subspace_kind, plan.subspace_k,
           plan.disorder.sigma, tuple(plan.observables), rb, seed)
    ctx = _CACHE.get(key)
    if ctx is not None:
        return ctx
    if len(_CACHE) > 8:
        _CACHE.clear()
    a = params.spacing_for(rb)
    lat = template.build(a)
    if plan.disorder.sigma > 0:
        lat = apply_disorder(lat, plan.disorder.sigma, seed)
    ctx = {"lat": lat}
    if plan.engine.startswith("quantum"):
        if plan.engine == "quantum-full":
            basis = enumerate_basis(lat, "full")
        elif plan.subspace_kind == "island_shell":
            basis = enumerate_basis(lat, "island_shell", k=plan.subspace_k)
        else:
            basis = enumerate_basis(lat, plan.subspace_kind)
        V = interaction_matrix(lat, params).V
        sector = None
        if plan.method in ("auto", "sector") and basis.dim > 1500:
            sector = lattice_sector(basis, lat)
        ctx.update(basis=basis, V=V, sector=sector,
                   e_int=classical_energies(basis.states, V, 0.0),
                   weights=popcount(basis.states).astype(float),
                   obs=ObservableSet(basis, lat, [o for o in plan.observables if o != "energy"]))
    _CACHE[key] = ctx
    return ctx


def _quantum_job(template, params, plan, x, rb, seed) -> dict:
    ctx = _context(template, params, plan, rb, seed)
    p = params.with_delta(x * params.omega)
    basis, lat = ctx["basis"], ctx["lat"]
    method = plan.method
    if method == "auto":
        method = "sector" if ctx["sector"] is not None and basis.dim > 1500 else (
            "dense" if basis.dim <= 1500 else "krylov")
    names = list(plan.observables)
    if method == "sector":
        traj = quench_from_vacuum(lat, p, basis, plan.t_final, plan.dt, names, "sector",
                                  krylov_dim=plan.krylov_dim, substep=plan.substep,
                                  interactions=ctx["V"], sector=ctx["sector"])
    else:
        if basis.kind == "full" and method == "krylov":
            diag = ctx["e_int"] - p.delta * ctx["weights"]
            H = FullSpaceOperator(diag, p.omega, lat.n_sites)
        else:
            H = build_hamiltonian(lat, p, basis, interactions=ctx["V"])
        obs = ctx["obs"]
        if "energy" in plan.observables:
            obs = ObservableSet(basis, lat, obs.names, {"energy": H})
        traj = quench_from_vacuum(lat, p, basis, plan.t_final, plan.dt, obs, method,
                                  krylov_dim=plan.krylov_dim, substep=plan.substep, H=H)
    t0, t1 = plan.avg_window if plan.avg_window else (0.0, plan.t_final)
    out = {}
    for name in _columns(plan.observables, template.n_sites):
        series = traj[name]
        out[name] = time_average(traj.times, series, t0, t1) if len(traj.times) > 1 else float(series[0])
    return out


def _columns(names, n_sites: int) -> tuple:
    """Observable names with ``hamming`` expanded to p_0..p_N."""
    out = []
    for name in names:
        if name == "hamming":
            out.extend(f"p_{k}" for k in range(n_sites + 1))
        else:
            out.append(name)
    return tuple(out)


def _classical_job(template, params, plan, x, rb, seed) -> dict:
    a = params.spacing_for(rb)
    kind = template.kind
    cp = ClassicalParams.for_geometry(params.with_delta(x * params.omega), a, kind, plan.classical_shells)
    avg = integrate_magnetization(cp, plan.t_final, plan.classical_dt).averages
    return {name: avg[name] for name in plan.observables}


def _pt_job(template, params, plan, x, rb, seed) -> dict:
    lat = _context(template, params, plan, rb, seed)["lat"]
    p = params.with_delta(x * params.omega)
    cfg = PTConfig(plan.pt_delta_reg * params.omega)
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return {name: pt_second_order(lat, p, name, cfg) for name in plan.observables}


_ENGINE_FN = {"quantum-full": _quantum_job, "quantum-subspace": _quantum_job,
              "classical": _classical_job, "pt": _pt_job}


def _run_job(args):
    template, params, plan, (x, rb, seed) = args
    try:
        vals = _ENGINE_FN[plan.engine](template, params, plan, x, rb, seed)
        return {"delta_over_omega": x, "rb_over_a": rb, "seed": seed, "engine": plan.engine,
                "N": template.n_sites, **vals}, None
    except Exception as exc:  # recorded, sweep continues
        return None, {"delta_over_omega": x, "rb_over_a": rb, "seed": seed,
                      "error": f"{type(exc).__name__}: {exc}",
                      "traceback": traceback.format_exc(limit=3)}


def job_memory_bytes(template: LatticeTemplate, plan: SweepPlan) -> int:
    """Rough peak memory of one job (state vectors, Krylov basis, tables)."""
    if plan.engine in ("classical", "pt"):
        return 1 << 20
    dim = 1 << template.n_sites
    if plan.method == "dense" or (plan.method == "auto" and dim <= 1500):
        return 16 * dim * dim * 2
    return 16 * dim * (plan.krylov_dim + 8) + 8 * dim * (len(plan.observables) + 4)


def run_sweep(template: LatticeTemplate, params: QuenchParams, plan: SweepPlan,
              parallelism: int = 1, memory_budget: int | None = 4 << 30) -> PhaseDiagramGrid:
    """Run every job of ``plan``; failures are recorded and do not stop the sweep."""
    if memory_budget is not None and parallelism * job_memory_bytes(template, plan) > memory_budget:
        raise BudgetError("sweep would exceed the memory budget; lower parallelism")
    jobs = plan.jobs()
    args = [(template, params, plan, j) for j in jobs]
    if parallelism <= 1:
        results = [_run_job(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as ex:
            results = list(ex.map(_run_job, args, chunksize=1))
    rows = [r for r, _ in results if r is not None]
    failures = [f for _, f in results if f is not None]
    meta = {"engine": plan.engine, "N": template.n_sites, "t_final": plan.t_final,
            "geometry": template.kind, "omega": params.omega, "c6": params.c6}
    return PhaseDiagramGrid(rows, _columns(plan.observables, template.n_sites), failures, meta)


def aggregate(grid: PhaseDiagramGrid) -> PhaseDiagramGrid:
    """Mean and standard error over realizations for each (Delta/Omega, R_b/a)."""
    groups: dict = {}
    for r in grid.rows:
        groups.setdefault((r["rb_over_a"], r["delta_over_omega"]), []).append(r)
    out = []
    for (rb, x), rows in sorted(groups.items()):
        rows = sorted(rows, key=lambda r: r["seed"])
        n = len(rows)
        row = {"delta_over_omega": x, "rb_over_a": rb, "engine": rows[0]["engine"], "N": rows[0]["N"]}
        for name in grid.observables:
            vals = [float(r[name]) for r in rows]
            # shifted mean: exact for identical values, fsum keeps it order-free
            mean = vals[0] + math.fsum(v - vals[0] for v in vals) / n
            if n > 1:
                var = math.fsum((v - mean) ** 2 for v in vals) / (n - 1)
                err = math.sqrt(var / n)
            else:
                err = 0.0
            row[f"{name}_mean"] = mean
            row[f"{name}_stderr"] = err
            row[name] = mean
        row["n"] = n
        out.append(row)
    return PhaseDiagramGrid(out, grid.observables, list(grid.failures), dict(grid.metadata), True)


# peaks -----------------------------------------------------------------------

@dataclass(frozen=True)
class Peak:
    location: float
    height: float
    width: float


def peak_finder(x, y, noise_floor: float | None = None) -> list[Peak]:
    """Local maxima with prominence above ``noise_floor``, refined by a parabola.

    The default floor is 2% of the series range.  Widths are full widths at
    half prominence, in the units of ``x``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        return []
    step = float(np.mean(np.diff(x)))
    span = float(np.ptp(y))
    if span == 0:
        return []
    floor = 0.02 * span if noise_floor is None else noise_floor
    idx, _ = find_peaks(y, prominence=max(floor, 1e-15))
    if len(idx) == 0:
        return []
    widths = peak_widths(y, idx, rel_height=0.5)[0] * step
    peaks = []
    for i, w in zip(idx, widths):
        y0, y1, y2 = y[i - 1], y[i], y[i + 1]
        denom = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
        shift = float(np.clip(shift, -0.5, 0.5))
        height = y1 - 0.25 * (y0 - y2) * shift
        peaks.append(Peak(float(x[i] + shift * step), float(height), float(w)))
    return peaks


def dominant_peak(x, y, lo: float | None = None, hi: float | None = None) -> Peak | None:
    """Tallest peak whose location lies in ``[lo, hi]``."""
    cands = [p for p in peak_finder(x, y)
             if (lo is None or p.location >= lo) and (hi is None or p.location <= hi)]
    return max(cands, key=lambda p: p.height) if cands else None


def integrated_response(x, y, lo: float, hi: float) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = (x >= lo - 1e-9) & (x <= hi + 1e-9)
    return float(np.trapezoid(y[m], x[m]) if hasattr(np, "trapezoid") else np.trapz(y[m], x[m]))


# output ----------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(grid: PhaseDiagramGrid, path) -> None:
    obs = list(grid.observables)
    if grid.aggregated:
        header = ["delta_over_omega", "rb_over_a", "engine", "N"]
        for o in obs:
            header += [f"{o}_mean", f"{o}_stderr"]
        header.append("n")
    else:
        header = ["delta_over_omega", "rb_over_a", "seed", "engine", "N", *obs]
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in grid.rows:
            w.writerow([_fmt(r[h]) for h in header])


def write_manifest(path, plan: SweepPlan, grid: PhaseDiagramGrid, extra: dict | None = None) -> None:
    from . import __version__

    doc = {
        "code_version": __version__,
        "plan": plan.to_dict(),
        "seeds": plan.disorder.seeds(),
        "n_rows": len(grid.rows),
        "failures": [{k: v for k, v in f.items() if k != "traceback"} for f in grid.failures],
        "metadata": grid.metadata,
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
