import math

import numpy as np
import pytest

from rydquench.evolve import quench_from_vacuum
from rydquench.hilbert import enumerate_basis
from rydquench.observables import time_average
from rydquench.params import QuenchParams
from rydquench.sweep import (BudgetError, DisorderSpec, GridSpec, LatticeTemplate, PhaseDiagramGrid,
                             SweepPlan, aggregate, dominant_peak, integrated_response, peak_finder,
                             run_sweep, write_csv)

P = QuenchParams()
RING6 = LatticeTemplate("ring1d", 6)


def small_plan(**kw):
    base = dict(delta_over_omega=GridSpec(0.0, 4.0, 2.0), rb_over_a=GridSpec(1.3, 1.4, 0.1),
                observables=("O_ZZ", "O_nn"), t_final=2.0, dt=0.05)
    base.update(kw)
    return SweepPlan(**base)


def test_grid_values():
    assert len(GridSpec(-4.0, 6.0, 0.1).values()) == 101
    assert len(GridSpec(1.2, 1.6, 0.00625).values()) == 65
    assert list(GridSpec.point(1.4).values()) == [1.4]
    assert list(GridSpec.from_values([0.0, 0.2, 1.0]).values()) == [0.0, 0.2, 1.0]
    with pytest.raises(ValueError):
        GridSpec.from_values([1.0, 0.5])
    with pytest.raises(ValueError):
        GridSpec(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        DisorderSpec(0.1, 0)


def test_plan_round_trip():
    plan = small_plan(disorder=DisorderSpec(0.1, 3, 7),
                      delta_over_omega=GridSpec.from_values([0.0, 1.5]))
    assert SweepPlan.from_dict(plan.to_dict()) == plan
    assert plan.disorder.seeds() == [7, 8, 9]


def synthetic(values_by_point):
    rows = []
    for (x, rb), vals in values_by_point.items():
        for s, v in enumerate(vals):
            rows.append({"delta_over_omega": x, "rb_over_a": rb, "seed": s, "engine": "e", "N": 4, "O": v})
    return PhaseDiagramGrid(rows, ("O",))


def test_aggregate_standard_error():
    vals = [0.1, 0.4, 0.35, 0.2, 0.5]
    agg = aggregate(synthetic({(1.0, 1.4): vals}))
    r = agg.rows[0]
    assert r["O_mean"] == pytest.approx(np.mean(vals))
    assert r["O_stderr"] == pytest.approx(np.std(vals, ddof=1) / math.sqrt(5), rel=1e-12)
    assert r["n"] == 5


def test_aggregate_trivial_cases():
    agg = aggregate(synthetic({(1.0, 1.4): [0.3], (2.0, 1.4): [0.7, 0.7, 0.7]}))
    one, dup = agg.rows
    assert one["O_mean"] == 0.3 and one["O_stderr"] == 0.0
    assert dup["O_mean"] == pytest.approx(0.7) and dup["O_stderr"] == 0.0


def test_single_point_equals_direct_run():
    plan = small_plan(delta_over_omega=GridSpec.point(1.0), rb_over_a=GridSpec.point(1.4),
                      observables=("O_ZZ",), method="dense")
    grid = run_sweep(RING6, P, plan)
    lat = RING6.build(P.spacing_for(1.4))
    traj = quench_from_vacuum(lat, P.with_delta(P.omega), enumerate_basis(lat), 2.0, 0.05,
                              ["O_ZZ"], "dense")
    assert grid.rows[0]["O_ZZ"] == pytest.approx(time_average(traj.times, traj["O_ZZ"]), abs=1e-12)


def test_csv_byte_determinism(tmp_path):
    plan = small_plan(disorder=DisorderSpec(0.1, 2, 3))
    for k in range(2):
        write_csv(aggregate(run_sweep(RING6, P, plan)), tmp_path / f"a{k}.csv")
        write_csv(run_sweep(RING6, P, plan), tmp_path / f"r{k}.csv")
    assert (tmp_path / "a0.csv").read_bytes() == (tmp_path / "a1.csv").read_bytes()
    assert (tmp_path / "r0.csv").read_bytes() == (tmp_path / "r1.csv").read_bytes()
    head = (tmp_path / "r0.csv").read_text().splitlines()[0]
    assert head == "delta_over_omega,rb_over_a,seed,engine,N,O_ZZ,O_nn"
    head = (tmp_path / "a0.csv").read_text().splitlines()[0]
    assert head == "delta_over_omega,rb_over_a,engine,N,O_ZZ_mean,O_ZZ_stderr,O_nn_mean,O_nn_stderr,n"


def test_parallel_matches_serial():
    plan = small_plan(disorder=DisorderSpec(0.1, 2, 0))
    a = run_sweep(RING6, P, plan, parallelism=1)
    b = run_sweep(RING6, P, plan, parallelism=2)
    assert a.rows == b.rows


def test_job_independence():
    full = run_sweep(RING6, P, small_plan())
    part = run_sweep(RING6, P, small_plan(delta_over_omega=GridSpec.from_values([0.0, 4.0])))
    keep = [r for r in full.rows if r["delta_over_omega"] != 2.0]
    assert part.rows == keep


def test_failures_are_recorded():
    plan = small_plan(engine="quantum-subspace", subspace_kind="blockade_xyd")
    grid = run_sweep(RING6, P, plan)
    assert grid.rows == [] and len(grid.failures) == len(plan.jobs())
    assert "BasisError" in grid.failures[0]["error"]


def test_memory_budget_refusal():
    plan = small_plan(method="krylov")
    with pytest.raises(BudgetError):
        run_sweep(LatticeTemplate("ring1d", 24), P, plan, parallelism=4, memory_budget=1 << 30)


def test_hamming_columns_and_pt_classical_engines():
    plan = small_plan(delta_over_omega=GridSpec.point(0.0), rb_over_a=GridSpec.point(1.4),
                      observables=("hamming",))
    row = run_sweep(RING6, P, plan).rows[0]
    assert sum(row[f"p_{k}"] for k in range(7)) == pytest.approx(1.0)
    pt = run_sweep(RING6, P, small_plan(engine="pt", observables=("O_XX",)))
    assert len(pt.rows) == 6 and not pt.failures
    cl = run_sweep(LatticeTemplate("square2d", dims=(3, 3)), P,
                   small_plan(engine="classical", observables=("Sz2",), classical_dt=1e-4))
    assert len(cl.rows) == 6 and all(0 <= r["Sz2"] <= 1 for r in cl.rows)


def test_peak_finder():
    x = np.arange(0, 10, 0.1)
    assert peak_finder(x, x**2) == []
    assert peak_finder(x, np.zeros_like(x)) == []
    y = np.exp(-((x - 3.33) ** 2) / 0.1) + 0.5 * np.exp(-((x - 7.0) ** 2) / 0.1)
    peaks = peak_finder(x, y)
    assert len(peaks) == 2
    assert peaks[0].location == pytest.approx(3.33, abs=0.02)
    fwhm = 2 * math.sqrt(0.1 * math.log(2))
    assert peaks[0].width == pytest.approx(fwhm, rel=0.1)
    assert dominant_peak(x, y, lo=5.0).location == pytest.approx(7.0, abs=0.02)
    assert integrated_response(x, y, 0.0, 9.9) == pytest.approx(1.5 * math.sqrt(0.1 * math.pi), rel=1e-3)
