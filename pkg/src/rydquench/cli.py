"""Command-line interface.

    rydquench <command> [--config PATH] [--preset NAME] [--out DIR] [--threads K]

Commands: evolve, sweep, thermal, islands, classical, pt, effective-h.
A config is a JSON document with sections ``lattice``, ``params``, ``plan``
and ``output``; a preset is a shipped config that ``--config`` can override
key by key.  Exit codes: 0 ok, 2 bad config, 3 computation failed, 4 I/O.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .classical import ClassicalParams, astroid_boundary, approximate_critical_delta, classical_sweep
from .ensembles import effective_beta, eigendecompose, eigenstate_expectations, thermal_expectation
from .evolve import quench_from_vacuum
from .hamiltonian import build_hamiltonian
from .hilbert import enumerate_basis
from .lattice import LatticeSpec
from .observables import parse_samples, sample_estimates
from .params import C6_DEFAULT, OMEGA_DEFAULT, QuenchParams
from .resonance import PTConfig, build_effective_2island_h, pt_scan, validate_effective_h
from .sweep import (DisorderSpec, GridSpec, LatticeTemplate, SweepPlan, aggregate, run_sweep,
                    write_csv, write_manifest)

EXIT_OK, EXIT_CONFIG, EXIT_COMPUTE, EXIT_IO = 0, 2, 3, 4

COMMANDS = ("evolve", "sweep", "thermal", "islands", "classical", "pt", "effective-h")
PRESETS = ("fig2_cut", "fig3_hamming", "fig4_2d_cut", "supp_disorder", "supp_classical", "numerics",
           "experimental_grid")

_GRID = {
    "type": "object",
    "properties": {"min": {"type": "number"}, "max": {"type": "number"},
                   "step": {"type": "number", "exclusiveMinimum": 0},
                   "values": {"type": "array", "items": {"type": "number"}, "minItems": 1}},
    "oneOf": [{"required": ["min", "max"], "not": {"required": ["values"]}},
              {"required": ["values"], "not": {"anyOf": [{"required": ["min"]}, {"required": ["max"]}]}}],
    "additionalProperties": False,
}
_NUM_OR_LIST = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "lattice": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "geometry": {"enum": ["ring1d", "flattened_rect_1d", "square2d"]},
                "n": {"type": "integer", "minimum": 1},
                "dims": {"type": "array", "items": {"type": "integer", "minimum": 2},
                         "minItems": 2, "maxItems": 2},
            },
            "required": ["geometry"],
        },
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "omega": {"type": "number", "exclusiveMinimum": 0},
                "c6": {"type": "number", "exclusiveMinimum": 0},
                "delta_over_omega": _NUM_OR_LIST,
                "rb_over_a": {"type": "number", "exclusiveMinimum": 0},
                "labels": {"type": "array", "items": {"type": "string"}},
            },
        },
        "plan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "delta_over_omega": _GRID,
                "rb_over_a": _GRID,
                "engine": {"enum": ["quantum-full", "quantum-subspace", "classical", "pt"]},
                "basis": {"enum": ["full", "blockade_nn", "blockade_xyd", "island_shell",
                                   "island_pair_shell"]},
                "subspace_kind": {"enum": ["blockade_nn", "blockade_xyd", "island_shell",
                                           "island_pair_shell"]},
                "subspace_k": {"type": "integer", "minimum": 1},
                "subspace_kinds": {"type": "array", "items": {"enum": [
                    "full", "blockade_nn", "blockade_xyd", "island_shell", "island_pair_shell"]}},
                "include_infinite_temperature": {"type": "boolean"},
                "disorder": {
                    "type": "object", "additionalProperties": False,
                    "properties": {"sigma": {"type": "number", "minimum": 0},
                                   "n_realizations": {"type": "integer", "minimum": 1},
                                   "base_seed": {"type": "integer"}},
                },
                "observables": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "t_final": {"type": "number", "minimum": 0},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "avg_window": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "krylov_dim": {"type": "integer", "minimum": 4},
                "substep": {"type": "number", "exclusiveMinimum": 0},
                "method": {"enum": ["auto", "dense", "krylov", "sector"]},
                "pt_delta_reg": {"type": "number", "exclusiveMinimum": 0},
                "classical_shells": {"type": "integer", "minimum": 1, "maximum": 4},
                "classical_dt": {"type": "number", "exclusiveMinimum": 0},
                "aggregate": {"type": "boolean"},
                "include_shifts": {"type": "boolean"},
                "general_shuffle": {"type": "boolean"},
                "v1_over_omega": {"type": "number", "exclusiveMinimum": 0},
                "reference": {"enum": ["full", "nn"]},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "prefix": {"type": "string"}},
        },
    },
}


class ConfigError(ValueError):
    pass


class ComputeError(RuntimeError):
    pass


# configuration -----------------------------------------------------------------

def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("rydquench").joinpath("presets", f"{name}.json").read_text()
    return json.loads(text)


def load_config(path: str | None, preset: str | None) -> dict:
    cfg: dict = {}
    if preset:
        cfg = load_preset(preset)
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc}") from exc
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        cfg = _deep_merge(cfg, user)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from exc


def _params(cfg: dict) -> QuenchParams:
    p = cfg.get("params", {})
    return QuenchParams(omega=p.get("omega", OMEGA_DEFAULT), delta=0.0, c6=p.get("c6", C6_DEFAULT))


def _template(cfg: dict) -> LatticeTemplate:
    lat = cfg.get("lattice")
    if lat is None:
        raise ConfigError("config needs a lattice section")
    kind = lat["geometry"]
    if kind == "square2d":
        if "dims" not in lat:
            raise ConfigError("square2d lattices need dims")
        return LatticeTemplate(kind, dims=tuple(lat["dims"]))
    if "n" not in lat:
        raise ConfigError(f"{kind} lattices need n")
    return LatticeTemplate(kind, n=int(lat["n"]))


def _grid(plan: dict, key: str, fallback: float | None = None) -> GridSpec:
    if key in plan:
        g = plan[key]
        try:
            if "values" in g:
                return GridSpec.from_values(g["values"])
            return GridSpec(float(g["min"]), float(g["max"]), float(g.get("step", 1.0)))
        except ValueError as exc:
            raise ConfigError(f"plan.{key}: {exc}") from exc
    if fallback is None:
        raise ConfigError(f"plan needs a {key} grid")
    return GridSpec.point(float(fallback))


def _sweep_plan(cfg: dict) -> SweepPlan:
    plan = cfg.get("plan", {})
    params = cfg.get("params", {})
    fields = {k: plan[k] for k in ("engine", "subspace_kind", "subspace_k", "t_final", "dt",
                                   "krylov_dim", "substep", "method", "pt_delta_reg",
                                   "classical_shells", "classical_dt") if k in plan}
    if "observables" in plan:
        fields["observables"] = tuple(plan["observables"])
    if "avg_window" in plan:
        fields["avg_window"] = tuple(plan["avg_window"])
    if "disorder" in plan:
        fields["disorder"] = DisorderSpec(**plan["disorder"])
    try:
        return SweepPlan(_grid(plan, "delta_over_omega", _scalar(params.get("delta_over_omega"))),
                         _grid(plan, "rb_over_a", params.get("rb_over_a")), **fields)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _scalar(v):
    if isinstance(v, list):
        return v[0] if len(v) == 1 else None
    return v


def _out_dir(args, cfg) -> Path:
    d = Path(args.out or cfg.get("output", {}).get("dir", "."))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _prefix(cfg, default: str) -> str:
    return cfg.get("output", {}).get("prefix", default)


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _manifest(path: Path, command: str, cfg: dict, extra: dict | None = None) -> None:
    doc = {"command": command, "code_version": __version__, "config": cfg}
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _basis_for(lat: LatticeSpec, kind: str, k: int = 1):
    if kind == "island_shell":
        return enumerate_basis(lat, kind, k=k)
    return enumerate_basis(lat, kind)


# commands ------------------------------------------------------------------------

def cmd_evolve(args, cfg) -> list[Path]:
    tpl = _template(cfg)
    base = _params(cfg)
    pcfg = cfg.get("params", {})
    plan = cfg.get("plan", {})
    if "rb_over_a" not in pcfg:
        raise ConfigError("evolve needs params.rb_over_a")
    deltas = pcfg.get("delta_over_omega", 0.0)
    deltas = deltas if isinstance(deltas, list) else [deltas]
    labels = pcfg.get("labels") or [f"{x:g}" for x in deltas]
    if len(labels) != len(deltas):
        raise ConfigError("params.labels must match params.delta_over_omega")
    lat = tpl.build(base.spacing_for(pcfg["rb_over_a"]))
    basis = _basis_for(lat, plan.get("basis", "full"), plan.get("subspace_k", 1))
    names = plan.get("observables", ["O_ZZ"])
    out = _out_dir(args, cfg)
    prefix = _prefix(cfg, "trajectory")
    written = []
    for x, label in zip(deltas, labels):
        p = base.with_delta(x * base.omega)
        traj = quench_from_vacuum(lat, p, basis, plan.get("t_final", 10.0), plan.get("dt", 0.01),
                                  names, plan.get("method", "auto"),
                                  krylov_dim=plan.get("krylov_dim", 30), substep=plan.get("substep", 0.01))
        path = out / (f"{prefix}.csv" if len(deltas) == 1 else f"{prefix}_{_safe(label)}.csv")
        traj.to_csv(path, traj.recorded.keys())
        written.append(path)
    _manifest(out / f"{prefix}_manifest.json", "evolve", cfg, {"files": [p.name for p in written]})
    return written


def _safe(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in label)


def cmd_sweep(args, cfg) -> list[Path]:
    tpl = _template(cfg)
    plan = _sweep_plan(cfg)
    grid = run_sweep(tpl, _params(cfg), plan, parallelism=args.threads)
    out = _out_dir(args, cfg)
    prefix = _prefix(cfg, "sweep")
    raw = out / f"{prefix}_raw.csv"
    write_csv(grid, raw)
    files = [raw]
    if cfg.get("plan", {}).get("aggregate", True):
        agg = out / f"{prefix}_aggregated.csv"
        write_csv(aggregate(grid), agg)
        files.append(agg)
    write_manifest(out / f"{prefix}_manifest.json", plan, grid, {"config": cfg})
    if grid.failures and not grid.rows:
        raise ComputeError(f"all {len(grid.failures)} jobs failed: {grid.failures[0]['error']}")
    return files


def cmd_thermal(args, cfg) -> list[Path]:
    tpl = _template(cfg)
    base = _params(cfg)
    plan = cfg.get("plan", {})
    sp = _sweep_plan(cfg)
    kinds = plan.get("subspace_kinds", ["blockade_nn"])
    names = list(sp.observables)
    rows = []
    for rb in sp.rb_over_a.values():
        lat = tpl.build(base.spacing_for(rb))
        for kind in kinds:
            basis = _basis_for(lat, kind, plan.get("subspace_k", 1))
            for x in sp.delta_over_omega.values():
                p = base.with_delta(x * base.omega)
                H = build_hamiltonian(lat, p, basis)
                E, U = eigendecompose(H, basis)
                vals = eigenstate_expectations(U, basis, lat, names)
                e0 = float(H[basis.index_of(0), basis.index_of(0)])
                beta = effective_beta(E, e0)
                flag = "edge" if math.isinf(beta) else ""
                res = [thermal_expectation(E, vals[n], beta) for n in names]
                check = abs(thermal_expectation(E, E, beta) - e0)
                rows.append([float(x), float(rb), kind, beta, check, flag, *res])
                if plan.get("include_infinite_temperature", False):
                    res0 = [thermal_expectation(E, vals[n], 0.0) for n in names]
                    rows.append([float(x), float(rb), kind, 0.0, abs(float(np.mean(E)) - e0),
                                 "beta0", *res0])
    out = _out_dir(args, cfg)
    prefix = _prefix(cfg, "thermal")
    path = out / f"{prefix}.csv"
    _write_rows(path, ["delta_over_omega", "rb_over_a", "subspace_kind", "beta_eff", "energy_check",
                       "flag", *names], rows)
    _manifest(out / f"{prefix}_manifest.json", "thermal", cfg)
    return [path]


def cmd_islands(args, cfg) -> list[Path]:
    if not args.samples:
        raise ConfigError("islands needs --samples FILE")
    tpl = _template(cfg)
    base = _params(cfg)
    lat = tpl.build(base.spacing_for(cfg.get("params", {}).get("rb_over_a", 1.4)))
    try:
        lines = Path(args.samples).read_text().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read samples {args.samples}: {exc}") from exc
    try:
        configs, dropped = parse_samples(lines, lat.n_sites)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    names = cfg.get("plan", {}).get("observables") or _default_island_names(lat)
    est = sample_estimates(configs, lat, names)
    out = _out_dir(args, cfg)
    prefix = _prefix(cfg, "islands")
    path = out / f"{prefix}.csv"
    _write_rows(path, ["observable", "mean", "stderr", "n", "n_dropped"],
                [[n, est[n][0], est[n][1], len(configs), dropped] for n in names])
    return [path]


def _default_island_names(lat) -> list[str]:
    if lat.is_1d:
        return ["O_n", "O_ZZ", "O_nn", "O_L1", "O_L2", "O_L3"]
    return ["O_n", "O_ZZ", "O_nn", "O_L1", "O_L2", "O_L3", "O_H1", "O_xyd1"]


def cmd_classical(args, cfg) -> list[Path]:
    tpl = _template(cfg)
    base = _params(cfg)
    plan = cfg.get("plan", {})
    sp = _sweep_plan(cfg)
    rows = []
    roots = {}
    for rb in sp.rb_over_a.values():
        a = base.spacing_for(rb)
        res = classical_sweep(base, a, sp.delta_over_omega.values(), tpl.kind,
                              plan.get("classical_shells", 3), plan.get("t_final", 100.0),
                              plan.get("classical_dt", 1e-5))
        for r in res:
            rows.append([r["delta_over_omega"], float(rb), r["Sz2"], r["Sx2"], r["Sy2"],
                         r["island1_classical"]])
        cp = ClassicalParams.for_geometry(base, a, tpl.kind, plan.get("classical_shells", 3))
        ab = astroid_boundary(cp)
        roots[repr(float(rb))] = {
            "astroid": None if ab is None else [v / base.omega for v in ab],
            "approximate": approximate_critical_delta(cp) / base.omega,
        }
    out = _out_dir(args, cfg)
    prefix = _prefix(cfg, "classical")
    path = out / f"{prefix}.csv"
    _write_rows(path, ["delta_over_omega", "rb_over_a", "Sz2", "Sx2", "Sy2", "island1_classical"], rows)
    _manifest(out / f"{prefix}_manifest.json", "classical", cfg, {"astroid_delta_over_omega": roots})
    return [path]


def cmd_pt(args, cfg) -> list[Path]:
    tpl = _template(cfg)
    base = _params(cfg)
    plan = cfg.get("plan", {})
    sp = _sweep_plan(cfg)
    names = list(sp.observables) if "observables" in plan else ["O_XX"]
    if len(names) != 1:
        raise ConfigError("pt scans one observable at a time")
    rb = sp.rb_over_a.values()[0]
    lat = tpl.build(base.spacing_for(rb))
    cfg_pt = PTConfig(plan.get("pt_delta_reg", 0.05) * base.omega, 2, names[0])
    rows = pt_scan(lat, base, sp.delta_over_omega.values(), cfg_pt)
    out = _out_dir(args, cfg)
    prefix = _prefix(cfg, "pt")
    path = out / f"{prefix}.csv"
    _write_rows(path, ["delta_over_omega", "response"], rows)
    return [path]


def cmd_effective_h(args, cfg) -> list[Path]:
    tpl = _template(cfg)
    base = _params(cfg)
    plan = cfg.get("plan", {})
    if tpl.kind == "square2d":
        raise ConfigError("the effective 2-island model needs a 1D loop")
    ratio = plan.get("v1_over_omega", 40.0)
    a = base.spacing_for(ratio ** (1 / 6))
    lat = tpl.build(a)
    p = base.with_delta(0.5 * base.v1(a))
    t_final = plan.get("t_final", round(2 * math.pi * 2 * p.delta / p.omega**2, 2))
    shifts = plan.get("include_shifts", False)
    shuffle = plan.get("general_shuffle", False)
    H, basis = build_effective_2island_h(lat, p, shifts, shuffle)
    rep = validate_effective_h(lat, p, t_final, plan.get("dt", 0.01), shifts, shuffle,
                               plan.get("reference", "full"))
    out = _out_dir(args, cfg)
    prefix = _prefix(cfg, "effective_h")
    trace = out / f"{prefix}_O_L2.csv"
    _write_rows(trace, ["t_us", "O_L2_full", "O_L2_eff"],
                zip(rep["times"], rep["O_L2_full"], rep["O_L2_eff"]))
    Hc = H.tocoo()
    entries = out / f"{prefix}_entries.csv"
    _write_rows(entries, ["row_config", "col_config", "value"],
                [[int(basis.states[i]), int(basis.states[j]), float(v)]
                 for i, j, v in sorted(zip(Hc.row, Hc.col, Hc.data))])
    summary = {k: v for k, v in rep.items() if not isinstance(v, np.ndarray)}
    summary.update(v1_over_omega=ratio, t_final=t_final, include_shifts=shifts)
    (out / f"{prefix}_report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return [trace, entries]


_DISPATCH = {"evolve": cmd_evolve, "sweep": cmd_sweep, "thermal": cmd_thermal, "islands": cmd_islands,
             "classical": cmd_classical, "pt": cmd_pt, "effective-h": cmd_effective_h}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rydquench", description="Rydberg quench dynamics toolkit")
    ap.add_argument("--version", action="version", version=f"rydquench {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--preset", help=f"shipped configuration ({', '.join(PRESETS)})")
        sp.add_argument("--out", help="output directory (default: output.dir or .)")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        if name == "islands":
            sp.add_argument("--samples", help="measurement file, one 0/1/x string per line")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.preset)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        files = _DISPATCH[args.command](args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # any numerical failure
        print(f"computation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
