"""Command line front end: ``run``, ``converge`` and ``stability``."""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import stability_lab
from .bench import ScenarioName, scenario
from .diagnostics import diagnose, fitted_order, self_convergence
from .fem import FEModel, Scheme
from .integrators import SchemeConfig, SimulationAborted, SolverConfig, Startup, run_simulation
from .material import wave_speeds
from .mesh import ConfigError
from .output import SeriesWriter, write_table, write_vtk

SCENARIO_KEYS = {"name", "nu", "refine", "vol_model", "E", "rho0", "kappa_scale", "t_end"}
SCHEME_KEYS = {"name", "dt", "cfl", "t_end", "startup"}
SOLVER_KEYS = {"tol", "restart", "maxit", "preconditioner", "consistent_mass"}
OUTPUT_KEYS = {"dir", "stride", "deterministic", "paper_literal_blocks", "levels"}
SECTIONS = {"scenario": SCENARIO_KEYS, "scheme": SCHEME_KEYS, "solver": SOLVER_KEYS, "output": OUTPUT_KEYS}


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _refine(v) -> tuple[int, ...]:
    if isinstance(v, (tuple, list)):
        return tuple(int(x) for x in v)
    return tuple(int(x) for x in str(v).replace("x", ",").split(",") if x.strip())


@dataclass
class RunConfig:
    scenario: str = ScenarioName.UNIT_SQUARE_BF.value
    nu: float = 0.4
    refine: tuple | None = None
    vol_model: str | None = None
    E: float | None = None
    rho0: float | None = None
    kappa_scale: float | None = None
    scheme: str = Scheme.FEBDF2.value
    dt: float | None = None
    cfl: float | None = None
    t_end: float | None = None
    startup: str = Startup.SEMI_IMPLICIT_EULER.value
    solver: SolverConfig = field(default_factory=SolverConfig)
    out: str = "out"
    stride: int = 10
    deterministic: bool = False
    paper_literal_blocks: bool = False
    levels: int = 3

    def build_scenario(self):
        return scenario(
            self.scenario, nu=self.nu, refinement=self.refine, vol_model=self.vol_model,
            E=self.E, rho0=self.rho0, kappa_scale=self.kappa_scale,
        )

    def scheme_config(self, dt=None) -> SchemeConfig:
        sc = self.build_scenario()
        t_end = self.t_end if self.t_end is not None else sc.t_end
        if dt is not None:
            return SchemeConfig(self.scheme, t_end, dt=dt, startup=self.startup)
        cfl = self.cfl
        if self.dt is None and cfl is None:
            if Scheme(self.scheme) is Scheme.MSBDF2:
                raise ConfigError("MSBDF2 has no safe default CFL; give --dt or --cfl")
            cfl = 0.5
        return SchemeConfig(self.scheme, t_end, dt=self.dt, cfl=cfl, startup=self.startup)


def parse_config_file(path) -> dict:
    """Flat ``section.key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in SECTIONS or name not in SECTIONS[section]:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def config_from_mapping(values: dict, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    solver = cfg.solver
    kw = {}
    for key, v in values.items():
        if v is None:
            continue
        section, _, name = key.partition(".")
        if section == "scenario":
            if name == "name":
                kw["scenario"] = str(v)
            elif name == "refine":
                kw["refine"] = _refine(v)
            elif name == "vol_model":
                kw["vol_model"] = str(v)
            elif name == "t_end":
                kw["t_end"] = float(v)
            else:
                kw[name] = float(v)
        elif section == "scheme":
            if name == "name":
                kw["scheme"] = str(v)
            elif name == "startup":
                kw["startup"] = str(v)
            else:
                kw[name] = float(v)
        elif section == "solver":
            if name == "preconditioner":
                solver = replace(solver, preconditioner=str(v))
            elif name == "consistent_mass":
                solver = replace(solver, consistent_mass=_bool(v))
            elif name == "tol":
                solver = replace(solver, tol=float(v))
            else:
                solver = replace(solver, **{name: int(v)})
        elif section == "output":
            if name == "dir":
                kw["out"] = str(v)
            elif name in ("stride", "levels"):
                kw[name] = int(v)
            else:
                kw[name] = _bool(v)
        else:
            raise ConfigError(f"unknown key {key!r}")
    if kw.get("dt") is not None and "cfl" not in kw:
        kw["cfl"] = None
    if kw.get("cfl") is not None and "dt" not in kw:
        kw["dt"] = None
    return replace(cfg, solver=solver, **kw)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="imexsolid", description="Semi-implicit BDF2 elastodynamics")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value file (scenario.*, scheme.*, solver.*, output.*)")
        sp.add_argument("--scenario", choices=[s.value for s in ScenarioName])
        sp.add_argument("--nu", type=float)
        sp.add_argument("--scheme", choices=[Scheme.MSBDF2.value, Scheme.FEBDF2.value])
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--dt", type=float)
        g.add_argument("--cfl", type=float)
        sp.add_argument("--t-end", type=float)
        sp.add_argument("--refine", help="elements per axis, e.g. 16,16 or 4x4x24")
        sp.add_argument("--vol-model", choices=["quadratic", "liu"])
        sp.add_argument("--startup", choices=[s.value for s in Startup])
        sp.add_argument("--preconditioner", choices=["ic0", "jacobi", "lu"])
        sp.add_argument("--out")
        sp.add_argument("--deterministic", action="store_true", default=None)
        sp.add_argument("--paper-literal-blocks", action="store_true", default=None)

    run = sub.add_parser("run", help="integrate one scenario, write series.csv and VTK snapshots")
    common(run)
    run.add_argument("--stride", type=int, help="VTK snapshot stride in steps; 0 disables snapshots")

    conv = sub.add_parser("converge", help="self-convergence table under step halving")
    common(conv)
    conv.add_argument("--levels", type=int)

    stab = sub.add_parser("stability", help="spectral radius sweep and maximum stable step")
    stab.add_argument("--scheme", choices=[Scheme.MSBDF2.value, Scheme.FEBDF2.value], default="FEBDF2")
    stab.add_argument("--lambdas", default="1", help="comma separated deviatoric bounds")
    stab.add_argument("--c-multiples", default=",".join(str(c) for c in stability_lab.C_MULTIPLES))
    stab.add_argument("--dt-grid", default="1e-4,10,41", help="min,max,count (log spaced)")
    stab.add_argument("--out", default="out")
    return p


def config_from_args(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        cfg = config_from_mapping(parse_config_file(args.config), cfg)
    flags = {
        "scenario.name": args.scenario, "scenario.nu": args.nu, "scenario.refine": args.refine,
        "scenario.vol_model": args.vol_model, "scheme.name": args.scheme, "scheme.dt": args.dt,
        "scheme.cfl": args.cfl, "scheme.t_end": args.t_end, "scheme.startup": args.startup,
        "solver.preconditioner": args.preconditioner, "output.dir": args.out,
        "output.deterministic": args.deterministic,
        "output.paper_literal_blocks": args.paper_literal_blocks,
        "output.stride": getattr(args, "stride", None), "output.levels": getattr(args, "levels", None),
    }
    return config_from_mapping(flags, cfg)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SOLVER_THREADS", "1")))
    except ValueError:
        return 1


def cmd_run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    sc = cfg.build_scenario()
    scheme_cfg = cfg.scheme_config()
    stride = cfg.stride
    snap = {"i": 0}

    with SeriesWriter(out / "series.csv") as series:
        def observer(state, model, info):
            series.write(diagnose(model, state, info.schur_iterations))
            if stride > 0 and (info.step % stride == 0):
                write_vtk(out / f"field_{snap['i']:04d}.vtk", model, state)
                snap["i"] += 1

        try:
            res = run_simulation(sc, scheme_cfg, [observer], solver=cfg.solver, stride=1,
                                 paper_literal_blocks=cfg.paper_literal_blocks)
        except (SimulationAborted, ConfigError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    print(f"{sc.name.value}: {res.n_steps} steps of dt = {res.dt:.6g} to t = {res.state.t:.6g}; output in {out}")
    return 0


def _final_state(args):
    sc, scheme_cfg, solver, literal = args
    res = run_simulation(sc, scheme_cfg, solver=solver, paper_literal_blocks=literal)
    return res.state, res.dt


def convergence_table(cfg: RunConfig, n_levels: int | None = None):
    """Run the ladder dt, dt/2, ...; return (rows, orders, error lists)."""
    n_levels = cfg.levels if n_levels is None else n_levels
    if n_levels < 2:
        raise ConfigError("convergence needs at least two levels")
    sc = cfg.build_scenario()
    base = cfg.scheme_config()
    mesh, dofmap = sc.build_mesh()
    dt0, _ = base.resolve(mesh.h_min, wave_speeds(sc.material)[0])
    jobs = [(sc, cfg.scheme_config(dt=dt0 / 2**k), cfg.solver, cfg.paper_literal_blocks) for k in range(n_levels)]
    workers = 1 if cfg.deterministic else min(_threads(), n_levels)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_final_state, jobs))
    else:
        results = [_final_state(j) for j in jobs]
    model = FEModel(mesh, dofmap, sc.material)
    errors = {k: [] for k in ("U", "V", "p")}
    rows = []
    for k in range(n_levels - 1):
        (a, dta), (b, _) = results[k], results[k + 1]
        eu = self_convergence(model, a.U, b.U, "velocity")
        ev = self_convergence(model, a.V, b.V, "velocity")
        ep = self_convergence(model, a.p, b.p, "pressure")
        errors["U"].append(eu)
        errors["V"].append(ev)
        errors["p"].append(ep)
        rows.append([k, dta, *eu, *ev, *ep])
    orders = {}
    for f, errs in errors.items():
        for j, nm in enumerate(("L1", "L2", "Linf")):
            e = [x[j] for x in errs]
            orders[f"{f}_{nm}"] = fitted_order(e) if len(e) >= 2 and all(v > 0 for v in e) else math.nan
    return rows, orders, errors


CONVERGE_COLUMNS = (
    "level", "dt", "U_L1", "U_L2", "U_Linf", "V_L1", "V_L2", "V_Linf", "p_L1", "p_L2", "p_Linf",
)


def cmd_converge(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        rows, orders, _ = convergence_table(cfg)
    except (SimulationAborted, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    write_table(out / "convergence.csv", CONVERGE_COLUMNS, rows)
    write_table(out / "orders.csv", ("quantity", "fitted_order"), [(k, float(v)) for k, v in orders.items()])
    for k, v in orders.items():
        print(f"{k:8s} {v:7.3f}")
    return 0


def _floats(s) -> list[float]:
    return [float(x) for x in str(s).split(",") if x.strip()]


def cmd_stability(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lams = _floats(args.lambdas)
    mults = _floats(args.c_multiples)
    lo, hi, n = _floats(args.dt_grid)
    dts = np.logspace(math.log10(lo), math.log10(hi), int(n))
    rows = []
    for lam in lams:
        rows += stability_lab.sweep(args.scheme, [lam], [m * lam for m in mults], dts)
    write_table(out / "stability_rho.csv", ("lambda", "c", "dt", "rho"), rows)
    table = stability_lab.dt_max_table(args.scheme, lams, mults)
    write_table(out / "stability_dtmax.csv", ("lambda", "c", "dt_max"), table)
    for lam, c, d in table:
        print(f"lambda={lam:g} c={c:g} dt_max={d:.6g}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "stability":
        return cmd_stability(args)
    try:
        cfg = config_from_args(args)
        cfg.build_scenario()
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "run":
        return cmd_run(cfg)
    return cmd_converge(cfg)


if __name__ == "__main__":
    sys.exit(main())
