"""Time stepping: start-up, the MSBDF2/FEBDF2 loops and a scalar order probe."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse.linalg as spla

from .fem import FEModel, InvertedElementError, Loads, Scheme, TimeState
from .material import scaled_volumetric_derivatives, wave_speeds
from .mesh import ConfigError
from .solvers import SolverError, make_preconditioner, schur_update


class Startup(str, enum.Enum):
    SEMI_IMPLICIT_EULER = "SemiImplicitEuler"
    EXTRAPOLATED_HISTORY = "ExtrapolatedHistory"


@dataclass(frozen=True)
class SchemeConfig:
    scheme: Scheme = Scheme.FEBDF2
    t_end: float = 0.1
    dt: float | None = None
    cfl: float | None = None
    startup: Startup = Startup.SEMI_IMPLICIT_EULER

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "startup", Startup(self.startup))
        if self.scheme is Scheme.EULER:
            raise ConfigError("the start-up scheme cannot be used as the main scheme")
        if (self.dt is None) == (self.cfl is None):
            raise ConfigError("set exactly one of dt or cfl")
        if not self.t_end > 0:
            raise ConfigError("t_end must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ConfigError("dt must be positive")
        if self.cfl is not None and not self.cfl > 0:
            raise ConfigError("cfl must be positive")

    def raw_dt(self, h_min: float, c_mu: float) -> float:
        return self.dt if self.dt is not None else self.cfl * h_min / c_mu

    def resolve(self, h_min: float, c_mu: float) -> tuple[float, int]:
        """Step size shrunk so that an integer number of steps hits t_end."""
        n = max(1, math.ceil(self.t_end / self.raw_dt(h_min, c_mu) - 1e-9))
        return self.t_end / n, n


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    restart: int = 50
    maxit: int = 500
    preconditioner: object = "ic0"
    consistent_mass: bool = False


class SimulationAborted(RuntimeError):
    def __init__(self, step: int, t: float, reason: str, result=None):
        self.step = step
        self.t = t
        self.reason = reason
        self.result = result
        super().__init__(f"simulation aborted at step {step}, t = {t:.6g}: {reason}")


@dataclass
class StepInfo:
    step: int
    t: float
    schur_iterations: int
    schur_residual: float


def initial_pressure(model: FEModel, U: np.ndarray) -> np.ndarray:
    """L2 projection of W_J(J(U)) onto the pressure space; zero if incompressible."""
    prm = model.params
    if prm.incompressible:
        return np.zeros(model.np_)
    kin = model.checked_kinematics(U)
    _, wj, _ = scaled_volumetric_derivatives(kin.J, prm.vol_model)
    rhs = model._scatter_pressure(np.einsum("eq,qb,eq->eb", wj, model.N1, model.JxW))
    return prm.kappa * spla.spsolve(model.mass_q1.tocsc(), rhs)


def advance(model: FEModel, state: TimeState, scheme: Scheme, loads: Loads | None,
            solver: SolverConfig = SolverConfig()):
    """One step of ``scheme``; returns the new state and the Schur report."""
    blocks = model.assemble(state, scheme, loads)
    P = model.schur_preconditioner(state, scheme)
    precond = make_preconditioner(P, solver.preconditioner)
    res = schur_update(blocks, precond, tol=solver.tol, restart=solver.restart,
                       maxit=solver.maxit, p0=state.p)
    if not res.pressure_report.converged:
        raise SolverError(res.pressure_report)
    U_new = blocks.U_hist + blocks.gamma * state.dt * res.V
    new = TimeState(U_new, state.U, res.V, state.V, res.p, state.t + state.dt, state.dt, state.step + 1)
    return new, res.pressure_report


def msbdf2_step(model, state, loads=None, solver: SolverConfig = SolverConfig()):
    return advance(model, state, Scheme.MSBDF2, loads, solver)


def febdf2_step(model, state, loads=None, solver: SolverConfig = SolverConfig()):
    return advance(model, state, Scheme.FEBDF2, loads, solver)


def initialize_history(model: FEModel, U0, V0, dt: float, startup=Startup.SEMI_IMPLICIT_EULER,
                       loads: Loads | None = None, solver: SolverConfig = SolverConfig()):
    """Return ``(state, report)``; ``report`` is None when no solve was needed.

    The semi-implicit Euler start-up takes one step, so the returned state
    sits at ``t = dt``.  The extrapolated start-up stays at ``t = 0``.
    """
    U0 = np.asarray(U0, dtype=float)
    V0 = np.asarray(V0, dtype=float)
    p0 = initial_pressure(model, U0)
    startup = Startup(startup)
    if startup is Startup.EXTRAPOLATED_HISTORY:
        return TimeState(U0.copy(), U0 - dt * V0, V0.copy(), V0.copy(), p0, 0.0, dt, 0), None
    state0 = TimeState(U0.copy(), U0.copy(), V0.copy(), V0.copy(), p0, 0.0, dt, 0)
    return advance(model, state0, Scheme.EULER, loads, solver)


@dataclass
class SimulationResult:
    state: TimeState
    model: FEModel
    dt: float
    n_steps: int
    infos: list = field(default_factory=list)
    aborted: SimulationAborted | None = None


Observer = Callable[[TimeState, FEModel, StepInfo], None]


def run_simulation(
    scenario,
    config: SchemeConfig,
    observers: Sequence[Observer] = (),
    solver: SolverConfig = SolverConfig(),
    stride: int = 1,
    paper_literal_blocks: bool = False,
    raise_on_abort: bool = True,
) -> SimulationResult:
    """Integrate ``scenario`` to ``config.t_end``.

    ``n_steps`` counts every solve, the start-up step included.  Observers
    are called at t = 0, every ``stride`` steps and at the final step.
    On failure a :class:`SimulationAborted` carrying the partial result is
    raised, or stored on the result when ``raise_on_abort`` is false.
    """
    mesh, dofmap = scenario.build_mesh()
    params = scenario.material
    model = FEModel(mesh, dofmap, params, paper_literal_blocks=paper_literal_blocks,
                    consistent_mass=solver.consistent_mass)
    c_mu, _ = wave_speeds(params)
    dt, n_steps = config.resolve(mesh.h_min, c_mu)
    loads = scenario.loads
    U0, V0 = scenario.initial_fields(mesh, dofmap)
    state = TimeState(U0, U0.copy(), V0, V0.copy(), initial_pressure(model, U0), 0.0, dt, 0)
    result = SimulationResult(state, model, dt, n_steps)
    stride = max(int(stride), 1)

    def notify(st, info):
        result.infos.append(info)
        for obs in observers:
            obs(st, model, info)

    notify(state, StepInfo(0, 0.0, 0, 0.0))
    try:
        for k in range(1, n_steps + 1):
            if k == 1 and config.startup is Startup.SEMI_IMPLICIT_EULER:
                scheme = Scheme.EULER
            else:
                scheme = config.scheme
                if k == 1:
                    state.U_prev = state.U - dt * state.V
                    state.V_prev = state.V.copy()
            new, rep = advance(model, state, scheme, loads, solver)
            if not (np.all(np.isfinite(new.U)) and np.all(np.isfinite(new.V)) and np.all(np.isfinite(new.p))):
                raise FloatingPointError("non-finite values in the solution")
            # observers must never see an inverted configuration
            model.checked_kinematics(new.U, "U^{n+1}")
            # guard against roundoff drift in the final time
            if k == n_steps:
                new.t = config.t_end
            state = new
            result.state = state
            if k % stride == 0 or k == n_steps:
                notify(state, StepInfo(k, state.t, rep.iterations, rep.final_residual))
    except (InvertedElementError, SolverError, FloatingPointError) as exc:
        abort = SimulationAborted(state.step + 1, state.t + dt, str(exc), result)
        result.aborted = abort
        if raise_on_abort:
            raise abort from exc
    return result


# -- scalar model problem ----------------------------------------------------


def _rk4(F, y0: float, t_end: float, n: int) -> float:
    y, t = float(y0), 0.0
    k = t_end / n
    for _ in range(n):
        k1 = F(y, t)
        k2 = F(y + 0.5 * k * k1, t + 0.5 * k)
        k3 = F(y + 0.5 * k * k2, t + 0.5 * k)
        k4 = F(y + k * k3, t + k)
        y += k / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += k
    return y


def scalar_imex_solve(scheme, f, h, g, y0: float, dt: float, t_end: float,
                      extrapolate_coupling: bool = True, dh=None) -> float:
    """Integrate y' = f(y,t) + h(y,t) g(y,t) with the IMEX stencil of ``scheme``.

    ``h`` plays the role of the pressure: it is linearised about y^n and
    taken at the new level.  ``f`` and ``g`` (stress and cofactor analogues)
    are evaluated at the extrapolated value and t^{n+1}.  With
    ``extrapolate_coupling=False`` the factor ``g`` is frozen at (y^n, t^n).
    """
    scheme = Scheme(scheme)
    if dh is None:
        def dh(y, t, _e=1e-6):
            return (h(y + _e, t) - h(y - _e, t)) / (2 * _e)

    def F(y, t):
        return f(y, t) + h(y, t) * g(y, t)

    n = round(t_end / dt)
    if not math.isclose(n * dt, t_end, rel_tol=1e-9):
        raise ValueError("t_end must be an integer multiple of dt")

    def step(y, y_prev, t, gamma, y_hist, y_bar):
        t1 = t + dt
        g_val = g(y_bar, t1) if extrapolate_coupling else g(y, t)
        hp = dh(y, t1)
        rhs = y_hist + gamma * dt * (f(y_bar, t1) + (h(y, t1) - hp * y) * g_val)
        return rhs / (1.0 - gamma * dt * hp * g_val)

    y_prev, y = y0, step(y0, y0, 0.0, 1.0, y0, y0)
    for k in range(1, n):
        t = k * dt
        if scheme is Scheme.MSBDF2:
            y_bar = 2 * y - y_prev
        else:
            y_bar = y + dt * F(y, t)
        y_prev, y = y, step(y, y_prev, t, 2.0 / 3.0, (4 * y - y_prev) / 3.0, y_bar)
    return y


@dataclass
class OrderProbe:
    dts: list
    errors: list
    orders: list

    @property
    def fitted_order(self) -> float:
        return float(np.polyfit(np.log(self.dts), np.log(self.errors), 1)[0])


def scalar_imex_order_probe(scheme, f, h, g, y0: float, dt_list, t_end: float = 1.0,
                            extrapolate_coupling: bool = True, exact: float | None = None) -> OrderProbe:
    """Errors at ``t_end`` for each step in ``dt_list`` and pairwise log2 ratios."""
    if exact is None:
        exact = _rk4(lambda y, t: f(y, t) + h(y, t) * g(y, t), y0, t_end, 20000)
    errs = [abs(scalar_imex_solve(scheme, f, h, g, y0, dt, t_end, extrapolate_coupling) - exact)
            for dt in dt_list]
    orders = [math.log(errs[i] / errs[i + 1]) / math.log(dt_list[i] / dt_list[i + 1])
              for i in range(len(errs) - 1)]
    return OrderProbe(list(dt_list), errs, orders)
