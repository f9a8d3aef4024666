"""Energy, volume and error norms of finite element fields."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fem import FEModel, TimeState
from .material import deviatoric_pk1, kinematics


@dataclass
class DiagnosticRecord:
    step: int
    t: float
    energy_kinetic: float
    energy_deviatoric: float
    energy_pressure: float
    volume: float
    vol_err_L1: float
    vol_err_L2: float
    vol_err_Linf: float
    schur_iters: int = 0

    @property
    def energy_total(self) -> float:
        return self.energy_kinetic + self.energy_deviatoric + self.energy_pressure


def energy_parts(model: FEModel, state: TimeState) -> tuple[float, float, float]:
    """Kinetic, deviatoric and pressure energy (p (J - 1) / 2 form)."""
    V = model.interpolate_velocity_space(state.V)
    kin_e = 0.5 * model.params.rho0 * np.einsum("eqi,eqi,eq->", V, V, model.JxW)
    kin = kinematics(model.displacement_gradient(state.U))
    W, _ = deviatoric_pk1(kin, model.params.mu)
    dev_e = np.einsum("eq,eq->", W, model.JxW)
    p = model.interpolate_pressure_space(state.p)
    press_e = 0.5 * np.einsum("eq,eq,eq->", p, kin.J - 1.0, model.JxW)
    return float(kin_e), float(dev_e), float(press_e)


def total_energy(model: FEModel, state: TimeState) -> float:
    return sum(energy_parts(model, state))


def _jacobian(model: FEModel, U) -> np.ndarray:
    return kinematics(model.displacement_gradient(U)).J


def total_volume(model: FEModel, U) -> float:
    return float(np.sum(_jacobian(model, U) * model.JxW))


def field_norms(values: np.ndarray, JxW: np.ndarray) -> tuple[float, float, float]:
    """(L1, L2, Linf) of quadrature-point values; vector values use the Euclidean norm."""
    a = np.abs(values) if values.ndim == JxW.ndim else np.linalg.norm(values, axis=-1)
    return (
        float(np.sum(a * JxW)),
        math.sqrt(float(np.sum(a * a * JxW))),
        float(a.max()) if a.size else 0.0,
    )


def volumetric_error(model: FEModel, U) -> tuple[float, float, float]:
    return field_norms(_jacobian(model, U) - 1.0, model.JxW)


def diagnose(model: FEModel, state: TimeState, schur_iters: int = 0) -> DiagnosticRecord:
    ek, ed, ep = energy_parts(model, state)
    J = _jacobian(model, state.U)
    l1, l2, linf = field_norms(J - 1.0, model.JxW)
    return DiagnosticRecord(
        state.step, state.t, ek, ed, ep, float(np.sum(J * model.JxW)), l1, l2, linf, schur_iters
    )


# -- self convergence --------------------------------------------------------


def self_convergence(model: FEModel, y_coarse, y_fine, space: str = "velocity") -> tuple[float, float, float]:
    """Norms of the difference of two solutions on the same mesh.

    ``space`` is ``"velocity"`` (vector Q2 fields) or ``"pressure"`` (Q1).
    """
    y_coarse = np.asarray(y_coarse)
    y_fine = np.asarray(y_fine)
    if y_coarse.shape != y_fine.shape:
        raise ValueError(f"field shapes differ: {y_coarse.shape} vs {y_fine.shape}")
    diff = y_coarse - y_fine
    if space == "velocity":
        if diff.shape[0] != model.nv:
            raise ValueError("field does not match the velocity space of this mesh")
        vals = model.interpolate_velocity_space(diff)
    elif space == "pressure":
        if diff.shape[0] != model.np_:
            raise ValueError("field does not match the pressure space of this mesh")
        vals = model.interpolate_pressure_space(diff)
    else:
        raise ValueError(f"unknown space {space!r}")
    return field_norms(vals, model.JxW)


def observed_orders(errors) -> list[float]:
    """log2 ratios of successive errors under step halving."""
    e = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return [float(x) for x in np.log2(e[:-1] / e[1:])]


def fitted_order(errors, ratio: float = 2.0) -> float:
    """Least-squares slope of log(error) against log(step) for a halving ladder."""
    e = np.asarray(errors, dtype=float)
    if len(e) < 2:
        raise ValueError("need at least two errors")
    if np.any(e <= 0):
        return math.nan
    steps = ratio ** -np.arange(len(e), dtype=float)
    return float(np.polyfit(np.log(steps), np.log(e), 1)[0])


@dataclass
class DiagnosticsObserver:
    """Collects a :class:`DiagnosticRecord` at every call."""

    records: list = field(default_factory=list)

    def __call__(self, state, model, info):
        self.records.append(diagnose(model, state, info.schur_iterations))
