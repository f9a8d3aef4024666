"""Benchmark scenarios: loaded unit squares, Cook's membrane, twisting column."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .fem import Loads
from .material import MaterialParams, VolModel
from .mesh import ConfigError, Geometry, Tag, generate_mesh, taylor_hood_dofmap

BODY_FORCE_RATE = 25.0  # g cm / s^3
SQUARE_TRACTION = -2.5  # dyn / cm^2, downward
COOK_TRACTION = 62.5  # dyn / cm^2, upward
TWIST_RATE = 1500.0  # 1 / s


class ScenarioName(str, enum.Enum):
    UNIT_SQUARE_BF = "UnitSquareBF"
    UNIT_SQUARE_IV = "UnitSquareIV"
    UNIT_SQUARE_TR = "UnitSquareTr"
    COOK = "Cook"
    COLUMN = "Column"


def square_body_force(X, t):
    B = np.zeros_like(X)
    B[..., 1] = -BODY_FORCE_RATE * t
    return B


def square_initial_velocity(X):
    V = np.zeros_like(X)
    V[..., 1] = -np.sin(0.5 * np.pi * X[..., 1])
    return V


def twist_initial_velocity(X):
    s = TWIST_RATE * np.sin(np.pi * X[..., 2] / 12.0)
    return np.stack([-s * X[..., 1], s * X[..., 0], np.zeros_like(s)], axis=-1)


@dataclass(frozen=True)
class Scenario:
    name: ScenarioName
    geometry: Geometry
    refinement: tuple[int, ...]
    E: float
    nu: float
    rho0: float
    vol_model: VolModel = VolModel.QUADRATIC
    kappa_scale: float = 2.0
    body_force: Callable | None = None
    tractions: dict = field(default_factory=dict)
    initial_velocity: Callable | None = None
    t_end: float = 0.1

    @property
    def material(self) -> MaterialParams:
        return MaterialParams(self.E, self.nu, self.rho0, self.vol_model, self.kappa_scale)

    @property
    def loads(self) -> Loads:
        return Loads(body_force=self.body_force, tractions=dict(self.tractions))

    def with_overrides(self, **kw) -> "Scenario":
        if "refinement" in kw and kw["refinement"] is not None:
            kw["refinement"] = tuple(int(n) for n in kw["refinement"])
        if "vol_model" in kw and kw["vol_model"] is not None:
            kw["vol_model"] = VolModel(kw["vol_model"])
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def build_mesh(self):
        mesh = generate_mesh(self.geometry, self.refinement, loaded_top=Tag.TRACTION in self.tractions)
        for tag in self.tractions:
            if not mesh.facets_with(tag):
                raise ConfigError(f"scenario {self.name.value} loads missing tag {tag}")
        return mesh, taylor_hood_dofmap(mesh)

    def initial_fields(self, mesh, dofmap):
        U0 = np.zeros(dofmap.n_velocity_dofs)
        if self.initial_velocity is None:
            V0 = np.zeros(dofmap.n_velocity_dofs)
        else:
            V0 = dofmap.flatten(self.initial_velocity(mesh.nodes))
        V0[dofmap.constrained_dofs] = dofmap.constrained_values
        return U0, V0


def scenario(name, nu: float = 0.4, **overrides) -> Scenario:
    """Declarative configuration of one of the five benchmark problems."""
    try:
        name = ScenarioName(name)
    except ValueError:
        raise ConfigError(f"unknown scenario {name!r}") from None
    if name is ScenarioName.COOK:
        base = Scenario(
            name, Geometry.COOKS_MEMBRANE, (8, 8), E=2500.0, nu=nu, rho0=0.1,
            tractions={Tag.TRACTION: np.array([0.0, COOK_TRACTION])}, t_end=0.5,
        )
    elif name is ScenarioName.COLUMN:
        base = Scenario(
            name, Geometry.COLUMN, (4, 4, 24), E=1.2e7, nu=nu, rho0=1.1,
            initial_velocity=twist_initial_velocity, t_end=0.02,
        )
    else:
        kw = {}
        if name is ScenarioName.UNIT_SQUARE_BF:
            kw["body_force"] = square_body_force
        elif name is ScenarioName.UNIT_SQUARE_IV:
            kw["initial_velocity"] = square_initial_velocity
        else:
            kw["tractions"] = {Tag.TRACTION: np.array([0.0, SQUARE_TRACTION])}
        base = Scenario(name, Geometry.UNIT_SQUARE, (16, 16), E=100.0, nu=nu, rho0=1.0, t_end=0.1, **kw)
    return base.with_overrides(**overrides)
